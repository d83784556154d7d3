#include "manas/architecture.hpp"

#include <algorithm>
#include <sstream>

#include "manas/error.hpp"

namespace manas {

std::vector<Violation> validate(const LogicArchitecture& arch) {
  std::vector<Violation> out;
  if (arch.n < 1) {
    out.push_back({-1, "n must be >= 1"});
    return out;
  }
  if (static_cast<int>(arch.steps.size()) != arch.n - 1) {
    out.push_back({-1, "expected " + std::to_string(arch.n - 1) + " steps, got " +
                           std::to_string(arch.steps.size())});
    return out;
  }
  const int total_slots = 2 * arch.n - 1;
  std::vector<int> consumed(total_slots, 0);
  for (int i = 0; i < static_cast<int>(arch.steps.size()); ++i) {
    const ArchStep& s = arch.steps[i];
    const int produced_before = arch.n + i;  // slots [0, produced_before) exist
    if (s.left == s.right)
      out.push_back({i, "operand reuse: left == right (slot " +
                            std::to_string(s.left) + ")"});
    for (int operand : {s.left, s.right}) {
      if (operand < 0 || operand >= produced_before) {
        out.push_back({i, "operand slot " + std::to_string(operand) +
                              " not yet produced"});
        continue;
      }
      if (consumed[operand]++)
        out.push_back({i, "slot " + std::to_string(operand) +
                              " consumed more than once"});
    }
  }
  for (int slot = 0; slot < total_slots - 1; ++slot)
    if (consumed[slot] == 0)
      out.push_back({-1, "slot " + std::to_string(slot) + " never consumed"});
  if (consumed[total_slots - 1] != 0)
    out.push_back({-1, "root slot consumed"});
  return out;
}

bool is_valid(const LogicArchitecture& arch) { return validate(arch).empty(); }

BigUint BigUint::from(std::uint64_t v) {
  BigUint b;
  b.limbs.push_back(static_cast<std::uint32_t>(v));
  if (v >> 32) b.limbs.push_back(static_cast<std::uint32_t>(v >> 32));
  return b;
}

void BigUint::mul(std::uint64_t m) {
  // m fits in 32 bits for every factor we use; split to stay safe anyway.
  const std::uint64_t lo = m & 0xffffffffULL, hi = m >> 32;
  std::vector<std::uint32_t> result(limbs.size() + 2, 0);
  auto add_at = [&](std::size_t pos, std::uint64_t v) {
    while (v) {
      if (pos >= result.size()) result.push_back(0);
      std::uint64_t sum = result[pos] + (v & 0xffffffffULL);
      result[pos] = static_cast<std::uint32_t>(sum);
      v = (v >> 32) + (sum >> 32);
      ++pos;
    }
  };
  for (std::size_t i = 0; i < limbs.size(); ++i) {
    add_at(i, static_cast<std::uint64_t>(limbs[i]) * lo);
    if (hi) add_at(i + 1, static_cast<std::uint64_t>(limbs[i]) * hi);
  }
  while (result.size() > 1 && result.back() == 0) result.pop_back();
  limbs = std::move(result);
}

std::uint64_t BigUint::to_u64() const {
  std::uint64_t v = limbs[0];
  if (limbs.size() > 1) v |= static_cast<std::uint64_t>(limbs[1]) << 32;
  return v;
}

std::string BigUint::str() const {
  std::vector<std::uint32_t> work = limbs;
  std::string digits;
  while (work.size() > 1 || work[0] != 0) {
    std::uint64_t rem = 0;
    for (std::size_t i = work.size(); i-- > 0;) {
      std::uint64_t cur = (rem << 32) | work[i];
      work[i] = static_cast<std::uint32_t>(cur / 10);
      rem = cur % 10;
    }
    digits.push_back(static_cast<char>('0' + rem));
    while (work.size() > 1 && work.back() == 0) work.pop_back();
  }
  if (digits.empty()) digits = "0";
  std::reverse(digits.begin(), digits.end());
  return digits;
}

BigUint count_architectures(int n) {
  if (n < 1) throw Error::domain("count_architectures: n must be >= 1");
  BigUint count = BigUint::from(1);
  // Product over layers of (op choices) * (unordered pairs) * (negations):
  // 2 * C(i,2) * 4 = 4 * i * (i-1) with i slots available.
  for (int i = 2; i <= n; ++i)
    count.mul(4ULL * static_cast<std::uint64_t>(i) *
              static_cast<std::uint64_t>(i - 1));
  return count;
}

namespace {
void enumerate_rec(int n, std::vector<int>& available,
                   std::vector<ArchStep>& steps,
                   std::vector<LogicArchitecture>& out) {
  if (available.size() == 1) {
    out.push_back({n, steps});
    return;
  }
  const int new_slot = n + static_cast<int>(steps.size());
  for (std::size_t i = 0; i + 1 < available.size(); ++i) {
    for (std::size_t j = i + 1; j < available.size(); ++j) {
      const int left = available[i], right = available[j];
      std::vector<int> next;
      next.reserve(available.size() - 1);
      for (std::size_t k = 0; k < available.size(); ++k)
        if (k != i && k != j) next.push_back(available[k]);
      next.push_back(new_slot);
      for (LogicOp op : {LogicOp::kAnd, LogicOp::kOr}) {
        for (int negs = 0; negs < 4; ++negs) {
          steps.push_back({op, left, right, (negs & 1) != 0, (negs & 2) != 0});
          enumerate_rec(n, next, steps, out);
          steps.pop_back();
        }
      }
    }
  }
}
}  // namespace

std::vector<LogicArchitecture> enumerate_architectures(int n) {
  if (n < 1) throw Error::domain("enumerate_architectures: n must be >= 1");
  if (n > 5)
    throw Error::domain("enumerate_architectures: refusing n=" +
                        std::to_string(n) + " (would produce " +
                        count_architectures(n).str() + " architectures)");
  std::vector<LogicArchitecture> out;
  std::vector<int> available(n);
  for (int i = 0; i < n; ++i) available[i] = i;
  std::vector<ArchStep> steps;
  enumerate_rec(n, available, steps, out);
  return out;
}

LogicArchitecture canonicalize(const LogicArchitecture& arch) {
  LogicArchitecture c = arch;
  for (ArchStep& s : c.steps) {
    if (s.left > s.right) {
      std::swap(s.left, s.right);
      std::swap(s.neg_left, s.neg_right);
    }
  }
  return c;
}

std::string arch_key(const LogicArchitecture& arch) {
  if (arch.steps.empty()) return "id";
  std::ostringstream os;
  for (std::size_t i = 0; i < arch.steps.size(); ++i) {
    const ArchStep& s = arch.steps[i];
    if (i) os << ';';
    os << (s.op == LogicOp::kAnd ? "AND" : "OR") << ',' << s.left << ','
       << s.right << ',' << (s.neg_left ? 1 : 0) << ',' << (s.neg_right ? 1 : 0);
  }
  return os.str();
}

LogicArchitecture parse_arch_key(const std::string& key) {
  if (key == "id") return {1, {}};
  LogicArchitecture arch;
  std::stringstream ss(key);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::stringstream ps(part);
    std::string op, l, r, nl, nr;
    if (!std::getline(ps, op, ',') || !std::getline(ps, l, ',') ||
        !std::getline(ps, r, ',') || !std::getline(ps, nl, ',') ||
        !std::getline(ps, nr, ','))
      throw Error::domain("parse_arch_key: malformed step '" + part + "'");
    ArchStep s;
    if (op == "AND")
      s.op = LogicOp::kAnd;
    else if (op == "OR")
      s.op = LogicOp::kOr;
    else
      throw Error::domain("parse_arch_key: unknown op '" + op + "'");
    s.left = std::stoi(l);
    s.right = std::stoi(r);
    s.neg_left = nl == "1";
    s.neg_right = nr == "1";
    arch.steps.push_back(s);
  }
  arch.n = static_cast<int>(arch.steps.size()) + 1;
  return arch;
}

namespace {
void require_valid(const LogicArchitecture& arch, const char* who) {
  auto violations = validate(arch);
  if (!violations.empty())
    throw Error::domain(std::string(who) + ": invalid architecture: " +
                        violations.front().rule);
}
}  // namespace

Tensor assemble_premise(const LogicSpace& space, const LogicArchitecture& arch,
                        const std::vector<std::span<const double>>& inputs) {
  require_valid(arch, "assemble_premise");
  if (static_cast<int>(inputs.size()) != arch.n)
    throw Error::dimension("assemble_premise: expected " +
                           std::to_string(arch.n) + " inputs");
  const LogicArchitecture canon = canonicalize(arch);
  std::vector<Tensor> produced(canon.steps.size());
  auto slot_value = [&](int slot) -> std::span<const double> {
    return slot < canon.n ? inputs[slot] : produced[slot - canon.n].span();
  };
  for (std::size_t i = 0; i < canon.steps.size(); ++i) {
    const ArchStep& s = canon.steps[i];
    Tensor left_neg, right_neg;
    std::span<const double> l = slot_value(s.left);
    std::span<const double> r = slot_value(s.right);
    if (s.neg_left) {
      left_neg = apply_not(space, l);
      l = left_neg.span();
    }
    if (s.neg_right) {
      right_neg = apply_not(space, r);
      r = right_neg.span();
    }
    produced[i] = s.op == LogicOp::kAnd ? apply_and(space, l, r)
                                        : apply_or(space, l, r);
  }
  if (canon.steps.empty()) {
    Tensor t = Tensor::vector(inputs[0].size());
    std::copy(inputs[0].begin(), inputs[0].end(), t.data.begin());
    return t;
  }
  return std::move(produced.back());
}

int assemble_premise(Tape& tape, const LogicSpace& space,
                     const LogicArchitecture& arch,
                     const std::vector<int>& input_nodes) {
  require_valid(arch, "assemble_premise");
  if (static_cast<int>(input_nodes.size()) != arch.n)
    throw Error::dimension("assemble_premise(tape): input count mismatch");
  const LogicArchitecture canon = canonicalize(arch);
  std::vector<int> produced(canon.steps.size(), -1);
  auto slot_node = [&](int slot) {
    return slot < canon.n ? input_nodes[slot] : produced[slot - canon.n];
  };
  for (std::size_t i = 0; i < canon.steps.size(); ++i) {
    const ArchStep& s = canon.steps[i];
    int l = slot_node(s.left);
    int r = slot_node(s.right);
    if (s.neg_left) l = apply_not(tape, space, l);
    if (s.neg_right) r = apply_not(tape, space, r);
    produced[i] = s.op == LogicOp::kAnd ? apply_and(tape, space, l, r)
                                        : apply_or(tape, space, l, r);
  }
  return canon.steps.empty() ? input_nodes[0] : produced.back();
}

double horn_score(const LogicSpace& space, std::span<const double> premise,
                  int target_item) {
  Tensor negated = apply_not(space, premise);
  Tensor out = apply_or(space, negated.span(), space.embedding(target_item));
  return truth_score(space, out.span());
}

int horn_score(Tape& tape, const LogicSpace& space, int premise,
               int target_item) {
  space.embedding(target_item);  // vocabulary check
  int target = tape.param_row("emb", space.params.at("emb"), target_item);
  int out = apply_or(tape, space, apply_not(tape, space, premise), target);
  return truth_score(tape, space, out);
}

bool evaluate_boolean(const LogicArchitecture& arch,
                      const std::vector<char>& truths) {
  require_valid(arch, "evaluate_boolean");
  if (static_cast<int>(truths.size()) != arch.n)
    throw Error::dimension("evaluate_boolean: truth count mismatch");
  std::vector<char> values(truths);
  values.resize(2 * arch.n - 1);
  for (std::size_t i = 0; i < arch.steps.size(); ++i) {
    const ArchStep& s = arch.steps[i];
    bool l = values[s.left] != 0;
    bool r = values[s.right] != 0;
    if (s.neg_left) l = !l;
    if (s.neg_right) r = !r;
    values[arch.n + i] = s.op == LogicOp::kAnd ? (l && r) : (l || r);
  }
  return values[arch.root_slot()] != 0;
}

std::vector<std::string> default_variable_names(int n) {
  std::vector<std::string> names(n);
  for (int i = 0; i < n; ++i) names[i] = "e" + std::to_string(i + 1);
  return names;
}

namespace {
std::string render_slot(const LogicArchitecture& arch,
                        const std::vector<std::string>& names, int slot,
                        bool outer) {
  if (slot < arch.n) return names[slot];
  const ArchStep& s = arch.steps[slot - arch.n];
  std::string l = render_slot(arch, names, s.left, false);
  std::string r = render_slot(arch, names, s.right, false);
  if (s.neg_left) l = "¬" + l;
  if (s.neg_right) r = "¬" + r;
  std::string body = l + (s.op == LogicOp::kAnd ? " ∧ " : " ∨ ") + r;
  return outer ? body : "(" + body + ")";
}
}  // namespace

std::string to_expression_string(const LogicArchitecture& arch,
                                 const std::vector<std::string>& names) {
  require_valid(arch, "to_expression_string");
  if (static_cast<int>(names.size()) != arch.n)
    throw Error::dimension("to_expression_string: name count mismatch");
  const LogicArchitecture canon = canonicalize(arch);
  return render_slot(canon, names, canon.root_slot(), true);
}

namespace {
// Recursive-descent parser for the printed form. Negation binds to the
// following atom; binary expressions are parenthesized except the
// outermost.
struct ExprParser {
  const std::string& text;
  const std::vector<std::string>& names;
  std::size_t pos = 0;
  std::vector<ArchStep> steps;
  int n;

  ExprParser(const std::string& t, const std::vector<std::string>& nm)
      : text(t), names(nm), n(static_cast<int>(nm.size())) {}

  void skip_ws() {
    while (pos < text.size() && text[pos] == ' ') ++pos;
  }

  bool eat(const std::string& tok) {
    skip_ws();
    if (text.compare(pos, tok.size(), tok) == 0) {
      pos += tok.size();
      return true;
    }
    return false;
  }

  // Returns (slot, negated).
  std::pair<int, bool> parse_atom() {
    skip_ws();
    bool neg = eat("¬") || eat("!");
    if (eat("(")) {
      int slot = parse_expr();
      if (!eat(")")) throw Error::domain("parse_expression: expected ')'");
      return {slot, neg};
    }
    // Longest-match variable name.
    int best = -1;
    std::size_t best_len = 0;
    for (int i = 0; i < n; ++i) {
      const std::string& nm = names[i];
      if (nm.size() > best_len && text.compare(pos, nm.size(), nm) == 0) {
        best = i;
        best_len = nm.size();
      }
    }
    if (best < 0)
      throw Error::domain("parse_expression: unknown variable at offset " +
                          std::to_string(pos));
    pos += best_len;
    return {best, neg};
  }

  int parse_expr() {
    auto [lslot, lneg] = parse_atom();
    skip_ws();
    LogicOp op;
    if (eat("∧") || eat("&"))
      op = LogicOp::kAnd;
    else if (eat("∨") || eat("|"))
      op = LogicOp::kOr;
    else {
      if (lneg)
        throw Error::domain("parse_expression: bare negation without operator");
      return lslot;
    }
    auto [rslot, rneg] = parse_atom();
    steps.push_back({op, lslot, rslot, lneg, rneg});
    return n + static_cast<int>(steps.size()) - 1;
  }

  LogicArchitecture run() {
    int root = parse_expr();
    skip_ws();
    if (pos != text.size())
      throw Error::domain("parse_expression: trailing input at offset " +
                          std::to_string(pos));
    LogicArchitecture arch{n, steps};
    if (root != arch.root_slot() || !is_valid(arch))
      throw Error::domain("parse_expression: not a valid architecture");
    return canonicalize(arch);
  }
};
}  // namespace

LogicArchitecture parse_expression(const std::string& text,
                                   const std::vector<std::string>& names) {
  ExprParser p(text, names);
  return p.run();
}

std::string to_dot(const LogicArchitecture& arch,
                   const std::vector<std::string>& names) {
  require_valid(arch, "to_dot");
  const LogicArchitecture canon = canonicalize(arch);
  std::ostringstream os;
  os << "digraph arch {\n  rankdir=BT;\n";
  for (int i = 0; i < canon.n; ++i)
    os << "  v" << i << " [label=\"" << names[i] << "\", shape=box];\n";
  for (std::size_t i = 0; i < canon.steps.size(); ++i) {
    const ArchStep& s = canon.steps[i];
    os << "  v" << canon.n + i << " [label=\""
       << (s.op == LogicOp::kAnd ? "AND" : "OR") << "\"];\n";
    os << "  v" << s.left << " -> v" << canon.n + i;
    if (s.neg_left) os << " [label=\"NOT\", color=red]";
    os << ";\n";
    os << "  v" << s.right << " -> v" << canon.n + i;
    if (s.neg_right) os << " [label=\"NOT\", color=red]";
    os << ";\n";
  }
  os << "}\n";
  return os.str();
}

LogicArchitecture fixed_conjunction(int n) {
  if (n < 1) throw Error::domain("fixed_conjunction: n must be >= 1");
  LogicArchitecture arch;
  arch.n = n;
  for (int i = 0; i + 1 < n; ++i) {
    ArchStep s;
    s.op = LogicOp::kAnd;
    if (i == 0) {
      s.left = 0;
      s.right = 1;
    } else {
      s.left = i + 1;        // next raw input
      s.right = n + i - 1;   // previous step's output
    }
    arch.steps.push_back(s);
  }
  return canonicalize(arch);
}

}  // namespace manas
