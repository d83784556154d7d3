#include "manas/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "manas/error.hpp"

namespace manas {

namespace {

int lookup(const std::vector<std::string>& names, const std::string& external,
           const char* what) {
  auto it = std::find(names.begin(), names.end(), external);
  if (it == names.end())
    throw Error::vocabulary(std::string("unknown ") + what + ": " + external);
  return static_cast<int>(it - names.begin());
}

void finalize_table(InteractionTable& table,
                    std::vector<Interaction>& flat_rows,
                    std::size_t skipped) {
  if (flat_rows.empty()) throw Error::io("no valid interactions");
  // Stable per-user chronological order: timestamp, then file order.
  std::vector<std::size_t> order(flat_rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (flat_rows[a].user != flat_rows[b].user)
      return flat_rows[a].user < flat_rows[b].user;
    return flat_rows[a].timestamp < flat_rows[b].timestamp;
  });
  table.by_user.assign(table.vocab.users.size(), {});
  std::size_t duplicates = 0;
  for (std::size_t idx : order) {
    const Interaction& r = flat_rows[idx];
    auto& seq = table.by_user[r.user];
    bool dup = false;
    for (auto it = seq.rbegin(); it != seq.rend() && it->timestamp == r.timestamp;
         ++it) {
      if (it->item == r.item) {
        dup = true;
        break;
      }
    }
    if (dup) {
      ++duplicates;
      continue;
    }
    seq.push_back(r);
  }
  std::size_t total = 0;
  for (const auto& seq : table.by_user) total += seq.size();
  table.stats.num_users = table.vocab.users.size();
  table.stats.num_items = table.vocab.items.size();
  table.stats.num_interactions = total;
  table.stats.density =
      static_cast<double>(total) /
      (static_cast<double>(table.stats.num_users) *
       static_cast<double>(table.stats.num_items));
  table.stats.skipped_rows = skipped;
  table.stats.dropped_duplicates = duplicates;
}

}  // namespace

int Vocab::user_id(const std::string& external) const {
  return lookup(users, external, "user");
}

int Vocab::item_id(const std::string& external) const {
  return lookup(items, external, "item");
}

std::vector<int> InteractionTable::interacted_items(int user) const {
  std::vector<int> items;
  for (const Interaction& r : by_user.at(user)) items.push_back(r.item);
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());
  return items;
}

InteractionTable table_from_rows(
    const std::vector<std::tuple<std::string, std::string, double, std::int64_t>>&
        rows) {
  InteractionTable table;
  std::unordered_map<std::string, int> user_index, item_index;
  std::vector<Interaction> flat;
  for (const auto& [user, item, rating, ts] : rows) {
    auto [uit, unew] = user_index.emplace(
        user, static_cast<int>(table.vocab.users.size()));
    if (unew) table.vocab.users.push_back(user);
    auto [iit, inew] = item_index.emplace(
        item, static_cast<int>(table.vocab.items.size()));
    if (inew) table.vocab.items.push_back(item);
    flat.push_back({uit->second, iit->second, rating, ts});
  }
  finalize_table(table, flat, 0);
  return table;
}

InteractionTable load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open " + path);
  std::vector<std::tuple<std::string, std::string, double, std::int64_t>> rows;
  std::size_t skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (char& ch : line)
      if (ch == ',' || ch == '\t') ch = ' ';
    std::istringstream ls(line);
    std::string user, item;
    double rating;
    std::int64_t ts;
    if (!(ls >> user >> item >> rating >> ts)) {
      ++skipped;
      continue;
    }
    rows.emplace_back(user, item, rating, ts);
  }
  if (rows.empty()) throw Error::io("no valid interactions in " + path);
  InteractionTable table = table_from_rows(rows);
  table.stats.skipped_rows = skipped;
  if (skipped > 0)
    std::fprintf(stderr, "warning: skipped %zu malformed rows in %s\n", skipped,
                 path.c_str());
  return table;
}

SequenceData build_sequences(const InteractionTable& table, int n) {
  if (n < 1) throw Error::domain("build_sequences: n must be >= 1");
  SequenceData out;
  out.history_length = n;
  const std::size_t need = static_cast<std::size_t>(n) + 2;
  for (int u = 0; u < static_cast<int>(table.num_users()); ++u) {
    const auto& seq = table.by_user[u];
    if (seq.size() < need) {
      ++out.excluded_users;
      continue;
    }
    const int T = static_cast<int>(seq.size());
    auto history_ending_before = [&](int target_idx) {
      std::vector<int> h(n);
      for (int j = 0; j < n; ++j) h[j] = seq[target_idx - n + j].item;
      return h;
    };
    // Train targets end before the validation position.
    for (int k = n; k <= T - 3; ++k)
      out.train.push_back({u, history_ending_before(k), seq[k].item});
    out.valid.push_back({u, history_ending_before(T - 2), seq[T - 2].item});
    out.test.push_back({u, history_ending_before(T - 1), seq[T - 1].item});
  }
  if (out.valid.empty())
    std::fprintf(stderr,
                 "warning: no user has %zu+ interactions; all splits empty\n",
                 need);
  return out;
}

InteractionTable filter_min_interactions(const InteractionTable& table,
                                         std::size_t min_interactions) {
  InteractionTable out;
  out.vocab.items = table.vocab.items;
  out.has_rule = table.has_rule;
  out.rule = table.rule;
  std::vector<Interaction> flat;
  for (int u = 0; u < static_cast<int>(table.num_users()); ++u) {
    if (table.by_user[u].size() < min_interactions) continue;
    const int new_id = static_cast<int>(out.vocab.users.size());
    out.vocab.users.push_back(table.vocab.users[u]);
    for (Interaction r : table.by_user[u]) {
      r.user = new_id;
      flat.push_back(r);
    }
  }
  if (flat.empty())
    throw Error::domain("filter_min_interactions: no user has " +
                        std::to_string(min_interactions) + "+ interactions");
  finalize_table(out, flat, 0);
  return out;
}

std::vector<int> contiguous_classes(int items, int num_classes) {
  if (num_classes < 1 || items < num_classes)
    throw Error::domain("contiguous_classes: need at least one item per class");
  std::vector<int> classes(items);
  for (int i = 0; i < items; ++i)
    classes[i] = static_cast<int>(
        (static_cast<std::int64_t>(i) * num_classes) / items);
  return classes;
}

SyntheticRule make_planted_rule(int items, int num_classes, int history_length,
                                double noise) {
  if (history_length < 2)
    throw Error::domain("make_planted_rule: history length must be >= 2");
  if (num_classes < 4)
    throw Error::domain("make_planted_rule: need at least 4 classes");
  SyntheticRule rule;
  rule.num_classes = num_classes;
  rule.class_of_item = contiguous_classes(items, num_classes);
  rule.noise = noise;
  rule.regime_key_position = 0;

  // Probe: the low half of the classes, so each input is roughly a coin
  // flip over uniformly drawn items.
  std::vector<int> low_half;
  for (int c = 0; c < num_classes / 2; ++c) low_half.push_back(c);
  std::vector<std::vector<int>> probes(history_length, low_half);

  // Regime 0 wants a conjunction-of-pairs shape, regime 1 the dual; for
  // n=4: (b1&b2)|(b3&b4) vs (b1|b2)&(b3|b4). Longer histories extend
  // left-deep with alternating ops.
  auto build_condition = [&](LogicOp inner, LogicOp outer) {
    LogicArchitecture arch;
    arch.n = history_length;
    if (history_length == 2) {
      arch.steps.push_back({inner, 0, 1, false, false});
      return canonicalize(arch);
    }
    arch.steps.push_back({inner, 0, 1, false, false});
    int acc = history_length;  // slot of the running expression
    for (int j = 2; j < history_length; ++j) {
      const bool last_pair = (j + 1 < history_length);
      if (last_pair) {
        arch.steps.push_back({inner, j, j + 1, false, false});
        arch.steps.push_back(
            {outer, acc, history_length + static_cast<int>(arch.steps.size()) - 1,
             false, false});
        acc = history_length + static_cast<int>(arch.steps.size()) - 1;
        ++j;
      } else {
        arch.steps.push_back({outer, j, acc, false, false});
        acc = history_length + static_cast<int>(arch.steps.size()) - 1;
      }
    }
    return canonicalize(arch);
  };

  RuleRegime r0;
  r0.condition = build_condition(LogicOp::kAnd, LogicOp::kOr);
  r0.probe_sets = probes;
  r0.then_class = num_classes - 2;
  r0.else_class = num_classes - 1;
  RuleRegime r1;
  r1.condition = build_condition(LogicOp::kOr, LogicOp::kAnd);
  r1.probe_sets = probes;
  r1.then_class = num_classes - 1;
  r1.else_class = num_classes - 2;
  rule.regimes = {r0, r1};
  return rule;
}

int rule_implied_class(const SyntheticRule& rule,
                       const std::vector<int>& history) {
  if (rule.regimes.empty()) throw Error::domain("rule has no regimes");
  const int key_class =
      rule.item_class(history.at(rule.regime_key_position));
  const RuleRegime& regime =
      rule.regimes[key_class % static_cast<int>(rule.regimes.size())];
  if (static_cast<int>(history.size()) != regime.condition.n)
    throw Error::dimension("rule_implied_class: history length mismatch");
  std::vector<char> truths(history.size());
  for (std::size_t j = 0; j < history.size(); ++j) {
    const int c = rule.item_class(history[j]);
    const auto& probe = regime.probe_sets.at(j);
    truths[j] = std::find(probe.begin(), probe.end(), c) != probe.end() ? 1 : 0;
  }
  return evaluate_boolean(regime.condition, truths) ? regime.then_class
                                                    : regime.else_class;
}

InteractionTable generate_synthetic(const SyntheticSpec& spec) {
  if (spec.users < 1 || spec.items < 1 || spec.interactions_per_user < 1)
    throw Error::domain("generate_synthetic: bad sizes");
  if (static_cast<int>(spec.rule.class_of_item.size()) != spec.items)
    throw Error::domain("generate_synthetic: rule class map size mismatch");
  if (spec.interactions_per_user <= spec.history_length)
    throw Error::domain("generate_synthetic: interactions_per_user must exceed n");

  std::vector<std::vector<int>> class_members(spec.rule.num_classes);
  for (int i = 0; i < spec.items; ++i)
    class_members[spec.rule.class_of_item[i]].push_back(i);
  for (const auto& regime : spec.rule.regimes) {
    if (class_members.at(regime.then_class).empty() ||
        class_members.at(regime.else_class).empty())
      throw Error::domain("generate_synthetic: empty target class");
  }

  // Built directly so internal item id k is exactly item "i<k>", matching
  // the rule's class map, and so the vocabulary covers items that happen to
  // never occur.
  InteractionTable table;
  for (int u = 0; u < spec.users; ++u)
    table.vocab.users.push_back("u" + std::to_string(u));
  for (int i = 0; i < spec.items; ++i)
    table.vocab.items.push_back("i" + std::to_string(i));
  table.by_user.resize(spec.users);

  const int n = spec.history_length;
  for (int u = 0; u < spec.users; ++u) {
    Rng rng = make_rng(spec.seed, 0x5e9, static_cast<std::uint64_t>(u));
    std::vector<int> seq;
    for (int t = 0; t < n; ++t) seq.push_back(rand_index(rng, spec.items));
    for (int t = n; t < spec.interactions_per_user; ++t) {
      std::vector<int> history(seq.end() - n, seq.end());
      int item;
      if (spec.rule.noise > 0.0 &&
          rand_uniform(rng, 0.0, 1.0) < spec.rule.noise) {
        item = rand_index(rng, spec.items);
      } else {
        const auto& members = class_members[rule_implied_class(spec.rule, history)];
        item = members[rand_index(rng, static_cast<int>(members.size()))];
      }
      seq.push_back(item);
    }
    for (int t = 0; t < spec.interactions_per_user; ++t)
      table.by_user[u].push_back({u, seq[t], 1.0, t});
  }
  table.stats.num_users = spec.users;
  table.stats.num_items = spec.items;
  table.stats.num_interactions =
      static_cast<std::size_t>(spec.users) * spec.interactions_per_user;
  table.stats.density = static_cast<double>(table.stats.num_interactions) /
                        (static_cast<double>(spec.users) *
                         static_cast<double>(spec.items));
  table.has_rule = true;
  table.rule = spec.rule;
  return table;
}

namespace {

nlohmann::json rule_to_json(const SyntheticRule& rule) {
  nlohmann::json regimes = nlohmann::json::array();
  for (const auto& r : rule.regimes) {
    regimes.push_back({{"condition", arch_key(r.condition)},
                       {"probe_sets", r.probe_sets},
                       {"then_class", r.then_class},
                       {"else_class", r.else_class}});
  }
  return {{"num_classes", rule.num_classes},
          {"class_of_item", rule.class_of_item},
          {"regimes", regimes},
          {"regime_key_position", rule.regime_key_position},
          {"noise", rule.noise}};
}

SyntheticRule rule_from_json(const nlohmann::json& j) {
  SyntheticRule rule;
  rule.num_classes = j.at("num_classes").get<int>();
  rule.class_of_item = j.at("class_of_item").get<std::vector<int>>();
  rule.regime_key_position = j.at("regime_key_position").get<int>();
  rule.noise = j.at("noise").get<double>();
  for (const auto& rj : j.at("regimes")) {
    RuleRegime r;
    r.condition = parse_arch_key(rj.at("condition").get<std::string>());
    r.probe_sets = rj.at("probe_sets").get<std::vector<std::vector<int>>>();
    r.then_class = rj.at("then_class").get<int>();
    r.else_class = rj.at("else_class").get<int>();
    rule.regimes.push_back(std::move(r));
  }
  return rule;
}

}  // namespace

void save_bundle(const InteractionTable& table, const std::string& path) {
  nlohmann::json j;
  j["format"] = "manas-bundle";
  j["version"] = 1;
  j["users"] = table.vocab.users;
  j["items"] = table.vocab.items;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& seq : table.by_user)
    for (const Interaction& r : seq)
      rows.push_back({r.user, r.item, r.rating, r.timestamp});
  j["interactions"] = std::move(rows);
  if (table.has_rule) j["rule"] = rule_to_json(table.rule);
  std::ofstream out(path);
  if (!out) throw Error::io("cannot write " + path);
  out << j.dump() << "\n";
}

InteractionTable load_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error::io("bad bundle " + path + ": " + e.what());
  }
  if (j.value("format", "") != "manas-bundle")
    throw Error::io(path + " is not a dataset bundle");
  InteractionTable table;
  table.vocab.users = j.at("users").get<std::vector<std::string>>();
  table.vocab.items = j.at("items").get<std::vector<std::string>>();
  std::vector<Interaction> flat;
  for (const auto& row : j.at("interactions"))
    flat.push_back({row.at(0).get<int>(), row.at(1).get<int>(),
                    row.at(2).get<double>(), row.at(3).get<std::int64_t>()});
  finalize_table(table, flat, 0);
  // The vocabulary may include never-interacted items/users by design.
  table.stats.num_users = 0;
  for (const auto& seq : table.by_user)
    if (!seq.empty()) ++table.stats.num_users;
  table.stats.density = static_cast<double>(table.stats.num_interactions) /
                        (static_cast<double>(table.stats.num_users) *
                         static_cast<double>(table.stats.num_items));
  if (j.contains("rule")) {
    table.has_rule = true;
    table.rule = rule_from_json(j.at("rule"));
  }
  return table;
}

}  // namespace manas
