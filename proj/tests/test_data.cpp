#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "manas/data.hpp"
#include "manas/error.hpp"

using namespace manas;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("manas_test_" + name);
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p);
  out << content;
}

SyntheticSpec tiny_spec(std::uint64_t seed = 9, double noise = 0.0) {
  SyntheticSpec spec;
  spec.users = 40;
  spec.items = 24;
  spec.interactions_per_user = 10;
  spec.history_length = 3;
  spec.rule = make_planted_rule(spec.items, 4, spec.history_length, noise);
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("load_interactions counts, sorting, and density") {
  const fs::path p = temp_file("basic.tsv");
  write_file(p,
             "u1\ti1\t5.0\t3\n"
             "u1\ti2\t4.0\t1\n"
             "u2,i1,3.0,10\n"
             "u1\ti3\t2.0\t2\n"
             "# comment\n"
             "broken row\n"
             "u2\ti3\t1.0\t4\n");
  InteractionTable t = load_interactions(p.string());
  CHECK(t.stats.num_users == 2);
  CHECK(t.stats.num_items == 3);
  CHECK(t.stats.num_interactions == 5);
  CHECK(t.stats.skipped_rows == 1);
  CHECK(t.stats.density == doctest::Approx(5.0 / (2.0 * 3.0)));
  // Chronological per user regardless of file order.
  const int u1 = t.vocab.user_id("u1");
  REQUIRE(t.by_user[u1].size() == 3);
  CHECK(t.vocab.item_name(t.by_user[u1][0].item) == "i2");
  CHECK(t.vocab.item_name(t.by_user[u1][1].item) == "i3");
  CHECK(t.vocab.item_name(t.by_user[u1][2].item) == "i1");
  fs::remove(p);
}

TEST_CASE("paper-scale density arithmetic") {
  const double density = 198502.0 / (22363.0 * 12101.0);
  CHECK(density * 100.0 == doctest::Approx(0.073).epsilon(0.01));
}

TEST_CASE("load_interactions is deterministic and dedupes") {
  const fs::path p = temp_file("dedupe.tsv");
  write_file(p,
             "a\tx\t1\t1\n"
             "a\tx\t1\t1\n"
             "b\ty\t1\t2\n"
             "a\tz\t1\t3\n");
  InteractionTable t1 = load_interactions(p.string());
  InteractionTable t2 = load_interactions(p.string());
  CHECK(t1.stats.num_interactions == 3);
  CHECK(t1.stats.dropped_duplicates == 1);
  CHECK(t1.vocab.users == t2.vocab.users);
  CHECK(t1.vocab.items == t2.vocab.items);
  CHECK(t1.vocab.user_id("b") == t2.vocab.user_id("b"));
  fs::remove(p);
}

TEST_CASE("empty or missing files are errors") {
  const fs::path p = temp_file("empty.tsv");
  write_file(p, "# nothing\n");
  CHECK_THROWS_AS(load_interactions(p.string()), Error);
  CHECK_THROWS_AS(load_interactions("/nonexistent/file.tsv"), Error);
  fs::remove(p);
}

TEST_CASE("vocabulary round trips") {
  const fs::path p = temp_file("vocab.tsv");
  write_file(p, "u9\tiA\t1\t1\nu3\tiB\t1\t1\nu9\tiC\t1\t2\nu3\tiC\t1\t9\n");
  InteractionTable t = load_interactions(p.string());
  for (const auto& name : t.vocab.users)
    CHECK(t.vocab.user_name(t.vocab.user_id(name)) == name);
  for (const auto& name : t.vocab.items)
    CHECK(t.vocab.item_name(t.vocab.item_id(name)) == name);
  CHECK_THROWS_AS(t.vocab.item_id("missing"), Error);
  fs::remove(p);
}

TEST_CASE("build_sequences boundary: n+2 interactions give valid+test only") {
  std::vector<std::tuple<std::string, std::string, double, std::int64_t>> rows;
  for (int t = 0; t < 6; ++t)
    rows.emplace_back("u", "i" + std::to_string(t), 1.0, t);
  InteractionTable table = table_from_rows(rows);
  SequenceData seq = build_sequences(table, 4);
  CHECK(seq.train.empty());
  REQUIRE(seq.valid.size() == 1);
  REQUIRE(seq.test.size() == 1);
  CHECK(table.vocab.item_name(seq.valid[0].target) == "i4");
  CHECK(table.vocab.item_name(seq.test[0].target) == "i5");
  CHECK(seq.valid[0].history.size() == 4);
  CHECK(table.vocab.item_name(seq.valid[0].history[0]) == "i0");
  CHECK(table.vocab.item_name(seq.test[0].history[0]) == "i1");
}

TEST_CASE("build_sequences train windows slide over the train region") {
  std::vector<std::tuple<std::string, std::string, double, std::int64_t>> rows;
  for (int t = 0; t < 9; ++t)
    rows.emplace_back("u", "i" + std::to_string(t), 1.0, t);
  InteractionTable table = table_from_rows(rows);
  SequenceData seq = build_sequences(table, 3);
  // T=9: train targets at indices 3..6, valid at 7, test at 8.
  REQUIRE(seq.train.size() == 4);
  for (std::size_t k = 0; k < seq.train.size(); ++k) {
    CHECK(table.vocab.item_name(seq.train[k].target) ==
          "i" + std::to_string(3 + k));
    CHECK(seq.train[k].history.size() == 3);
  }
  CHECK(table.vocab.item_name(seq.valid[0].target) == "i7");
  CHECK(table.vocab.item_name(seq.test[0].target) == "i8");
}

TEST_CASE("build_sequences excludes short users and warns on oversize n") {
  std::vector<std::tuple<std::string, std::string, double, std::int64_t>> rows;
  for (int t = 0; t < 4; ++t)
    rows.emplace_back("short", "i" + std::to_string(t), 1.0, t);
  for (int t = 0; t < 7; ++t)
    rows.emplace_back("long", "j" + std::to_string(t), 1.0, t);
  InteractionTable table = table_from_rows(rows);
  SequenceData seq = build_sequences(table, 4);  // short has 4 < 6
  CHECK(seq.excluded_users == 1);
  CHECK(seq.valid.size() == 1);

  SequenceData none = build_sequences(table, 12);
  CHECK(none.valid.empty());
  CHECK(none.excluded_users == 2);
}

TEST_CASE("no sequence sample leaks time") {
  InteractionTable table = generate_synthetic(tiny_spec());
  SequenceData seq = build_sequences(table, 3);
  auto check_sample = [&](const SequenceSample& s) {
    const auto& inter = table.by_user[s.user];
    for (std::size_t pos = 3; pos < inter.size(); ++pos) {
      if (inter[pos].item != s.target) continue;
      bool window_matches = true;
      for (int j = 0; j < 3; ++j)
        if (inter[pos - 3 + j].item != s.history[j]) window_matches = false;
      if (!window_matches) continue;
      for (int j = 0; j < 3; ++j)
        CHECK(inter[pos - 3 + j].timestamp < inter[pos].timestamp);
      return;
    }
    FAIL("no window found for sample");
  };
  for (const auto& s : seq.train) check_sample(s);
  for (const auto& s : seq.valid) check_sample(s);
  for (const auto& s : seq.test) check_sample(s);
}

TEST_CASE("filter_min_interactions keeps long users and the item vocab") {
  std::vector<std::tuple<std::string, std::string, double, std::int64_t>> rows;
  for (int t = 0; t < 12; ++t)
    rows.emplace_back("keep", "i" + std::to_string(t), 1.0, t);
  for (int t = 0; t < 5; ++t)
    rows.emplace_back("drop", "i" + std::to_string(t), 1.0, t);
  InteractionTable table = table_from_rows(rows);
  InteractionTable f = filter_min_interactions(table, 12);
  CHECK(f.num_users() == 1);
  CHECK(f.vocab.users[0] == "keep");
  CHECK(f.vocab.items == table.vocab.items);
  CHECK(f.stats.num_interactions == 12);
  CHECK_THROWS_AS(filter_min_interactions(table, 99), Error);
}

TEST_CASE("contiguous classes are balanced") {
  auto classes = contiguous_classes(24, 4);
  std::vector<int> counts(4, 0);
  for (int c : classes) counts[c]++;
  for (int c : counts) CHECK(c == 6);
  CHECK(classes.front() == 0);
  CHECK(classes.back() == 3);
}

TEST_CASE("planted rule conditions are valid architectures") {
  for (int n : {2, 3, 4, 6}) {
    SyntheticRule rule = make_planted_rule(40, 8, n, 0.1);
    CHECK(rule.regimes.size() == 2);
    for (const auto& regime : rule.regimes) {
      CHECK(is_valid(regime.condition));
      CHECK(regime.condition.n == n);
      CHECK(regime.probe_sets.size() == static_cast<std::size_t>(n));
    }
  }
}

TEST_CASE("rule_implied_class follows regime and condition by hand") {
  // 4 classes over 8 items: items 0-1 class0, 2-3 class1, 4-5 class2, 6-7 class3.
  SyntheticRule rule;
  rule.num_classes = 4;
  rule.class_of_item = contiguous_classes(8, 4);
  rule.noise = 0.0;
  rule.regime_key_position = 0;
  RuleRegime r0;
  r0.condition = LogicArchitecture{2, {{LogicOp::kAnd, 0, 1, false, false}}};
  r0.probe_sets = {{0, 1}, {0, 1}};
  r0.then_class = 2;
  r0.else_class = 3;
  RuleRegime r1 = r0;
  r1.condition = LogicArchitecture{2, {{LogicOp::kOr, 0, 1, false, false}}};
  r1.then_class = 3;
  r1.else_class = 2;
  rule.regimes = {r0, r1};

  // history[0]=0 -> class0 -> regime 0 (AND).
  CHECK(rule_implied_class(rule, {0, 2}) == 2);  // class0 and class1: true
  CHECK(rule_implied_class(rule, {0, 4}) == 3);  // class2 breaks the AND
  // history[0]=2 -> class1 -> regime 1 (OR).
  CHECK(rule_implied_class(rule, {2, 6}) == 3);  // class1 in probe
  CHECK(rule_implied_class(rule, {6, 7}) == 2);  // neither in probe
}

TEST_CASE("synthetic generation is seed-deterministic") {
  InteractionTable a = generate_synthetic(tiny_spec(42));
  InteractionTable b = generate_synthetic(tiny_spec(42));
  InteractionTable c = generate_synthetic(tiny_spec(43));
  REQUIRE(a.num_users() == b.num_users());
  bool identical = true;
  for (std::size_t u = 0; u < a.num_users(); ++u)
    for (std::size_t k = 0; k < a.by_user[u].size(); ++k)
      if (a.by_user[u][k].item != b.by_user[u][k].item) identical = false;
  CHECK(identical);
  bool differs = false;
  for (std::size_t u = 0; u < a.num_users() && !differs; ++u)
    for (std::size_t k = 0; k < a.by_user[u].size(); ++k)
      if (a.by_user[u][k].item != c.by_user[u][k].item) differs = true;
  CHECK(differs);
}

TEST_CASE("noise-free synthetic data is class-predictable by its own rule") {
  SyntheticSpec spec = tiny_spec(7, 0.0);
  InteractionTable t = generate_synthetic(spec);
  const int n = spec.history_length;
  std::size_t checked = 0;
  for (std::size_t u = 0; u < t.num_users(); ++u) {
    const auto& seq = t.by_user[u];
    for (std::size_t pos = n; pos < seq.size(); ++pos) {
      std::vector<int> history;
      for (int j = 0; j < n; ++j) history.push_back(seq[pos - n + j].item);
      const int implied = rule_implied_class(t.rule, history);
      CHECK(t.rule.item_class(seq[pos].item) == implied);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("generate_synthetic validates sizes") {
  SyntheticSpec bad = tiny_spec();
  bad.interactions_per_user = bad.history_length;
  CHECK_THROWS_AS(generate_synthetic(bad), Error);
  SyntheticSpec wrong = tiny_spec();
  wrong.rule.class_of_item.pop_back();
  CHECK_THROWS_AS(generate_synthetic(wrong), Error);
}

TEST_CASE("bundle save/load round trip") {
  InteractionTable t = generate_synthetic(tiny_spec(11, 0.2));
  const fs::path p = temp_file("bundle.json");
  save_bundle(t, p.string());
  InteractionTable r = load_bundle(p.string());
  CHECK(r.vocab.users == t.vocab.users);
  CHECK(r.vocab.items == t.vocab.items);
  REQUIRE(r.num_users() == t.num_users());
  for (std::size_t u = 0; u < t.num_users(); ++u) {
    REQUIRE(r.by_user[u].size() == t.by_user[u].size());
    for (std::size_t k = 0; k < t.by_user[u].size(); ++k) {
      CHECK(r.by_user[u][k].item == t.by_user[u][k].item);
      CHECK(r.by_user[u][k].timestamp == t.by_user[u][k].timestamp);
    }
  }
  REQUIRE(r.has_rule);
  CHECK(r.rule.num_classes == t.rule.num_classes);
  CHECK(r.rule.class_of_item == t.rule.class_of_item);
  CHECK(r.rule.noise == t.rule.noise);
  REQUIRE(r.rule.regimes.size() == t.rule.regimes.size());
  for (std::size_t i = 0; i < t.rule.regimes.size(); ++i) {
    CHECK(r.rule.regimes[i].condition == t.rule.regimes[i].condition);
    CHECK(r.rule.regimes[i].probe_sets == t.rule.regimes[i].probe_sets);
  }
  // Re-saving produces identical bytes.
  const fs::path p2 = temp_file("bundle2.json");
  save_bundle(r, p2.string());
  std::ifstream f1(p), f2(p2);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  fs::remove(p);
  fs::remove(p2);
  CHECK_THROWS_AS(load_bundle("/nonexistent/bundle.json"), Error);
}
