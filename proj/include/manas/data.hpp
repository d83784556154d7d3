#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "manas/architecture.hpp"
#include "manas/rng.hpp"

namespace manas {

struct Interaction {
  int user = 0;
  int item = 0;
  double rating = 0.0;
  std::int64_t timestamp = 0;
};

struct Vocab {
  std::vector<std::string> users;  // index = internal id
  std::vector<std::string> items;

  int user_id(const std::string& external) const;
  int item_id(const std::string& external) const;
  const std::string& user_name(int id) const { return users.at(id); }
  const std::string& item_name(int id) const { return items.at(id); }
};

struct DatasetStats {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_interactions = 0;
  double density = 0.0;  // interactions / (users * items)
  std::size_t skipped_rows = 0;
  std::size_t dropped_duplicates = 0;
};

// Synthetic planted rule:
//   input j of the condition is true iff class(history[j]) is in
//   probe_sets[j]; the regime is selected by
//   class(history[regime_key_position]) % regimes.size(); a true condition
//   draws the target from then_class, otherwise else_class. With
//   probability `noise` the target is drawn uniformly from all items
//   instead.
struct RuleRegime {
  LogicArchitecture condition;              // over history_length inputs
  std::vector<std::vector<int>> probe_sets; // one class set per position
  int then_class = 0;
  int else_class = 0;
};

struct SyntheticRule {
  int num_classes = 0;
  std::vector<int> class_of_item;
  std::vector<RuleRegime> regimes;
  int regime_key_position = 0;
  double noise = 0.0;

  int item_class(int item) const { return class_of_item.at(item); }
};

struct InteractionTable {
  Vocab vocab;
  // Chronological per user (timestamp, then original file order).
  std::vector<std::vector<Interaction>> by_user;
  DatasetStats stats;
  bool has_rule = false;
  SyntheticRule rule;

  std::size_t num_users() const { return by_user.size(); }
  std::size_t num_items() const { return vocab.items.size(); }
  // Sorted unique item ids the user ever interacted with.
  std::vector<int> interacted_items(int user) const;
};

// Delimited "user item rating timestamp" rows; tab, comma or space
// separated. Malformed rows are skipped and counted; an empty table is an
// error. Ids are assigned contiguously in order of first appearance.
InteractionTable load_interactions(const std::string& path);
InteractionTable table_from_rows(
    const std::vector<std::tuple<std::string, std::string, double, std::int64_t>>&
        rows);

struct SequenceSample {
  int user = 0;
  std::vector<int> history;  // exactly n item ids, time order
  int target = 0;
};

// Leave-one-out over each user's chronological sequence: last item = test
// target, second-to-last = validation target, the rest is the train region.
// Users with fewer than n+2 interactions are excluded and counted.
struct SequenceData {
  int history_length = 0;
  std::vector<SequenceSample> train, valid, test;
  std::size_t excluded_users = 0;
};

SequenceData build_sequences(const InteractionTable& table, int n);

// Keeps only users with at least `min_interactions` interactions (the
// sequence-length sweep control); user ids are re-assigned contiguously,
// item vocabulary is preserved.
InteractionTable filter_min_interactions(const InteractionTable& table,
                                         std::size_t min_interactions);

struct SyntheticSpec {
  int users = 2000;
  int items = 200;
  int interactions_per_user = 20;
  int history_length = 4;
  SyntheticRule rule;
  std::uint64_t seed = 1;
};

// Evenly partitions `items` into `num_classes` contiguous blocks.
std::vector<int> contiguous_classes(int items, int num_classes);

// Two-regime rule whose useful condition structure depends on the class of
// the first history item; used by the synthetic benchmark configs.
SyntheticRule make_planted_rule(int items, int num_classes, int history_length,
                                double noise);

// The class the rule implies for the next item after `history`.
int rule_implied_class(const SyntheticRule& rule,
                       const std::vector<int>& history);

InteractionTable generate_synthetic(const SyntheticSpec& spec);

// JSON dataset bundle round trip.
void save_bundle(const InteractionTable& table, const std::string& path);
InteractionTable load_bundle(const std::string& path);

}  // namespace manas
