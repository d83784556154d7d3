#include "manas/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "manas/error.hpp"

static_assert(std::numeric_limits<double>::is_iec559,
              "checkpoint format assumes IEEE-754 doubles");

namespace manas {

using nlohmann::json;

namespace {

const char kMagic[4] = {'M', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::manas: return "manas";
    case RunMode::nanas: return "nanas";
    case RunMode::ncr_fixed: return "ncr-fixed";
  }
  throw Error::domain("bad run mode");
}

RunMode mode_of(const std::string& s) {
  if (s == "manas") return RunMode::manas;
  if (s == "nanas") return RunMode::nanas;
  if (s == "ncr-fixed") return RunMode::ncr_fixed;
  throw Error::config("unknown mode '" + s + "' (manas | nanas | ncr-fixed)");
}

json config_json(const TrainConfig& c) {
  return json{{"mode", mode_name(c.mode)},
              {"strategy", c.strategy == SampleStrategy::greedy ? "greedy" : "sample"},
              {"epochs", c.epochs},
              {"controller_steps", c.controller_steps},
              {"arch_gen_batch", c.arch_gen_batch},
              {"child_batch", c.child_batch},
              {"controller_batch", c.controller_batch},
              {"child_lr", c.child_lr},
              {"controller_lr", c.controller_lr},
              {"l2_weight", c.l2_weight},
              {"logic_reg_weight", c.logic_reg_weight},
              {"baseline_decay", c.baseline_decay},
              {"reward_cutoff", c.reward_cutoff},
              {"embedding_dim", c.embedding_dim},
              {"history_length", c.history_length},
              {"eval_negatives", c.eval_negatives},
              {"score_temperature", c.score_temperature},
              {"seed", c.seed},
              {"candidate_seed", c.candidate_seed}};
}

void require_range(bool ok, const std::string& key, const char* what) {
  if (!ok) throw Error::config("config key '" + key + "' " + what);
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  const json defaults = config_json(c);
  for (const auto& [key, _] : j.items())
    if (!defaults.contains(key))
      throw Error::config("unknown config key '" + key + "'");

  auto get_int = [&](const char* key, int lo) {
    if (!j.contains(key)) return defaults.at(key).get<int>();
    if (!j.at(key).is_number_integer())
      throw Error::config(std::string("config key '") + key + "' must be an integer");
    const int v = j.at(key).get<int>();
    require_range(v >= lo, key, "out of range");
    return v;
  };
  auto get_pos_real = [&](const char* key, bool allow_zero) {
    if (!j.contains(key)) return defaults.at(key).get<double>();
    if (!j.at(key).is_number())
      throw Error::config(std::string("config key '") + key + "' must be a number");
    const double v = j.at(key).get<double>();
    require_range(allow_zero ? v >= 0.0 : v > 0.0, key, "must be positive");
    return v;
  };

  if (j.contains("mode")) c.mode = mode_of(j.at("mode").get<std::string>());
  if (j.contains("strategy")) {
    const std::string s = j.at("strategy").get<std::string>();
    if (s == "sample")
      c.strategy = SampleStrategy::sample;
    else if (s == "greedy")
      c.strategy = SampleStrategy::greedy;
    else
      throw Error::config("unknown strategy '" + s + "' (sample | greedy)");
  }
  c.epochs = get_int("epochs", 1);
  c.controller_steps = get_int("controller_steps", 0);
  c.arch_gen_batch = get_int("arch_gen_batch", 1);
  c.child_batch = get_int("child_batch", 1);
  c.controller_batch = get_int("controller_batch", 1);
  c.child_lr = get_pos_real("child_lr", false);
  c.controller_lr = get_pos_real("controller_lr", false);
  c.l2_weight = get_pos_real("l2_weight", true);
  c.logic_reg_weight = get_pos_real("logic_reg_weight", true);
  c.baseline_decay = get_pos_real("baseline_decay", false);
  require_range(c.baseline_decay < 1.0, "baseline_decay", "must be in (0,1)");
  c.reward_cutoff = get_int("reward_cutoff", 1);
  c.embedding_dim = get_int("embedding_dim", 1);
  c.history_length = get_int("history_length", 1);
  c.eval_negatives = get_int("eval_negatives", 1);
  c.score_temperature = get_pos_real("score_temperature", false);
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("candidate_seed"))
    c.candidate_seed = j.at("candidate_seed").get<std::uint64_t>();
  return c;
}

struct TensorRef {
  std::string group, name, kind;
  const Tensor* tensor;
};

std::vector<TensorRef> collect(const TrainState& st) {
  std::vector<TensorRef> refs;
  auto add_set = [&](const std::string& group, const ParameterSet& ps) {
    for (const auto& [name, e] : ps.entries) {
      refs.push_back({group, name, "value", &e.value});
      refs.push_back({group, name, "m", &e.m});
      refs.push_back({group, name, "v", &e.v});
    }
  };
  add_set("child", st.child.params);
  add_set("controller", st.controller.params);
  refs.push_back({"child", "anchor", "const", &st.child.anchor});
  return refs;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& cfg) {
  return config_json(cfg).dump(2);
}

TrainConfig parse_train_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw Error::config(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error::config("config must be a JSON object");
  return config_from_json(j);
}

void save_checkpoint(const std::string& path, const TrainState& state,
                     const TrainConfig& cfg) {
  json manifest;
  manifest["config"] = config_json(cfg);
  manifest["epoch"] = state.epoch;
  manifest["num_items"] = state.child.num_items;
  manifest["baseline"] = {{"value", state.baseline.value},
                          {"decay", state.baseline.decay},
                          {"initialized", state.baseline.initialized}};
  manifest["child_step"] = state.child.params.step;
  manifest["controller_step"] = state.controller.params.step;
  manifest["dtype"] = "f64le";

  const auto refs = collect(state);
  json dir = json::array();
  for (const auto& r : refs)
    dir.push_back({{"group", r.group},
                   {"name", r.name},
                   {"kind", r.kind},
                   {"shape", r.tensor->shape}});
  manifest["tensors"] = std::move(dir);

  const std::string header = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error::io("cannot write " + path);
  out.write(kMagic, 4);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& r : refs)
    out.write(reinterpret_cast<const char*>(r.tensor->data.data()),
              static_cast<std::streamsize>(r.tensor->numel() * sizeof(double)));
  if (!out) throw Error::io("failed writing " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error::io("cannot open " + path);
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw Error::io(path + " is not a checkpoint");
  if (version != kVersion)
    throw Error::io("unsupported checkpoint version " + std::to_string(version));
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  json manifest;
  try {
    manifest = json::parse(header);
  } catch (const std::exception& e) {
    throw Error::io(std::string("bad checkpoint manifest: ") + e.what());
  }

  LoadedCheckpoint out;
  out.config = config_from_json(manifest.at("config"));
  const int num_items = manifest.at("num_items").get<int>();
  out.state = make_train_state(out.config, num_items);
  out.state.epoch = manifest.at("epoch").get<int>();
  out.state.baseline.value = manifest.at("baseline").at("value").get<double>();
  out.state.baseline.decay = manifest.at("baseline").at("decay").get<double>();
  out.state.baseline.initialized =
      manifest.at("baseline").at("initialized").get<bool>();
  out.state.child.params.step = manifest.at("child_step").get<std::int64_t>();
  out.state.controller.params.step =
      manifest.at("controller_step").get<std::int64_t>();

  auto refs = collect(out.state);
  const auto& dir = manifest.at("tensors");
  if (dir.size() != refs.size())
    throw Error::io("checkpoint tensor directory mismatch");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& entry = dir.at(i);
    if (entry.at("group") != refs[i].group || entry.at("name") != refs[i].name ||
        entry.at("kind") != refs[i].kind)
      throw Error::io("checkpoint tensor order mismatch at index " +
                      std::to_string(i));
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != refs[i].tensor->shape)
      throw Error::io("checkpoint shape mismatch for " + refs[i].name);
    auto* t = const_cast<Tensor*>(refs[i].tensor);
    in.read(reinterpret_cast<char*>(t->data.data()),
            static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
  if (!in) throw Error::io("truncated checkpoint " + path);
  return out;
}

std::uint64_t hash_params(const ParameterSet& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix_bytes = [&](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, e] : params.entries) {
    mix_bytes(name.data(), name.size());
    mix_bytes(e.value.data.data(), e.value.numel() * sizeof(double));
  }
  return h;
}

}  // namespace manas
