#include "manas/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "manas/checkpoint.hpp"
#include "manas/error.hpp"
#include "manas/trainer.hpp"

namespace manas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// MANAS_OUTPUT_ROOT prefixes relative output paths.
fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("MANAS_OUTPUT_ROOT"))
    return fs::path(root) / p;
  return p;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error::io("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw Error::config(std::string("bad ") + what + " entry '" + part + "'");
    }
  }
  if (out.empty()) throw Error::config(std::string("empty ") + what + " list");
  return out;
}

std::vector<std::string> metric_columns(const std::vector<int>& ks) {
  std::vector<std::string> cols;
  for (int k : ks) cols.push_back("N@" + std::to_string(k));
  for (int k : ks) cols.push_back("HR@" + std::to_string(k));
  return cols;
}

// Configuration shared by train/eval/sweep: a JSON config file whose keys
// are the TrainConfig keys plus data_bundle/output_dir, with CLI flags
// taking precedence.
struct RunOptions {
  std::string config_path;
  std::string bundle;
  std::string output_dir = "out";
  std::string mode, strategy;
  int epochs = -1;
  int history_length = -1;
  int controller_steps = -1;
  std::int64_t seed = -1;

  TrainConfig load(bool need_bundle) {
    json j = json::object();
    if (!config_path.empty()) {
      try {
        j = json::parse(read_file(config_path));
      } catch (const Error&) {
        throw;
      } catch (const std::exception& e) {
        throw Error::config(std::string("config is not valid JSON: ") + e.what());
      }
      if (!j.is_object()) throw Error::config("config must be a JSON object");
      if (j.contains("data_bundle")) {
        if (bundle.empty()) bundle = j.at("data_bundle").get<std::string>();
        j.erase("data_bundle");
      }
      if (j.contains("output_dir")) {
        if (output_dir == "out") output_dir = j.at("output_dir").get<std::string>();
        j.erase("output_dir");
      }
    }
    if (!mode.empty()) j["mode"] = mode;
    if (!strategy.empty()) j["strategy"] = strategy;
    if (epochs > 0) j["epochs"] = epochs;
    if (history_length > 0) j["history_length"] = history_length;
    if (controller_steps >= 0) j["controller_steps"] = controller_steps;
    if (seed >= 0) j["seed"] = static_cast<std::uint64_t>(seed);
    TrainConfig cfg = parse_train_config(j.dump());
    if (need_bundle && bundle.empty())
      throw Error::config("no data bundle given (--bundle or config data_bundle)");
    return cfg;
  }

  void attach(CLI::App* cmd, bool with_config = true) {
    if (with_config)
      cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option("--bundle", bundle, "dataset bundle path");
    cmd->add_option("--out", output_dir, "output directory");
    cmd->add_option("--mode", mode, "manas | nanas | ncr-fixed");
    cmd->add_option("--strategy", strategy, "sample | greedy");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--history-length", history_length, "history length n");
    cmd->add_option("--controller-steps", controller_steps,
                    "controller steps per epoch");
    cmd->add_option("--seed", seed, "root seed");
  }
};

void print_stats(const InteractionTable& table) {
  std::printf("%-12s %-10s %-14s %s\n", "#Users", "#Items", "#Interaction",
              "Density");
  std::printf("%-12zu %-10zu %-14zu %.3f%%\n", table.stats.num_users,
              table.stats.num_items, table.stats.num_interactions,
              table.stats.density * 100.0);
  if (table.stats.skipped_rows)
    std::printf("skipped malformed rows: %zu\n", table.stats.skipped_rows);
  if (table.stats.dropped_duplicates)
    std::printf("dropped duplicates: %zu\n", table.stats.dropped_duplicates);
}

SyntheticSpec parse_synthetic_spec(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error::config(std::string("synthetic spec is not valid JSON: ") +
                        e.what());
  }
  static const std::set<std::string> known = {
      "users",          "items", "interactions_per_user", "history_length",
      "num_classes",    "noise", "seed"};
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw Error::config("unknown synthetic spec key '" + key + "'");
  SyntheticSpec spec;
  spec.users = j.value("users", 2000);
  spec.items = j.value("items", 200);
  spec.interactions_per_user = j.value("interactions_per_user", 20);
  spec.history_length = j.value("history_length", 4);
  const int num_classes = j.value("num_classes", 8);
  const double noise = j.value("noise", 0.1);
  spec.seed = j.value("seed", std::uint64_t{1});
  spec.rule = make_planted_rule(spec.items, num_classes, spec.history_length,
                                noise);
  return spec;
}

int cmd_ingest(const std::string& input, const std::string& synthetic,
               const std::string& output) {
  if (input.empty() == synthetic.empty())
    throw Error::config("ingest needs exactly one of --input or --synthetic");
  InteractionTable table = input.empty()
                               ? generate_synthetic(parse_synthetic_spec(synthetic))
                               : load_interactions(input);
  const fs::path out = resolve_output(output);
  ensure_parent(out);
  save_bundle(table, out.string());
  print_stats(table);
  std::printf("bundle written to %s\n", out.string().c_str());
  return 0;
}

void write_train_log_line(std::ofstream& log, const EpochLog& e) {
  json j{{"epoch", e.epoch},
         {"child_loss", e.child.mean_loss},
         {"child_bpr", e.child.mean_bpr},
         {"logic_reg", e.child.mean_reg},
         {"child_batches", e.child.batches},
         {"controller_reward", e.controller.mean_reward},
         {"controller_updates", e.controller.updates},
         {"baseline", e.controller.final_baseline},
         {"val_hr10", e.val_hr10},
         {"val_ndcg10", e.val_ndcg10},
         {"val_reward", e.val_reward},
         {"wall_child_s", e.wall_child_s},
         {"wall_controller_s", e.wall_controller_s},
         {"wall_eval_s", e.wall_eval_s}};
  log << j.dump() << "\n";
  log.flush();
}

int cmd_train(RunOptions& opts) {
  TrainConfig cfg = opts.load(true);
  InteractionTable table = load_bundle(opts.bundle);
  const fs::path out_dir = resolve_output(opts.output_dir);
  fs::create_directories(out_dir);

  Trainer trainer(std::move(table), cfg);
  std::ofstream log(out_dir / "train_log.jsonl");
  if (!log) throw Error::io("cannot write training log");
  std::printf("training: mode=%s epochs=%d train=%zu valid=%zu items=%zu\n",
              cfg.mode == RunMode::manas
                  ? "manas"
                  : (cfg.mode == RunMode::nanas ? "nanas" : "ncr-fixed"),
              cfg.epochs, trainer.sequences().train.size(),
              trainer.sequences().valid.size(), trainer.table().num_items());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const EpochLog e = trainer.run_epoch();
    write_train_log_line(log, e);
    std::printf(
        "epoch %3d  loss %.4f  reward %.4f  val HR@10 %.4f  N@10 %.4f\n",
        e.epoch, e.child.mean_loss, e.controller.mean_reward, e.val_hr10,
        e.val_ndcg10);
    std::fflush(stdout);
    const std::string name = "checkpoint_epoch_" + std::to_string(epoch) + ".mnck";
    save_checkpoint((out_dir / name).string(), trainer.state(), cfg);
    save_checkpoint((out_dir / "checkpoint_latest.mnck").string(),
                    trainer.state(), cfg);
  }
  std::printf("done; checkpoints in %s\n", out_dir.string().c_str());
  return 0;
}

void write_metric_csv(const fs::path& path, const std::vector<int>& ks,
                      const std::string& label, const MetricReport& report) {
  ensure_parent(path);
  std::ofstream out(path);
  if (!out) throw Error::io("cannot write " + path.string());
  const auto cols = metric_columns(ks);
  out << "model,stat";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  auto row = [&](const std::string& stat,
                 const std::map<std::string, double>& values) {
    out << label << ',' << stat;
    for (const auto& c : cols) out << ',' << fmt(values.at(c));
    out << '\n';
  };
  if (!report.multi) {
    row("value", report.values);
  } else {
    row("avg", report.avg);
    row("min", report.min);
    row("max", report.max);
    row("std", report.std);
  }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& bundle_path,
             const std::string& split, bool multi20, int runs, bool greedy,
             const std::string& k_list, const std::string& output,
             const std::string& json_output) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  InteractionTable table = load_bundle(bundle_path);
  Trainer trainer(std::move(table), ckpt.config);
  trainer.state() = std::move(ckpt.state);

  const bool use_test = split != "valid";
  if (split != "valid" && split != "test")
    throw Error::config("--split must be valid or test");
  EvalOptions opts;
  opts.ks = parse_int_list(k_list, "K");
  opts.mode = multi20 ? EvalMode::multi : EvalMode::single;
  opts.runs = runs;
  opts.seed = derive_seed(ckpt.config.seed, 0xEA51);
  const MetricReport report = trainer.evaluate_split(
      use_test ? trainer.sequences().test : trainer.sequences().valid,
      use_test ? trainer.test_candidates() : trainer.valid_candidates(), opts,
      greedy ? SampleStrategy::greedy : SampleStrategy::sample);

  std::string label =
      ckpt.config.mode == RunMode::manas
          ? "manas"
          : (ckpt.config.mode == RunMode::nanas ? "nanas" : "ncr-fixed");
  if (greedy) label += "-greedy";

  const fs::path out = resolve_output(output);
  write_metric_csv(out, opts.ks, label, report);
  std::printf("metrics written to %s\n", out.string().c_str());
  const auto& values = report.multi ? report.avg : report.values;
  for (const auto& c : metric_columns(opts.ks))
    std::printf("%-8s %.4f\n", c.c_str(), values.at(c));

  if (!json_output.empty()) {
    json j;
    j["model"] = label;
    j["split"] = split;
    if (report.multi) {
      j["runs"] = report.runs;
      j["avg"] = report.avg;
      j["min"] = report.min;
      j["max"] = report.max;
      j["std"] = report.std;
    } else {
      j["values"] = report.values;
    }
    const fs::path jp = resolve_output(json_output);
    ensure_parent(jp);
    std::ofstream js(jp);
    js << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_enumerate(int n, bool count_only, bool dot) {
  const BigUint count = count_architectures(n);
  std::printf("n=%d architectures=%s\n", n, count.str().c_str());
  if (count_only) return 0;
  const auto archs = enumerate_architectures(n);  // guards n > 5
  const auto names = default_variable_names(n);
  for (const auto& arch : archs) {
    std::printf("%s\t%s\n", arch_key(arch).c_str(),
                to_expression_string(arch, names).c_str());
    if (dot) std::printf("%s", to_dot(arch, names).c_str());
  }
  return 0;
}

int cmd_sample_arch(const std::string& checkpoint_path,
                    const std::string& items_list, int repeats, bool greedy,
                    std::int64_t seed, bool dot) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  const std::vector<int> items = parse_int_list(items_list, "item");
  const auto names = default_variable_names(static_cast<int>(items.size()));
  Rng rng = make_rng(seed < 0 ? ckpt.config.seed : seed, 0x5A3C);
  for (int r = 0; r < repeats; ++r) {
    const SampleTrace trace = propose_architecture(
        ckpt.state.controller, items, ckpt.config.mode,
        greedy ? SampleStrategy::greedy : SampleStrategy::sample, rng);
    std::printf("%s\t%s\tlogp=%.6f\n", arch_key(trace.arch).c_str(),
                to_expression_string(trace.arch, names).c_str(),
                trace.total_log_prob);
    if (dot) std::printf("%s", to_dot(trace.arch, names).c_str());
  }
  return 0;
}

int cmd_sweep(RunOptions& opts, const std::string& lengths_list) {
  const std::vector<int> lengths = parse_int_list(lengths_list, "length");
  TrainConfig base = opts.load(true);
  InteractionTable full = load_bundle(opts.bundle);

  int max_len = 10;
  for (int n : lengths) {
    if (n < 1) throw Error::config("sweep lengths must be >= 1");
    max_len = std::max(max_len, n);
  }
  // The sweep control: keep only users long enough for every length, so
  // each run trains and evaluates on the same population.
  const std::size_t min_keep = static_cast<std::size_t>(max_len) + 2;
  InteractionTable filtered = filter_min_interactions(full, min_keep);

  const fs::path out_dir = resolve_output(opts.output_dir);
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "sweep.csv");
  if (!csv) throw Error::io("cannot write sweep.csv");
  csv << "length,users,N@5,N@10,HR@5,HR@10,minutes_per_epoch\n";

  std::set<std::string> reference_users;
  for (int n : lengths) {
    TrainConfig cfg = base;
    cfg.history_length = n;
    Trainer trainer(filtered, cfg);

    std::set<std::string> users;
    for (const auto& s : trainer.sequences().test)
      users.insert(filtered.vocab.user_name(s.user));
    if (reference_users.empty())
      reference_users = users;
    else if (users != reference_users)
      throw Error::domain("sweep: user populations differ across lengths");

    double train_seconds = 0.0;
    EpochLog last{};
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      last = trainer.run_epoch();
      train_seconds += last.wall_child_s + last.wall_controller_s;
    }
    EvalOptions eopts;
    eopts.seed = derive_seed(cfg.seed, 0xEA51);
    const MetricReport report =
        trainer.evaluate_split(trainer.sequences().test,
                               trainer.test_candidates(), eopts, cfg.strategy);
    const double min_per_epoch = train_seconds / 60.0 / cfg.epochs;
    csv << n << ',' << users.size() << ',' << fmt(report.values.at("N@5")) << ','
        << fmt(report.values.at("N@10")) << ',' << fmt(report.values.at("HR@5"))
        << ',' << fmt(report.values.at("HR@10")) << ','
        << fmt(min_per_epoch) << '\n';
    csv.flush();
    std::printf("length %d: HR@10 %.4f N@10 %.4f (%.2f min/epoch)\n", n,
                report.values.at("HR@10"), report.values.at("N@10"),
                min_per_epoch);
  }
  std::printf("sweep written to %s\n", (out_dir / "sweep.csv").string().c_str());
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Adaptive neural-architecture search over logic modules for "
               "sequential recommendation"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build a dataset bundle");
  std::string in_path, syn_path, out_bundle = "bundle.json";
  ingest->add_option("--input", in_path, "interaction log (user item rating ts)");
  ingest->add_option("--synthetic", syn_path, "synthetic dataset spec (JSON)");
  ingest->add_option("--output", out_bundle, "bundle output path");

  // train
  auto* train = app.add_subcommand("train", "run interleaved training");
  RunOptions train_opts;
  train_opts.attach(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, eval_bundle, split = "test", k_list = "5,10";
  std::string eval_csv = "metrics.csv", eval_json;
  bool multi20 = false, greedy = false;
  int runs = 20;
  eval->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();
  eval->add_option("--bundle", eval_bundle, "dataset bundle")->required();
  eval->add_option("--split", split, "valid | test");
  eval->add_flag("--multi20", multi20, "report avg/min/max/std over sampled runs");
  eval->add_option("--runs", runs, "sample count for --multi20");
  eval->add_flag("--greedy", greedy, "greedy architecture derivation");
  eval->add_option("--k", k_list, "metric cutoffs, comma separated");
  eval->add_option("--output", eval_csv, "metrics CSV path");
  eval->add_option("--json", eval_json, "optional JSON report path");

  // enumerate
  auto* enumerate = app.add_subcommand("enumerate", "search space tooling");
  int enum_n = 2;
  bool count_only = false, enum_dot = false;
  enumerate->add_option("--n", enum_n, "raw input count")->required();
  enumerate->add_flag("--count-only", count_only, "print the count only");
  enumerate->add_flag("--dot", enum_dot, "also print DOT per architecture");

  // sample-arch
  auto* sample = app.add_subcommand("sample-arch", "sample architectures");
  std::string sa_ckpt, sa_items;
  int sa_repeats = 1;
  bool sa_greedy = false, sa_dot = false;
  std::int64_t sa_seed = -1;
  sample->add_option("--checkpoint", sa_ckpt, "checkpoint path")->required();
  sample->add_option("--items", sa_items, "comma-separated item ids")->required();
  sample->add_option("--k", sa_repeats, "number of samples");
  sample->add_flag("--greedy", sa_greedy, "greedy selection");
  sample->add_option("--seed", sa_seed, "sampling seed");
  sample->add_flag("--dot", sa_dot, "print DOT per sample");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "sequence-length sweep");
  RunOptions sweep_opts;
  sweep_opts.attach(sweep);
  std::string lengths = "2,4,6,8,10";
  sweep->add_option("--lengths", lengths, "comma-separated lengths");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(in_path, syn_path, out_bundle);
    if (train->parsed()) return cmd_train(train_opts);
    if (eval->parsed())
      return cmd_eval(ckpt_path, eval_bundle, split, multi20, runs, greedy,
                      k_list, eval_csv, eval_json);
    if (enumerate->parsed()) return cmd_enumerate(enum_n, count_only, enum_dot);
    if (sample->parsed())
      return cmd_sample_arch(sa_ckpt, sa_items, sa_repeats, sa_greedy, sa_seed,
                             sa_dot);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, lengths);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == Error::Kind::config ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage;
  storage.push_back("manas");
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  argv.reserve(storage.size());
  for (const auto& s : storage) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace manas::cli
