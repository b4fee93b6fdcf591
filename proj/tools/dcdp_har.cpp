// dcdp_har: train, evaluate and ablate dual-path HAR models from the command line.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dcdp/checkpoint.hpp"
#include "dcdp/config.hpp"
#include "dcdp/data.hpp"
#include "dcdp/error.hpp"
#include "dcdp/gradcheck.hpp"
#include "dcdp/metrics.hpp"
#include "dcdp/ops.hpp"
#include "dcdp/trainer.hpp"

namespace fs = std::filesystem;
using namespace dcdp;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag -> apply_setting key; applied over the config file.
struct FlagSpec {
  const char* flag;
  const char* key;
  const char* help;
};

const FlagSpec kTrainFlags[]{
    {"--epochs", "epochs", "Training epochs (30)"},
    {"--batch-size", "batch_size", "Mini-batch size; the last partial batch is dropped (32)"},
    {"--lambda-align", "lambda_align", "Weight of the alignment term (0.7)"},
    {"--temperature", "temperature", "Contrastive temperature, > 0 (0.5)"},
    {"--alpha", "alpha", "Gradient modulation strength, >= 0 (0.9)"},
    {"--epsilon", "epsilon", "Confidence ratio stabilizer (1e-8)"},
    {"--optimizer", "optimizer", "adamw or momentum (adamw)"},
    {"--lr", "lr", "Learning rate (1e-3)"},
    {"--momentum", "momentum", "Momentum coefficient for --optimizer momentum (0.9)"},
    {"--weight-decay", "weight_decay", "Decoupled AdamW weight decay (0.01)"},
    {"--dpfe", "dpfe", "Dual-path feature extraction on|off (on)"},
    {"--cl", "cl", "Contrastive and alignment losses on|off (on)"},
    {"--cgm", "cgm", "Confidence-based gradient modulation on|off (on)"},
    {"--da", "da", "Data augmentation on|off (on)"},
    {"--modulate-backbone", "modulate_backbone", "Also scale encoder gradients by the modulation coefficient (off)"},
    {"--da-scale", "da_scale", "Augmentation amplitude scale range +/- (0.1)"},
    {"--da-jitter", "da_jitter", "Augmentation jitter std (0.01)"},
    {"--res-blocks", "res_blocks", "Residual blocks per stage, e.g. 2,2,2,2"},
    {"--res-width", "res_width", "Residual stage-1 width"},
    {"--dense-layers", "dense_layers", "Dense layers per stage, e.g. 2,2,2,2"},
    {"--dense-growth", "dense_growth", "Dense growth rate"},
    {"--dense-out", "dense_out", "Dense output width; 0 follows the residual width"},
    {"--d-proj", "d_proj", "Projection head width (32)"},
    {"--partition-first", "partition_first", "Channel indices of modality 1, e.g. 0,1,2,3,4,5"},
    {"--partition-second", "partition_second", "Channel indices of modality 2, e.g. 6,7,8"},
    {"--bn-decay", "bn_decay", "Batch-norm running statistics decay (0.9)"},
};

struct TrainFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App& app, bool seed_required) {
    app.add_option("--config", config_file, "Key-value config file; command-line flags override it")
        ->check(CLI::ExistingFile);
    for (const auto& f : kTrainFlags) app.add_option(f.flag, values[f.key], f.help);
    auto* s = app.add_option("--seed", seed, "Seed for initialization, shuffling and augmentation");
    if (seed_required) s->required();
  }

  TrainConfig resolve() const {
    TrainConfig cfg = config_file.empty() ? TrainConfig{} : load_config(config_file);
    for (const auto& [key, value] : values) {
      if (value.empty()) continue;
      try {
        apply_setting(cfg, key, value);
      } catch (const ParseError& e) {
        throw UsageError(e.what());
      }
    }
    if (seed) cfg.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

struct DataFlags {
  std::string cache;
  std::string csv;
  std::size_t window = 64;
  std::size_t stride = 32;
  std::string class_names;
  std::string label_column = "label";

  void attach(CLI::App& app) {
    auto* c = app.add_option("--data", cache, "Dataset cache written by 'synth' or 'train'");
    auto* v = app.add_option("--csv", csv, "Sensor CSV: channel columns, then the label column");
    c->excludes(v);
    app.add_option("--window", window, "Window length for --csv")->capture_default_str();
    app.add_option("--stride", stride, "Window stride for --csv")->capture_default_str();
    app.add_option("--class-names", class_names, "Comma-separated label names for --csv (default: integer labels)");
    app.add_option("--label-column", label_column, "Label column name for --csv")->capture_default_str();
  }

  WindowedDataset load() const {
    if (!cache.empty()) return load_dataset(fs::path(cache));
    if (csv.empty()) throw UsageError("one of --data or --csv is required");
    CsvSchema schema;
    schema.label_column = label_column;
    std::stringstream ss(class_names);
    for (std::string name; std::getline(ss, name, ',');)
      if (!name.empty()) schema.class_names.push_back(name);
    WindowedDataset d = sliding_windows(load_csv(fs::path(csv), schema), window, stride);
    if (d.size() == 0) throw SchemaError("no windows could be cut from " + csv);
    return d;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
}

void write_evaluation(const fs::path& dir, const Evaluation& ev) {
  nlohmann::json j = nlohmann::json::parse(metrics_to_json(ev.report));
  j["res_accuracy"] = ev.res_accuracy;
  j["dense_accuracy"] = ev.dense_accuracy;
  write_text(dir / "metrics.json", j.dump(2) + "\n");
  std::ofstream cm(dir / "confusion.csv");
  if (!cm) throw IoError("cannot write " + (dir / "confusion.csv").string());
  ev.confusion.write_csv(cm);
}

void print_evaluation(const Evaluation& ev) {
  std::cout << metrics_summary(ev.report);
  std::printf("branch accuracy: res %.4f  dense %.4f\n", ev.res_accuracy, ev.dense_accuracy);
}

// ---------------------------------------------------------------- subcommands

int run_train(const TrainFlags& tf, const DataFlags& df, double test_fraction, std::optional<std::uint64_t> split_seed,
              const std::string& out_dir, bool quiet) {
  const TrainConfig cfg = tf.resolve();
  const WindowedDataset all = df.load();
  auto [train_raw, test_raw] = stratified_split(all, test_fraction, split_seed.value_or(cfg.seed));
  const NormalizationStats stats = fit_normalizer(train_raw);
  const WindowedDataset train_data = apply_normalizer(train_raw, stats);
  const WindowedDataset test_data = apply_normalizer(test_raw, stats);

  const fs::path out(out_dir);
  fs::create_directories(out);
  write_text(out / "config.txt", config_to_text(cfg));
  save_dataset(test_data, out / "test.cache");

  std::ofstream log(out / "train_log.jsonl");
  if (!log) throw IoError("cannot write " + (out / "train_log.jsonl").string());
  Trainer trainer = Trainer::for_dataset(cfg, train_data);
  TrainOptions opts;
  opts.sink = [&](const BatchRecord& r) { log << to_json_line(r) << '\n'; };
  opts.on_epoch = [&](const EpochLog& e) {
    if (quiet) return;
    std::fprintf(stderr, "epoch %3zu  loss %.4f  cls %.4f/%.4f/%.4f  contrast %.4f  align %.4f  m_res %.3f  m_dense %.3f\n",
                 e.epoch + 1, e.mean_loss.total, e.mean_loss.cls_res, e.mean_loss.cls_dense, e.mean_loss.cls_fusion,
                 e.mean_loss.contrast, e.mean_loss.align, e.mean_m_res, e.mean_m_dense);
  };
  if (!quiet) {
    std::fprintf(stderr, "train %zu / test %zu windows, %zu parameters, switches %s\n", train_data.size(),
                 test_data.size(), trainer.network().parameter_count(), cfg.switches.label().c_str());
  }
  train(trainer, train_data, opts);
  save_checkpoint(trainer.network(), out / "model.ckpt");

  const Evaluation ev = evaluate(trainer.network(), test_data);
  write_evaluation(out, ev);
  print_evaluation(ev);
  std::printf("outputs written to %s\n", out.string().c_str());
  return kOk;
}

int run_eval(const std::string& model, const DataFlags& df, const std::string& normalize_from,
             const std::string& out_dir) {
  DualPathNetwork net = load_checkpoint(fs::path(model));
  WindowedDataset data = df.load();
  if (!normalize_from.empty()) {
    const WindowedDataset ref = load_dataset(fs::path(normalize_from));
    if (!ref.normalization) throw SchemaError(normalize_from + " carries no normalization statistics");
    data = apply_normalizer(data, *ref.normalization);
  }
  if (data.channels() != net.config().partition.total_channels || data.classes > net.config().classes) {
    throw SchemaError("dataset has " + std::to_string(data.channels()) + " channels / " + std::to_string(data.classes) +
                      " classes; model expects " + std::to_string(net.config().partition.total_channels) + " / " +
                      std::to_string(net.config().classes));
  }
  const Evaluation ev = evaluate(net, data);
  print_evaluation(ev);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_evaluation(out_dir, ev);
  }
  return kOk;
}

int run_ablate(const TrainFlags& tf, const DataFlags& df, double test_fraction, std::size_t seed_count,
               const std::string& grid_name, const std::string& out_dir) {
  const TrainConfig cfg = tf.resolve();
  std::vector<AblationVariant> grid;
  if (grid_name == "loo") grid = leave_one_out_grid();
  else if (grid_name == "full") grid = full_grid();
  else throw UsageError("--grid must be 'loo' or 'full'");

  const WindowedDataset all = df.load();
  auto [train_raw, test_raw] = stratified_split(all, test_fraction, cfg.seed);
  const NormalizationStats stats = fit_normalizer(train_raw);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < seed_count; ++i) seeds.push_back(cfg.seed + i);

  const AblationReport report =
      run_ablation(cfg, grid, apply_normalizer(train_raw, stats), apply_normalizer(test_raw, stats), seeds);
  std::cout << report.table();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "ablation.json", report.to_json() + "\n");
    write_text(fs::path(out_dir) / "ablation.txt", report.table());
  }
  return kOk;
}

int run_synth(const SynthConfig& sc, const std::string& out) {
  sc.validate();
  const WindowedDataset d = synth_generate(sc);
  save_dataset(d, fs::path(out));
  std::printf("%zu windows [%zu x %zu], %zu classes, dominance %.2f, noise %.2f -> %s\n", d.size(), d.window_len,
              d.channels(), d.classes, sc.dominance, sc.noise_std, out.c_str());
  return kOk;
}

struct GradcheckFlags {
  std::uint64_t seed = 0;
  std::size_t batch = 4;
  std::size_t window = 16;
  std::size_t channels = 4;
  std::size_t classes = 3;
  std::size_t width = 4;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_draws = 200;
  bool verbose = false;
};

int run_gradcheck(const GradcheckFlags& g) {
  ModelConfig cfg;
  cfg.res.blocks_per_stage = {1, 1, 1, 1};
  cfg.res.base_width = g.width;
  cfg.dense.layers_per_stage = {1, 1, 1, 1};
  cfg.dense.growth_rate = g.width;
  cfg.d_proj = 2 * g.width;
  cfg.classes = g.classes;
  cfg.partition = ChannelPartition::contiguous(g.channels, g.channels / 2);
  cfg.validate();
  DualPathNetwork net(cfg, g.seed);

  std::vector<int> labels(g.batch);
  for (std::size_t i = 0; i < g.batch; ++i) labels[i] = static_cast<int>(i % g.classes);
  Tensor x({g.batch, g.window, g.channels});
  const TrainConfig defaults;
  const LossBuilder build = [&](Tape& tape) {
    return build_loss(tape, net.forward(tape, x, Mode::kTrain), labels, defaults.lambda_align, defaults.temperature)
        .total;
  };

  // First input draw with every ReLU input at least 100 steps from zero.
  double margin = 0.0;
  std::size_t draw = 0;
  for (; draw < g.max_draws; ++draw) {
    std::mt19937_64 rng(g.seed + draw);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : x.storage()) v = u(rng);
    ops::ReluMarginProbe probe;
    Tape tape;
    build(tape);
    margin = probe.min_abs_input();
    if (margin >= 100 * g.step) break;
  }
  if (draw == g.max_draws) draw = g.max_draws - 1;
  std::vector<Parameter*> params = net.parameters();
  GradCheckOptions opts;
  opts.perturbation = g.step;
  opts.tolerance = g.tolerance;
  const GradCheckReport report = finite_diff_check(build, params, opts);

  for (const auto& e : report.entries) {
    if (!g.verbose && !e.flagged) continue;
    std::printf("%-42s %6zu  max rel %.3e  analytic %+.6e  numeric %+.6e%s\n", e.id.c_str(), e.elements,
                e.max_rel_error, e.analytic_at_worst, e.numeric_at_worst, e.flagged ? "  FLAGGED" : "");
  }
  std::printf("%zu tensors, max relative error %.3e (tolerance %.1e), input draw %zu, closest ReLU input %.2e%s\n",
              report.entries.size(), report.max_rel_error, report.tolerance, draw, margin,
              margin < 100 * g.step ? " (within reach of the step: kink crossings possible)" : "");
  return report.passed() ? kOk : kNumerical;
}

int run_report(const std::string& log_path, const std::string& metrics_path, const std::string& ablation_path) {
  if (log_path.empty() && metrics_path.empty() && ablation_path.empty())
    throw UsageError("give --log, --metrics or --ablation");
  if (!log_path.empty()) {
    std::ifstream is(log_path);
    if (!is) throw IoError("cannot open " + log_path);
    struct Acc {
      std::size_t n = 0;
      double total = 0, contrast = 0, align = 0, m_res = 0, m_dense = 0;
      std::size_t suppressed_res = 0, suppressed_dense = 0;
    };
    std::map<std::size_t, Acc> epochs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what(), line_no);
      }
      Acc& a = epochs[j.at("epoch").get<std::size_t>()];
      ++a.n;
      a.total += j.at("total").get<double>();
      a.contrast += j.value("contrast", 0.0);
      a.align += j.value("align", 0.0);
      const double mr = j.value("m_res", 1.0), md = j.value("m_dense", 1.0);
      a.m_res += mr;
      a.m_dense += md;
      a.suppressed_res += mr < 1.0;
      a.suppressed_dense += md < 1.0;
    }
    std::printf("epoch  batches  loss      contrast  align     m_res   m_dense  res<1  dense<1\n");
    for (const auto& [e, a] : epochs) {
      const double n = static_cast<double>(a.n);
      std::printf("%5zu  %7zu  %-8.4f  %-8.4f  %-8.4f  %.4f  %.4f   %5zu  %7zu\n", e + 1, a.n, a.total / n,
                  a.contrast / n, a.align / n, a.m_res / n, a.m_dense / n, a.suppressed_res, a.suppressed_dense);
    }
  }
  if (!metrics_path.empty()) {
    std::ifstream is(metrics_path);
    if (!is) throw IoError("cannot open " + metrics_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), 0);
    }
    std::printf("accuracy     %.4f\n", j.at("accuracy").get<double>());
    for (const char* k : {"precision_macro", "recall_macro", "f1_macro", "precision_weighted", "recall_weighted",
                          "f1_weighted", "res_accuracy", "dense_accuracy"})
      if (j.contains(k)) std::printf("%-18s %.4f\n", k, j.at(k).get<double>());
  }
  if (!ablation_path.empty()) {
    std::ifstream is(ablation_path);
    if (!is) throw IoError("cannot open " + ablation_path);
    const nlohmann::json rows = nlohmann::json::parse(is, nullptr, false);
    if (rows.is_discarded() || !rows.is_array()) throw ParseError("ablation report is not a JSON array", 0);
    std::printf("%-20s ACC(%%)  F1      dense   res\n", "Method");
    for (const auto& r : rows) {
      const auto& m = r.at("median");
      std::printf("%-20s %6.2f  %.4f  %.4f  %.4f\n", r.at("name").get<std::string>().c_str(),
                  100.0 * m.at("accuracy").get<double>(), m.at("f1").get<double>(),
                  m.at("dense_accuracy").get<double>(), m.at("res_accuracy").get<double>());
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-path contrastive HAR training engine"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "Train on a dataset, evaluate on a held-out split");
  TrainFlags train_flags;
  DataFlags train_data;
  double test_fraction = 0.2;
  std::optional<std::uint64_t> split_seed;
  std::string train_out = "run";
  bool quiet = false;
  train_flags.attach(*train_cmd, true);
  train_data.attach(*train_cmd);
  train_cmd->add_option("--test-fraction", test_fraction, "Held-out share per class")->capture_default_str();
  train_cmd->add_option("--split-seed", split_seed, "Seed of the train/test split (default: --seed)");
  train_cmd->add_option("--out", train_out, "Output directory")->capture_default_str();
  train_cmd->add_flag("--quiet", quiet, "No per-epoch progress on stderr");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string model, normalize_from, eval_out;
  DataFlags eval_data;
  eval_cmd->add_option("--model", model, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_data.attach(*eval_cmd);
  eval_cmd->add_option("--normalize-from", normalize_from, "Dataset cache whose normalization statistics to apply");
  eval_cmd->add_option("--out", eval_out, "Directory for metrics.json and confusion.csv");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train every switch combination of a grid over several seeds");
  TrainFlags ablate_flags;
  DataFlags ablate_data;
  double ablate_fraction = 0.2;
  std::size_t seed_count = 3;
  std::string grid = "loo", ablate_out;
  ablate_flags.attach(*ablate_cmd, true);
  ablate_data.attach(*ablate_cmd);
  ablate_cmd->add_option("--test-fraction", ablate_fraction, "Held-out share per class")->capture_default_str();
  ablate_cmd->add_option("--seeds", seed_count, "Number of consecutive seeds starting at --seed")
      ->capture_default_str();
  ablate_cmd->add_option("--grid", grid, "loo (full and each single component removed) or full")
      ->capture_default_str();
  ablate_cmd->add_option("--out", ablate_out, "Directory for ablation.json and ablation.txt");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic two-modality dataset cache");
  SynthConfig sc;
  std::string synth_out;
  synth_cmd->add_option("--classes", sc.classes)->capture_default_str();
  synth_cmd->add_option("--m1", sc.modality1_channels, "Channels of modality 1")->capture_default_str();
  synth_cmd->add_option("--m2", sc.modality2_channels, "Channels of modality 2")->capture_default_str();
  synth_cmd->add_option("--window", sc.window_len)->capture_default_str();
  synth_cmd->add_option("--samples-per-class", sc.samples_per_class)->capture_default_str();
  synth_cmd->add_option("--dominance", sc.dominance, "Share of class signal carried by modality 1")
      ->capture_default_str();
  synth_cmd->add_option("--noise", sc.noise_std, "Gaussian noise std")->capture_default_str();
  synth_cmd->add_option("--seed", sc.seed)->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output cache file")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a miniature network");
  GradcheckFlags gf;
  grad_cmd->add_option("--seed", gf.seed)->capture_default_str();
  grad_cmd->add_option("--batch", gf.batch)->capture_default_str();
  grad_cmd->add_option("--window", gf.window)->capture_default_str();
  grad_cmd->add_option("--channels", gf.channels)->capture_default_str();
  grad_cmd->add_option("--classes", gf.classes)->capture_default_str();
  grad_cmd->add_option("--width", gf.width, "Residual base width and dense growth rate")->capture_default_str();
  grad_cmd->add_option("--step", gf.step)->capture_default_str();
  grad_cmd->add_option("--tolerance", gf.tolerance)->capture_default_str();
  grad_cmd->add_option("--max-draws", gf.max_draws, "Input draws tried in search of one away from ReLU kinks")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  grad_cmd->add_flag("--verbose", gf.verbose, "List every tensor, not only flagged ones");

  auto* report_cmd = app.add_subcommand("report", "Summarize a training log, metrics file or ablation report");
  std::string log_path, metrics_path, ablation_path;
  report_cmd->add_option("--log", log_path, "train_log.jsonl");
  report_cmd->add_option("--metrics", metrics_path, "metrics.json");
  report_cmd->add_option("--ablation", ablation_path, "ablation.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(train_flags, train_data, test_fraction, split_seed, train_out, quiet);
    if (*eval_cmd) return run_eval(model, eval_data, normalize_from, eval_out);
    if (*ablate_cmd) return run_ablate(ablate_flags, ablate_data, ablate_fraction, seed_count, grid, ablate_out);
    if (*synth_cmd) return run_synth(sc, synth_out);
    if (*grad_cmd) return run_gradcheck(gf);
    if (*report_cmd) return run_report(log_path, metrics_path, ablation_path);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kData;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
