// Command-line driver: ingest | synth | pretrain | evaluate | ablate | sweep-k.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "evp/checkpoint.hpp"
#include "evp/downstream.hpp"
#include "evp/plot.hpp"
#include "evp/pretraining.hpp"
#include "evp/synthetic.hpp"
#include "evp/temporal_graph.hpp"

namespace fs = std::filesystem;
using namespace evp;

namespace {

struct DataOptions {
  std::string data;
  std::string synth_config;
};

struct EvalOptions {
  std::string checkpoint;
  std::string kind = "link_transductive";
  std::string variant = "full";
  std::optional<std::size_t> k;
  double tau = 0.2;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::size_t tasks = 100;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::uint64_t root_seed = 0;
  std::size_t support = 30;
  std::size_t max_test = 0;
  std::size_t workers = 1;
  std::string mode = "elementwise";
  std::string loss_form = "ratio";
  bool train_head = false;
  std::string out = ".";
};

struct Dataset {
  TemporalGraph graph;
  std::string name;
};

Dataset load_dataset(const DataOptions& opt) {
  if (!opt.data.empty() && !opt.synth_config.empty()) throw ConfigError("give either --data or --synth-config, not both");
  if (!opt.data.empty()) return {load_jodie_csv(opt.data), fs::path(opt.data).stem().string()};
  if (!opt.synth_config.empty()) {
    return {generate(load_synth_config(opt.synth_config)).graph, fs::path(opt.synth_config).stem().string()};
  }
  throw ConfigError("a dataset is required: pass --data or --synth-config");
}

void add_data_options(CLI::App* cmd, DataOptions& opt) {
  cmd->add_option("--data", opt.data, "JODIE-format CSV file");
  cmd->add_option("--synth-config", opt.synth_config, "Synthetic graph config (key = value lines)");
}

void add_eval_options(CLI::App* cmd, EvalOptions& opt) {
  cmd->add_option("--checkpoint", opt.checkpoint, "Pre-trained checkpoint")->required();
  cmd->add_option("--kind", opt.kind, "link_transductive | link_inductive | node_class");
  cmd->add_option("--k", opt.k, "Number of extracted events (default 9 for links, 3 for nodes)");
  cmd->add_option("--tau", opt.tau, "Tuning temperature");
  cmd->add_option("--lr", opt.lr, "Tuning learning rate");
  cmd->add_option("--epochs", opt.epochs, "Tuning steps per task");
  cmd->add_option("--tasks", opt.tasks, "Tasks per seed");
  cmd->add_option("--seeds", opt.seeds, "Comma-separated seeds")->delimiter(',');
  cmd->add_option("--root-seed", opt.root_seed, "Root seed for task sampling");
  cmd->add_option("--support", opt.support, "Support events per task");
  cmd->add_option("--max-test", opt.max_test, "Cap on test instances (0 = all)");
  cmd->add_option("--workers", opt.workers, "Worker threads");
  cmd->add_option("--mode", opt.mode, "elementwise | conditional");
  cmd->add_option("--loss-form", opt.loss_form, "ratio | softmax");
  cmd->add_flag("--train-head", opt.train_head, "Also tune the output scale");
  cmd->add_option("--out", opt.out, "Output directory");
}

ProtocolConfig protocol_config(const EvalOptions& opt, const std::string& dataset) {
  ProtocolConfig cfg;
  cfg.kind = task_kind_from_string(opt.kind);
  cfg.variant = opt.variant;
  cfg.dataset = dataset;
  cfg.tuning.tau = opt.tau;
  cfg.tuning.lr = opt.lr;
  cfg.tuning.epochs = opt.epochs;
  cfg.tuning.k = opt.k.value_or(default_k(cfg.kind));
  cfg.tuning.loss_form = link_loss_form_from_string(opt.loss_form);
  cfg.tuning.mode = adaptation_mode_from_string(opt.mode);
  cfg.tuning.train_head = opt.train_head;
  cfg.n_tasks = opt.tasks;
  cfg.seeds = opt.seeds;
  cfg.root_seed = opt.root_seed;
  cfg.support_size = opt.support;
  cfg.max_test = opt.max_test;
  cfg.workers = opt.workers;
  if (cfg.seeds.empty()) throw ConfigError("--seeds must not be empty");
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

std::string report_stem(const Report& r) { return "report_" + r.setting + "_" + r.variant + "_K" + std::to_string(r.k); }

void write_report(const Report& r, const fs::path& dir) {
  write_text(dir / (report_stem(r) + ".json"), r.to_json().dump(2) + "\n");
  write_text(dir / (report_stem(r) + ".csv"), r.to_csv());
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << x;
  return s.str();
}

int cmd_ingest(const DataOptions& opt) {
  const Dataset ds = load_dataset(opt);
  const TemporalGraph& g = ds.graph;
  std::cout << g.num_nodes() << " nodes, " << g.num_events() << " edges, " << g.label_classes().size()
            << " classes, dim " << g.feature_dim() << "\n";
  std::cout << "users " << g.num_users() << ", items " << g.num_nodes() - g.num_users() << ", time span ["
            << g.t_min() << ", " << g.t_max() << "]\n";
  return 0;
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  const SynthConfig cfg = config_path.empty() ? SynthConfig{} : load_synth_config(config_path);
  const SyntheticGraph s = generate(cfg);
  std::ostringstream csv;
  write_jodie_csv(s.graph, csv);
  write_text(out, csv.str());
  std::cout << "wrote " << out << ": " << s.graph.num_events() << " events (" << s.num_signal << " periodic, "
            << s.num_noise << " noise), " << s.graph.num_nodes() << " nodes\n";
  return 0;
}

struct PretrainOptions {
  std::string checkpoint;
  std::size_t epochs = 10;
  std::size_t batch = 200;
  std::size_t micro_batch = 25;
  double lr = 1e-4;
  double tau = 0.2;
  std::uint64_t seed = 0;
  std::size_t hidden = 172;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t neighbors = 20;
  std::optional<double> time_unit;
  bool learnable_time = false;
  std::string loss_form = "ratio";
};

int cmd_pretrain(const DataOptions& data, const PretrainOptions& opt) {
  const Dataset ds = load_dataset(data);
  const ChronoSplits splits = chronological_split(ds.graph);
  EncoderConfig ec;
  ec.input_dim = ds.graph.feature_dim();
  ec.hidden_dim = opt.hidden;
  ec.num_layers = opt.layers;
  ec.num_heads = opt.heads;
  ec.neighbor_budget = opt.neighbors;
  ec.learnable_time = opt.learnable_time;
  ec.time_unit = opt.time_unit.value_or(mean_node_gap(ds.graph, splits.pretrain));
  ec.seed = opt.seed;
  PretrainConfig pc;
  pc.epochs = opt.epochs;
  pc.batch_size = opt.batch;
  pc.micro_batch = opt.micro_batch;
  pc.lr = opt.lr;
  pc.tau = opt.tau;
  pc.seed = opt.seed;
  pc.loss_form = link_loss_form_from_string(opt.loss_form);

  const PretrainResult r = pretrain(ds.graph, splits, EncoderParams::init(ec), pc,
                                    [](std::size_t epoch, double loss, double val) {
                                      std::cerr << "epoch " << epoch << " loss " << fixed(loss, 6) << " val "
                                                << fixed(val, 6) << "\n";
                                    });
  const fs::path ckpt(opt.checkpoint);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  save_checkpoint({r.params, std::nullopt}, ckpt);
  std::ostringstream curve;
  curve.precision(17);
  curve << "epoch,loss,val_loss\n";
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) curve << e << ',' << r.epoch_loss[e] << ',' << r.val_loss[e] << '\n';
  fs::path curve_path = ckpt;
  curve_path += ".loss.csv";
  write_text(curve_path, curve.str());
  std::cout << "checkpoint " << ckpt.string() << " checksum " << std::hex << r.params.checksum() << std::dec
            << " time_unit " << ec.time_unit << "\n";
  return 0;
}

int cmd_evaluate(const DataOptions& data, const EvalOptions& opt) {
  const Dataset ds = load_dataset(data);
  const ChronoSplits splits = chronological_split(ds.graph);
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  const Report r = run_protocol(ds.graph, splits, ckpt.encoder, protocol_config(opt, ds.name));
  write_report(r, opt.out);
  std::cout << r.setting << " " << r.variant << " K=" << r.k << ": AUC " << fixed(r.mean) << " +- " << fixed(r.std)
            << " over " << r.per_task.size() << " runs\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  return 0;
}

int cmd_ablate(const DataOptions& data, EvalOptions opt) {
  const Dataset ds = load_dataset(data);
  const ChronoSplits splits = chronological_split(ds.graph);
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  std::ostringstream table;
  table << "variant,mean,std\n";
  table.precision(17);
  for (const std::string& v : ablation_variants()) {
    opt.variant = v;
    const Report r = run_protocol(ds.graph, splits, ckpt.encoder, protocol_config(opt, ds.name));
    write_report(r, opt.out);
    table << v << ',' << r.mean << ',' << r.std << '\n';
    std::cout << std::left << std::setw(5) << v << " AUC " << fixed(r.mean) << " +- " << fixed(r.std) << "\n";
  }
  write_text(fs::path(opt.out) / ("ablation_" + opt.kind + ".csv"), table.str());
  return 0;
}

int cmd_sweep_k(const DataOptions& data, EvalOptions opt, const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw ConfigError("--ks must not be empty");
  const Dataset ds = load_dataset(data);
  const ChronoSplits splits = chronological_split(ds.graph);
  const Checkpoint ckpt = load_checkpoint(opt.checkpoint);
  std::ostringstream table;
  table << "K,mean,std\n";
  table.precision(17);
  Series series{opt.variant, {}, {}, {}};
  for (std::size_t k : ks) {
    opt.k = k;
    const Report r = run_protocol(ds.graph, splits, ckpt.encoder, protocol_config(opt, ds.name));
    write_report(r, opt.out);
    table << k << ',' << r.mean << ',' << r.std << '\n';
    series.x.push_back(static_cast<double>(k));
    series.y.push_back(r.mean);
    series.err.push_back(r.std);
    std::cout << "K=" << k << " AUC " << fixed(r.mean) << " +- " << fixed(r.std) << "\n";
  }
  const std::string stem = "sweep_k_" + opt.kind;
  write_text(fs::path(opt.out) / (stem + ".csv"), table.str());
  write_text(fs::path(opt.out) / (stem + ".svg"),
             line_plot_svg({series}, {ds.name + " " + opt.kind, "K", "AUC-ROC"}));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-aware prompting for dynamic graphs"};
  app.set_config("--config", "", "Flat key = value config file; flags override it");
  app.require_subcommand(1);

  DataOptions data;
  EvalOptions eval;
  PretrainOptions pre;
  std::string synth_out = "synthetic.csv";
  std::vector<std::size_t> ks = {1, 3, 5, 7, 9, 11};

  auto* ingest = app.add_subcommand("ingest", "Load a dataset and print its statistics");
  add_data_options(ingest, data);

  auto* synth = app.add_subcommand("synth", "Generate a planted-pattern graph as JODIE CSV");
  synth->add_option("--synth-config", data.synth_config, "Synthetic graph config");
  synth->add_option("--out", synth_out, "Output CSV path");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pre-train the encoder on the first 80% of events");
  add_data_options(pretrain_cmd, data);
  pretrain_cmd->add_option("--checkpoint", pre.checkpoint, "Output checkpoint path")->required();
  pretrain_cmd->add_option("--epochs", pre.epochs, "Training epochs");
  pretrain_cmd->add_option("--batch", pre.batch, "Events per optimizer step");
  pretrain_cmd->add_option("--micro-batch", pre.micro_batch, "Events per recorded tape");
  pretrain_cmd->add_option("--lr", pre.lr, "Learning rate");
  pretrain_cmd->add_option("--tau", pre.tau, "Temperature");
  pretrain_cmd->add_option("--seed", pre.seed, "Seed");
  pretrain_cmd->add_option("--hidden", pre.hidden, "Embedding dimension");
  pretrain_cmd->add_option("--layers", pre.layers, "Attention layers");
  pretrain_cmd->add_option("--heads", pre.heads, "Attention heads");
  pretrain_cmd->add_option("--neighbors", pre.neighbors, "Sampled neighbors per node");
  pretrain_cmd->add_option("--time-unit", pre.time_unit, "Time normalization (default: mean per-node gap)");
  pretrain_cmd->add_flag("--learnable-time", pre.learnable_time, "Train the time-encoding frequencies");
  pretrain_cmd->add_option("--loss-form", pre.loss_form, "ratio | softmax");

  auto* evaluate = app.add_subcommand("evaluate", "Tune prompts and score few-shot tasks");
  add_data_options(evaluate, data);
  add_eval_options(evaluate, eval);
  evaluate->add_option("--variant", eval.variant, "full | EP | DP | TD | off | none");

  auto* ablate = app.add_subcommand("ablate", "Compare full, EP, DP, TD and none");
  add_data_options(ablate, data);
  add_eval_options(ablate, eval);

  auto* sweep = app.add_subcommand("sweep-k", "Evaluate a list of K values and plot the curve");
  add_data_options(sweep, data);
  add_eval_options(sweep, eval);
  sweep->add_option("--variant", eval.variant, "Variant to sweep");
  sweep->add_option("--ks", ks, "Comma-separated K values")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*ingest) return cmd_ingest(data);
    if (*synth) return cmd_synth(data.synth_config, synth_out);
    if (*pretrain_cmd) return cmd_pretrain(data, pre);
    if (*evaluate) return cmd_evaluate(data, eval);
    if (*ablate) return cmd_ablate(data, eval);
    if (*sweep) return cmd_sweep_k(data, eval, ks);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
