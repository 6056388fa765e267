#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gain/checkpoint.hpp"
#include "gain/config.hpp"
#include "gain/convert.hpp"
#include "gain/io.hpp"
#include "gain/trainer.hpp"

namespace gain::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Flags that override the config file. Unset optionals leave the value
/// from the file (or the default) untouched.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> heuristic;
  std::optional<double> epsilon;
  std::optional<std::string> sample_sizes;
  std::optional<std::string> layer_dims;
  std::optional<std::string> aggregators;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> workers;
  std::optional<std::string> task;
  bool no_cross = false;
  bool no_autoencoder = false;
};

void add_override_flags(CLI::App& app, Overrides& o) {
  app.add_option("--seed", o.seed, "Run seed; every random stream derives from it");
  app.add_option("--heuristic", o.heuristic, "Neighbor scoring: jaccard, cn, degree or uniform");
  app.add_option("--epsilon", o.epsilon, "Additive smoothing of neighbor scores");
  app.add_option("--sample-sizes", o.sample_sizes, "Per-hop sample caps, e.g. 25,10");
  app.add_option("--layer-dims", o.layer_dims, "Per-layer widths d_k, e.g. 64,32");
  app.add_option("--aggregators", o.aggregators, "Comma list of mean, max, importance");
  app.add_option("--lambda1", o.lambda1, "Weight of the graph regularization term");
  app.add_option("--lambda2", o.lambda2, "Weight of the reconstruction term");
  app.add_option("--lr", o.lr, "Initial learning rate");
  app.add_option("--epochs", o.epochs, "Maximum number of epochs");
  app.add_option("--batch-size", o.batch_size, "Minibatch size (0: task default)");
  app.add_option("--patience", o.patience, "Epochs without improvement before stopping");
  app.add_option("--workers", o.workers, "Data-parallel workers per step");
  app.add_option("--task", o.task, "multiclass, multilabel or edge_binary (default: inferred)");
  app.add_flag("--no-cross", o.no_cross, "Disable the explicit cross interaction");
  app.add_flag("--no-autoencoder", o.no_autoencoder, "Disable the autoencoder");
}

TrainConfig resolve_config(const std::string& config_path, const Overrides& o) {
  TrainConfig c;
  if (!config_path.empty()) c = apply_config(read_json_file(config_path), c);
  json j = json::object();
  if (o.seed) j["seed"] = *o.seed;
  if (o.heuristic) j["heuristic"] = *o.heuristic;
  if (o.epsilon) j["epsilon"] = *o.epsilon;
  if (o.sample_sizes) j["sample_sizes"] = parse_size_list(*o.sample_sizes);
  if (o.layer_dims) j["layer_dims"] = parse_size_list(*o.layer_dims);
  if (o.aggregators) {
    json names = json::array();
    for (auto a : parse_aggregator_list(*o.aggregators)) names.push_back(to_string(a));
    j["aggregators"] = names;
  }
  if (o.lambda1) j["lambda1"] = *o.lambda1;
  if (o.lambda2) j["lambda2"] = *o.lambda2;
  if (o.lr) {
    j["learning_rate"] = *o.lr;
    if (c.lr_floor > *o.lr) j["lr_floor"] = *o.lr;
  }
  if (o.epochs) j["epochs"] = *o.epochs;
  if (o.batch_size) j["batch_size"] = *o.batch_size;
  if (o.patience) j["patience"] = *o.patience;
  if (o.workers) j["workers"] = *o.workers;
  if (o.task) j["task"] = *o.task;
  if (o.no_cross) j["use_cross"] = false;
  if (o.no_autoencoder) j["use_autoencoder"] = false;
  c = apply_config(j, c);
  c.validate();
  return c;
}

Graph load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
  LoadOptions opts;
  return load_graph(dataset_files(dir), opts);
}

json metrics_json(const Metrics& m) { return m.to_json(); }

struct LoadedModel {
  GainModel model;
  TrainConfig train;
  json metadata;
};

LoadedModel load_model(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.metadata.contains("model") || !ck.metadata.contains("train")) {
    throw DataError(path + ": checkpoint metadata lacks the model or train section");
  }
  ModelConfig mc;
  TrainConfig tc;
  try {
    mc = model_config_from_json(ck.metadata["model"]);
    tc = apply_config(ck.metadata["train"]);
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return {GainModel(mc, std::move(ck.params)), tc, ck.metadata};
}

EvalOptions eval_options_for(const LoadedModel& m) {
  EvalOptions eo;
  eo.sampler = m.train.sampler_config();
  eo.seed = m.metadata.value("eval_seed", m.train.seed);
  eo.draw = m.metadata.value("eval_draw", std::uint64_t{0});
  eo.batch_size = m.metadata.value("eval_batch_size", m.train.effective_batch_size(m.model.config().task));
  return eo;
}

std::vector<NodeId> read_node_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open node list " + path);
  std::vector<NodeId> nodes;
  long long v;
  while (in >> v) {
    if (v < 0) throw DataError(path + ": negative node id");
    nodes.push_back(static_cast<NodeId>(v));
  }
  if (!in.eof()) throw DataError(path + ": expected whitespace-separated node ids");
  return nodes;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Inductive graph neural network with attention over aggregators"};
  app.require_subcommand(1);
  std::string command;

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model and report test metrics");
  std::string config_path, data_dir, out_dir = "gain-out";
  std::size_t seeds = 1;
  bool dry_run = false;
  Overrides ov;
  train_cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", data_dir, "Dataset directory (canonical files)");
  train_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  train_cmd->add_option("--seeds", seeds, "Number of consecutive seeds to train (mean and std reported)");
  train_cmd->add_flag("--dry-run", dry_run, "Print the resolved configuration and exit");
  add_override_flags(*train_cmd, ov);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a split");
  std::string ckpt_path, split_name = "test";
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  eval_cmd->add_option("--split", split_name, "train, val or test")->capture_default_str();

  // embed
  auto* embed_cmd = app.add_subcommand("embed", "Write node embeddings in the binary feature format");
  std::string nodes_path, embed_out = "embeddings.bin";
  embed_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  embed_cmd->add_option("--data", data_dir, "Dataset directory (may be an unseen graph)")->required();
  embed_cmd->add_option("--nodes", nodes_path, "File of node ids (default: every node)");
  embed_cmd->add_option("--out", embed_out, "Output file")->capture_default_str();

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Dump the sampled minibatch of some nodes as JSON");
  std::vector<NodeId> sample_nodes;
  std::size_t hops = 0;
  Overrides sample_ov;
  sample_cmd->add_option("--data", data_dir, "Dataset directory")->required();
  sample_cmd->add_option("--node", sample_nodes, "Target node (repeatable)")->required();
  sample_cmd->add_option("--hops", hops, "Number of hops (default: length of the sample sizes)");
  sample_cmd->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  sample_cmd->add_option("--seed", sample_ov.seed, "Sampling seed");
  sample_cmd->add_option("--heuristic", sample_ov.heuristic, "jaccard, cn, degree or uniform");
  sample_cmd->add_option("--epsilon", sample_ov.epsilon, "Additive smoothing of neighbor scores");
  sample_cmd->add_option("--sample-sizes", sample_ov.sample_sizes, "Per-hop caps, e.g. 25,10");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a stochastic block model dataset");
  SyntheticSpec spec;
  std::string blocks = "100,100,100,100,100";
  std::uint64_t synth_seed = 0;
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();
  synth_cmd->add_option("--blocks", blocks, "Block sizes")->capture_default_str();
  synth_cmd->add_option("--p-in", spec.p_in, "Within-block edge probability")->capture_default_str();
  synth_cmd->add_option("--p-out", spec.p_out, "Between-block edge probability")->capture_default_str();
  synth_cmd->add_option("--feature-dim", spec.feature_dim, "Feature width")->capture_default_str();
  synth_cmd->add_option("--separation", spec.class_separation, "Norm of class mean vectors")->capture_default_str();
  synth_cmd->add_option("--noise", spec.noise_std, "Feature noise standard deviation")->capture_default_str();
  synth_cmd->add_option("--train-fraction", spec.train_fraction, "Share of train nodes")->capture_default_str();
  synth_cmd->add_option("--val-fraction", spec.val_fraction, "Share of validation nodes")->capture_default_str();
  synth_cmd->add_option("--labeled-edges", spec.labeled_edges, "Labeled node pairs for the edge task")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();

  // convert
  auto* convert_cmd = app.add_subcommand("convert", "Convert a raw public dataset to canonical files");
  std::string raw_dir, format;
  std::uint64_t convert_seed = 0;
  convert_cmd->add_option("--raw", raw_dir, "Raw dataset directory")->required();
  convert_cmd->add_option("--format", format, "pubmed-diabetes or ppi")->required();
  convert_cmd->add_option("--out", out_dir, "Output directory")->required();
  convert_cmd->add_option("--seed", convert_seed, "Seed of the random split (pubmed)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ExitCode::ok : ExitCode::usage;
  }

  json summary;
  auto fail = [&](int code, const std::string& kind, const std::string& msg) {
    err << "error: " << msg << '\n';
    out << json{{"command", command}, {"status", "error"}, {"kind", kind}, {"message", msg},
                {"exit_code", code}}.dump()
        << '\n';
    return code;
  };

  try {
    if (*train_cmd) {
      command = "train";
      const TrainConfig cfg = resolve_config(config_path, ov);
      if (dry_run) {
        out << json{{"command", command}, {"status", "ok"}, {"config", to_json(cfg)}}.dump() << '\n';
        return ExitCode::ok;
      }
      if (data_dir.empty()) throw ConfigError("--data is required");
      if (seeds == 0) throw ConfigError("--seeds must be >= 1");
      const Graph g = load_dataset(data_dir);
      fs::create_directories(out_dir);
      summary = {{"command", command}, {"status", "ok"}, {"out", out_dir}, {"config", to_json(cfg)}};
      std::vector<double> scores;
      json runs = json::array();
      for (std::size_t i = 0; i < seeds; ++i) {
        TrainConfig c = cfg;
        c.seed = cfg.seed + i;
        const std::string tag = seeds == 1 ? "" : "seed" + std::to_string(c.seed) + ".";
        TrainOutputs outputs{fs::path(out_dir) / (tag + "history.jsonl"), fs::path(out_dir) / (tag + "best.ckpt")};
        TrainResult r = train(g, c, outputs);
        const TaskMode mode = r.model.config().task;
        EvalOptions eo{c.sampler_config(), c.effective_batch_size(mode), c.seed, 0, false};
        const EvalResult test = evaluate(g, r.model, Split::test, eo);
        const double score = monitored_metric(test.metrics, mode);
        scores.push_back(score);
        runs.push_back({{"seed", c.seed},
                        {"epochs", r.epochs_run},
                        {"best_epoch", r.best_epoch},
                        {"val_metric", r.best_metric},
                        {"test", metrics_json(test.metrics)},
                        {"history", outputs.history->string()},
                        {"checkpoint", outputs.checkpoint->string()}});
        err << "seed " << c.seed << ": test " << (mode == TaskMode::edge_binary ? "auc" : "micro_f1")
            << " = " << score << " after " << r.epochs_run << " epochs\n";
      }
      const MeanStd ms = mean_std(scores);
      summary["runs"] = runs;
      summary["test_metric"] = {{"mean", ms.mean}, {"std", ms.std}};
    } else if (*eval_cmd) {
      command = "eval";
      const auto split = parse_split(split_name);
      if (!split || *split == Split::none) throw ConfigError("--split must be train, val or test");
      const LoadedModel m = load_model(ckpt_path);
      const Graph g = load_dataset(data_dir);
      const EvalResult r = evaluate(g, m.model, *split, eval_options_for(m));
      summary = {{"command", command}, {"status", "ok"}, {"split", split_name},
                 {"metrics", metrics_json(r.metrics)}};
    } else if (*embed_cmd) {
      command = "embed";
      const LoadedModel m = load_model(ckpt_path);
      const Graph g = load_dataset(data_dir);
      std::vector<NodeId> nodes;
      if (nodes_path.empty()) {
        nodes.resize(g.num_nodes());
        std::iota(nodes.begin(), nodes.end(), NodeId{0});
      } else {
        nodes = read_node_list(nodes_path);
        for (NodeId v : nodes) {
          if (v >= g.num_nodes()) throw DataError("node " + std::to_string(v) + " out of range");
        }
      }
      const Tensor emb = embed(g, m.model, nodes, eval_options_for(m));
      write_features(embed_out, emb);
      summary = {{"command", command}, {"status", "ok"}, {"out", embed_out},
                 {"rows", emb.rows()}, {"width", emb.cols()}};
    } else if (*sample_cmd) {
      command = "sample";
      TrainConfig c = resolve_config(config_path, sample_ov);
      SamplerConfig sc = c.sampler_config();
      if (hops > 0) {
        if (hops > sc.sizes.size()) sc.sizes.resize(hops, sc.sizes.back());
        sc.sizes.resize(hops);
      }
      sc.validate();
      const Graph g = load_dataset(data_dir);
      Rng rng(derive_seed(c.seed, "cli/sample"));
      const MiniBatch mb = build_minibatch(g, sample_nodes, sc, rng);
      summary = {{"command", command}, {"status", "ok"}, {"heuristic", to_string(sc.heuristic)},
                 {"sample_sizes", sc.sizes}, {"minibatch", minibatch_to_json(mb)}};
    } else if (*synth_cmd) {
      command = "synth";
      spec.block_sizes = parse_size_list(blocks);
      const Graph g = generate_synthetic(spec, synth_seed);
      write_dataset(out_dir, g);
      summary = {{"command", command}, {"status", "ok"}, {"out", out_dir}, {"nodes", g.num_nodes()},
                 {"arcs", g.num_arcs()}, {"classes", g.labels.num_classes},
                 {"labeled_edges", g.labeled_edges.size()}};
    } else if (*convert_cmd) {
      command = "convert";
      const ConvertReport r = convert_dataset(raw_dir, format, out_dir, convert_seed);
      summary = r.to_json();
      summary["command"] = command;
      summary["status"] = "ok";
      summary["out"] = out_dir;
    }
  } catch (const NumericFault& e) {
    return fail(ExitCode::numeric, "numeric", e.what());
  } catch (const std::domain_error& e) {
    return fail(ExitCode::numeric, "numeric", e.what());
  } catch (const DataError& e) {
    return fail(ExitCode::data, "data", e.what());
  } catch (const ConfigError& e) {
    return fail(ExitCode::usage, "usage", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(ExitCode::data, "data", e.what());
  } catch (const std::exception& e) {
    return fail(ExitCode::internal, "internal", e.what());
  }
  out << summary.dump() << '\n';
  return ExitCode::ok;
}

}  // namespace gain::cli
