#include "gain/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "gain/checkpoint.hpp"
#include "gain/config.hpp"

GAIN_NAMESPACE_BEGIN

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must be in (0, 1]");
  if (!(lr_floor > 0) || lr_floor > learning_rate) {
    throw ConfigError("lr_floor must be in (0, learning_rate]");
  }
  if (!(lambda1 >= 0) || !(lambda2 >= 0)) throw ConfigError("lambda1 and lambda2 must be >= 0");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (sample_sizes.size() != layer_dims.size()) {
    throw ConfigError("sample_sizes and layer_dims must have the same length");
  }
  sampler_config().validate();
}

std::size_t TrainConfig::effective_batch_size(TaskMode mode) const {
  if (batch_size > 0) return batch_size;
  return mode == TaskMode::edge_binary ? 1024 : 512;
}

SamplerConfig TrainConfig::sampler_config() const {
  SamplerConfig s;
  s.heuristic = heuristic;
  s.epsilon = epsilon;
  s.sizes = sample_sizes;
  s.seed = seed;
  return s;
}

TaskMode infer_task(const Graph& g, const std::optional<TaskMode>& requested) {
  TaskMode mode;
  if (requested) {
    mode = *requested;
  } else if (!g.labeled_edges.empty()) {
    mode = TaskMode::edge_binary;
  } else if (g.labels.kind == LabelKind::multi) {
    mode = TaskMode::multilabel;
  } else if (g.labels.kind == LabelKind::single) {
    mode = TaskMode::multiclass;
  } else {
    throw DataError("graph has neither node labels nor labeled edges");
  }
  if (mode == TaskMode::edge_binary && g.labeled_edges.empty()) {
    throw DataError("edge task requested but the graph has no labeled edges");
  }
  if (mode == TaskMode::multilabel && g.labels.kind != LabelKind::multi) {
    throw DataError("multilabel task requested but labels are not 0/1 vectors");
  }
  if (mode == TaskMode::multiclass && g.labels.kind != LabelKind::single) {
    throw DataError("multiclass task requested but labels are not class indices");
  }
  return mode;
}

ModelConfig TrainConfig::model_config(const Graph& g) const {
  ModelConfig m;
  m.input_dim = g.feature_width();
  m.layer_dims = layer_dims;
  m.sample_sizes = sample_sizes;
  m.aggregators = aggregators;
  m.use_cross = use_cross;
  m.use_autoencoder = use_autoencoder;
  m.task = infer_task(g, task);
  m.num_classes = m.task == TaskMode::edge_binary ? 1 : g.labels.num_classes;
  m.edge_hidden = edge_hidden;
  m.validate();
  return m;
}

LrSchedule::LrSchedule(double initial, double decay, double floor)
    : rate_(initial), decay_(decay), floor_(floor) {
  if (!(decay > 0 && decay <= 1) || !(floor > 0) || floor > initial) {
    throw ConfigError("invalid learning-rate schedule");
  }
}

double LrSchedule::step(bool improved) {
  if (!improved) rate_ = std::max(rate_ * decay_, floor_);
  return rate_;
}

SplitItems split_items(const Graph& g, Split split, TaskMode mode) {
  SplitItems items;
  if (mode == TaskMode::edge_binary) {
    items.edges = g.edges_in(split);
  } else {
    for (NodeId v : g.nodes_in(split)) {
      if (g.labels.has(v)) items.nodes.push_back(v);
    }
  }
  return items;
}

Tensor node_targets(const Graph& g, std::span<const NodeId> nodes, TaskMode mode) {
  const std::size_t c = g.labels.num_classes;
  Tensor t = Tensor::matrix(nodes.size(), c);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeId v = nodes[i];
    if (!g.labels.has(v)) throw DataError("node " + std::to_string(v) + " has no label");
    if (mode == TaskMode::multilabel) {
      auto row = g.labels.multi_row(v);
      for (std::size_t j = 0; j < c; ++j) t(i, j) = row[j] ? Real(1) : Real(0);
    } else {
      const auto y = g.labels.single[v];
      if (y < 0 || static_cast<std::size_t>(y) >= c) {
        throw DataError("label of node " + std::to_string(v) + " outside class range");
      }
      t(i, static_cast<std::size_t>(y)) = Real(1);
    }
  }
  return t;
}

Tensor edge_targets(std::span<const LabeledEdge> edges) {
  Tensor t = Tensor::matrix(edges.size(), 1);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].label != 0 && edges[i].label != 1) throw DataError("edge labels must be 0 or 1");
    t(i, 0) = static_cast<Real>(edges[i].label);
  }
  return t;
}

namespace {

struct BatchPass {
  ForwardResult forward;
  Var embeddings;  // one row per requested node (node tasks)
  Var probs;
  Tensor targets;
};

/// Row of each requested node inside the deduplicated top frontier.
std::vector<std::size_t> rows_of(const MiniBatch& mb, std::span<const NodeId> nodes) {
  std::unordered_map<NodeId, std::size_t> pos;
  const auto& top = mb.batch();
  for (std::size_t i = 0; i < top.size(); ++i) pos.emplace(top[i], i);
  std::vector<std::size_t> rows(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) rows[i] = pos.at(nodes[i]);
  return rows;
}

bool is_identity(std::span<const std::size_t> rows, std::size_t n) {
  if (rows.size() != n) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (rows[i] != i) return false;
  }
  return true;
}

BatchPass node_pass(Tape& tape, const Graph& g, const GainModel& model, Sampler& sampler, Rng& rng,
                    std::span<const NodeId> nodes, bool with_head) {
  BatchPass out;
  const MiniBatch mb = sampler.build(nodes, rng);
  out.forward = model.forward(tape, g, mb);
  auto rows = rows_of(mb, nodes);
  out.embeddings = is_identity(rows, mb.batch().size()) ? out.forward.embeddings
                                                        : gather_rows(out.forward.embeddings, rows);
  if (with_head) {
    out.probs = model.node_probabilities(out.embeddings);
    out.targets = node_targets(g, nodes, model.config().task);
  }
  return out;
}

BatchPass edge_pass(Tape& tape, const Graph& g, const GainModel& model, Sampler& sampler, Rng& rng,
                    std::span<const LabeledEdge> edges) {
  BatchPass out;
  std::vector<NodeId> src, dst, ends;
  for (const auto& e : edges) {
    src.push_back(e.src);
    dst.push_back(e.dst);
  }
  ends = src;
  ends.insert(ends.end(), dst.begin(), dst.end());
  const MiniBatch mb = sampler.build(ends, rng);
  out.forward = model.forward(tape, g, mb);
  const Var hs = gather_rows(out.forward.embeddings, rows_of(mb, src));
  const Var hd = gather_rows(out.forward.embeddings, rows_of(mb, dst));
  out.probs = model.edge_probabilities(hs, hd);
  out.targets = edge_targets(edges);
  return out;
}

BatchPass items_pass(Tape& tape, const Graph& g, const GainModel& model, Sampler& sampler, Rng& rng,
                     const SplitItems& items, std::size_t begin, std::size_t end) {
  if (model.config().task == TaskMode::edge_binary) {
    return edge_pass(tape, g, model, sampler, rng,
                     std::span<const LabeledEdge>(items.edges).subspan(begin, end - begin));
  }
  return node_pass(tape, g, model, sampler, rng,
                   std::span<const NodeId>(items.nodes).subspan(begin, end - begin), true);
}

void append_rows(std::vector<Real>& dst, const Tensor& t) {
  dst.insert(dst.end(), t.values().begin(), t.values().end());
}

struct ShardResult {
  GradientSet grads;
  double total = 0, sup = 0, greg = 0, rec = 0;
};

}  // namespace

EvalResult evaluate_items(const Graph& g, const GainModel& model, const SplitItems& items,
                          const EvalOptions& options) {
  if (items.size() == 0) throw ConfigError("evaluation split is empty");
  if (options.batch_size == 0) throw ConfigError("evaluation batch size must be >= 1");
  const TaskMode mode = model.config().task;
  const std::size_t width = mode == TaskMode::edge_binary ? 1 : model.config().num_classes;
  Sampler sampler(g, options.sampler);
  std::vector<Real> probs, targets;
  EvalResult out;
  std::vector<std::vector<Real>> attention(model.config().depth());
  const std::size_t n = items.size();
  for (std::size_t b = 0, begin = 0; begin < n; ++b, begin += options.batch_size) {
    const std::size_t end = std::min(n, begin + options.batch_size);
    Tape tape(Tape::Mode::inference);
    Rng rng(derive_seed(options.seed, "eval", options.draw, b));
    BatchPass pass = items_pass(tape, g, model, sampler, rng, items, begin, end);
    append_rows(probs, pass.probs.value());
    append_rows(targets, pass.targets);
    if (options.keep_attention) {
      for (std::size_t k = 0; k < attention.size(); ++k) {
        append_rows(attention[k], pass.forward.layers[k].attention);
      }
    }
  }
  out.probs = Tensor({n, width}, std::move(probs));
  out.targets = Tensor({n, width}, std::move(targets));
  if (options.keep_attention) {
    const std::size_t a = model.config().aggregators.size();
    for (auto& rows : attention) {
      const std::size_t r = rows.size() / a;
      out.attention.emplace_back(std::vector<std::size_t>{r, a}, std::move(rows));
    }
  }
  out.metrics = compute_metrics(out.probs, out.targets, mode);
  return out;
}

EvalResult evaluate(const Graph& g, const GainModel& model, Split split, const EvalOptions& options) {
  return evaluate_items(g, model, split_items(g, split, model.config().task), options);
}

Tensor embed(const Graph& g, const GainModel& model, std::span<const NodeId> nodes,
             const EvalOptions& options) {
  if (g.feature_width() != model.config().input_dim) {
    throw ConfigError("graph feature width " + std::to_string(g.feature_width()) +
                      " does not match the checkpoint input width " +
                      std::to_string(model.config().input_dim));
  }
  if (options.batch_size == 0) throw ConfigError("embedding batch size must be >= 1");
  const std::size_t width = model.config().embedding_dim();
  Sampler sampler(g, options.sampler);
  std::vector<Real> rows;
  rows.reserve(nodes.size() * width);
  for (std::size_t b = 0, begin = 0; begin < nodes.size(); ++b, begin += options.batch_size) {
    const std::size_t end = std::min(nodes.size(), begin + options.batch_size);
    Tape tape(Tape::Mode::inference);
    Rng rng(derive_seed(options.seed, "eval", options.draw, b));
    BatchPass pass = node_pass(tape, g, model, sampler, rng, nodes.subspan(begin, end - begin), false);
    append_rows(rows, pass.embeddings.value());
  }
  return Tensor({nodes.size(), width}, std::move(rows));
}

double monitored_metric(const Metrics& m, TaskMode mode) {
  if (mode == TaskMode::edge_binary) return m.auc.value_or(0.5);
  return m.micro_f1.value_or(0.0);
}

nlohmann::json checkpoint_metadata(const ModelConfig& model, const TrainConfig& cfg,
                                   const nlohmann::json& extra) {
  nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
  j["model"] = to_json(model);
  j["train"] = to_json(cfg);
  return j;
}

TrainResult train(const Graph& g, const TrainConfig& cfg, const TrainOutputs& outputs) {
  cfg.validate();
  const ModelConfig mc = cfg.model_config(g);
  const TaskMode mode = mc.task;
  GainModel model(mc, cfg.seed);

  const SplitItems train_set = split_items(g, Split::train, mode);
  const SplitItems val_set = split_items(g, Split::val, mode);
  if (train_set.size() == 0) throw DataError("training split has no labeled items");
  if (val_set.size() == 0) throw DataError("validation split has no labeled items");

  const std::size_t batch = cfg.effective_batch_size(mode);
  const SamplerConfig scfg = cfg.sampler_config();
  const LossOptions loss_opts{cfg.lambda1, cfg.lambda2, cfg.loss_all_layers};
  EvalOptions eval_opts{scfg, batch, cfg.seed, 0, false};

  AdamState adam = AdamState::for_store(model.params(), cfg.learning_rate);
  LrSchedule schedule(cfg.learning_rate, cfg.lr_decay, cfg.lr_floor);
  std::vector<Sampler> samplers(cfg.workers, Sampler(g, scfg));

  std::ofstream history_out;
  if (outputs.history) {
    history_out.open(*outputs.history, std::ios::trunc);
    if (!history_out) throw DataError("cannot write history file " + outputs.history->string());
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  SplitItems shuffled;

  TrainResult result{model, {}, 0, -std::numeric_limits<double>::infinity(), 0, adam};
  ParameterStore best = model.params();
  std::size_t stale = 0;
  double best_logloss = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    shuffled.nodes.clear();
    shuffled.edges.clear();
    for (std::size_t i : order) {
      if (mode == TaskMode::edge_binary) {
        shuffled.edges.push_back(train_set.edges[i]);
      } else {
        shuffled.nodes.push_back(train_set.nodes[i]);
      }
    }
    for (auto& s : samplers) s.new_epoch();

    const double lr_used = schedule.rate();
    adam.learning_rate = lr_used;
    double sum_total = 0, sum_sup = 0, sum_greg = 0, sum_rec = 0;
    const std::size_t n = shuffled.size();
    for (std::size_t b = 0, begin = 0; begin < n; ++b, begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      const std::size_t len = end - begin;
      const std::size_t shards = std::min(cfg.workers, len);
      std::vector<ShardResult> parts(shards);
      std::vector<std::exception_ptr> errors(shards);

      auto run_shard = [&](std::size_t w) {
        try {
          const std::size_t lo = begin + len * w / shards;
          const std::size_t hi = begin + len * (w + 1) / shards;
          Tape tape;
          Rng rng(derive_seed(cfg.seed, "sample", epoch, b * 1024 + w));
          BatchPass pass = items_pass(tape, g, model, samplers[w], rng, shuffled, lo, hi);
          LossBreakdown loss = total_loss(pass.probs, pass.targets, mode, pass.forward, loss_opts);
          tape.backward(loss.total);
          ShardResult& r = parts[w];
          r.grads = tape.parameter_gradients(model.params());
          const double share = static_cast<double>(hi - lo) / static_cast<double>(len);
          if (shards > 1) scale(r.grads, static_cast<Real>(share));
          r.total = share * loss.total.value().item();
          r.sup = share * loss.sup.value().item();
          r.greg = share * loss.greg.value().item();
          r.rec = share * loss.rec.value().item();
        } catch (...) {
          errors[w] = std::current_exception();
        }
      };

      if (shards == 1) {
        run_shard(0);
      } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 1; w < shards; ++w) threads.emplace_back(run_shard, w);
        run_shard(0);
        for (auto& t : threads) t.join();
      }
      try {
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
        GradientSet grads = std::move(parts[0].grads);
        for (std::size_t w = 1; w < shards; ++w) accumulate(grads, parts[w].grads);
        adam_step(model.params(), grads, adam);
      } catch (const NumericFault& e) {
        throw NumericFault("epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " +
                           e.what());
      }
      const double weight = static_cast<double>(len);
      for (const auto& r : parts) {
        sum_total += weight * r.total;
        sum_sup += weight * r.sup;
        sum_greg += weight * r.greg;
        sum_rec += weight * r.rec;
      }
    }

    if (cfg.redraw_eval) eval_opts.draw = epoch + 1;
    const EvalResult val = evaluate_items(g, model, val_set, eval_opts);
    const double metric = monitored_metric(val.metrics, mode);
    // Equal metric values (common for F1 on small splits) fall back to logloss.
    const bool improved = metric > result.best_metric ||
                          (metric == result.best_metric && val.metrics.logloss < best_logloss);
    if (improved) {
      result.best_metric = metric;
      best_logloss = val.metrics.logloss;
      result.best_epoch = epoch;
      best = model.params();
      stale = 0;
      if (outputs.checkpoint) {
        save_checkpoint(*outputs.checkpoint, model.params(), &adam,
                        checkpoint_metadata(mc, cfg,
                                            {{"epoch", epoch},
                                             {"val", val.metrics.to_json()},
                                             {"eval_seed", eval_opts.seed},
                                             {"eval_draw", eval_opts.draw},
                                             {"eval_batch_size", eval_opts.batch_size}}));
      }
    } else {
      ++stale;
    }

    const double dn = static_cast<double>(n);
    nlohmann::json line = {{"epoch", epoch},
                           {"lr", lr_used},
                           {"train", {{"total", sum_total / dn},
                                      {"sup", sum_sup / dn},
                                      {"greg", sum_greg / dn},
                                      {"rec", sum_rec / dn},
                                      {"lambda1", cfg.lambda1},
                                      {"lambda2", cfg.lambda2}}},
                           {"split", "val"},
                           {"val", val.metrics.to_json()},
                           {"improved", improved},
                           {"best_metric", result.best_metric}};
    if (history_out) history_out << line.dump() << '\n' << std::flush;
    result.history.push_back(std::move(line));
    result.epochs_run = epoch + 1;

    schedule.step(improved);
    if (stale >= cfg.patience) break;
  }

  result.model = GainModel(mc, std::move(best));
  result.adam = std::move(adam);
  return result;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw ConfigError("mean_std of an empty set");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

nlohmann::json MultiSeedResult::to_json() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : runs) {
    runs_json.push_back({{"seed", r.seed}, {"val_metric", r.val_metric}, {"test", r.test.to_json()}});
  }
  return {{"runs", runs_json}, {"test_mean", test_metric.mean}, {"test_std", test_metric.std}};
}

MultiSeedResult train_seeds(const Graph& g, const TrainConfig& cfg, std::span<const std::uint64_t> seeds) {
  MultiSeedResult out;
  std::vector<double> scores;
  for (std::uint64_t s : seeds) {
    TrainConfig c = cfg;
    c.seed = s;
    TrainResult r = train(g, c);
    const TaskMode mode = r.model.config().task;
    EvalOptions eo{c.sampler_config(), c.effective_batch_size(mode), s, 0, false};
    const EvalResult test = evaluate(g, r.model, Split::test, eo);
    out.runs.push_back({s, r.best_metric, test.metrics});
    scores.push_back(monitored_metric(test.metrics, mode));
  }
  out.test_metric = mean_std(scores);
  return out;
}

GAIN_NAMESPACE_END
