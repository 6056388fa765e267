#include "gain/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

GAIN_NAMESPACE_BEGIN

namespace {

constexpr Real kLo = static_cast<Real>(kProbabilityClip);
constexpr Real kHi = static_cast<Real>(1.0 - kProbabilityClip);

void check_targets(const Var& probs, const Tensor& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw ShapeError("predictions " + probs.value().shape_string() + " vs targets " +
                     targets.shape_string());
  }
}

double clipped(double p) { return std::clamp(p, kProbabilityClip, 1.0 - kProbabilityClip); }

}  // namespace

nlohmann::json LossBreakdown::to_json() const {
  return {{"total", total.value().item()}, {"sup", sup.value().item()},
          {"greg", greg.value().item()},   {"rec", rec.value().item()},
          {"lambda1", lambda1},            {"lambda2", lambda2}};
}

Tensor one_hot(std::span<const std::int32_t> labels, std::size_t num_classes) {
  Tensor t = Tensor::matrix(labels.size(), num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " outside class range [0, " +
                      std::to_string(num_classes) + ")");
    }
    t(i, static_cast<std::size_t>(labels[i])) = Real(1);
  }
  return t;
}

Var supervised_loss(Var probs, const Tensor& targets, TaskMode mode) {
  check_targets(probs, targets);
  for (Real y : targets.values()) {
    if (y != Real(0) && y != Real(1)) throw DataError("targets must be 0 or 1");
  }
  Tape& t = probs.tape();
  const Var y = t.constant(targets);
  const Var p = clip(probs, kLo, kHi);
  if (mode == TaskMode::multiclass) {
    const Real n = static_cast<Real>(targets.rows());
    return affine(sum(mul(y, log(p))), Real(-1) / n, Real(0));
  }
  // y log p + (1 - y) log(1 - p), averaged over every entry.
  const Var pos = mul(y, log(p));
  const Var neg = mul(affine(y, Real(-1), Real(1)), log(affine(p, Real(-1), Real(1))));
  return affine(mean(add(pos, neg)), Real(-1), Real(0));
}

Var graph_regularization(Var enc_v, Var enc_n) { return mean(row_l2_norm(sub(enc_v, enc_n))); }

Var reconstruction_loss(Var h_v, Var dec_v, Var h_n, Var dec_n) {
  return mean(add(row_l2_norm(sub(h_v, dec_v)), row_l2_norm(sub(h_n, dec_n))));
}

LossBreakdown total_loss(Var probs, const Tensor& targets, TaskMode mode,
                         const ForwardResult& forward, const LossOptions& options) {
  if (!(options.lambda1 >= 0) || !(options.lambda2 >= 0)) {
    throw ConfigError("lambda1 and lambda2 must be >= 0");
  }
  if (forward.layers.empty()) throw ConfigError("forward pass has no layers");
  Tape& t = probs.tape();
  LossBreakdown out;
  out.lambda1 = options.lambda1;
  out.lambda2 = options.lambda2;
  out.sup = supervised_loss(probs, targets, mode);

  const std::size_t first = options.all_layers ? 0 : forward.layers.size() - 1;
  for (std::size_t k = first; k < forward.layers.size(); ++k) {
    const LayerAux& aux = forward.layers[k];
    const Var g = graph_regularization(aux.enc_v, aux.enc_n);
    out.greg = out.greg.valid() ? add(out.greg, g) : g;
    if (aux.dec_v.valid()) {
      const Var r = reconstruction_loss(aux.h_v, aux.dec_v, aux.h_n, aux.dec_n);
      out.rec = out.rec.valid() ? add(out.rec, r) : r;
    }
  }
  if (!out.rec.valid()) out.rec = t.constant(Tensor::scalar(Real(0)));

  out.total = add(add(out.sup, affine(out.greg, static_cast<Real>(options.lambda1), Real(0))),
                  affine(out.rec, static_cast<Real>(options.lambda2), Real(0)));
  return out;
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json j;
  j["micro_f1"] = micro_f1 ? nlohmann::json(*micro_f1) : nlohmann::json(nullptr);
  j["auc"] = auc ? nlohmann::json(*auc) : nlohmann::json(nullptr);
  j["logloss"] = logloss;
  j["count"] = count;
  return j;
}

double micro_f1(const Tensor& probs, const Tensor& targets, TaskMode mode, double threshold) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
    throw ShapeError("predictions " + probs.shape_string() + " vs targets " + targets.shape_string());
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  const std::size_t n = probs.rows(), c = probs.cols();
  for (std::size_t i = 0; i < n; ++i) {
    if (mode == TaskMode::multiclass) {
      std::size_t pred = 0, truth = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (probs(i, j) > probs(i, pred)) pred = j;
        if (targets(i, j) > targets(i, truth)) truth = j;
      }
      if (pred == truth) {
        ++tp;
      } else {
        ++fp;
        ++fn;
      }
      continue;
    }
    for (std::size_t j = 0; j < c; ++j) {
      const bool p = probs(i, j) > threshold;
      const bool y = targets(i, j) > Real(0.5);
      tp += p && y;
      fp += p && !y;
      fn += !p && y;
    }
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

std::optional<double> auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        pos_rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1) / 2.0) / (np * static_cast<double>(n_neg));
}

double logloss(const Tensor& probs, const Tensor& targets, TaskMode mode) {
  if (probs.size() != targets.size() || probs.rows() == 0) {
    throw ShapeError("logloss: predictions " + probs.shape_string() + " vs targets " +
                     targets.shape_string());
  }
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = clipped(probs[i]);
    const double y = targets[i];
    total += mode == TaskMode::multiclass ? y * std::log(p)
                                          : y * std::log(p) + (1 - y) * std::log(1 - p);
  }
  const double n = static_cast<double>(mode == TaskMode::multiclass ? probs.rows() : probs.size());
  return -total / n;
}

Metrics compute_metrics(const Tensor& probs, const Tensor& targets, TaskMode mode) {
  if (probs.rows() == 0) throw ConfigError("evaluation set is empty");
  Metrics m;
  m.count = probs.rows();
  m.logloss = logloss(probs, targets, mode);
  if (mode == TaskMode::edge_binary) {
    std::vector<double> s(probs.values().begin(), probs.values().end());
    std::vector<int> y(targets.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = targets[i] > Real(0.5) ? 1 : 0;
    m.auc = auc(s, y);
  } else {
    m.micro_f1 = micro_f1(probs, targets, mode);
  }
  return m;
}

GAIN_NAMESPACE_END
