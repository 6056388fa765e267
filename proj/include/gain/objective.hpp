#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "gain/model.hpp"

GAIN_NAMESPACE_BEGIN

inline constexpr double kProbabilityClip = 1e-7;

/// Scalar loss terms recorded on the tape, plus the weights that combined
/// them. total == sup + lambda1 * greg + lambda2 * rec.
struct LossBreakdown {
  Var total, sup, greg, rec;
  double lambda1 = 0;
  double lambda2 = 0;

  nlohmann::json to_json() const;
};

struct LossOptions {
  double lambda1 = 0;
  double lambda2 = 0;
  /// Sum the regularization and reconstruction terms over every layer
  /// instead of using only the last one.
  bool all_layers = false;
};

/// One-hot n x C targets; throws DataError for a label outside [0, C).
Tensor one_hot(std::span<const std::int32_t> labels, std::size_t num_classes);

/// Mean loss over the batch. targets: n x C 0/1 rows for multilabel,
/// one-hot rows for multiclass, n x 1 0/1 for edges.
Var supervised_loss(Var probs, const Tensor& targets, TaskMode mode);

/// Mean over rows of ||h'_v - h'_N||.
Var graph_regularization(Var enc_v, Var enc_n);

/// Mean over rows of ||h_v - dec_v|| + ||h_N - dec_N||.
Var reconstruction_loss(Var h_v, Var dec_v, Var h_n, Var dec_n);

/// Combines the supervised term with the auxiliary terms of the forward
/// pass. Without an autoencoder the reconstruction term is a constant 0.
LossBreakdown total_loss(Var probs, const Tensor& targets, TaskMode mode,
                         const ForwardResult& forward, const LossOptions& options);

struct Metrics {
  std::optional<double> micro_f1;
  std::optional<double> auc;
  double logloss = 0;
  std::size_t count = 0;

  nlohmann::json to_json() const;
};

/// Pools TP/FP/FN over every class. Multilabel predicts p > threshold;
/// multiclass predicts the row argmax. Returns 1 when TP+FP+FN == 0.
double micro_f1(const Tensor& probs, const Tensor& targets, TaskMode mode, double threshold = 0.5);

/// Mann-Whitney statistic with average ranks for ties; nullopt when either
/// class is absent.
std::optional<double> auc(std::span<const double> scores, std::span<const int> labels);

/// Clipped cross-entropy: binary per entry for multilabel and edges,
/// categorical for multiclass. Averaged like supervised_loss.
double logloss(const Tensor& probs, const Tensor& targets, TaskMode mode);

/// micro-F1 for node tasks, AUC for edges, logloss always. Throws
/// ConfigError on an empty evaluation set.
Metrics compute_metrics(const Tensor& probs, const Tensor& targets, TaskMode mode);

GAIN_NAMESPACE_END
