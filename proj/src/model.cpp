#include "gain/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

GAIN_NAMESPACE_BEGIN

const char* to_string(Aggregator a) noexcept {
  switch (a) {
    case Aggregator::mean_pool:
      return "mean";
    case Aggregator::max_pool:
      return "max";
    case Aggregator::importance_pool:
      return "importance";
  }
  return "?";
}

std::optional<Aggregator> parse_aggregator(std::string_view s) noexcept {
  if (s == "mean" || s == "mean_pool" || s == "avg") return Aggregator::mean_pool;
  if (s == "max" || s == "max_pool") return Aggregator::max_pool;
  if (s == "importance" || s == "importance_pool") return Aggregator::importance_pool;
  return std::nullopt;
}

const char* to_string(TaskMode m) noexcept {
  switch (m) {
    case TaskMode::multilabel:
      return "multilabel";
    case TaskMode::multiclass:
      return "multiclass";
    case TaskMode::edge_binary:
      return "edge_binary";
  }
  return "?";
}

std::optional<TaskMode> parse_task_mode(std::string_view s) noexcept {
  if (s == "multilabel") return TaskMode::multilabel;
  if (s == "multiclass") return TaskMode::multiclass;
  if (s == "edge_binary" || s == "edge") return TaskMode::edge_binary;
  return std::nullopt;
}

std::size_t ModelConfig::layer_input_dim(std::size_t k) const {
  if (k == 0 || k > layer_dims.size()) throw ConfigError("layer index out of range");
  return k == 1 ? input_dim : 2 * layer_dims[k - 2];
}

bool ModelConfig::has(Aggregator a) const {
  return std::find(aggregators.begin(), aggregators.end(), a) != aggregators.end();
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ConfigError("model input_dim must be > 0");
  if (layer_dims.empty()) throw ConfigError("model needs at least one layer");
  for (auto d : layer_dims) {
    if (d == 0) throw ConfigError("layer width must be > 0");
  }
  if (sample_sizes.size() != layer_dims.size()) {
    throw ConfigError("sample_sizes (" + std::to_string(sample_sizes.size()) +
                      ") must match the number of layers (" + std::to_string(layer_dims.size()) + ")");
  }
  if (aggregators.empty()) throw ConfigError("at least one aggregator must be enabled");
  for (std::size_t i = 0; i < aggregators.size(); ++i) {
    for (std::size_t j = i + 1; j < aggregators.size(); ++j) {
      if (aggregators[i] == aggregators[j]) throw ConfigError("aggregator listed twice");
    }
  }
  if (task != TaskMode::edge_binary && num_classes == 0) throw ConfigError("num_classes must be > 0");
  if (task == TaskMode::edge_binary && edge_hidden == 0) throw ConfigError("edge_hidden must be > 0");
}

nlohmann::json to_json(const ModelConfig& c) {
  std::vector<std::string> aggs;
  for (auto a : c.aggregators) aggs.emplace_back(to_string(a));
  return {{"input_dim", c.input_dim},       {"layer_dims", c.layer_dims},
          {"sample_sizes", c.sample_sizes}, {"aggregators", aggs},
          {"use_cross", c.use_cross},       {"use_autoencoder", c.use_autoencoder},
          {"task", to_string(c.task)},      {"num_classes", c.num_classes},
          {"edge_hidden", c.edge_hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.layer_dims = j.at("layer_dims").get<std::vector<std::size_t>>();
  c.sample_sizes = j.at("sample_sizes").get<std::vector<std::size_t>>();
  c.aggregators.clear();
  for (const auto& s : j.at("aggregators")) {
    auto a = parse_aggregator(s.get<std::string>());
    if (!a) throw ConfigError("unknown aggregator " + s.get<std::string>());
    c.aggregators.push_back(*a);
  }
  c.use_cross = j.at("use_cross").get<bool>();
  c.use_autoencoder = j.at("use_autoencoder").get<bool>();
  auto m = parse_task_mode(j.at("task").get<std::string>());
  if (!m) throw ConfigError("unknown task mode");
  c.task = *m;
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.edge_hidden = j.value("edge_hidden", std::size_t{64});
  c.validate();
  return c;
}

Var aggregate(Aggregator agg, Var rows, std::span<const std::size_t> offsets, Var gates) {
  switch (agg) {
    case Aggregator::mean_pool:
      return segment_mean(rows, offsets);
    case Aggregator::max_pool:
      return segment_max(rows, offsets);
    case Aggregator::importance_pool:
      if (!gates.valid()) throw ConfigError("importance pooling needs slot gates");
      return segment_gated_sum(rows, gates, offsets);
  }
  throw ConfigError("unknown aggregator");
}

Var dense_relu(Var x, Var w, Var b) { return relu(add(matmul(x, w), b)); }

std::pair<Var, Var> attention_fuse(Var h_v, std::span<const Var> aggregated, Var theta_w,
                                   Var theta_b, Var alpha_w, Var alpha_b) {
  if (aggregated.empty()) throw ConfigError("attention_fuse needs at least one aggregator output");
  const Var center = dense_relu(h_v, theta_w, theta_b);
  std::vector<Var> scores;
  scores.reserve(aggregated.size());
  for (const Var& h_agg : aggregated) {
    const Var side = dense_relu(h_agg, theta_w, theta_b);
    scores.push_back(dense_relu(concat_cols(center, side), alpha_w, alpha_b));
  }
  const Var alpha = softmax_rows(concat_cols(scores));
  Var fused = mul_col(aggregated[0], column(alpha, 0));
  for (std::size_t i = 1; i < aggregated.size(); ++i) {
    fused = add(fused, mul_col(aggregated[i], column(alpha, i)));
  }
  return {fused, alpha};
}

std::pair<Var, Var> cross(Var enc_v, Var enc_n, Var w1, Var w2) {
  // (h_v h_n^T) w1 == h_v (h_n . w1): only an n x 1 scalar column is formed.
  return {mul_col(enc_v, matmul(enc_n, w1)), mul_col(enc_n, matmul(enc_v, w2))};
}

Var gru_fuse(Var a, Var b, const GruWeights& w) {
  const Var z = sigmoid(add(matmul(a, w.w_z), matmul(b, w.u_z)));
  const Var r = sigmoid(add(matmul(a, w.w_r), matmul(b, w.u_r)));
  const Var candidate = tanh(add(matmul(a, w.w), matmul(mul(r, b), w.u)));
  // (1 - z) o b + z o candidate
  return add(mul(affine(z, Real(-1), Real(1)), b), mul(z, candidate));
}

std::string GainModel::layer_prefix(std::size_t k) { return "layer" + std::to_string(k) + "."; }

GainModel::GainModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  init_parameters(seed);
}

GainModel::GainModel(ModelConfig config, ParameterStore params) : config_(std::move(config)) {
  config_.validate();
  init_parameters(0);
  for (Parameter& p : params_) {
    const Parameter* src = params.find(p.name);
    if (!src) throw ConfigError("checkpoint is missing parameter " + p.name);
    if (!src->value.same_shape(p.value)) {
      throw ConfigError("parameter " + p.name + " has shape " + src->value.shape_string() +
                        ", model expects " + p.value.shape_string());
    }
    p.value = src->value;
  }
  if (params.size() != params_.size()) {
    throw ConfigError("checkpoint holds parameters this architecture does not use");
  }
}

void GainModel::init_parameters(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "model/init"));
  auto glorot = [&](std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Tensor t = Tensor::matrix(fan_in, fan_out);
    for (auto& x : t.values()) x = static_cast<Real>(u(rng));
    return t;
  };
  const auto& c = config_;
  for (std::size_t k = 1; k <= c.depth(); ++k) {
    const std::string p = layer_prefix(k);
    const std::size_t in = c.layer_input_dim(k);
    const std::size_t d = c.layer_dims[k - 1];
    if (c.aggregators.size() > 1) {
      params_.add(p + "attention.theta.W", glorot(in, in));
      params_.add(p + "attention.theta.b", Tensor::vector(in));
      params_.add(p + "attention.alpha.W", glorot(2 * in, 1));
      params_.add(p + "attention.alpha.b", Tensor::vector(1));
    }
    if (c.has(Aggregator::importance_pool)) {
      params_.add(p + "importance.gates", Tensor::vector(c.sample_sizes[k - 1]));
    }
    const std::size_t cross_dim = c.use_autoencoder ? d : in;
    if (c.use_autoencoder) {
      params_.add(p + "encoder.W", glorot(in, d));
      params_.add(p + "encoder.b", Tensor::vector(d));
      params_.add(p + "decoder.W", glorot(d, in));
      params_.add(p + "decoder.b", Tensor::vector(in));
    }
    if (c.use_cross) {
      params_.add(p + "cross.w1", glorot(cross_dim, 1));
      params_.add(p + "cross.w2", glorot(cross_dim, 1));
    }
    for (const char* dir : {"gru_center.", "gru_neighbor."}) {
      for (const char* m : {"W_z", "U_z", "W_r", "U_r", "W", "U"}) {
        params_.add(p + dir + m, glorot(in, in));
      }
    }
    params_.add(p + "proj_center.W", glorot(in, d));
    params_.add(p + "proj_center.b", Tensor::vector(d));
    params_.add(p + "proj_neighbor.W", glorot(in, d));
    params_.add(p + "proj_neighbor.b", Tensor::vector(d));
  }
  const std::size_t emb = c.embedding_dim();
  if (c.task == TaskMode::edge_binary) {
    params_.add("head.fc1.W", glorot(2 * emb, c.edge_hidden));
    params_.add("head.fc1.b", Tensor::vector(c.edge_hidden));
    params_.add("head.fc2.W", glorot(c.edge_hidden, c.edge_hidden));
    params_.add("head.fc2.b", Tensor::vector(c.edge_hidden));
    params_.add("head.fc3.W", glorot(c.edge_hidden, 1));
    params_.add("head.fc3.b", Tensor::vector(1));
  } else {
    params_.add("head.W", glorot(emb, c.num_classes));
    params_.add("head.b", Tensor::vector(c.num_classes));
  }
}

Var GainModel::layer_forward(std::size_t k, Var h_prev, const HopSamples& hop,
                             LayerAux* aux) const {
  Tape& t = h_prev.tape();
  const auto& c = config_;
  const std::string p = layer_prefix(k);
  const std::size_t n = hop.offsets.size() - 1;
  if (h_prev.cols() != c.layer_input_dim(k)) {
    throw ShapeError("layer " + std::to_string(k) + " expects width " +
                     std::to_string(c.layer_input_dim(k)) + ", got " + std::to_string(h_prev.cols()));
  }
  const Var h_v = slice_rows(h_prev, 0, n);

  // Valid slots per center; isolated centers fall back to their own row.
  std::vector<std::size_t> rows;
  std::vector<std::size_t> offsets{0};
  rows.reserve(hop.slots.size() + n);
  for (std::size_t i = 0; i < n; ++i) {
    auto s = hop.of(i);
    if (s.empty()) {
      rows.push_back(i);
    } else {
      rows.insert(rows.end(), s.begin(), s.end());
    }
    offsets.push_back(rows.size());
  }
  const Var neighbors = gather_rows(h_prev, std::move(rows));
  const Var gates = c.has(Aggregator::importance_pool) ? param(t, p + "importance.gates") : Var{};

  std::vector<Var> pooled;
  for (Aggregator a : c.aggregators) pooled.push_back(aggregate(a, neighbors, offsets, gates));

  Var h_n;
  Tensor attention;
  if (pooled.size() == 1) {
    h_n = pooled[0];
    attention = Tensor::matrix(n, 1, Real(1));
  } else {
    auto [fused, alpha] =
        attention_fuse(h_v, pooled, param(t, p + "attention.theta.W"), param(t, p + "attention.theta.b"),
                       param(t, p + "attention.alpha.W"), param(t, p + "attention.alpha.b"));
    h_n = fused;
    attention = alpha.value();
  }

  Var enc_v = h_v, enc_n = h_n, dec_v, dec_n;
  if (c.use_autoencoder) {
    const Var ew = param(t, p + "encoder.W"), eb = param(t, p + "encoder.b");
    const Var dw = param(t, p + "decoder.W"), db = param(t, p + "decoder.b");
    enc_v = dense_relu(h_v, ew, eb);
    enc_n = dense_relu(h_n, ew, eb);
    dec_v = dense_relu(enc_v, dw, db);
    dec_n = dense_relu(enc_n, dw, db);
  }

  auto gru = [&](const char* dir) {
    const std::string q = p + dir;
    return GruWeights{param(t, q + "W_z"), param(t, q + "U_z"), param(t, q + "W_r"),
                      param(t, q + "U_r"), param(t, q + "W"),   param(t, q + "U")};
  };
  const Var g_v = gru_fuse(h_v, h_n, gru("gru_center."));
  const Var g_n = gru_fuse(h_n, h_v, gru("gru_neighbor."));

  const Var wv = param(t, p + "proj_center.W"), b1 = param(t, p + "proj_center.b");
  const Var wn = param(t, p + "proj_neighbor.W"), b2 = param(t, p + "proj_neighbor.b");
  Var new_v, new_n;
  if (c.use_cross) {
    auto [cross_v, cross_n] = cross(enc_v, enc_n, param(t, p + "cross.w1"), param(t, p + "cross.w2"));
    if (c.use_autoencoder) {
      new_v = add(add(cross_v, matmul(g_v, wv)), b1);
      new_n = add(add(cross_n, matmul(g_n, wn)), b2);
    } else {
      // Raw-width cross terms share the GRU projection.
      new_v = add(matmul(add(cross_v, g_v), wv), b1);
      new_n = add(matmul(add(cross_n, g_n), wn), b2);
    }
  } else {
    new_v = add(matmul(g_v, wv), b1);
    new_n = add(matmul(g_n, wn), b2);
  }

  if (aux) {
    aux->h_v = h_v;
    aux->h_n = h_n;
    aux->enc_v = enc_v;
    aux->enc_n = enc_n;
    aux->dec_v = dec_v;
    aux->dec_n = dec_n;
    aux->attention = std::move(attention);
  }
  return concat_cols(new_v, new_n);
}

ForwardResult GainModel::forward(Tape& tape, const Graph& g, const MiniBatch& mb) const {
  const auto& c = config_;
  if (mb.depth() != c.depth()) {
    throw ConfigError("minibatch depth " + std::to_string(mb.depth()) + " != model depth " +
                      std::to_string(c.depth()));
  }
  if (g.feature_width() != c.input_dim) {
    throw ConfigError("graph feature width " + std::to_string(g.feature_width()) +
                      " != model input_dim " + std::to_string(c.input_dim));
  }
  const auto& base = mb.frontiers[0];
  Tensor x = Tensor::matrix(base.size(), c.input_dim);
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto src = g.features.row(base[i]);
    std::copy(src.begin(), src.end(), x.row(i).begin());
  }
  ForwardResult out;
  out.layers.resize(c.depth());
  Var h = tape.constant(std::move(x));
  for (std::size_t k = 1; k <= c.depth(); ++k) {
    h = layer_forward(k, h, mb.hops[k - 1], &out.layers[k - 1]);
    out.layers[k - 1].nodes = mb.frontiers[k];
  }
  out.embeddings = l2_normalize_rows(h);
  return out;
}

Var GainModel::node_probabilities(Var embeddings) const {
  if (config_.task == TaskMode::edge_binary) throw ConfigError("node head requested for an edge model");
  Tape& t = embeddings.tape();
  const Var logits = add(matmul(embeddings, param(t, "head.W")), param(t, "head.b"));
  return config_.task == TaskMode::multilabel ? sigmoid(logits) : softmax_rows(logits);
}

Var GainModel::edge_probabilities(Var src, Var dst) const {
  if (config_.task != TaskMode::edge_binary) throw ConfigError("edge head requested for a node model");
  Tape& t = src.tape();
  Var x = concat_cols(src, dst);
  x = dense_relu(x, param(t, "head.fc1.W"), param(t, "head.fc1.b"));
  x = dense_relu(x, param(t, "head.fc2.W"), param(t, "head.fc2.b"));
  return sigmoid(add(matmul(x, param(t, "head.fc3.W")), param(t, "head.fc3.b")));
}

GAIN_NAMESPACE_END
