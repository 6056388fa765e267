#include <doctest.h>

#include <numeric>
#include <set>

#include "gain/adam.hpp"
#include "gain/model.hpp"
#include "support.hpp"

using namespace gain;

namespace {

std::vector<Real> row_of(const Tensor& t, std::size_t r) {
  auto s = t.row(r);
  return {s.begin(), s.end()};
}

ModelConfig small_config(std::size_t layers = 2) {
  ModelConfig c;
  c.input_dim = 4;
  c.layer_dims = layers == 1 ? std::vector<std::size_t>{3} : std::vector<std::size_t>{3, 2};
  c.sample_sizes = layers == 1 ? std::vector<std::size_t>{2} : std::vector<std::size_t>{2, 2};
  c.num_classes = 3;
  return c;
}

MiniBatch all_nodes_batch(const Graph& g, const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  SamplerConfig sc;
  sc.sizes = sizes;
  Rng rng(seed);
  std::vector<NodeId> batch(g.num_nodes());
  std::iota(batch.begin(), batch.end(), NodeId{0});
  return build_minibatch(g, batch, sc, rng);
}

}  // namespace

TEST_CASE("aggregator examples") {
  Tape t;
  Var rows = t.constant(Tensor::from_rows({{1, 3}, {3, 5}}));
  std::vector<std::size_t> off{0, 2};
  CHECK(row_of(aggregate(Aggregator::mean_pool, rows, off, {}).value(), 0) == std::vector<Real>{2, 4});
  CHECK(row_of(aggregate(Aggregator::max_pool, rows, off, {}).value(), 0) == std::vector<Real>{3, 5});
  Var gates = t.constant(Tensor::vector(2));
  CHECK(aggregate(Aggregator::importance_pool, rows, off, gates).value() ==
        aggregate(Aggregator::mean_pool, rows, off, {}).value());
  CHECK_THROWS_AS(aggregate(Aggregator::importance_pool, rows, off, {}), ConfigError);
}

TEST_CASE("uniform importance gates equal mean pooling on random segments") {
  std::mt19937_64 rng(3);
  Tape t;
  // Power-of-two segment lengths keep both reductions exact.
  Var x = t.constant(test::random_tensor({6, 5}, rng));
  std::vector<std::size_t> off{0, 2, 6};
  Var gates = t.constant(Tensor::vector(4, Real(0.7)));
  CHECK(aggregate(Aggregator::importance_pool, x, off, gates).value() ==
        aggregate(Aggregator::mean_pool, x, off, {}).value());
}

TEST_CASE("mean and max pooling ignore neighbor order") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = test::random_tensor({7, 4}, rng);
    std::vector<std::size_t> off{0, 3, 7};
    std::vector<std::size_t> perm{2, 0, 1, 6, 4, 3, 5};
    Tape t;
    Var a = t.constant(x);
    Var b = gather_rows(a, perm);
    const Tensor m1 = aggregate(Aggregator::mean_pool, a, off, {}).value();
    const Tensor m2 = aggregate(Aggregator::mean_pool, b, off, {}).value();
    for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m1[i] == doctest::Approx(m2[i]).epsilon(1e-6));
    CHECK(aggregate(Aggregator::max_pool, a, off, {}).value() ==
          aggregate(Aggregator::max_pool, b, off, {}).value());
  }
}

TEST_CASE("mean pooling scales linearly with the features") {
  std::mt19937_64 rng(8);
  Tensor x = test::random_tensor({5, 3}, rng);
  Tensor y = x;
  for (auto& v : y.values()) v *= 2;  // power of two: exact
  std::vector<std::size_t> off{0, 2, 5};
  Tape t;
  Tensor mx = aggregate(Aggregator::mean_pool, t.constant(x), off, {}).value();
  for (auto& v : mx.values()) v *= 2;
  CHECK(aggregate(Aggregator::mean_pool, t.constant(y), off, {}).value() == mx);
}

TEST_CASE("aggregator-level attention") {
  std::mt19937_64 rng(13);
  Tape t;
  const std::size_t d = 4;
  Var hv = t.constant(test::random_tensor({3, d}, rng));
  Var tw = t.constant(test::random_tensor({d, d}, rng)), tb = t.constant(test::random_tensor({d}, rng));
  Var aw = t.constant(test::random_tensor({2 * d, 1}, rng)), ab = t.constant(test::random_tensor({1}, rng));

  SUBCASE("a single aggregator gets weight 1") {
    Var h = t.constant(test::random_tensor({3, d}, rng));
    std::vector<Var> aggs{h};
    auto [fused, alpha] = attention_fuse(hv, aggs, tw, tb, aw, ab);
    for (std::size_t i = 0; i < 3; ++i) CHECK(alpha.value()(i, 0) == 1.0f);
    CHECK(fused.value() == h.value());
  }
  SUBCASE("identical aggregator outputs pass through") {
    Var c = t.constant(test::random_tensor({3, d}, rng));
    std::vector<Var> aggs{c, c, c};
    auto [fused, alpha] = attention_fuse(hv, aggs, tw, tb, aw, ab);
    for (std::size_t i = 0; i < fused.value().size(); ++i)
      CHECK(fused.value()[i] == doctest::Approx(c.value()[i]).epsilon(1e-6));
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(alpha.value()(i, 0) + alpha.value()(i, 1) + alpha.value()(i, 2) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("output recomposes from the emitted weights") {
    std::vector<Var> aggs;
    for (int a = 0; a < 3; ++a) aggs.push_back(t.constant(test::random_tensor({3, d}, rng)));
    auto [fused, alpha] = attention_fuse(hv, aggs, tw, tb, aw, ab);
    for (std::size_t i = 0; i < 3; ++i) {
      double total = 0;
      for (std::size_t a = 0; a < 3; ++a) {
        CHECK(alpha.value()(i, a) > 0);
        total += alpha.value()(i, a);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
      for (std::size_t j = 0; j < d; ++j) {
        double expect = 0;
        for (std::size_t a = 0; a < 3; ++a) expect += alpha.value()(i, a) * aggs[a].value()(i, j);
        CHECK(fused.value()(i, j) == doctest::Approx(expect).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("encoder") {
  std::mt19937_64 rng(21);
  Tape t;
  Var x = t.constant(test::random_tensor({4, 6}, rng));
  SUBCASE("zero weights and bias give zero codes") {
    Var e = dense_relu(x, t.constant(Tensor::matrix(6, 3)), t.constant(Tensor::vector(3)));
    for (Real v : e.value().values()) CHECK(v == 0);
  }
  SUBCASE("shared parameters encode equal inputs identically") {
    Var w = t.constant(test::random_tensor({6, 3}, rng)), b = t.constant(test::random_tensor({3}, rng));
    CHECK(dense_relu(x, w, b).value() == dense_relu(t.constant(x.value()), w, b).value());
  }
}

TEST_CASE("toy autoencoder learns the identity") {
  // d_in = d = 8; inputs are non-negative so the ReLU decoder can reproduce
  // them. Positive biases keep every unit alive at the start.
  std::mt19937_64 rng(4);
  ParameterStore p;
  auto glorot = [&](std::size_t a, std::size_t b) {
    const double lim = std::sqrt(6.0 / static_cast<double>(a + b));
    return test::random_tensor({a, b}, rng, -lim, lim);
  };
  p.add("enc.W", glorot(8, 8));
  p.add("enc.b", Tensor::vector(8, Real(0.5)));
  p.add("dec.W", glorot(8, 8));
  p.add("dec.b", Tensor::vector(8, Real(0.5)));
  const Tensor data = test::random_tensor({64, 8}, rng, 0.0, 1.0);
  AdamState adam = AdamState::for_store(p, 0.005);
  auto mse = [&](Tape& t) {
    Var x = t.constant(data);
    Var rec = dense_relu(dense_relu(x, t.parameter(p.get("enc.W")), t.parameter(p.get("enc.b"))),
                         t.parameter(p.get("dec.W")), t.parameter(p.get("dec.b")));
    Var diff = sub(rec, x);
    return mean(mul(diff, diff));
  };
  double final_mse = 1;
  for (int step = 0; step < 5000; ++step) {
    Tape t;
    Var l = mse(t);
    final_mse = l.value().item();
    if (final_mse < 1e-4) break;
    t.backward(l);
    adam_step(p, t.parameter_gradients(p), adam);
  }
  CHECK(final_mse < 1e-3);
}

TEST_CASE("cross examples") {
  std::mt19937_64 rng(6);
  Tape t;
  Var hv = t.constant(test::random_tensor({3, 4}, rng));
  Var hn = t.constant(test::random_tensor({3, 4}, rng));
  SUBCASE("zero w1 zeroes the center cross") {
    auto [cv, cn] = cross(hv, hn, t.constant(Tensor::matrix(4, 1)), t.constant(test::random_tensor({4, 1}, rng)));
    for (Real v : cv.value().values()) CHECK(v == 0);
  }
  SUBCASE("unit neighbor vector and unit w1 return h_v") {
    Tensor e1 = Tensor::matrix(3, 4);
    for (std::size_t i = 0; i < 3; ++i) e1(i, 0) = 1;
    Tensor w1 = Tensor::matrix(4, 1);
    w1(0, 0) = 1;
    auto [cv, cn] = cross(hv, t.constant(e1), t.constant(w1), t.constant(w1));
    CHECK(cv.value() == hv.value());
  }
  SUBCASE("associative form equals the naive outer product") {
    Var w1 = t.constant(test::random_tensor({4, 1}, rng));
    Var w2 = t.constant(test::random_tensor({4, 1}, rng));
    auto [cv, cn] = cross(hv, hn, w1, w2);
    const Tensor nv = outer_project(hv, hn, w1).value();
    const Tensor nn = outer_project(hn, hv, w2).value();
    for (std::size_t i = 0; i < nv.size(); ++i) {
      CHECK(cv.value()[i] == doctest::Approx(nv[i]).epsilon(1e-5));
      CHECK(cn.value()[i] == doctest::Approx(nn[i]).epsilon(1e-5));
    }
  }
}

TEST_CASE("GRU fusion") {
  std::mt19937_64 rng(9);
  Tape t;
  const std::size_t d = 8;
  Var a = t.constant(test::random_tensor({3, d}, rng));
  Var b = t.constant(test::random_tensor({3, d}, rng));
  Var zero = t.constant(Tensor::matrix(d, d));

  SUBCASE("zero matrices give half of b") {
    Var out = gru_fuse(a, b, GruWeights{zero, zero, zero, zero, zero, zero});
    for (std::size_t i = 0; i < out.value().size(); ++i) CHECK(out.value()[i] == doctest::Approx(0.5 * b.value()[i]));
  }
  SUBCASE("b = 0 with zero candidate matrices gives zero") {
    Var wz = t.constant(test::random_tensor({d, d}, rng));
    Var out = gru_fuse(a, t.constant(Tensor::matrix(3, d)), GruWeights{wz, zero, wz, zero, zero, zero});
    for (Real v : out.value().values()) CHECK(v == 0);
  }
  SUBCASE("step-by-step recomputation") {
    std::vector<Tensor> m;
    for (int i = 0; i < 6; ++i) m.push_back(test::random_tensor({d, d}, rng, -0.5, 0.5));
    GruWeights w{t.constant(m[0]), t.constant(m[1]), t.constant(m[2]),
                 t.constant(m[3]), t.constant(m[4]), t.constant(m[5])};
    const Tensor out = gru_fuse(a, b, w).value();
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    auto lin = [&](const Tensor& x, const Tensor& W, std::size_t r, std::size_t j) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += x(r, k) * W(k, j);
      return s;
    };
    for (std::size_t r = 0; r < 3; ++r) {
      Tensor rb = Tensor::matrix(3, d);
      for (std::size_t j = 0; j < d; ++j) {
        const double rg = 1 / (1 + std::exp(-(lin(A, m[2], r, j) + lin(B, m[3], r, j))));
        rb(r, j) = static_cast<Real>(rg * B(r, j));
      }
      for (std::size_t j = 0; j < d; ++j) {
        const double z = 1 / (1 + std::exp(-(lin(A, m[0], r, j) + lin(B, m[1], r, j))));
        const double cand = std::tanh(lin(A, m[4], r, j) + lin(rb, m[5], r, j));
        CHECK(out(r, j) == doctest::Approx((1 - z) * B(r, j) + z * cand).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("model layers and forward pass") {
  Graph g = test::five_node_graph(4, 3);
  ModelConfig c = small_config();
  GainModel m(c, 7);

  SUBCASE("isolated node falls back to itself and stays finite") {
    MiniBatch mb = all_nodes_batch(g, c.sample_sizes, 1);
    CHECK(mb.hops[0].count(4) == 0);
    Tape t(Tape::Mode::inference);
    ForwardResult fr = m.forward(t, g, mb);
    CHECK(fr.embeddings.value().all_finite());
    // With one pseudo-neighbor row equal to h_v, mean and max agree, so the
    // fused neighborhood vector equals h_v regardless of attention weights.
    const auto& first = fr.layers.front();
    const std::size_t row4 = 4;
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(first.h_n.value()(row4, j) == doctest::Approx(first.h_v.value()(row4, j)).epsilon(1e-6));
  }
  SUBCASE("every layer outputs width 2d") {
    MiniBatch mb = all_nodes_batch(g, c.sample_sizes, 2);
    Tape t(Tape::Mode::inference);
    Var x = t.constant(Tensor::matrix(mb.frontiers[0].size(), 4, Real(0.5)));
    Var h1 = m.layer_forward(1, x, mb.hops[0], nullptr);
    CHECK(h1.cols() == 6);
    CHECK(h1.rows() == mb.frontiers[1].size());
    Var h2 = m.layer_forward(2, h1, mb.hops[1], nullptr);
    CHECK(h2.cols() == 4);
    CHECK_THROWS_AS(m.layer_forward(2, x, mb.hops[1], nullptr), ShapeError);
  }
  SUBCASE("unit-norm rows, attention rows sum to 1, bit-reproducible") {
    MiniBatch mb = all_nodes_batch(g, c.sample_sizes, 3);
    Tape t1(Tape::Mode::inference), t2(Tape::Mode::inference);
    ForwardResult a = m.forward(t1, g, mb);
    ForwardResult b = m.forward(t2, g, mb);
    CHECK(a.embeddings.value() == b.embeddings.value());
    const Tensor& e = a.embeddings.value();
    CHECK(e.cols() == c.embedding_dim());
    for (std::size_t i = 0; i < e.rows(); ++i) {
      double n = 0;
      for (Real v : e.row(i)) n += double(v) * v;
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (const auto& layer : a.layers) {
      CHECK(layer.attention.cols() == 3);
      for (std::size_t i = 0; i < layer.attention.rows(); ++i) {
        double s = 0;
        for (Real v : layer.attention.row(i)) {
          CHECK(v > 0);
          s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
    GainModel same(c, 7);
    Tape t3(Tape::Mode::inference);
    CHECK(same.forward(t3, g, mb).embeddings.value() == a.embeddings.value());
  }
  SUBCASE("K = 1 is one layer followed by normalization") {
    ModelConfig c1 = small_config(1);
    GainModel m1(c1, 4);
    MiniBatch mb = all_nodes_batch(g, c1.sample_sizes, 4);
    Tape t(Tape::Mode::inference);
    const Tensor full = m1.forward(t, g, mb).embeddings.value();
    Tensor x = Tensor::matrix(mb.frontiers[0].size(), 4);
    for (std::size_t i = 0; i < mb.frontiers[0].size(); ++i) {
      auto r = g.features.row(mb.frontiers[0][i]);
      std::copy(r.begin(), r.end(), x.row(i).begin());
    }
    Var h = m1.layer_forward(1, t.constant(x), mb.hops[0], nullptr);
    CHECK(l2_normalize_rows(h).value() == full);
  }
  SUBCASE("depth and width mismatches are rejected") {
    MiniBatch shallow = all_nodes_batch(g, {2}, 5);
    Tape t;
    CHECK_THROWS_AS(m.forward(t, g, shallow), ConfigError);
    Graph wide = test::five_node_graph(5, 3);
    CHECK_THROWS_AS(m.forward(t, wide, all_nodes_batch(wide, c.sample_sizes, 5)), ConfigError);
  }
}

TEST_CASE("heads") {
  Tape t;
  Var emb = t.constant(Tensor::matrix(2, 4, Real(0.5)));
  ModelConfig c = small_config();
  SUBCASE("zero multiclass logits") {
    GainModel m(c, 1);
    m.params().get("head.W").value.fill(0);
    for (Real v : m.node_probabilities(emb).value().values()) CHECK(v == doctest::Approx(1.0 / 3));
    CHECK_THROWS_AS(m.edge_probabilities(emb, emb), ConfigError);
  }
  SUBCASE("zero multilabel logits") {
    c.task = TaskMode::multilabel;
    GainModel m(c, 1);
    m.params().get("head.W").value.fill(0);
    for (Real v : m.node_probabilities(emb).value().values()) CHECK(v == 0.5f);
  }
  SUBCASE("zero edge head") {
    c.task = TaskMode::edge_binary;
    c.edge_hidden = 5;
    GainModel m(c, 1);
    for (Parameter& p : m.params())
      if (p.name.rfind("head.", 0) == 0) p.value.fill(0);
    const Tensor pr = m.edge_probabilities(emb, emb).value();
    CHECK(pr.shape() == std::vector<std::size_t>{2, 1});
    for (Real v : pr.values()) CHECK(v == 0.5f);
    CHECK_THROWS_AS(m.node_probabilities(emb), ConfigError);
  }
}

TEST_CASE("parameter layout of ablations") {
  ModelConfig c = small_config();
  auto names = [](const GainModel& m) {
    std::set<std::string> s;
    for (const Parameter& p : m.params()) s.insert(p.name);
    return s;
  };
  auto full = names(GainModel(c, 0));
  CHECK(full.count("layer1.attention.theta.W"));
  CHECK(full.count("layer2.importance.gates"));
  CHECK(full.count("layer1.encoder.W"));
  CHECK(full.count("layer1.cross.w1"));
  CHECK(full.count("layer2.gru_neighbor.U_r"));

  c.use_cross = false;
  CHECK_FALSE(names(GainModel(c, 0)).count("layer1.cross.w1"));
  c.use_cross = true;
  c.use_autoencoder = false;
  GainModel no_ae(c, 0);
  CHECK_FALSE(names(no_ae).count("layer1.decoder.W"));
  CHECK(no_ae.params().get("layer1.cross.w1").value.rows() == 4);  // raw width
  c.use_autoencoder = true;
  c.aggregators = {Aggregator::mean_pool};
  auto mean_only = names(GainModel(c, 0));
  CHECK_FALSE(mean_only.count("layer1.attention.theta.W"));
  CHECK_FALSE(mean_only.count("layer1.importance.gates"));
}

TEST_CASE("model config validation and serialization") {
  ModelConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.layer_input_dim(1) == 4);
  CHECK(c.layer_input_dim(2) == 6);
  ModelConfig back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));

  ModelConfig bad = c;
  bad.sample_sizes = {2};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.aggregators = {};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.aggregators = {Aggregator::max_pool, Aggregator::max_pool};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.input_dim = 0;
  CHECK_THROWS_AS(GainModel(bad, 0), ConfigError);
  CHECK(parse_aggregator("importance") == Aggregator::importance_pool);
  CHECK(parse_task_mode("edge") == TaskMode::edge_binary);
}

TEST_CASE("adopting a parameter store checks names and shapes") {
  ModelConfig c = small_config();
  GainModel m(c, 3);
  GainModel copy(c, m.params());
  for (std::size_t i = 0; i < m.params().size(); ++i) CHECK(copy.params()[i].value == m.params()[i].value);

  ParameterStore missing;
  for (const Parameter& p : m.params())
    if (p.name != "head.b") missing.add(p.name, p.value);
  CHECK_THROWS_AS(GainModel(c, missing), ConfigError);

  ParameterStore wrong;
  for (const Parameter& p : m.params()) wrong.add(p.name, p.name == "head.b" ? Tensor::vector(7) : p.value);
  CHECK_THROWS_AS(GainModel(c, wrong), ConfigError);

  ParameterStore extra = m.params();
  extra.add("stray", Tensor::vector(1));
  CHECK_THROWS_AS(GainModel(c, extra), ConfigError);
}
