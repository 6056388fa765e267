#include <doctest.h>

#include <numeric>

#include "gain/objective.hpp"
#include "gain/trainer.hpp"
#include "support.hpp"

using namespace gain;

namespace {

double scalar(Var v) { return v.value().item(); }

// Forward pass of a small full model on the 5-node graph.
struct Fixture {
  Graph g = test::five_node_graph(4, 2);
  ModelConfig config;
  std::unique_ptr<GainModel> model;
  MiniBatch mb;
  std::vector<NodeId> batch{0, 1, 2, 3, 4};

  Fixture() {
    config.input_dim = 4;
    config.layer_dims = {3, 2};
    config.sample_sizes = {2, 2};
    config.num_classes = 3;
    model = std::make_unique<GainModel>(config, 5);
    SamplerConfig sc;
    sc.sizes = config.sample_sizes;
    Rng rng(1);
    mb = build_minibatch(g, batch, sc, rng);
  }

  LossBreakdown loss(Tape& t, const LossOptions& o) const {
    ForwardResult fr = model->forward(t, g, mb);
    return total_loss(model->node_probabilities(fr.embeddings), node_targets(g, batch, TaskMode::multiclass),
                      TaskMode::multiclass, fr, o);
  }
};

}  // namespace

TEST_CASE("supervised loss examples") {
  Tape t;
  SUBCASE("p = 0.5 everywhere gives ln 2") {
    Var p = t.constant(Tensor::matrix(4, 3, Real(0.5)));
    Tensor y = Tensor::from_rows({{1, 0, 1}, {0, 0, 0}, {1, 1, 1}, {0, 1, 0}});
    CHECK(scalar(supervised_loss(p, y, TaskMode::multilabel)) == doctest::Approx(std::log(2.0)));
  }
  SUBCASE("perfect prediction is near zero") {
    Tensor y = Tensor::from_rows({{1, 0}, {0, 1}});
    CHECK(scalar(supervised_loss(t.constant(y), y, TaskMode::multilabel)) < 1e-6);
    CHECK(scalar(supervised_loss(t.constant(y), y, TaskMode::multiclass)) < 1e-6);
  }
  SUBCASE("hand-summed cross-entropy on a 4-sample batch") {
    Tensor p = Tensor::from_rows({{0.7f, 0.2f, 0.1f}, {0.1f, 0.8f, 0.1f}, {0.3f, 0.3f, 0.4f}, {0.25f, 0.5f, 0.25f}});
    std::vector<std::int32_t> labels{0, 1, 2, 0};
    const double expect = -(std::log(0.7) + std::log(0.8) + std::log(0.4) + std::log(0.25)) / 4;
    CHECK(scalar(supervised_loss(t.constant(p), one_hot(labels, 3), TaskMode::multiclass)) ==
          doctest::Approx(expect).epsilon(1e-6));
    CHECK(logloss(p, one_hot(labels, 3), TaskMode::multiclass) == doctest::Approx(expect).epsilon(1e-6));

    Tensor pb = Tensor::from_rows({{0.9f}, {0.2f}, {0.6f}, {0.4f}});
    Tensor yb = Tensor::from_rows({{1}, {0}, {0}, {1}});
    const double eb = -(std::log(0.9) + std::log(0.8) + std::log(0.4) + std::log(0.4)) / 4;
    CHECK(scalar(supervised_loss(t.constant(pb), yb, TaskMode::edge_binary)) == doctest::Approx(eb).epsilon(1e-6));
  }
  SUBCASE("clipping keeps the loss finite") {
    Tensor y = Tensor::from_rows({{1, 0}});
    Var p = t.constant(Tensor::from_rows({{0, 1}}));
    const double l = scalar(supervised_loss(p, y, TaskMode::multilabel));
    CHECK(std::isfinite(l));
    // Both entries sit on a clip bound, rounded to the working precision.
    const double lo = static_cast<Real>(kProbabilityClip);
    const double hi = static_cast<Real>(1.0 - kProbabilityClip);
    CHECK(l == doctest::Approx(-(std::log(lo) + std::log(1 - hi)) / 2).epsilon(1e-5));
  }
  SUBCASE("target validation") {
    CHECK_THROWS_AS(supervised_loss(t.constant(Tensor::matrix(2, 2)), Tensor::matrix(3, 2), TaskMode::multilabel),
                    ShapeError);
    CHECK_THROWS_AS(supervised_loss(t.constant(Tensor::matrix(1, 2)), Tensor::from_rows({{2, 0}}), TaskMode::multilabel),
                    DataError);
    CHECK_THROWS_AS(one_hot(std::vector<std::int32_t>{3}, 3), DataError);
  }
}

TEST_CASE("graph regularization") {
  Tape t;
  Var a = t.constant(Tensor::from_rows({{1, 2}, {0, 0}}));
  CHECK(scalar(graph_regularization(a, a)) == 0);
  Var b = t.constant(Tensor::from_rows({{4, 6}, {0, 0}}));
  // Row norms 5 and 0.
  CHECK(scalar(graph_regularization(b, a)) == doctest::Approx(2.5));
  Var c = t.constant(Tensor::from_rows({{1, 2}, {1, 1}}));
  CHECK(scalar(graph_regularization(b, c)) == doctest::Approx((5.0 + std::sqrt(2.0)) / 2));
}

TEST_CASE("reconstruction loss") {
  Tape t;
  Var hv = t.constant(Tensor::from_rows({{1, 0}}));
  Var hn = t.constant(Tensor::from_rows({{0, 1}}));
  CHECK(scalar(reconstruction_loss(hv, hv, hn, hn)) == 0);
  Var zero = t.constant(Tensor::matrix(1, 2));
  CHECK(scalar(reconstruction_loss(hv, zero, hn, zero)) == doctest::Approx(2.0));

  std::mt19937_64 rng(3);
  Tensor a = test::random_tensor({3, 4}, rng), b = test::random_tensor({3, 4}, rng);
  Tensor c = test::random_tensor({3, 4}, rng), d = test::random_tensor({3, 4}, rng);
  double expect = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    double s1 = 0, s2 = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      s1 += std::pow(double(a(r, j)) - b(r, j), 2);
      s2 += std::pow(double(c(r, j)) - d(r, j), 2);
    }
    expect += (std::sqrt(s1) + std::sqrt(s2)) / 3;
  }
  CHECK(scalar(reconstruction_loss(t.constant(a), t.constant(b), t.constant(c), t.constant(d))) ==
        doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("metrics") {
  SUBCASE("micro-F1") {
    Tensor y = Tensor::from_rows({{1, 0, 1}, {0, 1, 0}});
    CHECK(micro_f1(y, y, TaskMode::multilabel) == 1.0);
    // Thresholded rows {1,0,0} and {0,1,1}: tp 2, fp 1, fn 1.
    Tensor p = Tensor::from_rows({{0.9f, 0.1f, 0.2f}, {0.1f, 0.8f, 0.7f}});
    CHECK(micro_f1(p, y, TaskMode::multilabel) == doctest::Approx(4.0 / 6));
    Tensor pc = Tensor::from_rows({{0.6f, 0.3f, 0.1f}, {0.2f, 0.5f, 0.3f}, {0.1f, 0.1f, 0.8f}});
    Tensor yc = one_hot(std::vector<std::int32_t>{0, 2, 2}, 3);
    CHECK(micro_f1(pc, yc, TaskMode::multiclass) == doctest::Approx(2.0 / 3));  // equals accuracy
    CHECK(micro_f1(Tensor::matrix(1, 2), Tensor::matrix(1, 2), TaskMode::multilabel) == 1.0);
  }
  SUBCASE("AUC") {
    std::vector<double> s{0.9, 0.8, 0.1, 0.2};
    std::vector<int> y{1, 1, 0, 0};
    CHECK(*auc(s, y) == 1.0);
    std::vector<double> s2{0.7, 0.3, 0.5, 0.2};
    CHECK(*auc(s2, y) == doctest::Approx(0.75));
    std::vector<double> tied{0.5, 0.5, 0.5, 0.5};
    CHECK(*auc(tied, y) == doctest::Approx(0.5));
    CHECK_FALSE(auc(s, std::vector<int>{1, 1, 1, 1}).has_value());
  }
  SUBCASE("AUC of shuffled labels is about 0.5") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> s(10000);
    std::vector<int> y(10000);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = u(rng);
      y[i] = i % 2;
    }
    std::shuffle(y.begin(), y.end(), rng);
    const double a = *auc(s, y);
    CHECK(a >= 0.45);
    CHECK(a <= 0.55);
  }
  SUBCASE("ranges on random inputs") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor p = test::random_tensor({10, 3}, rng, 0, 1);
      Tensor y = Tensor::matrix(10, 3);
      for (auto& v : y.values()) v = rng() % 2 ? Real(1) : Real(0);
      const double f = micro_f1(p, y, TaskMode::multilabel);
      CHECK(f >= 0);
      CHECK(f <= 1);
      std::vector<double> s(p.values().begin(), p.values().end());
      std::vector<int> yy(y.size());
      for (std::size_t i = 0; i < yy.size(); ++i) yy[i] = y[i] > 0;
      if (auto a = auc(s, yy)) {
        CHECK(*a >= 0);
        CHECK(*a <= 1);
      }
    }
  }
  SUBCASE("compute_metrics") {
    Tensor p = Tensor::from_rows({{0.9f}, {0.2f}});
    Tensor y = Tensor::from_rows({{1}, {0}});
    Metrics m = compute_metrics(p, y, TaskMode::edge_binary);
    CHECK(*m.auc == 1.0);
    CHECK_FALSE(m.micro_f1);
    CHECK(m.count == 2);
    CHECK(m.to_json()["micro_f1"].is_null());
    CHECK_THROWS_AS(compute_metrics(Tensor::matrix(0, 1), Tensor::matrix(0, 1), TaskMode::edge_binary), ConfigError);
  }
}

TEST_CASE("total loss is the exact weighted sum of its terms") {
  Fixture f;
  for (bool all : {false, true}) {
    Tape t;
    LossBreakdown b = f.loss(t, {0.3, 0.7, all});
    const Real expect = (b.sup.value().item() + (Real(0.3) * b.greg.value().item() + Real(0))) +
                        (Real(0.7) * b.rec.value().item() + Real(0));
    CHECK(b.total.value().item() == expect);
    CHECK(b.greg.value().item() > 0);
    CHECK(b.rec.value().item() > 0);
    auto j = b.to_json();
    CHECK(j["lambda2"] == 0.7);
  }
  Tape t1, t2;
  const double last = f.loss(t1, {1, 1, false}).greg.value().item();
  const double both = f.loss(t2, {1, 1, true}).greg.value().item();
  CHECK(both > last);
}

TEST_CASE("zero lambdas reduce training to the supervised loss") {
  Fixture f;
  Tape t;
  LossBreakdown b = f.loss(t, {0, 0, true});
  CHECK(b.total.value().item() == b.sup.value().item());
  t.backward(b.total);
  const GradientSet with_terms = t.parameter_gradients(f.model->params());

  Tape s;
  LossBreakdown only = f.loss(s, {0, 0, true});
  s.backward(only.sup);
  const GradientSet detached = s.parameter_gradients(f.model->params());
  REQUIRE(with_terms.size() == detached.size());
  for (std::size_t i = 0; i < detached.size(); ++i) {
    INFO(f.model->params()[i].name);
    CHECK(with_terms[i] == detached[i]);
  }
  // Decoder weights feed only the reconstruction term.
  const std::size_t dec = [&] {
    for (std::size_t i = 0; i < f.model->params().size(); ++i)
      if (f.model->params()[i].name == "layer2.decoder.W") return i;
    return std::size_t{0};
  }();
  for (Real v : with_terms[dec].values()) CHECK(v == 0);
}

TEST_CASE("no-autoencoder models report a zero reconstruction term") {
  Fixture f;
  f.config.use_autoencoder = false;
  f.model = std::make_unique<GainModel>(f.config, 5);
  Tape t;
  LossBreakdown b = f.loss(t, {0.5, 0.5, false});
  CHECK(b.rec.value().item() == 0);
  CHECK_THROWS_AS(total_loss(b.sup, Tensor::matrix(1, 1), TaskMode::multiclass, ForwardResult{}, {}), ConfigError);
}
