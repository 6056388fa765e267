#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "gain/adam.hpp"
#include "gain/checkpoint.hpp"
#include "gain/io.hpp"
#include "gain/ops.hpp"
#include "support.hpp"

using namespace gain;
using doctest::Approx;

TEST_CASE("tensor shapes and accessors") {
  Tensor m = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m(1, 2) == 6);
  CHECK(m.size() == 6);
  Tensor v = Tensor::vector(4, 2);
  CHECK(v.rows() == 1);
  CHECK(v.cols() == 4);
  CHECK(Tensor::scalar(3).item() == 3);
  CHECK_THROWS_AS(m.item(), ConfigError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<Real>{1, 2, 3}), ConfigError);
  CHECK_THROWS_AS(Tensor({1, 1, 1}), ConfigError);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  Var s = softmax_rows(t.constant(Tensor::from_rows({{0, 0, 0}})));
  for (Real x : s.value().values()) CHECK(x == Approx(1.0 / 3));
}

TEST_CASE("L2 normalization of a 3-4-5 row") {
  Tape t;
  Var n = l2_normalize_rows(t.constant(Tensor::from_rows({{3, 4}, {0, 0}})));
  CHECK(n.value()(0, 0) == Approx(0.6));
  CHECK(n.value()(0, 1) == Approx(0.8));
  CHECK(n.value()(1, 0) == 0);
}

TEST_CASE("matmul matches a hand-rolled triple loop on random integers") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> d(-9, 9);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = Tensor::matrix(2, 3), b = Tensor::matrix(3, 2);
    for (auto& x : a.values()) x = static_cast<Real>(d(rng));
    for (auto& x : b.values()) x = static_cast<Real>(d(rng));
    Tape t;
    const Tensor c = matmul(t.constant(a), t.constant(b)).value();
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        Real expect = 0;
        for (std::size_t k = 0; k < 3; ++k) expect += a(i, k) * b(k, j);
        CHECK(c(i, j) == expect);
      }
    }
  }
}

TEST_CASE("shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(Tensor::matrix(2, 3));
  Var b = t.constant(Tensor::matrix(2, 3));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, t.constant(Tensor::matrix(3, 2))), ShapeError);
}

TEST_CASE("backward: sum gives ones, norm gives unit vector") {
  Tape t;
  Var w = t.variable(Tensor::from_rows({{1, -2}, {3, 4}}));
  Var unused = t.variable(Tensor::vector(3, 1));
  t.backward(sum(w));
  for (Real g : t.grad(w).values()) CHECK(g == 1);
  for (Real g : t.grad(unused).values()) CHECK(g == 0);

  Tape t2;
  Var x = t2.variable(Tensor::from_rows({{3, 4}}));
  t2.backward(sum(row_l2_norm(x)));
  CHECK(t2.grad(x)[0] == Approx(0.6));
  CHECK(t2.grad(x)[1] == Approx(0.8));
}

TEST_CASE("backward rejects non-scalar losses and inference tapes") {
  Tape t;
  Var w = t.variable(Tensor::matrix(2, 2, 1));
  CHECK_THROWS_AS(t.backward(w), ConfigError);
  Tape inf(Tape::Mode::inference);
  Var s = sum(inf.variable(Tensor::matrix(2, 2, 1)));
  CHECK_THROWS_AS(inf.backward(s), ConfigError);
}

TEST_CASE("non-finite forward values are reported") {
  Tape t;
  Var z = t.constant(Tensor::from_rows({{0, 1}}));
  CHECK_THROWS_AS(log(z), NumericFault);
  t.set_check_finite(false);
  CHECK_NOTHROW(log(z));
}

TEST_CASE("value references stay valid while the tape grows") {
  Tape t;
  Var a = t.constant(Tensor::from_rows({{1, 2}}));
  const Tensor& ref = a.value();
  for (int i = 0; i < 1000; ++i) affine(a, 2, 0);
  CHECK(ref == Tensor::from_rows({{1, 2}}));
}

TEST_CASE("parameters alias the store and accumulate once") {
  ParameterStore store;
  store.add("w", Tensor::from_rows({{2}}));
  Tape t;
  Var a = t.parameter(store.get("w"));
  Var b = t.parameter(store.get("w"));
  CHECK(a.id() == b.id());
  t.backward(sum(mul(a, b)));  // d(w^2)/dw = 2w
  auto grads = t.parameter_gradients(store);
  CHECK(grads[0][0] == Approx(4));
}

TEST_CASE("segment reductions") {
  Tape t;
  Var rows = t.constant(Tensor::from_rows({{1, 3}, {3, 5}, {7, -1}}));
  std::vector<std::size_t> off{0, 2, 3};
  Tensor m = segment_mean(rows, off).value();
  CHECK(m(0, 0) == 2);
  CHECK(m(0, 1) == 4);
  CHECK(m(1, 0) == 7);
  Tensor x = segment_max(rows, off).value();
  CHECK(x(0, 0) == 3);
  CHECK(x(0, 1) == 5);

  SUBCASE("full-mask mean equals the plain column mean exactly") {
    std::mt19937_64 rng(3);
    Tape t2;
    Var r = t2.constant(test::random_tensor({7, 5}, rng));
    std::vector<std::size_t> all{0, 7};
    CHECK(segment_mean(r, all).value() == mean_rows(r).value());
  }
  SUBCASE("equal gates give the mean") {
    Var gates = t.constant(Tensor::vector(4, Real(0.3)));
    Tensor g = segment_gated_sum(rows, gates, off).value();
    CHECK(g(0, 0) == Approx(2));
    CHECK(g(0, 1) == Approx(4));
    CHECK(g(1, 1) == Approx(-1));
  }
  SUBCASE("gate vector shorter than a segment is rejected") {
    Var gates = t.constant(Tensor::vector(1));
    CHECK_THROWS_AS(segment_gated_sum(rows, gates, off), ConfigError);
  }
}

TEST_CASE("32-bit gradients agree with finite differences to 1e-2") {
  std::mt19937_64 rng(5);
  ParameterStore p;
  p.add("a", test::random_tensor({3, 4}, rng));
  p.add("w", test::random_tensor({4, 2}, rng));
  auto loss = [&](Tape& t) {
    Var a = t.parameter(p.get("a")), w = t.parameter(p.get("w"));
    return sum(mul(sigmoid(matmul(a, w)), tanh(matmul(a, w))));
  };
  auto r = test::finite_difference_check(p, loss, 1e-2, 1e-3);
  CHECK_MESSAGE(r.max_rel_error < 1e-2, r.worst);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    ParameterStore p;
    p.add("x", Tensor::from_rows({{1.5, -2}}));
    AdamState s = AdamState::for_store(p, 0.1);
    adam_step(p, zero_gradients(p), s);
    CHECK(p.get("x").value == Tensor::from_rows({{1.5, -2}}));
    CHECK(s.step == 1);
  }
  SUBCASE("single step with unit gradient moves by the learning rate") {
    ParameterStore p;
    p.add("x", Tensor::scalar(1));
    AdamState s = AdamState::for_store(p, 0.1);
    GradientSet g{Tensor::scalar(1)};
    adam_step(p, g, s);
    // m_hat = 1, v_hat = 1, step = 0.1 / (1 + 1e-8)
    CHECK(p.get("x").value.item() == Approx(0.9).epsilon(1e-6));
  }
  SUBCASE("200 steps on theta^2 converge") {
    ParameterStore p;
    p.add("x", Tensor::scalar(1));
    AdamState s = AdamState::for_store(p, 0.05);
    for (int i = 0; i < 200; ++i) {
      GradientSet g{Tensor::scalar(2 * p.get("x").value.item())};
      adam_step(p, g, s);
    }
    CHECK(std::abs(p.get("x").value.item()) < 1e-2);
  }
  SUBCASE("non-finite gradient names the parameter and changes nothing") {
    ParameterStore p;
    p.add("a", Tensor::scalar(1));
    p.add("bad", Tensor::scalar(2));
    AdamState s = AdamState::for_store(p, 0.1);
    GradientSet g{Tensor::scalar(1), Tensor::scalar(std::numeric_limits<Real>::quiet_NaN())};
    try {
      adam_step(p, g, s);
      FAIL("expected NumericFault");
    } catch (const NumericFault& e) {
      CHECK(std::string(e.what()).find("bad") != std::string::npos);
    }
    CHECK(p.get("a").value.item() == 1);
    CHECK(s.step == 0);
  }
}

TEST_CASE("checkpoint round trip") {
  test::TempDir dir("ckpt");
  std::mt19937_64 rng(9);
  ParameterStore p;
  p.add("layer1.W", test::random_tensor({3, 5}, rng));
  p.add("layer1.b", test::random_tensor({5}, rng));
  p.add("s", Tensor::scalar(Real(0.25)));
  AdamState s = AdamState::for_store(p, 0.01);
  s.step = 7;
  save_checkpoint(dir / "m.ckpt", p, &s, {{"note", "x"}});
  Checkpoint c = load_checkpoint(dir / "m.ckpt");
  REQUIRE(c.params.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(c.params[i].name == p[i].name);
    CHECK(c.params[i].value == p[i].value);
  }
  CHECK(c.adam["step"] == 7);
  CHECK(c.metadata["note"] == "x");

  SUBCASE("corruption is detected") {
    std::ofstream(dir / "bad.ckpt", std::ios::binary) << "GAINCKPTxx";
    CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
    std::ofstream(dir / "junk.ckpt", std::ios::binary) << "hello";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), DataError);
    {
      std::ofstream app(dir / "m.ckpt", std::ios::binary | std::ios::app);
      app << "extra";
    }
    CHECK_THROWS_AS(load_checkpoint(dir / "m.ckpt"), DataError);
  }
}

TEST_CASE("feature files") {
  test::TempDir dir("feat");
  std::mt19937_64 rng(2);
  Tensor f = test::random_tensor({4, 3}, rng);
  write_features(dir / "f.bin", f);
  CHECK(read_features(dir / "f.bin") == f);
  CHECK(std::filesystem::file_size(dir / "f.bin") == 4 + 8 + 8 + 12 * 4);

  std::ofstream(dir / "f.csv") << "1,2.5\n-3,4\n";
  Tensor c = read_features(dir / "f.csv");
  CHECK(c == Tensor::from_rows({{1, 2.5}, {-3, 4}}));

  std::ofstream(dir / "bad.csv") << "1,2\n3\n";
  try {
    read_features(dir / "bad.csv");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("bad.csv:2") != std::string::npos);
  }
}

TEST_CASE("npy reader") {
  test::TempDir dir("npy");
  auto write_npy = [&](const std::string& name, const std::string& descr, const std::string& shape,
                       const void* data, std::size_t bytes) {
    std::string header = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shape + ", }";
    while ((10 + header.size() + 1) % 64 != 0) header += ' ';
    header += '\n';
    std::ofstream out(dir / name, std::ios::binary);
    out.write("\x93NUMPY\x01\x00", 8);
    const std::uint16_t len = static_cast<std::uint16_t>(header.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out << header;
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  };
  const float f[6] = {1, 2, 3, 4, 5, 6};
  write_npy("a.npy", "<f4", "(2, 3)", f, sizeof f);
  NpyArray a = read_npy(dir / "a.npy");
  CHECK(a.shape == std::vector<std::size_t>{2, 3});
  CHECK(a.data[5] == 6);
  const std::int64_t ids[3] = {7, 8, 9};
  write_npy("b.npy", "<i8", "(3,)", ids, sizeof ids);
  NpyArray b = read_npy(dir / "b.npy");
  CHECK(b.shape == std::vector<std::size_t>{3});
  CHECK(b.data[2] == 9);
}
