#pragma once

// Shared test helpers. Compiled into both precision builds; the 64-bit
// suites define GAIN_DOUBLE_PRECISION before anything else is included.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "gain/graph.hpp"
#include "gain/parameters.hpp"
#include "gain/tape.hpp"

namespace test {

using namespace gain;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gain-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& x : t.values()) x = static_cast<Real>(u(rng));
  return t;
}

struct GradCheck {
  double max_rel_error = 0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
};

/// Central differences on every entry of every parameter. `loss` must build
/// the scalar loss on the given tape from the current parameter values.
inline GradCheck finite_difference_check(ParameterStore& params, const std::function<Var(Tape&)>& loss,
                                         double h = 1e-5, double floor = 1e-6) {
  GradientSet analytic;
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
    analytic = tape.parameter_gradients(params);
  }
  auto eval = [&] {
    Tape tape(Tape::Mode::inference);
    return static_cast<double>(loss(tape).value().item());
  };
  GradCheck out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& value = params[p].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const Real saved = value[i];
      value[i] = static_cast<Real>(saved + h);
      const double up = eval();
      value[i] = static_cast<Real>(saved - h);
      const double down = eval();
      value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        std::ostringstream w;
        w << params[p].name << "[" << i << "] analytic=" << a << " numeric=" << numeric;
        out.worst = w.str();
      }
    }
  }
  return out;
}

/// 3-node path 0-1-2.
inline Graph path_graph() {
  std::vector<WeightedEdge> e{{0, 1, 1.0}, {1, 2, 1.0}};
  return Graph::from_edges(3, e, true);
}

/// Five nodes: a triangle 0-1-2, a pendant 3 on node 2, and isolated 4.
/// Features are uniform in [-1, 1]; labels cycle through three classes.
inline Graph five_node_graph(std::size_t feature_dim, std::uint64_t seed) {
  std::vector<WeightedEdge> e{{0, 1, 1.0}, {0, 2, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}};
  Graph g = Graph::from_edges(5, e, true);
  std::mt19937_64 rng(seed);
  g.features = random_tensor({5, feature_dim}, rng);
  g.labels.kind = LabelKind::single;
  g.labels.num_classes = 3;
  g.labels.single = {0, 1, 2, 0, 1};
  g.labels.present.assign(5, 1);
  g.node_split = {Split::train, Split::train, Split::val, Split::test, Split::train};
  g.validate();
  return g;
}

}  // namespace test
