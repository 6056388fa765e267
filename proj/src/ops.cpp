#include "gain/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <memory>
#include <cmath>
#include <string>

GAIN_NAMESPACE_BEGIN

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatView = Eigen::Map<const RowMat>;
using MutMatView = Eigen::Map<RowMat>;

MatView view(const Tensor& t) {
  return MatView(t.data(), static_cast<Eigen::Index>(t.rows()),
                 static_cast<Eigen::Index>(t.cols()));
}

MutMatView mut_view(Tensor& t) {
  return MutMatView(t.data(), static_cast<Eigen::Index>(t.rows()),
                    static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

Tape& common_tape(const char* op, Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ConfigError(std::string(op) + ": inputs must share one tape");
  }
  return a.tape();
}

Tensor& grad_of(Var v) { return v.tape().grad_buffer(v); }

void check_segments(const char* op, const Tensor& x, std::span<const std::size_t> offsets) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != x.rows()) {
    throw ShapeError(std::string(op) + ": segment offsets do not cover " + x.shape_string());
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] <= offsets[s]) {
      throw ShapeError(std::string(op) + ": empty segment " + std::to_string(s));
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = common_tape("matmul", a, b);
  const Tensor& x = a.value();
  const Tensor& w = b.value();
  if (x.cols() != w.rows()) shape_fail("matmul", x, w);
  Tensor y = Tensor::matrix(x.rows(), w.cols());
  mut_view(y).noalias() = view(x) * view(w);
  return t.record("matmul", std::move(y), {a, b}, [a, b, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    if (t.needs_grad(a)) mut_view(grad_of(a)).noalias() += view(g) * view(b.value()).transpose();
    if (t.needs_grad(b)) mut_view(grad_of(b)).noalias() += view(a.value()).transpose() * view(g);
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape("add", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.same_shape(z)) {
    Tensor y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += z[i];
    return t.record("add", std::move(y), {a, b}, [a, b, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
      for (Var v : {a, b}) {
        if (!t.needs_grad(v)) continue;
        Tensor& gv = grad_of(v);
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
      }
    });
  }
  if (z.rows() != 1 || z.cols() != x.cols()) shape_fail("add", x, z);
  Tensor y = x;
  const std::size_t n = x.rows(), d = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] += z[c];
  }
  return t.record("add_row", std::move(y), {a, b}, [a, b, &t, n, d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    if (t.needs_grad(a)) {
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = grad_of(b);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
      }
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = common_tape("sub", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (!x.same_shape(z)) shape_fail("sub", x, z);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= z[i];
  return t.record("sub", std::move(y), {a, b}, [a, b, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    if (t.needs_grad(a)) {
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape("mul", a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (!x.same_shape(z)) shape_fail("mul", x, z);
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= z[i];
  return t.record("mul", std::move(y), {a, b}, [a, b, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    if (t.needs_grad(a)) {
      Tensor& ga = grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * z[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Var mul_col(Var a, Var c) {
  Tape& t = common_tape("mul_col", a, c);
  const Tensor& x = a.value();
  const Tensor& s = c.value();
  if (s.cols() != 1 || s.size() != x.rows()) shape_fail("mul_col", x, s);
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y = x;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) y[r * d + j] *= s[r];
  }
  return t.record("mul_col", std::move(y), {a, c}, [a, c, &t, n, d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    const Tensor& x = a.value();
    const Tensor& s = c.value();
    if (t.needs_grad(a)) {
      Tensor& ga = grad_of(a);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += g[r * d + j] * s[r];
      }
    }
    if (t.needs_grad(c)) {
      Tensor& gc = grad_of(c);
      for (std::size_t r = 0; r < n; ++r) {
        Real acc = 0;
        for (std::size_t j = 0; j < d; ++j) acc += g[r * d + j] * x[r * d + j];
        gc[r] += acc;
      }
    }
  });
}

Var affine(Var a, Real scale, Real shift) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = scale * x[i] + shift;
  Tape& t = a.tape();
  return t.record("affine", std::move(y), {a}, [a, &t, scale](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    Tensor& ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += scale * g[i];
  });
}

namespace {

// Element-wise op whose derivative is expressed through the output value.
template <typename F, typename D>
Var elementwise_by_output(const char* op, Var a, F f, D dy) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  Tape& t = a.tape();
  return t.record(op, std::move(y), {a}, [a, dy](const Tensor& g, const Tensor& yv) {
    Tensor& ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dy(yv[i]);
  });
}

}  // namespace

Var sigmoid(Var a) {
  return elementwise_by_output(
      "sigmoid", a,
      [](Real x) {
        if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real(1) + e);
      },
      [](Real y) { return y * (Real(1) - y); });
}

Var tanh(Var a) {
  return elementwise_by_output(
      "tanh", a, [](Real x) { return std::tanh(x); }, [](Real y) { return Real(1) - y * y; });
}

Var relu(Var a) {
  return elementwise_by_output(
      "relu", a, [](Real x) { return x > 0 ? x : Real(0); },
      [](Real y) { return y > 0 ? Real(1) : Real(0); });
}

Var log(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::log(x[i]);
  Tape& t = a.tape();
  return t.record("log", std::move(y), {a}, [a](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    const Tensor& x = a.value();
    Tensor& ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

Var clip(Var a, Real lo, Real hi) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::clamp(x[i], lo, hi);
  Tape& t = a.tape();
  return t.record("clip", std::move(y), {a}, [a, lo, hi](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    const Tensor& x = a.value();
    Tensor& ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) ga[i] += g[i];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  Tape& t = parts[0].tape();
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw ConfigError("concat_cols: inputs must share one tape");
    if (p.rows() != n) shape_fail("concat_cols", parts[0].value(), p.value());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor y = Tensor::matrix(n, total);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    for (std::size_t r = 0; r < n; ++r) {
      std::copy_n(x.data() + r * widths[k], widths[k], y.data() + r * total + off);
    }
    off += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat_cols", std::move(y), parts,
                  [inputs, widths, n, total, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < inputs.size(); ++k) {
                      if (t.needs_grad(inputs[k])) {
                        Tensor& gk = grad_of(inputs[k]);
                        for (std::size_t r = 0; r < n; ++r) {
                          for (std::size_t c = 0; c < widths[k]; ++c) {
                            gk[r * widths[k] + c] += g[r * total + off + c];
                          }
                        }
                      }
                      off += widths[k];
                    }
                  });
}

Var concat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(parts);
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_rows: no inputs");
  Tape& t = parts[0].tape();
  const std::size_t d = parts[0].cols();
  std::vector<std::size_t> heights;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw ConfigError("concat_rows: inputs must share one tape");
    if (p.cols() != d) shape_fail("concat_rows", parts[0].value(), p.value());
    heights.push_back(p.rows());
    total += p.rows();
  }
  Tensor y = Tensor::matrix(total, d);
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), y.data() + off * d);
    off += p.rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record("concat_rows", std::move(y), parts,
                  [inputs, heights, d, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < inputs.size(); ++k) {
                      if (t.needs_grad(inputs[k])) {
                        Tensor& gk = grad_of(inputs[k]);
                        for (std::size_t i = 0; i < heights[k] * d; ++i) gk[i] += g[off * d + i];
                      }
                      off += heights[k];
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (begin > end || end > x.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + x.shape_string());
  }
  const std::size_t d = x.cols();
  Tensor y = Tensor::matrix(end - begin, d);
  std::copy(x.data() + begin * d, x.data() + end * d, y.data());
  Tape& t = a.tape();
  return t.record("slice_rows", std::move(y), {a}, [a, begin, d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    Tensor& ga = grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * d + i] += g[i];
  });
}

Var gather_rows(Var a, std::vector<std::size_t> index) {
  const Tensor& x = a.value();
  const std::size_t d = x.cols();
  Tensor y = Tensor::matrix(index.size(), d);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " out of range for " +
                       x.shape_string());
    }
    std::copy_n(x.data() + index[i] * d, d, y.data() + i * d);
  }
  Tape& t = a.tape();
  return t.record("gather_rows", std::move(y), {a},
                  [a, index = std::move(index), d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
                    Tensor& ga = grad_of(a);
                    for (std::size_t i = 0; i < index.size(); ++i) {
                      Real* dst = ga.data() + index[i] * d;
                      const Real* src = g.data() + i * d;
                      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                    }
                  });
}

Var column(Var a, std::size_t j) {
  const Tensor& x = a.value();
  if (j >= x.cols()) throw ShapeError("column: index out of range for " + x.shape_string());
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y = Tensor::matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) y[r] = x[r * d + j];
  Tape& t = a.tape();
  return t.record("column", std::move(y), {a}, [a, j, n, d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    Tensor& ga = grad_of(a);
    for (std::size_t r = 0; r < n; ++r) ga[r * d + j] += g[r];
  });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y(x.shape());
  for (std::size_t r = 0; r < n; ++r) {
    const Real* xr = x.data() + r * d;
    Real* yr = y.data() + r * d;
    const Real m = *std::max_element(xr, xr + d);
    Real z = 0;
    for (std::size_t c = 0; c < d; ++c) {
      yr[c] = std::exp(xr[c] - m);
      z += yr[c];
    }
    for (std::size_t c = 0; c < d; ++c) yr[c] /= z;
  }
  Tape& t = a.tape();
  return t.record("softmax_rows", std::move(y), {a}, [a, n, d](const Tensor& g, const Tensor& yv) {
    Tensor& ga = grad_of(a);
    for (std::size_t r = 0; r < n; ++r) {
      Real dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * yv[r * d + c];
      for (std::size_t c = 0; c < d; ++c) {
        ga[r * d + c] += yv[r * d + c] * (g[r * d + c] - dot);
      }
    }
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  Real s = 0;
  for (Real v : x.values()) s += v;
  Tape& t = a.tape();
  return t.record("sum", Tensor::scalar(s), {a}, [a](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    Tensor& ga = grad_of(a);
    for (auto& v : ga.values()) v += g[0];
  });
}

Var mean(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  Real s = 0;
  for (Real v : x.values()) s += v;
  const Real inv = Real(1) / static_cast<Real>(x.size());
  Tape& t = a.tape();
  return t.record("mean", Tensor::scalar(s * inv), {a}, [a, inv](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    Tensor& ga = grad_of(a);
    for (auto& v : ga.values()) v += g[0] * inv;
  });
}

Var mean_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw ShapeError("mean_rows of empty tensor");
  Tensor y = Tensor::matrix(1, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) y[c] += x[r * d + c];
  }
  for (std::size_t c = 0; c < d; ++c) y[c] /= static_cast<Real>(n);
  Tape& t = a.tape();
  return t.record("mean_rows", std::move(y), {a}, [a, n, d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    Tensor& ga = grad_of(a);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += g[c] / static_cast<Real>(n);
    }
  });
}

Var row_l2_norm(Var a) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y = Tensor::matrix(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    Real s = 0;
    for (std::size_t c = 0; c < d; ++c) s += x[r * d + c] * x[r * d + c];
    y[r] = std::sqrt(s);
  }
  Tape& t = a.tape();
  return t.record("row_l2_norm", std::move(y), {a}, [a, n, d](const Tensor& g, const Tensor& norms) {
    const Tensor& x = a.value();
    Tensor& ga = grad_of(a);
    for (std::size_t r = 0; r < n; ++r) {
      const Real nr = norms[r];
      if (nr == 0) continue;
      for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += g[r] * x[r * d + c] / nr;
    }
  });
}

Var l2_normalize_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t n = x.rows(), d = x.cols();
  Tensor y(x.shape());
  auto norms = std::make_shared<std::vector<Real>>(n);
  for (std::size_t r = 0; r < n; ++r) {
    Real s = 0;
    for (std::size_t c = 0; c < d; ++c) s += x[r * d + c] * x[r * d + c];
    const Real nr = std::sqrt(s);
    (*norms)[r] = nr;
    for (std::size_t c = 0; c < d; ++c) y[r * d + c] = nr > 0 ? x[r * d + c] / nr : Real(0);
  }
  Tape& t = a.tape();
  return t.record("l2_normalize_rows", std::move(y), {a},
                  [a, norms, n, d](const Tensor& g, const Tensor& yv) {
                    Tensor& ga = grad_of(a);
                    for (std::size_t r = 0; r < n; ++r) {
                      const Real nr = (*norms)[r];
                      if (nr == 0) continue;
                      Real dot = 0;
                      for (std::size_t c = 0; c < d; ++c) dot += g[r * d + c] * yv[r * d + c];
                      for (std::size_t c = 0; c < d; ++c) {
                        ga[r * d + c] += (g[r * d + c] - yv[r * d + c] * dot) / nr;
                      }
                    }
                  });
}

Var segment_mean(Var x, std::span<const std::size_t> offsets) {
  const Tensor& v = x.value();
  check_segments("segment_mean", v, offsets);
  const std::size_t segs = offsets.size() - 1, d = v.cols();
  Tensor y = Tensor::matrix(segs, d);
  for (std::size_t s = 0; s < segs; ++s) {
    const auto len = static_cast<Real>(offsets[s + 1] - offsets[s]);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t c = 0; c < d; ++c) y[s * d + c] += v[r * d + c];
    }
    for (std::size_t c = 0; c < d; ++c) y[s * d + c] /= len;
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  Tape& t = x.tape();
  return t.record("segment_mean", std::move(y), {x},
                  [x, off = std::move(off), segs, d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
                    Tensor& gx = grad_of(x);
                    for (std::size_t s = 0; s < segs; ++s) {
                      const Real inv = Real(1) / static_cast<Real>(off[s + 1] - off[s]);
                      for (std::size_t r = off[s]; r < off[s + 1]; ++r) {
                        for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += g[s * d + c] * inv;
                      }
                    }
                  });
}

Var segment_max(Var x, std::span<const std::size_t> offsets) {
  const Tensor& v = x.value();
  check_segments("segment_max", v, offsets);
  const std::size_t segs = offsets.size() - 1, d = v.cols();
  Tensor y = Tensor::matrix(segs, d);
  std::vector<std::size_t> argmax(segs * d);
  for (std::size_t s = 0; s < segs; ++s) {
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (v[r * d + c] > v[best * d + c]) best = r;
      }
      argmax[s * d + c] = best;
      y[s * d + c] = v[best * d + c];
    }
  }
  Tape& t = x.tape();
  return t.record("segment_max", std::move(y), {x},
                  [x, argmax = std::move(argmax), d](const Tensor& g, [[maybe_unused]] const Tensor& out) {
                    Tensor& gx = grad_of(x);
                    for (std::size_t i = 0; i < argmax.size(); ++i) {
                      gx[argmax[i] * d + i % d] += g[i];
                    }
                  });
}

Var segment_gated_sum(Var x, Var gates, std::span<const std::size_t> offsets) {
  Tape& t = common_tape("segment_gated_sum", x, gates);
  const Tensor& v = x.value();
  const Tensor& gt = gates.value();
  check_segments("segment_gated_sum", v, offsets);
  const std::size_t segs = offsets.size() - 1, d = v.cols(), slots = gt.size();
  // Softmax weights of every slot of every segment, flattened like x's rows.
  auto weights = std::make_shared<std::vector<Real>>(v.rows());
  Tensor y = Tensor::matrix(segs, d);
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t len = offsets[s + 1] - offsets[s];
    if (len > slots) {
      throw ShapeError("segment_gated_sum: segment of length " + std::to_string(len) +
                       " exceeds " + std::to_string(slots) + " gates");
    }
    const Real m = *std::max_element(gt.data(), gt.data() + len);
    Real z = 0;
    for (std::size_t j = 0; j < len; ++j) z += std::exp(gt[j] - m);
    for (std::size_t j = 0; j < len; ++j) {
      const Real w = std::exp(gt[j] - m) / z;
      (*weights)[offsets[s] + j] = w;
      const std::size_t r = offsets[s] + j;
      for (std::size_t c = 0; c < d; ++c) y[s * d + c] += w * v[r * d + c];
    }
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  return t.record("segment_gated_sum", std::move(y), {x, gates},
                  [x, gates, weights, off = std::move(off), segs, d, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
                    const Tensor& v = x.value();
                    const bool gx_on = t.needs_grad(x), gg_on = t.needs_grad(gates);
                    for (std::size_t s = 0; s < segs; ++s) {
                      const std::size_t len = off[s + 1] - off[s];
                      if (gx_on) {
                        Tensor& gx = grad_of(x);
                        for (std::size_t j = 0; j < len; ++j) {
                          const std::size_t r = off[s] + j;
                          const Real w = (*weights)[r];
                          for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += w * g[s * d + c];
                        }
                      }
                      if (gg_on) {
                        Tensor& gg = grad_of(gates);
                        // dL/dw_j = g_s . x_j, then through the slot softmax.
                        std::vector<Real> dw(len);
                        Real wdot = 0;
                        for (std::size_t j = 0; j < len; ++j) {
                          const std::size_t r = off[s] + j;
                          Real acc = 0;
                          for (std::size_t c = 0; c < d; ++c) acc += g[s * d + c] * v[r * d + c];
                          dw[j] = acc;
                          wdot += (*weights)[r] * acc;
                        }
                        for (std::size_t j = 0; j < len; ++j) {
                          gg[j] += (*weights)[off[s] + j] * (dw[j] - wdot);
                        }
                      }
                    }
                  });
}

Var outer_project(Var a, Var b, Var w) {
  Tape& t = common_tape("outer_project", a, b);
  common_tape("outer_project", a, w);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const Tensor& wv = w.value();
  if (!x.same_shape(z)) shape_fail("outer_project", x, z);
  const std::size_t n = x.rows(), d = x.cols();
  if (wv.rows() != d || wv.cols() != 1) shape_fail("outer_project", x, wv);
  Tensor y = Tensor::matrix(n, d);
  RowMat outer(d, d);
  for (std::size_t r = 0; r < n; ++r) {
    const Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> ar(x.data() + r * d, d);
    const Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> br(z.data() + r * d, d);
    const Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, 1>> wc(wv.data(), d);
    outer.noalias() = ar * br.transpose();
    Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, 1>> yr(y.data() + r * d, d);
    yr.noalias() = outer * wc;
  }
  return t.record("outer_project", std::move(y), {a, b, w}, [a, b, w, n, d, &t](const Tensor& g, [[maybe_unused]] const Tensor& out) {
    const Tensor& x = a.value();
    const Tensor& z = b.value();
    const Tensor& wv = w.value();
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const Eigen::Map<const Vec> wc(wv.data(), d);
    RowMat outer(d, d), d_outer(d, d);
    for (std::size_t r = 0; r < n; ++r) {
      const Eigen::Map<const Vec> ar(x.data() + r * d, d);
      const Eigen::Map<const Vec> br(z.data() + r * d, d);
      const Eigen::Map<const Vec> gr(g.data() + r * d, d);
      outer.noalias() = ar * br.transpose();
      d_outer.noalias() = gr * wc.transpose();
      if (t.needs_grad(a)) {
        Eigen::Map<Vec> ga(grad_of(a).data() + r * d, d);
        ga.noalias() += d_outer * br;
      }
      if (t.needs_grad(b)) {
        Eigen::Map<Vec> gb(grad_of(b).data() + r * d, d);
        gb.noalias() += d_outer.transpose() * ar;
      }
      if (t.needs_grad(w)) {
        Eigen::Map<Vec> gw(grad_of(w).data(), d);
        gw.noalias() += outer.transpose() * gr;
      }
    }
  });
}

GAIN_NAMESPACE_END
