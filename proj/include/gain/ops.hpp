#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gain/tape.hpp"

GAIN_NAMESPACE_BEGIN

// Differentiable ops. All inputs must live on the same tape; the result is
// recorded on it. Matrices are row-major with one node (or sample) per row.
// Shape mismatches throw ShapeError naming both shapes.

class ShapeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// a (n x p) times b (p x q).
Var matmul(Var a, Var b);
/// Element-wise sum of equal shapes, or a (n x d) plus a row vector b (d).
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Element-wise (Hadamard) product of equal shapes.
Var mul(Var a, Var b);
/// Scales every row r of a (n x d) by c(r) where c is n x 1.
Var mul_col(Var a, Var c);
/// scale * a + shift, element-wise.
Var affine(Var a, Real scale, Real shift);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var log(Var a);
/// Clamps into [lo, hi]; gradient is zero where clamped.
Var clip(Var a, Real lo, Real hi);

Var concat_cols(std::span<const Var> parts);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var gather_rows(Var a, std::vector<std::size_t> index);
/// Column j of a as an n x 1 matrix.
Var column(Var a, std::size_t j);

/// Softmax along each row.
Var softmax_rows(Var a);

Var sum(Var a);
Var mean(Var a);
/// Column means (1 x d) over all rows.
Var mean_rows(Var a);

/// Euclidean norm of each row (n x 1). The gradient at a zero row is zero.
Var row_l2_norm(Var a);
/// Each row divided by its Euclidean norm; zero rows stay zero.
Var l2_normalize_rows(Var a);

// Segment reductions. `offsets` has one more entry than segments; segment s
// spans rows [offsets[s], offsets[s+1]) of x. Every segment must be
// non-empty. A segment is the set of valid slots of one masked row group.

Var segment_mean(Var x, std::span<const std::size_t> offsets);
/// Element-wise max per segment; ties route the gradient to the first row.
Var segment_max(Var x, std::span<const std::size_t> offsets);
/// Per segment s of length L: sum_j softmax(gates[0..L))_j * x[offsets[s]+j].
/// `gates` is a vector whose length bounds every segment length.
Var segment_gated_sum(Var x, Var gates, std::span<const std::size_t> offsets);

/// Naive rank-1 interaction: row r is (a_r b_r^T) w, computed by forming
/// the d x d outer product explicitly. w is d x 1.
Var outer_project(Var a, Var b, Var w);

GAIN_NAMESPACE_END
