#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gain/tensor.hpp"

GAIN_NAMESPACE_BEGIN

// Binary feature matrix ("GFEA"): 4-byte magic, u64 rows, u64 cols, then
// rows*cols little-endian IEEE-754 float32 values in row-major order.
inline constexpr char kFeatureMagic[4] = {'G', 'F', 'E', 'A'};

void write_features(const std::filesystem::path& path, const Tensor& features);

/// Reads a GFEA file, or a comma-separated text matrix when the magic is
/// absent. Errors carry the file name (and line for CSV).
Tensor read_features(const std::filesystem::path& path);
Tensor read_features_csv(const std::filesystem::path& path);

/// A NumPy .npy array (version 1.x/2.x, C order) widened to double.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};
NpyArray read_npy(const std::filesystem::path& path);

namespace le {

void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);
void write_f32(std::ostream& out, const Real* data, std::size_t n);
void read_f32(std::istream& in, Real* data, std::size_t n);

}  // namespace le

GAIN_NAMESPACE_END
