#include "gain/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

GAIN_NAMESPACE_BEGIN

namespace le {

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw DataError("truncated u64");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void write_f32(std::ostream& out, const Real* data, std::size_t n) {
  std::vector<char> buf(n * 4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(data[i]));
    for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void read_f32(std::istream& in, Real* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 4);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw DataError("truncated float32 payload");
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int k = 3; k >= 0; --k) bits = (bits << 8) | buf[i * 4 + k];
    data[i] = static_cast<Real>(std::bit_cast<float>(bits));
  }
}

}  // namespace le

void write_features(const std::filesystem::path& path, const Tensor& features) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kFeatureMagic, 4);
  le::write_u64(out, features.rows());
  le::write_u64(out, features.cols());
  le::write_f32(out, features.data(), features.size());
  if (!out) throw DataError("write failed: " + path.string());
}

Tensor read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open features file " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kFeatureMagic, 4) != 0) {
    in.close();
    return read_features_csv(path);
  }
  try {
    const std::uint64_t rows = le::read_u64(in);
    const std::uint64_t cols = le::read_u64(in);
    const auto start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto remaining = static_cast<std::uint64_t>(in.tellg() - start);
    if (remaining != rows * cols * 4) {
      throw DataError("payload holds " + std::to_string(remaining) + " bytes, header says " +
                      std::to_string(rows) + "x" + std::to_string(cols));
    }
    in.seekg(start);
    Tensor t = Tensor::matrix(rows, cols);
    le::read_f32(in, t.data(), t.size());
    return t;
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

Tensor read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file " + path.string());
  std::vector<Real> data;
  std::size_t cols = 0, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::size_t count = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t next = line.find(',', pos);
      if (next == std::string::npos) next = line.size();
      std::string cell = line.substr(pos, next - pos);
      // Trim surrounding spaces / CR.
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      if (b == std::string::npos) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": empty cell");
      }
      cell = cell.substr(b, e - b + 1);
      double v = 0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": not a number '" +
                        cell + "'");
      }
      data.push_back(static_cast<Real>(v));
      ++count;
      pos = next + 1;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(cols) + " columns, got " + std::to_string(count));
    }
    ++rows;
  }
  return Tensor({rows, cols}, std::move(data));
}

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  char magic[6] = {};
  in.read(magic, 6);
  if (std::memcmp(magic, "\x93NUMPY", 6) != 0) throw DataError(path.string() + ": not an .npy file");
  unsigned char ver[2] = {};
  in.read(reinterpret_cast<char*>(ver), 2);
  std::uint32_t header_len = 0;
  if (ver[0] == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  in.read(header.data(), header_len);
  if (!in) throw DataError(path.string() + ": truncated header");

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([<>|=])([fiub])(\d+)')"))) {
    throw DataError(path.string() + ": unsupported dtype in header " + header);
  }
  if (m[1] == ">") throw DataError(path.string() + ": big-endian arrays are not supported");
  const char kind = m[2].str()[0];
  const int width = std::stoi(m[3]);
  if (std::regex_search(header, std::regex(R"('fortran_order'\s*:\s*True)"))) {
    throw DataError(path.string() + ": Fortran-ordered arrays are not supported");
  }
  std::smatch sm;
  if (!std::regex_search(header, sm, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw DataError(path.string() + ": missing shape");
  }
  NpyArray arr;
  std::size_t total = 1;
  {
    std::stringstream ss(sm[1]);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto b = tok.find_first_not_of(" ");
      if (b == std::string::npos) continue;
      arr.shape.push_back(std::stoull(tok.substr(b)));
      total *= arr.shape.back();
    }
  }
  std::vector<unsigned char> raw(total * width);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw DataError(path.string() + ": truncated payload");
  }
  arr.data.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const unsigned char* p = raw.data() + i * width;
    std::uint64_t bits = 0;
    for (int k = width - 1; k >= 0; --k) bits = (bits << 8) | p[k];
    double v = 0;
    if (kind == 'f' && width == 4) {
      v = std::bit_cast<float>(static_cast<std::uint32_t>(bits));
    } else if (kind == 'f' && width == 8) {
      v = std::bit_cast<double>(bits);
    } else if (kind == 'i' || kind == 'b' || kind == 'u') {
      if (kind == 'i' && width < 8 && (bits >> (8 * width - 1)) & 1) {
        bits |= ~std::uint64_t{0} << (8 * width);
      }
      v = kind == 'i' ? static_cast<double>(static_cast<std::int64_t>(bits))
                      : static_cast<double>(bits);
    } else {
      throw DataError(path.string() + ": unsupported dtype width " + std::to_string(width));
    }
    arr.data[i] = v;
  }
  return arr;
}

GAIN_NAMESPACE_END
