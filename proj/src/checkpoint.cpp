#include "gain/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "gain/io.hpp"

GAIN_NAMESPACE_BEGIN

namespace {
constexpr char kMagic[8] = {'G', 'A', 'I', 'N', 'C', 'K', 'P', 'T'};
constexpr int kFormatVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const AdamState* adam, const nlohmann::json& metadata) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  auto& list = manifest["parameters"] = nlohmann::json::array();
  for (const Parameter& p : params) {
    list.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  }
  if (adam) {
    manifest["adam"] = {{"step", adam->step},
                        {"learning_rate", adam->learning_rate},
                        {"beta1", adam->beta1},
                        {"beta2", adam->beta2},
                        {"delta", adam->delta}};
  } else {
    manifest["adam"] = nullptr;
  }
  manifest["metadata"] = metadata;
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 8);
  le::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Parameter& p : params) le::write_f32(out, p.value.data(), p.value.size());
  if (!out) throw DataError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path.string() + ": not a checkpoint file");
  }
  Checkpoint ckpt;
  try {
    const std::uint64_t len = le::read_u64(in);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
      throw DataError("truncated manifest");
    }
    const auto manifest = nlohmann::json::parse(text);
    if (manifest.at("format_version").get<int>() != kFormatVersion) {
      throw DataError("unsupported checkpoint format version");
    }
    for (const auto& entry : manifest.at("parameters")) {
      auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      Tensor t(shape);
      le::read_f32(in, t.data(), t.size());
      ckpt.params.add(entry.at("name").get<std::string>(), std::move(t));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after payload");
    ckpt.adam = manifest.at("adam");
    ckpt.metadata = manifest.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return ckpt;
}

GAIN_NAMESPACE_END
