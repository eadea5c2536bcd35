#pragma once

// Hidden-state dump format.
//
// A trace is a directory holding
//   manifest.json    UTF-8 JSON object: model_label, layer_count, token_count,
//                    embed_dim, dtype ("f32"), byte_order ("le"), random_init,
//                    excluded_token_positions, optional tokenizer_note
//   layer_XXXX.bin   raw row-major float32, little-endian, exactly
//                    token_count * embed_dim * 4 bytes; XXXX is the zero-padded
//                    decimal layer index
//
// Layer 0 is the embedding output; layer m-1 is the final-norm output.
// Values are decoded to double and all later arithmetic is 64-bit.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokgeo/errors.hpp"
#include "tokgeo/linalg.hpp"

namespace tokgeo {

namespace fs = std::filesystem;

struct Manifest {
  std::string model_label;
  int layer_count = 0;
  int token_count = 0;
  int embed_dim = 0;
  bool random_init = false;
  std::optional<std::string> tokenizer_note;
  std::vector<int> excluded_token_positions;
};

struct LayerActivations {
  int layer_index = 0;
  Matrix values;  // token_count x embed_dim
};

struct ActivationTrace {
  Manifest manifest;
  std::vector<LayerActivations> layers;
};

inline std::string layer_file_name(int index) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "layer_%04d.bin", index);
  return buf.data();
}

inline void validate_manifest(const Manifest& m) {
  if (m.layer_count < 2) throw FormatError("layer_count must be >= 2");
  if (m.token_count < 2) throw FormatError("token_count must be >= 2");
  if (m.embed_dim < 2) throw FormatError("embed_dim must be >= 2");
  for (int p : m.excluded_token_positions)
    if (p < 0 || p >= m.token_count)
      throw FormatError("excluded token position " + std::to_string(p) + " out of range");
}

// Structural and numeric invariants of an in-memory trace.
inline void validate_trace(const ActivationTrace& trace) {
  const auto& m = trace.manifest;
  validate_manifest(m);
  if (static_cast<int>(trace.layers.size()) != m.layer_count)
    throw FormatError("trace holds " + std::to_string(trace.layers.size()) + " layers, manifest says " +
                      std::to_string(m.layer_count));
  std::set<int> seen;
  for (std::size_t k = 0; k < trace.layers.size(); ++k) {
    const auto& layer = trace.layers[k];
    if (!seen.insert(layer.layer_index).second)
      throw FormatError("duplicate layer index " + std::to_string(layer.layer_index));
    if (layer.layer_index != static_cast<int>(k))
      throw FormatError("layer indices must be 0..m-1 in order; found " + std::to_string(layer.layer_index) +
                        " at position " + std::to_string(k));
    if (layer.values.rows() != m.token_count || layer.values.cols() != m.embed_dim)
      throw FormatError("layer " + std::to_string(k) + " has shape " + std::to_string(layer.values.rows()) + "x" +
                        std::to_string(layer.values.cols()));
    if (!layer.values.allFinite()) throw DataError("layer " + std::to_string(k) + " contains non-finite values");
  }
}

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json j;
  j["model_label"] = m.model_label;
  j["layer_count"] = m.layer_count;
  j["token_count"] = m.token_count;
  j["embed_dim"] = m.embed_dim;
  j["dtype"] = "f32";
  j["byte_order"] = "le";
  j["random_init"] = m.random_init;
  j["excluded_token_positions"] = m.excluded_token_positions;
  if (m.tokenizer_note) j["tokenizer_note"] = *m.tokenizer_note;
  return j;
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  try {
    m.model_label = j.at("model_label").get<std::string>();
    m.layer_count = j.at("layer_count").get<int>();
    m.token_count = j.at("token_count").get<int>();
    m.embed_dim = j.at("embed_dim").get<int>();
    if (j.at("dtype").get<std::string>() != "f32") throw FormatError("unsupported dtype (only f32)");
    if (j.at("byte_order").get<std::string>() != "le") throw FormatError("unsupported byte_order (only le)");
    m.random_init = j.at("random_init").get<bool>();
    m.excluded_token_positions = j.at("excluded_token_positions").get<std::vector<int>>();
    if (j.contains("tokenizer_note") && !j["tokenizer_note"].is_null())
      m.tokenizer_note = j["tokenizer_note"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  validate_manifest(m);
  return m;
}

namespace detail {

inline float decode_f32_le(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

inline void encode_f32_le(float v, unsigned char* p) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  p[0] = static_cast<unsigned char>(bits & 0xffu);
  p[1] = static_cast<unsigned char>((bits >> 8) & 0xffu);
  p[2] = static_cast<unsigned char>((bits >> 16) & 0xffu);
  p[3] = static_cast<unsigned char>((bits >> 24) & 0xffu);
}

}  // namespace detail

inline Manifest read_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw FormatError("missing " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse " + path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

// Reads one layer; usable for streaming without loading the whole trace.
inline LayerActivations read_layer(const fs::path& dir, const Manifest& m, int index) {
  const auto path = dir / layer_file_name(index);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing " + path.string());
  const auto expected = static_cast<std::uintmax_t>(m.token_count) * m.embed_dim * 4;
  std::error_code ec;
  const auto actual = fs::file_size(path, ec);
  if (ec || actual != expected)
    throw FormatError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                      (ec ? std::string("unreadable") : std::to_string(actual)));
  std::vector<unsigned char> bytes(expected);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw FormatError("short read on " + path.string());

  LayerActivations layer;
  layer.layer_index = index;
  layer.values.resize(m.token_count, m.embed_dim);
  const unsigned char* p = bytes.data();
  for (int r = 0; r < m.token_count; ++r) {
    for (int c = 0; c < m.embed_dim; ++c, p += 4) {
      const float v = detail::decode_f32_le(p);
      if (!std::isfinite(v))
        throw DataError(path.string() + ": non-finite value at row " + std::to_string(r) + ", column " +
                        std::to_string(c));
      layer.values(r, c) = static_cast<double>(v);
    }
  }
  return layer;
}

inline ActivationTrace read_trace(const fs::path& dir) {
  ActivationTrace trace;
  trace.manifest = read_manifest(dir);
  trace.layers.reserve(trace.manifest.layer_count);
  for (int k = 0; k < trace.manifest.layer_count; ++k) trace.layers.push_back(read_layer(dir, trace.manifest, k));
  // Stray layer files beyond m mean the manifest and disk disagree.
  if (fs::exists(dir / layer_file_name(trace.manifest.layer_count)))
    throw FormatError("layer file count on disk exceeds manifest layer_count");
  validate_trace(trace);
  return trace;
}

// Values are stored as float32; doubles that are not float-representable are
// rounded to nearest.
inline void write_trace(const ActivationTrace& trace, const fs::path& dir) {
  validate_trace(trace);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  auto write_bytes = [](const fs::path& path, const char* data, std::size_t size) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw IoError("write failed on " + path.string());
  };

  const auto& m = trace.manifest;
  std::vector<unsigned char> bytes(static_cast<std::size_t>(m.token_count) * m.embed_dim * 4);
  for (const auto& layer : trace.layers) {
    unsigned char* p = bytes.data();
    for (int r = 0; r < m.token_count; ++r)
      for (int c = 0; c < m.embed_dim; ++c, p += 4)
        detail::encode_f32_le(static_cast<float>(layer.values(r, c)), p);
    write_bytes(dir / layer_file_name(layer.layer_index), reinterpret_cast<const char*>(bytes.data()), bytes.size());
  }
  const auto text = manifest_to_json(m).dump(2) + "\n";
  write_bytes(dir / "manifest.json", text.data(), text.size());
}

// Row indices kept after applying exclusions, in ascending order.
inline std::vector<Eigen::Index> retained_rows(Eigen::Index rows, const std::vector<int>& excluded) {
  std::vector<Eigen::Index> keep;
  keep.reserve(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r)
    if (std::find(excluded.begin(), excluded.end(), static_cast<int>(r)) == excluded.end()) keep.push_back(r);
  return keep;
}

}  // namespace tokgeo
