// SPDX-License-Identifier: Apache-2.0
#include "cuetrack/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cuetrack {

namespace {

constexpr const char* kFormat = "cuetrack-checkpoint-v1";

void put_f32(std::string& out, double value) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(value));
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

double get_f32(const std::string& in, std::size_t pos) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  }
  return static_cast<double>(std::bit_cast<float>(bits));
}

}  // namespace

std::string encode_checkpoint(const ParameterStore& params, const nlohmann::json& metadata) {
  nlohmann::json manifest;
  manifest["format"] = kFormat;
  manifest["seed"] = params.seed();
  manifest["metadata"] = metadata;
  manifest["params"] = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, value] : params.entries()) {
    manifest["params"].push_back({{"name", name}, {"shape", value.shape()}, {"offset", blob.size()}});
    for (double v : value.data()) put_f32(blob, v);
  }
  return manifest.dump() + "\n" + blob;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos) throw Error("checkpoint: missing manifest terminator");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: bad manifest: ") + e.what());
  }
  if (manifest.value("format", "") != kFormat) throw Error("checkpoint: unknown format");
  const std::size_t blob_start = newline + 1;
  const std::size_t blob_size = bytes.size() - blob_start;

  Checkpoint ckpt{ParameterStore(manifest.at("seed").get<std::uint64_t>()),
                  manifest.value("metadata", nlohmann::json::object())};
  for (const auto& entry : manifest.at("params")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    Array value(shape);
    if (offset + 4 * value.size() > blob_size) {
      throw Error("checkpoint: parameter '" + name + "' runs past the end of the blob");
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      value[i] = get_f32(bytes, blob_start + offset + 4 * i);
    }
    ckpt.params.add(name, std::move(value));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const nlohmann::json& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const std::string bytes = encode_checkpoint(params, metadata);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_checkpoint(buffer.str());
}

}  // namespace cuetrack
