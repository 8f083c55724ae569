// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "tssl/io.hpp"

namespace tssl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

void write_volume(const fs::path& header_path, const Volume& volume, std::array<double, 3> spacing) {
  if (header_path.extension() != ".json") {
    throw IoError("volume header path must end in .json: " + header_path.string());
  }
  if (header_path.has_parent_path()) fs::create_directories(header_path.parent_path());
  fs::path raw_path = header_path;
  raw_path.replace_extension(".raw");

  const Shape3& s = volume.shape();
  json header = {{"shape", {s.depth, s.height, s.width}},
                 {"spacing", spacing},
                 {"dtype", kVolumeDtypeTag},
                 {"order", "depth-major"},
                 {"data_file", raw_path.filename().string()}};
  {
    std::ofstream out(header_path);
    if (!out) throw IoError("cannot write " + header_path.string());
    out << header.dump(2) << '\n';
  }

  std::vector<std::uint32_t> words(volume.size());
  const auto data = volume.data();
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = to_little_endian(std::bit_cast<std::uint32_t>(data[i]));
  }
  std::ofstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("cannot write " + raw_path.string());
  raw.write(reinterpret_cast<const char*>(words.data()),
            static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
}

VolumeHeader read_volume_header(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw IoError("missing volume header " + header_path.string());
  json j;
  try {
    in >> j;
    VolumeHeader h;
    const auto& shape = j.at("shape");
    if (!shape.is_array() || shape.size() != 3) throw IoError("volume shape must have 3 entries");
    h.shape = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    if (j.contains("spacing")) h.spacing = j.at("spacing").get<std::array<double, 3>>();
    h.dtype = j.at("dtype").get<std::string>();
    h.data_file = j.at("data_file").get<std::string>();
    if (h.dtype != kVolumeDtypeTag) throw IoError("unsupported volume dtype '" + h.dtype + "'");
    if (!h.shape.valid()) throw IoError("volume shape must be positive");
    return h;
  } catch (const json::exception& e) {
    throw IoError("malformed volume header " + header_path.string() + ": " + e.what());
  }
}

Volume read_volume(const fs::path& header_path) {
  const VolumeHeader h = read_volume_header(header_path);
  const fs::path raw_path = header_path.parent_path() / h.data_file;
  std::ifstream raw(raw_path, std::ios::binary);
  if (!raw) throw IoError("missing volume data " + raw_path.string());
  std::vector<std::uint32_t> words(h.shape.voxels());
  raw.read(reinterpret_cast<char*>(words.data()),
           static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t)));
  if (raw.gcount() != static_cast<std::streamsize>(words.size() * sizeof(std::uint32_t))) {
    throw IoError("truncated volume data " + raw_path.string());
  }
  std::vector<float> data(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    data[i] = std::bit_cast<float>(to_little_endian(words[i]));
  }
  try {
    return Volume(h.shape, std::move(data));
  } catch (const ValidationError& e) {
    throw IoError(raw_path.string() + ": " + e.what());
  }
}

void VolumeStore::put(const fs::path& path, Volume volume) {
  std::lock_guard lock(mutex_);
  cache_[path.lexically_normal().string()] = std::make_unique<Volume>(std::move(volume));
}

const Volume& VolumeStore::get(const fs::path& path) {
  const std::string key = path.lexically_normal().string();
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return *it->second;
  }
  auto loaded = std::make_unique<Volume>(read_volume(path));
  std::lock_guard lock(mutex_);
  auto [it, inserted] = cache_.try_emplace(key, std::move(loaded));
  return *it->second;
}

std::size_t VolumeStore::size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

}  // namespace tssl
