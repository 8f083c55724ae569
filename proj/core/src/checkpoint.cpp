// SPDX-License-Identifier: Apache-2.0

#include "tssl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "tssl/io.hpp"

namespace tssl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const fs::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint " + path.string() + " is truncated");
  return v;
}

fs::path stem_of(const fs::path& p) {
  if (p.extension() == ".json" || p.extension() == ".bin") return fs::path(p).replace_extension();
  return p;
}

// Every named tensor of the network, parameters and buffers alike.
std::map<std::string, Tensor*> named_tensors(Network& net) {
  std::map<std::string, Tensor*> out;
  for (Parameter* p : net.parameters()) out[p->name] = &p->value;
  for (const Buffer& b : net.buffers()) out[b.name] = b.tensor;
  return out;
}

json encoder_json(const EncoderConfig& c) {
  return {{"architecture", c.architecture},
          {"width_multiplier", c.width_multiplier},
          {"stem_kernel", c.stem_kernel},
          {"input_shape", {c.input_shape.depth, c.input_shape.height, c.input_shape.width}},
          {"feature_dim", c.feature_dim()}};
}

EncoderConfig encoder_from(const json& j) {
  EncoderConfig c;
  c.architecture = j.at("architecture").get<std::string>();
  c.width_multiplier = j.at("width_multiplier").get<double>();
  c.stem_kernel = j.at("stem_kernel").get<int>();
  const auto s = j.at("input_shape").get<std::vector<int>>();
  if (s.size() != 3) throw IoError("checkpoint input_shape must have 3 entries");
  c.input_shape = {s[0], s[1], s[2]};
  return c;
}

}  // namespace

CheckpointMeta describe(Network& net) {
  CheckpointMeta m;
  m.method = net.method();
  m.encoder = net.encoder().config();
  m.heads = net.head_config();
  m.tov_head = net.has_tov_head();
  m.top_heads = net.top_head_lengths();
  m.projection = net.has_projection();
  if (net.has_downstream()) m.downstream = net.downstream_info();
  return m;
}

fs::path save_checkpoint(const fs::path& stem_in, Network& net, const CheckpointMeta& meta_in) {
  const fs::path stem = stem_of(stem_in);
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
  CheckpointMeta meta = meta_in;
  const CheckpointMeta shape = describe(net);
  meta.method = shape.method;
  meta.encoder = shape.encoder;
  meta.heads = shape.heads;
  meta.tov_head = shape.tov_head;
  meta.top_heads = shape.top_heads;
  meta.projection = shape.projection;
  meta.downstream = shape.downstream;

  const auto tensors = named_tensors(net);
  fs::path bin = stem;
  bin += ".bin";
  {
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + bin.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, tensors.size());
    for (const auto& [name, t] : tensors) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
      for (int d : t->shape()) put<std::int32_t>(out, d);
      out.write(reinterpret_cast<const char*>(t->ptr()), static_cast<std::streamsize>(t->size() * sizeof(Real)));
    }
    if (!out) throw IoError("failed writing checkpoint " + bin.string());
  }

  json j;
  j["format"] = "tssl-checkpoint";
  j["version"] = kFormatVersion;
  j["weights"] = bin.filename().string();
  j["method"] = std::string(to_string(meta.method));
  j["encoder"] = encoder_json(meta.encoder);
  j["heads"] = {{"hidden", meta.heads.hidden}, {"projection_dim", meta.heads.projection_dim}};
  j["tov_head"] = meta.tov_head;
  j["top_heads"] = meta.top_heads;
  j["projection"] = meta.projection;
  if (meta.downstream) {
    const DownstreamInfo& d = *meta.downstream;
    j["downstream"] = {{"num_images", d.num_images},
                       {"num_classes", d.num_classes},
                       {"feature_slots", d.feature_slots},
                       {"gap_width", d.gap_width},
                       {"trunk", std::string(to_string(d.trunk))}};
  } else {
    j["downstream"] = nullptr;
  }
  j["class_names"] = meta.class_names;
  j["normalization"] = {{"mode", std::string(to_string(meta.norm_mode))},
                        {"train_mean", meta.norm.train_mean},
                        {"train_std", meta.norm.train_std}};
  j["epoch"] = meta.epoch;
  j["config_hash"] = meta.config_hash;
  j["metric_name"] = meta.metric_name;
  j["metric"] = meta.metric;
  j["num_tensors"] = tensors.size();

  fs::path sidecar = stem;
  sidecar += ".json";
  std::ofstream out(sidecar, std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint sidecar " + sidecar.string());
  out << j.dump(2) << '\n';
  return sidecar;
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  fs::path sidecar = stem_of(path);
  sidecar += ".json";
  std::ifstream in(sidecar);
  if (!in) throw IoError("checkpoint sidecar not found: " + sidecar.string());
  json j;
  try {
    j = json::parse(in);
    CheckpointMeta m;
    m.method = parse_method(j.at("method").get<std::string>());
    m.encoder = encoder_from(j.at("encoder"));
    m.heads.hidden = j.at("heads").at("hidden").get<std::array<int, 2>>();
    m.heads.projection_dim = j.at("heads").at("projection_dim").get<int>();
    m.tov_head = j.at("tov_head").get<bool>();
    m.top_heads = j.at("top_heads").get<std::vector<int>>();
    m.projection = j.at("projection").get<bool>();
    if (!j.at("downstream").is_null()) {
      const json& d = j["downstream"];
      DownstreamInfo info;
      info.num_images = d.at("num_images").get<int>();
      info.num_classes = d.at("num_classes").get<int>();
      info.feature_slots = d.at("feature_slots").get<int>();
      info.gap_width = d.at("gap_width").get<int>();
      info.trunk = parse_trunk_source(d.at("trunk").get<std::string>());
      m.downstream = info;
    }
    m.class_names = j.value("class_names", std::vector<std::string>{});
    const json& n = j.at("normalization");
    m.norm_mode = parse_norm_mode(n.at("mode").get<std::string>());
    m.norm.train_mean = n.at("train_mean").get<double>();
    m.norm.train_std = n.at("train_std").get<double>();
    m.epoch = j.at("epoch").get<int>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.metric_name = j.value("metric_name", "");
    m.metric = j.value("metric", 0.0);
    return m;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint sidecar " + sidecar.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError("malformed checkpoint sidecar " + sidecar.string() + ": " + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  CheckpointMeta meta = read_checkpoint_meta(path);
  Network net(meta.method, meta.encoder, meta.heads, 0);
  if (!meta.tov_head && !meta.projection && meta.top_heads.empty()) net.drop_pretext_heads();
  if (net.has_tov_head() != meta.tov_head || net.top_head_lengths() != meta.top_heads ||
      net.has_projection() != meta.projection) {
    throw IoError("checkpoint head layout does not match its method " + std::string(to_string(meta.method)));
  }
  if (meta.downstream) net.attach_downstream(*meta.downstream, 0);

  fs::path bin = stem_of(path);
  bin += ".bin";
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("checkpoint weights not found: " + bin.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError(bin.string() + " is not a checkpoint");
  if (take<std::uint32_t>(in, bin) != kFormatVersion) throw IoError(bin.string() + ": unsupported format version");
  const auto count = take<std::uint64_t>(in, bin);

  auto tensors = named_tensors(net);
  std::size_t loaded = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(in, bin);
    if (len > 4096) throw IoError(bin.string() + ": corrupt tensor name");
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rank = take<std::uint32_t>(in, bin);
    if (rank > 8) throw IoError(bin.string() + ": corrupt tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = take<std::int32_t>(in, bin);
    auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError("checkpoint tensor '" + name + "' has no counterpart in the model");
    Tensor& t = *it->second;
    if (t.shape() != shape) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                    shape_string(t.shape()));
    }
    in.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(Real)));
    if (!in) throw IoError("checkpoint " + bin.string() + " is truncated");
    ++loaded;
  }
  if (loaded != tensors.size()) {
    throw IoError("checkpoint " + bin.string() + " holds " + std::to_string(loaded) + " of " +
                  std::to_string(tensors.size()) + " model tensors");
  }
  return {std::move(net), std::move(meta)};
}

}  // namespace tssl
