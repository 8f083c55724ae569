// SPDX-License-Identifier: Apache-2.0

#include "tssl/run_config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace tssl {

namespace fs = std::filesystem;

namespace {

struct Field {
  std::string key;
  bool list = false;
  bool path = false;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& what) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + what);
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) bad(key, text, "a number");
  return v;
}

long long to_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long long v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) bad(key, text, "an integer");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) bad(key, text, "a non-negative integer");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  bad(key, text, "a boolean");
}

std::vector<std::string> split_list(const std::string& text) {
  std::string t = trim(text);
  if (!t.empty() && t.front() == '[' && t.back() == ']') t = t.substr(1, t.size() - 2);
  std::vector<std::string> out;
  if (trim(t).empty()) return out;
  std::stringstream ss(t);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& text, std::size_t expected, F parse) {
  const auto items = split_list(text);
  if (expected != 0 && items.size() != expected) {
    throw ConfigError(key + ": expected " + std::to_string(expected) + " values, got " + std::to_string(items.size()));
  }
  std::vector<T> out;
  for (const auto& i : items) out.push_back(static_cast<T>(parse(key, i)));
  return out;
}

template <typename Container>
std::string join(const Container& c) {
  std::string out;
  for (const auto& v : c) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      out += fmt(v);
    } else {
      out += std::to_string(v);
    }
  }
  return out;
}

// Wraps enum parsers so their errors name the key.
template <typename F>
auto named(const std::string& key, F parse) {
  return [key, parse](const std::string& text) {
    try {
      return parse(trim(text));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key + ": " + e.what());
    }
  };
}

template <typename Get>
Field dbl(std::string key, Get get) {
  return {key, false, false, [get](const RunConfig& c) { return fmt(get(const_cast<RunConfig&>(c))); },
          [key, get](RunConfig& c, const std::string& v) { get(c) = to_double(key, v); }};
}

template <typename Get>
Field integer(std::string key, Get get) {
  return {key, false, false, [get](const RunConfig& c) { return std::to_string(get(const_cast<RunConfig&>(c))); },
          [key, get](RunConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(get(c))>;
            get(c) = static_cast<T>(to_int(key, v));
          }};
}

template <typename Get>
Field interval(std::string key, Get get) {
  return {key, true, false,
          [get](const RunConfig& c) {
            const Interval& i = get(const_cast<RunConfig&>(c));
            return fmt(i.lo) + "," + fmt(i.hi);
          },
          [key, get](RunConfig& c, const std::string& v) {
            const auto vals = to_list<double>(key, v, 2, to_double);
            get(c) = Interval{vals[0], vals[1]};
          }};
}

template <typename Get>
Field triple(std::string key, Get get) {
  return {key, true, false, [get](const RunConfig& c) { return join(get(const_cast<RunConfig&>(c))); },
          [key, get](RunConfig& c, const std::string& v) {
            const auto vals = to_list<double>(key, v, 3, to_double);
            std::copy(vals.begin(), vals.end(), get(c).begin());
          }};
}

template <typename Get>
Field shape(std::string key, Get get) {
  return {key, true, false,
          [get](const RunConfig& c) {
            const Shape3& s = get(const_cast<RunConfig&>(c));
            return std::to_string(s.depth) + "," + std::to_string(s.height) + "," + std::to_string(s.width);
          },
          [key, get](RunConfig& c, const std::string& v) {
            const auto vals = to_list<int>(key, v, 3, to_int);
            get(c) = Shape3{vals[0], vals[1], vals[2]};
          }};
}

template <typename Get>
Field path_field(std::string key, Get get) {
  return {key, false, true, [get](const RunConfig& c) { return get(const_cast<RunConfig&>(c)).string(); },
          [get](RunConfig& c, const std::string& v) { get(c) = fs::path(trim(v)); }};
}

template <typename Get, typename ToStr, typename Parse>
Field enumeration(std::string key, Get get, ToStr to_str, Parse parse) {
  return {key, false, false, [get, to_str](const RunConfig& c) { return std::string(to_str(get(const_cast<RunConfig&>(c)))); },
          [key, get, parse](RunConfig& c, const std::string& v) { get(c) = named(key, parse)(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> registry = [] {
    std::vector<Field> f;
    f.push_back(enumeration(
        "method", [](RunConfig& c) -> Method& { return c.method; }, [](Method m) { return to_string(m); },
        [](const std::string& s) { return parse_method(s); }));
    f.push_back({"seed", false, false, [](const RunConfig& c) { return std::to_string(c.seed); },
                 [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); }});
    f.push_back(integer("workers", [](RunConfig& c) -> int& { return c.workers; }));
    f.push_back(enumeration(
        "optimizer", [](RunConfig& c) -> OptimizerKind& { return c.optimizer; },
        [](OptimizerKind k) { return to_string(k); }, [](const std::string& s) { return parse_optimizer(s); }));
    f.push_back(shape("resolution", [](RunConfig& c) -> Shape3& { return c.resolution; }));

    f.push_back({"encoder.architecture", false, false, [](const RunConfig& c) { return c.encoder.architecture; },
                 [](RunConfig& c, const std::string& v) { c.encoder.architecture = trim(v); }});
    f.push_back(dbl("encoder.width_multiplier", [](RunConfig& c) -> double& { return c.encoder.width_multiplier; }));
    f.push_back(integer("encoder.stem_kernel", [](RunConfig& c) -> int& { return c.encoder.stem_kernel; }));
    f.push_back({"heads.hidden", true, false, [](const RunConfig& c) { return join(c.heads.hidden); },
                 [](RunConfig& c, const std::string& v) {
                   const auto vals = to_list<int>("heads.hidden", v, 2, to_int);
                   c.heads.hidden = {vals[0], vals[1]};
                 }});
    f.push_back(integer("heads.projection_dim", [](RunConfig& c) -> int& { return c.heads.projection_dim; }));

    f.push_back(integer("pretrain.epochs", [](RunConfig& c) -> int& { return c.pretrain.epochs; }));
    f.push_back(integer("pretrain.batch_size", [](RunConfig& c) -> int& { return c.pretrain.batch_size; }));
    f.push_back(dbl("pretrain.learning_rate", [](RunConfig& c) -> double& { return c.pretrain.learning_rate; }));
    f.push_back(integer("finetune.epochs", [](RunConfig& c) -> int& { return c.finetune.epochs; }));
    f.push_back(integer("finetune.batch_size", [](RunConfig& c) -> int& { return c.finetune.batch_size; }));
    f.push_back(dbl("finetune.lr_encoder", [](RunConfig& c) -> double& { return c.finetune.lr_encoder; }));
    f.push_back(dbl("finetune.lr_head", [](RunConfig& c) -> double& { return c.finetune.lr_head; }));
    f.push_back(dbl("finetune.lr_supervised", [](RunConfig& c) -> double& { return c.finetune.lr_supervised; }));

    f.push_back(dbl("augment.rotation_max_rad", [](RunConfig& c) -> double& { return c.augment.rotation_max_rad; }));
    f.push_back(
        dbl("augment.translation_max_vox", [](RunConfig& c) -> double& { return c.augment.translation_max_vox; }));
    f.push_back(interval("augment.scale_range", [](RunConfig& c) -> Interval& { return c.augment.scale_range; }));
    f.push_back(
        interval("augment.smooth_sigma_range", [](RunConfig& c) -> Interval& { return c.augment.smooth_sigma_range; }));
    f.push_back(interval("augment.noise_std_range", [](RunConfig& c) -> Interval& { return c.augment.noise_std_range; }));
    f.push_back(dbl("augment.per_transform_prob", [](RunConfig& c) -> double& { return c.augment.per_transform_prob; }));

    f.push_back({"downstream_augment.enabled", false, false,
                 [](const RunConfig& c) { return std::string(c.downstream_augment_enabled ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) {
                   c.downstream_augment_enabled = to_bool("downstream_augment.enabled", v);
                 }});
    f.push_back(triple("downstream_augment.crop_min_fraction",
                       [](RunConfig& c) -> std::array<double, 3>& { return c.downstream_augment.crop_min_fraction; }));
    f.push_back(dbl("downstream_augment.flip_prob", [](RunConfig& c) -> double& { return c.downstream_augment.flip_prob; }));
    f.push_back(
        dbl("downstream_augment.affine_prob", [](RunConfig& c) -> double& { return c.downstream_augment.affine_prob; }));
    f.push_back(dbl("downstream_augment.rotation_max_rad",
                    [](RunConfig& c) -> double& { return c.downstream_augment.rotation_max_rad; }));
    f.push_back(
        dbl("downstream_augment.scale_delta", [](RunConfig& c) -> double& { return c.downstream_augment.scale_delta; }));
    f.push_back(dbl("downstream_augment.translation_max_vox",
                    [](RunConfig& c) -> double& { return c.downstream_augment.translation_max_vox; }));
    f.push_back(
        dbl("downstream_augment.shift_prob", [](RunConfig& c) -> double& { return c.downstream_augment.shift_prob; }));
    f.push_back(
        dbl("downstream_augment.shift_offset", [](RunConfig& c) -> double& { return c.downstream_augment.shift_offset; }));
    f.push_back(
        dbl("downstream_augment.noise_prob", [](RunConfig& c) -> double& { return c.downstream_augment.noise_prob; }));
    f.push_back(dbl("downstream_augment.noise_std", [](RunConfig& c) -> double& { return c.downstream_augment.noise_std; }));

    f.push_back(enumeration(
        "normalization", [](RunConfig& c) -> NormMode& { return c.normalization; },
        [](NormMode m) { return to_string(m); }, [](const std::string& s) { return parse_norm_mode(s); }));
    f.push_back(dbl("loss.temperature", [](RunConfig& c) -> double& { return c.loss.temperature; }));
    f.push_back(enumeration(
        "loss.negatives", [](RunConfig& c) -> NegativeSet& { return c.loss.negatives; },
        [](NegativeSet s) { return to_string(s); }, [](const std::string& s) { return parse_negative_set(s); }));
    f.push_back(dbl("loss.contrastive_weight", [](RunConfig& c) -> double& { return c.loss.contrastive_weight; }));
    f.push_back(dbl("loss.classification_weight", [](RunConfig& c) -> double& { return c.loss.classification_weight; }));
    f.push_back(dbl("loss.probability_eps", [](RunConfig& c) -> double& { return c.loss.probability_eps; }));

    f.push_back(path_field("data.manifest", [](RunConfig& c) -> fs::path& { return c.data.manifest; }));
    f.push_back(path_field("data.splits", [](RunConfig& c) -> fs::path& { return c.data.splits; }));
    f.push_back(dbl("data.min_gap_years", [](RunConfig& c) -> double& { return c.data.min_gap_years; }));
    f.push_back(dbl("data.max_gap_years", [](RunConfig& c) -> double& { return c.data.max_gap_years; }));
    f.push_back(integer("data.max_sequence_length", [](RunConfig& c) -> int& { return c.data.max_sequence_length; }));
    f.push_back(path_field("checkpoint_dir", [](RunConfig& c) -> fs::path& { return c.checkpoint_dir; }));

    f.push_back(enumeration(
        "task.kind", [](RunConfig& c) -> TaskKind& { return c.task.kind; }, [](TaskKind k) { return to_string(k); },
        [](const std::string& s) { return parse_task_kind(s); }));
    f.push_back(integer("task.num_images", [](RunConfig& c) -> int& { return c.task.num_images; }));
    f.push_back(enumeration(
        "task.from", [](RunConfig& c) -> Label& { return c.task.from; }, [](Label l) { return to_string(l); },
        [](const std::string& s) { return parse_label(s); }));
    f.push_back(enumeration(
        "task.to", [](RunConfig& c) -> Label& { return c.task.to; }, [](Label l) { return to_string(l); },
        [](const std::string& s) { return parse_label(s); }));
    f.push_back(integer("trials.num", [](RunConfig& c) -> int& { return c.trials.num; }));
    f.push_back({"trials.seeds", true, false, [](const RunConfig& c) { return join(c.trials.seeds); },
                 [](RunConfig& c, const std::string& v) {
                   c.trials.seeds = to_list<std::uint64_t>("trials.seeds", v, 0, to_u64);
                 }});

    f.push_back(integer("synth.num_patients", [](RunConfig& c) -> int& { return c.synth.num_patients; }));
    f.push_back(integer("synth.min_scans", [](RunConfig& c) -> int& { return c.synth.min_scans; }));
    f.push_back(integer("synth.max_scans", [](RunConfig& c) -> int& { return c.synth.max_scans; }));
    f.push_back(interval("synth.gap_years", [](RunConfig& c) -> Interval& { return c.synth.gap_years; }));
    f.push_back(shape("synth.resolution", [](RunConfig& c) -> Shape3& { return c.synth.resolution; }));
    f.push_back(triple("synth.class_proportions",
                       [](RunConfig& c) -> std::array<double, 3>& { return c.synth.class_proportions; }));
    f.push_back(triple("synth.baseline_ventricle",
                       [](RunConfig& c) -> std::array<double, 3>& { return c.synth.baseline_ventricle; }));
    f.push_back(
        triple("synth.atrophy_rate", [](RunConfig& c) -> std::array<double, 3>& { return c.synth.atrophy_rate; }));
    f.push_back(dbl("synth.onset_years_max", [](RunConfig& c) -> double& { return c.synth.onset_years_max; }));
    f.push_back(
        dbl("synth.conversion_probability", [](RunConfig& c) -> double& { return c.synth.conversion_probability; }));
    f.push_back(dbl("synth.noise_std", [](RunConfig& c) -> double& { return c.synth.noise_std; }));
    f.push_back(dbl("synth.anatomy_jitter", [](RunConfig& c) -> double& { return c.synth.anatomy_jitter; }));
    f.push_back(triple("synth.split_fractions",
                       [](RunConfig& c) -> std::array<double, 3>& { return c.synth.split_fractions; }));
    f.push_back({"synth.seed", false, false, [](const RunConfig& c) { return std::to_string(c.synth.seed); },
                 [](RunConfig& c, const std::string& v) { c.synth.seed = to_u64("synth.seed", v); }});
    f.push_back({"synth.dataset_id", false, false, [](const RunConfig& c) { return c.synth.dataset_id; },
                 [](RunConfig& c, const std::string& v) { c.synth.dataset_id = trim(v); }});
    f.push_back(path_field("synth.out_dir", [](RunConfig& c) -> fs::path& { return c.synth_out; }));
    return f;
  }();
  return registry;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError(key + ": unknown config key");
}

void flatten_node(const YAML::Node& node, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string key = kv.first.as<std::string>();
      flatten_node(kv.second, prefix.empty() ? key : prefix + "." + key, out);
    }
  } else if (node.IsSequence()) {
    std::string joined;
    for (const auto& item : node) {
      if (!item.IsScalar()) throw ConfigError(prefix + ": list items must be scalars");
      if (!joined.empty()) joined += ",";
      joined += item.as<std::string>();
    }
    out.emplace_back(prefix, joined);
  } else if (node.IsScalar()) {
    out.emplace_back(prefix, node.as<std::string>());
  } else if (node.IsNull() && !prefix.empty()) {
    out.emplace_back(prefix, "");
  }
}

void apply_pairs(RunConfig& c, const std::vector<std::pair<std::string, std::string>>& pairs, const fs::path& base) {
  for (const auto& [key, value] : pairs) {
    const Field& f = field(key);
    f.set(c, value);
    if (f.path && !base.empty()) {
      fs::path p(trim(value));
      if (!p.empty() && p.is_relative()) f.set(c, (base / p).lexically_normal().string());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](const std::string& key, double v) {
    if (!(v > 0.0)) throw ConfigError(key + ": must be positive (got " + fmt(v) + ")");
  };
  auto non_negative = [](const std::string& key, double v) {
    if (!(v >= 0.0)) throw ConfigError(key + ": must be non-negative (got " + fmt(v) + ")");
  };
  if (workers < 1) throw ConfigError("workers: must be >= 1");
  if (resolution.depth < 8 || resolution.height < 8 || resolution.width < 8) {
    throw ConfigError("resolution: every axis must be >= 8 (got " + to_string(resolution) + ")");
  }
  try {
    encoder_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("encoder: ") + e.what());
  }
  if (heads.hidden[0] < 1 || heads.hidden[1] < 1) throw ConfigError("heads.hidden: widths must be >= 1");
  if (heads.projection_dim < 1) throw ConfigError("heads.projection_dim: must be >= 1");
  positive("pretrain.epochs", pretrain.epochs);
  positive("pretrain.batch_size", pretrain.batch_size);
  non_negative("pretrain.learning_rate", pretrain.learning_rate);
  positive("finetune.epochs", finetune.epochs);
  positive("finetune.batch_size", finetune.batch_size);
  non_negative("finetune.lr_encoder", finetune.lr_encoder);
  non_negative("finetune.lr_head", finetune.lr_head);
  non_negative("finetune.lr_supervised", finetune.lr_supervised);
  try {
    augment.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("augment: ") + e.what());
  }
  try {
    downstream_augment.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("downstream_augment: ") + e.what());
  }
  positive("loss.temperature", loss.temperature);
  non_negative("loss.contrastive_weight", loss.contrastive_weight);
  non_negative("loss.classification_weight", loss.classification_weight);
  if (!(loss.probability_eps > 0.0 && loss.probability_eps < 0.5)) {
    throw ConfigError("loss.probability_eps: must lie in (0, 0.5)");
  }
  positive("data.min_gap_years", data.min_gap_years);
  if (!(data.max_gap_years >= data.min_gap_years)) throw ConfigError("data.max_gap_years: must be >= data.min_gap_years");
  if (data.max_sequence_length < kMinSequenceLength || data.max_sequence_length > kMaxSequenceLength) {
    throw ConfigError("data.max_sequence_length: must be 2, 3 or 4");
  }
  switch (task.kind) {
    case TaskKind::StableClassification:
      if (task.num_images < 1 || task.num_images > 3) throw ConfigError("task.num_images: must be 1, 2 or 3");
      break;
    case TaskKind::ConversionDetection:
      if (task.num_images != 2) throw ConfigError("task.num_images: conversion detection takes 2 images");
      break;
    case TaskKind::FutureConversion:
      if (task.num_images != 1) throw ConfigError("task.num_images: future conversion prediction takes 1 image");
      break;
  }
  if (task.kind != TaskKind::StableClassification) {
    if (task.from == task.to) throw ConfigError("task.to: must differ from task.from");
    if (task.from == Label::Unlabeled || task.to == Label::Unlabeled) {
      throw ConfigError("task.from: conversion endpoints must be diagnoses");
    }
  }
  if (trials.num < 1) throw ConfigError("trials.num: must be >= 1");
  if (static_cast<int>(trials.seeds.size()) < trials.num) {
    throw ConfigError("trials.seeds: need at least trials.num (" + std::to_string(trials.num) + ") seeds");
  }
  if (std::set<std::uint64_t>(trials.seeds.begin(), trials.seeds.end()).size() != trials.seeds.size()) {
    throw ConfigError("trials.seeds: seeds must be distinct");
  }
  try {
    synth.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e = encoder;
  e.input_shape = resolution;
  return e;
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "': expected key=value");
    pairs.emplace_back(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  apply_pairs(config, pairs, {});
}

namespace {

RunConfig parse_with_base(const std::string& text, const std::vector<std::string>& overrides, const fs::path& base) {
  RunConfig c;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: malformed YAML: ") + e.what());
  }
  if (!root.IsNull() && !root.IsMap()) throw ConfigError("config: top level must be a mapping");
  std::vector<std::pair<std::string, std::string>> pairs;
  flatten_node(root, "", pairs);
  apply_pairs(c, pairs, base);
  apply_overrides(c, overrides);
  c.validate();
  return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& yaml_text, const std::vector<std::string>& overrides) {
  return parse_with_base(yaml_text, overrides, {});
}

RunConfig load_run_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_with_base(ss.str(), overrides, fs::absolute(path).parent_path());
}

std::map<std::string, std::string> flatten(const RunConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

std::string to_yaml(const RunConfig& config) {
  YAML::Node root;
  for (const auto& f : fields()) {
    std::vector<std::string> parts;
    std::stringstream ss(f.key);
    std::string part;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    const std::string value = f.get(config);
    YAML::Node leaf;
    if (f.list) {
      leaf = YAML::Node(YAML::NodeType::Sequence);
      for (const auto& item : split_list(value)) leaf.push_back(item);
      leaf.SetStyle(YAML::EmitterStyle::Flow);
    } else {
      leaf = YAML::Node(value);
    }
    if (parts.size() == 1) {
      root[parts[0]] = leaf;
    } else {
      root[parts[0]][parts[1]] = leaf;
    }
  }
  YAML::Emitter out;
  out << root;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_yaml(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace tssl
