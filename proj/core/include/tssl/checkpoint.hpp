// SPDX-License-Identifier: Apache-2.0
//
// Model checkpoints: `<stem>.bin` holds named float64 tensors, `<stem>.json`
// the metadata needed to rebuild the network before loading them.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tssl/augment.hpp"
#include "tssl/nets.hpp"

namespace tssl {

struct CheckpointMeta {
  Method method = Method::TOP;
  EncoderConfig encoder;
  HeadConfig heads;
  bool tov_head = false;
  std::vector<int> top_heads;
  bool projection = false;
  std::optional<DownstreamInfo> downstream;
  std::vector<std::string> class_names;
  NormStats norm;
  NormMode norm_mode = NormMode::ZScore;
  int epoch = 0;
  std::string config_hash;
  std::string metric_name;
  double metric = 0.0;
};

/// Fills the structural fields (method, configs, heads) from `net`.
CheckpointMeta describe(Network& net);

/// Writes `<stem>.bin` and `<stem>.json`; returns the sidecar path.
std::filesystem::path save_checkpoint(const std::filesystem::path& stem, Network& net, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Network network;
  CheckpointMeta meta;
};

/// Accepts the stem, the `.json` sidecar or the `.bin` path. Throws IoError
/// when files are missing or a tensor name or shape does not match.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace tssl
