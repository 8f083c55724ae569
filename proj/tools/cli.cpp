// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "tssl/checkpoint.hpp"
#include "tssl/cohort.hpp"
#include "tssl/eval.hpp"
#include "tssl/io.hpp"
#include "tssl/run_config.hpp"
#include "tssl/synth.hpp"
#include "tssl/trainer.hpp"

namespace tssl::cli {

namespace fs = std::filesystem;

namespace {

struct Invocation {
  std::string verb;
  fs::path config_path;
  std::vector<std::string> overrides;
  fs::path run_root;
  std::string method;
  fs::path checkpoint;
  fs::path out_dir;
  int num = 0;
};

struct Context {
  RunConfig config;
  fs::path run_dir;
  std::ostream& out;
  std::ostream& err;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!text.empty() && text.back() != '\n') f << '\n';
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const Invocation& inv, const RunConfig& cfg) {
  fs::path root = inv.run_root.empty() ? fs::path("runs") : inv.run_root;
  if (const char* env = std::getenv(kRunRootEnv); env != nullptr && *env != '\0') root = env;
  const std::string base = inv.verb + "-" + timestamp() + "-" + config_hash(cfg).substr(0, 8);
  fs::path dir = root / base;
  for (int i = 1; fs::exists(dir); ++i) dir = root / (base + "-" + std::to_string(i));
  fs::create_directories(dir);
  write_text(dir / "config.yaml", to_yaml(cfg));
  return dir;
}

Manifest load_data(const RunConfig& cfg, std::ostream& err) {
  if (cfg.data.manifest.empty()) throw ConfigError("data.manifest: required for this command");
  if (!fs::exists(cfg.data.manifest)) throw ConfigError("data.manifest: file not found: " + cfg.data.manifest.string());
  if (cfg.data.splits.empty()) throw ConfigError("data.splits: required for this command");
  if (!fs::exists(cfg.data.splits)) throw ConfigError("data.splits: file not found: " + cfg.data.splits.string());
  ManifestLoad load = read_manifest_csv(cfg.data.manifest);
  for (const auto& r : load.rejected) err << "warning: manifest line " << r.line << " rejected: " << r.reason << '\n';
  read_split_csv(cfg.data.splits, load.manifest);
  load.manifest.validate_splits();
  return std::move(load.manifest);
}

fs::path checkpoint_dir(const Context& ctx) {
  return ctx.config.checkpoint_dir.empty() ? ctx.run_dir / "checkpoints" : ctx.config.checkpoint_dir;
}

Network load_model(const fs::path& path, CheckpointMeta* meta = nullptr) {
  if (path.empty()) throw ConfigError("--checkpoint: required for this command");
  LoadedCheckpoint ck = load_checkpoint(path);
  if (meta) *meta = ck.meta;
  return std::move(ck.network);
}

int cmd_synth(Context& ctx, const Invocation& inv) {
  fs::path out = !inv.out_dir.empty() ? inv.out_dir : ctx.config.synth_out;
  if (out.empty()) out = ctx.run_dir / "cohort";
  PhantomSpec spec = ctx.config.synth;
  const WrittenCohort cohort = generate_cohort(spec, out);
  VolumeStore store;
  const CohortReport report = verify_cohort(cohort.manifest, store);
  write_text(ctx.run_dir / "verify.json", report.to_json());
  ctx.out << "manifest " << fs::absolute(cohort.manifest_path).string() << '\n';
  ctx.out << "splits " << fs::absolute(cohort.split_path).string() << '\n';
  ctx.out << "patients " << report.patients << " scans " << report.scans << '\n';
  for (const auto& f : report.findings) {
    ctx.err << "finding [" << f.kind << "] " << f.patient_id << "/" << f.scan_id << ": " << f.message << '\n';
  }
  return report.ok() ? kExitOk : kExitFailure;
}

int cmd_extract(Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const Manifest manifest = load_data(cfg, ctx.err);
  nlohmann::json reports = nlohmann::json::array();
  nlohmann::json pools = nlohmann::json::object();
  for (Split split : {Split::Train, Split::Val, Split::Test}) {
    const Extraction ex = extract_sequences(manifest, split, cfg.data.min_gap_years, cfg.data.max_gap_years,
                                            cfg.data.max_sequence_length);
    reports.push_back(nlohmann::json::parse(ex.report.to_json()));
    nlohmann::json seqs = nlohmann::json::array();
    for (int n = kMinSequenceLength; n <= kMaxSequenceLength; ++n) {
      for (const auto& s : ex.pool.all(n)) {
        nlohmann::json scan_ids = nlohmann::json::array();
        for (const auto& r : s.scans()) scan_ids.push_back(r.scan_id);
        seqs.push_back({{"patient_id", s.patient_id()}, {"scans", scan_ids}, {"gaps_years", s.gaps_years()}});
      }
    }
    pools[std::string(to_string(split))] = seqs;
    ctx.out << to_string(split) << ": pairs " << ex.report.sequences_by_length[0] << ", triplets "
            << ex.report.sequences_by_length[1] << ", quadruplets " << ex.report.sequences_by_length[2] << '\n';
  }
  write_text(ctx.run_dir / "extraction_report.json", reports.dump(2));
  write_text(ctx.run_dir / "sequences.json", pools.dump(2));
  return kExitOk;
}

int cmd_pretrain(Context& ctx, const Invocation& inv) {
  RunConfig& cfg = ctx.config;
  const Method method = parse_method(inv.method);
  if (method == Method::Supervised) throw ConfigError("--method: must be tov, top or topc");
  cfg.method = method;
  write_text(ctx.run_dir / "config.yaml", to_yaml(cfg));
  const Manifest manifest = load_data(cfg, ctx.err);
  const Extraction train = extract_sequences(manifest, Split::Train, cfg.data.min_gap_years, cfg.data.max_gap_years,
                                             cfg.data.max_sequence_length);
  const Extraction val = extract_sequences(manifest, Split::Val, cfg.data.min_gap_years, cfg.data.max_gap_years,
                                           cfg.data.max_sequence_length);
  VolumeStore store;
  const PretrainData data{&train.pool, &val.pool, &store, train_norm_stats(manifest, store)};
  TrainOptions opts;
  opts.checkpoint_dir = checkpoint_dir(ctx);
  opts.log_path = ctx.run_dir / "train_log.jsonl";
  opts.on_epoch = [&](const EpochRecord& r) {
    ctx.out << r.phase << " epoch " << r.epoch << " loss " << r.loss << " acc " << r.train_accuracy;
    if (r.val_metric) ctx.out << " val " << *r.val_metric;
    ctx.out << '\n';
  };
  const TrainResult result = pretrain(cfg, data, opts);
  ctx.out << "checkpoint " << result.checkpoint.string() << '\n';
  return kExitOk;
}

void write_metrics(Context& ctx, const std::string& task_id, Network& net, const TaskSplits& splits, VolumeStore& store,
                   const NormStats& norm) {
  nlohmann::json j;
  j["task_id"] = task_id;
  j["method"] = std::string(to_string(net.method()));
  j["num_images"] = splits.test.num_input_images;
  j["test_samples"] = splits.test.samples.size();
  try {
    j["test_auc"] = task_auc(net, splits.test, store, norm, ctx.config.normalization);
  } catch (const MetricError& e) {
    j["test_auc"] = nullptr;
    j["note"] = e.what();
  }
  write_text(ctx.run_dir / "metrics.json", j.dump(2));
  ctx.out << j.dump() << '\n';
}

int cmd_downstream(Context& ctx, const Invocation& inv, bool supervised) {
  RunConfig& cfg = ctx.config;
  const Manifest manifest = load_data(cfg, ctx.err);
  const TaskSplits splits = make_task_splits(manifest, cfg);
  VolumeStore store;
  const NormStats norm = train_norm_stats(manifest, store);
  const TaskData data{&splits.train, &splits.val, &store, norm};
  TrainOptions opts;
  opts.checkpoint_dir = checkpoint_dir(ctx);
  opts.log_path = ctx.run_dir / "train_log.jsonl";
  std::optional<TrainResult> result;
  if (supervised) {
    cfg.method = Method::Supervised;
    write_text(ctx.run_dir / "config.yaml", to_yaml(cfg));
    result.emplace(train_supervised(data, cfg, opts));
  } else {
    if (inv.checkpoint.empty()) throw ConfigError("--checkpoint: required for finetune");
    Network pretrained = load_model(inv.checkpoint);
    result.emplace(finetune(pretrained, data, cfg, opts));
  }
  ctx.out << "checkpoint " << result->checkpoint.string() << '\n';
  write_metrics(ctx, splits.task_id, result->model, splits, store, norm);
  return kExitOk;
}

int cmd_evaluate(Context& ctx, const Invocation& inv) {
  const RunConfig& cfg = ctx.config;
  CheckpointMeta meta;
  Network net = load_model(inv.checkpoint, &meta);
  const Manifest manifest = load_data(cfg, ctx.err);
  VolumeStore store;
  if (net.has_downstream()) {
    TaskSplits splits = make_task_splits(manifest, cfg);
    if (splits.test.num_input_images != net.downstream_info().num_images ||
        splits.test.num_classes() != net.downstream_info().num_classes) {
      throw ConfigError("task: configured task does not match the checkpoint's downstream head");
    }
    write_metrics(ctx, splits.task_id, net, splits, store, meta.norm);
    return kExitOk;
  }
  const Extraction test = extract_sequences(manifest, Split::Test, cfg.data.min_gap_years, cfg.data.max_gap_years,
                                            cfg.data.max_sequence_length);
  nlohmann::json j;
  j["method"] = std::string(to_string(net.method()));
  if (net.has_tov_head()) {
    j["tov_balanced_accuracy"] = tov_accuracy(net, test.pool, store, meta.norm, meta.norm_mode);
  }
  for (int n : test.pool.available_lengths()) {
    if (net.has_top_head(n)) {
      j["top_accuracy"][std::to_string(n)] = top_accuracy(net, test.pool, n, store, meta.norm, meta.norm_mode);
    }
  }
  write_text(ctx.run_dir / "metrics.json", j.dump(2));
  ctx.out << j.dump() << '\n';
  return kExitOk;
}

int cmd_trials(Context& ctx, const Invocation& inv) {
  RunConfig& cfg = ctx.config;
  const int num = inv.num > 0 ? inv.num : cfg.trials.num;
  if (static_cast<int>(cfg.trials.seeds.size()) < num) {
    throw ConfigError("trials.seeds: need at least " + std::to_string(num) + " seeds for --num " + std::to_string(num));
  }
  const Manifest manifest = load_data(cfg, ctx.err);
  const TaskSplits splits = make_task_splits(manifest, cfg);
  VolumeStore store;
  const NormStats norm = train_norm_stats(manifest, store);
  std::optional<Network> pretrained;
  if (!inv.checkpoint.empty()) {
    pretrained.emplace(load_model(inv.checkpoint));
  } else if (cfg.method != Method::Supervised) {
    const Extraction train = extract_sequences(manifest, Split::Train, cfg.data.min_gap_years, cfg.data.max_gap_years,
                                               cfg.data.max_sequence_length);
    const Extraction val = extract_sequences(manifest, Split::Val, cfg.data.min_gap_years, cfg.data.max_gap_years,
                                             cfg.data.max_sequence_length);
    TrainOptions opts;
    opts.checkpoint_dir = checkpoint_dir(ctx) / "pretrain";
    opts.log_path = ctx.run_dir / "pretrain_log.jsonl";
    pretrained.emplace(pretrain(cfg, {&train.pool, &val.pool, &store, norm}, opts).model);
  }
  const TrialReport report = run_trials(cfg, splits, store, norm, num, pretrained ? &*pretrained : nullptr);
  write_text(ctx.run_dir / "report.json", report.to_json());
  write_text(ctx.run_dir / "report.txt", report.to_table());
  ctx.out << report.to_table();
  return report.completed > 0 ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal self-supervised pre-training for longitudinal volumes", "tssl"};
  app.require_subcommand(1);
  Invocation inv;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", inv.config_path, "Run config (YAML)")->required()->check(CLI::ExistingFile);
    sub->add_option("-s,--set", inv.overrides, "Override a config key (key=value); repeatable");
    sub->add_option("--run-root", inv.run_root, std::string("Run root directory (env ") + kRunRootEnv + " wins)");
  };
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic phantom cohort");
  add_common(synth);
  synth->add_option("--out", inv.out_dir, "Cohort output directory");
  CLI::App* extract = app.add_subcommand("extract", "Extract gap-constrained sequences per split");
  add_common(extract);
  CLI::App* pre = app.add_subcommand("pretrain", "Pre-train an encoder on a pretext task");
  add_common(pre);
  pre->add_option("--method", inv.method, "Pretext method")
      ->required()
      ->check(CLI::IsMember({"tov", "top", "topc"}, CLI::ignore_case));
  CLI::App* fine = app.add_subcommand("finetune", "Fine-tune a pre-trained checkpoint on the configured task");
  add_common(fine);
  fine->add_option("--checkpoint", inv.checkpoint, "Pre-trained checkpoint")->required();
  CLI::App* sup = app.add_subcommand("supervised", "Train the configured task from scratch");
  add_common(sup);
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the TEST split");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", inv.checkpoint, "Checkpoint to evaluate")->required();
  CLI::App* trials = app.add_subcommand("trials", "Repeat the downstream task over seeds and report AUC mean/std");
  add_common(trials);
  trials->add_option("--num", inv.num, "Number of trials")->check(CLI::PositiveNumber);
  trials->add_option("--checkpoint", inv.checkpoint, "Pre-trained checkpoint (default: pre-train first)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    for (const CLI::App* sub : app.get_subcommands()) err << sub->help();
    if (app.get_subcommands().empty()) err << app.help();
    return kExitUsage;
  }
  inv.verb = app.get_subcommands().front()->get_name();

  RunConfig config;
  try {
    config = load_run_config(inv.config_path, inv.overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitFailure;
  }

  try {
    Context ctx{config, make_run_dir(inv, config), out, err};
    out << "run " << ctx.run_dir.string() << '\n';
    if (inv.verb == "synth") return cmd_synth(ctx, inv);
    if (inv.verb == "extract") return cmd_extract(ctx);
    if (inv.verb == "pretrain") return cmd_pretrain(ctx, inv);
    if (inv.verb == "finetune") return cmd_downstream(ctx, inv, false);
    if (inv.verb == "supervised") return cmd_downstream(ctx, inv, true);
    if (inv.verb == "evaluate") return cmd_evaluate(ctx, inv);
    if (inv.verb == "trials") return cmd_trials(ctx, inv);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace tssl::cli
