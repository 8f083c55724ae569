// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "tssl/io.hpp"

namespace tssl {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestHeader = "patient_id,scan_id,acquisition_date,label,volume_path,dataset_id";
constexpr const char* kSplitHeader = "patient_id,split";

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

ManifestLoad read_manifest_csv(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest " + manifest_path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader) {
    throw IoError("manifest header must be '" + std::string(kManifestHeader) + "'");
  }
  const fs::path base = manifest_path.parent_path();
  ManifestLoad result;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) {
      result.rejected.push_back({line_no, "expected 6 fields, got " + std::to_string(f.size())});
      continue;
    }
    try {
      ScanRecord r;
      r.patient_id = f[0];
      r.scan_id = f[1];
      r.acquisition_date = parse_iso_date(f[2]);
      r.label = parse_label(f[3]);
      fs::path vp(f[4]);
      r.volume_path = vp.is_absolute() ? vp : (base / vp).lexically_normal();
      r.dataset_id = f[5];
      if (r.patient_id.empty() || r.scan_id.empty()) {
        throw ValidationError("empty patient_id or scan_id");
      }
      result.manifest.add(std::move(r));
    } catch (const ValidationError& e) {
      result.rejected.push_back({line_no, e.what()});
    }
  }
  return result;
}

void write_manifest_csv(const fs::path& path, const Manifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  out << kManifestHeader << '\n';
  for (const auto& r : manifest.records()) {
    fs::path vp = fs::absolute(r.volume_path).lexically_normal();
    const fs::path rel = vp.lexically_relative(fs::absolute(base).lexically_normal());
    if (!rel.empty()) vp = rel;
    out << r.patient_id << ',' << r.scan_id << ',' << format_iso_date(r.acquisition_date) << ','
        << to_string(r.label) << ',' << vp.generic_string() << ',' << r.dataset_id << '\n';
  }
}

void read_split_csv(const fs::path& split_path, Manifest& manifest) {
  std::ifstream in(split_path);
  if (!in) throw IoError("cannot open split file " + split_path.string());
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != kSplitHeader) {
    throw IoError("split header must be '" + std::string(kSplitHeader) + "'");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 2) {
      throw IoError(split_path.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
    }
    manifest.assign(f[0], parse_split(f[1]));
  }
}

void write_split_csv(const fs::path& path, const Manifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split file " + path.string());
  out << kSplitHeader << '\n';
  for (const auto& [patient, split] : manifest.split_assignment()) {
    out << patient << ',' << to_string(split) << '\n';
  }
}

}  // namespace tssl
