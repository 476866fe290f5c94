#include "hbm/io/commands.hpp"

#include <algorithm>
#include <cstdio>

namespace hbm::io {

namespace layout {

namespace {
std::string numbered(const char* dir, const char* stem, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d.csv", stem, i);
  return std::string(dir) + "/" + buf;
}
}  // namespace

std::string dataset_file(int i) { return numbered(kData, "dataset", i); }
std::string stage_one_file(int i) { return numbered(kCache, "stage1", i); }
std::string hyper_file(int n_datasets) { return numbered(kFit, "hyper_ND", n_datasets); }
std::string cbm_file(int n_datasets) { return numbered(kFit, "cbm_ND", n_datasets); }

}  // namespace layout

json RunManifest::to_json() const {
  json phase_json = json::object();
  for (const auto& [name, p] : phases) {
    phase_json[name] = {{"seeds", p.seeds}, {"wall_clock_s", p.wall_clock_s}, {"threads", p.threads}};
  }
  json file_json = json::array();
  for (const auto& f : files) file_json.push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
  return {{"schema_version", kSchemaVersion},
          {"name", name},
          {"kind", kind},
          {"config_hash", config_hash},
          {"tool_version", tool_version},
          {"phases", phase_json},
          {"files", file_json}};
}

RunManifest RunManifest::from_json(const json& j) {
  if (j.value("schema_version", -1) != kSchemaVersion) throw std::runtime_error("manifest: unsupported schema version");
  RunManifest m;
  m.name = j.at("name").get<std::string>();
  m.kind = j.at("kind").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.tool_version = j.at("tool_version").get<std::string>();
  for (const auto& [name, p] : j.at("phases").items()) {
    PhaseRecord r;
    r.seeds = p.at("seeds").get<std::map<std::string, std::uint64_t>>();
    r.wall_clock_s = p.at("wall_clock_s").get<double>();
    r.threads = p.at("threads").get<int>();
    m.phases[name] = r;
  }
  for (const auto& f : j.at("files")) {
    m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>(),
                       f.at("bytes").get<std::uintmax_t>()});
  }
  return m;
}

RunManifest RunManifest::load(const fs::path& run_dir) { return from_json(read_json(run_dir / layout::kManifest)); }

void RunManifest::save(const fs::path& run_dir) const { write_json(run_dir / layout::kManifest, to_json()); }

void RunManifest::refresh_inventory(const fs::path& run_dir) {
  files.clear();
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), run_dir).generic_string();
    if (rel == layout::kManifest) continue;
    files.push_back({rel, sha256_file(entry.path()), entry.file_size()});
  }
  std::sort(files.begin(), files.end(), [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
}

std::vector<std::string> RunManifest::verify(const fs::path& run_dir) const {
  std::vector<std::string> bad;
  for (const auto& f : files) {
    const fs::path p = run_dir / f.path;
    if (!fs::exists(p) || sha256_file(p) != f.sha256) bad.push_back(f.path);
  }
  return bad;
}

}  // namespace hbm::io
