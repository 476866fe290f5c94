#pragma once

#include "hbm/io/config.hpp"
#include "hbm/io/files.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbm::io {

inline constexpr const char* kToolVersion = "0.1.0";

/// An error raised inside a pipeline phase; what() starts with "[phase] ".
class PhaseError : public std::runtime_error {
 public:
  PhaseError(const std::string& phase, const std::string& what)
      : std::runtime_error("[" + phase + "] " + what), phase_(phase) {}
  const std::string& phase() const { return phase_; }

 private:
  std::string phase_;
};

struct FileEntry {
  std::string path;  // relative to the run directory
  std::string sha256;
  std::uintmax_t bytes = 0;
};

struct PhaseRecord {
  std::map<std::string, std::uint64_t> seeds;
  double wall_clock_s = 0.0;
  int threads = 1;
};

/// One per run directory; every phase adds its record and refreshes the
/// file inventory.
struct RunManifest {
  std::string name;
  std::string kind;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::map<std::string, PhaseRecord> phases;
  std::vector<FileEntry> files;

  json to_json() const;
  static RunManifest from_json(const json& j);
  static RunManifest load(const fs::path& run_dir);
  void save(const fs::path& run_dir) const;
  /// Checksums of every file under run_dir except the manifest itself.
  void refresh_inventory(const fs::path& run_dir);
  /// Files whose current checksum differs from the inventory.
  std::vector<std::string> verify(const fs::path& run_dir) const;
};

// Run-directory layout.
namespace layout {
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kConfig = "config.json";
inline constexpr const char* kData = "data";
inline constexpr const char* kTruth = "truth";
inline constexpr const char* kCache = "cache";
inline constexpr const char* kFit = "fit";
inline constexpr const char* kTables = "tables";
inline constexpr const char* kReliability = "reliability";
std::string dataset_file(int i);
std::string stage_one_file(int i);
std::string hyper_file(int n_datasets);
std::string cbm_file(int n_datasets);
}  // namespace layout

struct FitOptions {
  bool verbose = true;
};

void cmd_generate(const ExperimentConfig& cfg, const fs::path& out);
void cmd_fit(const ExperimentConfig& cfg, const fs::path& out, const FitOptions& opts = {});
void cmd_reliability(const ExperimentConfig& cfg, const fs::path& out);
/// Merges completed run directories into out/report.json.
json cmd_report(const std::vector<fs::path>& runs, const fs::path& out);

/// Reads the run list of a report config: {"runs": [paths relative to the file]}.
std::vector<fs::path> load_report_config(const fs::path& path);

}  // namespace hbm::io
