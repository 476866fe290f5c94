#pragma once

#include "hbm/gauss.hpp"
#include "hbm/samplers.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hbm::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const fs::path& path);

/// Columnar CSV: one header line, then one row per line. Numbers are written
/// in shortest round-trip form, so reading gives back the same doubles.
struct Table {
  std::vector<std::string> columns;
  Matrix values;
};

void write_csv(const fs::path& path, const std::vector<std::string>& columns, const Matrix& values);
Table read_csv(const fs::path& path);

/// <file>.json next to every CSV.
fs::path sidecar_path(const fs::path& csv);
void write_json(const fs::path& path, const json& j);
json read_json(const fs::path& path);

/// CSV plus sidecar carrying schema version and the caller's metadata.
void write_table(const fs::path& csv, const std::vector<std::string>& columns, const Matrix& values, json meta);
Table read_table(const fs::path& csv, json* meta = nullptr);

/// Ground truth lives under a directory named "truth"; fit paths go through
/// this check before reading anything.
void refuse_truth(const fs::path& path);

void write_samples(const fs::path& csv, const SampleSet& s, const std::vector<std::string>& param_names, json meta);
SampleSet read_samples(const fs::path& csv, json* meta = nullptr);

/// Long-format summary rows: N_D,param,stat,value (or N_d for design tables).
struct SummaryRow {
  int n = 0;
  std::string param;
  std::string stat;
  double value = 0.0;
  bool operator==(const SummaryRow&) const = default;
};

void write_summary(const fs::path& csv, const std::string& n_column, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary(const fs::path& csv);

/// threshold,p_f,method,seed
struct CurveRow {
  double threshold = 0.0;
  double p_f = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  bool operator==(const CurveRow&) const = default;
};

void write_curves(const fs::path& csv, const std::vector<CurveRow>& rows);
std::vector<CurveRow> read_curves(const fs::path& csv);

std::string format_double(double v);

}  // namespace hbm::io
