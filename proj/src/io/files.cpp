#include "hbm/io/files.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace hbm::io {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s, const fs::path& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": not a number: '" + std::string(s) + "'");
  }
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string_view> lines_of(const std::string& text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return ss.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

void write_csv(const fs::path& path, const std::vector<std::string>& columns, const Matrix& values) {
  if (static_cast<Eigen::Index>(columns.size()) != values.cols()) {
    throw std::invalid_argument("write_csv: header and matrix width differ for " + path.string());
  }
  std::string text;
  for (std::size_t c = 0; c < columns.size(); ++c) text += (c ? "," : "") + columns[c];
  text += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) text += ',';
      text += format_double(values(r, c));
    }
    text += '\n';
  }
  write_file(path, text);
}

Table read_csv(const fs::path& path) {
  const std::string text = read_file(path);
  const auto lines = lines_of(text);
  if (lines.empty()) throw std::runtime_error(path.string() + ": empty file");
  Table t;
  for (auto h : split(lines[0], ',')) t.columns.emplace_back(h);
  const auto n_cols = static_cast<Eigen::Index>(t.columns.size());
  t.values.resize(static_cast<Eigen::Index>(lines.size() - 1), n_cols);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split(lines[r], ',');
    if (static_cast<Eigen::Index>(cells.size()) != n_cols) {
      throw std::runtime_error(path.string() + ":" + std::to_string(r + 1) + ": expected " + std::to_string(n_cols) +
                               " fields");
    }
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      t.values(static_cast<Eigen::Index>(r - 1), c) = parse_double(cells[static_cast<std::size_t>(c)], path, r + 1);
    }
  }
  return t;
}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p += ".json";
  return p;
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_table(const fs::path& csv, const std::vector<std::string>& columns, const Matrix& values, json meta) {
  meta["schema_version"] = kSchemaVersion;
  meta["columns"] = columns;
  meta["rows"] = values.rows();
  write_csv(csv, columns, values);
  write_json(sidecar_path(csv), meta);
}

Table read_table(const fs::path& csv, json* meta) {
  const json m = read_json(sidecar_path(csv));
  if (m.value("schema_version", -1) != kSchemaVersion) {
    throw std::runtime_error(csv.string() + ": unsupported schema version");
  }
  Table t = read_csv(csv);
  if (m.at("columns").get<std::vector<std::string>>() != t.columns || m.at("rows").get<Eigen::Index>() != t.values.rows()) {
    throw std::runtime_error(csv.string() + ": sidecar does not describe the file");
  }
  if (meta) *meta = m;
  return t;
}

void refuse_truth(const fs::path& path) {
  for (const auto& part : fs::weakly_canonical(path)) {
    if (part == "truth") throw std::runtime_error("refusing to read ground truth from a fit path: " + path.string());
  }
}

void write_samples(const fs::path& csv, const SampleSet& s, const std::vector<std::string>& param_names, json meta) {
  if (static_cast<Eigen::Index>(param_names.size()) != s.dim()) {
    throw std::invalid_argument("write_samples: one name per column required");
  }
  std::vector<std::string> cols = param_names;
  cols.emplace_back("log_likelihood");
  Matrix values(s.size(), s.dim() + 1);
  values << s.draws, s.log_likelihoods;
  meta["kind"] = "samples";
  meta["seed"] = s.seed;
  meta["betas"] = s.betas;
  if (s.log_evidence) {
    meta["log_evidence"] = *s.log_evidence;
  } else {
    meta["log_evidence"] = nullptr;
  }
  write_table(csv, cols, values, std::move(meta));
}

SampleSet read_samples(const fs::path& csv, json* meta) {
  json m;
  const Table t = read_table(csv, &m);
  if (m.value("kind", "") != "samples" || t.columns.empty() || t.columns.back() != "log_likelihood") {
    throw std::runtime_error(csv.string() + ": not a sample file");
  }
  SampleSet s;
  s.draws = t.values.leftCols(t.values.cols() - 1);
  s.log_likelihoods = t.values.col(t.values.cols() - 1);
  s.seed = m.at("seed").get<std::uint64_t>();
  s.betas = m.at("betas").get<std::vector<double>>();
  if (!m.at("log_evidence").is_null()) {
    s.log_evidence = m.at("log_evidence").get<double>();
  }
  if (meta) *meta = m;
  return s;
}

void write_summary(const fs::path& csv, const std::string& n_column, const std::vector<SummaryRow>& rows) {
  std::string text = n_column + ",param,stat,value\n";
  for (const auto& r : rows) text += std::to_string(r.n) + "," + r.param + "," + r.stat + "," + format_double(r.value) + "\n";
  write_file(csv, text);
}

std::vector<SummaryRow> read_summary(const fs::path& csv) {
  const std::string text = read_file(csv);
  const auto lines = lines_of(text);
  if (lines.empty()) throw std::runtime_error(csv.string() + ": empty file");
  std::vector<SummaryRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != 4) throw std::runtime_error(csv.string() + ":" + std::to_string(i + 1) + ": expected 4 fields");
    SummaryRow r;
    r.n = static_cast<int>(parse_double(cells[0], csv, i + 1));
    r.param = std::string(cells[1]);
    r.stat = std::string(cells[2]);
    r.value = parse_double(cells[3], csv, i + 1);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_curves(const fs::path& csv, const std::vector<CurveRow>& rows) {
  std::string text = "threshold,p_f,method,seed\n";
  for (const auto& r : rows) {
    text += format_double(r.threshold) + "," + format_double(r.p_f) + "," + r.method + "," + std::to_string(r.seed) + "\n";
  }
  write_file(csv, text);
}

std::vector<CurveRow> read_curves(const fs::path& csv) {
  const std::string text = read_file(csv);
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "threshold,p_f,method,seed") throw std::runtime_error(csv.string() + ": not a curve file");
  std::vector<CurveRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = split(lines[i], ',');
    if (cells.size() != 4) throw std::runtime_error(csv.string() + ":" + std::to_string(i + 1) + ": expected 4 fields");
    CurveRow r;
    r.threshold = parse_double(cells[0], csv, i + 1);
    r.p_f = parse_double(cells[1], csv, i + 1);
    r.method = std::string(cells[2]);
    const auto [ptr, ec] = std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), r.seed);
    if (ec != std::errc() || ptr != cells[3].data() + cells[3].size()) {
      throw std::runtime_error(csv.string() + ":" + std::to_string(i + 1) + ": bad seed");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace hbm::io
