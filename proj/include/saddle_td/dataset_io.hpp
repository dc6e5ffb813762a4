#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "saddle_td/core_model.hpp"

namespace saddle_td {

namespace fs = std::filesystem;

namespace detail {

static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

inline void put_f64le(std::string& buf, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

inline double get_f64le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline double parse_double(std::string_view text, const std::string& where) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw Error(ErrorKind::SchemaMismatch, "cannot parse number '" + std::string(text) + "' at " + where);
  }
  return value;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "short write to " + path.string());
}

}  // namespace detail

/// Blob sibling of a manifest: same stem, ".bin" extension.
inline fs::path blob_path_for(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

/// Writes `<path>` (JSON manifest) and its ".bin" sibling. Rows are
/// [phi (d), phi' (d), r, rho, z (d, iff traced)] as little-endian float64.
inline void save_dataset(const PolicyEvalDataset& raw, const fs::path& manifest_path) {
  const PolicyEvalDataset data = validate_dataset(raw);
  const bool traced = data.has_traces();
  const fs::path blob = blob_path_for(manifest_path);

  nlohmann::ordered_json manifest;
  manifest["n"] = data.size();
  manifest["d"] = data.d;
  manifest["gamma"] = data.gamma;
  manifest["lambda"] = data.lambda;
  manifest["has_traces"] = traced;
  manifest["blob"] = blob.filename().string();
  manifest["provenance"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : data.provenance) manifest["provenance"][k] = v;

  const auto d = static_cast<std::size_t>(data.d);
  std::string bytes;
  bytes.reserve(data.size() * (2 * d + 2 + (traced ? d : 0)) * 8);
  for (const auto& s : data.samples) {
    for (Index j = 0; j < data.d; ++j) detail::put_f64le(bytes, s.phi(j));
    for (Index j = 0; j < data.d; ++j) detail::put_f64le(bytes, s.phi_next(j));
    detail::put_f64le(bytes, s.reward);
    detail::put_f64le(bytes, s.importance);
    if (traced) {
      for (Index j = 0; j < data.d; ++j) detail::put_f64le(bytes, (*s.trace)(j));
    }
  }
  detail::write_file(blob, bytes);
  detail::write_file(manifest_path, manifest.dump(2) + "\n");
}

inline PolicyEvalDataset load_manifest(const fs::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, manifest_path.string() + ": " + e.what());
  }

  PolicyEvalDataset data;
  std::size_t n = 0;
  bool traced = false;
  try {
    n = manifest.at("n").get<std::size_t>();
    data.d = manifest.at("d").get<Index>();
    data.gamma = manifest.at("gamma").get<double>();
    data.lambda = manifest.value("lambda", 0.0);
    traced = manifest.value("has_traces", false);
    if (manifest.contains("provenance")) {
      for (const auto& [k, v] : manifest["provenance"].items()) {
        data.provenance[k] = v.is_string() ? v.get<std::string>() : v.dump();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaMismatch, manifest_path.string() + ": " + e.what());
  }
  if (data.d <= 0) throw Error(ErrorKind::DimensionMismatch, "manifest d must be positive");

  const fs::path blob = manifest.contains("blob") ? manifest_path.parent_path() / manifest["blob"].get<std::string>()
                                                  : blob_path_for(manifest_path);
  const std::string bytes = detail::read_file(blob);
  const auto d = static_cast<std::size_t>(data.d);
  const std::size_t row = 2 * d + 2 + (traced ? d : 0);
  if (bytes.size() != n * row * 8) {
    throw Error(ErrorKind::SchemaMismatch, blob.string() + " holds " + std::to_string(bytes.size()) +
                                               " bytes, manifest implies " + std::to_string(n * row * 8));
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  data.samples.resize(n);
  for (auto& s : data.samples) {
    s.phi.resize(data.d);
    s.phi_next.resize(data.d);
    for (Index j = 0; j < data.d; ++j, p += 8) s.phi(j) = detail::get_f64le(p);
    for (Index j = 0; j < data.d; ++j, p += 8) s.phi_next(j) = detail::get_f64le(p);
    s.reward = detail::get_f64le(p);
    s.importance = detail::get_f64le(p + 8);
    p += 16;
    if (traced) {
      Vector z(data.d);
      for (Index j = 0; j < data.d; ++j, p += 8) z(j) = detail::get_f64le(p);
      s.trace = std::move(z);
    }
  }
  return validate_dataset(std::move(data));
}

/// CSV with a header and the blob's row layout. Columns are recognized by
/// name: phi_<j>, phi_next_<j>, reward, importance (optional, default 1),
/// trace_<j> (optional).
inline PolicyEvalDataset load_csv(const fs::path& path, double gamma, double lambda = 0.0) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaMismatch, path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<int> phi, next, trace;
  int reward = -1, importance = -1;
  const auto header = detail::split_csv(line);
  auto indexed = [](std::string_view name, std::string_view prefix, std::vector<int>& slots, int col) {
    if (name.substr(0, prefix.size()) != prefix) return false;
    const std::string_view rest = name.substr(prefix.size());
    std::size_t j = 0;
    const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), j);
    if (ec != std::errc() || ptr != rest.data() + rest.size()) return false;
    if (slots.size() <= j) slots.resize(j + 1, -1);
    slots[j] = col;
    return true;
  };
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    std::string_view h = header[static_cast<std::size_t>(c)];
    while (!h.empty() && h.back() == ' ') h.remove_suffix(1);
    while (!h.empty() && h.front() == ' ') h.remove_prefix(1);
    if (h == "reward") {
      reward = c;
    } else if (h == "importance") {
      importance = c;
    } else if (!indexed(h, "phi_next_", next, c) && !indexed(h, "phi_", phi, c) && !indexed(h, "trace_", trace, c)) {
      throw Error(ErrorKind::SchemaMismatch, path.string() + ": unknown column '" + std::string(h) + "'");
    }
  }
  auto complete = [](const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int c) { return c >= 0; });
  };
  if (phi.empty() || phi.size() != next.size() || reward < 0 || !complete(phi) || !complete(next) ||
      !complete(trace) || (!trace.empty() && trace.size() != phi.size())) {
    throw Error(ErrorKind::SchemaMismatch, path.string() + ": header needs phi_0.., phi_next_0.., reward");
  }

  PolicyEvalDataset data;
  data.gamma = gamma;
  data.lambda = lambda;
  data.provenance["source"] = path.filename().string();
  const auto d = static_cast<Index>(phi.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::SchemaMismatch, path.string() + ": wrong cell count on line " + std::to_string(line_no));
    }
    const std::string where = path.string() + ":" + std::to_string(line_no);
    auto cell = [&](int c) { return detail::parse_double(cells[static_cast<std::size_t>(c)], where); };
    TransitionSample s;
    s.phi.resize(d);
    s.phi_next.resize(d);
    for (Index j = 0; j < d; ++j) {
      s.phi(j) = cell(phi[static_cast<std::size_t>(j)]);
      s.phi_next(j) = cell(next[static_cast<std::size_t>(j)]);
    }
    s.reward = cell(reward);
    s.importance = importance >= 0 ? cell(importance) : 1.0;
    if (!trace.empty()) {
      Vector z(d);
      for (Index j = 0; j < d; ++j) z(j) = cell(trace[static_cast<std::size_t>(j)]);
      s.trace = std::move(z);
    }
    data.samples.push_back(std::move(s));
  }
  return validate_dataset(std::move(data));
}

inline void save_csv(const PolicyEvalDataset& raw, const fs::path& path) {
  const PolicyEvalDataset data = validate_dataset(raw);
  std::string out;
  for (Index j = 0; j < data.d; ++j) out += "phi_" + std::to_string(j) + ",";
  for (Index j = 0; j < data.d; ++j) out += "phi_next_" + std::to_string(j) + ",";
  out += "reward,importance";
  if (data.has_traces()) {
    for (Index j = 0; j < data.d; ++j) out += ",trace_" + std::to_string(j);
  }
  out += "\n";
  for (const auto& s : data.samples) {
    for (Index j = 0; j < data.d; ++j) out += detail::format_double(s.phi(j)) + ",";
    for (Index j = 0; j < data.d; ++j) out += detail::format_double(s.phi_next(j)) + ",";
    out += detail::format_double(s.reward) + "," + detail::format_double(s.importance);
    if (s.trace) {
      for (Index j = 0; j < data.d; ++j) out += "," + detail::format_double((*s.trace)(j));
    }
    out += "\n";
  }
  detail::write_file(path, out);
}

/// Dispatches on extension: ".csv" goes through load_csv, anything else is a manifest.
inline PolicyEvalDataset load_dataset(const fs::path& path, double csv_gamma = 0.95) {
  if (path.extension() == ".csv") return load_csv(path, csv_gamma);
  return load_manifest(path);
}

}  // namespace saddle_td
