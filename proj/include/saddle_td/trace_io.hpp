#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "saddle_td/dataset_io.hpp"
#include "saddle_td/solvers.hpp"

namespace saddle_td {

inline constexpr const char* kTraceHeader = "epoch,grad_evals,wall_ns,em_mspbe,dist_theta,dist_w,omega_sq";
inline const std::vector<std::string> kTraceMetrics = {"epoch",      "wall_ns", "em_mspbe",
                                                       "dist_theta", "dist_w",  "omega_sq"};

/// Trace CSV text. Wall time is written as 0 unless `with_wall_time`, which
/// keeps files byte-identical across runs of the same configuration.
inline std::string trace_csv(const std::vector<TraceRow>& rows, bool with_wall_time = false) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.grad_evals) + "," +
           std::to_string(with_wall_time ? r.wall_ns : 0) + "," + detail::format_double(r.em_mspbe) + "," +
           detail::format_double(r.dist_theta) + "," + detail::format_double(r.dist_w) + "," +
           detail::format_double(r.omega_sq) + "\n";
  }
  return out;
}

inline void write_trace(const std::vector<TraceRow>& rows, const fs::path& path, bool with_wall_time = false) {
  detail::write_file(path, trace_csv(rows, with_wall_time));
}

inline std::vector<TraceRow> parse_trace(const std::string& text, const std::string& name = "trace") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaMismatch, name + ": empty trace");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw Error(ErrorKind::SchemaMismatch, name + ": unexpected header '" + line + "'");

  std::vector<TraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_csv(line);
    const std::string where = name + ":" + std::to_string(line_no);
    if (cells.size() != 7) throw Error(ErrorKind::SchemaMismatch, where + ": expected 7 cells");
    auto integer = [&](std::string_view s) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::SchemaMismatch, where + ": bad integer '" + std::string(s) + "'");
      }
      return v;
    };
    TraceRow r;
    r.epoch = integer(cells[0]);
    r.grad_evals = integer(cells[1]);
    r.wall_ns = static_cast<std::int64_t>(integer(cells[2]));
    r.em_mspbe = detail::parse_double(cells[3], where);
    r.dist_theta = detail::parse_double(cells[4], where);
    r.dist_w = detail::parse_double(cells[5], where);
    r.omega_sq = detail::parse_double(cells[6], where);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<TraceRow> read_trace(const fs::path& path) {
  return parse_trace(detail::read_file(path), path.string());
}

struct LabeledTrace {
  std::string label;
  std::vector<TraceRow> rows;
};

/// Merges traces on the union of their grad_evals values. Columns are
/// grad_evals followed by `<label>:<metric>` for every trace; a cell is
/// blank where that trace has no row at that grad_evals.
inline std::string merge_traces(const std::vector<LabeledTrace>& traces) {
  if (traces.empty()) throw Error(ErrorKind::InvalidArgument, "nothing to merge");
  std::set<std::string> labels;
  std::set<std::uint64_t> axis;
  std::vector<std::map<std::uint64_t, const TraceRow*>> index(traces.size());
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!labels.insert(traces[i].label).second) {
      throw Error(ErrorKind::SchemaMismatch, "duplicate trace label '" + traces[i].label + "'");
    }
    for (const auto& r : traces[i].rows) {
      if (!index[i].emplace(r.grad_evals, &r).second) {
        throw Error(ErrorKind::SchemaMismatch, traces[i].label + ": repeated grad_evals " +
                                                   std::to_string(r.grad_evals));
      }
      axis.insert(r.grad_evals);
    }
  }

  std::string out = "grad_evals";
  for (const auto& t : traces) {
    for (const auto& m : kTraceMetrics) out += "," + t.label + ":" + m;
  }
  out += "\n";
  for (std::uint64_t g : axis) {
    out += std::to_string(g);
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const auto it = index[i].find(g);
      if (it == index[i].end()) {
        out += std::string(kTraceMetrics.size(), ',');
        continue;
      }
      const TraceRow& r = *it->second;
      out += "," + std::to_string(r.epoch) + "," + std::to_string(r.wall_ns) + "," +
             detail::format_double(r.em_mspbe) + "," + detail::format_double(r.dist_theta) + "," +
             detail::format_double(r.dist_w) + "," + detail::format_double(r.omega_sq);
    }
    out += "\n";
  }
  return out;
}

}  // namespace saddle_td
