#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relnav/types.hpp"

namespace relnav {

/// One row per control tick: ground truth, estimate, covariance diagonal,
/// cumulative fusion counters.
struct TraceRecord {
  Timestamp timestamp = 0.0;
  Vec3 truth_position = Vec3::Zero();     // relative, F_E
  Vec3 estimated_position = Vec3::Zero();
  Vec3 estimated_velocity = Vec3::Zero();
  Quat estimated_attitude = Quat::Identity();
  ErrorState covariance_diagonal = ErrorState::Zero();
  std::uint64_t accepted = 0;
  std::uint64_t gated = 0;
  std::uint64_t dropped = 0;
};

using Trace = std::vector<TraceRecord>;

/// Per-axis RMSE / SD / worst-case of the relative-position error. SD uses
/// population normalization so rmse^2 = mean^2 + sd^2 holds exactly.
struct ErrorStats {
  Vec3 rmse = Vec3::Zero();
  Vec3 sd = Vec3::Zero();
  Vec3 mean = Vec3::Zero();
  Vec3 max_abs = Vec3::Zero();
  std::size_t samples = 0;
};

/// Throws std::invalid_argument on fewer than two records.
ErrorStats compute_stats(const Trace& trace);

/// Exact CSV header, one column per flattened TraceRecord field.
std::string trace_csv_header();

/// Writes the trace as CSV (shortest round-trippable number formatting).
/// Throws std::runtime_error when the path is not writable.
void export_trace(const Trace& trace, const std::string& path);

/// Reads a CSV produced by export_trace. Throws on schema mismatch.
Trace import_trace(const std::string& path);

/// Summary table in the style of the experiment reports.
std::string summarize(const ErrorStats& stats);

/// Machine-readable key=value form of the stats.
std::string summarize_kv(const ErrorStats& stats);

}  // namespace relnav
