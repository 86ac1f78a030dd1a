#include "relnav/metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace relnav {

ErrorStats compute_stats(const Trace& trace) {
  if (trace.size() < 2) {
    throw std::invalid_argument("compute_stats: need at least two records");
  }
  ErrorStats stats;
  stats.samples = trace.size();
  Vec3 sum = Vec3::Zero();
  Vec3 sum_sq = Vec3::Zero();
  for (const auto& rec : trace) {
    const Vec3 err = rec.estimated_position - rec.truth_position;
    sum += err;
    sum_sq += err.cwiseProduct(err);
    stats.max_abs = stats.max_abs.cwiseMax(err.cwiseAbs());
  }
  const double n = static_cast<double>(trace.size());
  stats.mean = sum / n;
  stats.rmse = (sum_sq / n).cwiseSqrt();
  stats.sd = (sum_sq / n - stats.mean.cwiseProduct(stats.mean)).cwiseMax(0.0).cwiseSqrt();
  return stats;
}

namespace {

void append_number(std::string& out, double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, res.ptr);
}

double parse_number(std::string_view token) {
  double value = 0.0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc{} || res.ptr != token.data() + token.size()) {
    throw std::runtime_error("import_trace: bad numeric field '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

std::string trace_csv_header() {
  return "timestamp,"
         "truth_qx,truth_qy,truth_qz,"
         "est_qx,est_qy,est_qz,"
         "est_vx,est_vy,est_vz,"
         "est_psi_w,est_psi_x,est_psi_y,est_psi_z,"
         "cov_att_x,cov_att_y,cov_att_z,"
         "cov_vx,cov_vy,cov_vz,"
         "cov_qx,cov_qy,cov_qz,"
         "cov_bgx,cov_bgy,cov_bgz,"
         "accepted,gated,dropped";
}

void export_trace(const Trace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("export_trace: cannot open '" + path + "'");
  }
  std::string line = trace_csv_header();
  line.push_back('\n');
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  for (const auto& rec : trace) {
    line.clear();
    append_number(line, rec.timestamp);
    const double fields[] = {
        rec.truth_position.x(),     rec.truth_position.y(),     rec.truth_position.z(),
        rec.estimated_position.x(), rec.estimated_position.y(), rec.estimated_position.z(),
        rec.estimated_velocity.x(), rec.estimated_velocity.y(), rec.estimated_velocity.z(),
        rec.estimated_attitude.w(), rec.estimated_attitude.x(),
        rec.estimated_attitude.y(), rec.estimated_attitude.z()};
    for (double f : fields) {
      line.push_back(',');
      append_number(line, f);
    }
    for (int i = 0; i < kErrorStateDim; ++i) {
      line.push_back(',');
      append_number(line, rec.covariance_diagonal(i));
    }
    line.push_back(',');
    line.append(std::to_string(rec.accepted));
    line.push_back(',');
    line.append(std::to_string(rec.gated));
    line.push_back(',');
    line.append(std::to_string(rec.dropped));
    line.push_back('\n');
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
  }
  if (!out) {
    throw std::runtime_error("export_trace: write failed for '" + path + "'");
  }
}

Trace import_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("import_trace: cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line) || line != trace_csv_header()) {
    throw std::runtime_error("import_trace: header does not match the trace schema");
  }
  Trace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string_view> tokens;
    std::string_view view = line;
    while (true) {
      const auto comma = view.find(',');
      tokens.push_back(view.substr(0, comma));
      if (comma == std::string_view::npos) break;
      view.remove_prefix(comma + 1);
    }
    if (tokens.size() != 29) {
      throw std::runtime_error("import_trace: wrong field count");
    }
    TraceRecord rec;
    std::size_t i = 0;
    rec.timestamp = parse_number(tokens[i++]);
    for (int k = 0; k < 3; ++k) rec.truth_position(k) = parse_number(tokens[i++]);
    for (int k = 0; k < 3; ++k) rec.estimated_position(k) = parse_number(tokens[i++]);
    for (int k = 0; k < 3; ++k) rec.estimated_velocity(k) = parse_number(tokens[i++]);
    const double w = parse_number(tokens[i++]);
    const double x = parse_number(tokens[i++]);
    const double y = parse_number(tokens[i++]);
    const double z = parse_number(tokens[i++]);
    rec.estimated_attitude = Quat(w, x, y, z);
    for (int k = 0; k < kErrorStateDim; ++k) rec.covariance_diagonal(k) = parse_number(tokens[i++]);
    rec.accepted = static_cast<std::uint64_t>(parse_number(tokens[i++]));
    rec.gated = static_cast<std::uint64_t>(parse_number(tokens[i++]));
    rec.dropped = static_cast<std::uint64_t>(parse_number(tokens[i++]));
    trace.push_back(rec);
  }
  return trace;
}

std::string summarize(const ErrorStats& stats) {
  std::ostringstream out;
  out << "relative position error over " << stats.samples << " records\n";
  out << "          e_qx      e_qy      e_qz  sigma_qx  sigma_qy  sigma_qz\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "RMSE/SD %7.3f   %7.3f   %7.3f   %7.3f   %7.3f   %7.3f\n",
                stats.rmse.x(), stats.rmse.y(), stats.rmse.z(),
                stats.sd.x(), stats.sd.y(), stats.sd.z());
  out << buf;
  std::snprintf(buf, sizeof(buf), "max|e|  %7.3f   %7.3f   %7.3f\n",
                stats.max_abs.x(), stats.max_abs.y(), stats.max_abs.z());
  out << buf;
  return out.str();
}

std::string summarize_kv(const ErrorStats& stats) {
  std::string out;
  const auto put = [&out](const char* key, double value) {
    out += key;
    out.push_back('=');
    append_number(out, value);
    out.push_back('\n');
  };
  put("e_qx", stats.rmse.x());
  put("e_qy", stats.rmse.y());
  put("e_qz", stats.rmse.z());
  put("sigma_qx", stats.sd.x());
  put("sigma_qy", stats.sd.y());
  put("sigma_qz", stats.sd.z());
  put("max_abs_x", stats.max_abs.x());
  put("max_abs_y", stats.max_abs.y());
  put("max_abs_z", stats.max_abs.z());
  put("mean_x", stats.mean.x());
  put("mean_y", stats.mean.y());
  put("mean_z", stats.mean.z());
  out += "samples=" + std::to_string(stats.samples) + "\n";
  return out;
}

}  // namespace relnav
