#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "relnav/metrics.hpp"
#include "relnav/rng.hpp"

using namespace relnav;

namespace {

TraceRecord record_with_error(const Vec3& err, double t = 0.0) {
  TraceRecord rec;
  rec.timestamp = t;
  rec.truth_position = Vec3(1.0, 2.0, 0.9);
  rec.estimated_position = rec.truth_position + err;
  return rec;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("constant error: rmse equals the offset, sd vanishes") {
  Trace trace = {record_with_error({0.1, 0.0, 0.0}, 0.0),
                 record_with_error({0.1, 0.0, 0.0}, 0.02),
                 record_with_error({0.1, 0.0, 0.0}, 0.04)};
  const ErrorStats s = compute_stats(trace);
  CHECK(s.rmse.x() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.rmse.y() == doctest::Approx(0.0));
  CHECK(s.sd.x() == doctest::Approx(0.0));
  CHECK(s.max_abs.x() == doctest::Approx(0.1));
}

TEST_CASE("zero error gives all zeros") {
  Trace trace = {record_with_error(Vec3::Zero(), 0.0), record_with_error(Vec3::Zero(), 0.02)};
  const ErrorStats s = compute_stats(trace);
  CHECK(s.rmse.norm() == 0.0);
  CHECK(s.sd.norm() == 0.0);
  CHECK(s.max_abs.norm() == 0.0);
}

TEST_CASE("two-sample hand-computed statistics") {
  Trace trace = {record_with_error({0.1, 0.0, 0.0}, 0.0),
                 record_with_error({-0.1, 0.0, 0.0}, 0.02)};
  const ErrorStats s = compute_stats(trace);
  CHECK(s.rmse.x() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.sd.x() == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(s.mean.x() == doctest::Approx(0.0));
}

TEST_CASE("rmse^2 = mean^2 + sd^2 on random traces") {
  Rng rng(71);
  Trace trace;
  for (int i = 0; i < 500; ++i) {
    trace.push_back(record_with_error(rng.gaussian_vec3(0.2), 0.02 * i));
  }
  const ErrorStats s = compute_stats(trace);
  for (int k = 0; k < 3; ++k) {
    CHECK(s.rmse(k) * s.rmse(k) ==
          doctest::Approx(s.mean(k) * s.mean(k) + s.sd(k) * s.sd(k)).epsilon(1e-9));
  }
}

TEST_CASE("statistics are permutation invariant") {
  Rng rng(72);
  Trace trace;
  for (int i = 0; i < 100; ++i) {
    trace.push_back(record_with_error(rng.gaussian_vec3(0.3), 0.02 * i));
  }
  Trace shuffled = trace;
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1],
              shuffled[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i))]);
  }
  const ErrorStats a = compute_stats(trace);
  const ErrorStats b = compute_stats(shuffled);
  CHECK((a.rmse - b.rmse).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.sd - b.sd).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.max_abs == b.max_abs);
}

TEST_CASE("too-short traces are rejected") {
  CHECK_THROWS(compute_stats({}));
  CHECK_THROWS(compute_stats({record_with_error(Vec3::Zero())}));
}

TEST_CASE("csv export/import round trip preserves the statistics") {
  Rng rng(73);
  Trace trace;
  for (int i = 0; i < 200; ++i) {
    TraceRecord rec = record_with_error(rng.gaussian_vec3(0.1), 0.02 * i);
    rec.estimated_velocity = rng.gaussian_vec3(0.5);
    rec.estimated_attitude = renormalize(quat_exp(rng.gaussian_vec3(0.2)));
    for (int k = 0; k < kErrorStateDim; ++k) rec.covariance_diagonal(k) = rng.uniform();
    rec.accepted = static_cast<std::uint64_t>(i * 7);
    rec.gated = static_cast<std::uint64_t>(i / 3);
    rec.dropped = static_cast<std::uint64_t>(i / 9);
    trace.push_back(rec);
  }

  const std::string path = temp_path("relnav_metrics_roundtrip.csv");
  export_trace(trace, path);
  const Trace back = import_trace(path);
  REQUIRE(back.size() == trace.size());

  const ErrorStats a = compute_stats(trace);
  const ErrorStats b = compute_stats(back);
  CHECK(a.rmse == b.rmse);   // bitwise: shortest round-trip formatting
  CHECK(a.sd == b.sd);
  CHECK(a.mean == b.mean);
  CHECK(a.max_abs == b.max_abs);

  for (std::size_t i = 0; i < trace.size(); ++i) {
    CHECK(back[i].timestamp == trace[i].timestamp);
    CHECK(back[i].estimated_velocity == trace[i].estimated_velocity);
    CHECK(back[i].covariance_diagonal == trace[i].covariance_diagonal);
    CHECK(back[i].accepted == trace[i].accepted);
  }
  std::remove(path.c_str());
}

TEST_CASE("csv header matches the documented schema byte for byte") {
  CHECK(trace_csv_header() ==
        "timestamp,truth_qx,truth_qy,truth_qz,est_qx,est_qy,est_qz,"
        "est_vx,est_vy,est_vz,est_psi_w,est_psi_x,est_psi_y,est_psi_z,"
        "cov_att_x,cov_att_y,cov_att_z,cov_vx,cov_vy,cov_vz,"
        "cov_qx,cov_qy,cov_qz,cov_bgx,cov_bgy,cov_bgz,"
        "accepted,gated,dropped");
}

TEST_CASE("import rejects wrong schema and unwritable paths fail loudly") {
  const std::string path = temp_path("relnav_metrics_bad.csv");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("time,other\n1,2\n", f);
    std::fclose(f);
  }
  CHECK_THROWS(import_trace(path));
  std::remove(path.c_str());
  CHECK_THROWS(export_trace({}, "/nonexistent_dir_xyz/trace.csv"));
}

TEST_CASE("summaries carry the table fields") {
  Trace trace = {record_with_error({0.05, -0.02, 0.01}, 0.0),
                 record_with_error({0.03, 0.04, -0.02}, 0.02)};
  const ErrorStats s = compute_stats(trace);
  const std::string txt = summarize(s);
  CHECK(txt.find("e_qx") != std::string::npos);
  CHECK(txt.find("sigma_qz") != std::string::npos);
  const std::string kv = summarize_kv(s);
  CHECK(kv.find("e_qx=") != std::string::npos);
  CHECK(kv.find("samples=2") != std::string::npos);
}
