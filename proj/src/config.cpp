#include "relnav/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace relnav {

namespace {

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<Entry> tokenize(const std::string& text) {
  std::vector<Entry> entries;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    line_no++;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
    }
    entries.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no});
  }
  return entries;
}

double to_double(const Entry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(e.line) + ": bad number for key '" + e.key + "'");
  }
}

int to_int(const Entry& e) {
  const double v = to_double(e);
  if (std::abs(v - std::round(v)) > 1e-9) {
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key + "' wants an integer");
  }
  return static_cast<int>(std::llround(v));
}

std::uint64_t to_seed(const Entry& e) {
  try {
    return std::stoull(e.value);
  } catch (const std::exception&) {
    throw ConfigError("line " + std::to_string(e.line) + ": bad seed value");
  }
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key + "' wants true/false");
}

Vec3 to_vec3(const Entry& e) {
  std::istringstream in(e.value);
  Vec3 v;
  char c1 = 0, c2 = 0;
  if (!(in >> v.x() >> c1 >> v.y() >> c2 >> v.z()) || c1 != ',' || c2 != ',') {
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key + "' wants x,y,z");
  }
  return v;
}

}  // namespace

ScenarioConfig parse_scenario_config_text(const std::string& text) {
  const std::vector<Entry> entries = tokenize(text);

  ScenarioKind kind = ScenarioKind::static_square;
  bool kind_seen = false;
  for (const auto& e : entries) {
    if (e.section == "scenario" && e.key == "kind") {
      kind = scenario_kind_from_string(e.value);
      kind_seen = true;
    }
  }
  if (!kind_seen) {
    throw ConfigError("missing required key [scenario] kind");
  }

  ScenarioConfig cfg = ScenarioConfig::defaults_for(kind);
  std::map<int, Vec3> responders;

  for (const auto& e : entries) {
    const std::string id = e.section + "." + e.key;
    if (id == "scenario.kind") {
      continue;
    } else if (id == "scenario.duration") {
      cfg.duration = to_double(e);
    } else if (id == "scenario.seed") {
      cfg.seed = to_seed(e);
    } else if (id == "scenario.altitude") {
      cfg.altitude = to_double(e);
    } else if (id == "scenario.square_side") {
      cfg.square_side = to_double(e);
    } else if (id == "scenario.square_speed") {
      cfg.square_speed = to_double(e);
    } else if (id == "scenario.corner_dwell") {
      cfg.corner_dwell = to_double(e);
    } else if (id == "scenario.target_speed") {
      cfg.target_speed = to_double(e);
    } else if (id == "scenario.target_yaw_rate") {
      cfg.target_yaw_rate = to_double(e);
    } else if (id == "scenario.relative_setpoint") {
      cfg.relative_setpoint = to_vec3(e);
    } else if (id == "scenario.path_center") {
      cfg.path_center = to_vec3(e);
    } else if (id == "scenario.trajectory_index") {
      cfg.trajectory_index = to_int(e);
    } else if (id == "scenario.init_hold") {
      cfg.init_hold = to_double(e);
    } else if (id == "rates.imu_hz") {
      cfg.rates.imu_hz = to_double(e);
    } else if (id == "rates.flow_hz") {
      cfg.rates.flow_hz = to_double(e);
    } else if (id == "rates.laser_hz") {
      cfg.rates.laser_hz = to_double(e);
    } else if (id == "rates.baro_hz") {
      cfg.rates.baro_hz = to_double(e);
    } else if (id == "rates.mag_hz") {
      cfg.rates.mag_hz = to_double(e);
    } else if (id == "rates.payload_hz") {
      cfg.rates.payload_hz = to_double(e);
    } else if (id == "rates.control_hz") {
      cfg.rates.control_hz = to_double(e);
    } else if (id == "uwb.requester_square") {
      cfg.uwb.requester_square = to_double(e);
    } else if (e.section == "uwb" && e.key.rfind("responder_", 0) == 0) {
      int idx = 0;
      const std::string tail = e.key.substr(10);
      const auto res = std::from_chars(tail.data(), tail.data() + tail.size(), idx);
      if (res.ec != std::errc{} || res.ptr != tail.data() + tail.size() || idx < 0) {
        throw ConfigError("line " + std::to_string(e.line) + ": bad responder index in '" +
                          e.key + "'");
      }
      responders[idx] = to_vec3(e);
    } else if (id == "uwb.pair_bias") {
      cfg.uwb.pair_bias = to_double(e);
    } else if (id == "uwb.cycle_period") {
      cfg.uwb.cycle_period = to_double(e);
    } else if (id == "uwb.response_delay") {
      cfg.uwb.response_delay = to_double(e);
    } else if (id == "uwb.single_pair") {
      cfg.uwb.single_pair = to_bool(e);
    } else if (id == "uwb.sigma_range") {
      cfg.uwb.noise.sigma_range = to_double(e);
    } else if (id == "uwb.dropout") {
      cfg.uwb.noise.dropout_probability = to_double(e);
    } else if (id == "uwb.nlos_probability") {
      cfg.uwb.noise.nlos_probability = to_double(e);
    } else if (id == "uwb.nlos_bias_max") {
      cfg.uwb.noise.nlos_bias_max = to_double(e);
    } else if (id == "sim_noise.all_zero") {
      if (to_bool(e)) {
        cfg.sim_noise.set_all_zero();
        cfg.uwb.noise.sigma_range = 0.0;
      }
    } else if (id == "sim_noise.gyro_noise_density") {
      cfg.sim_noise.gyro_noise_density = to_double(e);
    } else if (id == "sim_noise.accel_noise_density") {
      cfg.sim_noise.accel_noise_density = to_double(e);
    } else if (id == "sim_noise.gyro_bias_walk") {
      cfg.sim_noise.gyro_bias_walk = to_double(e);
    } else if (id == "sim_noise.gyro_bias_init") {
      cfg.sim_noise.gyro_bias_init = to_double(e);
    } else if (id == "sim_noise.accel_bias_sigma") {
      cfg.sim_noise.accel_bias_sigma = to_double(e);
    } else if (id == "sim_noise.sigma_flow") {
      cfg.sim_noise.sigma_flow = to_double(e);
    } else if (id == "sim_noise.sigma_laser") {
      cfg.sim_noise.sigma_laser = to_double(e);
    } else if (id == "sim_noise.laser_bias_sigma") {
      cfg.sim_noise.laser_bias_sigma = to_double(e);
    } else if (id == "sim_noise.sigma_baro") {
      cfg.sim_noise.sigma_baro = to_double(e);
    } else if (id == "sim_noise.sigma_mag") {
      cfg.sim_noise.sigma_mag = to_double(e);
    } else if (id == "sim_noise.payload_att_sigma_xy") {
      cfg.sim_noise.payload_att_sigma_xy = to_double(e);
    } else if (id == "sim_noise.payload_att_sigma_z") {
      cfg.sim_noise.payload_att_sigma_z = to_double(e);
    } else if (id == "sim_noise.pair_bias_error") {
      cfg.sim_noise.pair_bias_error = to_double(e);
    } else if (id == "sim_noise.baro_offset") {
      cfg.sim_noise.baro_offset = to_double(e);
    } else if (id == "filter.sigma_range") {
      cfg.filter_noise.sigma_range = to_double(e);
    } else if (id == "filter.sigma_flow") {
      cfg.filter_noise.sigma_flow = to_double(e);
    } else if (id == "filter.sigma_laser") {
      cfg.filter_noise.sigma_laser = to_double(e);
    } else if (id == "filter.sigma_baro") {
      cfg.filter_noise.sigma_baro = to_double(e);
    } else if (id == "filter.sigma_mag") {
      cfg.filter_noise.sigma_mag = to_double(e);
    } else if (id == "filter.gate_threshold") {
      cfg.filter_noise.gate_threshold = to_double(e);
    } else if (id == "filter.gyro_density") {
      cfg.process_noise.gyro_density = to_double(e);
    } else if (id == "filter.accel_density") {
      cfg.process_noise.accel_density = to_double(e);
    } else if (id == "filter.gyro_bias_walk") {
      cfg.process_noise.gyro_bias_walk = to_double(e);
    } else if (id == "filter.target_motion_accel") {
      cfg.process_noise.target_motion_accel = to_double(e);
    } else if (id == "filter.sigma_att_rp") {
      cfg.init.sigma_att_rp = to_double(e);
    } else if (id == "filter.sigma_att_yaw") {
      cfg.init.sigma_att_yaw = to_double(e);
    } else if (id == "filter.sigma_vel") {
      cfg.init.sigma_vel = to_double(e);
    } else if (id == "filter.sigma_pos") {
      cfg.init.sigma_pos = to_double(e);
    } else if (id == "filter.sigma_bias") {
      cfg.init.sigma_bias = to_double(e);
    } else if (id == "filter.min_stationary_span") {
      cfg.init.min_stationary_span = to_double(e);
    } else if (id == "filter.mag_declination") {
      const double d = to_double(e);
      cfg.init.mag_reference = Vec3(std::cos(d), std::sin(d), 0.0);
    } else if (id == "controller.kp") {
      cfg.controller.kp = to_double(e);
    } else if (id == "controller.kd") {
      cfg.controller.kd = to_double(e);
    } else if (id == "controller.accel_max") {
      cfg.controller.accel_max = to_double(e);
    } else if (id == "controller.tilt_max") {
      cfg.controller.tilt_max = to_double(e);
    } else if (id == "controller.attitude_tau") {
      cfg.controller.attitude_tau = to_double(e);
    } else if (id == "controller.omega_max") {
      cfg.controller.omega_max = to_double(e);
    } else {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key +
                        "' in section [" + e.section + "]");
    }
  }

  if (!responders.empty()) {
    std::vector<Vec3> list;
    for (int i = 0; i < static_cast<int>(responders.size()); ++i) {
      const auto it = responders.find(i);
      if (it == responders.end()) {
        throw ConfigError("responder indices must be contiguous from 0");
      }
      list.push_back(it->second);
    }
    cfg.uwb.responders = std::move(list);
  }

  cfg.validate();
  return cfg;
}

ScenarioConfig parse_scenario_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_config_text(buf.str());
}

std::string scenario_config_to_text(const ScenarioConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "[scenario]\n";
  out << "kind = " << to_string(cfg.kind) << "\n";
  out << "duration = " << cfg.duration << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "altitude = " << cfg.altitude << "\n";
  out << "square_side = " << cfg.square_side << "\n";
  out << "square_speed = " << cfg.square_speed << "\n";
  out << "corner_dwell = " << cfg.corner_dwell << "\n";
  out << "target_speed = " << cfg.target_speed << "\n";
  out << "target_yaw_rate = " << cfg.target_yaw_rate << "\n";
  out << "relative_setpoint = " << cfg.relative_setpoint.x() << ","
      << cfg.relative_setpoint.y() << "," << cfg.relative_setpoint.z() << "\n";
  out << "path_center = " << cfg.path_center.x() << "," << cfg.path_center.y() << ","
      << cfg.path_center.z() << "\n";
  out << "trajectory_index = " << cfg.trajectory_index << "\n";
  out << "init_hold = " << cfg.init_hold << "\n";
  out << "\n[rates]\n";
  out << "imu_hz = " << cfg.rates.imu_hz << "\n";
  out << "flow_hz = " << cfg.rates.flow_hz << "\n";
  out << "laser_hz = " << cfg.rates.laser_hz << "\n";
  out << "baro_hz = " << cfg.rates.baro_hz << "\n";
  out << "mag_hz = " << cfg.rates.mag_hz << "\n";
  out << "payload_hz = " << cfg.rates.payload_hz << "\n";
  out << "control_hz = " << cfg.rates.control_hz << "\n";
  out << "\n[uwb]\n";
  out << "requester_square = " << cfg.uwb.requester_square << "\n";
  for (std::size_t i = 0; i < cfg.uwb.responders.size(); ++i) {
    out << "responder_" << i << " = " << cfg.uwb.responders[i].x() << ","
        << cfg.uwb.responders[i].y() << "," << cfg.uwb.responders[i].z() << "\n";
  }
  out << "pair_bias = " << cfg.uwb.pair_bias << "\n";
  out << "cycle_period = " << cfg.uwb.cycle_period << "\n";
  out << "response_delay = " << cfg.uwb.response_delay << "\n";
  out << "single_pair = " << (cfg.uwb.single_pair ? "true" : "false") << "\n";
  out << "sigma_range = " << cfg.uwb.noise.sigma_range << "\n";
  out << "dropout = " << cfg.uwb.noise.dropout_probability << "\n";
  out << "nlos_probability = " << cfg.uwb.noise.nlos_probability << "\n";
  out << "nlos_bias_max = " << cfg.uwb.noise.nlos_bias_max << "\n";
  out << "\n[sim_noise]\n";
  out << "gyro_noise_density = " << cfg.sim_noise.gyro_noise_density << "\n";
  out << "accel_noise_density = " << cfg.sim_noise.accel_noise_density << "\n";
  out << "gyro_bias_walk = " << cfg.sim_noise.gyro_bias_walk << "\n";
  out << "gyro_bias_init = " << cfg.sim_noise.gyro_bias_init << "\n";
  out << "accel_bias_sigma = " << cfg.sim_noise.accel_bias_sigma << "\n";
  out << "sigma_flow = " << cfg.sim_noise.sigma_flow << "\n";
  out << "sigma_laser = " << cfg.sim_noise.sigma_laser << "\n";
  out << "laser_bias_sigma = " << cfg.sim_noise.laser_bias_sigma << "\n";
  out << "sigma_baro = " << cfg.sim_noise.sigma_baro << "\n";
  out << "sigma_mag = " << cfg.sim_noise.sigma_mag << "\n";
  out << "payload_att_sigma_xy = " << cfg.sim_noise.payload_att_sigma_xy << "\n";
  out << "payload_att_sigma_z = " << cfg.sim_noise.payload_att_sigma_z << "\n";
  out << "pair_bias_error = " << cfg.sim_noise.pair_bias_error << "\n";
  out << "baro_offset = " << cfg.sim_noise.baro_offset << "\n";
  out << "\n[filter]\n";
  out << "sigma_range = " << cfg.filter_noise.sigma_range << "\n";
  out << "sigma_flow = " << cfg.filter_noise.sigma_flow << "\n";
  out << "sigma_laser = " << cfg.filter_noise.sigma_laser << "\n";
  out << "sigma_baro = " << cfg.filter_noise.sigma_baro << "\n";
  out << "sigma_mag = " << cfg.filter_noise.sigma_mag << "\n";
  out << "gate_threshold = " << cfg.filter_noise.gate_threshold << "\n";
  out << "gyro_density = " << cfg.process_noise.gyro_density << "\n";
  out << "accel_density = " << cfg.process_noise.accel_density << "\n";
  out << "gyro_bias_walk = " << cfg.process_noise.gyro_bias_walk << "\n";
  out << "target_motion_accel = " << cfg.process_noise.target_motion_accel << "\n";
  out << "sigma_att_rp = " << cfg.init.sigma_att_rp << "\n";
  out << "sigma_att_yaw = " << cfg.init.sigma_att_yaw << "\n";
  out << "sigma_vel = " << cfg.init.sigma_vel << "\n";
  out << "sigma_pos = " << cfg.init.sigma_pos << "\n";
  out << "sigma_bias = " << cfg.init.sigma_bias << "\n";
  out << "min_stationary_span = " << cfg.init.min_stationary_span << "\n";
  out << "\n[controller]\n";
  out << "kp = " << cfg.controller.kp << "\n";
  out << "kd = " << cfg.controller.kd << "\n";
  out << "accel_max = " << cfg.controller.accel_max << "\n";
  out << "tilt_max = " << cfg.controller.tilt_max << "\n";
  out << "attitude_tau = " << cfg.controller.attitude_tau << "\n";
  out << "omega_max = " << cfg.controller.omega_max << "\n";
  return out.str();
}

}  // namespace relnav
