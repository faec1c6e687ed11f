#include "radloc/scenario.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace radloc {

using nlohmann::json;

void Scenario::validate() const {
  env.validate();
  if (trajectory.empty())
    throw std::invalid_argument("Scenario: trajectory must be nonempty");
  for (const auto& s : truth_sources) {
    s.validate();
    if (!env.contains(s.position))
      throw std::invalid_argument("Scenario: source outside bounds");
  }
  for (const auto& p : trajectory) {
    p.validate();
    if (!env.contains(p.position))
      throw std::invalid_argument("Scenario: pose outside bounds");
  }
}

std::vector<SensorPose> lawnmower_trajectory(const Environment& env, int rows,
                                             int cols, double height_cm) {
  env.validate();
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("lawnmower_trajectory: rows and cols must be >= 1");
  const double x0 = env.bounds(0, 0), dx = env.extent()[0] / cols;
  const double y0 = env.bounds(1, 0), dy = env.extent()[1] / rows;

  std::vector<SensorPose> poses;
  poses.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int cc = (r % 2 == 0) ? c : cols - 1 - c;
      SensorPose pose;
      pose.position = Eigen::VectorXd(env.dimension());
      pose.position[0] = x0 + (cc + 0.5) * dx;
      pose.position[1] = y0 + (r + 0.5) * dy;
      if (env.dimension() == 3)
        pose.position[2] = std::min(std::max(height_cm, env.bounds(2, 0)),
                                    env.bounds(2, 1));
      pose.height = height_cm;
      pose.efficiency = env.efficiency;
      pose.background = env.background;
      poses.push_back(std::move(pose));
    }
  }
  return poses;
}

std::vector<Measurement> generate_measurements(const Scenario& scn,
                                               int time_step,
                                               bool freeze_noise) {
  scn.validate();
  const std::uint64_t stream_id =
      1000 + static_cast<std::uint64_t>(freeze_noise ? 0 : time_step);
  RandomStream rng = RandomStream::derive(scn.seed, stream_id);
  std::vector<Measurement> out;
  out.reserve(scn.trajectory.size());
  for (const auto& pose : scn.trajectory) {
    Measurement m;
    m.pose = pose;
    m.count = sample_count(expected_intensity(pose, scn.truth_sources), rng);
    m.time_step = time_step;
    out.push_back(std::move(m));
  }
  return out;
}

double trajectory_pitch(const Scenario& scn) {
  if (scn.lawnmower) {
    return std::max(scn.env.extent()[0] / scn.lawnmower->cols,
                    scn.env.extent()[1] / scn.lawnmower->rows);
  }
  if (scn.trajectory.size() < 2) return scn.env.extent().maxCoeff() / 10.0;
  double sum = 0.0;
  for (std::size_t i = 1; i < scn.trajectory.size(); ++i)
    sum += (scn.trajectory[i].position - scn.trajectory[i - 1].position).norm();
  return sum / static_cast<double>(scn.trajectory.size() - 1);
}

namespace {

[[noreturn]] void missing(const std::string& field) {
  throw std::runtime_error("scenario: missing or invalid field \"" + field +
                           "\"");
}

const json& require(const json& j, const std::string& field) {
  if (!j.contains(field)) missing(field);
  return j.at(field);
}

Eigen::VectorXd parse_vector(const json& j, const std::string& field,
                             double unit) {
  if (!j.is_array() || j.empty()) missing(field);
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) missing(field);
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>() * unit;
  }
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace

Scenario scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("scenario: JSON parse error: ") +
                             e.what());
  }

  double unit = 1.0;
  if (j.contains("units")) {
    const std::string u = j.at("units").get<std::string>();
    if (u == "m")
      unit = 100.0;
    else if (u != "cm")
      missing("units");
  }

  Scenario scn;
  const int dim = require(j, "dimension").get<int>();
  if (dim != 2 && dim != 3) missing("dimension");

  const json& jb = require(j, "bounds");
  if (!jb.is_array() || static_cast<int>(jb.size()) != dim) missing("bounds");
  scn.env.bounds = Eigen::MatrixX2d(dim, 2);
  for (int i = 0; i < dim; ++i) {
    if (!jb[i].is_array() || jb[i].size() != 2) missing("bounds");
    scn.env.bounds(i, 0) = jb[i][0].get<double>() * unit;
    scn.env.bounds(i, 1) = jb[i][1].get<double>() * unit;
  }
  scn.env.background = j.value("background_cps", 2.0);
  scn.env.efficiency = j.value("efficiency", 1.0);

  for (const json& js : require(j, "sources")) {
    SourceParams s;
    s.position = parse_vector(require(js, "position"), "sources.position", unit);
    s.strength = require(js, "strength_uCi").get<double>();
    if (js.contains("dipole"))
      s.dipole = parse_vector(js.at("dipole"), "sources.dipole", unit);
    scn.truth_sources.push_back(std::move(s));
  }

  const json& jt = require(j, "trajectory");
  const std::string type = require(jt, "type").get<std::string>();
  if (type == "lawnmower") {
    LawnmowerSpec spec;
    spec.rows = require(jt, "rows").get<int>();
    spec.cols = require(jt, "cols").get<int>();
    spec.height_cm = require(jt, "height_cm").get<double>() * unit;
    scn.trajectory =
        lawnmower_trajectory(scn.env, spec.rows, spec.cols, spec.height_cm);
    scn.lawnmower = spec;
  } else if (type == "explicit") {
    for (const json& jp : require(jt, "poses")) {
      SensorPose p;
      p.position = parse_vector(require(jp, "position"), "poses.position", unit);
      p.height = require(jp, "height_cm").get<double>() * unit;
      p.efficiency = jp.value("efficiency", scn.env.efficiency);
      p.background = jp.value("background_cps", scn.env.background);
      scn.trajectory.push_back(std::move(p));
    }
  } else {
    missing("trajectory.type");
  }

  scn.seed = require(j, "seed").get<std::uint64_t>();
  scn.validate();
  return scn;
}

std::string scenario_to_json_text(const Scenario& scn) {
  json j;
  j["dimension"] = scn.env.dimension();
  j["units"] = "cm";
  json jb = json::array();
  for (int i = 0; i < scn.env.dimension(); ++i)
    jb.push_back({scn.env.bounds(i, 0), scn.env.bounds(i, 1)});
  j["bounds"] = jb;
  j["background_cps"] = scn.env.background;
  j["efficiency"] = scn.env.efficiency;

  json js = json::array();
  for (const auto& s : scn.truth_sources) {
    json e;
    e["position"] = vector_to_json(s.position);
    e["strength_uCi"] = s.strength;
    if (s.dipole) e["dipole"] = vector_to_json(*s.dipole);
    js.push_back(std::move(e));
  }
  j["sources"] = std::move(js);

  if (scn.lawnmower) {
    j["trajectory"] = {{"type", "lawnmower"},
                       {"rows", scn.lawnmower->rows},
                       {"cols", scn.lawnmower->cols},
                       {"height_cm", scn.lawnmower->height_cm}};
  } else {
    json poses = json::array();
    for (const auto& p : scn.trajectory) {
      poses.push_back({{"position", vector_to_json(p.position)},
                       {"height_cm", p.height},
                       {"efficiency", p.efficiency},
                       {"background_cps", p.background}});
    }
    j["trajectory"] = {{"type", "explicit"}, {"poses", std::move(poses)}};
  }
  j["seed"] = scn.seed;
  return j.dump(2);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("scenario: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return scenario_from_json_text(ss.str());
}

void save_scenario(const Scenario& scn, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("scenario: cannot write " + path.string());
  out << scenario_to_json_text(scn) << "\n";
}

PriorPointSet load_prior_points(const std::filesystem::path& path,
                                int dimension) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("prior points: cannot open " + path.string());

  PriorPointSet set;
  std::string line;
  int lineno = 0;
  bool have_weights = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        if (lineno == 1) { vals.clear(); break; }  // header row
        throw std::runtime_error("prior points: bad number at line " +
                                 std::to_string(lineno));
      }
    }
    if (vals.empty()) continue;
    const int n = static_cast<int>(vals.size());
    if (n != dimension && n != dimension + 1)
      throw std::runtime_error(
          "prior points: line " + std::to_string(lineno) + " has " +
          std::to_string(n) + " columns, expected " +
          std::to_string(dimension) + " or " + std::to_string(dimension + 1));
    const bool row_has_weight = (n == dimension + 1);
    if (!set.points.empty() && row_has_weight != have_weights)
      throw std::runtime_error("prior points: inconsistent column count at line " +
                               std::to_string(lineno));
    have_weights = row_has_weight;
    Eigen::VectorXd p(dimension);
    for (int i = 0; i < dimension; ++i) p[i] = vals[static_cast<std::size_t>(i)];
    set.points.push_back(std::move(p));
    if (row_has_weight) {
      const double w = vals.back();
      if (w < 0.0)
        throw std::runtime_error("prior points: negative weight at line " +
                                 std::to_string(lineno));
      set.weights.push_back(w);
    }
  }
  if (set.points.empty())
    throw std::runtime_error("prior points: file is empty: " + path.string());
  return set;
}

PriorPointSet undersample(const PriorPointSet& points, std::size_t target,
                          std::uint64_t seed) {
  if (points.size() <= target) return points;
  // Seeded Fisher-Yates prefix over an index permutation.
  std::vector<std::size_t> idx(points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  RandomStream rng = RandomStream::derive(seed, 7001);
  for (std::size_t i = 0; i < target; ++i) {
    const std::size_t j = i + rng.index(idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  PriorPointSet out;
  for (std::size_t i = 0; i < target; ++i) {
    out.points.push_back(points.points[idx[i]]);
    if (!points.weights.empty()) out.weights.push_back(points.weights[idx[i]]);
  }
  return out;
}

void save_measurements_csv(const std::vector<Measurement>& ms,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("measurements: cannot write " + path.string());
  const int dim = ms.empty() ? 2 : static_cast<int>(ms[0].pose.position.size());
  out << "time_step,x_cm,y_cm";
  if (dim == 3) out << ",z_cm";
  out << ",height_cm,efficiency,background_cps,count_cps\n";
  out.precision(17);
  for (const auto& m : ms) {
    out << m.time_step;
    for (int i = 0; i < dim; ++i) out << "," << m.pose.position[i];
    out << "," << m.pose.height << "," << m.pose.efficiency << ","
        << m.pose.background << "," << m.count << "\n";
  }
}

std::vector<Measurement> load_measurements_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("measurements: cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header))
    throw std::runtime_error("measurements: file is empty: " + path.string());
  const bool has_z = header.find("z_cm") != std::string::npos;
  const int dim = has_z ? 3 : 2;

  std::vector<Measurement> ms;
  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != dim + 5)
      throw std::runtime_error("measurements: bad column count at line " +
                               std::to_string(lineno));
    Measurement m;
    m.time_step = static_cast<int>(vals[0]);
    m.pose.position = Eigen::VectorXd(dim);
    for (int i = 0; i < dim; ++i) m.pose.position[i] = vals[1 + i];
    m.pose.height = vals[1 + dim];
    m.pose.efficiency = vals[2 + dim];
    m.pose.background = vals[3 + dim];
    m.count = static_cast<long>(vals[4 + dim]);
    if (m.count < 0)
      throw std::runtime_error("measurements: negative count at line " +
                               std::to_string(lineno));
    ms.push_back(std::move(m));
  }
  return ms;
}

}  // namespace radloc
