#include "scan/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace scan {

void SceneSpec::validate() const {
  if (noise < 0.0) throw ConfigError("noise must be non-negative");
  if (ground_density < 0.0) throw ConfigError("ground density must be non-negative");
  if (ground_density > 0.0 && !(ground_extent > 0.0)) throw ConfigError("ground extent must be positive");
  if (ground_density > 0.0 && !range.contains(0.0, 0.0, ground_z)) throw ConfigError("ground plane outside the range");
  for (const auto& inst : instances) {
    if (!range.contains(inst.center[0], inst.center[1], inst.center[2])) {
      throw ConfigError("instance centre outside the range");
    }
    for (double e : inst.extent) {
      if (!(e >= 0.0)) throw ConfigError("instance extent must be non-negative");
    }
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_as(const std::string& v, const std::string& where) {
  std::istringstream is(v);
  T out{};
  if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError(where + ": bad value '" + v + "'");
  return out;
}

SynthInstance parse_instance(const std::string& v, const std::string& where) {
  std::istringstream is(v);
  SynthInstance inst;
  unsigned cls = 0;
  std::string shape = "blob";
  if (!(is >> cls >> inst.center[0] >> inst.center[1] >> inst.center[2] >> inst.extent[0] >> inst.extent[1] >>
        inst.extent[2] >> inst.points)) {
    throw ConfigError(where + ": instance needs class cx cy cz ex ey ez points [blob|box]");
  }
  is >> shape;
  if (cls == 0 || cls > 0xFFFF) throw ConfigError(where + ": instance class out of range");
  inst.cls = static_cast<std::uint16_t>(cls);
  if (shape == "blob") {
    inst.shape = InstanceShape::kBlob;
  } else if (shape == "box") {
    inst.shape = InstanceShape::kBox;
  } else {
    throw ConfigError(where + ": shape must be blob or box");
  }
  return inst;
}

Vec3 box_surface_sample(const Vec3& half, std::mt19937_64& rng) {
  const double ax = half[1] * half[2], ay = half[0] * half[2], az = half[0] * half[1];
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> pick(0.0, ax + ay + az);
  const double r = pick(rng);
  const double sign = u(rng) < 0.0 ? -1.0 : 1.0;
  Vec3 p{u(rng) * half[0], u(rng) * half[1], u(rng) * half[2]};
  if (r < ax) {
    p[0] = sign * half[0];
  } else if (r < ax + ay) {
    p[1] = sign * half[1];
  } else {
    p[2] = sign * half[2];
  }
  return p;
}

}  // namespace

SceneSpec parse_scene_spec(const std::string& text) {
  SceneSpec s;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "scene spec line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (key == "seed") {
      s.seed = parse_as<std::uint64_t>(v, where);
    } else if (key == "noise") {
      s.noise = parse_as<double>(v, where);
    } else if (key == "ground.density") {
      s.ground_density = parse_as<double>(v, where);
    } else if (key == "ground.class") {
      const auto c = parse_as<unsigned>(v, where);
      if (c == 0 || c > 0xFFFF) throw ConfigError(where + ": ground class out of range");
      s.ground_class = static_cast<std::uint16_t>(c);
    } else if (key == "ground.z") {
      s.ground_z = parse_as<double>(v, where);
    } else if (key == "ground.extent") {
      s.ground_extent = parse_as<double>(v, where);
    } else if (key == "instance") {
      s.instances.push_back(parse_instance(v, where));
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
  s.validate();
  return s;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

Scene synth_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, 0x73796e));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> rows;
  PointLabels labels;
  auto jitter = [&](double v) { return spec.noise > 0.0 ? v + spec.noise * gauss(rng) : v; };
  auto emit = [&](const Vec3& p, std::uint16_t cls, std::uint16_t inst) {
    rows.insert(rows.end(), {p[0], p[1], p[2], 0.0});
    labels.semantic.push_back(cls);
    labels.instance.push_back(inst);
  };
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (std::size_t k = 0; k < spec.instances.size(); ++k) {
    const auto& inst = spec.instances[k];
    const auto id = static_cast<std::uint16_t>(k + 1);
    for (std::size_t n = 0; n < inst.points; ++n) {
      Vec3 p;
      do {
        Vec3 d;
        if (inst.shape == InstanceShape::kBlob) {
          d = {gauss(rng) * inst.extent[0], gauss(rng) * inst.extent[1], gauss(rng) * inst.extent[2]};
        } else {
          d = box_surface_sample(inst.extent, rng);
        }
        p = {jitter(inst.center[0] + d[0]), jitter(inst.center[1] + d[1]), jitter(inst.center[2] + d[2])};
      } while (!spec.range.contains(p[0], p[1], p[2]));
      emit(p, inst.cls, id);
      rows.back() = unit(rng);
    }
  }

  if (spec.ground_density > 0.0) {
    const double side = 2.0 * spec.ground_extent;
    const auto count = static_cast<std::size_t>(std::llround(spec.ground_density * side * side));
    std::uniform_real_distribution<double> u(-spec.ground_extent, spec.ground_extent);
    for (std::size_t n = 0; n < count; ++n) {
      Vec3 p;
      do {
        p = {u(rng), u(rng), jitter(spec.ground_z)};
      } while (!spec.range.contains(p[0], p[1], p[2]));
      emit(p, spec.ground_class, 0);
      rows.back() = unit(rng);
    }
  }

  const std::size_t n = labels.size();
  Matrix m(n, 4);
  std::copy(rows.begin(), rows.end(), m.data().begin());
  return {PointCloud(std::move(m)), std::move(labels)};
}

SceneSpec random_scene_spec(std::uint64_t seed, std::size_t n_instances, double min_separation,
                            const std::vector<std::uint16_t>& thing_classes) {
  if (thing_classes.empty()) throw ConfigError("random scene needs at least one thing class");
  std::mt19937_64 rng(derive_seed(seed, 0x726e64));
  std::uniform_real_distribution<double> pos(-40.0, 40.0);
  std::uniform_real_distribution<double> ext(0.3, 0.9);
  std::uniform_int_distribution<std::size_t> pts(40, 300);
  std::uniform_int_distribution<std::size_t> cls(0, thing_classes.size() - 1);
  std::bernoulli_distribution box(0.5);
  SceneSpec s;
  s.seed = seed;
  s.noise = 0.01;
  s.ground_density = 0.05;
  for (std::size_t k = 0; k < n_instances; ++k) {
    SynthInstance inst;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("cannot place instances with the requested separation");
      inst.center = {pos(rng), pos(rng), 0.0};
      bool ok = true;
      for (const auto& other : s.instances) {
        if (std::hypot(other.center[0] - inst.center[0], other.center[1] - inst.center[1]) <= min_separation) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    inst.extent = {ext(rng), ext(rng), ext(rng) * 0.8};
    inst.center[2] = s.ground_z + 0.3 + inst.extent[2];
    inst.points = pts(rng);
    inst.cls = thing_classes[cls(rng)];
    inst.shape = box(rng) ? InstanceShape::kBox : InstanceShape::kBlob;
    s.instances.push_back(inst);
  }
  return s;
}

Scene synth_bench_scene(std::size_t points, std::uint64_t seed) {
  SceneSpec spec = random_scene_spec(seed, 30, 3.0);
  std::size_t inst = 0;
  for (auto& i : spec.instances) {
    i.points = std::min(i.points, points / 60);
    inst += i.points;
  }
  const double side = 2.0 * spec.ground_extent;
  spec.ground_density = static_cast<double>(points - inst) / (side * side);
  Scene s = synth_scene(spec);
  if (s.points.size() != points) throw ConsistencyError("bench scene point count drifted");
  return s;
}

}  // namespace scan
