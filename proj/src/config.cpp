#include "scan/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace scan {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double to_double(const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_uint(const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& v) {
  const auto u = to_uint(v);
  if (u > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) throw ConfigError("integer too large: " + v);
  return static_cast<int>(u);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

Vec3 to_vec3(const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 3) throw ConfigError("expected three comma-separated numbers, got '" + v + "'");
  return {to_double(parts[0]), to_double(parts[1]), to_double(parts[2])};
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"voxel.scale", [](RunConfig& c, const std::string& v) { c.pipeline.scale = to_vec3(v); }},
      {"voxel.range_min", [](RunConfig& c, const std::string& v) { c.pipeline.range.min = to_vec3(v); }},
      {"voxel.range_max", [](RunConfig& c, const std::string& v) { c.pipeline.range.max = to_vec3(v); }},
      {"model.channels", [](RunConfig& c, const std::string& v) { c.pipeline.channels = to_uint(v); }},
      {"model.classes", [](RunConfig& c, const std::string& v) { c.pipeline.n_classes = to_uint(v); }},
      {"model.thing_classes",
       [](RunConfig& c, const std::string& v) {
         c.pipeline.thing_classes.clear();
         for (const auto& s : split_list(v)) {
           if (s.empty()) continue;
           const auto id = to_uint(s);
           if (id > 0xFFFF) throw ConfigError("class id too large: " + s);
           c.pipeline.thing_classes.push_back(static_cast<std::uint16_t>(id));
         }
       }},
      {"inference.max_centroids", [](RunConfig& c, const std::string& v) { c.pipeline.max_centroids = to_uint(v); }},
      {"inference.score_threshold",
       [](RunConfig& c, const std::string& v) { c.pipeline.score_threshold = to_double(v); }},
      {"inference.pool_window", [](RunConfig& c, const std::string& v) { c.pipeline.pool_window = to_int(v); }},
      {"attention.heads", [](RunConfig& c, const std::string& v) { c.pipeline.attention.heads = to_int(v); }},
      {"attention.head_dim", [](RunConfig& c, const std::string& v) { c.pipeline.attention.head_dim = to_int(v); }},
      {"attention.depth", [](RunConfig& c, const std::string& v) { c.pipeline.attention.depth = to_int(v); }},
      {"attention.features", [](RunConfig& c, const std::string& v) { c.pipeline.attention.features = to_int(v); }},
      {"attention.seed", [](RunConfig& c, const std::string& v) { c.pipeline.attention.seed = to_uint(v); }},
      {"attention.share_weights",
       [](RunConfig& c, const std::string& v) { c.pipeline.attention.share_weights = to_bool(v); }},
      {"attention.positional_encoding",
       [](RunConfig& c, const std::string& v) { c.pipeline.attention.positional_encoding = to_bool(v); }},
      {"target.sigma", [](RunConfig& c, const std::string& v) { c.pipeline.target.sigma = to_double(v); }},
      {"target.window",
       [](RunConfig& c, const std::string& v) {
         if (v == "bev3x3") {
           c.pipeline.target.window = GaussianWindow::kBev3x3;
         } else if (v == "volume3x3x3") {
           c.pipeline.target.window = GaussianWindow::kVolume3x3x3;
         } else {
           throw ConfigError("target.window must be bev3x3 or volume3x3x3, got '" + v + "'");
         }
       }},
      {"loss.heatmap_gamma", [](RunConfig& c, const std::string& v) { c.pipeline.heatmap_focal.gamma = to_double(v); }},
      {"loss.heatmap_beta", [](RunConfig& c, const std::string& v) { c.pipeline.heatmap_focal.beta = to_double(v); }},
      {"loss.semantic_gamma",
       [](RunConfig& c, const std::string& v) { c.pipeline.semantic_focal.gamma = to_double(v); }},
      {"loss.semantic_alpha",
       [](RunConfig& c, const std::string& v) { c.pipeline.semantic_focal.alpha = to_double(v); }},
      {"metrics.min_points", [](RunConfig& c, const std::string& v) { c.min_points = to_uint(v); }},
  };
  return table;
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join(const Vec3& v) { return num(v[0]) + ", " + num(v[1]) + ", " + num(v[2]); }

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + " (" + key + "): " + e.what());
    }
  }
  cfg.pipeline.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
  const auto& p = cfg.pipeline;
  std::ostringstream os;
  os << "voxel.scale = " << join(p.scale) << "\n";
  os << "voxel.range_min = " << join(p.range.min) << "\n";
  os << "voxel.range_max = " << join(p.range.max) << "\n";
  os << "model.channels = " << p.channels << "\n";
  os << "model.classes = " << p.n_classes << "\n";
  os << "model.thing_classes = ";
  for (std::size_t i = 0; i < p.thing_classes.size(); ++i) os << (i ? ", " : "") << p.thing_classes[i];
  os << "\n";
  os << "inference.max_centroids = " << p.max_centroids << "\n";
  os << "inference.score_threshold = " << num(p.score_threshold) << "\n";
  os << "inference.pool_window = " << p.pool_window << "\n";
  os << "attention.heads = " << p.attention.heads << "\n";
  os << "attention.head_dim = " << p.attention.head_dim << "\n";
  os << "attention.depth = " << p.attention.depth << "\n";
  os << "attention.features = " << p.attention.features << "\n";
  os << "attention.seed = " << p.attention.seed << "\n";
  os << "attention.share_weights = " << (p.attention.share_weights ? "true" : "false") << "\n";
  os << "attention.positional_encoding = " << (p.attention.positional_encoding ? "true" : "false") << "\n";
  os << "target.sigma = " << num(p.target.sigma) << "\n";
  os << "target.window = " << (p.target.window == GaussianWindow::kBev3x3 ? "bev3x3" : "volume3x3x3") << "\n";
  os << "loss.heatmap_gamma = " << num(p.heatmap_focal.gamma) << "\n";
  os << "loss.heatmap_beta = " << num(p.heatmap_focal.beta) << "\n";
  os << "loss.semantic_gamma = " << num(p.semantic_focal.gamma) << "\n";
  os << "loss.semantic_alpha = " << num(p.semantic_focal.alpha) << "\n";
  os << "metrics.min_points = " << cfg.min_points << "\n";
  return os.str();
}

}  // namespace scan
