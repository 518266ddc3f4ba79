#include "ptrig/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ptrig_presets.hpp"

namespace ptrig {
namespace {

using nlohmann::json;

constexpr int kMaxInheritDepth = 8;

// Typed access to one JSON object that remembers which keys were consumed,
// so anything left over can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  void matrix(const char* key, Matrix& out, int dim) {
    if (!has(key)) return;
    out = parse_matrix(j_.at(key), dim, where(key));
  }

  void optional_matrix(const char* key, std::optional<Matrix>& out, int dim) {
    if (!has(key)) return;
    out = parse_matrix(j_.at(key), dim, where(key));
  }

  const json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) {
        std::string known;
        for (const auto& k : seen_) known += (known.empty() ? "" : ", ") + k;
        throw ConfigError("unknown key '" + key + "' in " + where() +
                          " (known: " + known + ")");
      }
    }
  }

  std::string where(const char* key = nullptr) const {
    std::string w = path_.empty() ? "config" : path_;
    if (key) w += (path_.empty() ? " key '" : ".") + std::string(key) +
                  (path_.empty() ? "'" : "");
    return w;
  }

  // A number s means s·I, a flat array a diagonal, nested arrays the rows.
  static Matrix parse_matrix(const json& v, int dim, const std::string& where) {
    try {
      if (v.is_number()) {
        if (dim < 1) throw ConfigError(where + " needs explicit rows");
        return Matrix::Identity(dim, dim) * v.get<double>();
      }
      if (!v.is_array() || v.empty()) {
        throw ConfigError(where + " must be a number or a non-empty array");
      }
      if (!v.front().is_array()) {
        const auto d = v.get<std::vector<double>>();
        return Eigen::Map<const Vector>(d.data(), d.size()).asDiagonal();
      }
      const auto rows = v.get<std::vector<std::vector<double>>>();
      Matrix m(rows.size(), rows.front().size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows.front().size()) {
          throw ConfigError(where + " has rows of different length");
        }
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
      }
      return m;
    } catch (const json::exception&) {
      throw ConfigError(where + " must contain only numbers");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json parse_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + origin + ": " + e.what());
  }
}

json read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), "'" + path.string() + "'");
}

// Replaces "inherit" by the merged contents of its target.
json resolve(json doc, const std::filesystem::path& base_dir, int depth) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("inherit")) return doc;
  if (depth >= kMaxInheritDepth) {
    throw ConfigError("inherit chain is deeper than " +
                      std::to_string(kMaxInheritDepth) + " (cycle?)");
  }
  if (!doc["inherit"].is_string()) {
    throw ConfigError("config key 'inherit' must be a string");
  }
  const std::string target = doc["inherit"].get<std::string>();
  doc.erase("inherit");

  json parent;
  std::filesystem::path parent_dir = base_dir;
  const auto names = preset_names();
  if (std::find(names.begin(), names.end(), target) != names.end()) {
    parent = parse_text(preset_text(target), "preset '" + target + "'");
  } else {
    const auto path = base_dir / target;
    if (!std::filesystem::exists(path)) {
      throw ConfigError("inherit target '" + target +
                        "' is neither a preset nor a file");
    }
    parent = read_file(path);
    parent_dir = path.parent_path();
  }
  parent = resolve(std::move(parent), parent_dir, depth + 1);
  parent.merge_patch(doc);
  return parent;
}

void read_cacc(Section s, CaccParams& p) {
  s.get("lanes", p.lanes);
  s.get("v_ref", p.v_ref);
  s.get("L", p.L);
  s.get("r", p.r);
  s.get("tau", p.tau);
  s.get("h", p.h);
  s.get("k_p", p.k_p);
  s.get("k_d", p.k_d);
  s.get("k_dd", p.k_dd);
  s.get("dt", p.dt);
  s.get("sigma_w", p.sigma_w);
  s.get("delta", p.delta);
  s.get("initial_variance", p.initial_variance);
  s.finish();
}

void read_cartpole(Section s, CartPoleParams& p) {
  s.matrix("A", p.A, 0);
  const int n = static_cast<int>(p.A.rows());
  if (s.has("B")) {
    const json& b = s.child("B");
    // A flat array is the single input column.
    if (b.is_array() && !b.empty() && !b.front().is_array()) {
      const auto d = b.get<std::vector<double>>();
      p.B = Eigen::Map<const Vector>(d.data(), d.size());
    } else {
      p.B = Section::parse_matrix(b, n, s.where("B"));
    }
  }
  s.get("sigma_w", p.sigma_w);
  s.get("sigma_eps", p.sigma_eps);
  s.matrix("Q", p.Q, n);
  s.matrix("R", p.R, static_cast<int>(p.B.cols()));
  s.matrix("Q_sync", p.Q_sync, n);
  s.get("dt", p.dt);
  s.get("delta", p.delta);
  s.get("physical_agent", p.physical_agent);
  s.get("physical_id", p.physical_id);
  s.get("heterogeneity", p.heterogeneity);
  s.get("sinusoid_amplitude", p.sinusoid_amplitude);
  s.get("sinusoid_frequency", p.sinusoid_frequency);
  s.get("disturbed_agent", p.disturbed_agent);
  s.get("impulse_amplitude", p.impulse_amplitude);
  s.get("physical_impulse_time", p.physical_impulse_time);
  s.get("impulse_window_start", p.impulse_window_start);
  s.get("impulse_window_margin", p.impulse_window_margin);
  s.get("initial_variance", p.initial_variance);
  s.finish();
}

}  // namespace

json config_to_json(const RunConfig& c) {
  json j;
  j["scenario"] = std::string(to_string(c.scenario));
  j["N"] = c.N;
  j["K"] = c.K;
  j["M"] = c.M;
  j["c"] = c.c;
  j["p_lower"] = c.p_lower;
  j["policy"] = std::string(to_string(c.policy));
  json policies = json::array();
  for (Policy p : c.policies) policies.push_back(std::string(to_string(p)));
  j["policies"] = std::move(policies);
  j["duration"] = c.duration;
  j["seed"] = c.seed;
  j["divergence_bound"] = c.divergence_bound;
  j["table"] = {{"grid_size", c.table.grid_size},
                {"max_steps", c.table_steps()},
                {"samples", c.table.samples},
                {"seed", c.table.seed}};
  if (c.scenario == ScenarioKind::Cacc) {
    const auto& p = c.cacc;
    j["cacc"] = {{"lanes", p.lanes},       {"v_ref", p.v_ref},
                 {"L", p.L},               {"r", p.r},
                 {"tau", p.tau},           {"h", p.h},
                 {"k_p", p.k_p},           {"k_d", p.k_d},
                 {"k_dd", p.k_dd},         {"dt", p.dt},
                 {"sigma_w", p.sigma_w},   {"delta", p.delta},
                 {"initial_variance", p.initial_variance}};
  } else {
    const auto& p = c.cartpole;
    j["cartpole"] = {{"A", matrix_json(p.A)},
                     {"B", matrix_json(p.B)},
                     {"sigma_w", p.sigma_w},
                     {"sigma_eps", p.sigma_eps},
                     {"Q", matrix_json(p.Q)},
                     {"R", matrix_json(p.R)},
                     {"Q_sync", matrix_json(p.Q_sync)},
                     {"dt", p.dt},
                     {"delta", p.delta},
                     {"physical_agent", p.physical_agent},
                     {"physical_id", p.physical_id},
                     {"heterogeneity", p.heterogeneity},
                     {"sinusoid_amplitude", p.sinusoid_amplitude},
                     {"sinusoid_frequency", p.sinusoid_frequency},
                     {"disturbed_agent", p.disturbed_agent},
                     {"impulse_amplitude", p.impulse_amplitude},
                     {"physical_impulse_time", p.physical_impulse_time},
                     {"impulse_window_start", p.impulse_window_start},
                     {"impulse_window_margin", p.impulse_window_margin},
                     {"initial_variance", p.initial_variance}};
  }
  if (c.error_process.A_cl || c.error_process.sigma_w) {
    json ep = json::object();
    if (c.error_process.A_cl) ep["A_cl"] = matrix_json(*c.error_process.A_cl);
    if (c.error_process.sigma_w) {
      ep["sigma_w"] = matrix_json(*c.error_process.sigma_w);
    }
    j["error_process"] = std::move(ep);
  }
  return j;
}

RunConfig config_from_json(const json& input,
                           const std::filesystem::path& base_dir) {
  const json doc = resolve(input, base_dir, 0);
  RunConfig c;
  Section top(doc, "");
  std::string text;
  if (top.has("description")) top.child("description");
  if (top.has("scenario")) {
    top.get("scenario", text);
    c.scenario = parse_scenario(text);
  }
  top.get("N", c.N);
  top.get("K", c.K);
  top.get("M", c.M);
  top.get("c", c.c);
  top.get("p_lower", c.p_lower);
  if (top.has("policy")) {
    top.get("policy", text);
    c.policy = parse_policy(text);
  }
  if (top.has("policies")) {
    std::vector<std::string> names;
    top.get("policies", names);
    c.policies.clear();
    for (const auto& n : names) c.policies.push_back(parse_policy(n));
  }
  top.get("duration", c.duration);
  top.get("seed", c.seed);
  top.get("divergence_bound", c.divergence_bound);
  if (top.has("table")) {
    Section t(top.child("table"), "table");
    t.get("grid_size", c.table.grid_size);
    t.get("max_steps", c.table.max_steps);
    t.get("samples", c.table.samples);
    t.get("seed", c.table.seed);
    t.finish();
  }
  if (top.has("cacc")) read_cacc(Section(top.child("cacc"), "cacc"), c.cacc);
  if (top.has("cartpole")) {
    read_cartpole(Section(top.child("cartpole"), "cartpole"), c.cartpole);
  }
  if (top.has("error_process")) {
    Section e(top.child("error_process"), "error_process");
    e.optional_matrix("A_cl", c.error_process.A_cl, c.nx());
    e.optional_matrix("sigma_w", c.error_process.sigma_w, c.nx());
    e.finish();
  }
  top.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_file(path), path.parent_path());
}

std::uint64_t config_fingerprint(const RunConfig& config) {
  json j = config_to_json(config);
  j.erase("seed");
  return fnv1a(j.dump());
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& p : kPresets) names.emplace_back(p.name);
  return names;
}

const std::string& preset_text(const std::string& name) {
  static const std::map<std::string, std::string> texts = [] {
    std::map<std::string, std::string> m;
    for (const auto& p : kPresets) m.emplace(p.name, p.text);
    return m;
  }();
  auto it = texts.find(name);
  if (it == texts.end()) throw ConfigError("unknown preset '" + name + "'");
  return it->second;
}

RunConfig load_preset(const std::string& name) {
  return config_from_json(parse_text(preset_text(name), "preset '" + name + "'"));
}

}  // namespace ptrig
