#include "hsb/config.hpp"

#include "hsb/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace hsb {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string &key, const std::string &what) {
  throw ValidationError("config key '" + key + "': " + what);
}

// Object view that records the keys it was asked about and rejects the rest.
class Section {
public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string &k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string &k) {
    seen_.insert(k);
    return j_.contains(k) && !j_.at(k).is_null();
  }

  template <class T> void get(const std::string &k, T &out) {
    if (!has(k)) return;
    try {
      out = j_.at(k).get<T>();
    } catch (const json::exception &) {
      fail(key(k), "wrong type");
    }
  }
  template <class T> void get(const std::string &k, std::optional<T> &out) {
    if (!has(k)) return;
    T v{};
    get(k, v);
    out = v;
  }
  void get_mode(const std::string &k, const json &v, Mode &out) {
    if (!v.is_array() || v.size() != 3) fail(key(k), "expected a list of three integers");
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number_integer()) fail(key(k), "expected a list of three integers");
      out[i] = v[i].get<int>();
    }
  }
  void get_mode(const std::string &k, Mode &out) {
    if (has(k)) get_mode(k, j_.at(k), out);
  }
  void get_vec(const std::string &k, Vec3 &out) {
    if (!has(k)) return;
    const json &v = j_.at(k);
    if (!v.is_array() || v.size() != 3) fail(key(k), "expected a list of three numbers");
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) fail(key(k), "expected a list of three numbers");
      out[i] = v[i].get<double>();
    }
  }
  Section sub(const std::string &k) {
    seen_.insert(k);
    return Section(j_.at(k), key(k));
  }
  bool has_object(const std::string &k) { return has(k); }
  const json &raw(const std::string &k) const { return j_.at(k); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(key(it.key()), "unknown key");
  }

private:
  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_sphere(Section s, SphereSpec &out) {
  s.get("n_polar", out.n_polar);
  s.get("n_azimuthal", out.n_azimuthal);
  s.finish();
}

json sphere_json(const SphereSpec &s) { return {{"n_polar", s.n_polar}, {"n_azimuthal", s.n_azimuthal}}; }

json mode_json(const Mode &n) { return json::array({n[0], n[1], n[2]}); }

template <class T> json opt_json(const std::optional<T> &v) { return v ? json(*v) : json(nullptr); }

} // namespace

RunConfig parse_config(const std::string &json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error &e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "");
  if (root.has_object("grid")) {
    Section s = root.sub("grid");
    s.get("points_per_axis", c.grid.points_per_axis);
    s.get("extent", c.grid.extent);
    s.finish();
  }
  if (root.has_object("sphere")) read_sphere(root.sub("sphere"), c.sphere);
  if (root.has_object("quadratic_sphere")) read_sphere(root.sub("quadratic_sphere"), c.quadratic_sphere);
  if (root.has_object("reference")) {
    Section s = root.sub("reference");
    s.get("T", c.reference.T);
    s.get_vec("mu", c.reference.mu);
    s.finish();
  }
  root.get("weight_m", c.weight_m);
  if (root.has("modes")) {
    const json &v = root.raw("modes");
    if (!v.is_array()) fail("modes", "expected a list of modes");
    c.modes.clear();
    for (const auto &e : v) {
      Mode n;
      root.get_mode("modes", e, n);
      c.modes.push_back(n);
    }
  }
  if (root.has_object("contour")) {
    Section s = root.sub("contour");
    s.get("theta", c.contour.theta);
    s.get("psi", c.contour.psi);
    s.get("samples", c.contour.samples);
    s.get("refine", c.contour.refine);
    s.get("t", c.contour.t);
    s.finish();
  }
  if (root.has_object("integrator")) {
    Section s = root.sub("integrator");
    s.get("dt", c.integrator.dt);
    s.get("t_end", c.integrator.t_end);
    s.get("n_max", c.integrator.n_max);
    s.finish();
  }
  if (root.has_object("perturbation")) {
    Section s = root.sub("perturbation");
    s.get_mode("mode", c.perturbation.mode);
    s.get("amplitude", c.perturbation.amplitude);
    s.get("shape", c.perturbation.shape);
    s.get("isotropic_bump", c.perturbation.isotropic_bump);
    s.finish();
  }
  if (root.has_object("kernels")) {
    Section s = root.sub("kernels");
    s.get("tests", c.kernels.tests);
    s.get("upsilon_m", c.kernels.upsilon_m);
    s.get("upsilon_samples", c.kernels.upsilon_samples);
    s.finish();
  }
  if (root.has_object("spectrum")) {
    Section s = root.sub("spectrum");
    s.get("dense_cap", c.spectrum.dense_cap);
    s.get("iterative_count", c.spectrum.iterative_count);
    s.finish();
  }
  if (root.has_object("propagator")) {
    Section s = root.sub("propagator");
    s.get("dt", c.propagator.dt);
    s.get("steps", c.propagator.steps);
    s.get("fit_lo", c.propagator.fit_lo);
    s.get("fit_hi", c.propagator.fit_hi);
    s.get("oscillation_n", c.propagator.oscillation_n);
    s.get("oscillation_t", c.propagator.oscillation_t);
    s.get("duhamel_k_max", c.propagator.duhamel_k_max);
    s.get("duhamel_t", c.propagator.duhamel_t);
    s.finish();
  }
  root.get("experiment", c.experiment);
  root.get("output_dir", c.output_dir);
  root.get("seed", c.seed);
  root.finish();
  validate_config(c);
  return c;
}

RunConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_quick_profile(RunConfig &c) {
  c.grid.points_per_axis = 9;
  c.integrator.n_max = 1;
  c.integrator.t_end = 10.0;
}

void validate_config(const RunConfig &c) {
  const int p = c.grid.points_per_axis;
  if (p < 5) fail("grid.points_per_axis", "must be >= 5");
  if (p % 2 == 0) fail("grid.points_per_axis", "must be odd so that the grid contains its center");
  if (!(c.grid.extent > 0.0)) fail("grid.extent", "must be positive");
  auto sphere = [](const SphereSpec &s, const std::string &k) {
    if (s.n_polar < 4 || s.n_polar % 2) fail(k + ".n_polar", "must be even and >= 4");
    if (s.n_azimuthal < 8) fail(k + ".n_azimuthal", "must be >= 8");
  };
  sphere(c.sphere, "sphere");
  sphere(c.quadratic_sphere, "quadratic_sphere");
  if (!(c.reference.T > 0.0)) fail("reference.T", "must be positive");
  if (!(c.weight_m >= 0.0)) fail("weight_m", "must be >= 0");
  if (c.modes.empty()) fail("modes", "must list at least one mode");
  if (c.contour.theta && !(*c.contour.theta > 0.0)) fail("contour.theta", "must be positive");
  if (c.contour.psi && !(*c.contour.psi > 0.0)) fail("contour.psi", "must be positive");
  if (c.contour.samples < 4) fail("contour.samples", "must be >= 4");
  if (c.contour.refine < 0 || c.contour.refine > 8) fail("contour.refine", "must be in [0, 8]");
  if (!(c.contour.t > 0.0)) fail("contour.t", "must be positive");
  if (c.integrator.dt && !(*c.integrator.dt > 0.0)) fail("integrator.dt", "must be positive");
  if (!(c.integrator.t_end > 0.0)) fail("integrator.t_end", "must be positive");
  if (c.integrator.n_max < 1 || c.integrator.n_max > 4) fail("integrator.n_max", "must be in [1, 4]");
  if (c.perturbation.mode == Mode::Zero()) fail("perturbation.mode", "must be nonzero");
  if (c.perturbation.mode.cwiseAbs().maxCoeff() > c.integrator.n_max)
    fail("perturbation.mode", "exceeds integrator.n_max");
  if (!(c.perturbation.amplitude >= 0.0)) fail("perturbation.amplitude", "must be >= 0");
  try {
    perturbation_shape_from_string(c.perturbation.shape);
  } catch (const ValidationError &e) {
    fail("perturbation.shape", e.what());
  }
  if (c.kernels.tests < 1) fail("kernels.tests", "must be >= 1");
  if (c.kernels.upsilon_samples < 1) fail("kernels.upsilon_samples", "must be >= 1");
  for (double m : c.kernels.upsilon_m)
    if (!(m >= 0.0)) fail("kernels.upsilon_m", "entries must be >= 0");
  if (c.spectrum.dense_cap < 1) fail("spectrum.dense_cap", "must be >= 1");
  if (c.spectrum.iterative_count < 1) fail("spectrum.iterative_count", "must be >= 1");
  if (!(c.propagator.dt > 0.0)) fail("propagator.dt", "must be positive");
  if (c.propagator.steps < 10) fail("propagator.steps", "must be >= 10");
  if (c.propagator.oscillation_n.empty()) fail("propagator.oscillation_n", "must not be empty");
  for (int n : c.propagator.oscillation_n)
    if (n < 0) fail("propagator.oscillation_n", "entries must be >= 0");
  if (c.propagator.oscillation_t.empty()) fail("propagator.oscillation_t", "must not be empty");
  for (double t : c.propagator.oscillation_t)
    if (!(t > 0.0)) fail("propagator.oscillation_t", "entries must be positive");
  if (c.propagator.duhamel_k_max < 0) fail("propagator.duhamel_k_max", "must be >= 0");
  if (!(c.propagator.duhamel_t > 0.0)) fail("propagator.duhamel_t", "must be positive");
  static const std::set<std::string> experiments{"kernels", "spectrum", "propagator", "simulate"};
  if (!experiments.count(c.experiment)) fail("experiment", "must be one of kernels, spectrum, propagator, simulate");
  if (c.output_dir.empty()) fail("output_dir", "must not be empty");
}

std::string config_to_json(const RunConfig &c) {
  json j;
  j["grid"] = {{"points_per_axis", c.grid.points_per_axis}, {"extent", c.grid.extent}};
  j["sphere"] = sphere_json(c.sphere);
  j["quadratic_sphere"] = sphere_json(c.quadratic_sphere);
  j["reference"] = {{"T", c.reference.T},
                    {"mu", json::array({c.reference.mu[0], c.reference.mu[1], c.reference.mu[2]})}};
  j["weight_m"] = c.weight_m;
  j["modes"] = json::array();
  for (const auto &n : c.modes) j["modes"].push_back(mode_json(n));
  j["contour"] = {{"theta", opt_json(c.contour.theta)}, {"psi", opt_json(c.contour.psi)},
                  {"samples", c.contour.samples},       {"refine", c.contour.refine},
                  {"t", c.contour.t}};
  j["integrator"] = {{"dt", opt_json(c.integrator.dt)}, {"t_end", c.integrator.t_end},
                     {"n_max", c.integrator.n_max}};
  j["perturbation"] = {{"mode", mode_json(c.perturbation.mode)}, {"amplitude", c.perturbation.amplitude},
                       {"shape", c.perturbation.shape}, {"isotropic_bump", c.perturbation.isotropic_bump}};
  j["kernels"] = {{"tests", c.kernels.tests}, {"upsilon_m", c.kernels.upsilon_m},
                  {"upsilon_samples", c.kernels.upsilon_samples}};
  j["spectrum"] = {{"dense_cap", c.spectrum.dense_cap}, {"iterative_count", c.spectrum.iterative_count}};
  j["propagator"] = {{"dt", c.propagator.dt},
                     {"steps", c.propagator.steps},
                     {"fit_lo", c.propagator.fit_lo},
                     {"fit_hi", c.propagator.fit_hi},
                     {"oscillation_n", c.propagator.oscillation_n},
                     {"oscillation_t", c.propagator.oscillation_t},
                     {"duhamel_k_max", c.propagator.duhamel_k_max},
                     {"duhamel_t", c.propagator.duhamel_t}};
  j["experiment"] = c.experiment;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

CollisionConfig collision_config(const RunConfig &c) {
  return make_collision_config(make_grid(c.grid.points_per_axis, c.grid.extent),
                               make_sphere_quadrature(c.sphere.n_polar, c.sphere.n_azimuthal),
                               c.reference);
}

} // namespace hsb
