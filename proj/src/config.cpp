#include "millforge/config.hpp"

#include <fstream>
#include <set>
#include <vector>

namespace millforge {

using nlohmann::json;

namespace {

// Strict view of a JSON object: every key must be consumed before finish().
class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + msg);
  }

  std::string where(const std::string& key) const {
    return key.empty() ? (path_.empty() ? "<root>" : path_) : (path_.empty() ? key : path_ + "." + key);
  }

  const json* take(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void num(const std::string& key, double& out) {
    if (const json* v = take(key)) out = as_number(*v, key);
  }
  void integer(const std::string& key, int& out) {
    if (const json* v = take(key)) out = static_cast<int>(as_integer(*v, key, -2147483648LL, 2147483647LL));
  }
  void u64(const std::string& key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
        fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void boolean(const std::string& key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void vec3(const std::string& key, Vec3& out) {
    if (const json* v = take(key)) out = as_vec3(*v, key);
  }
  void range(const std::string& key, Range& out) {
    if (const json* v = take(key)) {
      if (!v->is_array() || v->size() != 2) fail(key, "expected [lo, hi]");
      out.lo = as_number((*v)[0], key);
      out.hi = as_number((*v)[1], key);
    }
  }
  Obj sub(const std::string& key) {
    const json* v = take(key);
    static const json empty = json::object();
    return Obj(v ? *v : empty, where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(it.key(), "unknown key");
  }

  double as_number(const json& v, const std::string& key) const {
    if (!v.is_number()) fail(key, "expected a number");
    return v.get<double>();
  }
  long long as_integer(const json& v, const std::string& key, long long lo, long long hi) const {
    if (!v.is_number_integer()) fail(key, "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi) fail(key, "integer out of range");
    return x;
  }
  Vec3 as_vec3(const json& v, const std::string& key) const {
    if (!v.is_array() || v.size() != 3) fail(key, "expected an array of 3 numbers");
    return Vec3(as_number(v[0], key), as_number(v[1], key), as_number(v[2], key));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void parse_tool(Obj o, ToolSpec& t) {
  o.num("radius_mm", t.radius_mm);
  o.num("pitch_rad", t.pitch_rad);
  o.num("helix_rad", t.helix_rad);
  o.integer("n_flutes", t.n_flutes);
  o.integer("n_discs", t.n_discs);
  o.num("edge_length_mm", t.edge_length_mm);
  o.num("spindle_rpm", t.spindle_rpm);
  o.boolean("enforce_uniform_pitch", t.enforce_uniform_pitch);
  o.integer("disc_stack_sign", t.disc_stack_sign);
  o.finish();
}

void parse_material(Obj o, MaterialParams& m) {
  o.vec3("kc_N_per_mm2", m.kc);
  o.vec3("ke_N_per_mm", m.ke);
  o.finish();
}

void parse_surface(Obj o, SurfaceSpec& s) {
  std::string fam = to_string(s.family);
  o.string("family", fam);
  try {
    s.family = surface_family_from_string(fam);
  } catch (const Error& e) {
    o.fail("family", e.what());
  }
  o.num("base_height_mm", s.base_height_mm);
  o.num("amplitude_mm", s.amplitude_mm);
  o.num("wavelength_mm", s.wavelength_mm);
  o.num("direction_rad", s.direction_rad);
  o.num("phase_rad", s.phase_rad);
  o.num("feature_size_mm", s.feature_size_mm);
  o.integer("octaves", s.octaves);
  o.num("lacunarity", s.lacunarity);
  o.num("persistence", s.persistence);
  o.u64("seed", s.seed);
  o.finish();
}

const char* kFamilies[] = {"flat", "sinusoidal", "perlin", "fractal"};

void parse_randomization(Obj o, RandomizationSpec& r) {
  auto ranges3 = [&](const char* key, std::array<Range, 3>& out) {
    if (const json* v = o.take(key)) {
      if (!v->is_array() || v->size() != 3) o.fail(key, "expected 3 [lo, hi] pairs");
      for (int i = 0; i < 3; ++i) {
        const json& p = (*v)[i];
        if (!p.is_array() || p.size() != 2) o.fail(key, "expected 3 [lo, hi] pairs");
        out[i].lo = o.as_number(p[0], key);
        out[i].hi = o.as_number(p[1], key);
      }
    }
  };
  ranges3("kc_N_per_mm2", r.kc);
  ranges3("ke_N_per_mm", r.ke);
  {
    Obj w = o.sub("family_weights");
    for (int k = 0; k < 4; ++k) w.num(kFamilies[k], r.family_weights[k]);
    w.finish();
  }
  o.range("amplitude_mm", r.amplitude_mm);
  o.range("wavelength_mm", r.wavelength_mm);
  o.range("feature_size_mm", r.feature_size_mm);
  o.integer("octaves", r.octaves);
  o.num("lacunarity", r.lacunarity);
  o.num("persistence", r.persistence);
  o.finish();
}

void parse_controller(Obj o, ControllerConfig& c) {
  o.num("lambda_c_kg", c.lambda_c_kg);
  o.num("k_c_per_s2", c.k_c);
  o.num("damping_ratio", c.damping_ratio);
  o.num("tank_init_J", c.tank.init_J);
  o.num("tank_max_J", c.tank.max_J);
  o.num("tank_floor_J", c.tank.floor_J);
  o.num("tank_hysteresis_frac", c.tank.hysteresis_frac);
  std::string law = to_string(c.law);
  o.string("law", law);
  try {
    c.law = control_law_from_string(law);
  } catch (const Error& e) {
    o.fail("law", e.what());
  }
  o.boolean("et_enabled", c.et_enabled);
  o.finish();
}

void parse_plant(Obj o, PlantParams& p) {
  o.num("inertia_variation", p.inertia_variation);
  o.num("inertia_wavelength_mm", p.inertia_wavelength_mm);
  o.integer("spindle_substeps", p.spindle_substeps);
  o.boolean("edge_force_when_engaged", p.cutting.edge_force_when_engaged);
  o.boolean("chip_uses_model_to_flute", p.cutting.chip_uses_model_to_flute);
  o.finish();
}

void parse_reward(Obj o, RewardWeights& w) {
  o.num("q_mrv_per_mm3", w.q_mrv);
  o.num("q_cut_per_s", w.q_cut);
  o.vec3("q_d_per_mm2_s", w.q_d);
  if (const json* v = o.take("q_f_per_N2_s")) {
    if (v->is_null())
      w.q_f.reset();
    else
      w.q_f = o.as_vec3(*v, "q_f_per_N2_s");
  }
  o.num("f_max_N", w.f_max_N);
  o.num("mrv_ref_mm3_per_s", w.mrv_ref_mm3_s);
  o.finish();
}

void parse_action(Obj o, ActionBounds& a) {
  o.num("stiffness_min_per_s2", a.stiffness_min);
  o.num("stiffness_max_per_s2", a.stiffness_max);
  o.num("t_rate_min", a.t_rate_min);
  o.num("t_rate_max", a.t_rate_max);
  o.num("n_rate_min_mm_per_s", a.n_rate_min);
  o.num("n_rate_max_mm_per_s", a.n_rate_max);
  o.finish();
}

void parse_env(Obj o, EnvConfig& e) {
  o.num("physics_dt_s", e.physics_dt);
  o.num("control_dt_s", e.control_dt);
  o.num("path_length_mm", e.path_length_mm);
  o.num("path_speed_mm_per_s", e.path_speed_mm_s);
  o.num("path_spacing_mm", e.path_spacing_mm);
  o.num("grid_dx_mm", e.grid_dx_mm);
  o.integer("kerf_nodes", e.kerf_nodes);
  o.integer("side_nodes", e.side_nodes);
  if (const json* v = o.take("t_delta_bound_s")) {
    if (v->is_null())
      e.t_delta_bound_s.reset();
    else
      e.t_delta_bound_s = o.as_number(*v, "t_delta_bound_s");
  }
  o.num("n_delta_min_mm", e.n_delta_min_mm);
  o.num("n_delta_max_mm", e.n_delta_max_mm);
  o.num("stiffness_rate_limit_per_s3", e.stiffness_rate_limit);
  o.num("initial_stiffness_per_s2", e.initial_stiffness);
  o.num("capture_radius_mm", e.capture_radius_mm);
  o.num("time_margin_s", e.time_margin_s);
  o.num("workspace_margin_mm", e.workspace_margin_mm);
  o.num("doc_offset_mm", e.doc_offset_mm);
  o.boolean("augmented_observation", e.augmented_observation);
  o.boolean("outer_product_alignment", e.outer_product_alignment);
  o.boolean("record_log", e.record_log);
  o.finish();
}

void parse_cem(Obj o, CemConfig& c) {
  o.integer("generations", c.generations);
  o.integer("population", c.population);
  o.num("elite_frac", c.elite_frac);
  o.num("init_std", c.init_std);
  o.num("min_std", c.min_std);
  o.num("extra_std", c.extra_std);
  o.num("extra_std_decay", c.extra_std_decay);
  o.integer("episodes_per_eval", c.episodes_per_eval);
  bool parallel = c.exec == Exec::parallel;
  o.boolean("parallel", parallel);
  c.exec = parallel ? Exec::parallel : Exec::serial;
  o.finish();
}

const char* kEgoDims[] = {"feed_mm_per_s", "rdoc_mm", "stiffness_per_s2"};

void parse_ego(Obj o, EgoRunSpec& r) {
  EgoConfig& c = r.optimizer;
  o.integer("budget", c.budget);
  o.num("initial_fraction", c.initial_fraction);
  o.integer("ei_candidates", c.ei_candidates);
  o.integer("grid_per_dim", c.grid_per_dim);
  o.integer("pd_samples", c.pd_samples);
  o.integer("pd_grid", c.pd_grid);
  o.integer("final_restarts", c.final_restarts);
  o.integer("loop_restarts", c.loop_restarts);
  for (int k = 0; k < 3; ++k) {
    Range rg{c.box.lower[k], c.box.upper[k]};
    o.range(std::string(kEgoDims[k]) + "_range", rg);
    c.box.lower[k] = rg.lo;
    c.box.upper[k] = rg.hi;
    o.num(std::string(kEgoDims[k]) + "_fixed", c.box.fixed[k]);
  }
  if (const json* v = o.take("active")) {
    if (!v->is_array()) o.fail("active", "expected a list of dimension names");
    c.box.active = {false, false, false};
    for (const auto& n : *v) {
      if (!n.is_string()) o.fail("active", "expected dimension names");
      bool found = false;
      for (int k = 0; k < 3; ++k)
        if (n.get<std::string>() == kEgoDims[k]) c.box.active[k] = found = true;
      if (!found) o.fail("active", "unknown dimension '" + n.get<std::string>() + "'");
    }
  }
  o.u64("episode_seed", r.episode_seed);
  o.num("safety_penalty", r.safety_penalty);
  o.finish();
}

void parse_fit(Obj o, FitOptions& f) {
  o.vec3("axis_weight", f.axis_weight);
  if (const json* v = o.take("frozen")) {
    static const char* names[] = {"kc_t", "kc_r", "kc_a", "ke_t", "ke_r", "ke_a"};
    if (!v->is_array()) o.fail("frozen", "expected a list of constant names");
    f.frozen = {};
    for (const auto& n : *v) {
      bool found = false;
      for (int k = 0; k < 6; ++k)
        if (n.is_string() && n.get<std::string>() == names[k]) f.frozen[k] = found = true;
      if (!found) o.fail("frozen", "unknown constant name");
    }
  }
  if (o.has("initial")) {
    MaterialParams m;
    parse_material(o.sub("initial"), m);
    f.initial = m;
  }
  o.integer("samples_per_rev", f.samples_per_rev);
  o.boolean("instantaneous", f.instantaneous);
  o.integer("lm_max_iterations", f.lm.max_iterations);
  o.finish();
}

json merge(json base, const json& over) {
  if (!base.is_object() || !over.is_object()) return over;
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      base[it.key()] = merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

json load_rec(const std::filesystem::path& file, std::vector<std::filesystem::path>& stack) {
  const auto canon = std::filesystem::weakly_canonical(file);
  for (const auto& p : stack)
    if (p == canon) throw ConfigError("include cycle through " + file.string());
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(file.string() + ": top level must be an object");
  json out = json::object();
  if (doc.contains("include")) {
    const json inc = doc["include"];
    doc.erase("include");
    std::vector<std::string> list;
    if (inc.is_string()) {
      list.push_back(inc.get<std::string>());
    } else if (inc.is_array()) {
      for (const auto& s : inc) {
        if (!s.is_string()) throw ConfigError(file.string() + ": include entries must be paths");
        list.push_back(s.get<std::string>());
      }
    } else {
      throw ConfigError(file.string() + ": include must be a path or a list of paths");
    }
    stack.push_back(canon);
    for (const auto& s : list) out = merge(out, load_rec(file.parent_path() / s, stack));
    stack.pop_back();
  }
  return merge(out, doc);
}

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }
json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

ScenarioConfig parse_scenario(const json& doc) {
  ScenarioConfig c;
  Obj root(doc, "");
  if (root.has("include")) root.fail("include", "includes must be resolved by load_scenario");
  root.u64("seed", c.seed);
  if (root.has("tool")) parse_tool(root.sub("tool"), c.env.tool);
  if (root.has("material")) {
    MaterialParams m;
    parse_material(root.sub("material"), m);
    c.env.fixed_material = m;
  }
  if (root.has("surface")) {
    SurfaceSpec s;
    parse_surface(root.sub("surface"), s);
    c.env.fixed_surface = s;
  }
  if (root.has("randomization")) parse_randomization(root.sub("randomization"), c.env.randomization);
  if (root.has("controller")) parse_controller(root.sub("controller"), c.env.controller);
  if (root.has("plant")) parse_plant(root.sub("plant"), c.env.plant);
  if (root.has("reward")) parse_reward(root.sub("reward"), c.env.reward);
  if (root.has("action")) parse_action(root.sub("action"), c.env.action);
  if (root.has("env")) parse_env(root.sub("env"), c.env);
  if (root.has("baseline")) {
    Obj o = root.sub("baseline");
    o.num("feed_mm_per_s", c.baseline.feed_mm_s);
    o.num("doc_mm", c.baseline.doc_mm);
    o.num("stiffness_per_s2", c.baseline.stiffness);
    o.finish();
  }
  if (root.has("stress")) {
    Obj o = root.sub("stress");
    o.num("k_low_per_s2", c.stress.k_low);
    o.num("k_high_per_s2", c.stress.k_high);
    o.finish();
  }
  if (root.has("cem")) parse_cem(root.sub("cem"), c.cem);
  if (root.has("ego")) parse_ego(root.sub("ego"), c.ego);
  if (root.has("compare")) {
    Obj o = root.sub("compare");
    o.integer("n_trials", c.compare.n_trials);
    o.u64("first_seed", c.compare.first_seed);
    o.finish();
  }
  if (root.has("fit")) parse_fit(root.sub("fit"), c.fit);
  root.finish();

  try {
    ToolGeometry check(c.env.tool);
    (void)check;
    c.env.validate();
    c.cem.validate();
    c.ego.optimizer.validate();
    if (c.compare.n_trials < 1) throw InvalidArgument("compare.n_trials must be >= 1");
    if (!(c.stress.k_low > 0.0 && c.stress.k_high >= c.stress.k_low))
      throw InvalidArgument("stress stiffness must satisfy 0 < low <= high");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }
  return c;
}

json load_json_with_includes(const std::filesystem::path& file) {
  std::vector<std::filesystem::path> stack;
  return load_rec(file, stack);
}

ScenarioConfig load_scenario(const std::filesystem::path& file) {
  return parse_scenario(load_json_with_includes(file));
}

json scenario_to_json(const ScenarioConfig& c) {
  const EnvConfig& e = c.env;
  json j;
  j["seed"] = c.seed;
  const ToolSpec& t = e.tool;
  j["tool"] = {{"radius_mm", t.radius_mm},         {"pitch_rad", t.pitch_rad},
               {"helix_rad", t.helix_rad},         {"n_flutes", t.n_flutes},
               {"n_discs", t.n_discs},             {"edge_length_mm", t.edge_length_mm},
               {"spindle_rpm", t.spindle_rpm},     {"enforce_uniform_pitch", t.enforce_uniform_pitch},
               {"disc_stack_sign", t.disc_stack_sign}};
  if (e.fixed_material)
    j["material"] = {{"kc_N_per_mm2", vec_json(e.fixed_material->kc)},
                     {"ke_N_per_mm", vec_json(e.fixed_material->ke)}};
  if (e.fixed_surface) {
    const SurfaceSpec& s = *e.fixed_surface;
    j["surface"] = {{"family", to_string(s.family)},   {"base_height_mm", s.base_height_mm},
                    {"amplitude_mm", s.amplitude_mm},  {"wavelength_mm", s.wavelength_mm},
                    {"direction_rad", s.direction_rad}, {"phase_rad", s.phase_rad},
                    {"feature_size_mm", s.feature_size_mm}, {"octaves", s.octaves},
                    {"lacunarity", s.lacunarity},      {"persistence", s.persistence},
                    {"seed", s.seed}};
  }
  const RandomizationSpec& r = e.randomization;
  json fw;
  for (int k = 0; k < 4; ++k) fw[kFamilies[k]] = r.family_weights[k];
  j["randomization"] = {
      {"kc_N_per_mm2", json::array({range_json(r.kc[0]), range_json(r.kc[1]), range_json(r.kc[2])})},
      {"ke_N_per_mm", json::array({range_json(r.ke[0]), range_json(r.ke[1]), range_json(r.ke[2])})},
      {"family_weights", fw},
      {"amplitude_mm", range_json(r.amplitude_mm)},
      {"wavelength_mm", range_json(r.wavelength_mm)},
      {"feature_size_mm", range_json(r.feature_size_mm)},
      {"octaves", r.octaves},
      {"lacunarity", r.lacunarity},
      {"persistence", r.persistence}};
  const ControllerConfig& cc = e.controller;
  j["controller"] = {{"lambda_c_kg", cc.lambda_c_kg},       {"k_c_per_s2", cc.k_c},
                     {"damping_ratio", cc.damping_ratio},   {"tank_init_J", cc.tank.init_J},
                     {"tank_max_J", cc.tank.max_J},         {"tank_floor_J", cc.tank.floor_J},
                     {"tank_hysteresis_frac", cc.tank.hysteresis_frac},
                     {"law", to_string(cc.law)},            {"et_enabled", cc.et_enabled}};
  j["plant"] = {{"inertia_variation", e.plant.inertia_variation},
                {"inertia_wavelength_mm", e.plant.inertia_wavelength_mm},
                {"spindle_substeps", e.plant.spindle_substeps},
                {"edge_force_when_engaged", e.plant.cutting.edge_force_when_engaged},
                {"chip_uses_model_to_flute", e.plant.cutting.chip_uses_model_to_flute}};
  j["reward"] = {{"q_mrv_per_mm3", e.reward.q_mrv},
                 {"q_cut_per_s", e.reward.q_cut},
                 {"q_d_per_mm2_s", vec_json(e.reward.q_d)},
                 {"q_f_per_N2_s", e.reward.q_f ? vec_json(*e.reward.q_f) : json(nullptr)},
                 {"f_max_N", e.reward.f_max_N},
                 {"mrv_ref_mm3_per_s", e.reward.mrv_ref_mm3_s}};
  j["action"] = {{"stiffness_min_per_s2", e.action.stiffness_min},
                 {"stiffness_max_per_s2", e.action.stiffness_max},
                 {"t_rate_min", e.action.t_rate_min},
                 {"t_rate_max", e.action.t_rate_max},
                 {"n_rate_min_mm_per_s", e.action.n_rate_min},
                 {"n_rate_max_mm_per_s", e.action.n_rate_max}};
  j["env"] = {{"physics_dt_s", e.physics_dt},
              {"control_dt_s", e.control_dt},
              {"path_length_mm", e.path_length_mm},
              {"path_speed_mm_per_s", e.path_speed_mm_s},
              {"path_spacing_mm", e.path_spacing_mm},
              {"grid_dx_mm", e.grid_dx_mm},
              {"kerf_nodes", e.kerf_nodes},
              {"side_nodes", e.side_nodes},
              {"t_delta_bound_s", e.t_delta_bound_s ? json(*e.t_delta_bound_s) : json(nullptr)},
              {"n_delta_min_mm", e.n_delta_min_mm},
              {"n_delta_max_mm", e.n_delta_max_mm},
              {"stiffness_rate_limit_per_s3", e.stiffness_rate_limit},
              {"initial_stiffness_per_s2", e.initial_stiffness},
              {"capture_radius_mm", e.capture_radius_mm},
              {"time_margin_s", e.time_margin_s},
              {"workspace_margin_mm", e.workspace_margin_mm},
              {"doc_offset_mm", e.doc_offset_mm},
              {"augmented_observation", e.augmented_observation},
              {"outer_product_alignment", e.outer_product_alignment},
              {"record_log", e.record_log}};
  j["baseline"] = {{"feed_mm_per_s", c.baseline.feed_mm_s},
                   {"doc_mm", c.baseline.doc_mm},
                   {"stiffness_per_s2", c.baseline.stiffness}};
  j["stress"] = {{"k_low_per_s2", c.stress.k_low}, {"k_high_per_s2", c.stress.k_high}};
  j["cem"] = {{"generations", c.cem.generations},   {"population", c.cem.population},
              {"elite_frac", c.cem.elite_frac},     {"init_std", c.cem.init_std},
              {"min_std", c.cem.min_std},           {"extra_std", c.cem.extra_std},
              {"extra_std_decay", c.cem.extra_std_decay},
              {"episodes_per_eval", c.cem.episodes_per_eval},
              {"parallel", c.cem.exec == Exec::parallel}};
  const EgoConfig& g = c.ego.optimizer;
  json ego = {{"budget", g.budget},
              {"initial_fraction", g.initial_fraction},
              {"ei_candidates", g.ei_candidates},
              {"grid_per_dim", g.grid_per_dim},
              {"pd_samples", g.pd_samples},
              {"pd_grid", g.pd_grid},
              {"final_restarts", g.final_restarts},
              {"loop_restarts", g.loop_restarts},
              {"episode_seed", c.ego.episode_seed},
              {"safety_penalty", c.ego.safety_penalty}};
  json active = json::array();
  for (int k = 0; k < 3; ++k) {
    ego[std::string(kEgoDims[k]) + "_range"] = json::array({g.box.lower[k], g.box.upper[k]});
    ego[std::string(kEgoDims[k]) + "_fixed"] = g.box.fixed[k];
    if (g.box.active[k]) active.push_back(kEgoDims[k]);
  }
  ego["active"] = active;
  j["ego"] = ego;
  j["compare"] = {{"n_trials", c.compare.n_trials}, {"first_seed", c.compare.first_seed}};
  static const char* names[] = {"kc_t", "kc_r", "kc_a", "ke_t", "ke_r", "ke_a"};
  json frozen = json::array();
  for (int k = 0; k < 6; ++k)
    if (c.fit.frozen[k]) frozen.push_back(names[k]);
  json fit = {{"axis_weight", vec_json(c.fit.axis_weight)},
              {"frozen", frozen},
              {"samples_per_rev", c.fit.samples_per_rev},
              {"instantaneous", c.fit.instantaneous},
              {"lm_max_iterations", c.fit.lm.max_iterations}};
  if (c.fit.initial)
    fit["initial"] = {{"kc_N_per_mm2", vec_json(c.fit.initial->kc)},
                      {"ke_N_per_mm", vec_json(c.fit.initial->ke)}};
  j["fit"] = fit;
  return j;
}

}  // namespace millforge
