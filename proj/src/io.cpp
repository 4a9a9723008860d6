#include "millforge/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace millforge {

using nlohmann::json;

namespace {

json vec_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

VecX vec_from(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string(what) + ": expected an array of numbers");
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(std::string(what) + ": expected numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  out << std::setprecision(17);
  return out;
}

void write_json(const std::filesystem::path& file, const json& j) {
  auto out = open_out(file);
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

void csv3(std::ostream& o, const Vec3& v) { o << ',' << v.x() << ',' << v.y() << ',' << v.z(); }

}  // namespace

json normalizer_to_json(const RunningNormalizer& n) {
  return {{"count", n.count()}, {"mean", vec_json(n.mean())}, {"m2", vec_json(n.m2())},
          {"clip", n.clip()}};
}

RunningNormalizer normalizer_from_json(const json& j) {
  const VecX mean = vec_from(field(j, "mean"), "normalizer.mean");
  const VecX m2 = vec_from(field(j, "m2"), "normalizer.m2");
  RunningNormalizer n(static_cast<int>(mean.size()), number(j, "clip"));
  try {
    n.set_state(number(j, "count"), mean, m2);
  } catch (const Error& e) {
    throw ConfigError(std::string("normalizer: ") + e.what());
  }
  n.set_frozen(true);
  return n;
}

json policy_to_json(const Policy& policy) {
  if (auto* c = dynamic_cast<const ConstantParamsPolicy*>(&policy)) {
    return {{"type", c->type()},
            {"feed_mm_per_s", c->params().feed_mm_s},
            {"doc_mm", c->params().doc_mm},
            {"stiffness_per_s2", c->params().stiffness},
            {"feed_time_constant_s", c->feed_time_constant()},
            {"doc_gain_per_s", c->doc_gain()}};
  }
  if (auto* l = dynamic_cast<const LinearPolicy*>(&policy)) {
    return {{"type", l->type()},
            {"obs_dim", l->obs_dim()},
            {"low", vec_json(l->low())},
            {"high", vec_json(l->high())},
            {"params", vec_json(l->params())},
            {"normalizer", normalizer_to_json(l->normalizer())}};
  }
  if (auto* m = dynamic_cast<const MlpPolicy*>(&policy)) {
    json layers = json::array();
    for (std::size_t k = 0; k < m->weights().size(); ++k) {
      const MatX& w = m->weights()[k];
      json rows = json::array();
      for (Eigen::Index r = 0; r < w.rows(); ++r) rows.push_back(vec_json(w.row(r).transpose()));
      layers.push_back({{"weight", rows}, {"bias", vec_json(m->biases()[k])}});
    }
    return {{"type", m->type()},
            {"low", vec_json(m->low())},
            {"high", vec_json(m->high())},
            {"layers", layers},
            {"normalizer", normalizer_to_json(m->normalizer())}};
  }
  throw InvalidArgument("policy type '" + policy.type() + "' cannot be serialised");
}

std::unique_ptr<Policy> policy_from_json(const json& j, const EnvConfig& env) {
  const json& t = field(j, "type");
  if (!t.is_string()) throw ConfigError("policy type must be a string");
  const std::string type = t.get<std::string>();
  try {
    if (type == "constant_params") {
      ProcessParams p;
      p.feed_mm_s = number(j, "feed_mm_per_s");
      p.doc_mm = number(j, "doc_mm");
      p.stiffness = number(j, "stiffness_per_s2");
      const double tau = j.contains("feed_time_constant_s") ? number(j, "feed_time_constant_s") : 1.0;
      const double gain = j.contains("doc_gain_per_s") ? number(j, "doc_gain_per_s") : 5.0;
      return std::make_unique<ConstantParamsPolicy>(
          p, ObsLayout::make(env.augmented_observation, env.outer_product_alignment), env.action,
          env.path_speed_mm_s, env.control_dt, tau, gain);
    }
    if (type == "linear") {
      const json& od = field(j, "obs_dim");
      if (!od.is_number_integer()) throw ConfigError("obs_dim must be an integer");
      auto p = std::make_unique<LinearPolicy>(od.get<int>(), vec_from(field(j, "low"), "low"),
                                              vec_from(field(j, "high"), "high"));
      p->set_params(vec_from(field(j, "params"), "params"));
      if (j.contains("normalizer")) p->set_normalizer(normalizer_from_json(j.at("normalizer")));
      return p;
    }
    if (type == "mlp") {
      const json& layers = field(j, "layers");
      if (!layers.is_array() || layers.empty()) throw ConfigError("mlp needs a non-empty layers list");
      std::vector<MatX> ws;
      std::vector<VecX> bs;
      for (const auto& layer : layers) {
        const json& rows = field(layer, "weight");
        if (!rows.is_array() || rows.empty()) throw ConfigError("mlp weight must be a list of rows");
        MatX w;
        for (std::size_t r = 0; r < rows.size(); ++r) {
          const VecX row = vec_from(rows[r], "mlp weight row");
          if (r == 0) w.resize(static_cast<Eigen::Index>(rows.size()), row.size());
          if (row.size() != w.cols()) throw ConfigError("mlp weight rows differ in length");
          w.row(static_cast<Eigen::Index>(r)) = row.transpose();
        }
        ws.push_back(std::move(w));
        bs.push_back(vec_from(field(layer, "bias"), "mlp bias"));
      }
      auto p = std::make_unique<MlpPolicy>(std::move(ws), std::move(bs),
                                           vec_from(field(j, "low"), "low"),
                                           vec_from(field(j, "high"), "high"));
      if (j.contains("normalizer")) p->set_normalizer(normalizer_from_json(j.at("normalizer")));
      return p;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("policy: " + std::string(e.what()));
  }
  throw ConfigError("unknown policy type '" + type + "'");
}

void save_policy(const std::filesystem::path& file, const Policy& policy) {
  write_json(file, policy_to_json(policy));
}

std::unique_ptr<Policy> load_policy(const std::filesystem::path& file, const EnvConfig& env) {
  return policy_from_json(read_json(file), env);
}

void write_learning_curve(const std::filesystem::path& file,
                          const std::vector<CemGeneration>& curve) {
  auto o = open_out(file);
  o << "generation,mean,std,best\n";
  for (const auto& g : curve) o << g.generation << ',' << g.mean << ',' << g.std << ',' << g.best << '\n';
}

void write_trajectory(const std::filesystem::path& file, const std::vector<LogRecord>& log) {
  auto o = open_out(file);
  o << "control_step,t_s,x_mm,y_mm,z_mm,vx_mms,vy_mms,vz_mms,ex_mm,ey_mm,ez_mm,"
       "fext_x_N,fext_y_N,fext_z_N,fc_x_N,fc_y_N,fc_z_N,kx,ky,kz,t_delta_s,n_delta_mm,"
       "tank_J,sigma,mrv_mm3,removed_mm3,law\n";
  for (const auto& r : log) {
    o << r.control_step << ',' << r.t;
    csv3(o, r.x);
    csv3(o, r.x_dot);
    csv3(o, r.e);
    csv3(o, r.f_ext);
    csv3(o, r.f_c);
    csv3(o, r.k_p);
    o << ',' << r.t_delta << ',' << r.n_delta << ',' << r.tank_J << ',' << r.sigma << ','
      << r.mrv_volume << ',' << r.removed_volume << ',' << to_string(r.law) << '\n';
  }
}

void write_ego_history(const std::filesystem::path& file, const std::vector<EgoSample>& history) {
  auto o = open_out(file);
  o << "index,feed_mm_per_s,rdoc_mm,stiffness_per_s2,reward,initial_design\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& s = history[i];
    o << i;
    csv3(o, s.params);
    o << ',' << s.reward << ',' << (s.initial_design ? 1 : 0) << '\n';
  }
}

void write_partial_dependence(const std::filesystem::path& file,
                              const std::vector<PartialDependence>& pd) {
  static const char* names[] = {"feed_mm_per_s", "rdoc_mm", "stiffness_per_s2"};
  auto o = open_out(file);
  o << "parameter,value,mean_reward\n";
  for (const auto& p : pd)
    for (std::size_t i = 0; i < p.x.size(); ++i) o << names[p.dim] << ',' << p.x[i] << ',' << p.y[i] << '\n';
}

json heightfield_to_json(const Heightfield& h) {
  const GridSpec& g = h.grid();
  return {{"nx", g.nx},           {"ny", g.ny},           {"dx_mm", g.dx},
          {"dy_mm", g.dy},        {"origin_x_mm", g.origin_x}, {"origin_y_mm", g.origin_y},
          {"heights_mm", h.heights()}};
}

Heightfield heightfield_from_json(const json& j) {
  GridSpec g;
  const json& nx = field(j, "nx");
  const json& ny = field(j, "ny");
  if (!nx.is_number_integer() || !ny.is_number_integer()) throw ConfigError("nx, ny must be integers");
  g.nx = nx.get<int>();
  g.ny = ny.get<int>();
  g.dx = number(j, "dx_mm");
  g.dy = number(j, "dy_mm");
  g.origin_x = number(j, "origin_x_mm");
  g.origin_y = number(j, "origin_y_mm");
  const VecX hv = vec_from(field(j, "heights_mm"), "heights_mm");
  try {
    return Heightfield(g, std::vector<double>(hv.data(), hv.data() + hv.size()));
  } catch (const Error& e) {
    throw ConfigError(std::string("heightfield: ") + e.what());
  }
}

json tool_to_json(const ToolSpec& t) {
  return {{"radius_mm", t.radius_mm},     {"pitch_rad", t.pitch_rad},
          {"helix_rad", t.helix_rad},     {"n_flutes", t.n_flutes},
          {"n_discs", t.n_discs},         {"edge_length_mm", t.edge_length_mm},
          {"spindle_rpm", t.spindle_rpm}, {"enforce_uniform_pitch", t.enforce_uniform_pitch},
          {"disc_stack_sign", t.disc_stack_sign}};
}

ToolSpec tool_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("tool must be an object");
  ToolSpec t;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    auto num = [&]() {
      if (!v.is_number()) throw ConfigError("tool." + k + " must be a number");
      return v.get<double>();
    };
    auto integer = [&]() {
      if (!v.is_number_integer()) throw ConfigError("tool." + k + " must be an integer");
      return v.get<int>();
    };
    if (k == "radius_mm") t.radius_mm = num();
    else if (k == "pitch_rad") t.pitch_rad = num();
    else if (k == "helix_rad") t.helix_rad = num();
    else if (k == "n_flutes") t.n_flutes = integer();
    else if (k == "n_discs") t.n_discs = integer();
    else if (k == "edge_length_mm") t.edge_length_mm = num();
    else if (k == "spindle_rpm") t.spindle_rpm = num();
    else if (k == "disc_stack_sign") t.disc_stack_sign = integer();
    else if (k == "enforce_uniform_pitch") {
      if (!v.is_boolean()) throw ConfigError("tool.enforce_uniform_pitch must be a boolean");
      t.enforce_uniform_pitch = v.get<bool>();
    } else {
      throw ConfigError("tool." + k + ": unknown key");
    }
  }
  return t;
}

json material_to_json(const MaterialParams& m) {
  return {{"kc_N_per_mm2", vec3_json(m.kc)}, {"ke_N_per_mm", vec3_json(m.ke)}};
}

json meta_to_json(const ExperimentMeta& m) {
  return {{"tool", tool_to_json(m.tool)},
          {"rdoc_mm", m.rdoc_mm},
          {"down_milling", m.down_milling},
          {"spindle_angle0_rad", m.spindle_angle0}};
}

ExperimentMeta meta_from_json(const json& j) {
  ExperimentMeta m;
  m.tool = tool_from_json(field(j, "tool"));
  m.rdoc_mm = number(j, "rdoc_mm");
  if (j.contains("down_milling")) {
    if (!j.at("down_milling").is_boolean()) throw ConfigError("down_milling must be a boolean");
    m.down_milling = j.at("down_milling").get<bool>();
  }
  if (j.contains("spindle_angle0_rad")) m.spindle_angle0 = number(j, "spindle_angle0_rad");
  return m;
}

std::filesystem::path meta_path_for(const std::filesystem::path& csv) {
  std::filesystem::path p = csv;
  p.replace_extension(".meta.json");
  return p;
}

void write_force_log(const std::filesystem::path& csv, const ForceLog& log) {
  {
    auto o = open_out(csv);
    o << "t_s,vx_mms,vy_mms,vz_mms,fx_N,fy_N,fz_N,engaged\n";
    for (const auto& r : log.records) {
      o << r.t;
      csv3(o, r.feed);
      csv3(o, r.force);
      o << ',' << (r.engaged ? 1 : 0) << '\n';
    }
  }
  write_json(meta_path_for(csv), meta_to_json(log.meta));
}

ForceLog read_force_log(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw ConfigError("cannot open " + csv.string());
  ForceLog log;
  std::string line;
  if (!std::getline(in, line) || line.rfind("t_s,", 0) != 0)
    throw ConfigError(csv.string() + ": missing force-log header");
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[8];
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n >= 8) break;
      try {
        std::size_t used = 0;
        v[n] = std::stod(cell, &used);
        if (used != cell.size() && cell.find_first_not_of(" \r", used) != std::string::npos)
          throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ConfigError(csv.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != 8) throw ConfigError(csv.string() + ":" + std::to_string(line_no) + ": expected 8 columns");
    ForceRecord r;
    r.t = v[0];
    r.feed = Vec3(v[1], v[2], v[3]);
    r.force = Vec3(v[4], v[5], v[6]);
    r.engaged = v[7] != 0.0;
    log.records.push_back(r);
  }
  log.meta = meta_from_json(read_json(meta_path_for(csv)));
  return log;
}

json fit_report(const FitResult& r) {
  json groups = json::array();
  for (const auto& g : r.groups)
    groups.push_back({{"feed_mm_per_s", vec3_json(g.feed)},
                      {"mean_force_N", vec3_json(g.mean_force)},
                      {"count", g.count}});
  return {{"material", material_to_json(r.material)},
          {"rmse_axis_N", vec3_json(r.rmse_axis)},
          {"rmse_N", r.rmse},
          {"rmse_average_axis_N", vec3_json(r.rmse_average_axis)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"groups", groups}};
}

}  // namespace millforge
