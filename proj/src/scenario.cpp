#include "polychaos/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "polychaos/chance.hpp"
#include "polychaos/estimate.hpp"
#include "polychaos/io.hpp"
#include "polychaos/polynomial_expr.hpp"
#include "polychaos/propagate.hpp"
#include "polychaos/serialize.hpp"
#include "polychaos/smpc.hpp"

namespace polychaos {

using nlohmann::json;

namespace {

std::string join_messages(const std::vector<SchemaViolation>& v) {
  std::string s = "config has " + std::to_string(v.size()) + " schema violation(s)";
  for (const auto& e : v) s += "; " + e.pointer + ": " + e.message;
  return s;
}

}  // namespace

SchemaError::SchemaError(std::vector<SchemaViolation> v)
    : ConfigError(join_messages(v)), violations_(std::move(v)) {}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Schema reader: records every violation and keeps going with fallbacks.
class Reader {
 public:
  explicit Reader(ScenarioConfig& cfg) : cfg_(cfg) {}

  std::vector<SchemaViolation> errors;

  void fail(const std::string& ptr, const std::string& msg) { errors.push_back({ptr, msg}); }

  const json* child(const json& obj, const std::string& ptr, const char* key, bool required) {
    if (obj.is_object() && obj.contains(key)) return &obj.at(key);
    if (required) fail(ptr + "/" + key, "required field is missing");
    return nullptr;
  }

  const json* object(const json& obj, const std::string& ptr, const char* key, bool required) {
    const json* v = child(obj, ptr, key, required);
    if (v && !v->is_object()) {
      fail(ptr + "/" + key, "must be an object");
      return nullptr;
    }
    return v;
  }

  template <class T>
  void defaulted(const std::string& ptr, const T& value) {
    cfg_.defaulted[ptr] = value;
  }

  double real(const json& obj, const std::string& ptr, const char* key, std::optional<double> def,
              double lo = -kInf, double hi = kInf, bool open_lo = false, bool open_hi = false) {
    const std::string p = ptr + "/" + key;
    const json* v = child(obj, ptr, key, !def.has_value());
    if (!v) {
      if (def) defaulted(p, *def);
      return def.value_or(0.0);
    }
    if (!v->is_number()) {
      fail(p, "must be a number");
      return def.value_or(0.0);
    }
    const double x = v->get<double>();
    const bool bad_lo = open_lo ? !(x > lo) : !(x >= lo);
    const bool bad_hi = open_hi ? !(x < hi) : !(x <= hi);
    if (bad_lo || bad_hi) {
      fail(p, "value " + format_double(x) + " outside the range " + (open_lo ? "(" : "[") +
                  format_double(lo) + ", " + format_double(hi) + (open_hi ? ")" : "]"));
    }
    return x;
  }

  long long integer(const json& obj, const std::string& ptr, const char* key,
                    std::optional<long long> def, long long lo, long long hi) {
    const std::string p = ptr + "/" + key;
    const json* v = child(obj, ptr, key, !def.has_value());
    if (!v) {
      if (def) defaulted(p, *def);
      return def.value_or(lo);
    }
    if (!v->is_number_integer()) {
      fail(p, "must be an integer");
      return def.value_or(lo);
    }
    const long long x = v->get<long long>();
    if (x < lo || x > hi) {
      fail(p, "value " + std::to_string(x) + " outside the range [" + std::to_string(lo) + ", " +
                  std::to_string(hi) + "]");
      return def.value_or(lo);
    }
    return x;
  }

  std::string string(const json& obj, const std::string& ptr, const char* key,
                     std::optional<std::string> def, const std::vector<std::string>& allowed = {}) {
    const std::string p = ptr + "/" + key;
    const json* v = child(obj, ptr, key, !def.has_value());
    if (!v) {
      if (def) defaulted(p, *def);
      return def.value_or("");
    }
    if (!v->is_string()) {
      fail(p, "must be a string");
      return def.value_or("");
    }
    auto s = v->get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      fail(p, "'" + s + "' is not one of {" + list + "}");
    }
    return s;
  }

  std::vector<double> reals(const json& obj, const std::string& ptr, const char* key,
                            std::optional<std::vector<double>> def, long long size = -1) {
    const std::string p = ptr + "/" + key;
    const json* v = child(obj, ptr, key, !def.has_value());
    if (!v) {
      if (def) defaulted(p, *def);
      return def.value_or(std::vector<double>{});
    }
    return real_list(*v, p, size);
  }

  std::vector<double> real_list(const json& v, const std::string& p, long long size) {
    std::vector<double> out;
    if (!v.is_array()) {
      fail(p, "must be an array of numbers");
      return out;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        fail(p + "/" + std::to_string(i), "must be a number");
        out.push_back(0.0);
      } else {
        out.push_back(v[i].get<double>());
      }
    }
    if (size >= 0 && static_cast<long long>(out.size()) != size)
      fail(p, "expected " + std::to_string(size) + " entries, got " + std::to_string(out.size()));
    return out;
  }

  RealMatrix matrix(const json& obj, const std::string& ptr, const char* key,
                    std::optional<RealMatrix> def, long long rows, long long cols) {
    const std::string p = ptr + "/" + key;
    const json* v = child(obj, ptr, key, !def.has_value());
    if (!v) {
      if (def) defaulted(p, json(*def));
      return def.value_or(RealMatrix{});
    }
    RealMatrix out;
    if (!v->is_array()) {
      fail(p, "must be an array of rows");
      return out;
    }
    if (rows >= 0 && static_cast<long long>(v->size()) != rows)
      fail(p, "expected " + std::to_string(rows) + " rows, got " + std::to_string(v->size()));
    for (std::size_t i = 0; i < v->size(); ++i)
      out.push_back(real_list((*v)[i], p + "/" + std::to_string(i), cols));
    return out;
  }

  ExprMatrix expr_matrix(const json& obj, const std::string& ptr, const char* key, long long rows,
                         long long cols) {
    const std::string p = ptr + "/" + key;
    const json* v = child(obj, ptr, key, true);
    ExprMatrix out;
    if (!v) return out;
    if (!v->is_array() || static_cast<long long>(v->size()) != rows) {
      fail(p, "must be an array of " + std::to_string(rows) + " rows");
      return out;
    }
    for (std::size_t i = 0; i < v->size(); ++i) {
      const json& row = (*v)[i];
      const std::string rp = p + "/" + std::to_string(i);
      if (!row.is_array() || static_cast<long long>(row.size()) != cols) {
        fail(rp, "must be an array of " + std::to_string(cols) + " entries");
        out.emplace_back(static_cast<std::size_t>(std::max(0LL, cols)), "0");
        continue;
      }
      std::vector<std::string> r;
      for (std::size_t c = 0; c < row.size(); ++c) {
        r.push_back(expression(row[c], rp + "/" + std::to_string(c)));
      }
      out.push_back(std::move(r));
    }
    return out;
  }

  std::string expression(const json& v, const std::string& p) {
    std::string e;
    if (v.is_number()) {
      e = format_double(v.get<double>());
    } else if (v.is_string()) {
      e = v.get<std::string>();
    } else {
      fail(p, "must be a number or a polynomial expression string");
      return "0";
    }
    check_expression(e, p);
    return e;
  }

  void check_expression(const std::string& e, const std::string& p) {
    if (!measures_ok_) return;
    try {
      const auto poly = parse_polynomial(e, names_, measures_);
      if (poly.degree() > cfg_.degree)
        fail(p, "expression degree " + std::to_string(poly.degree()) + " exceeds the basis degree " +
                    std::to_string(cfg_.degree));
    } catch (const ConfigError& ex) {
      fail(p, ex.what());
    }
  }

  void set_parameters(std::vector<std::string> names, std::vector<MeasureDescriptor> m, bool ok) {
    names_ = std::move(names);
    measures_ = std::move(m);
    measures_ok_ = ok;
  }

 private:
  ScenarioConfig& cfg_;
  std::vector<std::string> names_;
  std::vector<MeasureDescriptor> measures_;
  bool measures_ok_ = false;
};

bool finite_all(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void read_ode(Reader& rd, const json& sys, ScenarioConfig& cfg) {
  const std::string p = "/system";
  if (const json* r = rd.child(sys, p, "rate", true)) cfg.ode.rate = rd.expression(*r, p + "/rate");
  if (const json* y = rd.child(sys, p, "y0", false)) {
    cfg.ode.y0 = rd.expression(*y, p + "/y0");
  } else {
    rd.defaulted(p + "/y0", cfg.ode.y0);
  }
  cfg.ode.times = rd.reals(sys, p, "times", std::nullopt);
  if (cfg.ode.times.empty()) rd.fail(p + "/times", "needs at least one output time");
  for (std::size_t i = 0; i < cfg.ode.times.size(); ++i) {
    if (!(cfg.ode.times[i] >= 0.0) || (i > 0 && !(cfg.ode.times[i] > cfg.ode.times[i - 1])))
      rd.fail(p + "/times/" + std::to_string(i), "times must be nonnegative and increasing");
  }
  cfg.ode.dt = rd.real(sys, p, "dt", 1e-3, 0.0, 1.0, true, false);
}

void read_linear(Reader& rd, const json& sys, ScenarioConfig& cfg, bool need_steps) {
  const std::string p = "/system";
  auto& L = cfg.linear;
  L.n_x = static_cast<int>(rd.integer(sys, p, "n_x", std::nullopt, 1, 64));
  L.n_u = static_cast<int>(rd.integer(sys, p, "n_u", std::nullopt, 1, 64));
  L.a = rd.expr_matrix(sys, p, "a", L.n_x, L.n_x);
  L.b = rd.expr_matrix(sys, p, "b", L.n_x, L.n_u);
  L.x0 = rd.reals(sys, p, "x0", std::nullopt, L.n_x);
  if (!finite_all(L.x0)) rd.fail(p + "/x0", "entries must be finite");
  if (need_steps) {
    L.steps = static_cast<int>(rd.integer(sys, p, "steps", std::nullopt, 1, 100000));
    L.inputs = rd.matrix(sys, p, "inputs", RealMatrix{}, -1, L.n_u);
    if (!L.inputs.empty() && static_cast<int>(L.inputs.size()) != L.steps)
      rd.fail(p + "/inputs", "needs one row per step (" + std::to_string(L.steps) + ")");
  }
}

void read_smpc(Reader& rd, const json& s, ScenarioConfig& cfg) {
  const std::string p = "/smpc";
  auto& S = cfg.smpc;
  const int nx = cfg.linear.n_x;
  const int nu = cfg.linear.n_u;
  S.horizon = static_cast<int>(rd.integer(s, p, "horizon", std::nullopt, 1, 200));
  S.q = rd.matrix(s, p, "q", std::nullopt, nx, nx);
  S.r = rd.matrix(s, p, "r", std::nullopt, nu, nu);
  S.p_f = rd.matrix(s, p, "p_f", RealMatrix{}, -1, nx);
  if (!S.p_f.empty() && static_cast<int>(S.p_f.size()) != nx)
    rd.fail(p + "/p_f", "must be " + std::to_string(nx) + " x " + std::to_string(nx));
  S.u_lower = rd.reals(s, p, "u_lower", std::vector<double>{}, -1);
  S.u_upper = rd.reals(s, p, "u_upper", std::vector<double>{}, -1);
  if (S.u_lower.size() != S.u_upper.size() ||
      (!S.u_lower.empty() && static_cast<int>(S.u_lower.size()) != nu))
    rd.fail(p + "/u_lower", "input bounds need n_u entries each, or neither");
  for (std::size_t i = 0; i < std::min(S.u_lower.size(), S.u_upper.size()); ++i)
    if (!(S.u_lower[i] <= S.u_upper[i])) rd.fail(p + "/u_upper/" + std::to_string(i), "upper < lower");
  S.g = rd.matrix(s, p, "g", RealMatrix{}, -1, nx);
  S.bounds = rd.reals(s, p, "bounds", std::vector<double>{}, static_cast<long long>(S.g.size()));
  S.policy = rd.string(s, p, "policy", std::string("open_loop"), {"open_loop", "prestabilized"});
  S.runs = static_cast<int>(rd.integer(s, p, "runs", 1, 1, 100000));
  S.steps = static_cast<int>(rd.integer(s, p, "steps", std::nullopt, 1, 100000));
  S.tol = rd.real(s, p, "tol", 1e-8, 0.0, 1.0, true, false);
  S.max_iter = static_cast<int>(rd.integer(s, p, "max_iter", 50000, 1, 100000000));
}

void read_chance(Reader& rd, const json* c, ScenarioConfig& cfg) {
  const std::string p = "/chance";
  auto& C = cfg.chance;
  const json empty = json::object();
  const json& obj = c ? *c : empty;
  C.beta = rd.real(obj, p, "beta", std::nullopt, 0.0, 1.0, true, true);
  const long long n_c = static_cast<long long>(cfg.smpc.g.size());
  C.eps = rd.reals(obj, p, "eps", std::vector<double>{}, -1);
  if (!C.eps.empty()) {
    if (static_cast<long long>(C.eps.size()) != n_c)
      rd.fail(p + "/eps", "needs one entry per constraint row (" + std::to_string(n_c) + ")");
    double sum = 0.0;
    for (double e : C.eps) {
      sum += e;
      if (!(e > 0.0 && e < 1.0)) rd.fail(p + "/eps", "entries must lie in (0, 1)");
    }
    if (std::abs(sum - (1.0 - C.beta)) > 1e-12) rd.fail(p + "/eps", "entries must sum to 1 - beta");
  }
}

void read_estimate(Reader& rd, const json& e, ScenarioConfig& cfg) {
  const std::string p = "/estimate";
  auto& E = cfg.estimate;
  E.forward = rd.string(e, p, "forward", std::nullopt);
  if (!E.forward.empty() && !cfg.parameters.empty()) {
    try {
      parse_polynomial(E.forward, {cfg.parameters[0].name}, {MeasureDescriptor::gaussian(0.0, 1.0)});
    } catch (const ConfigError& ex) {
      rd.fail(p + "/forward", ex.what());
    }
  }
  E.noise_std = rd.real(e, p, "noise_std", std::nullopt, 0.0, kInf, true, true);
  if (e.contains("theta_true")) E.theta_true = rd.real(e, p, "theta_true", std::nullopt);
  E.measurements = rd.reals(e, p, "measurements", std::vector<double>{}, -1);
  if (!finite_all(E.measurements)) rd.fail(p + "/measurements", "entries must be finite");
  if (E.measurements.empty()) {
    if (!E.theta_true) rd.fail(p + "/theta_true", "needed when no measurements are given");
    E.steps = static_cast<int>(rd.integer(e, p, "steps", std::nullopt, 1, 1000000));
  } else {
    E.steps = static_cast<int>(E.measurements.size());
  }
  E.moments = static_cast<int>(rd.integer(e, p, "moments", 2, 2, 4));
  E.samples = static_cast<std::size_t>(rd.integer(e, p, "samples", 10000, 100, 100000000));
  if (cfg.parameters.size() != 1) rd.fail("/parameters", "estimate mode needs exactly one parameter");
  if (cfg.degree < 1 || cfg.degree > E.moments)
    rd.fail("/degree", "estimate mode needs 1 <= degree <= moments");
}

}  // namespace

ScenarioConfig config_from_json(const json& j) {
  ScenarioConfig cfg;
  Reader rd(cfg);
  if (!j.is_object())
    throw SchemaError(std::vector<SchemaViolation>{{"", "config must be a JSON object"}});

  const std::string root;
  const long long version = rd.integer(j, root, "schema_version", std::nullopt, 0, 1000000);
  if (j.contains("schema_version") && j.at("schema_version").is_number_integer() &&
      version != kSchemaVersion)
    rd.fail("/schema_version", "unsupported version " + std::to_string(version) + " (expected " +
                                   std::to_string(kSchemaVersion) + ")");
  cfg.schema_version = kSchemaVersion;
  cfg.mode = rd.string(j, root, "mode", std::nullopt, {"propagate", "smpc", "estimate", "compare"});
  cfg.degree = static_cast<int>(rd.integer(j, root, "degree", 3, 0, 64));
  cfg.seed = static_cast<std::uint64_t>(
      rd.integer(j, root, "seed", 0, 0, std::numeric_limits<long long>::max()));
  cfg.mc_samples = static_cast<std::size_t>(rd.integer(j, root, "mc_samples", 100000, 1, 1000000000));
  cfg.output_dir = rd.string(j, root, "output_dir", std::string("."));

  // parameters
  std::vector<std::string> names;
  std::vector<MeasureDescriptor> measures;
  bool params_ok = true;
  if (const json* ps = rd.child(j, root, "parameters", true)) {
    if (!ps->is_array() || ps->empty()) {
      rd.fail("/parameters", "must be a non-empty array");
      params_ok = false;
    } else {
      for (std::size_t i = 0; i < ps->size(); ++i) {
        const std::string p = "/parameters/" + std::to_string(i);
        const json& pj = (*ps)[i];
        const std::string name = rd.string(pj, p, "name", std::nullopt);
        if (!name.empty() && !(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_'))
          rd.fail(p + "/name", "must start with a letter or underscore");
        if (std::find(names.begin(), names.end(), name) != names.end())
          rd.fail(p + "/name", "duplicate parameter name '" + name + "'");
        MeasureDescriptor m;
        if (const json* mj = rd.object(pj, p, "measure", true)) {
          try {
            m = measure_from_json(*mj);
          } catch (const ConfigError& e) {
            rd.fail(p + "/measure", e.what());
            params_ok = false;
          }
        } else {
          params_ok = false;
        }
        names.push_back(name);
        measures.push_back(m);
        cfg.parameters.push_back({name, m});
      }
    }
  } else {
    params_ok = false;
  }
  if (params_ok) {
    try {
      (void)total_degree_count(static_cast<int>(names.size()), cfg.degree);
    } catch (const BasisSizeError& e) {
      rd.fail("/degree", e.what());
    }
  }
  rd.set_parameters(names, measures, params_ok);

  const bool needs_system = cfg.mode == "propagate" || cfg.mode == "compare" || cfg.mode == "smpc";
  if (needs_system) {
    if (const json* sys = rd.object(j, root, "system", true)) {
      const std::vector<std::string> kinds =
          cfg.mode == "smpc" ? std::vector<std::string>{"linear"} : std::vector<std::string>{"ode", "linear"};
      cfg.system_kind = rd.string(*sys, "/system", "kind", std::nullopt, kinds);
      if (cfg.system_kind == "ode") read_ode(rd, *sys, cfg);
      if (cfg.system_kind == "linear") read_linear(rd, *sys, cfg, cfg.mode != "smpc");
    }
  }
  if (cfg.mode == "smpc") {
    if (const json* s = rd.object(j, root, "smpc", true)) read_smpc(rd, *s, cfg);
    read_chance(rd, rd.object(j, root, "chance", true), cfg);
  }
  if (cfg.mode == "estimate") {
    if (const json* e = rd.object(j, root, "estimate", true)) read_estimate(rd, *e, cfg);
  }

  if (!rd.errors.empty()) throw SchemaError(std::move(rd.errors));
  return cfg;
}

json config_to_json(const ScenarioConfig& cfg) {
  json params = json::array();
  for (const auto& p : cfg.parameters) params.push_back({{"name", p.name}, {"measure", measure_to_json(p.measure)}});
  json j = {{"schema_version", cfg.schema_version}, {"mode", cfg.mode},
            {"parameters", params},                 {"degree", cfg.degree},
            {"seed", cfg.seed},                     {"mc_samples", cfg.mc_samples},
            {"output_dir", cfg.output_dir}};
  if (cfg.system_kind == "ode") {
    j["system"] = {{"kind", "ode"},
                   {"rate", cfg.ode.rate},
                   {"y0", cfg.ode.y0},
                   {"times", cfg.ode.times},
                   {"dt", cfg.ode.dt}};
  } else if (cfg.system_kind == "linear") {
    const auto& L = cfg.linear;
    j["system"] = {{"kind", "linear"}, {"n_x", L.n_x}, {"n_u", L.n_u}, {"a", L.a}, {"b", L.b}, {"x0", L.x0}};
    if (cfg.mode != "smpc") {
      j["system"]["steps"] = L.steps;
      j["system"]["inputs"] = L.inputs;
    }
  }
  if (cfg.mode == "smpc") {
    const auto& S = cfg.smpc;
    j["smpc"] = {{"horizon", S.horizon}, {"q", S.q},         {"r", S.r},           {"p_f", S.p_f},
                 {"u_lower", S.u_lower}, {"u_upper", S.u_upper}, {"g", S.g},       {"bounds", S.bounds},
                 {"policy", S.policy},   {"runs", S.runs},   {"steps", S.steps},   {"tol", S.tol},
                 {"max_iter", S.max_iter}};
    j["chance"] = {{"beta", cfg.chance.beta}, {"eps", cfg.chance.eps}};
  }
  if (cfg.mode == "estimate") {
    const auto& E = cfg.estimate;
    j["estimate"] = {{"forward", E.forward},   {"noise_std", E.noise_std}, {"moments", E.moments},
                     {"samples", E.samples}};
    if (E.theta_true) j["estimate"]["theta_true"] = *E.theta_true;
    if (E.measurements.empty()) {
      j["estimate"]["steps"] = E.steps;
    } else {
      j["estimate"]["measurements"] = E.measurements;
    }
  }
  return j;
}

bool operator==(const ScenarioConfig& a, const ScenarioConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

ScenarioConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::vector<SchemaViolation>{{"", std::string("not valid JSON: ") + e.what()}});
  }
  return config_from_json(j);
}

namespace {

struct Model {
  BasisPtr basis;
  std::shared_ptr<const TripleProductTensor> tensor;
  std::vector<std::string> names;
  std::vector<MeasureDescriptor> measures;

  Eigen::VectorXd expand(const std::string& expr) const {
    return to_basis(parse_polynomial(expr, names, measures), *basis);
  }
};

Model build_model(const ScenarioConfig& cfg) {
  Model m;
  std::vector<PolynomialFamily> fams;
  for (const auto& p : cfg.parameters) {
    m.names.push_back(p.name);
    m.measures.push_back(p.measure);
    fams.push_back(build_family(p.measure, cfg.degree));
  }
  m.basis = std::make_shared<const TotalDegreeBasis>(std::move(fams), cfg.degree);
  m.tensor = std::make_shared<const TripleProductTensor>(triple_products(*m.basis));
  return m;
}

Eigen::MatrixXd to_matrix(const RealMatrix& m) {
  if (m.empty()) return {};
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[r].size(); ++c) out(r, c) = m[r][c];
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ParametricLinearSystem build_linear(const ScenarioConfig& cfg, const Model& m) {
  const auto& L = cfg.linear;
  const auto terms = static_cast<Eigen::Index>(m.basis->size());
  Eigen::MatrixXd a(L.n_x * L.n_x, terms);
  Eigen::MatrixXd b(L.n_x * L.n_u, terms);
  for (int r = 0; r < L.n_x; ++r) {
    for (int c = 0; c < L.n_x; ++c) a.row(r * L.n_x + c) = m.expand(L.a[r][c]).transpose();
    for (int c = 0; c < L.n_u; ++c) b.row(r * L.n_u + c) = m.expand(L.b[r][c]).transpose();
  }
  return ParametricLinearSystem(L.n_x, L.n_u, PceVector(m.basis, a), PceVector(m.basis, b));
}

std::filesystem::path prepare_dir(const ScenarioConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_file(RunResult& res, const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw NumericalError("write failed for '" + path.string() + "'");
  res.artifacts.push_back(path);
}

json base_summary(const ScenarioConfig& cfg, const Model& m) {
  json defaults = json::object();
  for (const auto& [k, v] : cfg.defaulted) defaults[k] = v;
  return {{"mode", cfg.mode},
          {"seed", cfg.seed},
          {"basis", m.basis->id()},
          {"terms", m.basis->size()},
          {"tensor_nonzeros", m.tensor->nonzeros()},
          {"defaults", defaults}};
}

// Galerkin moments and coefficient trajectories, one entry per time.
struct PceRun {
  std::vector<double> times;
  std::vector<PceVector> states;
};

PceRun pce_run(const ScenarioConfig& cfg, const Model& m) {
  PceRun out;
  if (cfg.system_kind == "ode") {
    const PceVector rate(m.basis, m.expand(cfg.ode.rate).transpose());
    const PceVector y0(m.basis, m.expand(cfg.ode.y0).transpose());
    const GalerkinOde ode(rate, *m.tensor);
    auto traj = integrate_ode(ode, y0, cfg.ode.times, cfg.ode.dt);
    out.times = std::move(traj.times);
    out.states = std::move(traj.states);
    return out;
  }
  const auto sys = build_linear(cfg, m);
  const auto exp = expand_linear(sys, *m.tensor);
  Eigen::VectorXd x = stack(PceVector::constant(m.basis, to_vector(cfg.linear.x0)));
  out.times.push_back(0.0);
  out.states.push_back(unstack(m.basis, x, cfg.linear.n_x));
  for (int t = 0; t < cfg.linear.steps; ++t) {
    const Eigen::VectorXd u = cfg.linear.inputs.empty() ? Eigen::VectorXd::Zero(cfg.linear.n_u)
                                                        : to_vector(cfg.linear.inputs[t]);
    x = step(exp, x, u);
    out.times.push_back(t + 1.0);
    out.states.push_back(unstack(m.basis, x, cfg.linear.n_x));
  }
  return out;
}

McSummary mc_run(const ScenarioConfig& cfg, const Model& m) {
  if (cfg.system_kind == "ode") {
    const PceVector rate(m.basis, m.expand(cfg.ode.rate).transpose());
    const PceVector y0(m.basis, m.expand(cfg.ode.y0).transpose());
    const GalerkinOde ode(rate, *m.tensor);
    return mc_propagate(ode, y0, cfg.ode.times, cfg.mc_samples, cfg.seed);
  }
  const auto sys = build_linear(cfg, m);
  std::vector<Eigen::VectorXd> inputs;
  for (int t = 0; t < cfg.linear.steps; ++t)
    inputs.push_back(cfg.linear.inputs.empty() ? Eigen::VectorXd::Zero(cfg.linear.n_u)
                                               : to_vector(cfg.linear.inputs[t]));
  return mc_propagate(sys, to_vector(cfg.linear.x0), inputs, cfg.mc_samples, cfg.seed);
}

std::string pce_moments_csv(const PceRun& run) {
  std::ostringstream os;
  os << "time,output,mean,variance\n";
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    const auto mu = mean(run.states[k]);
    const auto var = variance(run.states[k]);
    for (Eigen::Index r = 0; r < mu.size(); ++r)
      os << format_double(run.times[k]) << ',' << r << ',' << format_double(mu[r]) << ','
         << format_double(var[r]) << '\n';
  }
  return os.str();
}

std::string pce_coefficients_csv(const PceRun& run) {
  std::ostringstream os;
  const auto terms = run.states.empty() ? 0 : run.states[0].terms();
  os << "time,output";
  for (Eigen::Index l = 0; l < terms; ++l) os << ",c" << l;
  os << '\n';
  for (std::size_t k = 0; k < run.times.size(); ++k) {
    const auto& c = run.states[k].coeffs();
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      os << format_double(run.times[k]) << ',' << r;
      for (Eigen::Index l = 0; l < c.cols(); ++l) os << ',' << format_double(c(r, l));
      os << '\n';
    }
  }
  return os.str();
}

RunResult run_propagate(const ScenarioConfig& cfg, const Model& m, bool compare) {
  RunResult res;
  const auto dir = prepare_dir(cfg);
  const auto pce = pce_run(cfg, m);
  const auto mc = mc_run(cfg, m);
  json summary = base_summary(cfg, m);
  summary["mc_samples"] = mc.samples;

  double max_mean = 0.0;
  double max_var = 0.0;
  double max_z_mean = 0.0;
  std::ostringstream cmp;
  cmp << "time,output,pce_mean,mc_mean,abs_dev_mean,stderr_mean,pce_variance,mc_variance,"
         "abs_dev_variance,stderr_variance\n";
  for (std::size_t k = 0; k < pce.times.size(); ++k) {
    const auto mu = mean(pce.states[k]);
    const auto var = variance(pce.states[k]);
    for (Eigen::Index r = 0; r < mu.size(); ++r) {
      const auto kk = static_cast<Eigen::Index>(k);
      const double dm = std::abs(mu[r] - mc.mean(r, kk));
      const double dv = std::abs(var[r] - mc.variance(r, kk));
      max_mean = std::max(max_mean, dm);
      max_var = std::max(max_var, dv);
      if (dm > 1e-12 && mc.stderr_mean(r, kk) > 0.0) max_z_mean = std::max(max_z_mean, dm / mc.stderr_mean(r, kk));
      cmp << format_double(pce.times[k]) << ',' << r << ',' << format_double(mu[r]) << ','
          << format_double(mc.mean(r, kk)) << ',' << format_double(dm) << ','
          << format_double(mc.stderr_mean(r, kk)) << ',' << format_double(var[r]) << ','
          << format_double(mc.variance(r, kk)) << ',' << format_double(dv) << ','
          << format_double(mc.stderr_variance(r, kk)) << '\n';
    }
  }
  summary["max_abs_mean_deviation"] = max_mean;
  summary["max_abs_variance_deviation"] = max_var;
  summary["max_mean_deviation_in_stderr"] = max_z_mean;

  if (compare) {
    write_file(res, dir / "compare.csv", cmp.str());
  } else {
    write_file(res, dir / "pce_moments.csv", pce_moments_csv(pce));
    write_file(res, dir / "pce_coefficients.csv", pce_coefficients_csv(pce));
    std::ostringstream mcs;
    write_csv(mcs, mc);
    write_file(res, dir / "mc_moments.csv", mcs.str());
    write_file(res, dir / "basis.json", basis_to_json(*m.basis).dump(1) + "\n");
    write_file(res, dir / "tensor.json", tensor_to_json(*m.tensor).dump() + "\n");
    write_file(res, dir / "pce_final.json", pce_to_json(pce.states.back()).dump(1) + "\n");
  }
  write_file(res, dir / "summary.json", summary.dump(2) + "\n");
  res.summary = std::move(summary);
  return res;
}

RunResult run_smpc(const ScenarioConfig& cfg, const Model& m) {
  RunResult res;
  const auto dir = prepare_dir(cfg);
  const auto sys = build_linear(cfg, m);
  const auto& S = cfg.smpc;
  json summary = base_summary(cfg, m);

  SmpcProblem prob;
  prob.horizon = S.horizon;
  prob.q = to_matrix(S.q);
  prob.r = to_matrix(S.r);
  const bool need_lqr = S.p_f.empty() || S.policy == "prestabilized";
  LqrResult lqr;
  if (need_lqr) lqr = lqr_gain(sys.a_mean(), sys.b_mean(), prob.q, prob.r);
  prob.p_f = S.p_f.empty() ? lqr.p : to_matrix(S.p_f);
  prob.u_lower = to_vector(S.u_lower);
  prob.u_upper = to_vector(S.u_upper);
  if (!S.g.empty()) prob.state_polytope = Polytope(to_matrix(S.g), to_vector(S.bounds));
  else prob.state_polytope = Polytope(Eigen::MatrixXd(0, cfg.linear.n_x), Eigen::VectorXd(0));
  const int n_c = static_cast<int>(S.g.size());
  if (n_c > 0) {
    prob.chance = cfg.chance.eps.empty() ? boole_allocate(cfg.chance.beta, n_c)
                                         : ChanceSpec(cfg.chance.beta, cfg.chance.eps);
  } else {
    prob.chance = ChanceSpec(cfg.chance.beta, {});
  }
  if (S.policy == "prestabilized") {
    prob.policy = PolicyKind::prestabilized;
    prob.k = lqr.k;
  }
  prob.validate(cfg.linear.n_x, cfg.linear.n_u);

  SolverSettings settings;
  settings.tol = S.tol;
  settings.max_iter = S.max_iter;
  const Eigen::VectorXd x0 = to_vector(cfg.linear.x0);

  std::vector<ClosedLoopTrace> traces(static_cast<std::size_t>(S.runs));
  std::vector<std::string> errors(traces.size());
  parallel_for(traces.size(), [&](std::size_t r) {
    try {
      traces[r] = receding_horizon(prob, sys, *m.tensor, x0, S.steps, substream(cfg.seed, r)(),
                                   settings);
    } catch (const std::exception& e) {
      errors[r] = e.what();
    }
  });
  for (std::size_t r = 0; r < errors.size(); ++r)
    if (!errors[r].empty()) throw NumericalError("run " + std::to_string(r) + ": " + errors[r]);

  std::ostringstream csv;
  std::vector<double> per_step(static_cast<std::size_t>(S.steps), 0.0);
  std::vector<double> per_step_n(static_cast<std::size_t>(S.steps), 0.0);
  double violations = 0.0;
  double observed = 0.0;
  double total_cost = 0.0;
  long long iters = 0;
  int max_iters = 0;
  int solves = 0;
  int non_optimal = 0;
  int fallbacks = 0;
  int infeasible_starts = 0;
  int runs_with_violation = 0;
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const auto& tr = traces[r];
    write_csv(csv, tr, static_cast<int>(r), r == 0);
    bool any = false;
    for (std::size_t k = 0; k < tr.steps(); ++k) {
      per_step[k] += tr.violated[k] ? 1.0 : 0.0;
      per_step_n[k] += 1.0;
      violations += tr.violated[k] ? 1.0 : 0.0;
      observed += 1.0;
      any = any || tr.violated[k];
      total_cost += tr.stage_cost[k];
      iters += tr.iterations[k];
      max_iters = std::max(max_iters, tr.iterations[k]);
      ++solves;
      non_optimal += tr.status[k] == SolveStatus::optimal ? 0 : 1;
      fallbacks += tr.fallback[k] ? 1 : 0;
    }
    runs_with_violation += any ? 1 : 0;
    infeasible_starts += tr.infeasible_start ? 1 : 0;
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < per_step.size(); ++k)
    if (per_step_n[k] > 0.0) worst = std::max(worst, per_step[k] / per_step_n[k]);
  const double p = 1.0 - cfg.chance.beta;
  const double stderr_binom = std::sqrt(p * (1.0 - p) / static_cast<double>(S.runs));

  summary["runs"] = S.runs;
  summary["steps"] = S.steps;
  summary["policy"] = S.policy;
  summary["beta"] = cfg.chance.beta;
  summary["violation_rate"] = worst;
  summary["violation_rate_overall"] = observed > 0.0 ? violations / observed : 0.0;
  summary["runs_with_violation"] = runs_with_violation;
  summary["violation_stderr"] = stderr_binom;
  summary["violation_bound"] = p + 3.0 * stderr_binom;
  summary["mean_cost"] = total_cost / static_cast<double>(S.runs);
  summary["solver"] = {{"solves", solves},
                       {"mean_iterations", solves > 0 ? static_cast<double>(iters) / solves : 0.0},
                       {"max_iterations", max_iters},
                       {"non_optimal", non_optimal},
                       {"fallbacks", fallbacks},
                       {"infeasible_starts", infeasible_starts}};
  if (need_lqr) summary["lqr_iterations"] = lqr.iterations;

  write_file(res, dir / "trace.csv", csv.str());
  write_file(res, dir / "summary.json", summary.dump(2) + "\n");
  res.exit_code = (fallbacks > 0 || infeasible_starts > 0) ? 2 : 0;
  res.summary = std::move(summary);
  return res;
}

RunResult run_estimate(const ScenarioConfig& cfg, const Model& m) {
  RunResult res;
  const auto dir = prepare_dir(cfg);
  const auto& E = cfg.estimate;
  json summary = base_summary(cfg, m);

  const auto fwd = parse_polynomial(E.forward, {m.names[0]}, {MeasureDescriptor::gaussian(0.0, 1.0)});
  LikelihoodModel lik;
  lik.forward = [fwd](double theta) {
    Eigen::VectorXd v(1);
    v[0] = theta;
    return fwd.eval(v);
  };
  lik.noise_std = E.noise_std;

  std::vector<double> ys = E.measurements;
  if (ys.empty()) {
    const GermSampler normal(MeasureDescriptor::gaussian(0.0, 1.0));
    for (int t = 0; t < E.steps; ++t) {
      auto rng = substream(cfg.seed, 2 * static_cast<std::uint64_t>(t) + 1);
      ys.push_back(lik.forward(*E.theta_true) + E.noise_std * normal(rng));
    }
  }

  PceVector theta(m.basis, m.expand(m.names[0]).transpose());
  std::vector<FilterTraceRow> rows;
  rows.push_back({0, std::nan(""), mean(theta)[0], variance(theta)[0], 0.0});
  int unconverged = 0;
  for (std::size_t t = 0; t < ys.size(); ++t) {
    FilterConfig fc;
    fc.moments = E.moments;
    fc.samples = E.samples;
    fc.seed = substream(cfg.seed, 2 * static_cast<std::uint64_t>(t))();
    auto step_res = filter_step(theta, ys[t], lik, fc);
    unconverged += step_res.refit.converged ? 0 : 1;
    theta = step_res.posterior;
    rows.push_back({static_cast<int>(t) + 1, ys[t], mean(theta)[0], variance(theta)[0],
                    step_res.targets.effective_sample_size});
  }
  std::ostringstream csv;
  write_csv(csv, rows);
  write_file(res, dir / "filter_trace.csv", csv.str());
  write_file(res, dir / "posterior.json", pce_to_json(theta).dump(1) + "\n");
  summary["steps"] = ys.size();
  summary["posterior_mean"] = mean(theta)[0];
  summary["posterior_variance"] = variance(theta)[0];
  summary["unconverged_refits"] = unconverged;
  if (E.theta_true) summary["theta_true"] = *E.theta_true;
  write_file(res, dir / "summary.json", summary.dump(2) + "\n");
  res.summary = std::move(summary);
  return res;
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg) {
  const Model m = build_model(cfg);
  if (cfg.mode == "propagate") return run_propagate(cfg, m, false);
  if (cfg.mode == "compare") return run_propagate(cfg, m, true);
  if (cfg.mode == "smpc") return run_smpc(cfg, m);
  if (cfg.mode == "estimate") return run_estimate(cfg, m);
  throw ConfigError("unknown mode '" + cfg.mode + "'");
}

json error_json(const std::exception& e) {
  json j = {{"error", "runtime"}, {"message", e.what()}};
  if (const auto* pe = dynamic_cast<const Error*>(&e)) j["error"] = pe->kind();
  if (const auto* se = dynamic_cast<const SchemaError*>(&e)) {
    json v = json::array();
    for (const auto& x : se->violations()) v.push_back({{"pointer", x.pointer}, {"message", x.message}});
    j["violations"] = v;
  }
  if (const auto* rd = dynamic_cast<const RankDeficient*>(&e)) {
    j["rank"] = rd->rank();
    j["required"] = rd->required();
  }
  return j;
}

}  // namespace polychaos
