#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "polychaos/error.hpp"
#include "polychaos/polynomial_expr.hpp"
#include "polychaos/scenario.hpp"
#include "polychaos/serialize.hpp"

using namespace polychaos;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = POLYCHAOS_SOURCE_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("polychaos_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json load(const std::string& name) { return json::parse(slurp(kSource / "scenarios" / name)); }

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* v) {
    const char* old = std::getenv("POLYCHAOS_THREADS");
    had_ = old != nullptr;
    if (had_) old_ = old;
    setenv("POLYCHAOS_THREADS", v, 1);
  }
  ~ThreadsEnv() {
    if (had_) setenv("POLYCHAOS_THREADS", old_.c_str(), 1);
    else unsetenv("POLYCHAOS_THREADS");
  }

 private:
  bool had_ = false;
  std::string old_;
};

BasisPtr make_basis(std::vector<MeasureDescriptor> ms, int d) {
  std::vector<PolynomialFamily> fams;
  for (const auto& m : ms) fams.push_back(build_family(m, d));
  return std::make_shared<const TotalDegreeBasis>(std::move(fams), d);
}

json minimal_propagate() {
  return json::parse(R"({
    "schema_version": 1,
    "mode": "propagate",
    "parameters": [{"name": "theta", "measure": {"kind": "uniform", "lo": 0.5, "hi": 1.5}}],
    "system": {"kind": "ode", "rate": "theta", "times": [0, 1]}
  })");
}

std::vector<std::string> pointers(const SchemaError& e) {
  std::vector<std::string> out;
  for (const auto& v : e.violations()) out.push_back(v.pointer);
  return out;
}

bool has(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

struct CliRun {
  int code = -1;
  std::string err;
};

CliRun run_cli(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + POLYCHAOS_CLI + "\" " + args + " > \"" + (dir / "stdout.txt").string() +
                          "\" 2> \"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& j) {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST(ParsePolynomial, AffineSubstitution) {
  const std::vector<MeasureDescriptor> ms = {MeasureDescriptor::uniform(0.5, 1.5), MeasureDescriptor::gaussian(2.0, 0.5)};
  const auto p = parse_polynomial("1 + 0.5*theta^2 - k*theta/4 + (k - 2)^3", {"theta", "k"}, ms);
  EXPECT_EQ(p.degree(), 3);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d xi(ud(rng), 3.0 * ud(rng));
    const double theta = 1.0 + 0.5 * xi[0];
    const double k = 2.0 + 0.5 * xi[1];
    EXPECT_NEAR(p.eval(xi), 1.0 + 0.5 * theta * theta - k * theta / 4.0 + std::pow(k - 2.0, 3), 1e-12);
  }
  const auto c = parse_polynomial("-(2.5e-1)", {"theta", "k"}, ms);
  EXPECT_TRUE(c.is_constant());
  EXPECT_DOUBLE_EQ(c.constant_term(), -0.25);
}

TEST(ParsePolynomial, Errors) {
  const std::vector<MeasureDescriptor> ms = {MeasureDescriptor::uniform(0.5, 1.5)};
  for (const char* bad : {"theta +", "foo", "theta^-1", "1/theta", "theta^1.5", "(theta", "2 theta", ""})
    EXPECT_THROW(parse_polynomial(bad, {"theta"}, ms), ConfigError) << bad;
}

TEST(ParsePolynomial, ExactBasisExpansion) {
  const auto b = make_basis({MeasureDescriptor::uniform(0.5, 1.5), MeasureDescriptor::gaussian(0.0, 2.0)}, 3);
  const auto p = parse_polynomial("theta^2 * k - 3", {"theta", "k"}, {b->families()[0].measure(), b->families()[1].measure()});
  const Eigen::VectorXd c = to_basis(p, *b);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 20; ++i) {
    const Eigen::Vector2d xi(std::tanh(nd(rng)), nd(rng));
    EXPECT_NEAR(c.dot(eval_basis(*b, xi)), p.eval(xi), 1e-10);
  }
  const auto too_high = parse_polynomial("theta^4", {"theta", "k"}, {b->families()[0].measure(), b->families()[1].measure()});
  EXPECT_THROW(to_basis(too_high, *b), ExactnessError);
}

TEST(Serialize, MeasureRoundTrip) {
  for (const auto& m : {MeasureDescriptor::uniform(-1.0, 3.0), MeasureDescriptor::gaussian(0.5, 2.0),
                        MeasureDescriptor::gamma(2.5), MeasureDescriptor::beta(2.0, 3.0)}) {
    const auto back = measure_from_json(measure_to_json(m));
    EXPECT_EQ(back.describe(), m.describe());
  }
  EXPECT_THROW(measure_to_json(MeasureDescriptor::custom([](double) { return 0.5; }, -1.0, 1.0)), UnsupportedMeasure);
  EXPECT_THROW(measure_from_json(json{{"kind", "cauchy"}}), ConfigError);
  EXPECT_THROW(measure_from_json(json{{"kind", "uniform"}, {"lo", 1.0}, {"hi", 0.0}}), ConfigError);
}

TEST(Serialize, BasisTensorAndPceRoundTrip) {
  const auto b = make_basis({MeasureDescriptor::uniform(-1.0, 1.0), MeasureDescriptor::gamma(2.0)}, 3);
  const auto bj = basis_to_json(*b);
  const auto b2 = basis_from_json(json::parse(bj.dump()));
  EXPECT_EQ(b2.id(), b->id());
  ASSERT_EQ(b2.size(), b->size());
  for (std::size_t l = 0; l < b->size(); ++l) EXPECT_EQ(b2.indices()[l], b->indices()[l]);

  const auto t = triple_products(*b);
  const auto t2 = tensor_from_json(json::parse(tensor_to_json(t).dump()), *b);
  EXPECT_EQ(t2.nonzeros(), t.nonzeros());
  for (std::size_t i = 0; i < b->size(); ++i)
    for (std::size_t j = 0; j < b->size(); ++j)
      for (std::size_t l = 0; l < b->size(); ++l) EXPECT_DOUBLE_EQ(t2(i, j, l), t(i, j, l));
  const auto other = make_basis({MeasureDescriptor::uniform(-1.0, 1.0), MeasureDescriptor::gamma(2.0)}, 2);
  EXPECT_THROW(tensor_from_json(tensor_to_json(t), *other), ConfigError);

  Eigen::MatrixXd c = Eigen::MatrixXd::Random(2, static_cast<Eigen::Index>(b->size()));
  const PceVector p(b, c);
  const auto p2 = pce_from_json(json::parse(pce_to_json(p).dump()), b);
  EXPECT_EQ(p2.coeffs(), p.coeffs());
  EXPECT_THROW(pce_from_json(pce_to_json(p), other), ConfigError);
}

TEST(Serialize, PceCsv) {
  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 2);
  std::ostringstream os;
  write_csv(os, PceVector(b, Eigen::RowVector3d(1.0, 0.5, 0.25)));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "output,c0,c1,c2");
}

TEST(ParseConfig, MinimalPropagateFillsDefaults) {
  const auto cfg = config_from_json(minimal_propagate());
  EXPECT_EQ(cfg.degree, 3);
  EXPECT_EQ(cfg.mc_samples, 100000u);
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.system_kind, "ode");
  EXPECT_DOUBLE_EQ(cfg.ode.dt, 1e-3);
  EXPECT_EQ(cfg.defaulted.at("/degree"), json(3));
  EXPECT_EQ(cfg.defaulted.at("/mc_samples"), json(100000));
  EXPECT_TRUE(cfg.defaulted.count("/seed"));
  EXPECT_TRUE(cfg.defaulted.count("/system/dt"));
}

TEST(ParseConfig, BetaOutOfRange) {
  auto j = load("smpc_testbed.json");
  j["chance"]["beta"] = 1.3;
  try {
    config_from_json(j);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    ASSERT_EQ(e.violations().size(), 1u);
    EXPECT_EQ(e.violations()[0].pointer, "/chance/beta");
    EXPECT_NE(e.violations()[0].message.find("range"), std::string::npos) << e.violations()[0].message;
  }
}

TEST(ParseConfig, CollectsEveryViolation) {
  auto j = load("smpc_testbed.json");
  j["degree"] = -1;
  j["chance"]["beta"] = 0.0;
  j["smpc"]["horizon"] = 0;
  j["system"]["a"][1][0] = "t1 + zeta";
  j["parameters"][1]["measure"]["hi"] = -1.0;
  j.erase("seed");
  try {
    config_from_json(j);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    const auto ps = pointers(e);
    EXPECT_TRUE(has(ps, "/degree"));
    EXPECT_TRUE(has(ps, "/chance/beta"));
    EXPECT_TRUE(has(ps, "/smpc/horizon"));
    EXPECT_TRUE(has(ps, "/parameters/1/measure"));
    EXPECT_GE(ps.size(), 4u);
  }
}

TEST(ParseConfig, StructuralErrors) {
  auto j = minimal_propagate();
  j["schema_version"] = 2;
  EXPECT_THROW(config_from_json(j), SchemaError);
  j = minimal_propagate();
  j["mode"] = "simulate";
  EXPECT_THROW(config_from_json(j), SchemaError);
  j = minimal_propagate();
  j["system"]["rate"] = "theta^4";
  EXPECT_THROW(config_from_json(j), SchemaError);
  EXPECT_THROW(config_from_json(json::array()), SchemaError);
  EXPECT_THROW(parse_config(kSource / "scenarios" / "missing.json"), ConfigError);
}

TEST(ParseConfig, RoundTripShippedConfigs) {
  for (const auto& entry : fs::directory_iterator(kSource / "scenarios")) {
    if (entry.path().extension() != ".json") continue;
    const auto cfg = parse_config(entry.path());
    const auto again = config_from_json(json::parse(config_to_json(cfg).dump()));
    EXPECT_TRUE(again == cfg) << entry.path();
    EXPECT_EQ(config_to_json(again), config_to_json(cfg)) << entry.path();
  }
}

TEST(RunScenario, DecayMeanInCsv) {
  const auto dir = scratch("decay");
  auto cfg = parse_config(kSource / "scenarios" / "decay.json");
  cfg.output_dir = dir.string();
  const auto res = run_scenario(cfg);
  EXPECT_EQ(res.exit_code, 0);
  std::ifstream in(dir / "pce_moments.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "time,output,mean,variance");
  bool found = false;
  while (std::getline(in, line)) {
    std::istringstream row(line);
    std::string t, out, m, v;
    std::getline(row, t, ',');
    std::getline(row, out, ',');
    std::getline(row, m, ',');
    std::getline(row, v, ',');
    if (std::stod(t) == 1.0) {
      found = true;
      EXPECT_NEAR(std::stod(m), 0.3834005, 1e-6);
      EXPECT_NEAR(std::stod(v), 0.0120497, 1e-5);
    }
  }
  EXPECT_TRUE(found);
  for (const char* f : {"mc_moments.csv", "pce_coefficients.csv", "basis.json", "tensor.json", "summary.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
}

TEST(RunScenario, DefaultsEchoedInSummary) {
  const auto dir = scratch("defaults");
  auto j = minimal_propagate();
  j["output_dir"] = dir.string();
  j["mc_samples"] = 2000;
  const auto res = run_scenario(config_from_json(j));
  const auto summary = json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(summary, res.summary);
  EXPECT_EQ(summary["defaults"]["/degree"], 3);
  EXPECT_EQ(summary["defaults"]["/seed"], 0);
  EXPECT_FALSE(summary["defaults"].contains("/mc_samples"));
}

TEST(RunScenario, CompareReportsDeviations) {
  const auto dir = scratch("compare");
  auto cfg = parse_config(kSource / "scenarios" / "compare_linear.json");
  cfg.output_dir = dir.string();
  cfg.mc_samples = 20000;
  const auto res = run_scenario(cfg);
  EXPECT_EQ(res.exit_code, 0);
  std::ifstream in(dir / "compare.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header,
            "time,output,pce_mean,mc_mean,abs_dev_mean,stderr_mean,pce_variance,mc_variance,abs_dev_variance,"
            "stderr_variance");
  EXPECT_LE(res.summary["max_mean_deviation_in_stderr"].get<double>(), 4.0);
  EXPECT_GE(res.summary["max_abs_mean_deviation"].get<double>(), 0.0);
}

TEST(RunScenario, SmpcTestbedMeetsChanceLevel) {
  const auto dir = scratch("smpc");
  auto cfg = parse_config(kSource / "scenarios" / "smpc_testbed.json");
  cfg.output_dir = dir.string();
  const auto res = run_scenario(cfg);
  EXPECT_EQ(res.exit_code, 0);
  const auto summary = json::parse(slurp(dir / "summary.json"));
  const double p = 1.0 - cfg.chance.beta;
  const double stderr_binom = std::sqrt(p * (1.0 - p) / cfg.smpc.runs);
  EXPECT_LE(summary["violation_rate"].get<double>(), p + 3.0 * stderr_binom);
  EXPECT_NEAR(summary["violation_bound"].get<double>(), p + 3.0 * stderr_binom, 1e-12);
  EXPECT_TRUE(fs::exists(dir / "trace.csv"));
}

TEST(RunScenario, InfeasibleStartExitsTwo) {
  const auto dir = scratch("infeasible");
  auto j = load("smpc_testbed.json");
  j["system"]["x0"] = {-2.0, 3.0};
  j["smpc"]["runs"] = 3;
  j["output_dir"] = dir.string();
  const auto res = run_scenario(config_from_json(j));
  EXPECT_EQ(res.exit_code, 2);
  EXPECT_EQ(res.summary["solver"]["infeasible_starts"], 3);
}

TEST(RunScenario, EstimateTrace) {
  const auto dir = scratch("estimate");
  auto cfg = parse_config(kSource / "scenarios" / "estimate.json");
  cfg.output_dir = dir.string();
  const auto res = run_scenario(cfg);
  EXPECT_EQ(res.exit_code, 0);
  std::ifstream in(dir / "filter_trace.csv");
  std::string line;
  int rows = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "step,y,posterior_mean,posterior_variance,ess");
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, cfg.estimate.steps + 1);
  EXPECT_NEAR(res.summary["posterior_mean"].get<double>(), *cfg.estimate.theta_true, 0.1);
  EXPECT_TRUE(fs::exists(dir / "posterior.json"));
}

TEST(RunScenario, ByteIdenticalAcrossWorkerCounts) {
  std::vector<json> configs = {load("decay.json"), load("compare_linear.json"), load("estimate.json"),
                               load("smpc_testbed.json")};
  configs[0]["mc_samples"] = 20000;
  configs[1]["mc_samples"] = 20000;
  configs[3]["smpc"]["runs"] = 24;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    std::vector<fs::path> dirs;
    for (const char* threads : {"1", "4", "4"}) {
      ThreadsEnv env(threads);
      const auto dir = scratch("det" + std::to_string(c) + "_" + std::to_string(dirs.size()));
      auto j = configs[c];
      j["output_dir"] = dir.string();
      run_scenario(config_from_json(j));
      dirs.push_back(dir);
    }
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(dirs[0])) {
      ++files;
      const auto name = entry.path().filename();
      EXPECT_EQ(slurp(dirs[0] / name), slurp(dirs[1] / name)) << name;
      EXPECT_EQ(slurp(dirs[0] / name), slurp(dirs[2] / name)) << name;
    }
    EXPECT_GT(files, 1u);
  }
}

TEST(Cli, ExitCodesAndErrorStream) {
  const auto dir = scratch("cli");
  auto ok = run_cli("propagate --config \"" + (kSource / "scenarios" / "decay.json").string() + "\" --out \"" +
                        (dir / "decay").string() + "\" --mc-samples 1000 --quiet",
                    dir);
  EXPECT_EQ(ok.code, 0) << ok.err;
  EXPECT_TRUE(fs::exists(dir / "decay" / "pce_moments.csv"));
  EXPECT_EQ(json::parse(slurp(dir / "decay" / "summary.json"))["mc_samples"], 1000);

  auto j = load("smpc_testbed.json");
  j["chance"]["beta"] = 1.3;
  const auto bad = write_config(dir, "bad.json", j);
  auto r = run_cli("smpc --config \"" + bad.string() + "\"", dir);
  EXPECT_EQ(r.code, 1);
  const auto err = json::parse(r.err);
  EXPECT_EQ(err["error"], "schema");
  EXPECT_EQ(err["violations"][0]["pointer"], "/chance/beta");

  r = run_cli("propagate --config \"" + (dir / "nope.json").string() + "\"", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(json::parse(r.err).contains("error"));

  r = run_cli("estimate --config \"" + (kSource / "scenarios" / "decay.json").string() + "\"", dir);
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(json::parse(r.err).contains("message"));

  r = run_cli("smpc", dir);
  EXPECT_EQ(r.code, 1);

  j = load("smpc_testbed.json");
  j["system"]["x0"] = {-2.0, 3.0};
  j["smpc"]["runs"] = 2;
  const auto infeasible = write_config(dir, "infeasible.json", j);
  r = run_cli("smpc --config \"" + infeasible.string() + "\" --out \"" + (dir / "inf").string() + "\" --quiet", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(fs::exists(dir / "inf" / "trace.csv"));
}
