#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gamfit/config.hpp"
#include "gamfit/report.hpp"
#include "gamfit/rng.hpp"

#ifndef GAMFIT_CLI_PATH
#error "GAMFIT_CLI_PATH must be defined"
#endif

using namespace gamfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gamfit_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int counter() {
    static int c = 0;
    return ++c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args, const std::string& log_path) {
  const std::string cmd = std::string(GAMFIT_CLI_PATH) + " " + args + " > " + log_path +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

void write_linear_csv(const std::string& path, int n, unsigned seed, double slope,
                      double noise_sd, double* slope_se_out = nullptr) {
  Rng rng(seed);
  DataTable t;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.uniform();
    y[i] = 0.5 + slope * x[i] + noise_sd * rng.normal();
  }
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  write_csv(path, t);
  if (slope_se_out) {
    const double ssx = (x.array() - x.mean()).square().sum();
    *slope_se_out = noise_sd / std::sqrt(ssx);
  }
}

std::string fit_config(const std::string& data, const std::string& output,
                       const std::string& family = "gaussian",
                       const std::string& criterion = "gcv",
                       const std::string& extra = "") {
  std::ostringstream os;
  os << "{\n"
     << "  \"data\": \"" << data << "\",\n"
     << "  \"response\": \"y\",\n"
     << "  \"family\": \"" << family << "\",\n"
     << "  \"criterion\": \"" << criterion << "\",\n"
     << "  \"terms\": [{\"type\": \"spline\", \"covariates\": [\"x\"], \"dim\": 10}],\n"
     << "  \"output\": \"" << output << "\"" << (extra.empty() ? "" : ",\n  " + extra) << "\n"
     << "}\n";
  return os.str();
}

}  // namespace

TEST_CASE("fit on a linear truth: edf near 1 and slope recovered") {
  TempDir dir;
  double slope_se = 0.0;
  write_linear_csv(dir.file("train.csv"), 300, 71, 2.0, 0.25, &slope_se);
  write_file(dir.file("cfg.json"), fit_config(dir.file("train.csv"), dir.file("model.json")));
  const int rc = run_cli("fit --config " + dir.file("cfg.json") + " --grid-dir " +
                             dir.path.string(),
                         dir.file("fit.log"));
  CHECK(rc == exit_ok);
  const FitReport report = load_report(dir.file("model.json"));
  CHECK(report.converged);
  CHECK(report.edf_terms[0] == doctest::Approx(1.0).epsilon(0.3));

  // recover the slope from predictions on the training data
  const int rc2 = run_cli("predict --model " + dir.file("model.json") + " --data " +
                              dir.file("train.csv") + " --output " + dir.file("pred.csv"),
                          dir.file("pred.log"));
  CHECK(rc2 == exit_ok);
  const DataTable pred = read_csv(dir.file("pred.csv"));
  const DataTable train = read_csv(dir.file("train.csv"));
  const Eigen::VectorXd x = train.numeric("x");
  const Eigen::VectorXd mu = pred.numeric("mu");
  const double ssx = (x.array() - x.mean()).square().sum();
  const double slope_hat = ((x.array() - x.mean()) * (mu.array() - mu.mean())).sum() / ssx;
  CHECK(std::abs(slope_hat - 2.0) < 2.0 * slope_se);
}

TEST_CASE("prediction on the training data reproduces the fitted means") {
  TempDir dir;
  write_linear_csv(dir.file("train.csv"), 150, 73, 1.0, 0.4);
  write_file(dir.file("cfg.json"), fit_config(dir.file("train.csv"), dir.file("model.json")));
  REQUIRE(run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log")) == exit_ok);
  REQUIRE(run_cli("predict --model " + dir.file("model.json") + " --data " +
                      dir.file("train.csv") + " --output " + dir.file("pred.csv"),
                  dir.file("pred.log")) == exit_ok);

  // independent reconstruction straight from the assembly path
  FitConfig cfg = load_fit_config(dir.file("cfg.json"));
  DataTable table;
  const AssembledModel model = model_from_config(cfg, table);
  const FitReport report = load_report(dir.file("model.json"));
  const Eigen::VectorXd eta = model.X * report.beta + model.offset;
  const DataTable pred = read_csv(dir.file("pred.csv"));
  CHECK((pred.numeric("eta") - eta).cwiseAbs().maxCoeff() < 1e-8);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    CHECK(pred.numeric("extrapolated")[i] == 0.0);
  }
}

TEST_CASE("constant covariates produce a constant prediction") {
  TempDir dir;
  write_linear_csv(dir.file("train.csv"), 120, 77, 1.5, 0.3);
  write_file(dir.file("cfg.json"), fit_config(dir.file("train.csv"), dir.file("model.json")));
  REQUIRE(run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log")) == exit_ok);
  DataTable constant;
  constant.add_numeric("x", Eigen::VectorXd::Constant(5, 0.4));
  write_csv(dir.file("const.csv"), constant);
  REQUIRE(run_cli("predict --model " + dir.file("model.json") + " --data " +
                      dir.file("const.csv") + " --output " + dir.file("pred.csv"),
                  dir.file("pred.log")) == exit_ok);
  const DataTable pred = read_csv(dir.file("pred.csv"));
  const Eigen::VectorXd mu = pred.numeric("mu");
  CHECK((mu.array() - mu[0]).abs().maxCoeff() < 1e-12);
}

TEST_CASE("identity-link predictions shift with a constant offset") {
  TempDir dir;
  // training data with an offset column
  Rng rng(79);
  DataTable t;
  Eigen::VectorXd x(200), off(200), y(200);
  for (int i = 0; i < 200; ++i) {
    x[i] = rng.uniform();
    off[i] = 0.3;
    y[i] = off[i] + std::sin(2.0 * M_PI * x[i]) + 0.3 * rng.normal();
  }
  t.add_numeric("x", x);
  t.add_numeric("off", off);
  t.add_numeric("y", y);
  write_csv(dir.file("train.csv"), t);
  write_file(dir.file("cfg.json"),
             fit_config(dir.file("train.csv"), dir.file("model.json"), "gaussian", "gcv",
                        "\"offset\": \"off\""));
  REQUIRE(run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log")) == exit_ok);

  DataTable shifted = t;
  write_csv(dir.file("base.csv"), t);
  DataTable t2;
  t2.add_numeric("x", x);
  t2.add_numeric("off", (off.array() + 1.0).matrix());
  t2.add_numeric("y", y);
  write_csv(dir.file("shift.csv"), t2);
  REQUIRE(run_cli("predict --model " + dir.file("model.json") + " --data " +
                      dir.file("base.csv") + " --output " + dir.file("p0.csv"),
                  dir.file("p0.log")) == exit_ok);
  REQUIRE(run_cli("predict --model " + dir.file("model.json") + " --data " +
                      dir.file("shift.csv") + " --output " + dir.file("p1.csv"),
                  dir.file("p1.log")) == exit_ok);
  const Eigen::VectorXd e0 = read_csv(dir.file("p0.csv")).numeric("eta");
  const Eigen::VectorXd e1 = read_csv(dir.file("p1.csv")).numeric("eta");
  CHECK(((e1 - e0).array() - 1.0).abs().maxCoeff() < 1e-10);
}

TEST_CASE("bad column name exits with the data error code and names it") {
  TempDir dir;
  write_linear_csv(dir.file("train.csv"), 80, 81, 1.0, 0.3);
  std::string cfg = fit_config(dir.file("train.csv"), dir.file("model.json"));
  const auto pos = cfg.find("\"x\"");
  cfg.replace(pos, 3, "\"nope\"");
  write_file(dir.file("cfg.json"), cfg);
  const int rc = run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log"));
  CHECK(rc == exit_data_error);
  CHECK(slurp(dir.file("fit.log")).find("nope") != std::string::npos);
}

TEST_CASE("config errors exit with the config error code") {
  TempDir dir;
  write_file(dir.file("broken.json"), "{ not json");
  CHECK(run_cli("fit --config " + dir.file("broken.json"), dir.file("fit.log")) ==
        exit_config_error);
  write_file(dir.file("noterm.json"),
             "{\"data\": \"x.csv\", \"response\": \"y\", \"terms\": []}");
  CHECK(run_cli("fit --config " + dir.file("noterm.json"), dir.file("fit2.log")) ==
        exit_config_error);
}

TEST_CASE("gacv report value is internally consistent") {
  TempDir dir;
  Rng rng(83);
  DataTable t;
  Eigen::VectorXd x(250), y(250);
  for (int i = 0; i < 250; ++i) {
    x[i] = rng.uniform();
    const double p = 1.0 / (1.0 + std::exp(-2.5 * std::sin(2.0 * M_PI * x[i])));
    y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  t.add_numeric("x", x);
  t.add_numeric("y", y);
  write_csv(dir.file("train.csv"), t);
  write_file(dir.file("cfg.json"),
             fit_config(dir.file("train.csv"), dir.file("model.json"), "binomial", "gacv"));
  REQUIRE(run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log")) == exit_ok);
  const FitReport r = load_report(dir.file("model.json"));
  const double n = static_cast<double>(r.n);
  const double recomputed =
      r.deviance / n + 2.0 * r.gamma * r.edf_total * r.pearson / (n * (n - r.edf_total));
  CHECK(std::abs(r.criterion_value - recomputed) < 1e-10 * (1.0 + std::abs(recomputed)));
}

TEST_CASE("report round-trips through its serialization") {
  TempDir dir;
  write_linear_csv(dir.file("train.csv"), 100, 89, -1.0, 0.5);
  write_file(dir.file("cfg.json"), fit_config(dir.file("train.csv"), dir.file("model.json")));
  REQUIRE(run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log")) == exit_ok);
  const std::string text = slurp(dir.file("model.json"));
  const FitReport r = report_from_json(text, "model.json");
  const std::string again = report_to_json(r);
  CHECK(text == again);
}

TEST_CASE("simulate subcommand") {
  TempDir dir;
  SUBCASE("unknown scenario is a usage error") {
    CHECK(run_cli("simulate nonsense --replicates 1", dir.file("sim.log")) ==
          exit_config_error);
  }
  SUBCASE("a small study runs clean") {
    const int rc = run_cli("simulate bench41 --case poisson --replicates 2 --seed 3 --n 200" +
                               std::string(" --out-dir ") + dir.path.string(),
                           dir.file("sim.log"));
    CHECK(rc == exit_ok);
    const DataTable t = read_csv(dir.file("study_bench41_poisson.csv"));
    CHECK(t.rows() == 2);
    const std::string log = slurp(dir.file("sim.log"));
    CHECK(log.find("failures: 0") != std::string::npos);
  }
}

TEST_CASE("check-derivs") {
  TempDir dir;
  write_linear_csv(dir.file("train.csv"), 150, 91, 1.0, 0.4);
  write_file(dir.file("cfg.json"), fit_config(dir.file("train.csv"), dir.file("model.json")));
  SUBCASE("gaussian toy passes comfortably") {
    const int rc = run_cli("check-derivs --config " + dir.file("cfg.json") + " --rho 0.5",
                           dir.file("chk.log"));
    CHECK(rc == exit_ok);
    CHECK(slurp(dir.file("chk.log")).find("PASS") != std::string::npos);
  }
  SUBCASE("a zero threshold fails deliberately") {
    const int rc = run_cli("check-derivs --config " + dir.file("cfg.json") +
                               " --rho 0.5 --threshold 0",
                           dir.file("chk.log"));
    CHECK(rc == exit_check_failure);
    CHECK(slurp(dir.file("chk.log")).find("FAIL") != std::string::npos);
  }
  SUBCASE("wrong rho length is a config error") {
    CHECK(run_cli("check-derivs --config " + dir.file("cfg.json") + " --rho 0.5,1.0",
                  dir.file("chk.log")) == exit_config_error);
  }
}

TEST_CASE("non-convergence exit code") {
  TempDir dir;
  Rng rng(93);
  DataTable t;
  Eigen::VectorXd x1(200), x2(200), y(200);
  for (int i = 0; i < 200; ++i) {
    x1[i] = rng.uniform();
    x2[i] = rng.uniform();
    const double p = 1.0 / (1.0 + std::exp(-(2.0 * std::sin(2.0 * M_PI * x1[i]) - 1.0)));
    y[i] = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  t.add_numeric("x1", x1);
  t.add_numeric("x2", x2);
  t.add_numeric("y", y);
  write_csv(dir.file("train.csv"), t);
  write_file(dir.file("cfg.json"),
             "{\"data\": \"" + dir.file("train.csv") +
                 "\", \"response\": \"y\", \"family\": \"binomial\", \"criterion\": "
                 "\"aic\", \"terms\": [{\"type\": \"spline\", \"covariates\": [\"x1\"]}, "
                 "{\"type\": \"spline\", \"covariates\": [\"x2\"]}], \"output\": \"" +
                 dir.file("model.json") +
                 "\", \"optimizer\": {\"max_outer\": 1}}");
  const int rc = run_cli("fit --config " + dir.file("cfg.json"), dir.file("fit.log"));
  CHECK(rc == exit_no_convergence);
}

TEST_CASE("term grids are written and parse back") {
  TempDir dir;
  write_linear_csv(dir.file("train.csv"), 150, 95, 1.0, 0.4);
  write_file(dir.file("cfg.json"), fit_config(dir.file("train.csv"), dir.file("model.json")));
  REQUIRE(run_cli("fit --config " + dir.file("cfg.json") + " --grid-dir " + dir.path.string(),
                  dir.file("fit.log")) == exit_ok);
  const DataTable grid = read_csv(dir.file("term_0_s_x_.csv"));
  CHECK(grid.rows() == 200);
  CHECK(grid.has("fit"));
  CHECK(grid.has("se"));
  CHECK((grid.numeric("se").array() > 0.0).all());
}
