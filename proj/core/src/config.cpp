#include "gamfit/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gamfit/errors.hpp"

namespace gamfit {

namespace {
using json = nlohmann::json;

TermSpec parse_term(const json& j, std::size_t index) {
  const std::string where = "terms[" + std::to_string(index) + "]";
  if (!j.is_object()) throw config_error(where + " must be an object");
  TermSpec spec;
  const std::string type = j.value("type", "spline");
  if (type == "spline") {
    spec.basis = BasisKind::bspline;
  } else if (type == "tensor") {
    spec.basis = BasisKind::tensor_bspline;
  } else if (type == "random_effect") {
    spec.basis = BasisKind::random_effect;
  } else {
    throw config_error(where + ": unknown term type '" + type + "'");
  }
  if (!j.contains("covariates") || !j["covariates"].is_array() || j["covariates"].empty()) {
    throw config_error(where + ": 'covariates' must be a non-empty array");
  }
  for (const auto& c : j["covariates"]) spec.covariates.push_back(c.get<std::string>());
  const std::size_t want = spec.basis == BasisKind::tensor_bspline ? 2u : 1u;
  if (spec.covariates.size() != want) {
    throw config_error(where + ": expected " + std::to_string(want) + " covariate(s)");
  }
  if (j.contains("dim")) {
    if (j["dim"].is_array()) {
      if (spec.basis != BasisKind::tensor_bspline || j["dim"].size() != 2) {
        throw config_error(where + ": 'dim' array is for tensor terms, length 2");
      }
      spec.dim = j["dim"][0].get<int>();
      spec.dim2 = j["dim"][1].get<int>();
    } else {
      spec.dim = j["dim"].get<int>();
    }
  }
  spec.shrinkage = j.value("shrinkage", false);
  spec.by = j.value("by", std::string());
  return spec;
}

}  // namespace

std::string default_link_name(const std::string& family) {
  if (family == "gaussian") return "identity";
  if (family == "binomial") return "logit";
  return "log";  // poisson, gamma, quasi
}

FitConfig parse_fit_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw config_error(origin + ": " + e.what());
  }
  if (!j.is_object()) throw config_error(origin + ": top level must be an object");
  FitConfig cfg;
  try {
    cfg.data_path = j.at("data").get<std::string>();
    cfg.response = j.at("response").get<std::string>();
  } catch (const json::exception& e) {
    throw config_error(origin + ": 'data' and 'response' are required (" + e.what() + ")");
  }
  cfg.family = j.value("family", std::string("gaussian"));
  cfg.link = j.value("link", std::string());
  if (j.contains("scale")) {
    cfg.has_scale = true;
    cfg.scale = j["scale"].get<double>();
    if (cfg.scale <= 0.0) throw config_error(origin + ": 'scale' must be positive");
  }
  if (!j.contains("terms") || !j["terms"].is_array() || j["terms"].empty()) {
    throw config_error(origin + ": 'terms' must be a non-empty array");
  }
  for (std::size_t i = 0; i < j["terms"].size(); ++i) {
    cfg.terms.push_back(parse_term(j["terms"][i], i));
  }
  cfg.offset_col = j.value("offset", std::string());
  cfg.weight_col = j.value("weights", std::string());
  cfg.criterion = j.value("criterion", std::string("gcv"));
  cfg.gamma = j.value("gamma", 1.0);
  if (cfg.gamma < 1.0) throw config_error(origin + ": 'gamma' must be >= 1");
  cfg.output = j.value("output", std::string("fit.json"));
  cfg.write_grids = j.value("grids", true);

  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    cfg.optimizer.grad_tol = o.value("grad_tol", cfg.optimizer.grad_tol);
    cfg.optimizer.max_outer = o.value("max_outer", cfg.optimizer.max_outer);
    cfg.optimizer.max_half = o.value("max_half", cfg.optimizer.max_half);
    cfg.optimizer.rho_bound = o.value("rho_bound", cfg.optimizer.rho_bound);
    cfg.optimizer.drop_threshold = o.value("drop_threshold", cfg.optimizer.drop_threshold);
    cfg.optimizer.pirls.max_iter = o.value("pirls_max_iter", cfg.optimizer.pirls.max_iter);
    cfg.optimizer.pirls.dev_tol = o.value("pirls_tol", cfg.optimizer.pirls.dev_tol);
    const std::string method = o.value("method", std::string("qr"));
    if (method == "qr") {
      cfg.optimizer.pirls.method = DecompMethod::qr;
    } else if (method == "cholesky") {
      cfg.optimizer.pirls.method = DecompMethod::cholesky;
    } else {
      throw config_error(origin + ": optimizer.method must be 'qr' or 'cholesky'");
    }
  }
  cfg.optimizer.criterion = criterion_from_name(cfg.criterion);
  cfg.optimizer.gamma = cfg.gamma;
  return cfg;
}

FitConfig load_fit_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_fit_config(ss.str(), path);
}

AssembledModel model_from_config(const FitConfig& cfg, DataTable& table_out) {
  table_out = read_csv(cfg.data_path);
  const Family family = family_from_name(
      cfg.family, cfg.has_scale ? std::optional<double>(cfg.scale) : std::nullopt);
  const Link link = link_from_name(cfg.link.empty() ? default_link_name(cfg.family) : cfg.link);
  return assemble(cfg.terms, table_out, family, link, cfg.response, cfg.offset_col,
                  cfg.weight_col);
}

}  // namespace gamfit
