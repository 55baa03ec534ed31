#include "binfer/harness/config.hpp"

#include <cstdint>
#include <set>
#include <stdexcept>

#include "config_detail.hpp"

namespace binfer::harness {

namespace detail {

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw std::invalid_argument(path + ": expected an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw std::invalid_argument("unknown key '" + item.key() + "' in " + path);
  }
}

namespace {

double require_number(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw std::invalid_argument(path + "." + key + ": number required");
  }
  return j.at(key).get<double>();
}

std::size_t require_count(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned()) {
    throw std::invalid_argument(path + "." + key + ": non-negative integer required");
  }
  return j.at(key).get<std::size_t>();
}

std::string require_string(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw std::invalid_argument(path + "." + key + ": string required");
  }
  return j.at(key).get<std::string>();
}

std::vector<double> number_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw std::invalid_argument(path + ": array of numbers required");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw std::invalid_argument(path + ": array of numbers required");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

nets::Architecture parse_arch(const json& j, const std::string& path) {
  expect_keys(j, path, {"layer_sizes", "activation"});
  nets::Architecture arch;
  if (!j.contains("layer_sizes") || !j.at("layer_sizes").is_array()) {
    throw std::invalid_argument(path + ".layer_sizes: array required");
  }
  for (const auto& v : j.at("layer_sizes")) {
    if (!v.is_number_unsigned()) {
      throw std::invalid_argument(path + ".layer_sizes: positive integers required");
    }
    arch.layer_sizes.push_back(v.get<std::size_t>());
  }
  std::string act = j.value("activation", "relu");
  if (act == "relu") {
    arch.activation = nets::Activation::kRelu;
  } else if (act == "tanh") {
    arch.activation = nets::Activation::kTanh;
  } else {
    throw std::invalid_argument(path + ".activation: 'relu' or 'tanh'");
  }
  arch.validate();
  return arch;
}

nets::ModelContext parse_model(const json& j, const std::string& path) {
  expect_keys(j, path, {"arch", "likelihood", "prior"});
  if (!j.contains("arch")) throw std::invalid_argument(path + ".arch: required");
  nets::ModelContext model;
  model.arch = parse_arch(j.at("arch"), path + ".arch");

  if (!j.contains("likelihood")) throw std::invalid_argument(path + ".likelihood: required");
  const json& lik = j.at("likelihood");
  expect_keys(lik, path + ".likelihood", {"kind", "sigma", "classes"});
  std::string kind = require_string(lik, path + ".likelihood", "kind");
  if (kind == "gaussian") {
    model.likelihood = nets::LikelihoodConfig::gaussian(
        require_number(lik, path + ".likelihood", "sigma"));
  } else if (kind == "categorical") {
    model.likelihood = nets::LikelihoodConfig::categorical(
        require_count(lik, path + ".likelihood", "classes"));
  } else {
    throw std::invalid_argument(path + ".likelihood.kind: 'gaussian' or 'categorical'");
  }
  model.likelihood.validate(model.arch);

  if (!j.contains("prior")) throw std::invalid_argument(path + ".prior: required");
  expect_keys(j.at("prior"), path + ".prior", {"tau"});
  model.prior.tau = require_number(j.at("prior"), path + ".prior", "tau");
  model.prior.validate();
  return model;
}

DatasetSpec parse_dataset(const json& j, const std::string& path) {
  std::string kind = require_string(j, path, "kind");
  DatasetSpec spec;
  if (j.contains("seed")) spec.seed = require_count(j, path, "seed");

  if (kind == "regression_1d") {
    expect_keys(j, path, {"kind", "seed", "n", "noise"});
    Regression1dSpec s;
    s.n = require_count(j, path, "n");
    s.noise = require_number(j, path, "noise");
    spec.kind = s;
  } else if (kind == "two_moons") {
    expect_keys(j, path, {"kind", "seed", "n", "noise"});
    TwoMoonsSpec s;
    s.n = require_count(j, path, "n");
    s.noise = require_number(j, path, "noise");
    spec.kind = s;
  } else if (kind == "gaussian_mixture_1d") {
    expect_keys(j, path, {"kind", "seed", "n", "weights", "means", "stds"});
    GaussianMixture1dSpec s;
    s.n = require_count(j, path, "n");
    s.weights = number_list(j.at("weights"), path + ".weights");
    s.means = number_list(j.at("means"), path + ".means");
    s.stds = number_list(j.at("stds"), path + ".stds");
    spec.kind = s;
  } else if (kind == "correlated_gaussian_2d") {
    expect_keys(j, path, {"kind", "seed", "n", "mean", "cov"});
    CorrelatedGaussian2dSpec s;
    if (j.contains("n")) s.n = require_count(j, path, "n");
    if (j.contains("mean")) s.mean = number_list(j.at("mean"), path + ".mean");
    if (j.contains("cov")) {
      const json& cov = j.at("cov");
      if (!cov.is_array() || cov.size() != 2) {
        throw std::invalid_argument(path + ".cov: 2x2 matrix required");
      }
      std::vector<double> r0 = number_list(cov.at(0), path + ".cov[0]");
      std::vector<double> r1 = number_list(cov.at(1), path + ".cov[1]");
      if (r0.size() != 2 || r1.size() != 2) {
        throw std::invalid_argument(path + ".cov: 2x2 matrix required");
      }
      s.cov = Tensor::matrix(2, 2, {r0[0], r0[1], r1[0], r1[1]});
    }
    spec.kind = s;
  } else if (kind == "blr") {
    expect_keys(j, path, {"kind", "seed", "n", "dim", "true_w", "sigma", "tau"});
    BlrSpec s;
    s.n = require_count(j, path, "n");
    s.dim = require_count(j, path, "dim");
    s.true_w = number_list(j.at("true_w"), path + ".true_w");
    s.sigma = require_number(j, path, "sigma");
    s.tau = require_number(j, path, "tau");
    spec.kind = s;
  } else {
    throw std::invalid_argument(path + ".kind: unknown dataset kind '" + kind + "'");
  }
  return spec;
}

namespace {

void validate_schedule(const json& j, const std::string& path) {
  expect_keys(j, path, {"kind", "alpha0", "a", "b", "gamma", "cycles"});
  std::string kind = require_string(j, path, "kind");
  if (kind == "constant" || kind == "cyclical") {
    require_number(j, path, "alpha0");
    if (kind == "cyclical") require_count(j, path, "cycles");
  } else if (kind == "polynomial") {
    require_number(j, path, "a");
    require_number(j, path, "gamma");
  } else {
    throw std::invalid_argument(path + ".kind: 'constant', 'polynomial' or 'cyclical'");
  }
}

void validate_method(const std::string& task, const json& m, const std::string& path) {
  if (task == "sgld" || task == "sghmc") {
    expect_keys(m, path,
                {"steps", "batch_size", "schedule", "burn_in", "thin", "collect_threshold",
                 "friction", "mass", "init_scale"});
    require_count(m, path, "steps");
    if (!m.contains("schedule")) throw std::invalid_argument(path + ".schedule: required");
    validate_schedule(m.at("schedule"), path + ".schedule");
  } else if (task == "vi") {
    expect_keys(m, path,
                {"objective", "alpha", "mc_samples", "steps", "step_size", "batch_size",
                 "init_sigma"});
    std::string obj = require_string(m, path, "objective");
    if (obj != "elbo" && obj != "alpha") {
      throw std::invalid_argument(path + ".objective: 'elbo' or 'alpha'");
    }
    if (obj == "alpha") require_number(m, path, "alpha");
    require_count(m, path, "steps");
    require_number(m, path, "step_size");
  } else if (task == "predict") {
    expect_keys(m, path, {"posterior", "points"});
    if (!m.contains("posterior")) throw std::invalid_argument(path + ".posterior: required");
    const json& p = m.at("posterior");
    expect_keys(p, path + ".posterior", {"kind", "path", "draws"});
    std::string kind = require_string(p, path + ".posterior", "kind");
    if (kind != "chain" && kind != "variational") {
      throw std::invalid_argument(path + ".posterior.kind: 'chain' or 'variational'");
    }
    require_string(p, path + ".posterior", "path");
    if (!m.contains("points") || !m.at("points").is_array()) {
      throw std::invalid_argument(path + ".points: array of rows required");
    }
  } else if (task == "ebm") {
    expect_keys(m, path,
                {"arch", "steps", "batch_size", "langevin_steps", "langevin_alpha", "init",
                 "noise_scale", "reinit_prob", "buffer_capacity", "box", "optimizer",
                 "learning_rate", "grid_points"});
    if (!m.contains("arch")) throw std::invalid_argument(path + ".arch: required");
    parse_arch(m.at("arch"), path + ".arch");
    require_count(m, path, "steps");
  } else if (task == "score") {
    expect_keys(m, path,
                {"arch", "mode", "ladder", "sde", "steps", "batch_size", "learning_rate",
                 "optimizer", "grid_points"});
    if (!m.contains("arch")) throw std::invalid_argument(path + ".arch: required");
    parse_arch(m.at("arch"), path + ".arch");
    std::string mode = require_string(m, path, "mode");
    if (mode != "ncsn" && mode != "vp") {
      throw std::invalid_argument(path + ".mode: 'ncsn' or 'vp'");
    }
    require_count(m, path, "steps");
  } else if (task == "diffuse") {
    expect_keys(m, path, {"model_dir", "sampler", "n_samples"});
    require_string(m, path, "model_dir");
    require_count(m, path, "n_samples");
    if (!m.contains("sampler")) throw std::invalid_argument(path + ".sampler: required");
    const json& s = m.at("sampler");
    expect_keys(s, path + ".sampler",
                {"kind", "n_steps", "corrector_steps", "snr", "steps_per_scale", "eps0"});
    std::string kind = require_string(s, path + ".sampler", "kind");
    if (kind != "pc" && kind != "annealed") {
      throw std::invalid_argument(path + ".sampler.kind: 'pc' or 'annealed'");
    }
  } else if (task == "vae") {
    expect_keys(m, path,
                {"encoder_arch", "decoder_arch", "d_z", "lik_sigma", "objective",
                 "iwae_samples", "steps", "batch_size", "learning_rate", "optimizer",
                 "refine"});
    if (!m.contains("encoder_arch") || !m.contains("decoder_arch")) {
      throw std::invalid_argument(path + ": encoder_arch and decoder_arch required");
    }
    parse_arch(m.at("encoder_arch"), path + ".encoder_arch");
    parse_arch(m.at("decoder_arch"), path + ".decoder_arch");
    require_count(m, path, "d_z");
    require_count(m, path, "steps");
    std::string obj = require_string(m, path, "objective");
    if (obj != "elbo" && obj != "iwae") {
      throw std::invalid_argument(path + ".objective: 'elbo' or 'iwae'");
    }
    if (m.contains("refine")) {
      expect_keys(m.at("refine"), path + ".refine", {"steps", "step_size"});
    }
  } else if (task == "gradcheck") {
    expect_keys(m, path, {"instances", "tolerance"});
  } else if (task == "oracle") {
    expect_keys(m, path, {});
  } else {
    throw std::invalid_argument("task: unknown task '" + task + "'");
  }
}

}  // namespace

ParsedExperiment parse_experiment(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  expect_keys(j, "config", {"task", "seed", "out_dir", "model", "data", "method"});

  ParsedExperiment exp;
  exp.raw_text = text;
  exp.task = require_string(j, "config", "task");
  if (j.contains("seed")) exp.seed = require_count(j, "config", "seed");
  if (j.contains("out_dir")) exp.out_dir = require_string(j, "config", "out_dir");
  if (j.contains("model")) exp.model = parse_model(j.at("model"), "model");
  if (j.contains("data")) exp.data = parse_dataset(j.at("data"), "data");
  exp.method = j.value("method", json::object());
  validate_method(exp.task, exp.method, "method");

  const bool needs_model = exp.task == "sgld" || exp.task == "sghmc" || exp.task == "predict";
  if (needs_model && !exp.model) {
    throw std::invalid_argument("task '" + exp.task + "' requires a model section");
  }
  const bool needs_data = exp.task == "sgld" || exp.task == "sghmc" || exp.task == "vi" ||
                          exp.task == "ebm" || exp.task == "score" || exp.task == "vae";
  if (needs_data && !exp.data) {
    throw std::invalid_argument("task '" + exp.task + "' requires a data section");
  }
  return exp;
}

}  // namespace detail

std::string validate_experiment(const std::string& json_text) {
  return detail::parse_experiment(json_text).task;
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace binfer::harness
