#include "binfer/harness/runner.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "binfer/dlvm.hpp"
#include "binfer/ebm.hpp"
#include "binfer/harness/chain_io.hpp"
#include "binfer/harness/checks.hpp"
#include "binfer/harness/config.hpp"
#include "binfer/harness/datasets.hpp"
#include "binfer/harness/metrics.hpp"
#include "binfer/harness/oracles.hpp"
#include "binfer/predictive.hpp"
#include "binfer/score_diffusion.hpp"
#include "binfer/sgmcmc.hpp"
#include "binfer/vi.hpp"
#include "config_detail.hpp"

namespace binfer::harness {

namespace {

namespace fs = std::filesystem;
using detail::json;
using detail::ParsedExperiment;

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

json arch_to_json(const nets::Architecture& arch) {
  return json{{"layer_sizes", arch.layer_sizes},
              {"activation", arch.activation == nets::Activation::kRelu ? "relu" : "tanh"}};
}

// ---------------------------------------------------------------------------
// sgld / sghmc
// ---------------------------------------------------------------------------

sgmcmc::SamplerConfig parse_sampler(const ParsedExperiment& exp, bool sghmc) {
  const json& m = exp.method;
  sgmcmc::SamplerConfig cfg;
  cfg.kind = sghmc ? sgmcmc::SamplerConfig::Kind::kSghmc : sgmcmc::SamplerConfig::Kind::kSgld;
  cfg.steps = m.at("steps").get<std::size_t>();
  cfg.batch_size = m.value("batch_size", std::size_t{32});
  cfg.burn_in = m.value("burn_in", std::size_t{0});
  cfg.thin = m.value("thin", std::size_t{10});
  cfg.collect_threshold = m.value("collect_threshold", 0.1);
  cfg.sghmc.friction = m.value("friction", 1.0);
  cfg.sghmc.mass = m.value("mass", 1.0);

  const json& s = m.at("schedule");
  std::string kind = s.at("kind").get<std::string>();
  if (kind == "constant") {
    cfg.schedule = sgmcmc::Schedule::constant(s.at("alpha0").get<double>());
  } else if (kind == "polynomial") {
    cfg.schedule = sgmcmc::Schedule::polynomial(s.at("a").get<double>(), s.value("b", 0.0),
                                                s.at("gamma").get<double>());
  } else {
    cfg.schedule = sgmcmc::Schedule::cyclical(s.at("alpha0").get<double>(),
                                              s.at("cycles").get<std::size_t>(), cfg.steps);
  }
  return cfg;
}

void run_sampler_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out,
                      std::size_t n_chains, bool sghmc) {
  Dataset data = generate(*exp.data);
  if (!data.supervised) {
    throw std::invalid_argument("sgld/sghmc need a supervised dataset (regression_1d or blr)");
  }
  sgmcmc::SamplerConfig cfg = parse_sampler(exp, sghmc);
  const nets::ModelContext& model = *exp.model;
  double init_scale = exp.method.value("init_scale", 1.0);

  struct ChainRun {
    sgmcmc::Chain chain;
    MemoryMetrics metrics;
  };
  std::vector<ChainRun> runs(n_chains);

  auto run_one = [&](std::size_t c) {
    RngStream rng(seed, c);
    nets::ParamVector init = nets::init_params(model.arch, rng);
    for (double& v : init.values) v *= init_scale;
    runs[c].chain = sgmcmc::run_chain(model, data.batch, init, cfg, rng, &runs[c].metrics);
  };

  if (n_chains == 1) {
    run_one(0);
  } else {
    std::vector<std::thread> workers;
    workers.reserve(n_chains);
    for (std::size_t c = 0; c < n_chains; ++c) workers.emplace_back(run_one, c);
    for (auto& w : workers) w.join();
  }

  // Merge in stream order; per-chain energies interleave by step so the CSV
  // stays monotone.
  sgmcmc::Chain merged = runs[0].chain;
  for (std::size_t c = 1; c < n_chains; ++c) {
    const auto& ch = runs[c].chain;
    merged.samples.insert(merged.samples.end(), ch.samples.begin(), ch.samples.end());
    merged.step_indices.insert(merged.step_indices.end(), ch.step_indices.begin(),
                               ch.step_indices.end());
  }
  write_chain(join(out, "chain.bin"), merged);

  CsvMetrics csv(join(out, "metrics.csv"));
  if (n_chains == 1) {
    for (const MetricsRow& r : runs[0].metrics.rows()) {
      csv.append(r.step, r.split, r.metric, r.value);
    }
  } else {
    for (std::size_t t = 0; t < cfg.steps; ++t) {
      for (std::size_t c = 0; c < n_chains; ++c) {
        const MetricsRow& r = runs[c].metrics.rows()[t];
        csv.append(r.step, "chain" + std::to_string(c), r.metric, r.value);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// vi
// ---------------------------------------------------------------------------

void run_vi_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out) {
  const json& m = exp.method;
  vi::ViConfig cfg;
  std::string obj = m.at("objective").get<std::string>();
  cfg.objective = obj == "elbo" ? vi::ViConfig::Objective::kElbo : vi::ViConfig::Objective::kAlpha;
  if (m.contains("alpha")) cfg.alpha = m.at("alpha").get<double>();
  cfg.mc_samples = m.value("mc_samples", std::size_t{1});
  cfg.steps = m.at("steps").get<std::size_t>();
  cfg.step_size = m.at("step_size").get<double>();
  cfg.batch_size = m.value("batch_size", std::size_t{32});
  if (m.contains("init_sigma")) cfg.init_sigma = m.at("init_sigma").get<double>();

  vi::Target target;
  const auto* corr = std::get_if<CorrelatedGaussian2dSpec>(&exp.data->kind);
  if (corr) {
    // Explicit-density target: the config's Gaussian itself.
    target = gaussian_density_target(corr->mean, corr->cov);
  } else {
    Dataset data = generate(*exp.data);
    if (!data.supervised) {
      throw std::invalid_argument("vi needs a supervised dataset or correlated_gaussian_2d");
    }
    if (!exp.model) throw std::invalid_argument("vi on a dataset requires a model section");
    target = vi::DatasetTarget{*exp.model, data.batch};
  }

  RngStream rng(seed, 0);
  CsvMetrics csv(join(out, "metrics.csv"));
  vi::FitResult fit = vi::fit_vi(cfg, target, rng, &csv);

  json q{{"family", "mean_field"}, {"mu", fit.q.mu}, {"rho", fit.q.rho}};
  write_text(join(out, "q.json"), q.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

void run_predict_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out) {
  const json& m = exp.method;
  const json& p = m.at("posterior");
  const nets::ModelContext& model = *exp.model;

  sgmcmc::Chain chain;
  vi::MeanFieldGaussian q;
  predictive::PosteriorHandle handle;
  if (p.at("kind").get<std::string>() == "chain") {
    chain = read_chain(p.at("path").get<std::string>());
    handle = predictive::PosteriorHandle::from_chain(chain);
  } else {
    std::ifstream in(p.at("path").get<std::string>());
    if (!in) throw std::runtime_error("cannot open posterior file");
    json qj = json::parse(in);
    if (qj.at("family").get<std::string>() != "mean_field") {
      throw std::invalid_argument("predict: only mean_field posterior files are supported");
    }
    q.mu = qj.at("mu").get<std::vector<double>>();
    q.rho = qj.at("rho").get<std::vector<double>>();
    handle = predictive::PosteriorHandle::from_variational(q, p.value("draws", std::size_t{256}));
  }
  if ((handle.chain ? chain.dim : q.dim()) != model.arch.param_count()) {
    throw std::invalid_argument("predict: posterior dimension does not match the model");
  }

  RngStream rng(seed, 0);
  std::ofstream csv(join(out, "predictions.csv"), std::ios::trunc);
  const bool classification =
      model.likelihood.kind == nets::LikelihoodConfig::Kind::kCategorical;
  if (classification) {
    csv << "x_index";
    for (std::size_t c = 0; c < model.arch.output_dim(); ++c) csv << ",p_" << c;
    csv << ",total,aleatoric,epistemic\n";
  } else {
    csv << "x_index";
    for (std::size_t j = 0; j < model.arch.output_dim(); ++j) csv << ",mean_" << j;
    for (std::size_t j = 0; j < model.arch.output_dim(); ++j) csv << ",var_" << j;
    csv << "\n";
  }

  std::size_t index = 0;
  for (const json& row : m.at("points")) {
    std::vector<double> pt = row.get<std::vector<double>>();
    Tensor x = Tensor::from(pt, {1, pt.size()});
    predictive::PredictiveSummary s = predictive::posterior_predictive(handle, model, x, &rng);
    csv << index++;
    if (classification) {
      for (double v : s.probs) csv << ',' << format_double(v);
      csv << ',' << format_double(s.uncertainty.total) << ','
          << format_double(s.uncertainty.aleatoric) << ','
          << format_double(s.uncertainty.epistemic);
    } else {
      for (double v : s.mean) csv << ',' << format_double(v);
      for (double v : s.variance) csv << ',' << format_double(v);
    }
    csv << '\n';
  }
}

// ---------------------------------------------------------------------------
// ebm
// ---------------------------------------------------------------------------

void run_ebm_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out) {
  const json& m = exp.method;
  Dataset data = generate(*exp.data);
  if (data.supervised) throw std::invalid_argument("ebm needs an unsupervised dataset");

  ebm::TrainConfig cfg;
  cfg.arch = detail::parse_arch(m.at("arch"), "method.arch");
  cfg.steps = m.at("steps").get<std::size_t>();
  cfg.batch_size = m.value("batch_size", std::size_t{64});
  cfg.langevin_steps = m.value("langevin_steps", std::size_t{60});
  cfg.langevin_alpha = m.value("langevin_alpha", 1e-2);
  cfg.buffer_capacity = m.value("buffer_capacity", std::size_t{1024});
  cfg.learning_rate = m.value("learning_rate", 1e-3);
  cfg.optimizer = optim::parse_kind(m.value("optimizer", "adam"));
  std::string init = m.value("init", "data");
  if (init == "data") {
    cfg.init.kind = ebm::InitStrategy::Kind::kData;
  } else if (init == "noise_gaussian") {
    cfg.init.kind = ebm::InitStrategy::Kind::kNoiseGaussian;
  } else if (init == "noise_uniform") {
    cfg.init.kind = ebm::InitStrategy::Kind::kNoiseUniform;
  } else if (init == "persistent") {
    cfg.init.kind = ebm::InitStrategy::Kind::kPersistent;
  } else {
    throw std::invalid_argument("method.init: unknown strategy '" + init + "'");
  }
  cfg.init.noise_scale = m.value("noise_scale", 1.0);
  cfg.init.reinit_prob = m.value("reinit_prob", 0.05);
  if (m.contains("box")) {
    detail::expect_keys(m.at("box"), "method.box", {"lo", "hi"});
    cfg.box.lo = m.at("box").at("lo").get<std::vector<double>>();
    cfg.box.hi = m.at("box").at("hi").get<std::vector<double>>();
  }

  RngStream rng(seed, 0);
  CsvMetrics csv(join(out, "metrics.csv"));
  ebm::TrainResult result = ebm::train_ebm(cfg, data.points, rng, &csv);

  json model_json{{"kind", "ebm"}, {"arch", arch_to_json(cfg.arch)}};
  write_text(join(out, "model.json"), model_json.dump(2) + "\n");
  write_params(join(out, "params.bin"), result.model.params.values);

  // Grid-normalized density dump over the sampling box (or data range).
  ebm::Box box = cfg.box;
  if (!box.active() && data.points.cols() == 1) {
    double lo = data.points.at(0, 0), hi = lo;
    for (std::size_t i = 0; i < data.points.rows(); ++i) {
      lo = std::min(lo, data.points.at(i, 0));
      hi = std::max(hi, data.points.at(i, 0));
    }
    box.lo = {lo - 1.0};
    box.hi = {hi + 1.0};
  }
  if (box.active() && data.points.cols() <= 2) {
    GridDensity g = grid_normalize(result.model, box, m.value("grid_points", std::size_t{512}));
    std::ofstream density(join(out, "density.csv"), std::ios::trunc);
    for (std::size_t j = 0; j < data.points.cols(); ++j) density << "x_" << j << ',';
    density << "energy,density\n";
    for (std::size_t i = 0; i < g.density.size(); ++i) {
      for (std::size_t j = 0; j < g.points.cols(); ++j) {
        density << format_double(g.points.at(i, j)) << ',';
      }
      density << format_double(g.energy[i]) << ',' << format_double(g.density[i]) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// score / diffuse
// ---------------------------------------------------------------------------

void run_score_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out) {
  const json& m = exp.method;
  Dataset data = generate(*exp.data);
  if (data.supervised) throw std::invalid_argument("score needs an unsupervised dataset");

  score::TrainConfig cfg;
  cfg.arch = detail::parse_arch(m.at("arch"), "method.arch");
  cfg.steps = m.at("steps").get<std::size_t>();
  cfg.batch_size = m.value("batch_size", std::size_t{64});
  cfg.learning_rate = m.value("learning_rate", 1e-3);
  cfg.optimizer = optim::parse_kind(m.value("optimizer", "adam"));

  std::string mode = m.at("mode").get<std::string>();
  RngStream rng(seed, 0);
  CsvMetrics csv(join(out, "metrics.csv"));

  score::ScoreNet net;
  json model_json{{"kind", "score"}, {"mode", mode}, {"arch", arch_to_json(cfg.arch)}};
  score::NoiseLadder ladder;
  score::SDEConfig sde;
  if (mode == "ncsn") {
    const json& lj = m.at("ladder");
    detail::expect_keys(lj, "method.ladder", {"sigma_max", "sigma_min", "levels"});
    ladder = score::NoiseLadder::geometric(lj.at("sigma_max").get<double>(),
                                           lj.at("sigma_min").get<double>(),
                                           lj.at("levels").get<std::size_t>());
    net = score::train_score_ncsn(cfg, data.points, ladder, rng, &csv);
    model_json["ladder"] = ladder.sigmas;
  } else {
    if (m.contains("sde")) {
      detail::expect_keys(m.at("sde"), "method.sde", {"beta_min", "beta_max"});
      sde.beta_min = m.at("sde").value("beta_min", 0.1);
      sde.beta_max = m.at("sde").value("beta_max", 20.0);
    }
    net = score::train_score_vp(cfg, data.points, sde, rng, &csv);
    model_json["sde"] = json{{"beta_min", sde.beta_min}, {"beta_max", sde.beta_max}};
  }
  write_text(join(out, "model.json"), model_json.dump(2) + "\n");
  write_params(join(out, "params.bin"), net.params.values);

  // Score-field dump for 1-D data: (x, sigma, s(x, sigma)).
  if (net.data_dim == 1) {
    std::vector<double> sigmas =
        mode == "ncsn" ? ladder.sigmas
                       : std::vector<double>{std::sqrt(score::vp_forward_marginal(0.25, sde).var),
                                             std::sqrt(score::vp_forward_marginal(0.5, sde).var),
                                             std::sqrt(score::vp_forward_marginal(1.0, sde).var)};
    std::size_t grid_n = m.value("grid_points", std::size_t{121});
    std::ofstream field(join(out, "scorefield.csv"), std::ios::trunc);
    field << "x,sigma,score\n";
    for (double sigma : sigmas) {
      for (std::size_t i = 0; i < grid_n; ++i) {
        double x = -3.0 + 6.0 * static_cast<double>(i) / static_cast<double>(grid_n - 1);
        Tensor xs = Tensor::from({x}, {1, 1});
        double s = score::score_eval(net, xs, sigma).at(0, 0);
        field << format_double(x) << ',' << format_double(sigma) << ',' << format_double(s)
              << '\n';
      }
    }
  }
}

void run_diffuse_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out) {
  const json& m = exp.method;
  std::string model_dir = m.at("model_dir").get<std::string>();
  std::ifstream in(join(model_dir, "model.json"));
  if (!in) throw std::runtime_error("cannot open " + join(model_dir, "model.json"));
  json model_json = json::parse(in);
  if (model_json.at("kind").get<std::string>() != "score") {
    throw std::invalid_argument("diffuse: model_dir does not hold a score model");
  }

  score::ScoreNet net;
  net.arch = detail::parse_arch(model_json.at("arch"), "model.arch");
  net.params = nets::make_params(net.arch);
  net.params.values = read_params(join(model_dir, "params.bin"));
  net.data_dim = net.arch.output_dim();
  net.validate();

  const json& s = m.at("sampler");
  std::size_t n_samples = m.at("n_samples").get<std::size_t>();
  RngStream rng(seed, 0);
  Tensor samples;
  if (s.at("kind").get<std::string>() == "pc") {
    if (!model_json.contains("sde")) {
      throw std::invalid_argument("diffuse: pc sampler needs a vp-mode model");
    }
    score::SDEConfig sde;
    sde.beta_min = model_json.at("sde").at("beta_min").get<double>();
    sde.beta_max = model_json.at("sde").at("beta_max").get<double>();
    score::PcConfig pc;
    pc.n_steps = s.value("n_steps", std::size_t{1000});
    pc.corrector_steps = s.value("corrector_steps", std::size_t{0});
    pc.snr = s.value("snr", 0.16);
    samples = score::pc_sample(score::net_time_score(net, sde), sde, pc, n_samples,
                               net.data_dim, rng);
  } else {
    if (!model_json.contains("ladder")) {
      throw std::invalid_argument("diffuse: annealed sampler needs an ncsn-mode model");
    }
    score::NoiseLadder ladder;
    ladder.sigmas = model_json.at("ladder").get<std::vector<double>>();
    ladder.validate();
    double sigma0 = ladder.sigmas.front();
    Tensor x0 = rng.normal_tensor({n_samples, net.data_dim});
    for (double& v : x0.values()) v *= sigma0;
    auto fn = [&net](const Tensor& x, double sigma) { return score_eval(net, x, sigma); };
    samples = score::annealed_langevin_sample(fn, ladder, s.value("steps_per_scale", std::size_t{100}),
                                              s.value("eps0", 2e-5), std::move(x0), rng);
  }

  std::ofstream csv(join(out, "samples.csv"), std::ios::trunc);
  for (std::size_t j = 0; j < samples.cols(); ++j) csv << (j ? "," : "") << "x_" << j;
  csv << '\n';
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    for (std::size_t j = 0; j < samples.cols(); ++j) {
      csv << (j ? "," : "") << format_double(samples.at(i, j));
    }
    csv << '\n';
  }
}

// ---------------------------------------------------------------------------
// vae
// ---------------------------------------------------------------------------

void run_vae_task(const ParsedExperiment& exp, std::uint64_t seed, const std::string& out) {
  const json& m = exp.method;
  Dataset data = generate(*exp.data);
  if (data.supervised) throw std::invalid_argument("vae needs an unsupervised dataset");

  dlvm::TrainConfig cfg;
  cfg.encoder_arch = detail::parse_arch(m.at("encoder_arch"), "method.encoder_arch");
  cfg.decoder_arch = detail::parse_arch(m.at("decoder_arch"), "method.decoder_arch");
  cfg.d_z = m.at("d_z").get<std::size_t>();
  cfg.lik_sigma = m.value("lik_sigma", 1.0);
  cfg.objective = m.at("objective").get<std::string>() == "elbo"
                      ? dlvm::TrainConfig::Objective::kElbo
                      : dlvm::TrainConfig::Objective::kIwae;
  cfg.iwae_samples = m.value("iwae_samples", std::size_t{8});
  cfg.steps = m.at("steps").get<std::size_t>();
  cfg.batch_size = m.value("batch_size", std::size_t{32});
  cfg.learning_rate = m.value("learning_rate", 1e-3);
  cfg.optimizer = optim::parse_kind(m.value("optimizer", "adam"));
  if (m.contains("refine")) {
    dlvm::RefineConfig rc;
    rc.steps = m.at("refine").value("steps", std::size_t{0});
    rc.step_size = m.at("refine").value("step_size", 1e-3);
    cfg.refine = rc;
  }

  RngStream rng(seed, 0);
  CsvMetrics csv(join(out, "metrics.csv"));
  dlvm::TrainResult result = dlvm::train_vae(cfg, data.points, rng, &csv);

  json model_json{{"kind", "vae"},
                  {"encoder_arch", arch_to_json(cfg.encoder_arch)},
                  {"decoder_arch", arch_to_json(cfg.decoder_arch)},
                  {"d_z", cfg.d_z},
                  {"lik_sigma", cfg.lik_sigma}};
  write_text(join(out, "model.json"), model_json.dump(2) + "\n");
  write_params(join(out, "encoder.bin"), result.model.encoder_params.values);
  write_params(join(out, "decoder.bin"), result.model.decoder_params.values);

  auto [mu, sigma] = dlvm::encode(result.model, data.points);
  std::ofstream latents(join(out, "latents.csv"), std::ios::trunc);
  latents << "x_index";
  for (std::size_t j = 0; j < cfg.d_z; ++j) latents << ",mu_" << j;
  for (std::size_t j = 0; j < cfg.d_z; ++j) latents << ",sigma_" << j;
  latents << '\n';
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    latents << i;
    for (std::size_t j = 0; j < cfg.d_z; ++j) latents << ',' << format_double(mu.at(i, j));
    for (std::size_t j = 0; j < cfg.d_z; ++j) latents << ',' << format_double(sigma.at(i, j));
    latents << '\n';
  }
}

// ---------------------------------------------------------------------------
// gradcheck / oracle
// ---------------------------------------------------------------------------

int run_gradcheck_task(const ParsedExperiment& exp, std::uint64_t seed) {
  std::size_t instances = exp.method.value("instances", std::size_t{20});
  double tolerance = exp.method.value("tolerance", 1e-5);
  std::vector<GradcheckResult> report = gradcheck_report(seed, instances, tolerance);
  for (const auto& r : report) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.family << "  max_rel_err="
              << format_double(r.max_rel_err) << "\n";
  }
  return gradcheck_all_pass(report) ? 0 : 1;
}

int run_oracle_task() {
  std::vector<OracleCheck> checks = oracle_selftests();
  bool all = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  " << c.detail << "\n";
    all = all && c.pass;
  }
  return all ? 0 : 1;
}

}  // namespace

int run_experiment(const std::string& config_path, const RunOverrides& overrides) {
  auto fail = [](int code, const std::string& kind, const std::string& message,
                 std::size_t step = 0) {
    json err{{"error", message}, {"kind", kind}};
    if (step > 0) err["step"] = step;
    std::cerr << err.dump() << std::endl;
    return code;
  };

  std::string text;
  {
    std::ifstream in(config_path);
    if (!in) return fail(4, "io", "cannot open config: " + config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }

  ParsedExperiment exp;
  try {
    exp = detail::parse_experiment(text);
  } catch (const std::invalid_argument& e) {
    return fail(2, "validation", e.what());
  }

  std::uint64_t seed = exp.seed;
  if (const char* env = std::getenv("BINFER_SEED")) {
    seed = std::strtoull(env, nullptr, 10);
  }
  if (overrides.seed) seed = *overrides.seed;
  std::string out = overrides.out_dir.value_or(exp.out_dir);

  auto started = std::chrono::steady_clock::now();
  try {
    fs::create_directories(out);
    int code = 0;
    if (exp.task == "sgld" || exp.task == "sghmc") {
      run_sampler_task(exp, seed, out, std::max<std::size_t>(overrides.chains, 1),
                       exp.task == "sghmc");
    } else if (exp.task == "vi") {
      run_vi_task(exp, seed, out);
    } else if (exp.task == "predict") {
      run_predict_task(exp, seed, out);
    } else if (exp.task == "ebm") {
      run_ebm_task(exp, seed, out);
    } else if (exp.task == "score") {
      run_score_task(exp, seed, out);
    } else if (exp.task == "diffuse") {
      run_diffuse_task(exp, seed, out);
    } else if (exp.task == "vae") {
      run_vae_task(exp, seed, out);
    } else if (exp.task == "gradcheck") {
      code = run_gradcheck_task(exp, seed);
    } else if (exp.task == "oracle") {
      code = run_oracle_task();
    } else {
      return fail(2, "validation", "unknown task '" + exp.task + "'");
    }

    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json manifest{{"task", exp.task},
                  {"config_hash", config_hash(text)},
                  {"seed", seed},
                  {"version", kVersion},
                  {"wall_time_sec", wall}};
    write_text(join(out, "manifest.json"), manifest.dump(2) + "\n");
    return code;
  } catch (const DivergenceError& e) {
    return fail(3, "divergence", e.what(), e.step());
  } catch (const std::invalid_argument& e) {
    return fail(2, "validation", e.what());
  } catch (const std::exception& e) {
    return fail(4, "io", e.what());
  }
}

}  // namespace binfer::harness
