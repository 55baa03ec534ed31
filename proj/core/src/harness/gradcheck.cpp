#include <cmath>
#include <functional>

#include "binfer/dlvm.hpp"
#include "binfer/ebm.hpp"
#include "binfer/harness/checks.hpp"
#include "binfer/harness/datasets.hpp"
#include "binfer/nets.hpp"
#include "binfer/score_diffusion.hpp"
#include "binfer/tape.hpp"
#include "binfer/vi.hpp"

namespace binfer::harness {

namespace {

// One differentiable instance as a flat-vector problem. `value` must be a
// deterministic function of the flat input (stochastic objectives recreate a
// fixed-seed RngStream internally, so all evaluations share the same noise).
struct FdProblem {
  std::vector<double> x0;
  std::function<double(const std::vector<double>&)> value;
  std::function<std::vector<double>(const std::vector<double>&)> grad;
};

double fd_max_rel_err(const FdProblem& p, double h) {
  std::vector<double> g_ad = p.grad(p.x0);
  double worst = 0.0;
  std::vector<double> x = p.x0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double keep = x[i];
    x[i] = keep + h;
    double up = p.value(x);
    x[i] = keep - h;
    double down = p.value(x);
    x[i] = keep;
    double g_fd = (up - down) / (2.0 * h);
    double denom = std::max({1.0, std::fabs(g_ad[i]), std::fabs(g_fd)});
    worst = std::max(worst, std::fabs(g_ad[i] - g_fd) / denom);
  }
  return worst;
}

std::vector<double> random_vec(std::size_t n, RngStream& rng, double lo = -2.0,
                               double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

// ---- primitive tape ops -----------------------------------------------

// Builds loss = sum(read_out .* R) over a single leaf run through `apply`.
FdProblem unary_problem(const std::vector<std::size_t>& shape,
                        std::function<NodeId(Tape&, NodeId)> apply, RngStream& rng,
                        double lo = -2.0, double hi = 2.0) {
  FdProblem p;
  p.x0 = random_vec(shape_size(shape), rng, lo, hi);
  Tensor r = Tensor::from(random_vec(shape_size(shape), rng), shape);

  auto build = [shape, apply, r](Tape& tape, const std::vector<double>& x) {
    NodeId leaf = tape.leaf(Tensor::from(x, shape));
    NodeId out = apply(tape, leaf);
    const Tensor& ov = tape.value(out);
    Tensor rr = r;
    if (!ov.same_shape(rr)) {
      // reductions: contract with a scalar weight instead
      rr = Tensor::full(ov.shape(), 0.7331);
    }
    return std::pair<NodeId, NodeId>{tape.sum(tape.mul(out, tape.constant(rr))), leaf};
  };
  p.value = [build](const std::vector<double>& x) {
    Tape tape;
    return tape.value(build(tape, x).first).item();
  };
  p.grad = [build](const std::vector<double>& x) {
    Tape tape;
    auto [loss, leaf] = build(tape, x);
    std::vector<Tensor> grads = tape.backward(loss);
    const Tensor& g = grads[leaf.index];
    if (g.empty()) return std::vector<double>(x.size(), 0.0);
    return g.values();
  };
  return p;
}

FdProblem binary_problem(const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb,
                         std::function<NodeId(Tape&, NodeId, NodeId)> apply, RngStream& rng,
                         double lo_b = -2.0, double hi_b = 2.0) {
  FdProblem p;
  std::size_t na = shape_size(sa), nb = shape_size(sb);
  std::vector<double> a0 = random_vec(na, rng);
  std::vector<double> b0 = random_vec(nb, rng, lo_b, hi_b);
  p.x0 = a0;
  p.x0.insert(p.x0.end(), b0.begin(), b0.end());

  auto build = [sa, sb, na, apply](Tape& tape, const std::vector<double>& x) {
    std::vector<double> av(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(na));
    std::vector<double> bv(x.begin() + static_cast<std::ptrdiff_t>(na), x.end());
    NodeId a = tape.leaf(Tensor::from(std::move(av), sa));
    NodeId b = tape.leaf(Tensor::from(std::move(bv), sb));
    NodeId out = apply(tape, a, b);
    Tensor w = Tensor::full(tape.value(out).shape(), 0.7331);
    return std::tuple<NodeId, NodeId, NodeId>{tape.sum(tape.mul(out, tape.constant(w))), a, b};
  };
  p.value = [build](const std::vector<double>& x) {
    Tape tape;
    return tape.value(std::get<0>(build(tape, x))).item();
  };
  p.grad = [build, na](const std::vector<double>& x) {
    Tape tape;
    auto [loss, a, b] = build(tape, x);
    std::vector<Tensor> grads = tape.backward(loss);
    std::vector<double> g(x.size(), 0.0);
    if (!grads[a.index].empty()) {
      for (std::size_t i = 0; i < na; ++i) g[i] = grads[a.index].data()[i];
    }
    if (!grads[b.index].empty()) {
      for (std::size_t i = 0; i + na < x.size(); ++i) g[na + i] = grads[b.index].data()[i];
    }
    return g;
  };
  return p;
}

// ---- loss families ------------------------------------------------------

nets::Batch random_batch(const nets::Architecture& arch, bool categorical, std::size_t n,
                         RngStream& rng) {
  nets::Batch b;
  b.x = Tensor::from(random_vec(n * arch.input_dim(), rng), {n, arch.input_dim()});
  if (categorical) {
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(rng.uniform_index(arch.output_dim()));
  } else {
    b.y = Tensor::from(random_vec(n * arch.output_dim(), rng), {n, arch.output_dim()});
  }
  return b;
}

nets::ParamVector with_values(const nets::Architecture& arch, const std::vector<double>& v) {
  nets::ParamVector p = nets::make_params(arch);
  p.values = v;
  return p;
}

FdProblem loglik_problem(bool categorical, nets::Activation act, RngStream& rng) {
  nets::Architecture arch{{2, 5, categorical ? std::size_t{3} : std::size_t{2}}, act};
  nets::LikelihoodConfig lik = categorical ? nets::LikelihoodConfig::categorical(3)
                                           : nets::LikelihoodConfig::gaussian(0.7);
  nets::Batch batch = random_batch(arch, categorical, 4, rng);

  FdProblem p;
  p.x0 = random_vec(arch.param_count(), rng, -1.0, 1.0);
  p.value = [arch, lik, batch](const std::vector<double>& x) {
    return nets::log_likelihood(with_values(arch, x), arch, lik, batch);
  };
  p.grad = [arch, lik, batch](const std::vector<double>& x) {
    Tape tape;
    nets::ParamVector params = with_values(arch, x);
    nets::BoundParams bound = nets::bind_param_leaves(tape, params);
    NodeId ll = nets::log_likelihood_graph(tape, bound, arch, lik, batch);
    return nets::collect_param_grads(bound, tape.backward(ll), params);
  };
  return p;
}

FdProblem energy_problem(RngStream& rng) {
  nets::ModelContext model{{{2, 4, 1}, nets::Activation::kTanh},
                           nets::LikelihoodConfig::gaussian(0.5),
                           {1.3}};
  nets::Batch batch = random_batch(model.arch, false, 5, rng);

  FdProblem p;
  p.x0 = random_vec(model.arch.param_count(), rng, -1.0, 1.0);
  p.value = [model, batch](const std::vector<double>& x) {
    return nets::minibatch_energy(with_values(model.arch, x), model, batch, 20);
  };
  p.grad = [model, batch](const std::vector<double>& x) {
    return nets::minibatch_energy_grad(with_values(model.arch, x), model, batch, 20);
  };
  return p;
}

FdProblem vi_bound_problem(bool density, vi::ViConfig::Objective objective, double alpha,
                           std::size_t mc, std::uint64_t noise_seed, RngStream& rng) {
  vi::Target target;
  if (density) {
    std::vector<double> mean{0.3, -0.2};
    target = gaussian_density_target(mean, Tensor::matrix(2, 2, {1.5, 0.4, 0.4, 0.9}));
  } else {
    nets::ModelContext model{{{1, 3, 1}, nets::Activation::kTanh},
                             nets::LikelihoodConfig::gaussian(0.6),
                             {1.0}};
    vi::DatasetTarget ds{model, {}};
    ds.data = random_batch(model.arch, false, 6, rng);
    target = std::move(ds);
  }
  std::size_t dim = vi::target_dim(target);

  FdProblem p;
  p.x0 = random_vec(dim, rng, -0.8, 0.8);
  std::vector<double> rho0 = random_vec(dim, rng, -1.5, 0.5);
  p.x0.insert(p.x0.end(), rho0.begin(), rho0.end());

  auto make_q = [dim](const std::vector<double>& x) {
    vi::MeanFieldGaussian q;
    q.mu.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(dim));
    q.rho.assign(x.begin() + static_cast<std::ptrdiff_t>(dim), x.end());
    return q;
  };
  p.value = [make_q, target, objective, alpha, mc, noise_seed](const std::vector<double>& x) {
    Tape tape;
    RngStream noise(noise_seed, 0x90ad);
    vi::BoundBuild b = vi::build_bound(tape, make_q(x), target, objective, alpha, mc,
                                       nullptr, noise, false);
    return tape.value(b.bound).item();
  };
  p.grad = [make_q, target, objective, alpha, mc, noise_seed, dim](const std::vector<double>& x) {
    Tape tape;
    RngStream noise(noise_seed, 0x90ad);
    vi::BoundBuild b =
        vi::build_bound(tape, make_q(x), target, objective, alpha, mc, nullptr, noise, true);
    std::vector<Tensor> grads = tape.backward(b.bound);
    std::vector<double> g(2 * dim, 0.0);
    for (std::size_t blk = 0; blk < b.layout.size(); ++blk) {
      const nets::ParamBlock& lb = b.layout[blk];
      const Tensor& gm = grads[b.mu[blk].index];
      const Tensor& gr = grads[b.rho[blk].index];
      for (std::size_t i = 0; i < lb.size(); ++i) {
        if (!gm.empty()) g[lb.offset + i] = gm.data()[i];
        if (!gr.empty()) g[dim + lb.offset + i] = gr.data()[i];
      }
    }
    return g;
  };
  return p;
}

FdProblem dsm_problem(bool full_ladder, std::uint64_t noise_seed, RngStream& rng) {
  nets::Architecture arch{{2, 6, 1}, nets::Activation::kTanh};
  Tensor batch = Tensor::from(random_vec(5, rng), {5, 1});
  score::NoiseLadder ladder;
  ladder.sigmas = full_ladder ? std::vector<double>{1.0, 0.5, 0.25} : std::vector<double>{0.8};

  FdProblem p;
  p.x0 = random_vec(arch.param_count(), rng, -1.0, 1.0);
  auto eval = [arch, batch, ladder, noise_seed](const std::vector<double>& x, bool want_grad,
                                                std::vector<double>* grad_out) {
    Tape tape;
    RngStream noise(noise_seed, 0xd5a);
    nets::ParamVector params = with_values(arch, x);
    nets::BoundParams bound = nets::bind_param_leaves(tape, params, want_grad);
    NodeId loss = score::ncsn_loss_graph(tape, bound, arch, batch, ladder, noise);
    if (want_grad) *grad_out = nets::collect_param_grads(bound, tape.backward(loss), params);
    return tape.value(loss).item();
  };
  p.value = [eval](const std::vector<double>& x) { return eval(x, false, nullptr); };
  p.grad = [eval](const std::vector<double>& x) {
    std::vector<double> g;
    eval(x, true, &g);
    return g;
  };
  return p;
}

FdProblem ebm_x_problem(RngStream& rng) {
  nets::Architecture arch{{2, 5, 1}, nets::Activation::kTanh};
  ebm::EnergyModel model{arch, nets::make_params(arch)};
  model.params.values = random_vec(arch.param_count(), rng, -1.0, 1.0);

  FdProblem p;
  p.x0 = random_vec(6, rng);
  p.value = [model](const std::vector<double>& x) {
    std::vector<double> e = ebm::energy_batch(model, Tensor::from(x, {3, 2}));
    double s = 0.0;
    for (double v : e) s += v;
    return s;
  };
  p.grad = [model](const std::vector<double>& x) {
    return ebm::grad_x(model, Tensor::from(x, {3, 2})).values();
  };
  return p;
}

FdProblem ebm_param_problem(RngStream& rng) {
  nets::Architecture arch{{1, 5, 1}, nets::Activation::kTanh};
  Tensor pos = Tensor::from(random_vec(4, rng), {4, 1});
  Tensor neg = Tensor::from(random_vec(4, rng), {4, 1});

  FdProblem p;
  p.x0 = random_vec(arch.param_count(), rng, -1.0, 1.0);
  p.value = [arch, pos, neg](const std::vector<double>& x) {
    ebm::EnergyModel m{arch, with_values(arch, x)};
    std::vector<double> ep = ebm::energy_batch(m, pos);
    std::vector<double> en = ebm::energy_batch(m, neg);
    double mp = 0.0, mn = 0.0;
    for (double v : ep) mp += v;
    for (double v : en) mn += v;
    return mn / static_cast<double>(en.size()) - mp / static_cast<double>(ep.size());
  };
  p.grad = [arch, pos, neg](const std::vector<double>& x) {
    ebm::EnergyModel m{arch, with_values(arch, x)};
    return ebm::cd_gradient(m, pos, neg);
  };
  return p;
}

FdProblem vae_problem(std::size_t iwae_samples, std::uint64_t noise_seed, RngStream& rng) {
  dlvm::VAEModel model;
  model.d_z = 1;
  model.lik_sigma = 0.8;
  model.encoder_arch = {{2, 4, 2}, nets::Activation::kTanh};
  model.decoder_arch = {{1, 4, 2}, nets::Activation::kTanh};
  model.encoder_params = nets::make_params(model.encoder_arch);
  model.decoder_params = nets::make_params(model.decoder_arch);
  Tensor x = Tensor::from(random_vec(6, rng), {3, 2});

  std::size_t ne = model.encoder_arch.param_count();
  std::size_t nd = model.decoder_arch.param_count();
  FdProblem p;
  p.x0 = random_vec(ne + nd, rng, -1.0, 1.0);

  auto assemble = [model, ne](const std::vector<double>& v) {
    dlvm::VAEModel m = model;
    m.encoder_params.values.assign(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ne));
    m.decoder_params.values.assign(v.begin() + static_cast<std::ptrdiff_t>(ne), v.end());
    return m;
  };
  p.value = [assemble, x, iwae_samples, noise_seed](const std::vector<double>& v) {
    Tape tape;
    RngStream noise(noise_seed, 0xae);
    dlvm::VAEModel m = assemble(v);
    return tape.value(dlvm::build_vae_bound(tape, m, x, iwae_samples, noise).bound).item();
  };
  p.grad = [assemble, x, iwae_samples, noise_seed, ne, nd](const std::vector<double>& v) {
    Tape tape;
    RngStream noise(noise_seed, 0xae);
    dlvm::VAEModel m = assemble(v);
    dlvm::VaeBoundBuild b = dlvm::build_vae_bound(tape, m, x, iwae_samples, noise);
    std::vector<Tensor> grads = tape.backward(b.bound);
    std::vector<double> ge = nets::collect_param_grads(b.encoder, grads, m.encoder_params);
    std::vector<double> gd = nets::collect_param_grads(b.decoder, grads, m.decoder_params);
    std::vector<double> g(ne + nd, 0.0);
    for (std::size_t i = 0; i < ne; ++i) g[i] = ge[i];
    for (std::size_t i = 0; i < nd; ++i) g[ne + i] = gd[i];
    return g;
  };
  return p;
}

using ProblemGen = std::function<FdProblem(std::size_t instance, RngStream& rng)>;

}  // namespace

std::vector<GradcheckResult> gradcheck_report(std::uint64_t seed, std::size_t instances,
                                              double tolerance, double step) {
  std::vector<std::pair<std::string, ProblemGen>> families;

  auto unary_family = [&](const char* name, std::function<NodeId(Tape&, NodeId)> apply,
                          double lo = -2.0, double hi = 2.0) {
    families.emplace_back(name, [apply, lo, hi](std::size_t, RngStream& rng) {
      return unary_problem({3, 4}, apply, rng, lo, hi);
    });
  };

  unary_family("op:relu", [](Tape& t, NodeId a) { return t.relu(a); });
  unary_family("op:tanh", [](Tape& t, NodeId a) { return t.tanh(a); });
  unary_family("op:exp", [](Tape& t, NodeId a) { return t.exp(a); });
  unary_family("op:log", [](Tape& t, NodeId a) { return t.log(a); }, 0.5, 2.5);
  unary_family("op:square", [](Tape& t, NodeId a) { return t.square(a); });
  unary_family("op:neg", [](Tape& t, NodeId a) { return t.neg(a); });
  unary_family("op:scale", [](Tape& t, NodeId a) { return t.scale(a, -1.7); });
  unary_family("op:add_const", [](Tape& t, NodeId a) { return t.add_const(a, 0.9); });
  unary_family("op:sum", [](Tape& t, NodeId a) { return t.sum(a); });
  unary_family("op:mean", [](Tape& t, NodeId a) { return t.mean(a); });
  unary_family("op:log_sum_exp", [](Tape& t, NodeId a) { return t.log_sum_exp(a, 1); });
  unary_family("op:log_sum_exp_ax0", [](Tape& t, NodeId a) { return t.log_sum_exp(a, 0); });
  unary_family("op:softmax", [](Tape& t, NodeId a) { return t.softmax(a, 1); });
  unary_family("op:softmax_ax0", [](Tape& t, NodeId a) { return t.softmax(a, 0); });
  unary_family("op:slice_cols", [](Tape& t, NodeId a) { return t.slice_cols(a, 1, 3); });
  unary_family("op:softplus", [](Tape& t, NodeId a) { return softplus(t, a); });
  unary_family("op:clamp", [](Tape& t, NodeId a) { return clamp(t, a, -1.3, 1.3); });
  families.emplace_back("op:gather", [](std::size_t, RngStream& rng) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 3; ++i) idx.push_back(rng.uniform_index(4));
    return unary_problem({3, 4}, [idx](Tape& t, NodeId a) { return t.gather(a, idx); }, rng);
  });

  auto binary_family = [&](const char* name, std::vector<std::size_t> sa,
                           std::vector<std::size_t> sb,
                           std::function<NodeId(Tape&, NodeId, NodeId)> apply,
                           double lo_b = -2.0, double hi_b = 2.0) {
    families.emplace_back(name, [sa, sb, apply, lo_b, hi_b](std::size_t, RngStream& rng) {
      return binary_problem(sa, sb, apply, rng, lo_b, hi_b);
    });
  };
  auto add_fn = [](Tape& t, NodeId a, NodeId b) { return t.add(a, b); };
  auto sub_fn = [](Tape& t, NodeId a, NodeId b) { return t.sub(a, b); };
  auto mul_fn = [](Tape& t, NodeId a, NodeId b) { return t.mul(a, b); };
  auto div_fn = [](Tape& t, NodeId a, NodeId b) { return t.div(a, b); };
  binary_family("op:add", {3, 4}, {3, 4}, add_fn);
  binary_family("op:add_rowbcast", {3, 4}, {4}, add_fn);
  binary_family("op:add_scalar", {3, 4}, {}, add_fn);
  binary_family("op:sub", {3, 4}, {3, 4}, sub_fn);
  binary_family("op:mul", {3, 4}, {3, 4}, mul_fn);
  binary_family("op:mul_rowbcast", {3, 4}, {4}, mul_fn);
  binary_family("op:div", {3, 4}, {3, 4}, div_fn, 0.5, 2.5);
  binary_family("op:matmul", {3, 4}, {4, 2},
                [](Tape& t, NodeId a, NodeId b) { return t.matmul(a, b); });
  binary_family("op:concat_ax0", {2, 3}, {4, 3},
                [](Tape& t, NodeId a, NodeId b) { return t.concat(a, b, 0); });
  binary_family("op:concat_ax1", {3, 2}, {3, 4},
                [](Tape& t, NodeId a, NodeId b) { return t.concat(a, b, 1); });
  families.emplace_back("op:stack", [](std::size_t, RngStream& rng) {
    return unary_problem({4}, [](Tape& t, NodeId a) {
      // route through gather-like scalar extraction: square then stack sums
      NodeId s1 = t.sum(t.square(a));
      NodeId s2 = t.sum(t.exp(a));
      NodeId s3 = t.mean(a);
      return t.stack({s1, s2, s3});
    }, rng);
  });

  families.emplace_back("gaussian_loglik", [](std::size_t i, RngStream& rng) {
    return loglik_problem(false, i % 2 ? nets::Activation::kRelu : nets::Activation::kTanh, rng);
  });
  families.emplace_back("categorical_loglik", [](std::size_t i, RngStream& rng) {
    return loglik_problem(true, i % 2 ? nets::Activation::kRelu : nets::Activation::kTanh, rng);
  });
  families.emplace_back("minibatch_energy",
                        [](std::size_t, RngStream& rng) { return energy_problem(rng); });
  families.emplace_back("elbo_dataset", [](std::size_t i, RngStream& rng) {
    return vi_bound_problem(false, vi::ViConfig::Objective::kElbo, 1.0, 1 + i % 2, 17 + i, rng);
  });
  families.emplace_back("elbo_density", [](std::size_t i, RngStream& rng) {
    return vi_bound_problem(true, vi::ViConfig::Objective::kElbo, 1.0, 1 + i % 2, 29 + i, rng);
  });
  families.emplace_back("alpha_bound", [](std::size_t i, RngStream& rng) {
    double alpha = i % 3 == 0 ? 0.01 : (i % 3 == 1 ? 0.5 : 0.9999);
    return vi_bound_problem(i % 2 == 0, vi::ViConfig::Objective::kAlpha, alpha, 3, 41 + i, rng);
  });
  families.emplace_back("dsm", [](std::size_t i, RngStream& rng) {
    return dsm_problem(false, 53 + i, rng);
  });
  families.emplace_back("ncsn", [](std::size_t i, RngStream& rng) {
    return dsm_problem(true, 67 + i, rng);
  });
  families.emplace_back("ebm_energy_x",
                        [](std::size_t, RngStream& rng) { return ebm_x_problem(rng); });
  families.emplace_back("ebm_energy_params",
                        [](std::size_t, RngStream& rng) { return ebm_param_problem(rng); });
  families.emplace_back("vae_elbo", [](std::size_t i, RngStream& rng) {
    return vae_problem(0, 71 + i, rng);
  });
  families.emplace_back("iwae", [](std::size_t i, RngStream& rng) {
    return vae_problem(1 + i % 4, 83 + i, rng);
  });

  std::vector<GradcheckResult> report;
  for (std::size_t f = 0; f < families.size(); ++f) {
    RngStream rng(seed, 0x6ead'c000 + f);
    GradcheckResult r;
    r.family = families[f].first;
    r.instances = instances;
    for (std::size_t i = 0; i < instances; ++i) {
      FdProblem p = families[f].second(i, rng);
      r.max_rel_err = std::max(r.max_rel_err, fd_max_rel_err(p, step));
    }
    r.pass = r.max_rel_err < tolerance;
    report.push_back(std::move(r));
  }
  return report;
}

bool gradcheck_all_pass(const std::vector<GradcheckResult>& report) {
  for (const auto& r : report) {
    if (!r.pass) return false;
  }
  return !report.empty();
}

}  // namespace binfer::harness
