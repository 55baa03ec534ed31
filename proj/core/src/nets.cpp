#include "binfer/nets.hpp"

#include <cmath>
#include <stdexcept>

namespace binfer::nets {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

void Architecture::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("Architecture: need at least [d_in, d_out]");
  }
  for (std::size_t s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("Architecture: all layer sizes must be >= 1");
  }
}

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return n;
}

Tensor ParamVector::block_tensor(std::size_t b) const {
  const ParamBlock& blk = layout[b];
  std::vector<double> v(values.begin() + static_cast<std::ptrdiff_t>(blk.offset),
                        values.begin() + static_cast<std::ptrdiff_t>(blk.offset + blk.size()));
  return Tensor::from(std::move(v), blk.shape);
}

void ParamVector::set_block(std::size_t b, const Tensor& t) {
  const ParamBlock& blk = layout[b];
  if (t.size() != blk.size()) throw std::invalid_argument("set_block: size mismatch");
  for (std::size_t i = 0; i < t.size(); ++i) values[blk.offset + i] = t.data()[i];
}

ParamVector make_params(const Architecture& arch) {
  arch.validate();
  ParamVector p;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < arch.layer_sizes.size(); ++l) {
    std::size_t fan_in = arch.layer_sizes[l], fan_out = arch.layer_sizes[l + 1];
    p.layout.push_back({"W" + std::to_string(l + 1), off, {fan_in, fan_out}});
    off += fan_in * fan_out;
    p.layout.push_back({"b" + std::to_string(l + 1), off, {fan_out}});
    off += fan_out;
  }
  p.values.assign(off, 0.0);
  return p;
}

ParamVector init_params(const Architecture& arch, RngStream& rng) {
  ParamVector p = make_params(arch);
  for (const ParamBlock& blk : p.layout) {
    if (blk.shape.size() != 2) continue;  // biases stay zero
    double fan_in = static_cast<double>(blk.shape[0]);
    double std_dev = arch.activation == Activation::kRelu ? std::sqrt(2.0 / fan_in)
                                                          : std::sqrt(1.0 / fan_in);
    for (std::size_t i = 0; i < blk.size(); ++i) {
      p.values[blk.offset + i] = std_dev * rng.normal();
    }
  }
  return p;
}

LikelihoodConfig LikelihoodConfig::gaussian(double sigma) {
  LikelihoodConfig c;
  c.kind = Kind::kGaussian;
  c.sigma = sigma;
  return c;
}

LikelihoodConfig LikelihoodConfig::categorical(std::size_t classes) {
  LikelihoodConfig c;
  c.kind = Kind::kCategorical;
  c.classes = classes;
  return c;
}

void LikelihoodConfig::validate(const Architecture& arch) const {
  if (kind == Kind::kGaussian) {
    if (!(sigma > 0.0)) throw std::invalid_argument("likelihood: gaussian sigma must be > 0");
  } else {
    if (classes < 2) throw std::invalid_argument("likelihood: categorical needs C >= 2");
    if (arch.output_dim() != classes) {
      throw std::invalid_argument("likelihood: categorical needs d_out == C");
    }
  }
}

void PriorConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("prior: tau must be > 0");
}

MinibatchStream::MinibatchStream(std::size_t n, std::size_t batch_size, RngStream& rng)
    : n_(n), batch_(std::min(batch_size, n)), cursor_(n), rng_(rng), order_(n) {
  if (n == 0) throw std::invalid_argument("MinibatchStream: empty dataset");
  for (std::size_t i = 0; i < n; ++i) order_[i] = i;
}

std::vector<std::size_t> MinibatchStream::next() {
  std::vector<std::size_t> idx(batch_);
  for (std::size_t i = 0; i < batch_; ++i) {
    if (cursor_ == n_) {
      rng_.shuffle(order_);
      cursor_ = 0;
    }
    idx[i] = order_[cursor_++];
  }
  return idx;
}

Batch subset(const Batch& full, const std::vector<std::size_t>& idx) {
  Batch b;
  std::size_t din = full.x.cols();
  b.x = Tensor({idx.size(), din});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < din; ++j) b.x.at(i, j) = full.x.at(idx[i], j);
  }
  if (full.y.rank() == 2) {
    std::size_t dout = full.y.cols();
    b.y = Tensor({idx.size(), dout});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < dout; ++j) b.y.at(i, j) = full.y.at(idx[i], j);
    }
  }
  if (!full.labels.empty()) {
    b.labels.reserve(idx.size());
    for (std::size_t i : idx) b.labels.push_back(full.labels[i]);
  }
  return b;
}

Tensor mlp_forward(const ParamVector& params, const Architecture& arch, const Tensor& x) {
  arch.validate();
  if (params.layout.size() != 2 * arch.depth() || params.dim() != arch.param_count()) {
    throw std::invalid_argument("mlp_forward: layout does not match architecture");
  }
  if (x.rank() != 2 || x.cols() != arch.input_dim()) {
    throw std::invalid_argument("mlp_forward: x must be [n, d_in]");
  }
  Tensor h = x;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    Tensor W = params.block_tensor(2 * l);
    Tensor b = params.block_tensor(2 * l + 1);
    std::size_t n = h.rows(), fan_in = W.rows(), fan_out = W.cols();
    Tensor out({n, fan_out});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < fan_out; ++j) out.at(i, j) = b.data()[j];
      for (std::size_t p = 0; p < fan_in; ++p) {
        double hv = h.at(i, p);
        if (hv == 0.0) continue;
        for (std::size_t j = 0; j < fan_out; ++j) out.at(i, j) += hv * W.at(p, j);
      }
    }
    if (l + 1 < arch.depth()) {
      for (double& v : out.values()) {
        v = arch.activation == Activation::kRelu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
      }
    }
    h = std::move(out);
  }
  return h;
}

BoundParams bind_param_leaves(Tape& tape, const ParamVector& params, bool requires_grad) {
  BoundParams bound;
  bound.blocks.reserve(params.layout.size());
  for (std::size_t b = 0; b < params.layout.size(); ++b) {
    Tensor t = params.block_tensor(b);
    bound.blocks.push_back(requires_grad ? tape.leaf(std::move(t))
                                         : tape.constant(std::move(t)));
  }
  return bound;
}

std::vector<double> collect_param_grads(const BoundParams& bound,
                                        const std::vector<Tensor>& grads,
                                        const ParamVector& like) {
  std::vector<double> flat(like.dim(), 0.0);
  for (std::size_t b = 0; b < like.layout.size(); ++b) {
    const Tensor& g = grads[bound.blocks[b].index];
    if (g.empty()) continue;
    const ParamBlock& blk = like.layout[b];
    for (std::size_t i = 0; i < blk.size(); ++i) flat[blk.offset + i] = g.data()[i];
  }
  return flat;
}

NodeId mlp_forward_graph(Tape& tape, const BoundParams& params, const Architecture& arch,
                         NodeId x) {
  if (params.blocks.size() != 2 * arch.depth()) {
    throw std::invalid_argument("mlp_forward_graph: bound blocks do not match architecture");
  }
  NodeId h = x;
  for (std::size_t l = 0; l < arch.depth(); ++l) {
    NodeId W = params.blocks[2 * l];
    NodeId b = params.blocks[2 * l + 1];
    h = tape.add(tape.matmul(h, W), b);
    if (l + 1 < arch.depth()) {
      h = arch.activation == Activation::kRelu ? tape.relu(h) : tape.tanh(h);
    }
  }
  return h;
}

NodeId log_likelihood_graph(Tape& tape, const BoundParams& params, const Architecture& arch,
                            const LikelihoodConfig& lik, const Batch& batch) {
  lik.validate(arch);
  NodeId x = tape.constant(batch.x);
  NodeId f = mlp_forward_graph(tape, params, arch, x);
  if (lik.kind == LikelihoodConfig::Kind::kGaussian) {
    if (batch.y.rank() != 2 || batch.y.rows() != batch.size()) {
      throw std::invalid_argument("log_likelihood: gaussian targets must be [n, d_out]");
    }
    NodeId r = tape.sub(f, tape.constant(batch.y));
    NodeId sq = tape.sum(tape.square(r));
    double n_terms = static_cast<double>(batch.size() * arch.output_dim());
    double norm = -0.5 * n_terms * (kLog2Pi + 2.0 * std::log(lik.sigma));
    return tape.add_const(tape.scale(sq, -1.0 / (2.0 * lik.sigma * lik.sigma)), norm);
  }
  if (batch.labels.size() != batch.size()) {
    throw std::invalid_argument("log_likelihood: categorical targets must be one label per row");
  }
  for (std::size_t y : batch.labels) {
    if (y >= lik.classes) throw std::invalid_argument("log_likelihood: label out of range");
  }
  NodeId lse = tape.log_sum_exp(f, 1);
  NodeId picked = tape.gather(f, batch.labels);
  return tape.sum(tape.sub(picked, lse));
}

NodeId log_prior_graph(Tape& tape, const BoundParams& params, const PriorConfig& prior) {
  prior.validate();
  NodeId ss = tape.sum(tape.square(params.blocks[0]));
  std::size_t dim = tape.value(params.blocks[0]).size();
  for (std::size_t b = 1; b < params.blocks.size(); ++b) {
    ss = tape.add(ss, tape.sum(tape.square(params.blocks[b])));
    dim += tape.value(params.blocks[b]).size();
  }
  double norm = -0.5 * static_cast<double>(dim) * (kLog2Pi + 2.0 * std::log(prior.tau));
  return tape.add_const(tape.scale(ss, -1.0 / (2.0 * prior.tau * prior.tau)), norm);
}

NodeId minibatch_energy_graph(Tape& tape, const BoundParams& params, const ModelContext& model,
                              const Batch& batch, std::size_t dataset_size) {
  if (batch.size() == 0) throw std::invalid_argument("minibatch_energy: empty batch");
  if (dataset_size < batch.size()) {
    throw std::invalid_argument("minibatch_energy: dataset smaller than batch");
  }
  NodeId ll = log_likelihood_graph(tape, params, model.arch, model.likelihood, batch);
  double scale = static_cast<double>(dataset_size) / static_cast<double>(batch.size());
  NodeId lp = log_prior_graph(tape, params, model.prior);
  return tape.sub(tape.scale(ll, -scale), lp);
}

double log_likelihood(const ParamVector& params, const Architecture& arch,
                      const LikelihoodConfig& lik, const Batch& batch) {
  Tape tape;
  BoundParams bound = bind_param_leaves(tape, params, /*requires_grad=*/false);
  return tape.value(log_likelihood_graph(tape, bound, arch, lik, batch)).item();
}

double log_prior(const ParamVector& params, const PriorConfig& prior) {
  Tape tape;
  BoundParams bound = bind_param_leaves(tape, params, /*requires_grad=*/false);
  return tape.value(log_prior_graph(tape, bound, prior)).item();
}

double minibatch_energy(const ParamVector& params, const ModelContext& model,
                        const Batch& batch, std::size_t dataset_size) {
  Tape tape;
  BoundParams bound = bind_param_leaves(tape, params, /*requires_grad=*/false);
  return tape.value(minibatch_energy_graph(tape, bound, model, batch, dataset_size)).item();
}

std::vector<double> minibatch_energy_grad(const ParamVector& params, const ModelContext& model,
                                          const Batch& batch, std::size_t dataset_size,
                                          double* energy_out) {
  Tape tape;
  BoundParams bound = bind_param_leaves(tape, params);
  NodeId u = minibatch_energy_graph(tape, bound, model, batch, dataset_size);
  if (energy_out) *energy_out = tape.value(u).item();
  std::vector<Tensor> grads = tape.backward(u);
  return collect_param_grads(bound, grads, params);
}

}  // namespace binfer::nets
