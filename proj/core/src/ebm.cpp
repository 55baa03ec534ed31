#include "binfer/ebm.hpp"

#include <cmath>
#include <stdexcept>

#include "binfer/harness/metrics.hpp"
#include "binfer/tape.hpp"

namespace binfer::ebm {

void EnergyModel::validate() const {
  arch.validate();
  if (arch.output_dim() != 1) {
    throw std::invalid_argument("EnergyModel: architecture must have d_out = 1");
  }
  if (params.dim() != arch.param_count()) {
    throw std::invalid_argument("EnergyModel: parameter count mismatch");
  }
}

std::vector<double> energy_batch(const EnergyModel& model, const Tensor& x) {
  Tensor e = nets::mlp_forward(model.params, model.arch, x);
  return e.values();
}

Tensor grad_x(const EnergyModel& model, const Tensor& x) {
  Tape tape;
  NodeId x_node = tape.leaf(x);
  nets::BoundParams bound = nets::bind_param_leaves(tape, model.params, /*requires_grad=*/false);
  NodeId e = tape.sum(nets::mlp_forward_graph(tape, bound, model.arch, x_node));
  std::vector<Tensor> grads = tape.backward(e);
  Tensor g = grads[x_node.index];
  if (g.empty()) g = Tensor(x.shape());
  return g;
}

void Box::clamp(Tensor& x) const {
  if (!active()) return;
  std::size_t d = x.cols();
  if (lo.size() != d || hi.size() != d) throw std::invalid_argument("Box: dimension mismatch");
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double& v = x.at(i, j);
      v = std::min(std::max(v, lo[j]), hi[j]);
    }
  }
}

std::vector<double> constant_steps(std::size_t k, double alpha) {
  return std::vector<double>(k, alpha);
}

Tensor langevin_sample(const EnergyGradFn& grad_energy, const Tensor& x0,
                       const std::vector<double>& alphas, RngStream& rng, const Box* box,
                       bool noise) {
  if (alphas.empty()) throw std::invalid_argument("langevin_sample: need K >= 1 steps");
  Tensor x = x0;
  for (double alpha : alphas) {
    Tensor g = grad_energy(x);
    double noise_scale = std::sqrt(2.0 * alpha);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double step = -alpha * g.data()[i];
      if (noise) step += noise_scale * rng.normal();
      x.data()[i] += step;
    }
    if (!x.all_finite()) throw std::domain_error("langevin_sample: non-finite trajectory");
    if (box) box->clamp(x);
  }
  return x;
}

Tensor langevin_sample(const EnergyModel& model, const Tensor& x0,
                       const std::vector<double>& alphas, RngStream& rng, const Box* box,
                       bool noise) {
  model.validate();
  return langevin_sample([&model](const Tensor& x) { return grad_x(model, x); }, x0, alphas,
                         rng, box, noise);
}

std::vector<double> cd_gradient(const EnergyModel& model, const Tensor& batch,
                                const Tensor& negatives) {
  model.validate();
  if (batch.rank() != 2 || negatives.rank() != 2 || batch.cols() != negatives.cols()) {
    throw std::invalid_argument("cd_gradient: batch and negatives must share data dimension");
  }
  Tape tape;
  nets::BoundParams bound = nets::bind_param_leaves(tape, model.params);
  NodeId e_neg = tape.mean(
      nets::mlp_forward_graph(tape, bound, model.arch, tape.constant(negatives)));
  NodeId e_pos = tape.mean(
      nets::mlp_forward_graph(tape, bound, model.arch, tape.constant(batch)));
  NodeId diff = tape.sub(e_neg, e_pos);
  return nets::collect_param_grads(bound, tape.backward(diff), model.params);
}

SampleBuffer::SampleBuffer(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw std::invalid_argument("SampleBuffer: capacity must be >= 1");
}

void SampleBuffer::push(const Tensor& rows) {
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    std::vector<double> p(dim_);
    for (std::size_t j = 0; j < dim_; ++j) p[j] = rows.at(i, j);
    if (points_.size() < capacity_) {
      points_.push_back(std::move(p));
    } else {
      points_[next_] = std::move(p);
      next_ = (next_ + 1) % capacity_;
    }
  }
}

Tensor SampleBuffer::draw(std::size_t n, RngStream& rng) const {
  if (points_.empty()) throw std::logic_error("SampleBuffer::draw: buffer empty");
  Tensor out({n, dim_});
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double>& p = points_[rng.uniform_index(points_.size())];
    for (std::size_t j = 0; j < dim_; ++j) out.at(i, j) = p[j];
  }
  return out;
}

namespace {

Tensor noise_init(const InitStrategy& init, const Box& box, std::size_t n, std::size_t d,
                  RngStream& rng) {
  Tensor x({n, d});
  if (init.kind == InitStrategy::Kind::kNoiseUniform && box.active()) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        x.at(i, j) = box.lo[j] + (box.hi[j] - box.lo[j]) * rng.uniform();
      }
    }
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = init.noise_scale * rng.normal();
  }
  return x;
}

}  // namespace

TrainResult train_ebm(const TrainConfig& cfg, const Tensor& data, RngStream& rng,
                      harness::MetricsSink* metrics) {
  if (data.rank() != 2 || data.rows() == 0) {
    throw std::invalid_argument("train_ebm: data must be a nonempty [n, d] tensor");
  }
  const std::size_t d = data.cols();
  if (cfg.arch.input_dim() != d) throw std::invalid_argument("train_ebm: arch/data dim mismatch");

  EnergyModel model{cfg.arch, nets::init_params(cfg.arch, rng)};
  model.validate();

  SampleBuffer buffer(cfg.buffer_capacity, d);
  nets::MinibatchStream batches(data.rows(), cfg.batch_size, rng);
  std::vector<double> alphas = constant_steps(cfg.langevin_steps, cfg.langevin_alpha);

  optim::Sgd sgd(cfg.learning_rate);
  optim::Adam adam(cfg.learning_rate);

  nets::Batch full;
  full.x = data;

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    std::vector<std::size_t> idx = batches.next();
    Tensor positives({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) positives.at(i, j) = data.at(idx[i], j);
    }

    Tensor x0;
    switch (cfg.init.kind) {
      case InitStrategy::Kind::kData:
        x0 = positives;
        break;
      case InitStrategy::Kind::kNoiseGaussian:
      case InitStrategy::Kind::kNoiseUniform:
        x0 = noise_init(cfg.init, cfg.box, idx.size(), d, rng);
        break;
      case InitStrategy::Kind::kPersistent: {
        // Fresh restarts draw uniformly over the clamp box when one is set
        // (gives balanced basin coverage), Gaussian otherwise.
        InitStrategy fresh = cfg.init;
        fresh.kind = cfg.box.active() ? InitStrategy::Kind::kNoiseUniform
                                      : InitStrategy::Kind::kNoiseGaussian;
        if (buffer.size() == 0) {
          // classic persistent CD: fantasy particles start at data
          x0 = positives;
        } else {
          x0 = buffer.draw(idx.size(), rng);
          Tensor restarts = noise_init(fresh, cfg.box, idx.size(), d, rng);
          for (std::size_t i = 0; i < idx.size(); ++i) {
            if (rng.uniform() < cfg.init.reinit_prob) {
              for (std::size_t j = 0; j < d; ++j) x0.at(i, j) = restarts.at(i, j);
            }
          }
        }
        break;
      }
    }

    Tensor negatives;
    try {
      negatives = langevin_sample(model, x0, alphas, rng, cfg.box.active() ? &cfg.box : nullptr);
    } catch (const std::domain_error& e) {
      throw DivergenceError(t, "train_ebm diverged at step " + std::to_string(t) + ": " +
                                   e.what());
    }
    if (cfg.init.kind == InitStrategy::Kind::kPersistent) buffer.push(negatives);

    std::vector<double> e_pos = energy_batch(model, positives);
    std::vector<double> e_neg = energy_batch(model, negatives);
    double mean_pos = 0.0, mean_neg = 0.0, max_abs = 0.0;
    for (double e : e_pos) {
      mean_pos += e;
      max_abs = std::max(max_abs, std::fabs(e));
    }
    for (double e : e_neg) {
      mean_neg += e;
      max_abs = std::max(max_abs, std::fabs(e));
    }
    mean_pos /= static_cast<double>(e_pos.size());
    mean_neg /= static_cast<double>(e_neg.size());
    if (max_abs > cfg.energy_guard) {
      throw DivergenceError(t, "train_ebm: |E| exceeded guard at step " + std::to_string(t));
    }

    // Ascend the CD estimate of the log-likelihood gradient.
    std::vector<double> ascent = cd_gradient(model, positives, negatives);
    for (double& g : ascent) g = -g;
    if (cfg.optimizer == optim::Kind::kAdam) {
      adam.step(model.params.values, ascent);
    } else {
      sgd.step(model.params.values, ascent);
    }

    if (metrics) {
      metrics->append(t, "train", "cd_loss", mean_pos - mean_neg);
      metrics->append(t, "train", "energy_pos", mean_pos);
      metrics->append(t, "train", "energy_neg", mean_neg);
    }
  }
  return TrainResult{std::move(model)};
}

}  // namespace binfer::ebm
