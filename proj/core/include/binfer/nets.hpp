#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "binfer/rng.hpp"
#include "binfer/tape.hpp"
#include "binfer/tensor.hpp"

namespace binfer::nets {

enum class Activation { kRelu, kTanh };

/// Feed-forward architecture: alternating affine maps and the activation,
/// with no activation after the last layer.
struct Architecture {
  std::vector<std::size_t> layer_sizes;  // [d_in, d_h, ..., d_out]
  Activation activation = Activation::kRelu;

  std::size_t depth() const { return layer_sizes.size() - 1; }  // affine layers L
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  void validate() const;
};

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::vector<std::size_t> shape;
  std::size_t size() const { return shape_size(shape); }
};

/// Flattened model parameters plus the per-block layout that maps them back
/// to weight matrices and bias vectors.
struct ParamVector {
  std::vector<double> values;
  std::vector<ParamBlock> layout;

  std::size_t dim() const { return values.size(); }
  Tensor block_tensor(std::size_t b) const;
  void set_block(std::size_t b, const Tensor& t);
};

/// Zero-initialized parameters with the layout implied by `arch`:
/// W_l stored [fan_in, fan_out] (activations are row batches), b_l [fan_out].
ParamVector make_params(const Architecture& arch);
/// Gaussian init, std sqrt(2/fan_in) for relu and sqrt(1/fan_in) for tanh;
/// biases zero.
ParamVector init_params(const Architecture& arch, RngStream& rng);

struct LikelihoodConfig {
  enum class Kind { kGaussian, kCategorical };
  Kind kind = Kind::kGaussian;
  double sigma = 1.0;       // observation std (gaussian)
  std::size_t classes = 0;  // C (categorical)

  static LikelihoodConfig gaussian(double sigma);
  static LikelihoodConfig categorical(std::size_t classes);
  void validate(const Architecture& arch) const;
};

/// Isotropic Gaussian prior N(0, tau^2 I) over all parameters.
struct PriorConfig {
  double tau = 1.0;
  void validate() const;
};

struct ModelContext {
  Architecture arch;
  LikelihoodConfig likelihood;
  PriorConfig prior;
};

/// A (mini)batch: inputs are always rows of x; targets are `y` rows for the
/// Gaussian likelihood or `labels` for the categorical one.
struct Batch {
  Tensor x;                          // [n, d_in]
  Tensor y;                          // [n, d_out]
  std::vector<std::size_t> labels;   // size n
  std::size_t size() const { return x.rank() == 2 ? x.rows() : 0; }
};

Batch subset(const Batch& full, const std::vector<std::size_t>& idx);

/// Without-replacement minibatch index stream, reshuffled every epoch.
class MinibatchStream {
 public:
  MinibatchStream(std::size_t n, std::size_t batch_size, RngStream& rng);
  std::vector<std::size_t> next();
  std::size_t batch_size() const { return batch_; }

 private:
  std::size_t n_, batch_, cursor_;
  RngStream& rng_;
  std::vector<std::size_t> order_;
};

// ---------------------------------------------------------------------------
// Plain (no-tape) evaluation
// ---------------------------------------------------------------------------

/// f_theta(x) for a row batch x: [n, d_in] -> [n, d_out].
Tensor mlp_forward(const ParamVector& params, const Architecture& arch, const Tensor& x);

double log_likelihood(const ParamVector& params, const Architecture& arch,
                      const LikelihoodConfig& lik, const Batch& batch);
double log_prior(const ParamVector& params, const PriorConfig& prior);
double minibatch_energy(const ParamVector& params, const ModelContext& model,
                        const Batch& batch, std::size_t dataset_size);

// ---------------------------------------------------------------------------
// Tape graph builders
// ---------------------------------------------------------------------------

/// Parameter blocks bound to tape nodes, layout order. The nodes may be
/// leaves (samplers) or expressions (reparameterized draws in VI).
struct BoundParams {
  std::vector<NodeId> blocks;
};

BoundParams bind_param_leaves(Tape& tape, const ParamVector& params,
                              bool requires_grad = true);

/// Flatten per-block adjoints back into a vector laid out like `like`.
/// Blocks the loss never reached contribute zeros.
std::vector<double> collect_param_grads(const BoundParams& bound,
                                        const std::vector<Tensor>& grads,
                                        const ParamVector& like);

NodeId mlp_forward_graph(Tape& tape, const BoundParams& params, const Architecture& arch,
                         NodeId x);
NodeId log_likelihood_graph(Tape& tape, const BoundParams& params, const Architecture& arch,
                            const LikelihoodConfig& lik, const Batch& batch);
NodeId log_prior_graph(Tape& tape, const BoundParams& params, const PriorConfig& prior);
/// Minibatch energy per SGLD: -(|D|/|batch|) sum log p(y|x,theta) - log p(theta).
NodeId minibatch_energy_graph(Tape& tape, const BoundParams& params, const ModelContext& model,
                              const Batch& batch, std::size_t dataset_size);

/// Energy value and its gradient w.r.t. the flat parameter vector.
std::vector<double> minibatch_energy_grad(const ParamVector& params, const ModelContext& model,
                                          const Batch& batch, std::size_t dataset_size,
                                          double* energy_out = nullptr);

}  // namespace binfer::nets
