#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace binfer::optim {

/// Minimal first-order optimizers over flat parameter vectors. Both minimize:
/// pass the negated gradient to ascend.
class Sgd {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void set_lr(double lr) { lr_ = lr; }
  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_;
};

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void set_lr(double lr) { lr_ = lr; }
  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

enum class Kind { kSgd, kAdam };
Kind parse_kind(const std::string& name);

}  // namespace binfer::optim
