#include "binfer/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace binfer::optim {

void Sgd::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) throw std::invalid_argument("Sgd::step: size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != grad.size()) throw std::invalid_argument("Adam::step: size mismatch");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

Kind parse_kind(const std::string& name) {
  if (name == "sgd") return Kind::kSgd;
  if (name == "adam") return Kind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

}  // namespace binfer::optim
