#pragma once

#include <Eigen/Core>

#include <cmath>

namespace nfbst {

/// Adam: per-coordinate step sizes from running first/second moments.
class Adam {
 public:
  Adam(Eigen::Index size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : learning_rate_(learning_rate),
        beta1_(beta1),
        beta2_(beta2),
        epsilon_(epsilon),
        first_(Eigen::VectorXd::Zero(size)),
        second_(Eigen::VectorXd::Zero(size)) {}

  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
    ++steps_;
    first_ = beta1_ * first_ + (1.0 - beta1_) * grad;
    second_ = beta2_ * second_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double correction1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double correction2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    params.array() -= learning_rate_ * (first_.array() / correction1) /
                      ((second_.array() / correction2).sqrt() + epsilon_);
  }

  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double learning_rate() const { return learning_rate_; }
  long steps() const { return steps_; }

 private:
  double learning_rate_;
  double beta1_;
  double beta2_;
  double epsilon_;
  Eigen::VectorXd first_;
  Eigen::VectorXd second_;
  long steps_ = 0;
};

}  // namespace nfbst
