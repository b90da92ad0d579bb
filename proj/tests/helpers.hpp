#pragma once

#include "nfbst/net.hpp"
#include "nfbst/random.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace testing {

using nfbst::Architecture;
using nfbst::Index;
using nfbst::ParameterVector;

inline ParameterVector random_params(const Architecture& arch, nfbst::Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  ParameterVector p(arch.parameter_count());
  for (Index k = 0; k < p.size(); ++k) p(k) = normal(rng);
  return p;
}

// Plain loops over the documented layout, no Eigen products.
inline double naive_forward(const Architecture& arch, const ParameterVector& p, const std::vector<double>& x) {
  std::vector<double> a = x;
  Index offset = 0;
  const Index layers = static_cast<Index>(arch.hidden_widths.size()) + 1;
  for (Index l = 0; l < layers; ++l) {
    const Index fan_in = static_cast<Index>(a.size());
    const Index fan_out = l + 1 < layers ? arch.hidden_widths[static_cast<std::size_t>(l)] : 1;
    std::vector<double> z(static_cast<std::size_t>(fan_out), 0.0);
    for (Index o = 0; o < fan_out; ++o) {
      long double acc = 0.0L;
      for (Index i = 0; i < fan_in; ++i) acc += static_cast<long double>(p(offset + o * fan_in + i)) * a[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = static_cast<double>(acc);
    }
    offset += fan_in * fan_out;
    for (Index o = 0; o < fan_out; ++o) z[static_cast<std::size_t>(o)] += p(offset + o);
    offset += fan_out;
    if (l + 1 < layers) {
      for (auto& v : z) {
        switch (arch.activation) {
          case nfbst::Activation::relu: v = v > 0.0 ? v : 0.0; break;
          case nfbst::Activation::tanh: v = std::tanh(v); break;
          case nfbst::Activation::identity: break;
        }
      }
    }
    a = z;
  }
  return a[0];
}

inline Eigen::VectorXd central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& at, double step) {
  Eigen::VectorXd g(at.size());
  for (Index i = 0; i < at.size(); ++i) {
    Eigen::VectorXd plus = at, minus = at;
    plus(i) += step;
    minus(i) -= step;
    g(i) = (f(plus) - f(minus)) / (2.0 * step);
  }
  return g;
}

inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Composite Simpson rule on [a, b] with n (even) intervals.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

}  // namespace testing
