#pragma once

// Dense feed-forward regression networks evaluated against an explicit,
// flat parameter realization. Everything here is a pure function of its
// arguments; the same parameter vector may be shared by many threads.
//
// Parameter layout (layer-major): for each layer l = 0..L-1 the weight
// matrix W_l of shape (fan_out x fan_in) stored row-major, followed by the
// bias vector b_l of length fan_out. The last layer has fan_out = 1 and no
// activation.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfbst {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One realization of every weight and bias (a single posterior draw).
using ParameterVector = Vector<double>;

class DimensionError : public std::invalid_argument {
 public:
  DimensionError(const std::string& what, Index expected, Index actual);

  Index expected() const { return expected_; }
  Index actual() const { return actual_; }

 private:
  Index expected_;
  Index actual_;
};

enum class Activation { relu, tanh, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

struct Architecture {
  Index input_dim = 1;
  std::vector<Index> hidden_widths;
  Activation activation = Activation::relu;

  /// Number of affine layers, hidden layers plus the scalar output layer.
  Index layer_count() const { return static_cast<Index>(hidden_widths.size()) + 1; }
  Index fan_in(Index layer) const;
  Index fan_out(Index layer) const;
  Index weight_offset(Index layer) const;
  Index bias_offset(Index layer) const { return weight_offset(layer) + fan_in(layer) * fan_out(layer); }
  /// Flat index of W_layer(out, in).
  Index weight_index(Index layer, Index out, Index in) const {
    return weight_offset(layer) + out * fan_in(layer) + in;
  }
  Index parameter_count() const;

  /// Throws std::invalid_argument when the shape is unusable.
  void validate() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Throws DimensionError unless params has parameter_count() finite entries.
void check_parameters(const Architecture& arch, const ParameterVector& params);

namespace detail {

void check_input(const Architecture& arch, Index actual);
void check_parameter_count(const Architecture& arch, Index actual);

template <typename Scalar>
Scalar activate(Activation a, Scalar z) {
  switch (a) {
    case Activation::relu:
      return z > Scalar(0) ? z : Scalar(0);
    case Activation::tanh:
      return std::tanh(z);
    case Activation::identity:
      break;
  }
  return z;
}

// ReLU subgradient at exactly 0 is 0.
template <typename Scalar>
Scalar activate_derivative(Activation a, Scalar z) {
  switch (a) {
    case Activation::relu:
      return z > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::tanh: {
      const Scalar t = std::tanh(z);
      return Scalar(1) - t * t;
    }
    case Activation::identity:
      break;
  }
  return Scalar(1);
}

template <typename Derived>
auto activate_array(Activation a, const Eigen::ArrayBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([a](Scalar v) { return activate(a, v); });
}

template <typename Derived>
auto activate_derivative_array(Activation a, const Eigen::ArrayBase<Derived>& z) {
  using Scalar = typename Derived::Scalar;
  return z.unaryExpr([a](Scalar v) { return activate_derivative(a, v); });
}

}  // namespace detail

template <typename Scalar>
Eigen::Map<const RowMajorMatrix<Scalar>> layer_weights(const Architecture& arch, const Vector<Scalar>& params,
                                                       Index layer) {
  return {params.data() + arch.weight_offset(layer), arch.fan_out(layer), arch.fan_in(layer)};
}

template <typename Scalar>
Eigen::Map<const Vector<Scalar>> layer_bias(const Architecture& arch, const Vector<Scalar>& params, Index layer) {
  return {params.data() + arch.bias_offset(layer), arch.fan_out(layer)};
}

template <typename Scalar>
Eigen::Map<RowMajorMatrix<Scalar>> layer_weights(const Architecture& arch, Vector<Scalar>& params, Index layer) {
  return {params.data() + arch.weight_offset(layer), arch.fan_out(layer), arch.fan_in(layer)};
}

template <typename Scalar>
Eigen::Map<Vector<Scalar>> layer_bias(const Architecture& arch, Vector<Scalar>& params, Index layer) {
  return {params.data() + arch.bias_offset(layer), arch.fan_out(layer)};
}

/// Per-layer record of one forward pass. inputs[l] feeds layer l (inputs[0]
/// is x); pre_activations[l] = W_l inputs[l] + b_l. The prediction is
/// pre_activations.back()(0).
template <typename Scalar>
struct ForwardTrace {
  std::vector<Vector<Scalar>> inputs;
  std::vector<Vector<Scalar>> pre_activations;

  Scalar output() const { return pre_activations.back()(0); }
};

template <typename Scalar>
Scalar forward(const Architecture& arch, const Vector<Scalar>& params, const Vector<Scalar>& x,
               ForwardTrace<Scalar>& trace) {
  detail::check_input(arch, x.size());
  detail::check_parameter_count(arch, params.size());
  const Index layers = arch.layer_count();
  trace.inputs.resize(layers);
  trace.pre_activations.resize(layers);
  trace.inputs[0] = x;
  for (Index l = 0; l < layers; ++l) {
    trace.pre_activations[l].noalias() = layer_weights(arch, params, l) * trace.inputs[l];
    trace.pre_activations[l] += layer_bias(arch, params, l);
    if (l + 1 < layers) {
      trace.inputs[l + 1] = detail::activate_array(arch.activation, trace.pre_activations[l].array()).matrix();
    }
  }
  return trace.output();
}

template <typename Scalar>
Scalar forward(const Architecture& arch, const Vector<Scalar>& params, const Vector<Scalar>& x) {
  ForwardTrace<Scalar> trace;
  return forward(arch, params, x, trace);
}

/// Column-wise batch record: each column is one instance.
template <typename Scalar>
struct BatchTrace {
  std::vector<Matrix<Scalar>> inputs;
  std::vector<Matrix<Scalar>> pre_activations;
};

/// Forward pass on the rows of `rows` (n x input_dim); fills `trace`.
template <typename Scalar>
Vector<Scalar> forward_batch(const Architecture& arch, const Vector<Scalar>& params, const Matrix<Scalar>& rows,
                             BatchTrace<Scalar>& trace) {
  detail::check_input(arch, rows.cols());
  detail::check_parameter_count(arch, params.size());
  const Index layers = arch.layer_count();
  trace.inputs.resize(layers);
  trace.pre_activations.resize(layers);
  trace.inputs[0] = rows.transpose();
  for (Index l = 0; l < layers; ++l) {
    trace.pre_activations[l].noalias() = layer_weights(arch, params, l) * trace.inputs[l];
    trace.pre_activations[l].colwise() += layer_bias(arch, params, l);
    if (l + 1 < layers) {
      trace.inputs[l + 1] = detail::activate_array(arch.activation, trace.pre_activations[l].array()).matrix();
    }
  }
  return trace.pre_activations.back().row(0).transpose();
}

template <typename Scalar>
Vector<Scalar> forward_batch(const Architecture& arch, const Vector<Scalar>& params, const Matrix<Scalar>& rows) {
  BatchTrace<Scalar> trace;
  return forward_batch(arch, params, rows, trace);
}

/// Reverse-mode sweep from a given output seed (1 x n) down to the input
/// layer; returns d(output)/d(input) as input_dim x n.
template <typename Scalar>
Matrix<Scalar> backpropagate_to_input(const Architecture& arch, const Vector<Scalar>& params,
                                      const BatchTrace<Scalar>& trace, Matrix<Scalar> delta) {
  for (Index l = arch.layer_count() - 1; l >= 0; --l) {
    Matrix<Scalar> upstream = layer_weights(arch, params, l).transpose() * delta;
    if (l > 0) {
      upstream.array() *= detail::activate_derivative_array(arch.activation, trace.pre_activations[l - 1].array());
    }
    delta = std::move(upstream);
  }
  return delta;
}

/// Exact d f(x) / d x.
template <typename Scalar>
Vector<Scalar> input_gradient(const Architecture& arch, const Vector<Scalar>& params, const Vector<Scalar>& x) {
  ForwardTrace<Scalar> trace;
  forward(arch, params, x, trace);
  Vector<Scalar> delta = Vector<Scalar>::Ones(1);
  for (Index l = arch.layer_count() - 1; l >= 0; --l) {
    Vector<Scalar> upstream = layer_weights(arch, params, l).transpose() * delta;
    if (l > 0) {
      upstream.array() *= detail::activate_derivative_array(arch.activation, trace.pre_activations[l - 1].array());
    }
    delta = std::move(upstream);
  }
  return delta;
}

/// Input gradients for every row of `rows`; result is n x input_dim.
template <typename Scalar>
Matrix<Scalar> input_gradient_batch(const Architecture& arch, const Vector<Scalar>& params,
                                    const Matrix<Scalar>& rows) {
  BatchTrace<Scalar> trace;
  forward_batch(arch, params, rows, trace);
  return backpropagate_to_input<Scalar>(arch, params, trace, Matrix<Scalar>::Ones(1, rows.rows())).transpose();
}

enum class Loss { mse };

/// Gradient of the batch loss w.r.t. every parameter. For Loss::mse the
/// loss is (1/n) * sum_i (f(x_i) - y_i)^2. When `loss_value` is non-null
/// the loss itself is stored there.
template <typename Scalar>
Vector<Scalar> param_gradient(const Architecture& arch, const Vector<Scalar>& params, const Matrix<Scalar>& rows,
                              const Vector<Scalar>& targets, Loss loss = Loss::mse, Scalar* loss_value = nullptr) {
  if (rows.rows() == 0) {
    throw std::invalid_argument("param_gradient: empty batch");
  }
  if (targets.size() != rows.rows()) {
    throw DimensionError("param_gradient: target count", rows.rows(), targets.size());
  }
  (void)loss;
  BatchTrace<Scalar> trace;
  const Vector<Scalar> predictions = forward_batch(arch, params, rows, trace);
  const Vector<Scalar> residual = predictions - targets;
  const Scalar n = static_cast<Scalar>(rows.rows());
  if (loss_value != nullptr) {
    *loss_value = residual.squaredNorm() / n;
  }

  Vector<Scalar> grad(params.size());
  Matrix<Scalar> delta = (Scalar(2) / n) * residual.transpose();
  for (Index l = arch.layer_count() - 1; l >= 0; --l) {
    Eigen::Map<RowMajorMatrix<Scalar>> grad_w(grad.data() + arch.weight_offset(l), arch.fan_out(l), arch.fan_in(l));
    grad_w.noalias() = delta * trace.inputs[l].transpose();
    Eigen::Map<Vector<Scalar>>(grad.data() + arch.bias_offset(l), arch.fan_out(l)) = delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> upstream = layer_weights(arch, params, l).transpose() * delta;
      upstream.array() *= detail::activate_derivative_array(arch.activation, trace.pre_activations[l - 1].array());
      delta = std::move(upstream);
    }
  }
  return grad;
}

}  // namespace nfbst
