#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "netstab/dalgebra.hpp"

namespace netstab::ode {
struct QuadParams;
}

namespace netstab::gcnet {

enum class Activation { Softplus, Tanh, Linear };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct Layer {
  Eigen::MatrixXd W;  // rows = output neurons
  Eigen::VectorXd b;
  Activation act = Activation::Softplus;
};

/// Per-component affine transform. As a pre-transform it standardizes the
/// input, (x - shift) / scale; as a post-transform it rescales the output,
/// scale * y + shift.
struct Affine {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
};

struct NetSpec {
  Affine pre;
  std::vector<Layer> layers;
  Affine post;

  int input_dim() const { return static_cast<int>(pre.shift.size()); }
  int output_dim() const { return static_cast<int>(post.shift.size()); }
  /// Throws std::invalid_argument when layer dimensions do not chain.
  void validate() const;
};

/// Identity pre/post transform of the given dimension.
Affine identity_affine(int dim);

/// Layer-by-layer evaluation over any scalar supporting the elementary set.
template <class S>
std::vector<S> forward(const NetSpec& net, const std::vector<S>& x) {
  using std::tanh;
  using netstab::da::softplus;
  if (static_cast<int>(x.size()) != net.input_dim())
    throw std::invalid_argument("forward: input dimension mismatch");

  std::vector<S> layer;
  layer.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    layer.push_back((x[i] - net.pre.shift[static_cast<Eigen::Index>(i)]) /
                    net.pre.scale[static_cast<Eigen::Index>(i)]);

  for (const Layer& l : net.layers) {
    const auto rows = l.W.rows();
    const auto cols = l.W.cols();
    if (cols != static_cast<Eigen::Index>(layer.size()))
      throw std::invalid_argument("forward: layer dimension mismatch");
    std::vector<S> next;
    next.reserve(rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      S acc = layer[0] * l.W(r, 0);
      for (Eigen::Index c = 1; c < cols; ++c) acc += layer[c] * l.W(r, c);
      acc += l.b[r];
      switch (l.act) {
        case Activation::Softplus: next.push_back(softplus(acc)); break;
        case Activation::Tanh: next.push_back(tanh(acc)); break;
        case Activation::Linear: next.push_back(std::move(acc)); break;
      }
    }
    layer = std::move(next);
  }

  if (static_cast<int>(layer.size()) != net.output_dim())
    throw std::invalid_argument("forward: output dimension mismatch");
  for (std::size_t i = 0; i < layer.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    layer[i] = layer[i] * net.post.scale[k] + net.post.shift[k];
  }
  return layer;
}

std::vector<double> forward_real(const NetSpec& net, const Eigen::VectorXd& x);

/// Exact Jacobian d(output)/d(input) via first-order polynomial arithmetic.
Eigen::MatrixXd input_jacobian(const NetSpec& net, const Eigen::VectorXd& x);

struct Equilibrium {
  Eigen::VectorXd x_hat;
  Eigen::VectorXd u_e;
  double residual = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct FindEqOptions {
  double tol = 1e-12;
  int max_iter = 50;
};

/// Damped Newton search for the closed-loop equilibrium of the quadcopter
/// under this network, started from the origin.
Equilibrium find_equilibrium(const NetSpec& net, const ode::QuadParams& plant,
                             const FindEqOptions& opts = {});

/// Returns a network with the pre-transform shift composed with x_hat, so
/// the shifted closed loop has its equilibrium at the origin.
NetSpec shift_axes(const NetSpec& net, const Eigen::VectorXd& x_hat);

void save_weights(const NetSpec& net, const std::filesystem::path& path);
NetSpec load_weights(const std::filesystem::path& path);

}  // namespace netstab::gcnet
