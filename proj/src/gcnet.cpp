#include "netstab/gcnet.hpp"

#include <fstream>
#include <nlohmann/json.hpp>

#include "netstab/odeflow.hpp"

namespace netstab::gcnet {

using json = nlohmann::ordered_json;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Softplus: return "softplus";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "softplus") return Activation::Softplus;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw std::runtime_error("unknown activation tag: " + s);
}

void NetSpec::validate() const {
  if (pre.shift.size() != pre.scale.size() || post.shift.size() != post.scale.size())
    throw std::invalid_argument("NetSpec: affine shift/scale sizes differ");
  if (layers.empty()) throw std::invalid_argument("NetSpec: no layers");
  Eigen::Index width = pre.shift.size();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.W.cols() != width)
      throw std::invalid_argument("NetSpec: layer " + std::to_string(i) +
                                  " input width does not chain");
    if (l.b.size() != l.W.rows())
      throw std::invalid_argument("NetSpec: layer " + std::to_string(i) + " bias size mismatch");
    width = l.W.rows();
  }
  if (width != post.shift.size())
    throw std::invalid_argument("NetSpec: output width does not match post transform");
  for (Eigen::Index i = 0; i < pre.scale.size(); ++i)
    if (pre.scale[i] == 0.0) throw std::invalid_argument("NetSpec: zero pre scale");
}

Affine identity_affine(int dim) {
  Affine a;
  a.shift = Eigen::VectorXd::Zero(dim);
  a.scale = Eigen::VectorXd::Ones(dim);
  return a;
}

std::vector<double> forward_real(const NetSpec& net, const Eigen::VectorXd& x) {
  std::vector<double> in(x.data(), x.data() + x.size());
  return forward(net, in);
}

Eigen::MatrixXd input_jacobian(const NetSpec& net, const Eigen::VectorXd& x) {
  const int n = net.input_dim();
  const int m = net.output_dim();
  if (x.size() != n) throw std::invalid_argument("input_jacobian: dimension mismatch");
  auto basis = da::MonomialBasis::get({n, 1});
  std::vector<da::TPoly> seeds;
  seeds.reserve(n);
  for (int i = 0; i < n; ++i) seeds.push_back(da::TPoly::variable(i, x[i], basis));
  std::vector<da::TPoly> out = forward(net, seeds);
  Eigen::MatrixXd jac(m, n);
  std::vector<int> e(n, 0);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) {
      e[c] = 1;
      jac(r, c) = out[r].coefficient(e);
      e[c] = 0;
    }
  return jac;
}

namespace {

Eigen::VectorXd closed_loop_value(const NetSpec& net, const ode::QuadParams& p,
                                  const Eigen::VectorXd& x) {
  std::vector<double> xs(x.data(), x.data() + x.size());
  std::vector<double> f = ode::closed_loop_rhs(xs, net, p);
  return Eigen::Map<Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
}

Eigen::MatrixXd closed_loop_jacobian(const NetSpec& net, const ode::QuadParams& p,
                                     const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  auto basis = da::MonomialBasis::get({n, 1});
  std::vector<da::TPoly> seeds;
  for (int i = 0; i < n; ++i) seeds.push_back(da::TPoly::variable(i, x[i], basis));
  std::vector<da::TPoly> f = ode::closed_loop_rhs(seeds, net, p);
  Eigen::MatrixXd jac(n, n);
  std::vector<int> e(n, 0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      e[c] = 1;
      jac(r, c) = f[r].coefficient(e);
      e[c] = 0;
    }
  return jac;
}

}  // namespace

Equilibrium find_equilibrium(const NetSpec& net, const ode::QuadParams& plant,
                             const FindEqOptions& opts) {
  net.validate();
  if (net.input_dim() != ode::kStateDim || net.output_dim() != 2)
    throw std::invalid_argument("find_equilibrium: network must map R^5 -> R^2");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(ode::kStateDim);
  Eigen::VectorXd f = closed_loop_value(net, plant, x);
  double fnorm = f.norm();

  Equilibrium eq;
  for (int it = 0; it < opts.max_iter && fnorm >= opts.tol; ++it) {
    eq.iterations = it + 1;
    Eigen::MatrixXd jac = closed_loop_jacobian(net, plant, x);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) break;
    Eigen::VectorXd step = lu.solve(-f);

    // damped update: halve until the residual actually decreases
    double alpha = 1.0;
    bool improved = false;
    for (int halving = 0; halving <= 10; ++halving) {
      Eigen::VectorXd xt = x + alpha * step;
      Eigen::VectorXd ft = closed_loop_value(net, plant, xt);
      if (ft.norm() < fnorm) {
        x = xt;
        f = ft;
        fnorm = ft.norm();
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;
  }

  eq.x_hat = x;
  std::vector<double> u = forward_real(net, x);
  eq.u_e = Eigen::Map<Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  eq.residual = fnorm;
  eq.converged = fnorm < opts.tol;
  return eq;
}

NetSpec shift_axes(const NetSpec& net, const Eigen::VectorXd& x_hat) {
  if (x_hat.size() != net.input_dim())
    throw std::invalid_argument("shift_axes: dimension mismatch");
  NetSpec shifted = net;
  shifted.pre.shift -= x_hat;
  return shifted;
}

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vec_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
  return v;
}

}  // namespace

void save_weights(const NetSpec& net, const std::filesystem::path& path) {
  net.validate();
  json doc;
  doc["format"] = 1;
  doc["pre"] = {{"shift", vec_to_json(net.pre.shift)}, {"scale", vec_to_json(net.pre.scale)}};
  doc["post"] = {{"scale", vec_to_json(net.post.scale)}, {"shift", vec_to_json(net.post.shift)}};
  json layers = json::array();
  for (const Layer& l : net.layers) {
    json w = json::array();
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) row.push_back(l.W(r, c));
      w.push_back(row);
    }
    layers.push_back({{"W", w}, {"b", vec_to_json(l.b)}, {"act", to_string(l.act)}});
  }
  doc["layers"] = layers;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_weights: cannot open " + path.string());
  out << doc.dump(2) << "\n";
}

NetSpec load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_weights: cannot open " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw std::runtime_error("load_weights: malformed JSON in " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format") || doc["format"].get<int>() != 1)
    throw std::runtime_error("load_weights: unsupported format field");

  NetSpec net;
  net.pre.shift = vec_from_json(doc.at("pre").at("shift"));
  net.pre.scale = vec_from_json(doc.at("pre").at("scale"));
  net.post.scale = vec_from_json(doc.at("post").at("scale"));
  net.post.shift = vec_from_json(doc.at("post").at("shift"));
  for (const json& jl : doc.at("layers")) {
    Layer l;
    const json& w = jl.at("W");
    const auto rows = w.size();
    if (rows == 0) throw std::runtime_error("load_weights: empty weight matrix");
    const auto cols = w[0].size();
    l.W.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
      if (w[r].size() != cols) throw std::runtime_error("load_weights: ragged weight matrix");
      for (std::size_t c = 0; c < cols; ++c)
        l.W(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w[r][c].get<double>();
    }
    l.b = vec_from_json(jl.at("b"));
    l.act = activation_from_string(jl.at("act").get<std::string>());
    net.layers.push_back(std::move(l));
  }
  try {
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("load_weights: ") + e.what());
  }
  return net;
}

}  // namespace netstab::gcnet
