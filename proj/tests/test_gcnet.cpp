#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "netstab/gcnet.hpp"
#include "netstab/odeflow.hpp"
#include "test_nets.hpp"

using namespace netstab;
using namespace netstab::gcnet;
using netstab::da::MonomialBasis;
using netstab::da::TPoly;

namespace {

const ode::QuadParams kQuad{};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("netstab_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("identity network") {
  auto net = testutil::make_identity_net(4);
  std::vector<double> x{0.3, -1.2, 5.0, 0.0};
  auto y = forward(net, x);
  for (int i = 0; i < 4; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("zero-weight network evaluates by hand") {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  NetSpec net;
  net.pre = identity_affine(5);
  net.post = testutil::quad_post();
  net.layers.push_back({MatrixXd::Zero(8, 5), VectorXd::Zero(8), Activation::Softplus});
  net.layers.push_back({MatrixXd::Zero(2, 8), VectorXd::Zero(2), Activation::Tanh});
  // hidden outputs are all softplus(0) = ln 2, final tanh(0) = 0,
  // so the control is exactly the post shift
  std::vector<double> x{1.0, 2.0, 3.0, 4.0, 5.0};
  auto u = forward(net, x);
  CHECK(u[0] == 0.5);
  CHECK(u[1] == 0.0);
}

TEST_CASE("polynomial constant part equals real forward") {
  auto net = testutil::make_random_mlp(3, 10, 11);
  auto basis = MonomialBasis::get({5, 2});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-3.0, 3.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x{d(rng), d(rng), d(rng), d(rng), d(rng)};
    std::vector<TPoly> seeds;
    for (int i = 0; i < 5; ++i) seeds.push_back(TPoly::variable(i, x[i], basis));
    auto real = forward(net, x);
    auto poly = forward(net, seeds);
    for (int k = 0; k < 2; ++k) CHECK(poly[k].constant_part() == real[k]);
  }
}

TEST_CASE("input jacobian") {
  auto id = testutil::make_identity_net(3);
  Eigen::MatrixXd j = input_jacobian(id, Eigen::Vector3d(0.1, 0.2, 0.3));
  CHECK((j - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

  auto constant = testutil::make_constant_net({0.7, 0.1});
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(5);
  CHECK(input_jacobian(constant, x0).cwiseAbs().maxCoeff() == 0.0);

  // finite-difference oracle on a generic network
  auto net = testutil::make_random_mlp(2, 12, 21);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = d(rng);
    Eigen::MatrixXd jac = input_jacobian(net, x);
    const double h = 1e-6;
    for (int c = 0; c < 5; ++c) {
      Eigen::VectorXd xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      auto fp = forward_real(net, xp);
      auto fm = forward_real(net, xm);
      for (int r = 0; r < 2; ++r) {
        const double fd = (fp[r] - fm[r]) / (2 * h);
        CHECK(std::abs(jac(r, c) - fd) <=
              1e-5 * std::max({1.0, std::abs(fd), std::abs(jac(r, c))}));
      }
    }
  }
}

TEST_CASE("second-order expansion matches finite differences") {
  auto net = testutil::make_random_mlp(2, 8, 33);
  auto basis = MonomialBasis::get({5, 2});
  Eigen::VectorXd x(5);
  x << 0.4, -0.3, 0.8, 0.1, -0.2;
  std::vector<TPoly> seeds;
  for (int i = 0; i < 5; ++i) seeds.push_back(TPoly::variable(i, x[i], basis));
  auto out = forward(net, seeds);

  const double h = 1e-4;
  for (int r = 0; r < 2; ++r) {
    for (int i = 0; i < 5; ++i) {
      std::vector<int> e(5, 0);
      e[i] = 2;
      const double d2 = out[r].partial(e);
      Eigen::VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd = (forward_real(net, xp)[r] - 2 * forward_real(net, x)[r] +
                         forward_real(net, xm)[r]) /
                        (h * h);
      CHECK(std::abs(d2 - fd) <= 1e-3 * std::max({1.0, std::abs(d2), std::abs(fd)}));
    }
  }
}

TEST_CASE("control outputs stay in the box") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(-50.0, 50.0);
  for (int n = 0; n < 5; ++n) {
    auto net = testutil::make_random_mlp(1 + n % 3, 6 + n, 100 + n, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x{d(rng), d(rng), d(rng), d(rng), d(rng)};
      auto u = forward(net, x);
      CHECK(u[0] >= 0.0);
      CHECK(u[0] <= 1.0);
      CHECK(u[1] >= -1.0);
      CHECK(u[1] <= 1.0);
    }
  }
}

TEST_CASE("find_equilibrium") {
  // constructed feedback with its equilibrium exactly at the origin
  auto net = testutil::make_stabilizing_net(kQuad);
  auto eq = find_equilibrium(net, kQuad);
  CHECK(eq.converged);
  CHECK(eq.x_hat.norm() < 1e-10);
  CHECK(std::abs(eq.u_e[0] - kQuad.hover_thrust()) < 1e-12);

  // perturbed bias moves the equilibrium off the origin but keeps it close
  NetSpec off = net;
  off.layers[0].b[1] += 0.0005;
  auto eq2 = find_equilibrium(off, kQuad);
  CHECK(eq2.converged);
  CHECK(eq2.x_hat.norm() > 1e-8);
  CHECK(eq2.x_hat.norm() < 0.5);
  std::vector<double> xs(eq2.x_hat.data(), eq2.x_hat.data() + 5);
  for (double v : ode::closed_loop_rhs(xs, off, kQuad)) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("shift_axes") {
  auto net = testutil::make_stabilizing_net(kQuad);
  NetSpec off = net;
  off.layers[0].b[1] += 0.02;
  auto eq = find_equilibrium(off, kQuad);
  REQUIRE(eq.converged);

  // zero shift leaves the network unchanged
  auto same = shift_axes(off, Eigen::VectorXd::Zero(5));
  CHECK((same.pre.shift - off.pre.shift).cwiseAbs().maxCoeff() == 0.0);

  auto shifted = shift_axes(off, eq.x_hat);
  // shifted net at origin equals the original at x_hat, exactly
  std::vector<double> origin(5, 0.0);
  std::vector<double> xhat(eq.x_hat.data(), eq.x_hat.data() + 5);
  auto u_shift = forward(shifted, origin);
  auto u_orig = forward(off, xhat);
  CHECK(u_shift[0] == u_orig[0]);
  CHECK(u_shift[1] == u_orig[1]);

  for (double v : ode::closed_loop_rhs(origin, shifted, kQuad)) CHECK(std::abs(v) < 1e-10);

  // idempotence: the shifted system's own equilibrium is the origin
  auto eq2 = find_equilibrium(shifted, kQuad);
  CHECK(eq2.converged);
  CHECK(eq2.x_hat.norm() < 1e-10);
}

TEST_CASE("weight persistence") {
  TempDir tmp;
  auto net = testutil::make_random_mlp(2, 7, 55);
  const auto p1 = tmp.path / "net.json";
  const auto p2 = tmp.path / "net2.json";
  save_weights(net, p1);
  NetSpec loaded = load_weights(p1);
  save_weights(loaded, p2);
  CHECK(slurp(p1) == slurp(p2));

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> d(-4.0, 4.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x{d(rng), d(rng), d(rng), d(rng), d(rng)};
    auto a = forward(net, x);
    auto b = forward(loaded, x);
    CHECK(a[0] == b[0]);
    CHECK(a[1] == b[1]);
  }

  // a file whose layer widths do not chain is rejected
  const auto pbad = tmp.path / "bad.json";
  {
    std::ofstream out(pbad);
    out << R"({"format":1,
      "pre":{"shift":[0,0,0,0,0],"scale":[1,1,1,1,1]},
      "post":{"scale":[0.5,1],"shift":[0.5,0]},
      "layers":[
        {"W":[[0,0,0,0,0],[0,0,0,0,0]],"b":[0,0],"act":"softplus"},
        {"W":[[1,2,3],[4,5,6]],"b":[0,0],"act":"tanh"}]})";
  }
  CHECK_THROWS_AS(load_weights(pbad), std::runtime_error);

  CHECK_THROWS_AS(load_weights(tmp.path / "missing.json"), std::runtime_error);
  {
    std::ofstream out(tmp.path / "garbage.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(load_weights(tmp.path / "garbage.json"), std::runtime_error);
}
