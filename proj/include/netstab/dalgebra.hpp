#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace netstab::da {

/// Truncation setup shared by all polynomials of one expansion:
/// `nvars` expansion variables, total degree capped at `order`.
struct AlgebraConfig {
  int nvars = 1;
  int order = 1;
  bool operator==(const AlgebraConfig&) const = default;
};

/// Number of monomials in `nvars` variables with total degree <= order,
/// i.e. C(nvars + order, order). Pass include_constant = false to drop
/// the degree-0 term.
std::uint64_t monomial_count(int nvars, int order, bool include_constant = true);

/// Immutable monomial enumeration for one AlgebraConfig.
///
/// Monomials are indexed canonically: by total degree first, then by
/// exponent tuple in ascending lexicographic order. Instances are cached
/// per config and shared; all members are safe to call concurrently.
class MonomialBasis {
 public:
  static std::shared_ptr<const MonomialBasis> get(const AlgebraConfig& cfg);

  const AlgebraConfig& config() const { return cfg_; }
  int nvars() const { return cfg_.nvars; }
  int order() const { return cfg_.order; }
  std::uint32_t size() const { return static_cast<std::uint32_t>(degree_.size()); }

  int degree(std::uint32_t idx) const { return degree_[idx]; }
  std::span<const std::uint8_t> exponents(std::uint32_t idx) const {
    return {exps_.data() + static_cast<std::size_t>(idx) * cfg_.nvars,
            static_cast<std::size_t>(cfg_.nvars)};
  }
  /// First monomial index of total degree d (== size() when d > order).
  std::uint32_t degree_begin(int d) const;
  /// Index of the monomial with the given exponents; throws std::out_of_range
  /// if the tuple is malformed or its degree exceeds the order.
  std::uint32_t index_of(std::span<const int> exps) const;

  /// Values of every monomial at the displacement dx (out.size() == size()).
  void eval_monomials(std::span<const double> dx, std::span<double> out) const;

  /// idx(a) * idx(b) -> idx(a+b), or UINT32_MAX when the product degree
  /// overflows the order. Null when the basis is too large to tabulate.
  const std::uint32_t* product_table() const {
    return prod_.empty() ? nullptr : prod_.data();
  }

 private:
  explicit MonomialBasis(const AlgebraConfig& cfg);
  std::uint32_t lookup(std::span<const std::uint8_t> exps) const;

  AlgebraConfig cfg_;
  std::vector<std::uint8_t> exps_;    // flat, stride nvars
  std::vector<std::uint8_t> degree_;
  std::vector<std::uint32_t> degree_begin_;  // order + 2 entries
  std::vector<std::uint32_t> prod_;          // size*size when tabulated
  // parent links: monomial i>0 equals parent_idx_[i] * x_{parent_var_[i]}
  std::vector<std::uint32_t> parent_idx_;
  std::vector<std::uint8_t> parent_var_;
};

/// Truncated multivariate Taylor polynomial (generalized dual number).
///
/// Coefficients are stored sparsely as (monomial index, value) pairs in
/// canonical index order with exact zeros dropped. Values are immutable
/// in the sense that every operation returns a fresh polynomial; sharing
/// across threads needs no synchronization.
class TPoly {
 public:
  struct Term {
    std::uint32_t index;
    double coef;
    bool operator==(const Term&) const = default;
  };

  TPoly() = default;  // null polynomial; usable only as an assignment target

  static TPoly constant(double value, std::shared_ptr<const MonomialBasis> basis);
  /// x0 + dx_i, the expansion seed for variable i.
  static TPoly variable(int i, double x0, std::shared_ptr<const MonomialBasis> basis);

  bool valid() const { return basis_ != nullptr; }
  const std::shared_ptr<const MonomialBasis>& basis() const { return basis_; }
  int nvars() const { return basis_->nvars(); }
  int order() const { return basis_->order(); }
  std::span<const Term> terms() const { return terms_; }

  double constant_part() const;
  /// Coefficient of the monomial with the given exponents.
  double coefficient(std::span<const int> exps) const;
  /// Mixed partial derivative: coefficient times the factorials of the index.
  double partial(std::span<const int> exps) const;
  /// Numeric value of the truncated polynomial at displacement dx.
  double evaluate(std::span<const double> dx) const;
  /// Same, with caller-provided monomial values from eval_monomials().
  double evaluate_precomputed(std::span<const double> monomial_values) const;
  /// Copy truncated to a lower order (new basis {nvars, new_order}).
  TPoly truncated(int new_order) const;

  TPoly operator-() const;
  TPoly& operator+=(const TPoly& rhs);
  TPoly& operator-=(const TPoly& rhs);
  TPoly& operator*=(const TPoly& rhs) { *this = *this * rhs; return *this; }
  TPoly& operator/=(const TPoly& rhs) { *this = *this / rhs; return *this; }
  TPoly& operator+=(double c);
  TPoly& operator-=(double c) { return *this += -c; }
  TPoly& operator*=(double c);
  TPoly& operator/=(double c) { return *this *= 1.0 / c; }

  friend TPoly operator+(TPoly a, const TPoly& b) { a += b; return a; }
  friend TPoly operator-(TPoly a, const TPoly& b) { a -= b; return a; }
  friend TPoly operator*(const TPoly& a, const TPoly& b);
  friend TPoly operator/(const TPoly& a, const TPoly& b);
  friend TPoly operator+(TPoly a, double c) { a += c; return a; }
  friend TPoly operator+(double c, TPoly a) { a += c; return a; }
  friend TPoly operator-(TPoly a, double c) { a += -c; return a; }
  friend TPoly operator-(double c, const TPoly& a);
  friend TPoly operator*(TPoly a, double c) { a *= c; return a; }
  friend TPoly operator*(double c, TPoly a) { a *= c; return a; }
  friend TPoly operator/(TPoly a, double c) { a *= 1.0 / c; return a; }
  friend TPoly operator/(double c, const TPoly& a);

  /// Exact coefficient-wise equality on the same config.
  bool operator==(const TPoly& rhs) const;

  friend TPoly exp(const TPoly& a);
  friend TPoly log(const TPoly& a);
  friend TPoly sin(const TPoly& a);
  friend TPoly cos(const TPoly& a);
  friend TPoly tanh(const TPoly& a);
  friend TPoly softplus(const TPoly& a);
  friend TPoly sqrt(const TPoly& a);
  friend TPoly pow(const TPoly& a, double p);
  friend TPoly pow(const TPoly& a, int p);

 private:
  void normalize();  // drop exact zeros, keep sorted
  static TPoly compose_series(const TPoly& a, std::span<const double> coeffs);
  static const MonomialBasis& common_basis(const TPoly& a, const TPoly& b);

  std::shared_ptr<const MonomialBasis> basis_;
  std::vector<Term> terms_;  // sorted by index, no exact zeros
};

/// max |coef_a - coef_b| over the union of stored terms (same config).
double max_coef_difference(const TPoly& a, const TPoly& b);
bool approx_equal(const TPoly& a, const TPoly& b, double tol);

/// Constant part of a scalar; lets generic code treat double and TPoly alike.
inline double nominal(double x) { return x; }
inline double nominal(const TPoly& p) { return p.constant_part(); }

/// log(1 + e^x) with an overflow guard for large inputs.
double softplus(double x);

}  // namespace netstab::da
