#include "netstab/dalgebra.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace netstab::da {

namespace {

void check_config(const AlgebraConfig& cfg) {
  if (cfg.nvars < 1 || cfg.order < 1)
    throw std::invalid_argument("AlgebraConfig: nvars and order must be >= 1");
  if (cfg.order > 255)
    throw std::invalid_argument("AlgebraConfig: order too large");
  if (monomial_count(cfg.nvars, cfg.order) > 1'000'000)
    throw std::invalid_argument("AlgebraConfig: monomial count exceeds 1e6");
}

// degree-then-ascending-lex comparison of exponent tuples
bool canonical_less(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  const int da = std::accumulate(a.begin(), a.end(), 0);
  const int db = std::accumulate(b.begin(), b.end(), 0);
  if (da != db) return da < db;
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

constexpr std::uint32_t kTruncated = UINT32_MAX;
constexpr std::uint32_t kProductTableLimit = 2048;  // 2048^2 * 4B = 16 MB

}  // namespace

std::uint64_t monomial_count(int nvars, int order, bool include_constant) {
  if (nvars < 1 || order < 1) throw std::invalid_argument("monomial_count: nvars, order >= 1");
  // C(nvars + order, order) built incrementally to stay exact in 64 bits
  std::uint64_t c = 1;
  for (int i = 1; i <= order; ++i) c = c * (nvars + i) / i;
  return include_constant ? c : c - 1;
}

MonomialBasis::MonomialBasis(const AlgebraConfig& cfg) : cfg_(cfg) {
  check_config(cfg);
  const int n = cfg.nvars;
  const auto count = monomial_count(n, cfg.order);

  // enumerate every tuple with total degree <= order
  exps_.reserve(count * n);
  degree_.reserve(count);
  std::vector<std::uint8_t> cur(n, 0);
  // odometer over tuples bounded by remaining degree
  std::vector<std::vector<std::uint8_t>> all;
  all.reserve(count);
  struct Rec {
    int pos, remaining;
  };
  std::vector<std::uint8_t> tuple(n, 0);
  auto emit = [&](auto&& self, int pos, int remaining) -> void {
    if (pos == n - 1) {
      for (int e = 0; e <= remaining; ++e) {
        tuple[pos] = static_cast<std::uint8_t>(e);
        all.push_back(tuple);
      }
      tuple[pos] = 0;
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      tuple[pos] = static_cast<std::uint8_t>(e);
      self(self, pos + 1, remaining - e);
    }
    tuple[pos] = 0;
  };
  emit(emit, 0, cfg.order);

  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return canonical_less({a.data(), a.size()}, {b.data(), b.size()});
  });

  for (const auto& e : all) {
    exps_.insert(exps_.end(), e.begin(), e.end());
    degree_.push_back(static_cast<std::uint8_t>(std::accumulate(e.begin(), e.end(), 0)));
  }

  degree_begin_.assign(cfg.order + 2, static_cast<std::uint32_t>(all.size()));
  for (std::uint32_t i = static_cast<std::uint32_t>(all.size()); i-- > 0;)
    degree_begin_[degree_[i]] = i;
  // degrees are contiguous, fill any gap (there are none, but keep it tight)
  for (int d = cfg.order; d >= 0; --d)
    if (degree_begin_[d] > degree_begin_[d + 1]) degree_begin_[d] = degree_begin_[d + 1];

  parent_idx_.assign(all.size(), 0);
  parent_var_.assign(all.size(), 0);
  std::vector<std::uint8_t> tmp(n);
  for (std::uint32_t i = 1; i < all.size(); ++i) {
    auto e = exponents(i);
    std::copy(e.begin(), e.end(), tmp.begin());
    for (int v = 0; v < n; ++v) {
      if (tmp[v] > 0) {
        --tmp[v];
        parent_idx_[i] = lookup({tmp.data(), tmp.size()});
        parent_var_[i] = static_cast<std::uint8_t>(v);
        break;
      }
    }
  }

  if (all.size() <= kProductTableLimit) {
    const std::uint32_t m = static_cast<std::uint32_t>(all.size());
    prod_.assign(static_cast<std::size_t>(m) * m, kTruncated);
    for (std::uint32_t i = 0; i < m; ++i) {
      auto ei = exponents(i);
      for (std::uint32_t j = 0; j < m; ++j) {
        if (degree_[i] + degree_[j] > cfg.order) continue;
        auto ej = exponents(j);
        for (int v = 0; v < n; ++v) tmp[v] = static_cast<std::uint8_t>(ei[v] + ej[v]);
        prod_[static_cast<std::size_t>(i) * m + j] = lookup({tmp.data(), tmp.size()});
      }
    }
  }
}

std::uint32_t MonomialBasis::lookup(std::span<const std::uint8_t> exps) const {
  const int n = cfg_.nvars;
  std::uint32_t lo = 0, hi = size();
  while (lo < hi) {
    const std::uint32_t mid = lo + (hi - lo) / 2;
    auto e = std::span<const std::uint8_t>(exps_.data() + static_cast<std::size_t>(mid) * n,
                                           static_cast<std::size_t>(n));
    if (canonical_less(e, exps))
      lo = mid + 1;
    else
      hi = mid;
  }
  if (lo >= size()) throw std::out_of_range("MonomialBasis: exponent tuple not in basis");
  auto e = exponents(lo);
  if (!std::equal(e.begin(), e.end(), exps.begin()))
    throw std::out_of_range("MonomialBasis: exponent tuple not in basis");
  return lo;
}

std::uint32_t MonomialBasis::degree_begin(int d) const {
  if (d < 0) return 0;
  if (d > cfg_.order + 1) d = cfg_.order + 1;
  return degree_begin_[d];
}

std::uint32_t MonomialBasis::index_of(std::span<const int> exps) const {
  if (static_cast<int>(exps.size()) != cfg_.nvars)
    throw std::out_of_range("index_of: wrong number of exponents");
  int total = 0;
  std::vector<std::uint8_t> e(cfg_.nvars);
  for (int v = 0; v < cfg_.nvars; ++v) {
    if (exps[v] < 0) throw std::out_of_range("index_of: negative exponent");
    total += exps[v];
    e[v] = static_cast<std::uint8_t>(exps[v]);
  }
  if (total > cfg_.order) throw std::out_of_range("index_of: degree exceeds order");
  return lookup({e.data(), e.size()});
}

void MonomialBasis::eval_monomials(std::span<const double> dx, std::span<double> out) const {
  if (static_cast<int>(dx.size()) != cfg_.nvars)
    throw std::invalid_argument("eval_monomials: dx length mismatch");
  if (out.size() != size()) throw std::invalid_argument("eval_monomials: out length mismatch");
  out[0] = 1.0;
  for (std::uint32_t i = 1; i < size(); ++i)
    out[i] = out[parent_idx_[i]] * dx[parent_var_[i]];
}

std::shared_ptr<const MonomialBasis> MonomialBasis::get(const AlgebraConfig& cfg) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const MonomialBasis>> cache;
  std::lock_guard lock(mu);
  auto key = std::make_pair(cfg.nvars, cfg.order);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto basis = std::shared_ptr<const MonomialBasis>(new MonomialBasis(cfg));
  cache.emplace(key, basis);
  return basis;
}

// ---------------------------------------------------------------------------
// TPoly
// ---------------------------------------------------------------------------

const MonomialBasis& TPoly::common_basis(const TPoly& a, const TPoly& b) {
  if (!a.valid() || !b.valid()) throw std::invalid_argument("TPoly: null operand");
  if (a.basis_ != b.basis_ && !(a.basis_->config() == b.basis_->config()))
    throw std::invalid_argument("TPoly: config mismatch");
  return *a.basis_;
}

TPoly TPoly::constant(double value, std::shared_ptr<const MonomialBasis> basis) {
  if (!basis) throw std::invalid_argument("TPoly::constant: null basis");
  TPoly p;
  p.basis_ = std::move(basis);
  if (value != 0.0) p.terms_.push_back({0, value});
  return p;
}

TPoly TPoly::variable(int i, double x0, std::shared_ptr<const MonomialBasis> basis) {
  if (!basis) throw std::invalid_argument("TPoly::variable: null basis");
  if (i < 0 || i >= basis->nvars()) throw std::out_of_range("TPoly::variable: index out of range");
  TPoly p;
  p.basis_ = std::move(basis);
  if (x0 != 0.0) p.terms_.push_back({0, x0});
  // degree-1 monomials sit right after the constant, in variable order
  std::vector<int> e(p.basis_->nvars(), 0);
  e[i] = 1;
  p.terms_.push_back({p.basis_->index_of(e), 1.0});
  return p;
}

double TPoly::constant_part() const {
  if (!valid()) throw std::invalid_argument("TPoly: null polynomial");
  if (!terms_.empty() && terms_.front().index == 0) return terms_.front().coef;
  return 0.0;
}

double TPoly::coefficient(std::span<const int> exps) const {
  if (!valid()) throw std::invalid_argument("TPoly: null polynomial");
  const std::uint32_t idx = basis_->index_of(exps);
  auto it = std::lower_bound(terms_.begin(), terms_.end(), idx,
                             [](const Term& t, std::uint32_t i) { return t.index < i; });
  return (it != terms_.end() && it->index == idx) ? it->coef : 0.0;
}

double TPoly::partial(std::span<const int> exps) const {
  double c = coefficient(exps);
  double fact = 1.0;
  for (int e : exps)
    for (int k = 2; k <= e; ++k) fact *= k;
  return c * fact;
}

double TPoly::evaluate(std::span<const double> dx) const {
  if (!valid()) throw std::invalid_argument("TPoly: null polynomial");
  std::vector<double> vals(basis_->size());
  basis_->eval_monomials(dx, vals);
  return evaluate_precomputed(vals);
}

double TPoly::evaluate_precomputed(std::span<const double> monomial_values) const {
  double acc = 0.0;
  for (const Term& t : terms_) acc += t.coef * monomial_values[t.index];
  return acc;
}

TPoly TPoly::truncated(int new_order) const {
  if (!valid()) throw std::invalid_argument("TPoly: null polynomial");
  if (new_order < 1 || new_order > order())
    throw std::invalid_argument("TPoly::truncated: order must be in [1, order]");
  auto nb = MonomialBasis::get({nvars(), new_order});
  TPoly p;
  p.basis_ = nb;
  const std::uint32_t keep = basis_->degree_begin(new_order + 1);
  std::vector<int> e(nvars());
  for (const Term& t : terms_) {
    if (t.index >= keep) break;
    auto ex = basis_->exponents(t.index);
    std::copy(ex.begin(), ex.end(), e.begin());
    p.terms_.push_back({nb->index_of(e), t.coef});
  }
  return p;
}

void TPoly::normalize() {
  std::erase_if(terms_, [](const Term& t) { return t.coef == 0.0; });
}

TPoly TPoly::operator-() const {
  TPoly p(*this);
  for (Term& t : p.terms_) t.coef = -t.coef;
  return p;
}

TPoly& TPoly::operator+=(const TPoly& rhs) {
  common_basis(*this, rhs);
  std::vector<Term> merged;
  merged.reserve(terms_.size() + rhs.terms_.size());
  auto a = terms_.begin();
  auto b = rhs.terms_.begin();
  while (a != terms_.end() && b != rhs.terms_.end()) {
    if (a->index < b->index)
      merged.push_back(*a++);
    else if (b->index < a->index)
      merged.push_back(*b++);
    else {
      const double c = a->coef + b->coef;
      if (c != 0.0) merged.push_back({a->index, c});
      ++a;
      ++b;
    }
  }
  merged.insert(merged.end(), a, terms_.end());
  merged.insert(merged.end(), b, rhs.terms_.end());
  terms_ = std::move(merged);
  return *this;
}

TPoly& TPoly::operator-=(const TPoly& rhs) {
  common_basis(*this, rhs);
  std::vector<Term> merged;
  merged.reserve(terms_.size() + rhs.terms_.size());
  auto a = terms_.begin();
  auto b = rhs.terms_.begin();
  while (a != terms_.end() && b != rhs.terms_.end()) {
    if (a->index < b->index)
      merged.push_back(*a++);
    else if (b->index < a->index) {
      merged.push_back({b->index, -b->coef});
      ++b;
    } else {
      const double c = a->coef - b->coef;
      if (c != 0.0) merged.push_back({a->index, c});
      ++a;
      ++b;
    }
  }
  merged.insert(merged.end(), a, terms_.end());
  for (; b != rhs.terms_.end(); ++b) merged.push_back({b->index, -b->coef});
  terms_ = std::move(merged);
  return *this;
}

TPoly& TPoly::operator+=(double c) {
  if (!valid()) throw std::invalid_argument("TPoly: null polynomial");
  if (c == 0.0) return *this;
  if (!terms_.empty() && terms_.front().index == 0) {
    terms_.front().coef += c;
    if (terms_.front().coef == 0.0) terms_.erase(terms_.begin());
  } else {
    terms_.insert(terms_.begin(), {0, c});
  }
  return *this;
}

TPoly& TPoly::operator*=(double c) {
  if (!valid()) throw std::invalid_argument("TPoly: null polynomial");
  if (c == 0.0) {
    terms_.clear();
    return *this;
  }
  for (Term& t : terms_) t.coef *= c;
  return *this;
}

TPoly operator*(const TPoly& a, const TPoly& b) {
  const MonomialBasis& basis = TPoly::common_basis(a, b);
  const int order = basis.order();
  std::vector<double> scratch(basis.size(), 0.0);
  const std::uint32_t* table = basis.product_table();
  const std::uint32_t n = basis.size();

  for (const TPoly::Term& ta : a.terms_) {
    const int da = basis.degree(ta.index);
    const std::uint32_t b_end = basis.degree_begin(order - da + 1);
    if (table) {
      const std::uint32_t* row = table + static_cast<std::size_t>(ta.index) * n;
      for (const TPoly::Term& tb : b.terms_) {
        if (tb.index >= b_end) break;
        scratch[row[tb.index]] += ta.coef * tb.coef;
      }
    } else {
      auto ea = basis.exponents(ta.index);
      std::vector<int> e(basis.nvars());
      for (const TPoly::Term& tb : b.terms_) {
        if (tb.index >= b_end) break;
        auto eb = basis.exponents(tb.index);
        for (int v = 0; v < basis.nvars(); ++v) e[v] = ea[v] + eb[v];
        scratch[basis.index_of(e)] += ta.coef * tb.coef;
      }
    }
  }

  TPoly r;
  r.basis_ = a.basis_;
  for (std::uint32_t i = 0; i < n; ++i)
    if (scratch[i] != 0.0) r.terms_.push_back({i, scratch[i]});
  return r;
}

TPoly operator/(const TPoly& a, const TPoly& b) {
  TPoly::common_basis(a, b);
  return a * (1.0 / b);
}

TPoly operator-(double c, const TPoly& a) {
  TPoly r = -a;
  r += c;
  return r;
}

TPoly operator/(double c, const TPoly& a) {
  const double a0 = a.constant_part();
  if (a0 == 0.0) throw std::domain_error("TPoly: division by polynomial with zero constant part");
  // 1/(a0 + w) = (1/a0) * sum_i (-w/a0)^i, truncated
  const int k = a.order();
  std::vector<double> coeffs(k + 1);
  double s = 1.0 / a0;
  for (int i = 0; i <= k; ++i) {
    coeffs[i] = s;
    s *= -1.0 / a0;
  }
  TPoly r = TPoly::compose_series(a, coeffs);
  r *= c;
  return r;
}

bool TPoly::operator==(const TPoly& rhs) const {
  if (!valid() || !rhs.valid()) return valid() == rhs.valid();
  if (!(basis_->config() == rhs.basis_->config())) return false;
  return terms_ == rhs.terms_;
}

double max_coef_difference(const TPoly& a, const TPoly& b) {
  TPoly d = a - b;
  double m = 0.0;
  for (const auto& t : d.terms()) m = std::max(m, std::abs(t.coef));
  return m;
}

bool approx_equal(const TPoly& a, const TPoly& b, double tol) {
  return max_coef_difference(a, b) <= tol;
}

// ---------------------------------------------------------------------------
// elementary functions: univariate series composed with the nilpotent part
// ---------------------------------------------------------------------------

// Horner evaluation of sum_i coeffs[i] * w^i where w = a - const(a)
TPoly TPoly::compose_series(const TPoly& a, std::span<const double> coeffs) {
  TPoly w(a);
  if (!w.terms_.empty() && w.terms_.front().index == 0) w.terms_.erase(w.terms_.begin());
  TPoly r = TPoly::constant(coeffs.back(), a.basis_);
  for (int i = static_cast<int>(coeffs.size()) - 2; i >= 0; --i) {
    r = r * w;
    r += coeffs[i];
  }
  return r;
}

double softplus(double x) {
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Taylor coefficients of f about c, for f whose m-th derivative is
// P_m(y) with y = g(c) and dy/dc = chain(y); used for tanh and softplus.
// P_{m+1} = P_m' * chain.
std::vector<double> poly_recursion_coeffs(int k, double f0, double y,
                                          std::span<const double> chain,
                                          std::span<const double> p1) {
  std::vector<double> coeffs(k + 1);
  coeffs[0] = f0;
  std::vector<double> pm(p1.begin(), p1.end());
  double fact = 1.0;
  for (int m = 1; m <= k; ++m) {
    fact *= m;
    double val = 0.0, ypow = 1.0;
    for (double c : pm) {
      val += c * ypow;
      ypow *= y;
    }
    coeffs[m] = val / fact;
    if (m == k) break;
    // derivative of pm, then multiply by chain polynomial
    std::vector<double> dpm(pm.size() > 1 ? pm.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < pm.size(); ++i) dpm[i - 1] = pm[i] * static_cast<double>(i);
    std::vector<double> next(dpm.size() + chain.size() - 1, 0.0);
    for (std::size_t i = 0; i < dpm.size(); ++i)
      for (std::size_t j = 0; j < chain.size(); ++j) next[i + j] += dpm[i] * chain[j];
    pm = std::move(next);
  }
  return coeffs;
}

}  // namespace

TPoly exp(const TPoly& a) {
  const int k = a.order();
  const double e0 = std::exp(a.constant_part());
  std::vector<double> coeffs(k + 1);
  double f = 1.0;
  for (int i = 0; i <= k; ++i) {
    if (i > 0) f *= i;
    coeffs[i] = e0 / f;
  }
  return TPoly::compose_series(a, coeffs);
}

TPoly log(const TPoly& a) {
  const double c = a.constant_part();
  if (!(c > 0.0)) throw std::domain_error("TPoly log: constant part must be positive");
  const int k = a.order();
  std::vector<double> coeffs(k + 1);
  coeffs[0] = std::log(c);
  double invc = 1.0 / c, p = invc;
  for (int i = 1; i <= k; ++i) {
    coeffs[i] = (i % 2 == 1 ? 1.0 : -1.0) * p / i;
    p *= invc;
  }
  return TPoly::compose_series(a, coeffs);
}

TPoly sin(const TPoly& a) {
  const double c = a.constant_part();
  const int k = a.order();
  const double s = std::sin(c), co = std::cos(c);
  const double cycle[4] = {s, co, -s, -co};
  std::vector<double> coeffs(k + 1);
  double f = 1.0;
  for (int i = 0; i <= k; ++i) {
    if (i > 0) f *= i;
    coeffs[i] = cycle[i % 4] / f;
  }
  return TPoly::compose_series(a, coeffs);
}

TPoly cos(const TPoly& a) {
  const double c = a.constant_part();
  const int k = a.order();
  const double s = std::sin(c), co = std::cos(c);
  const double cycle[4] = {co, -s, -co, s};
  std::vector<double> coeffs(k + 1);
  double f = 1.0;
  for (int i = 0; i <= k; ++i) {
    if (i > 0) f *= i;
    coeffs[i] = cycle[i % 4] / f;
  }
  return TPoly::compose_series(a, coeffs);
}

TPoly tanh(const TPoly& a) {
  const double c = a.constant_part();
  const int k = a.order();
  const double t = std::tanh(c);
  // d/dc tanh = 1 - t^2; m-th derivative is a polynomial in t
  const double chain[3] = {1.0, 0.0, -1.0};
  const double p1[3] = {1.0, 0.0, -1.0};
  auto coeffs = poly_recursion_coeffs(k, t, t, chain, p1);
  return TPoly::compose_series(a, coeffs);
}

TPoly softplus(const TPoly& a) {
  const double c = a.constant_part();
  const int k = a.order();
  const double s = stable_sigmoid(c);
  // d/dc softplus = sigmoid(c) = s; ds/dc = s(1-s)
  const double chain[3] = {0.0, 1.0, -1.0};
  const double p1[2] = {0.0, 1.0};
  auto coeffs = poly_recursion_coeffs(k, softplus(c), s, chain, p1);
  return TPoly::compose_series(a, coeffs);
}

TPoly sqrt(const TPoly& a) {
  const double c = a.constant_part();
  if (!(c > 0.0)) throw std::domain_error("TPoly sqrt: constant part must be positive");
  return pow(a, 0.5);
}

TPoly pow(const TPoly& a, double p) {
  const double c = a.constant_part();
  const double ip = std::round(p);
  if (p == ip && std::abs(ip) < 64) return pow(a, static_cast<int>(ip));
  if (!(c > 0.0)) throw std::domain_error("TPoly pow: constant part must be positive");
  const int k = a.order();
  // generalized binomial series: c^p * sum_i C(p,i) (w/c)^i
  std::vector<double> coeffs(k + 1);
  double binom = 1.0;
  const double base = std::pow(c, p);
  double cinv = 1.0;
  for (int i = 0; i <= k; ++i) {
    coeffs[i] = base * binom * cinv;
    binom *= (p - i) / (i + 1);
    cinv /= c;
  }
  return TPoly::compose_series(a, coeffs);
}

TPoly pow(const TPoly& a, int p) {
  if (p == 0) return TPoly::constant(1.0, a.basis());
  if (p < 0) return 1.0 / pow(a, -p);
  TPoly r = a;
  for (int i = 1; i < p; ++i) r = r * a;
  return r;
}

}  // namespace netstab::da
