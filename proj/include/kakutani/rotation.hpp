#pragma once

// Irrational rotations on orbit points frac(a + b*alpha) with exact
// comparisons, the two-interval exchange obtained by inducing on [0, alpha),
// and finite unions of half-open intervals with endpoints in Z + Z*alpha.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kakutani/errors.hpp"

namespace kakutani {

/// (p + r*sqrt(d)) / q with integers, q > 0, d > 1 not a perfect square.
struct Surd {
  std::int64_t p = 0, r = 0, d = 2, q = 1;

  double to_double() const { return (static_cast<double>(p) + static_cast<double>(r) * std::sqrt(static_cast<double>(d))) / static_cast<double>(q); }

  std::string str() const {
    return "(" + std::to_string(p) + (r < 0 ? " - " : " + ") + std::to_string(r < 0 ? -r : r) + "*sqrt(" +
           std::to_string(d) + "))/" + std::to_string(q);
  }
};

namespace detail {

inline std::int64_t narrow(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error("quadratic arithmetic overflow");
  return static_cast<std::int64_t>(v);
}

inline __int128 abs128(__int128 v) { return v < 0 ? -v : v; }

/// Sign of u + v*sqrt(d) for integers, exactly.
inline int surd_sign(__int128 u, __int128 v, std::int64_t d) {
  const int su = (u > 0) - (u < 0);
  const int sv = (v > 0) - (v < 0);
  if (sv == 0) return su;
  if (su == 0 || su == sv) return su == 0 ? sv : su;
  constexpr __int128 lim = static_cast<__int128>(1) << 62;
  if (abs128(u) >= lim || abs128(v) >= (lim >> 8)) throw std::overflow_error("quadratic comparison overflow");
  const __int128 uu = u * u;
  const __int128 vv = v * v * d;
  if (uu == vv) return 0;  // unreachable for non-square d
  return uu > vv ? su : sv;
}

inline Surd normalize(__int128 p, __int128 r, __int128 q, std::int64_t d) {
  if (q < 0) {
    p = -p;
    r = -r;
    q = -q;
  }
  __int128 g = std::gcd(static_cast<std::int64_t>(narrow(abs128(p))), static_cast<std::int64_t>(narrow(abs128(r))));
  g = std::gcd(static_cast<std::int64_t>(g), static_cast<std::int64_t>(narrow(q)));
  if (g > 1) {
    p /= g;
    r /= g;
    q /= g;
  }
  return Surd{narrow(p), narrow(r), d, narrow(q)};
}

/// a + 1/x
inline Surd add_reciprocal(std::int64_t a, const Surd& x) {
  // 1/x = q (p - r sqrt d) / (p^2 - r^2 d)
  const __int128 den = static_cast<__int128>(x.p) * x.p - static_cast<__int128>(x.r) * x.r * x.d;
  const __int128 np = static_cast<__int128>(x.q) * x.p + static_cast<__int128>(a) * den;
  const __int128 nr = -static_cast<__int128>(x.q) * x.r;
  return normalize(np, nr, den, x.d);
}

inline Surd reciprocal(const Surd& x) { return add_reciprocal(0, x); }

inline bool is_square(std::int64_t n) {
  if (n < 0) return false;
  auto s = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  for (std::int64_t t = std::max<std::int64_t>(0, s - 2); t <= s + 2; ++t)
    if (t * t == n) return true;
  return false;
}

}  // namespace detail

/// Terms below this many convergent steps for the approximate mode.
inline constexpr std::size_t kDefaultTermBudget = 80;

/// alpha in (0,1) by its continued fraction [0; a1, a2, ...]. Exact mode is
/// an eventually periodic expansion (a quadratic irrational); approximate
/// mode takes a term generator and decides signs from convergent brackets,
/// failing with BudgetExhausted when the budget of terms runs out.
class RotationAngle {
 public:
  static RotationAngle quadratic(std::vector<std::uint32_t> prefix, std::vector<std::uint32_t> period) {
    if (period.empty()) throw PreconditionError("exact angles need a non-empty periodic tail");
    for (auto t : prefix)
      if (t == 0) throw PreconditionError("continued fraction terms must be >= 1");
    for (auto t : period)
      if (t == 0) throw PreconditionError("continued fraction terms must be >= 1");
    RotationAngle a;
    a.prefix_ = std::move(prefix);
    a.period_ = std::move(period);
    a.exact_ = true;
    a.surd_ = solve(a.prefix_, a.period_);
    a.term_budget_ = SIZE_MAX;
    return a;
  }

  static RotationAngle approximate(std::function<std::uint32_t(std::size_t)> terms, std::size_t term_budget,
                                   std::string label = "generated") {
    RotationAngle a;
    a.generator_ = std::make_shared<std::function<std::uint32_t(std::size_t)>>(std::move(terms));
    a.term_budget_ = term_budget;
    a.label_ = std::move(label);
    return a;
  }

  /// "cf:[0;a1,a2,(p1,p2,...)]"; the parenthesized block repeats.
  static RotationAngle parse(std::string_view text) {
    auto fail = [&](const std::string& what) { throw ParseError(1, 1, "angle '" + std::string(text) + "': " + what); };
    if (!text.starts_with("cf:[") || !text.ends_with("]")) fail("expected cf:[0;a1,...,(p1,...)]");
    std::string body(text.substr(4, text.size() - 5));
    std::erase_if(body, [](unsigned char c) { return std::isspace(c); });
    const auto semi = body.find(';');
    if (semi == std::string::npos || body.substr(0, semi) != "0") fail("angle must lie in (0,1): leading term 0");
    std::string rest = body.substr(semi + 1);
    std::vector<std::uint32_t> prefix, period;
    const auto paren = rest.find('(');
    std::string head = rest.substr(0, paren);
    std::string tail;
    if (paren != std::string::npos) {
      if (rest.back() != ')') fail("periodic block must close the list");
      tail = rest.substr(paren + 1, rest.size() - paren - 2);
    }
    auto read_list = [&](const std::string& s, std::vector<std::uint32_t>& out) {
      std::size_t pos = 0;
      while (pos < s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        const std::string tok = s.substr(pos, comma - pos);
        pos = comma + 1;
        if (tok.empty()) continue;
        if (!std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
          fail("bad term '" + tok + "'");
        const auto v = std::stoul(tok);
        if (v == 0) fail("terms after the first must be >= 1");
        out.push_back(static_cast<std::uint32_t>(v));
      }
    };
    read_list(head, prefix);
    read_list(tail, period);
    if (period.empty()) fail("a periodic block is required (finite expansions are rational)");
    return quadratic(std::move(prefix), std::move(period));
  }

  bool exact() const noexcept { return exact_; }
  const Surd& surd() const {
    if (!exact_) throw PreconditionError("approximate angles have no closed form");
    return surd_;
  }
  std::size_t term_budget() const noexcept { return term_budget_; }

  /// Continued-fraction term i >= 1.
  std::uint32_t term(std::size_t i) const {
    if (i == 0) throw Error("term 0 is the integer part, always 0");
    if (exact_) {
      if (i <= prefix_.size()) return prefix_[i - 1];
      return period_[(i - 1 - prefix_.size()) % period_.size()];
    }
    const auto t = (*generator_)(i);
    if (t == 0) throw Error("generator produced a zero term");
    return t;
  }

  /// Sign of a + b*alpha (0 only when a = b = 0).
  int sign(std::int64_t a, std::int64_t b) const {
    if (b == 0) return (a > 0) - (a < 0);
    if (exact_) {
      try {
        // a + b (p + r sqrt d)/q has the sign of (a q + b p) + (b r) sqrt d.
        return detail::surd_sign(static_cast<__int128>(a) * surd_.q + static_cast<__int128>(b) * surd_.p,
                                 static_cast<__int128>(b) * surd_.r, surd_.d);
      } catch (const std::overflow_error&) {
        return bracket_sign(a, b, 400);
      }
    }
    return bracket_sign(a, b, term_budget_);
  }

  /// floor(b * alpha)
  std::int64_t floor_mul(std::int64_t b) const {
    if (b == 0) return 0;
    auto f = static_cast<std::int64_t>(std::floor(static_cast<double>(b) * approx()));
    while (sign(-f, b) < 0) --f;       // b alpha < f
    while (sign(-(f + 1), b) >= 0) ++f;  // b alpha >= f + 1
    return f;
  }

  double approx() const {
    if (exact_) return surd_.to_double();
    double x = 0;
    const std::size_t n = std::min<std::size_t>(term_budget_, 40);
    for (std::size_t i = n; i >= 1; --i) x = 1.0 / (term(i) + x);
    return x;
  }

  std::string str() const {
    if (!exact_) return "cf:[0;" + label_ + "]";
    std::string s = "cf:[0;";
    for (auto t : prefix_) s += std::to_string(t) + ",";
    s += "(";
    for (std::size_t i = 0; i < period_.size(); ++i) s += (i ? "," : "") + std::to_string(period_[i]);
    return s + ")]";
  }

  const std::vector<std::uint32_t>& prefix() const noexcept { return prefix_; }
  const std::vector<std::uint32_t>& period() const noexcept { return period_; }

 private:
  RotationAngle() = default;

  static Surd solve(const std::vector<std::uint32_t>& prefix, const std::vector<std::uint32_t>& period) {
    // y = [p1; p2, ..., pk, y] gives y = (A y + B)/(C y + E).
    __int128 A = 1, B = 0, C = 0, E = 1;
    for (auto t : period) {
      const __int128 nA = A * t + B, nC = C * t + E;
      B = A;
      E = C;
      A = nA;
      C = nC;
    }
    // C y^2 + (E - A) y - B = 0, positive root.
    const __int128 disc = (A - E) * (A - E) + 4 * B * C;
    std::int64_t d = detail::narrow(disc);
    if (detail::is_square(d)) throw PreconditionError("periodic expansion is rational");
    Surd x = detail::normalize(A - E, 1, 2 * C, d);
    for (std::size_t i = prefix.size(); i-- > 0;) x = detail::add_reciprocal(prefix[i], x);
    return detail::reciprocal(x);
  }

  int bracket_sign(std::int64_t a, std::int64_t b, std::size_t budget) const {
    // Convergents h_i / k_i of [0; a1, ...]; alpha lies strictly between consecutive ones.
    __int128 h_prev = 1, k_prev = 0, h = 0, k = 1;
    auto at = [&](__int128 hh, __int128 kk) {
      const __int128 v = static_cast<__int128>(a) * kk + static_cast<__int128>(b) * hh;
      return (v > 0) - (v < 0);
    };
    int s = at(h, k);
    constexpr __int128 lim = static_cast<__int128>(1) << 90;
    for (std::size_t i = 1; i <= budget; ++i) {
      const std::uint32_t t = term(i);
      const __int128 nh = t * h + h_prev, nk = t * k + k_prev;
      h_prev = h;
      k_prev = k;
      h = nh;
      k = nk;
      const int ns = at(h, k);
      if (ns != 0 && (ns == s || s == 0)) return ns;
      s = ns;
      if (k > lim) break;
    }
    throw BudgetExhausted(budget, "continued-fraction terms exhausted before the comparison resolved");
  }

  std::vector<std::uint32_t> prefix_, period_;
  std::shared_ptr<std::function<std::uint32_t(std::size_t)>> generator_;
  std::size_t term_budget_ = kDefaultTermBudget;
  std::string label_;
  bool exact_ = false;
  Surd surd_{};
};

/// The point frac(a + b*alpha); normalized so that 0 <= a + b*alpha < 1.
struct RotationPoint {
  std::int64_t a = 0;
  std::int64_t b = 0;
  friend bool operator==(const RotationPoint&, const RotationPoint&) = default;
};

/// An element a + b*alpha of Z + Z*alpha (interval endpoints, measures).
struct AffineValue {
  std::int64_t a = 0;
  std::int64_t b = 0;
  friend AffineValue operator+(AffineValue x, AffineValue y) { return {x.a + y.a, x.b + y.b}; }
  friend AffineValue operator-(AffineValue x, AffineValue y) { return {x.a - y.a, x.b - y.b}; }
  friend bool operator==(const AffineValue&, const AffineValue&) = default;
  std::string str() const { return std::to_string(a) + (b < 0 ? " - " : " + ") + std::to_string(b < 0 ? -b : b) + "*alpha"; }
};

/// Half-open [left, right).
struct Interval {
  AffineValue left, right;
};

class RotationSystem {
 public:
  using point_type = RotationPoint;

  explicit RotationSystem(RotationAngle angle) : angle_(std::move(angle)) {}

  const RotationAngle& angle() const noexcept { return angle_; }

  RotationPoint point(std::int64_t b) const { return {-angle_.floor_mul(b), b}; }
  RotationPoint normalize(std::int64_t /*a*/, std::int64_t b) const { return point(b); }

  RotationPoint rotate(const RotationPoint& p, std::int64_t steps) const { return point(p.b + steps); }
  RotationPoint step(const RotationPoint& p, std::int64_t steps) const { return rotate(p, steps); }
  bool same(const RotationPoint& x, const RotationPoint& y) const { return x == y; }

  /// Sign of x - y as reals in [0,1).
  int compare(const RotationPoint& x, const RotationPoint& y) const { return angle_.sign(x.a - y.a, x.b - y.b); }
  int compare(const RotationPoint& x, const AffineValue& v) const { return angle_.sign(x.a - v.a, x.b - v.b); }
  int compare(const AffineValue& x, const AffineValue& v) const { return angle_.sign(x.a - v.a, x.b - v.b); }

  bool in(const Interval& iv, const RotationPoint& p) const { return compare(p, iv.left) >= 0 && compare(p, iv.right) < 0; }

  double value(const RotationPoint& p) const { return static_cast<double>(p.a) + static_cast<double>(p.b) * angle_.approx(); }
  double value(const AffineValue& v) const { return static_cast<double>(v.a) + static_cast<double>(v.b) * angle_.approx(); }

  template <class Rng>
  RotationPoint sample_point(Rng& rng, std::int64_t spread = 1'000'000) const {
    std::uniform_int_distribution<std::int64_t> d(-spread, spread);
    return point(d(rng));
  }

 private:
  RotationAngle angle_;
};

/// Finite union of disjoint half-open intervals in [0, 1) with exact endpoints.
class IntervalUnion {
 public:
  IntervalUnion() = default;
  IntervalUnion(const RotationSystem& sys, std::vector<Interval> pieces) : pieces_(std::move(pieces)) {
    for (const auto& iv : pieces_)
      if (sys.compare(iv.left, iv.right) > 0) throw PreconditionError("interval with left > right");
    sort(sys);
    for (std::size_t i = 1; i < pieces_.size(); ++i)
      if (sys.compare(pieces_[i - 1].right, pieces_[i].left) > 0) throw PreconditionError("intervals overlap");
    merge(sys);
  }

  /// [0, alpha)
  static IntervalUnion initial(const RotationSystem& sys) { return IntervalUnion(sys, {{{0, 0}, {0, 1}}}); }
  static IntervalUnion whole(const RotationSystem& sys) { return IntervalUnion(sys, {{{0, 0}, {1, 0}}}); }

  const std::vector<Interval>& pieces() const noexcept { return pieces_; }
  bool empty() const noexcept { return pieces_.empty(); }

  bool contains(const RotationSystem& sys, const RotationPoint& p) const {
    for (const auto& iv : pieces_)
      if (sys.in(iv, p)) return true;
    return false;
  }

  AffineValue measure() const {
    AffineValue m;
    for (const auto& iv : pieces_) m = m + (iv.right - iv.left);
    return m;
  }

  IntervalUnion intersect(const RotationSystem& sys, const IntervalUnion& o) const {
    IntervalUnion out;
    for (const auto& x : pieces_)
      for (const auto& y : o.pieces_) {
        const AffineValue l = sys.compare(x.left, y.left) >= 0 ? x.left : y.left;
        const AffineValue r = sys.compare(x.right, y.right) <= 0 ? x.right : y.right;
        if (sys.compare(l, r) < 0) out.pieces_.push_back({l, r});
      }
    out.sort(sys);
    out.merge(sys);
    return out;
  }

  IntervalUnion minus(const RotationSystem& sys, const IntervalUnion& o) const {
    std::vector<Interval> cur = pieces_;
    for (const auto& y : o.pieces_) {
      std::vector<Interval> next;
      for (const auto& x : cur) {
        if (sys.compare(y.right, x.left) <= 0 || sys.compare(y.left, x.right) >= 0) {
          next.push_back(x);
          continue;
        }
        if (sys.compare(x.left, y.left) < 0) next.push_back({x.left, y.left});
        if (sys.compare(y.right, x.right) < 0) next.push_back({y.right, x.right});
      }
      cur = std::move(next);
    }
    IntervalUnion out;
    out.pieces_ = std::move(cur);
    out.sort(sys);
    out.merge(sys);
    return out;
  }

  IntervalUnion unite(const RotationSystem& sys, const IntervalUnion& o) const {
    IntervalUnion out;
    out.pieces_ = pieces_;
    out.pieces_.insert(out.pieces_.end(), o.pieces_.begin(), o.pieces_.end());
    out.sort(sys);
    out.merge(sys);
    return out;
  }

  /// Image under rotation by steps*alpha (mod 1).
  IntervalUnion rotated(const RotationSystem& sys, std::int64_t steps) const {
    IntervalUnion out;
    for (const auto& iv : pieces_) {
      AffineValue l{iv.left.a, iv.left.b + steps}, r{iv.right.a, iv.right.b + steps};
      const std::int64_t k = l.a + sys.angle().floor_mul(l.b);
      l.a -= k;
      r.a -= k;
      if (sys.compare(r, AffineValue{1, 0}) > 0) {
        out.pieces_.push_back({l, {1, 0}});
        out.pieces_.push_back({{0, 0}, {r.a - 1, r.b}});
      } else {
        out.pieces_.push_back({l, r});
      }
    }
    out.sort(sys);
    out.merge(sys);
    return out;
  }

 private:
  void sort(const RotationSystem& sys) {
    std::sort(pieces_.begin(), pieces_.end(),
              [&](const Interval& x, const Interval& y) { return sys.compare(x.left, y.left) < 0; });
  }
  // Joins touching or overlapping neighbours and drops empty pieces.
  void merge(const RotationSystem& sys) {
    std::vector<Interval> out;
    for (const auto& iv : pieces_) {
      if (sys.compare(iv.left, iv.right) >= 0) continue;
      if (!out.empty() && sys.compare(out.back().right, iv.left) >= 0) {
        if (sys.compare(iv.right, out.back().right) > 0) out.back().right = iv.right;
      } else {
        out.push_back(iv);
      }
    }
    pieces_ = std::move(out);
  }

  std::vector<Interval> pieces_;
};

/// Two-interval exchange on [0, alpha): [0, 1 - n alpha) goes to
/// [(n+1) alpha - 1, alpha) and [1 - n alpha, alpha) to [0, (n+1) alpha - 1),
/// where n = floor(1/alpha).
class ExchangeMap {
 public:
  explicit ExchangeMap(const RotationSystem& sys) : sys_(&sys) {
    // n = floor(1/alpha): largest n with n alpha < 1.
    n_ = static_cast<std::int64_t>(std::floor(1.0 / sys.angle().approx()));
    while (sys.angle().sign(-1, n_) >= 0) --n_;
    while (sys.angle().sign(-1, n_ + 1) < 0) ++n_;
  }

  std::int64_t n() const noexcept { return n_; }
  AffineValue cut() const { return {1, -n_}; }               // 1 - n alpha
  AffineValue image_boundary() const { return {-1, n_ + 1}; }  // (n+1) alpha - 1
  AffineValue left_length() const { return cut(); }
  AffineValue right_length() const { return AffineValue{0, 1} - cut(); }

  bool in_domain(const RotationPoint& p) const { return sys_->compare(p, AffineValue{0, 1}) < 0; }

  RotationPoint apply(const RotationPoint& p) const {
    if (!in_domain(p)) throw PreconditionError("exchange applies to points of [0, alpha)");
    return sys_->rotate(p, sys_->compare(p, cut()) < 0 ? n_ + 1 : n_);
  }

  RotationPoint inverse(const RotationPoint& p) const {
    if (!in_domain(p)) throw PreconditionError("exchange applies to points of [0, alpha)");
    return sys_->rotate(p, sys_->compare(p, image_boundary()) < 0 ? -n_ : -(n_ + 1));
  }

 private:
  const RotationSystem* sys_;
  std::int64_t n_ = 1;
};

struct FirstReturn {
  std::int64_t time = 0;
  RotationPoint point;
};

/// Least r >= 1 with frac(p + r alpha) in [0, alpha), by iteration.
inline FirstReturn first_return_rotation(const RotationSystem& sys, const RotationPoint& p, std::int64_t budget = 1 << 20) {
  const AffineValue alpha{0, 1};
  if (sys.compare(p, alpha) >= 0) throw PreconditionError("point is not in [0, alpha)");
  RotationPoint q = p;
  for (std::int64_t r = 1; r <= budget; ++r) {
    q = sys.rotate(q, 1);
    if (sys.compare(q, alpha) < 0) return {r, q};
  }
  throw BudgetExhausted(static_cast<std::uint64_t>(budget));
}

/// The rescaled induced rotation on [0, alpha) is rotation by 1 - frac(1/alpha).
/// For alpha = [0; a1, a2, a3, ...] that angle is [0; 1 + a3, a4, ...] when a2 = 1,
/// else [0; 1, a2 - 1, a3, ...].
inline RotationAngle induced_rotation_angle(const RotationAngle& alpha) {
  if (!alpha.exact()) throw PreconditionError("induced angle is computed in exact mode");
  const auto& pre = alpha.prefix();
  const auto& per = alpha.period();
  std::vector<std::uint32_t> out_prefix;
  std::size_t pos;  // next original term to copy
  if (alpha.term(2) == 1) {
    out_prefix.push_back(1 + alpha.term(3));
    pos = 4;
  } else {
    out_prefix.push_back(1);
    out_prefix.push_back(alpha.term(2) - 1);
    pos = 3;
  }
  while (pos <= pre.size()) out_prefix.push_back(alpha.term(pos++));
  std::vector<std::uint32_t> out_period;
  for (std::size_t i = 0; i < per.size(); ++i) out_period.push_back(alpha.term(pos + i));
  return RotationAngle::quadratic(std::move(out_prefix), std::move(out_period));
}

}  // namespace kakutani
