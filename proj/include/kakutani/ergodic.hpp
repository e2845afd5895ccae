#pragma once

// Birkhoff averages, Kac checks and empirical N(eps) estimates. All averages
// are exact rationals; comparisons against eps are done in integers.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "kakutani/errors.hpp"
#include "kakutani/induction.hpp"
#include "kakutani/rank_one.hpp"
#include "kakutani/rational.hpp"

namespace kakutani {

/// Some sample still violates the bound at the horizon.
class HorizonExhausted : public Error {
 public:
  HorizonExhausted(std::uint64_t horizon, const std::string& what)
      : Error(what + " (horizon " + std::to_string(horizon) + ")"), horizon_(horizon) {}
  std::uint64_t horizon() const noexcept { return horizon_; }

 private:
  std::uint64_t horizon_;
};

/// Walks the orbit of the induced map on the stage-1 level 0 of a rank-one
/// system, one return at a time. The return time of the current point is the
/// jump in level index at the first stage whose digit is not maximal, so a
/// step costs amortized O(1).
class BaseOrbitCursor {
 public:
  BaseOrbitCursor(const RankOneSystem& sys, DigitStream digits) : sys_(&sys), digits_(std::move(digits)) {
    if (digits_.start() != 1) throw PreconditionError("base point digits must start at stage 1");
    const std::size_t depth = sys.depth();
    top_sum_.assign(depth + 1, 0);
    for (std::size_t j = 2; j < depth; ++j)
      top_sum_[j] = top_sum_[j - 1] + static_cast<std::int64_t>(sys.offset(j - 1, sys.cuts(j - 1) - 1)) -
                    static_cast<std::int64_t>(sys.offset(j - 1, 0));
  }

  const DigitStream& digits() const noexcept { return digits_; }
  RankOnePoint point() const { return sys_->base_point(digits_); }
  /// Signed number of induced steps taken so far.
  std::int64_t index() const noexcept { return index_; }

  /// r_A of the current point.
  std::uint64_t return_time() const {
    const std::size_t j = first_position(true);
    const std::uint32_t d = digit(j);
    return static_cast<std::uint64_t>(static_cast<std::int64_t>(sys_->offset(j, d + 1)) -
                                      static_cast<std::int64_t>(sys_->offset(j, d)) - top_sum_[j]);
  }

  /// r_A of the predecessor (the backward return time of the current point).
  std::uint64_t back_return_time() const {
    const std::size_t j = first_position(false);
    const std::uint32_t d = digit(j);
    return static_cast<std::uint64_t>(static_cast<std::int64_t>(sys_->offset(j, d)) -
                                      static_cast<std::int64_t>(sys_->offset(j, d - 1)) - top_sum_[j]);
  }

  /// Moves to T_A(x); returns r_A(x).
  std::uint64_t advance() {
    const std::uint64_t r = return_time();
    const std::size_t j = first_position(true);
    auto radix = sys_->radix_fn();
    for (std::size_t i = 1; i < j; ++i) digits_.set_digit(i, 0, radix);
    digits_.set_digit(j, digit(j) + 1, radix);
    ++index_;
    return r;
  }

  /// Moves to T_A^{-1}(x); returns r_A(T_A^{-1} x).
  std::uint64_t retreat() {
    const std::uint64_t r = back_return_time();
    const std::size_t j = first_position(false);
    auto radix = sys_->radix_fn();
    for (std::size_t i = 1; i < j; ++i) digits_.set_digit(i, sys_->cuts(i) - 1, radix);
    digits_.set_digit(j, digit(j) - 1, radix);
    --index_;
    return r;
  }

 private:
  std::uint32_t digit(std::size_t pos) const { return digits_.digit(pos, sys_->cuts(pos)); }

  // First position whose digit can move up (forward) or down (backward).
  std::size_t first_position(bool forward) const {
    const std::size_t limit = sys_->depth();
    for (std::size_t j = 1; j < limit; ++j) {
      const std::uint32_t d = digit(j);
      if (forward ? d + 1 < sys_->cuts(j) : d > 0) return j;
    }
    throw NeedMoreDepth(limit);
  }

  const RankOneSystem* sys_;
  DigitStream digits_;
  std::vector<std::int64_t> top_sum_;
  std::int64_t index_ = 0;
};

/// (1/n) sum_{i<n} f(T^i x) for any system and integer-valued f.
template <DynamicalSystem S, class F>
Rational birkhoff_average(const S& sys, F&& f, const typename S::point_type& x, std::uint64_t n) {
  if (n == 0) throw PreconditionError("average needs n >= 1");
  __int128 sum = 0;
  auto y = x;
  for (std::uint64_t i = 0; i < n; ++i) {
    sum += static_cast<std::int64_t>(f(y));
    if (i + 1 < n) y = sys.step(y, 1);
  }
  return Rational(static_cast<std::int64_t>(sum), static_cast<std::int64_t>(n));
}

/// (1/n) sum_{i<n} r_A(T_A^i x) for A = stage-1 level 0 of a rank-one system.
inline Rational return_time_average(const RankOneSystem& sys, const DigitStream& base_digits, std::uint64_t n) {
  if (n == 0) throw PreconditionError("average needs n >= 1");
  BaseOrbitCursor cur(sys, base_digits);
  std::uint64_t sum = 0;
  for (std::uint64_t i = 0; i < n; ++i) sum += cur.advance();
  return Rational(static_cast<std::int64_t>(sum), static_cast<std::int64_t>(n));
}

/// Same average for an arbitrary base set, by direct return-time search.
template <DynamicalSystem S, class InSet>
Rational return_time_average(const S& sys, InSet&& in_a, const typename S::point_type& x, std::uint64_t n,
                             std::uint64_t budget = kDefaultStepBudget) {
  if (n == 0) throw PreconditionError("average needs n >= 1");
  std::uint64_t sum = 0;
  auto y = x;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t r = return_time(sys, in_a, y, budget);
    sum += r;
    y = sys.step(y, static_cast<std::int64_t>(r));
  }
  return Rational(static_cast<std::int64_t>(sum), static_cast<std::int64_t>(n));
}

struct ErgodicRow {
  std::uint64_t sample_id = 0;
  std::uint64_t n = 0;
  Rational average;
  Rational abs_dev;
  bool exceeds = false;
};

struct ErgodicReport {
  std::string function = "r_A";
  std::string system;
  Rational target;
  std::optional<Rational> epsilon;
  std::vector<ErgodicRow> rows;
  std::size_t exceedances = 0;
  Rational worst_dev;

  /// "sample_id,n,average_num,average_den,target_num,target_den,abs_dev"
  std::string csv() const {
    std::string s = "sample_id,n,average_num,average_den,target_num,target_den,abs_dev\n";
    for (const auto& r : rows)
      s += std::to_string(r.sample_id) + "," + std::to_string(r.n) + "," + std::to_string(r.average.num()) + "," +
           std::to_string(r.average.den()) + "," + std::to_string(target.num()) + "," + std::to_string(target.den()) +
           "," + r.abs_dev.str() + "\n";
    return s;
  }
};

/// Seeded base points: digits drawn from a hash of (seed, sample index).
inline std::vector<DigitStream> base_samples(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  std::vector<DigitStream> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(DigitStream::generated(1, rng()));
  return out;
}

/// 1/mu(A) for A = stage-1 level 0.
inline Rational kac_target(const RankOneSystem& sys) { return Rational(1) / sys.measure(sys.base_set()); }

/// |A_n(r_A)(x) - 1/mu(A)| for every sample, for each horizon in `ns`.
inline ErgodicReport kac_check(const RankOneSystem& sys, const std::vector<DigitStream>& samples,
                               const std::vector<std::uint64_t>& ns, std::optional<Rational> epsilon = std::nullopt) {
  ErgodicReport rep;
  rep.system = sys.name();
  rep.target = kac_target(sys);
  rep.epsilon = epsilon;
  std::vector<std::uint64_t> sorted = ns;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    BaseOrbitCursor cur(sys, samples[s]);
    std::uint64_t sum = 0, done = 0;
    for (std::uint64_t n : sorted) {
      if (n == 0) throw PreconditionError("horizons must be >= 1");
      for (; done < n; ++done) sum += cur.advance();
      ErgodicRow row;
      row.sample_id = s;
      row.n = n;
      row.average = Rational(static_cast<std::int64_t>(sum), static_cast<std::int64_t>(n));
      row.abs_dev = abs(row.average - rep.target);
      row.exceeds = epsilon && row.abs_dev > *epsilon;
      if (row.exceeds) ++rep.exceedances;
      if (row.abs_dev > rep.worst_dev) rep.worst_dev = row.abs_dev;
      rep.rows.push_back(row);
    }
  }
  return rep;
}

struct NEstimate {
  std::uint64_t n = 0;                  // worst case over samples
  std::vector<std::uint64_t> per_sample;
  bool empirical = true;                // sampled, never certified
};

/// Smallest N with |A_n(r_A) - 1/mu(A)| < eps for all N < n <= horizon and all samples.
inline NEstimate estimate_N(const RankOneSystem& sys, const Rational& eps, const std::vector<DigitStream>& samples,
                            std::uint64_t horizon) {
  if (eps.sign() <= 0) throw PreconditionError("eps must be positive");
  const Rational t = kac_target(sys);
  NEstimate out;
  for (const auto& d : samples) {
    BaseOrbitCursor cur(sys, d);
    __int128 sum = 0;
    std::uint64_t last_bad = 0;
    for (std::uint64_t n = 1; n <= horizon; ++n) {
      sum += cur.advance();
      // |sum/n - tn/td| < en/ed  <=>  |sum*td - n*tn| * ed < en * n * td
      __int128 diff = sum * t.den() - static_cast<__int128>(n) * t.num();
      if (diff < 0) diff = -diff;
      if (diff * eps.den() >= static_cast<__int128>(eps.num()) * n * t.den()) last_bad = n;
    }
    if (last_bad == horizon) throw HorizonExhausted(horizon, "a sample still violates eps at the horizon");
    out.per_sample.push_back(last_bad);
    out.n = std::max(out.n, last_bad);
  }
  return out;
}

}  // namespace kakutani
