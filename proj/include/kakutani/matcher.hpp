#pragma once

// Orbit-equivalence extensions between two rank-one systems whose induced
// maps on stage-1 level 0 are conjugate.
//
// Even case (equal base measures): piles over X-base points are matched with
// pits under the paired Y-base points. The deposit machine is authoritative;
// the closed-form formula is kept with a configurable boundary so that the
// two can be compared cell by cell.
//
// Non-even case (mu(A) > nu(B)): both bases are shrunk to a deep zero
// cylinder, after which every pile fits inside its pit and no shifting is needed.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "kakutani/ergodic.hpp"
#include "kakutani/errors.hpp"
#include "kakutani/induction.hpp"
#include "kakutani/rank_one.hpp"
#include "kakutani/rational.hpp"

namespace kakutani {

/// A sampled pile exceeded its pit in a non-even plan.
class MarginViolation : public Error {
 public:
  using Error::Error;
};

/// The conjugacy between the two induced maps, acting on base digits.
/// Both induced maps are odometers with the same radices, so translations
/// of the odometer commute with them.
struct Conjugacy {
  enum class Kind { Identity, Translate };
  Kind kind = Kind::Identity;
  std::uint64_t shift = 0;

  static Conjugacy identity() { return {}; }
  static Conjugacy translate(std::uint64_t t) { return {Kind::Translate, t}; }

  /// "identity" or "translate:K".
  static Conjugacy parse(const std::string& text) {
    if (text == "identity") return identity();
    if (text.rfind("translate:", 0) == 0) {
      const std::string n = text.substr(10);
      if (n.empty() || !std::all_of(n.begin(), n.end(), [](unsigned char c) { return std::isdigit(c); }))
        throw ParseError(1, 11, "bad translation amount '" + n + "'");
      return translate(std::stoull(n));
    }
    throw ParseError(1, 1, "unknown conjugacy '" + text + "' (identity | translate:K)");
  }

  std::string str() const { return kind == Kind::Identity ? "identity" : "translate:" + std::to_string(shift); }
};

namespace detail {
// Adds (dir = +1) or subtracts t in the mixed-radix counter carried by the digits.
template <class RadixFn>
DigitStream odometer_add(DigitStream d, std::uint64_t t, int dir, RadixFn&& radix, std::size_t max_pos) {
  std::int64_t carry = 0;
  for (std::size_t pos = 1; t > 0 || carry != 0; ++pos) {
    if (pos > max_pos) throw NeedMoreDigits(max_pos);
    const std::uint32_t c = radix(pos);
    const std::int64_t v = static_cast<std::int64_t>(d.digit(pos, c)) + dir * static_cast<std::int64_t>(t % c) + carry;
    t /= c;
    const std::int64_t m = ((v % c) + c) % c;
    carry = (v - m) / c;
    d.set_digit(pos, static_cast<std::uint32_t>(m), radix);
  }
  return d;
}
}  // namespace detail

/// Two rank-one systems, their bases (stage-1 level 0) and the base conjugacy.
class PairSpec {
 public:
  PairSpec(RankOneSystem x, RankOneSystem y, Conjugacy phi = Conjugacy::identity(), std::string name = "")
      : x_(std::move(x)), y_(std::move(y)), phi_(phi), name_(std::move(name)) {
    const std::size_t d = std::min(x_.depth(), y_.depth());
    for (std::size_t k = 1; k < d; ++k)
      if (x_.cuts(k) != y_.cuts(k))
        throw PreconditionError("base odometers differ: cut counts at stage " + std::to_string(k) + " are " +
                                std::to_string(x_.cuts(k)) + " and " + std::to_string(y_.cuts(k)));
    if (name_.empty()) name_ = x_.name() + "~" + y_.name();
  }

  const RankOneSystem& x() const noexcept { return x_; }
  const RankOneSystem& y() const noexcept { return y_; }
  const Conjugacy& conjugacy() const noexcept { return phi_; }
  const std::string& name() const noexcept { return name_; }

  Rational mu_a() const { return x_.measure(x_.base_set()); }
  Rational nu_b() const { return y_.measure(y_.base_set()); }
  bool even() const { return mu_a() == nu_b(); }

  /// Digit depth usable by the conjugacy (common built stages).
  std::size_t digit_depth() const { return std::min(x_.depth(), y_.depth()) - 1; }

  DigitStream phi(const DigitStream& xd) const {
    if (phi_.kind == Conjugacy::Kind::Identity) return xd;
    return detail::odometer_add(xd, phi_.shift, +1, x_.radix_fn(), digit_depth());
  }
  DigitStream phi_inverse(const DigitStream& yd) const {
    if (phi_.kind == Conjugacy::Kind::Identity) return yd;
    return detail::odometer_add(yd, phi_.shift, -1, x_.radix_fn(), digit_depth());
  }

  RankOnePoint phi(const RankOnePoint& base) const {
    require_base(x_, base);
    return y_.base_point(phi(base.digits));
  }
  RankOnePoint phi_inverse(const RankOnePoint& base) const {
    require_base(y_, base);
    return x_.base_point(phi_inverse(base.digits));
  }

 private:
  static void require_base(const RankOneSystem& s, const RankOnePoint& p) {
    if (!s.contains(s.base_set(), p)) throw PreconditionError("conjugacy is defined on base points only");
  }

  RankOneSystem x_, y_;
  Conjugacy phi_;
  std::string name_;
};

/// Built-in pairs: "identity" (chacon with itself), "dyadic" (left vs right),
/// "chacon_heavy" (chacon vs triple_heavy).
inline PairSpec builtin_pair(const std::string& name) {
  if (name == "identity")
    return PairSpec(RankOneSystem(builtin_spec("chacon")), RankOneSystem(builtin_spec("chacon")), Conjugacy::identity(),
                    name);
  if (name == "dyadic")
    return PairSpec(RankOneSystem(builtin_spec("dyadic_pair_left")), RankOneSystem(builtin_spec("dyadic_pair_right")),
                    Conjugacy::identity(), name);
  if (name == "chacon_heavy")
    return PairSpec(RankOneSystem(builtin_spec("chacon")), RankOneSystem(builtin_spec("triple_heavy")),
                    Conjugacy::identity(), name);
  throw Error("unknown built-in pair '" + name + "'");
}

struct IntertwiningReport {
  std::size_t samples = 0;
  std::size_t failures = 0;
  std::optional<std::string> counterexample;
};

/// phi(T_A x) = S_B(phi x) on seeded base points, by direct return-time search.
inline IntertwiningReport check_intertwining(const PairSpec& pair, std::uint64_t seed, std::size_t count = 1000) {
  IntertwiningReport rep;
  auto in_a = membership(pair.x(), pair.x().base_set());
  auto in_b = membership(pair.y(), pair.y().base_set());
  for (const auto& d : base_samples(seed, count)) {
    const auto x = pair.x().base_point(d);
    const auto lhs = pair.phi(induced_apply(pair.x(), in_a, x));
    const auto rhs = induced_apply(pair.y(), in_b, pair.phi(x));
    ++rep.samples;
    if (!pair.y().same(lhs, rhs)) {
      ++rep.failures;
      if (!rep.counterexample) rep.counterexample = point_id(pair.x(), x);
    }
  }
  return rep;
}

/// Least h >= 0 with T^{-h}(x) in A_0.
inline std::uint64_t height_above_base(const PairSpec& pair, const RankOnePoint& x,
                                       std::uint64_t budget = kDefaultStepBudget) {
  return height_above(pair.x(), membership(pair.x(), pair.x().base_set()), x, budget);
}

/// Pile heights r_A(T_A^i x~) and pit depths r_B(S_B^i phi x~) for base-orbit
/// indices i in [-W, W], computed lazily.
class PilePitFrame {
 public:
  PilePitFrame(const PairSpec& pair, const DigitStream& anchor, std::int64_t window)
      : pair_(&pair), window_(window), anchor_(anchor), fx_(pair.x(), anchor), bx_(pair.x(), anchor),
        fy_(pair.y(), pair.phi(anchor)), by_(pair.y(), pair.phi(anchor)) {
    if (window < 0) throw PreconditionError("window must be >= 0");
  }

  std::int64_t window() const noexcept { return window_; }
  const PairSpec& pair() const noexcept { return *pair_; }

  /// r_A of the i-th pile base.
  std::uint64_t pile(std::int64_t i) const {
    ensure(i);
    return i >= 0 ? pile_fwd_[static_cast<std::size_t>(i)] : pile_back_[static_cast<std::size_t>(-i - 1)];
  }
  /// r_B of the i-th pit base.
  std::uint64_t pit(std::int64_t i) const {
    ensure(i);
    return i >= 0 ? pit_fwd_[static_cast<std::size_t>(i)] : pit_back_[static_cast<std::size_t>(-i - 1)];
  }

  /// theta_k^n: sum of pile heights k..n (0 when n < k).
  std::uint64_t theta(std::int64_t k, std::int64_t n) const { return sum(k, n, true, +1); }
  /// psi_k^n: sum of pit depths k..n.
  std::uint64_t psi(std::int64_t k, std::int64_t n) const { return sum(k, n, false, +1); }
  /// gamma_k^m: sum of the depths of pits -k..-m (to the left).
  std::uint64_t gamma(std::int64_t k, std::int64_t m) const { return sum(k, m, false, -1); }
  /// Psi_k^m: sum of the heights of piles -k..-m (to the left).
  std::uint64_t Psi(std::int64_t k, std::int64_t m) const { return sum(k, m, true, -1); }

  /// Base digits of the i-th pile (X) or pit (Y) base.
  DigitStream pile_base(std::int64_t i) const { return walk(pair_->x(), anchor_x(), i); }
  DigitStream pit_base(std::int64_t i) const { return walk(pair_->y(), pair_->phi(anchor_x()), i); }
  const DigitStream& anchor_x() const { return anchor_; }

 private:
  static DigitStream walk(const RankOneSystem& s, const DigitStream& d, std::int64_t i) {
    BaseOrbitCursor c(s, d);
    for (; i > 0; --i) c.advance();
    for (; i < 0; ++i) c.retreat();
    return c.digits();
  }

  void ensure(std::int64_t i) const {
    if (i > window_ || i < -window_) throw WindowExhausted(static_cast<std::uint64_t>(window_));
    while (i >= 0 && static_cast<std::int64_t>(pile_fwd_.size()) <= i) {
      pile_fwd_.push_back(fx_.advance());
      pit_fwd_.push_back(fy_.advance());
    }
    while (i < 0 && static_cast<std::int64_t>(pile_back_.size()) < -i) {
      pile_back_.push_back(bx_.retreat());
      pit_back_.push_back(by_.retreat());
    }
  }

  std::uint64_t sum(std::int64_t k, std::int64_t n, bool piles, int dir) const {
    std::uint64_t s = 0;
    for (std::int64_t i = k; i <= n; ++i) s += piles ? pile(dir * i) : pit(dir * i);
    return s;
  }

  const PairSpec* pair_;
  std::int64_t window_;
  DigitStream anchor_;
  mutable BaseOrbitCursor fx_, bx_, fy_, by_;
  mutable std::vector<std::uint64_t> pile_fwd_, pile_back_, pit_fwd_, pit_back_;
};

inline PilePitFrame make_frame(const PairSpec& pair, const DigitStream& anchor, std::int64_t window) {
  return PilePitFrame(pair, anchor, window);
}

/// One move of the deposit machine.
struct Deposit {
  std::uint64_t shift = 0;
  std::int64_t pile = 0;
  std::uint64_t h = 0;
  std::int64_t pit = 0;
  std::uint64_t depth = 0;
};

struct Placement {
  std::int64_t pit = 0;
  std::uint64_t depth = 0;
  std::uint64_t shift = 0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

struct Occupant {
  std::int64_t pile = 0;
  std::uint64_t h = 0;
  std::uint64_t shift = 0;
  friend bool operator==(const Occupant&, const Occupant&) = default;
};

/// The deposit machine on piles and pits with indices [lo, hi] of a frame.
/// Pile i holds items h = 1..r_A(i)-1, pit j holds slots d = 1..r_B(j)-1.
/// At shift n = 0, 1, ... every pile with unplaced items deposits them, lowest
/// first, into the shallowest free slots of pit i+n. Piles are visited in
/// increasing index; each pit receives from one pile per shift.
class MachineRun {
 public:
  MachineRun(const PilePitFrame& frame, std::int64_t lo, std::int64_t hi, bool keep_trace = false)
      : lo_(lo), hi_(hi) {
    if (lo > hi) throw PreconditionError("empty machine range");
    const std::size_t n = static_cast<std::size_t>(hi - lo + 1);
    item_start_.resize(n + 1);
    slot_start_.resize(n + 1);
    for (std::size_t k = 0; k < n; ++k) {
      const auto i = lo + static_cast<std::int64_t>(k);
      item_start_[k + 1] = item_start_[k] + frame.pile(i) - 1;
      slot_start_[k + 1] = slot_start_[k] + frame.pit(i) - 1;
      max_r_ = std::max({max_r_, frame.pile(i), frame.pit(i)});
    }
    placements_.assign(item_start_[n], std::nullopt);
    occupants_.assign(slot_start_[n], std::nullopt);
    std::vector<std::uint64_t> next_item(n, 1), filled(n, 0);
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < n; ++k)
      if (item_start_[k + 1] > item_start_[k]) active.push_back(k);
    for (std::uint64_t shift = 0; !active.empty(); ++shift) {
      std::vector<std::size_t> still;
      for (std::size_t k : active) {
        const std::size_t target = k + shift;
        if (target >= n) continue;  // ran off the right edge: stays unplaced
        const std::uint64_t items = item_start_[k + 1] - item_start_[k];
        const std::uint64_t slots = slot_start_[target + 1] - slot_start_[target];
        while (next_item[k] <= items && filled[target] < slots) {
          const std::uint64_t h = next_item[k]++;
          const std::uint64_t d = ++filled[target];
          auto& occ = occupants_[slot_start_[target] + d - 1];
          if (occ) ++collisions_;
          occ = Occupant{lo + static_cast<std::int64_t>(k), h, shift};
          placements_[item_start_[k] + h - 1] = Placement{lo + static_cast<std::int64_t>(target), d, shift};
          if (keep_trace)
            trace_.push_back({shift, lo + static_cast<std::int64_t>(k), h, lo + static_cast<std::int64_t>(target), d});
        }
        if (next_item[k] <= items) still.push_back(k);
      }
      active = std::move(still);
    }
  }

  std::int64_t lo() const noexcept { return lo_; }
  std::int64_t hi() const noexcept { return hi_; }
  std::uint64_t max_r() const noexcept { return max_r_; }
  std::uint64_t collisions() const noexcept { return collisions_; }
  const std::vector<Deposit>& trace() const noexcept { return trace_; }

  std::uint64_t items(std::int64_t i) const { return count(item_start_, i); }
  std::uint64_t slots(std::int64_t j) const { return count(slot_start_, j); }

  std::optional<Placement> item(std::int64_t i, std::uint64_t h) const {
    if (h == 0 || h > items(i)) throw PreconditionError("no such item");
    return placements_[item_start_[index(i)] + h - 1];
  }
  std::optional<Occupant> slot(std::int64_t j, std::uint64_t d) const {
    if (d == 0 || d > slots(j)) throw PreconditionError("no such slot");
    return occupants_[slot_start_[index(j)] + d - 1];
  }

  nlohmann::json trace_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : trace_)
      out.push_back({{"shift", t.shift}, {"pile_index", t.pile}, {"h", t.h}, {"pit_index", t.pit}, {"depth", t.depth}});
    return out;
  }

 private:
  std::size_t index(std::int64_t i) const {
    if (i < lo_ || i > hi_) throw PreconditionError("index outside the machine range");
    return static_cast<std::size_t>(i - lo_);
  }
  std::uint64_t count(const std::vector<std::uint64_t>& start, std::int64_t i) const {
    const std::size_t k = index(i);
    return start[k + 1] - start[k];
  }

  std::int64_t lo_, hi_;
  std::vector<std::uint64_t> item_start_, slot_start_;
  std::vector<std::optional<Placement>> placements_;
  std::vector<std::optional<Occupant>> occupants_;
  std::vector<Deposit> trace_;
  std::uint64_t collisions_ = 0;
  std::uint64_t max_r_ = 0;
};

enum class MatchMode { Formula, Machine };
enum class Boundary { NonStrict, Strict };

inline std::string to_string(MatchMode m) { return m == MatchMode::Formula ? "formula" : "machine"; }

struct MatchRecord {
  RankOnePoint x;
  std::uint64_t h = 0;
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  RankOnePoint y;
  MatchMode mode = MatchMode::Machine;
  std::uint64_t stable_window = 0;
  bool equality_cell = false;  // formula mode: the chosen n was decided by equality
};

struct InverseMatchRecord {
  RankOnePoint y;
  std::uint64_t D = 0;
  std::uint64_t m = 0;
  std::uint64_t H = 0;
  RankOnePoint x;
  MatchMode mode = MatchMode::Machine;
  std::uint64_t stable_window = 0;
  bool equality_cell = false;
};

struct CellIndex {
  std::uint64_t shift = 0;   // n or m
  std::uint64_t first = 0;   // h or D
  std::uint64_t second = 0;  // d or H
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Default largest window tried when an assignment is not yet stable.
inline constexpr std::int64_t kDefaultMaxWindow = 1 << 12;

namespace detail {

inline void require_even(const PairSpec& pair) {
  if (!pair.even())
    throw PreconditionError("even matching needs equal base measures (" + pair.mu_a().str() + " vs " +
                            pair.nu_b().str() + ")");
}

inline RankOnePoint climb(const RankOneSystem& s, const DigitStream& base, std::uint64_t k) {
  return s.step(s.base_point(base), static_cast<std::int64_t>(k));
}

// Runs the machine at W and 2W (same anchor), doubling W until the answer
// for `probe` agrees; returns the answer and the W where it stabilized.
template <class Probe>
auto stable_machine(const PairSpec& pair, const DigitStream& anchor, std::int64_t window, std::int64_t max_window,
                    Probe&& probe) {
  if (window < 1) throw PreconditionError("window must be >= 1");
  PilePitFrame frame = make_frame(pair, anchor, 2 * max_window);
  for (std::int64_t w = window; w <= max_window; w *= 2) {
    MachineRun small(frame, -w, w);
    MachineRun big(frame, -2 * w, 2 * w);
    auto a = probe(small);
    auto b = probe(big);
    if (a && b && *a == *b) return std::make_pair(*a, static_cast<std::uint64_t>(w));
  }
  throw WindowExhausted(static_cast<std::uint64_t>(max_window));
}

}  // namespace detail

/// phi-hat by the closed form: n = 0 if h <= r_B(pit 0), else the least n > 0
/// with h + theta_1^n <= psi_0^n ('<' in both places for Boundary::Strict);
/// d = h + theta_1^n - psi_0^{n-1}; y = S^d(pit n base).
inline MatchRecord even_match_formula(const PairSpec& pair, const RankOnePoint& x, std::int64_t window,
                                      Boundary boundary = Boundary::NonStrict,
                                      std::uint64_t budget = kDefaultStepBudget) {
  detail::require_even(pair);
  MatchRecord rec;
  rec.x = x;
  rec.mode = MatchMode::Formula;
  rec.stable_window = static_cast<std::uint64_t>(window);
  rec.h = height_above_base(pair, x, budget);
  const DigitStream anchor = pair.x().step(x, -static_cast<std::int64_t>(rec.h)).digits;
  if (rec.h == 0) {
    rec.y = pair.phi(pair.x().base_point(anchor));
    return rec;
  }
  PilePitFrame frame = make_frame(pair, anchor, window);
  auto fits = [&](std::uint64_t lhs, std::uint64_t rhs) {
    return boundary == Boundary::Strict ? lhs < rhs : lhs <= rhs;
  };
  std::uint64_t lhs = rec.h, rhs = frame.pit(0);
  std::int64_t n = 0;
  while (!fits(lhs, rhs)) {
    ++n;
    lhs += frame.pile(n);
    rhs += frame.pit(n);
  }
  rec.equality_cell = lhs == rhs;
  rec.n = static_cast<std::uint64_t>(n);
  rec.d = rec.h + frame.theta(1, n) - frame.psi(0, n - 1);
  rec.y = detail::climb(pair.y(), frame.pit_base(n), rec.d);
  return rec;
}

/// phi-hat by the deposit machine, checked stable under window doubling.
inline MatchRecord even_match_machine(const PairSpec& pair, const RankOnePoint& x, std::int64_t window,
                                      std::int64_t max_window = kDefaultMaxWindow,
                                      std::uint64_t budget = kDefaultStepBudget) {
  detail::require_even(pair);
  MatchRecord rec;
  rec.x = x;
  rec.mode = MatchMode::Machine;
  rec.h = height_above_base(pair, x, budget);
  const DigitStream anchor = pair.x().step(x, -static_cast<std::int64_t>(rec.h)).digits;
  if (rec.h == 0) {
    rec.y = pair.phi(pair.x().base_point(anchor));
    rec.stable_window = 0;
    return rec;
  }
  const std::uint64_t h = rec.h;
  auto [place, w] = detail::stable_machine(pair, anchor, window, std::max(window, max_window),
                                           [h](const MachineRun& run) { return run.item(0, h); });
  rec.n = place.shift;
  rec.d = place.depth;
  rec.stable_window = w;
  PilePitFrame frame = make_frame(pair, anchor, place.pit);
  rec.y = detail::climb(pair.y(), frame.pit_base(place.pit), rec.d);
  return rec;
}

inline MatchRecord even_match(const PairSpec& pair, const RankOnePoint& x, std::int64_t window, MatchMode mode,
                              Boundary boundary = Boundary::NonStrict) {
  return mode == MatchMode::Machine ? even_match_machine(pair, x, window) : even_match_formula(pair, x, window, boundary);
}

/// Least D >= 0 with S^{-D}(y) in B_0.
inline std::uint64_t depth_below_base(const PairSpec& pair, const RankOnePoint& y,
                                      std::uint64_t budget = kDefaultStepBudget) {
  return height_above(pair.y(), membership(pair.y(), pair.y().base_set()), y, budget);
}

/// phi-hat^{-1}. Machine mode reads the slot's occupant; formula mode uses
/// m = 0 if D <= r_A(pile 0), else the least m > 0 with D + gamma_1^m <= Psi_0^m,
/// and H = D + gamma_1^m - Psi_0^{m-1}.
inline InverseMatchRecord even_match_inverse(const PairSpec& pair, const RankOnePoint& y, std::int64_t window,
                                             MatchMode mode, Boundary boundary = Boundary::Strict,
                                             std::int64_t max_window = kDefaultMaxWindow,
                                             std::uint64_t budget = kDefaultStepBudget) {
  detail::require_even(pair);
  InverseMatchRecord rec;
  rec.y = y;
  rec.mode = mode;
  rec.D = depth_below_base(pair, y, budget);
  const DigitStream pit_digits = pair.y().step(y, -static_cast<std::int64_t>(rec.D)).digits;
  const DigitStream anchor = pair.phi_inverse(pit_digits);
  if (rec.D == 0) {
    rec.x = pair.x().base_point(anchor);
    return rec;
  }
  std::int64_t m = 0;
  if (mode == MatchMode::Machine) {
    const std::uint64_t D = rec.D;
    auto [occ, w] = detail::stable_machine(pair, anchor, window, std::max(window, max_window),
                                           [D](const MachineRun& run) { return run.slot(0, D); });
    m = -occ.pile;
    rec.H = occ.h;
    rec.stable_window = w;
  } else {
    PilePitFrame frame = make_frame(pair, anchor, window);
    auto fits = [&](std::uint64_t lhs, std::uint64_t rhs) {
      return boundary == Boundary::Strict ? lhs < rhs : lhs <= rhs;
    };
    std::uint64_t lhs = rec.D, rhs = frame.pile(0);
    while (!fits(lhs, rhs)) {
      ++m;
      lhs += frame.pit(-m);
      rhs += frame.pile(-m);
    }
    rec.equality_cell = lhs == rhs;
    rec.H = rec.D + frame.gamma(1, m) - frame.Psi(0, m - 1);
    rec.stable_window = static_cast<std::uint64_t>(window);
  }
  rec.m = static_cast<std::uint64_t>(m);
  PilePitFrame frame = make_frame(pair, anchor, m);
  rec.x = detail::climb(pair.x(), frame.pile_base(-m), rec.H);
  return rec;
}

/// (n, h, d) of an X point; (0, 0, 0) on A_0.
inline CellIndex classify_cell(const PairSpec& pair, const RankOnePoint& x, std::int64_t window,
                               MatchMode mode = MatchMode::Machine, Boundary boundary = Boundary::NonStrict) {
  const MatchRecord r = even_match(pair, x, window, mode, boundary);
  return {r.n, r.h, r.d};
}

/// (m, D, H) of a Y point; (0, 0, 0) on B_0.
inline CellIndex classify_cell_y(const PairSpec& pair, const RankOnePoint& y, std::int64_t window,
                                 MatchMode mode = MatchMode::Machine, Boundary boundary = Boundary::Strict) {
  const InverseMatchRecord r = even_match_inverse(pair, y, window, mode, boundary);
  return {r.m, r.D, r.H};
}

/// Counts for one machine window compared with the doubled window (same anchor).
struct WindowAudit {
  std::int64_t window = 0;
  std::uint64_t items = 0, slots = 0;
  std::uint64_t collisions = 0;
  std::uint64_t unstable_items = 0, unstable_slots = 0;
  std::uint64_t unmatched_interior_items = 0, unmatched_interior_slots = 0;  // no partner in the W run
  std::uint64_t max_r = 0;
  std::uint64_t interior_items = 0, interior_stable_items = 0;  // piles at distance > max_r from both edges
  std::uint64_t interior_slots = 0, interior_stable_slots = 0;
  std::int64_t deepest_instability = 0;  // largest distance from the nearer edge among unstable items/slots
};

inline WindowAudit audit_window(const PairSpec& pair, const DigitStream& anchor, std::int64_t window) {
  detail::require_even(pair);
  PilePitFrame frame = make_frame(pair, anchor, 2 * window);
  MachineRun small(frame, -window, window);
  MachineRun big(frame, -2 * window, 2 * window);
  WindowAudit a;
  a.window = window;
  a.collisions = small.collisions() + big.collisions();
  a.max_r = small.max_r();
  const auto margin = static_cast<std::int64_t>(a.max_r);
  for (std::int64_t i = -window; i <= window; ++i) {
    const std::int64_t edge = std::min(i + window, window - i);
    const bool interior = edge > margin;
    for (std::uint64_t h = 1; h <= small.items(i); ++h) {
      ++a.items;
      const auto p = small.item(i, h), q = big.item(i, h);
      const bool stable = p && q && *p == *q;
      if (interior) ++a.interior_items;
      if (interior && !p) ++a.unmatched_interior_items;
      if (stable) {
        if (interior) ++a.interior_stable_items;
      } else {
        ++a.unstable_items;
        a.deepest_instability = std::max(a.deepest_instability, edge);
      }
    }
    for (std::uint64_t d = 1; d <= small.slots(i); ++d) {
      ++a.slots;
      const auto p = small.slot(i, d), q = big.slot(i, d);
      const bool stable = p && q && *p == *q;
      if (interior) ++a.interior_slots;
      if (interior && !p) ++a.unmatched_interior_slots;
      if (stable) {
        if (interior) ++a.interior_stable_slots;
      } else {
        ++a.unstable_slots;
        a.deepest_instability = std::max(a.deepest_instability, edge);
      }
    }
  }
  return a;
}

/// Least n >= 1 with sum_{i<n} f(T_A^i x~) <= 0, f = r_A - r_B o phi.
struct StoppingTime {
  std::uint64_t n = 0;
  std::int64_t running_min = 0;
};

inline StoppingTime stopping_time(const PairSpec& pair, const DigitStream& base, std::uint64_t horizon) {
  detail::require_even(pair);
  BaseOrbitCursor cx(pair.x(), base), cy(pair.y(), pair.phi(base));
  std::int64_t sum = 0, lowest = INT64_MAX;
  for (std::uint64_t n = 1; n <= horizon; ++n) {
    sum += static_cast<std::int64_t>(cx.advance()) - static_cast<std::int64_t>(cy.advance());
    lowest = std::min(lowest, sum);
    if (sum <= 0) return {n, lowest};
  }
  throw HorizonExhausted(horizon, "partial sums stayed positive, running minimum " + std::to_string(lowest));
}

/// p >= 1 and q with phi-hat(T^p x) = S^q(phi-hat x); here p = 1.
struct Cocycle {
  std::int64_t p = 1;
  std::int64_t q = 0;
};

template <std::invocable<const RankOnePoint&> Match>
Cocycle cocycle_extract(const PairSpec& pair, const RankOnePoint& x, Match&& match) {
  const RankOnePoint y0 = match(x);
  const RankOnePoint y1 = match(pair.x().step(x, 1));
  const auto q = orbit_offset(pair.y(), y0, y1);
  if (!q) throw Error("images of consecutive points are not on one orbit within the built stages");
  return {1, *q};
}

inline Cocycle cocycle_extract(const PairSpec& pair, const RankOnePoint& x, std::int64_t window) {
  return cocycle_extract(pair, x, [&](const RankOnePoint& p) { return even_match_machine(pair, p, window).y; });
}

/// Trace CSV "x_id,h,n,d,y_id,mode,stable_window".
inline std::string match_trace_csv(const PairSpec& pair, const std::vector<MatchRecord>& recs) {
  std::string s = "x_id,h,n,d,y_id,mode,stable_window\n";
  for (const auto& r : recs)
    s += point_id(pair.x(), r.x) + "," + std::to_string(r.h) + "," + std::to_string(r.n) + "," + std::to_string(r.d) +
         "," + point_id(pair.y(), r.y) + "," + to_string(r.mode) + "," + std::to_string(r.stable_window) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Non-even construction.

struct NonEvenPlan {
  Rational epsilon;
  Rational epsilon_bound;          // (1/nu(B) - 1/mu(A)) / 2
  std::uint64_t n1 = 0, n2 = 0, n = 0;
  std::size_t depth = 0;           // A' = base points with digits 1..depth all zero
  std::uint64_t period = 1;        // product of the first `depth` cut counts
  LevelSet a_prime;                // A' as a level of stage depth+1 in X
  LevelSet b_prime;                // phi(A') in Y (identity conjugacy) or empty
  Rational a_prime_relative_mass;  // mu_{A_0}(A') = 1 / period
  std::size_t margin_samples = 0;
  std::int64_t min_margin = 0;     // min over samples of (pit depth - pile height)
  std::uint64_t max_pile = 0, max_pit = 0;
  std::size_t attempts = 0;
};

namespace detail {

inline bool zero_prefix(const RankOneSystem& s, const DigitStream& d, std::size_t depth) {
  for (std::size_t j = 1; j <= depth; ++j)
    if (d.digit(j, s.cuts(j)) != 0) return false;
  return true;
}

// Return time to the depth-m zero cylinder: one full period of induced returns.
inline std::uint64_t cylinder_return(const RankOneSystem& s, const DigitStream& d, std::uint64_t period) {
  BaseOrbitCursor c(s, d);
  std::uint64_t sum = 0;
  for (std::uint64_t i = 0; i < period; ++i) sum += c.advance();
  return sum;
}

inline DigitStream zero_cylinder_point(const DigitStream& tail, std::size_t depth) {
  std::vector<std::uint32_t> zeros(depth, 0);
  return DigitStream::generated(1, tail.seed(), zeros);
}

inline LevelSet zero_cylinder_level(const RankOneSystem& s, std::size_t depth) {
  std::uint64_t level = 0;
  for (std::size_t j = 1; j <= depth; ++j) level += s.offset(j, 0);
  return LevelSet(depth + 1, {level});
}

}  // namespace detail

struct NonEvenOptions {
  std::size_t ergodic_samples = 200;
  std::uint64_t horizon = 1 << 14;
  std::size_t margin_samples = 1000;
  std::size_t max_extra_depth = 4;
  std::uint64_t seed = 1;
};

/// Picks N from empirical N(eps) estimates, then the shallowest zero cylinder A'
/// with induced return >= 2N and mu_{A_0}(A') < 1/(2N), and checks pile <= pit
/// on sampled A' points (deepening the cylinder on a violation).
inline NonEvenPlan noneven_prepare(const PairSpec& pair, const Rational& eps, const NonEvenOptions& opt = {}) {
  const Rational mu = pair.mu_a(), nu = pair.nu_b();
  if (!(mu > nu)) throw PreconditionError("non-even matching needs mu(A) > nu(B), got " + mu.str() + " and " + nu.str());
  NonEvenPlan plan;
  plan.epsilon = eps;
  plan.epsilon_bound = (Rational(1) / nu - Rational(1) / mu) / Rational(2);
  if (!(eps.sign() > 0 && eps < plan.epsilon_bound))
    throw PreconditionError("eps must lie in (0, " + plan.epsilon_bound.str() + ")");
  const auto xs = base_samples(opt.seed, opt.ergodic_samples);
  std::vector<DigitStream> ys;
  for (const auto& d : xs) ys.push_back(pair.phi(d));
  plan.n1 = estimate_N(pair.x(), eps, xs, opt.horizon).n;
  plan.n2 = estimate_N(pair.y(), eps, ys, opt.horizon).n;
  plan.n = std::max(plan.n1, plan.n2);
  const std::uint64_t need = 2 * std::max<std::uint64_t>(plan.n, 1);
  std::size_t m = 0;
  std::uint64_t period = 1;
  while (period <= need) period *= pair.x().cuts(++m);
  const auto margin_points = base_samples(opt.seed ^ 0x5bd1e995u, opt.margin_samples);
  for (std::size_t extra = 0; extra <= opt.max_extra_depth; ++extra) {
    ++plan.attempts;
    plan.depth = m;
    plan.period = period;
    plan.a_prime = detail::zero_cylinder_level(pair.x(), m);
    plan.b_prime = pair.conjugacy().kind == Conjugacy::Kind::Identity ? detail::zero_cylinder_level(pair.y(), m) : LevelSet();
    plan.a_prime_relative_mass = Rational(1, static_cast<std::int64_t>(period));
    plan.margin_samples = 0;
    plan.min_margin = INT64_MAX;
    plan.max_pile = plan.max_pit = 0;
    bool ok = true;
    for (const auto& t : margin_points) {
      const DigitStream xd = detail::zero_cylinder_point(t, m);
      const std::uint64_t pile = detail::cylinder_return(pair.x(), xd, period);
      const std::uint64_t pit = detail::cylinder_return(pair.y(), pair.phi(xd), period);
      ++plan.margin_samples;
      plan.max_pile = std::max(plan.max_pile, pile);
      plan.max_pit = std::max(plan.max_pit, pit);
      plan.min_margin = std::min(plan.min_margin, static_cast<std::int64_t>(pit) - static_cast<std::int64_t>(pile));
      if (pile > pit) ok = false;
    }
    if (ok) return plan;
    period *= pair.x().cuts(++m);
  }
  throw MarginViolation("a sampled pile exceeds its pit at every tried depth (last depth " + std::to_string(m) + ")");
}

/// Height above A' (X side) or depth below B' = phi(A') (Y side), with the
/// zero-cylinder base point it hangs from.
struct CylinderAnchor {
  std::uint64_t height = 0;
  DigitStream base;
};

namespace detail {
inline CylinderAnchor climb_down_to_cylinder(const RankOneSystem& s, const RankOnePoint& p, std::size_t depth,
                                             const std::function<bool(const DigitStream&)>& in_cylinder,
                                             std::uint64_t budget) {
  CylinderAnchor a;
  a.height = height_above(s, membership(s, s.base_set()), p, budget);
  BaseOrbitCursor c(s, s.step(p, -static_cast<std::int64_t>(a.height)).digits);
  (void)depth;
  while (!in_cylinder(c.digits())) {
    a.height += c.retreat();
    if (a.height > budget) throw BudgetExhausted(budget, "no visit to the cylinder in the past");
  }
  a.base = c.digits();
  return a;
}
}  // namespace detail

inline CylinderAnchor height_above_cylinder(const PairSpec& pair, const NonEvenPlan& plan, const RankOnePoint& x,
                                            std::uint64_t budget = kDefaultStepBudget) {
  const auto& s = pair.x();
  return detail::climb_down_to_cylinder(
      s, x, plan.depth, [&](const DigitStream& d) { return detail::zero_prefix(s, d, plan.depth); }, budget);
}

inline CylinderAnchor depth_below_cylinder(const PairSpec& pair, const NonEvenPlan& plan, const RankOnePoint& y,
                                           std::uint64_t budget = kDefaultStepBudget) {
  const auto& s = pair.y();
  return detail::climb_down_to_cylinder(
      s, y, plan.depth,
      [&](const DigitStream& d) { return detail::zero_prefix(pair.x(), pair.phi_inverse(d), plan.depth); }, budget);
}

/// y = S^h phi T^{-h} x with h the height above A'.
inline RankOnePoint noneven_match(const PairSpec& pair, const NonEvenPlan& plan, const RankOnePoint& x,
                                  std::uint64_t budget = kDefaultStepBudget) {
  const CylinderAnchor a = height_above_cylinder(pair, plan, x, budget);
  return detail::climb(pair.y(), pair.phi(a.base), a.height);
}

/// Whether y lies in the image: its depth below B' is less than the paired pile height.
inline bool in_image(const PairSpec& pair, const NonEvenPlan& plan, const RankOnePoint& y,
                     std::uint64_t budget = kDefaultStepBudget) {
  const CylinderAnchor a = depth_below_cylinder(pair, plan, y, budget);
  return a.height < detail::cylinder_return(pair.x(), pair.phi_inverse(a.base), plan.period);
}

/// x = T^H phi^{-1} S^{-H} y with H the depth below B'.
inline RankOnePoint noneven_inverse(const PairSpec& pair, const NonEvenPlan& plan, const RankOnePoint& y,
                                    std::uint64_t budget = kDefaultStepBudget) {
  const CylinderAnchor a = depth_below_cylinder(pair, plan, y, budget);
  const DigitStream xb = pair.phi_inverse(a.base);
  if (a.height >= detail::cylinder_return(pair.x(), xb, plan.period))
    throw PreconditionError("point lies in the part of a pit no pile reaches");
  return detail::climb(pair.x(), xb, a.height);
}

/// S restricted to the image set: the induced map of S on the image.
inline RankOnePoint image_induced_step(const PairSpec& pair, const NonEvenPlan& plan, const RankOnePoint& y,
                                       std::uint64_t budget = kDefaultStepBudget) {
  auto in_bbar = [&](const RankOnePoint& p) { return in_image(pair, plan, p, budget); };
  return induced_apply(pair.y(), in_bbar, y, budget);
}

}  // namespace kakutani
