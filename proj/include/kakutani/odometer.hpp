#pragma once

// Mixed-radix odometers (adding machines) and the prefix-inducing
// construction on a q-adic tower of first height q.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "kakutani/digits.hpp"
#include "kakutani/errors.hpp"
#include "kakutani/rank_one.hpp"
#include "kakutani/rational.hpp"

namespace kakutani {

/// Bases b_1, b_2, ... with the last listed base repeating forever.
struct OdometerSpec {
  std::vector<std::uint32_t> bases{2};

  std::uint32_t base(std::size_t pos) const {
    if (pos == 0) throw Error("odometer positions are 1-based");
    return pos <= bases.size() ? bases[pos - 1] : bases.back();
  }

  /// "od:[b1,b2,*]"; a trailing "*" (optional) marks the repeating last base.
  static OdometerSpec parse(std::string_view text) {
    auto fail = [&](const std::string& what) { throw ParseError(1, 1, "odometer spec '" + std::string(text) + "': " + what); };
    if (!text.starts_with("od:[") || !text.ends_with("]")) fail("expected od:[b1,b2,...]");
    std::string_view body = text.substr(4, text.size() - 5);
    OdometerSpec spec;
    spec.bases.clear();
    std::size_t pos = 0;
    bool star = false;
    while (pos <= body.size() && !body.empty()) {
      std::size_t comma = body.find(',', pos);
      if (comma == std::string_view::npos) comma = body.size();
      std::string tok(body.substr(pos, comma - pos));
      std::erase_if(tok, [](unsigned char c) { return std::isspace(c); });
      pos = comma + 1;
      if (star) fail("'*' must be last");
      if (tok == "*") {
        star = true;
        continue;
      }
      if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isdigit(c); }))
        fail("bad base '" + tok + "'");
      const auto b = std::stoul(tok);
      if (b < 2) fail("bases must be >= 2");
      spec.bases.push_back(static_cast<std::uint32_t>(b));
    }
    if (spec.bases.empty()) fail("no bases");
    return spec;
  }

  std::string str() const {
    std::string s = "od:[";
    for (auto b : bases) s += std::to_string(b) + ",";
    return s + "*]";
  }

  /// The spacer-free rank-one spec with these cut counts.
  StackingSpec as_stacking() const { return builtin_spec(stacking_name()); }

  std::string stacking_name() const {
    std::string s = "odometer(";
    for (std::size_t i = 0; i < bases.size(); ++i) s += (i ? "," : "") + std::to_string(bases[i]);
    return s + ")";
  }

  friend bool operator==(const OdometerSpec&, const OdometerSpec&) = default;
};

struct OdometerPoint {
  DigitStream digits = DigitStream::zeros(1);
};

/// Cylinder of points whose first digits equal `prefix`.
struct Cylinder {
  std::vector<std::uint32_t> prefix;
};

/// Add-one-with-carry on a mixed-radix digit space.
class OdometerSystem {
 public:
  using point_type = OdometerPoint;

  explicit OdometerSystem(OdometerSpec spec, std::size_t budget = 64) : spec_(std::move(spec)), budget_(budget) {}

  const OdometerSpec& spec() const noexcept { return spec_; }
  std::size_t budget() const noexcept { return budget_; }
  auto radix_fn() const {
    return [this](std::size_t pos) { return spec_.base(pos); };
  }

  OdometerPoint successor(const OdometerPoint& p) const { return carry(p, +1); }
  OdometerPoint predecessor(const OdometerPoint& p) const { return carry(p, -1); }

  OdometerPoint step(const OdometerPoint& p, std::int64_t n) const {
    OdometerPoint q = p;
    for (; n > 0; --n) q = successor(q);
    for (; n < 0; ++n) q = predecessor(q);
    return q;
  }

  bool same(const OdometerPoint& a, const OdometerPoint& b) const {
    return same_digits(a.digits, b.digits, radix_fn());
  }

  std::uint32_t digit(const OdometerPoint& p, std::size_t pos) const { return p.digits.digit(pos, spec_.base(pos)); }

  bool contains(const Cylinder& c, const OdometerPoint& p) const {
    for (std::size_t i = 0; i < c.prefix.size(); ++i)
      if (digit(p, i + 1) != c.prefix[i]) return false;
    return true;
  }

  Rational measure(const Cylinder& c) const {
    Rational m(1);
    for (std::size_t i = 0; i < c.prefix.size(); ++i) {
      if (c.prefix[i] >= spec_.base(i + 1)) throw PreconditionError("cylinder digit exceeds its base");
      m = m / Rational(static_cast<std::int64_t>(spec_.base(i + 1)));
    }
    return m;
  }

  /// Period of the first k digits under the successor: b_1 ... b_k.
  std::uint64_t period(std::size_t k) const {
    std::uint64_t p = 1;
    for (std::size_t i = 1; i <= k; ++i) p *= spec_.base(i);
    return p;
  }

  /// Value of the first k digits as an integer counter (digit 1 least significant).
  std::uint64_t counter(const OdometerPoint& p, std::size_t k) const {
    std::uint64_t v = 0, scale = 1;
    for (std::size_t i = 1; i <= k; ++i) {
      v += scale * digit(p, i);
      scale *= spec_.base(i);
    }
    return v;
  }

  template <class Rng>
  OdometerPoint sample_point(Rng& rng) const {
    return {DigitStream::generated(1, rng())};
  }

 private:
  OdometerPoint carry(const OdometerPoint& p, int dir) const {
    OdometerPoint q = p;
    auto radix = radix_fn();
    for (std::size_t pos = 1; pos <= budget_; ++pos) {
      const std::uint32_t b = spec_.base(pos);
      const std::uint32_t d = q.digits.digit(pos, b);
      if (dir > 0 && d + 1 < b) {
        q.digits.set_digit(pos, d + 1, radix);
        return q;
      }
      if (dir < 0 && d > 0) {
        q.digits.set_digit(pos, d - 1, radix);
        return q;
      }
      q.digits.set_digit(pos, dir > 0 ? 0 : b - 1, radix);
    }
    throw NeedMoreDigits(budget_);
  }

  OdometerSpec spec_;
  std::size_t budget_;
};

/// Inducing the q-adic tower (first stage a stack of q levels, cut q ways
/// forever, no spacers) on its first p levels. The induced map is the
/// odometer with bases (p, q, q, ...); canonical tower heights p, pq, pq^2, ...
class OdometerPrefixInducing {
 public:
  OdometerPrefixInducing(std::uint32_t q, std::uint32_t p, std::size_t budget = 64)
      : q_(q), p_(p), tower_(make_tower(q, p), budget), induced_(make_induced(q, p), budget) {}

  std::uint32_t q() const noexcept { return q_; }
  std::uint32_t p() const noexcept { return p_; }

  const RankOneSystem& tower() const noexcept { return tower_; }
  const OdometerSystem& induced() const noexcept { return induced_; }

  /// The inducing set: stage-1 levels 0..p-1.
  LevelSet base() const {
    std::vector<std::uint64_t> ls;
    for (std::uint64_t l = 0; l < p_; ++l) ls.push_back(l);
    return LevelSet(1, std::move(ls));
  }

  /// Height of the k-th canonical tower of the induced odometer: p q^{k-1}.
  std::uint64_t canonical_height(std::size_t k) const {
    std::uint64_t h = p_;
    for (std::size_t i = 1; i < k; ++i) h *= q_;
    return h;
  }

  /// Isomorphism: tower point (stage-1 level l < p, columns a_1, a_2, ...) -> odometer digits (l, a_1, a_2, ...).
  OdometerPoint to_odometer(const RankOnePoint& x) const {
    if (x.birth_stage != 1 || x.birth_level >= p_) throw PreconditionError("point is not in the inducing set");
    if (x.digits.start() != 1) throw PreconditionError("base point digits must start at stage 1");
    std::vector<std::uint32_t> head{static_cast<std::uint32_t>(x.birth_level)};
    for (std::size_t j = 1; j < x.digits.prefix_end(); ++j) head.push_back(x.digits.digit(j, q_));
    OdometerPoint out;
    // Tower position j is odometer position j+1.
    switch (x.digits.tail()) {
      case DigitStream::Tail::None:
        out.digits = DigitStream::finite(1, std::move(head));
        break;
      case DigitStream::Tail::Periodic: {
        std::vector<std::uint32_t> period;
        const std::size_t from = x.digits.prefix_end();
        for (std::size_t j = from; j < from + x.digits.period().size(); ++j) period.push_back(x.digits.digit(j, q_));
        out.digits = DigitStream::periodic(1, std::move(head), std::move(period));
        break;
      }
      case DigitStream::Tail::Generated:
        throw PreconditionError("generated digit streams cannot be re-indexed; materialize a prefix first");
    }
    return out;
  }

  RankOnePoint from_odometer(const OdometerPoint& y) const {
    const std::uint32_t level = induced_.digit(y, 1);
    std::vector<std::uint32_t> head;
    for (std::size_t j = 2; j < y.digits.prefix_end(); ++j) head.push_back(induced_.digit(y, j));
    RankOnePoint x;
    x.birth_stage = 1;
    x.birth_level = level;
    switch (y.digits.tail()) {
      case DigitStream::Tail::None:
        x.digits = DigitStream::finite(1, std::move(head));
        break;
      case DigitStream::Tail::Periodic: {
        std::vector<std::uint32_t> period;
        const std::size_t from = std::max<std::size_t>(2, y.digits.prefix_end());
        for (std::size_t j = from; j < from + y.digits.period().size(); ++j) period.push_back(induced_.digit(y, j));
        x.digits = DigitStream::periodic(1, std::move(head), std::move(period));
        break;
      }
      case DigitStream::Tail::Generated:
        throw PreconditionError("generated digit streams cannot be re-indexed; materialize a prefix first");
    }
    return x;
  }

 private:
  static StackingSpec make_tower(std::uint32_t q, std::uint32_t p) {
    if (q < 2) throw PreconditionError("q must be >= 2");
    if (p == 0 || p >= q) throw PreconditionError("inducing prefix p must satisfy 1 <= p < q");
    StackingSpec s;
    s.name = "q-adic tower";
    s.initial_height = q;
    StageRule r;
    r.cuts = q;
    r.spacers_above.assign(q, 0);
    s.tail = r;
    return s;
  }

  static OdometerSpec make_induced(std::uint32_t q, std::uint32_t p) {
    OdometerSpec s;
    s.bases = {p, q};  // p = 1 gives a trivial first digit
    return s;
  }

  std::uint32_t q_, p_;
  RankOneSystem tower_;
  OdometerSystem induced_;
};

}  // namespace kakutani
