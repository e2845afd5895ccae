#pragma once

// Property checks over a registry of systems and pairs, run with explicit
// seeds and reported as structured verdicts. A failing check never aborts
// the suite; it carries a reproduction record instead.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kakutani/ergodic.hpp"
#include "kakutani/induction.hpp"
#include "kakutani/matcher.hpp"
#include "kakutani/odometer.hpp"
#include "kakutani/rank_one.hpp"
#include "kakutani/rotation.hpp"
#include "kakutani/spec_lang.hpp"

namespace kakutani {

/// Seeded random spec: h1 in 1..3, stages with 2..4 cuts, 0..3 spacers above
/// each column and 0..2 below, and a single-spacer periodic tail half the time.
inline StackingSpec random_spec(std::mt19937_64& rng, std::size_t stages) {
  StackingSpec s;
  s.initial_height = 1 + rng() % 3;
  for (std::size_t i = 0; i < stages; ++i) {
    StageRule r;
    r.cuts = 2 + rng() % 3;
    r.spacers_above.clear();
    for (std::uint32_t j = 0; j < r.cuts; ++j) r.spacers_above.push_back(rng() % 4);
    r.spacers_below = rng() % 3;
    s.prefix.push_back(r);
  }
  if (rng() % 2) {
    StageRule t;
    t.cuts = 2 + rng() % 3;
    t.spacers_above.assign(t.cuts, 0);
    t.spacers_above[rng() % t.cuts] = 1;
    s.tail = t;
  }
  s.name = "random";
  return s;
}

struct SuiteConfig {
  std::string name = "default";
  std::uint64_t seed = 1;
  std::vector<std::string> pairs{"identity", "dyadic", "chacon_heavy"};
  std::vector<std::string> systems{"chacon", "odometer(2)", "dyadic_pair_left", "dyadic_pair_right", "triple_heavy"};
  std::vector<std::string> rotations{"cf:[0;(2)]", "cf:[0;(1)]"};
  std::vector<std::string> odometers{"od:[2,*]", "od:[2,3,*]"};
  std::vector<std::int64_t> windows{64, 256, 1024};
  std::int64_t match_window = 64;
  std::size_t samples = 1000;
  std::size_t measure_samples = 10000;
  std::size_t measure_stage = 6;   // Y levels compared in the pushforward check
  std::size_t sample_stage = 20;   // X points drawn uniformly from this stack
  std::size_t random_specs = 50;
  std::size_t random_spec_stages = 8;
  std::size_t stage_horizon = 12;
  Rational kac_tolerance{1, 50};
  std::uint64_t kac_horizon = 6561;
  Rational noneven_epsilon{1, 4};
  std::uint64_t stopping_horizon = 1u << 16;
  Rational min_stable_fraction{99, 100};
  std::int64_t measure_tolerance_sigmas = 3;  // tolerance k / sqrt(samples)

  nlohmann::json to_json() const {
    return {{"name", name},
            {"seed", seed},
            {"pairs", pairs},
            {"systems", systems},
            {"rotations", rotations},
            {"odometers", odometers},
            {"windows", windows},
            {"match_window", match_window},
            {"samples", samples},
            {"measure_samples", measure_samples},
            {"measure_stage", measure_stage},
            {"sample_stage", sample_stage},
            {"random_specs", random_specs},
            {"random_spec_stages", random_spec_stages},
            {"stage_horizon", stage_horizon},
            {"kac_tolerance", kac_tolerance.str()},
            {"kac_horizon", kac_horizon},
            {"noneven_epsilon", noneven_epsilon.str()},
            {"stopping_horizon", stopping_horizon},
            {"min_stable_fraction", min_stable_fraction.str()},
            {"measure_tolerance_sigmas", measure_tolerance_sigmas}};
  }
};

struct Verdict {
  std::string check;
  std::string subject;
  bool pass = true;
  std::string note;                 // e.g. "boundary disagreement"
  std::vector<std::string> covers;  // invariant ids exercised
  nlohmann::json stats = nlohmann::json::object();
  nlohmann::json counterexample;    // null on pass

  nlohmann::json to_json() const {
    return {{"check", check}, {"subject", subject}, {"pass", pass},         {"note", note},
            {"covers", covers}, {"stats", stats},   {"counterexample", counterexample}};
  }
};

/// Every module invariant the suite must execute at least once.
inline const std::vector<std::string>& invariant_ids() {
  static const std::vector<std::string> ids{
      "spec.round_trip",           "spec.height_recurrence",         "rank.group_action",
      "rank.boolean_algebra",      "rank.spacer_recovery",           "rank.recurrences",
      "arith.rotation_order",      "arith.exchange_first_return",    "arith.odometer_cylinder_mass",
      "arith.prefix_isomorphism",  "induce.kac_accounting",          "induce.bijective",
      "induce.return_constant_on_cells", "induce.tower_disjoint",    "ergodic.exact_averages",
      "ergodic.cylinder_average",  "ergodic.kac_along_heights",      "ergodic.estimate_monotone",
      "match.intertwining",        "match.machine_bijective",        "match.round_trips",
      "match.formula_agreement",   "match.conjugacy_restriction",    "match.measure_preservation",
      "match.stopping_finite",     "match.noneven_margin",           "match.noneven_order",
      "match.noneven_conjugacy",   "match.record_invariants",        "match.cocycle"};
  return ids;
}

namespace detail {

// FNV-1a, so per-check seeds do not depend on the standard library's hash.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::mt19937_64 check_rng(const SuiteConfig& cfg, std::string_view check, std::string_view subject) {
  return std::mt19937_64(fnv1a(subject, fnv1a(check, cfg.seed * 0x9e3779b97f4a7c15ull + 1)));
}

// |p/q| <= k / sqrt(n)  <=>  p^2 n <= k^2 q^2.
inline bool within_sigma(const Rational& dev, std::uint64_t n, std::int64_t k) {
  const __int128 p = dev.num() < 0 ? -static_cast<__int128>(dev.num()) : dev.num();
  const __int128 q = dev.den();
  return p * p * static_cast<__int128>(n) <= static_cast<__int128>(k) * k * q * q;
}

// alpha from a convergent h/k with k >= 2^56, in 128-bit float.
inline __float128 quad_alpha(const RotationAngle& alpha) {
  __int128 h_prev = 1, k_prev = 0, h = 0, k = 1;
  for (std::size_t i = 1; k < (static_cast<__int128>(1) << 56); ++i) {
    const __int128 t = alpha.term(i);
    const __int128 nh = t * h + h_prev, nk = t * k + k_prev;
    h_prev = h, k_prev = k, h = nh, k = nk;
  }
  return static_cast<__float128>(h) / static_cast<__float128>(k);
}

inline std::string fraction(std::uint64_t a, std::uint64_t b) { return std::to_string(a) + "/" + std::to_string(b); }

// Off-base X point drawn uniformly from the stage-k stack.
inline RankOnePoint off_base_point(const RankOneSystem& s, std::mt19937_64& rng, std::size_t k) {
  for (;;) {
    auto x = s.sample_point(rng, k);
    if (!s.contains(s.base_set(), x)) return x;
  }
}

inline Verdict make(std::string check, std::string subject, std::vector<std::string> covers) {
  Verdict v;
  v.check = std::move(check);
  v.subject = std::move(subject);
  v.covers = std::move(covers);
  return v;
}

// Records the first failure only; later ones are counted in stats.
inline void fail(Verdict& v, nlohmann::json example) {
  if (v.pass) v.counterexample = std::move(example);
  v.pass = false;
}

inline std::vector<StackingSpec> spec_corpus(const SuiteConfig& cfg) {
  std::vector<StackingSpec> out;
  for (const auto& n : cfg.systems) out.push_back(builtin_spec(n));
  std::mt19937_64 rng(fnv1a("random-specs", cfg.seed));
  for (std::size_t i = 0; i < cfg.random_specs; ++i) {
    auto s = random_spec(rng, 1 + rng() % cfg.random_spec_stages);
    s.name = "random-" + std::to_string(i);
    out.push_back(canonicalize(std::move(s)));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shrinking.

/// A reproducible failure: a pair, an anchor digit stream, a window, and how
/// many leading anchor digits are kept explicit (the rest regenerated).
struct Counterexample {
  std::string check;
  std::string subject;
  DigitStream anchor = DigitStream::zeros(1);
  std::int64_t window = 1;
  std::size_t prefix = 0;
  std::uint64_t tail_seed = 0;

  /// Anchor with only the first `prefix` digits kept.
  template <class RadixFn>
  DigitStream truncated(RadixFn&& radix) const {
    std::vector<std::uint32_t> head;
    for (std::size_t j = 0; j < prefix; ++j) head.push_back(anchor.digit(anchor.start() + j, radix(anchor.start() + j)));
    return DigitStream::generated(anchor.start(), tail_seed, std::move(head));
  }

  nlohmann::json to_json() const {
    return {{"check", check}, {"subject", subject}, {"window", window}, {"prefix", prefix}, {"tail_seed", tail_seed}};
  }
};

/// Smallest window, then shortest explicit digit prefix, that still fails.
/// `fails(c)` must judge c using c.window and c.truncated(...). A passing
/// input is returned unchanged.
template <class Fails, class RadixFn>
Counterexample shrink(Counterexample c, Fails&& fails, RadixFn&& radix) {
  if (!fails(c)) return c;
  std::int64_t lo = 1, hi = c.window;  // fails at hi
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    Counterexample t = c;
    t.window = mid;
    if (fails(t))
      hi = mid;
    else
      lo = mid + 1;
  }
  c.window = hi;
  // Materialize the anchor's explicit digits so later truncations are prefixes of it.
  std::size_t len = c.prefix;
  while (len > 0) {
    Counterexample t = c;
    t.prefix = len - 1;
    if (!fails(t)) break;
    --len;
  }
  c.prefix = len;
  c.anchor = c.truncated(radix);
  return c;
}

// ---------------------------------------------------------------------------
// spec_lang

namespace checks {

inline Verdict spec_round_trip(const SuiteConfig& cfg) {
  Verdict v = detail::make("spec.round_trip", "builtins+random", {"spec.round_trip"});
  std::size_t n = 0;
  for (const auto& s : detail::spec_corpus(cfg)) {
    ++n;
    const std::string text = serialize(s);
    const StackingSpec back = parse_spec(text);
    const StackingSpec from_json = parse_spec_json(to_json(s));
    if (!(back == s) || !(from_json == s) || serialize(back) != text) detail::fail(v, {{"spec", text}});
  }
  v.stats = {{"specs", n}};
  return v;
}

inline Verdict spec_height_recurrence(const SuiteConfig& cfg) {
  Verdict v = detail::make("spec.height_recurrence", "builtins+random", {"spec.height_recurrence", "rank.recurrences"});
  std::size_t stages_checked = 0;
  for (const auto& s : detail::spec_corpus(cfg)) {
    RankOneSystem sys(s, 32, cfg.stage_horizon);
    for (std::size_t i = 1; i < sys.depth(); ++i) {
      const StageRule& r = s.rule(i);
      std::uint64_t above = 0;
      for (auto a : r.spacers_above) above += a;
      ++stages_checked;
      const bool h_ok = sys.height(i + 1) == r.spacers_below + r.cuts * sys.height(i) + above;
      const bool w_ok = sys.width(i + 1) * Rational(r.cuts) == sys.width(i);
      const bool mass_ok = sys.stage(i + 1).residual <= sys.stage(i).residual &&
                           Rational(static_cast<std::int64_t>(sys.height(i))) * sys.width(i) + sys.stage(i).residual ==
                               Rational(1);
      if (!h_ok || !w_ok || !mass_ok)
        detail::fail(v, {{"spec", serialize(s)}, {"stage", i}, {"height", h_ok}, {"width", w_ok}, {"mass", mass_ok}});
    }
  }
  v.stats = {{"stages", stages_checked}};
  return v;
}

// ---------------------------------------------------------------------------
// rank_one_engine

inline Verdict rank_group_action(const SuiteConfig& cfg, const std::string& name) {
  Verdict v = detail::make("rank.group_action", name, {"rank.group_action"});
  RankOneSystem sys(builtin_spec(name));
  auto rng = detail::check_rng(cfg, v.check, name);
  std::uniform_int_distribution<std::int64_t> step(-200, 200);
  std::size_t checked = 0, unresolved = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const auto p = sys.sample_point(rng, 10);
    const std::int64_t m = step(rng), n = step(rng);
    try {
      const auto lhs = sys.step(p, m + n);
      const auto rhs = sys.step(sys.step(p, m), n);
      const auto back = sys.step(sys.step(p, m), -m);
      ++checked;
      if (!sys.same(lhs, rhs) || !sys.same(back, p))
        detail::fail(v, {{"point", point_id(sys, p)}, {"m", m}, {"n", n}});
    } catch (const NeedMoreDepth&) {
      ++unresolved;
    }
  }
  v.stats = {{"checked", checked}, {"unresolved", unresolved}};
  return v;
}

inline Verdict rank_boolean_algebra(const SuiteConfig& cfg, const std::string& name) {
  Verdict v = detail::make("rank.boolean_algebra", name, {"rank.boolean_algebra"});
  RankOneSystem sys(builtin_spec(name));
  auto rng = detail::check_rng(cfg, v.check, name);
  const std::size_t trials = std::min<std::size_t>(cfg.samples, 200);
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 1 + rng() % 5;
    auto random_set = [&] {
      std::vector<std::uint64_t> ls;
      for (std::uint64_t l = 0; l < sys.height(k); ++l)
        if (rng() % 2) ls.push_back(l);
      return LevelSet(k, std::move(ls));
    };
    const LevelSet a = random_set(), b = random_set();
    const LevelSet ac = sys.complement(a);
    const bool additive = sys.measure(a | b) + sys.measure(a & b) == sys.measure(a) + sys.measure(b);
    const bool complement = (a & ac).empty() && (a | ac) == sys.full(k) &&
                            sys.measure(ac) == sys.measure(sys.full(k)) - sys.measure(a);
    const bool lift = sys.measure(sys.lift(a, k + 2)) == sys.measure(a) &&
                      sys.lift(a & b, k + 2) == (sys.lift(a, k + 2) & sys.lift(b, k + 2));
    if (!additive || !complement || !lift)
      detail::fail(v, {{"stage", k}, {"additive", additive}, {"complement", complement}, {"lift", lift}});
  }
  v.stats = {{"pairs", trials}};
  return v;
}

inline Verdict rank_spacer_recovery(const SuiteConfig& cfg) {
  Verdict v = detail::make("rank.spacer_recovery", "builtins+random", {"rank.spacer_recovery"});
  std::size_t stages_checked = 0;
  for (const auto& s : detail::spec_corpus(cfg)) {
    RankOneSystem sys(s, 32, cfg.random_spec_stages + 1);
    for (std::size_t i = 1; i < sys.depth(); ++i) {
      const SpacerCounts got = sys.recover_spacers(i);
      const StageRule& r = s.rule(i);
      ++stages_checked;
      if (got.below != r.spacers_below || got.above != r.spacers_above)
        detail::fail(v, {{"spec", serialize(s)}, {"stage", i}});
    }
  }
  v.stats = {{"stages", stages_checked}};
  return v;
}

// ---------------------------------------------------------------------------
// arithmetic_systems

inline Verdict arith_rotation_order(const SuiteConfig& cfg, const std::string& cf) {
  Verdict v = detail::make("arith.rotation_order", cf, {"arith.rotation_order"});
  RotationSystem sys(RotationAngle::parse(cf));
  const __float128 a = detail::quad_alpha(sys.angle());
  auto rng = detail::check_rng(cfg, v.check, cf);
  std::uniform_int_distribution<std::int64_t> d(-1'000'000, 1'000'000);
  const std::size_t queries = 10 * cfg.samples;
  std::size_t disagreements = 0;
  for (std::size_t i = 0; i < queries; ++i) {
    const auto x = sys.point(d(rng)), y = sys.point(d(rng));
    const __float128 vx = x.a + x.b * a, vy = y.a + y.b * a;
    const int expected = x.b == y.b ? 0 : (vx < vy ? -1 : 1);
    if (sys.compare(x, y) != expected) {
      ++disagreements;
      detail::fail(v, {{"x", x.b}, {"y", y.b}});
    }
  }
  // Transitivity on a sorted sample.
  std::vector<RotationPoint> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(sys.point(d(rng)));
  std::sort(pts.begin(), pts.end(), [&](const auto& x, const auto& y) { return sys.compare(x, y) < 0; });
  std::size_t intransitive = 0;
  for (std::size_t i = 0; i + 2 < pts.size(); ++i)
    if (sys.compare(pts[i], pts[i + 2]) > 0) ++intransitive;
  if (intransitive) detail::fail(v, {{"intransitive", intransitive}});
  v.stats = {{"queries", queries}, {"disagreements", disagreements}, {"intransitive", intransitive}};
  return v;
}

inline Verdict arith_exchange_first_return(const SuiteConfig& cfg, const std::string& cf) {
  Verdict v = detail::make("arith.exchange_first_return", cf, {"arith.exchange_first_return"});
  RotationSystem sys(RotationAngle::parse(cf));
  ExchangeMap ex(sys);
  auto in_a = membership(sys, IntervalUnion::initial(sys));
  auto rng = detail::check_rng(cfg, v.check, cf);
  std::size_t checked = 0;
  std::map<std::int64_t, std::size_t> times;
  while (checked < cfg.samples) {
    const auto p = sys.sample_point(rng);
    if (!ex.in_domain(p)) continue;
    ++checked;
    const auto fr = first_return_rotation(sys, p);
    ++times[fr.time];
    const bool ok = (fr.time == ex.n() || fr.time == ex.n() + 1) && fr.point == ex.apply(p) &&
                    ex.inverse(ex.apply(p)) == p && induced_apply(sys, in_a, p) == fr.point;
    if (!ok) detail::fail(v, {{"point", p.b}});
  }
  nlohmann::json hist = nlohmann::json::object();
  for (auto [r, c] : times) hist[std::to_string(r)] = c;
  v.stats = {{"points", checked}, {"n", ex.n()}, {"return_times", hist}};
  return v;
}

inline Verdict arith_odometer_cylinder_mass(const SuiteConfig& cfg, const std::string& od_text) {
  Verdict v = detail::make("arith.odometer_cylinder_mass", od_text, {"arith.odometer_cylinder_mass"});
  OdometerSystem od(OdometerSpec::parse(od_text));
  auto rng = detail::check_rng(cfg, v.check, od_text);
  std::size_t cylinders = 0;
  for (std::size_t k = 1; k <= 4; ++k) {
    const std::uint64_t count = od.period(k);
    for (std::uint64_t c = 0; c < count; ++c) {
      Cylinder cyl;
      std::uint64_t rest = c;
      for (std::size_t j = 1; j <= k; ++j) {
        cyl.prefix.push_back(static_cast<std::uint32_t>(rest % od.spec().base(j)));
        rest /= od.spec().base(j);
      }
      ++cylinders;
      // All successors of points in the cylinder share one k-prefix: the image cylinder.
      std::optional<Cylinder> image;
      bool ok = true;
      for (int s = 0; s < 8 && ok; ++s) {
        OdometerPoint p{DigitStream::generated(1, rng(), cyl.prefix)};
        const auto q = od.successor(p);
        Cylinder qc;
        for (std::size_t j = 1; j <= k; ++j) qc.prefix.push_back(od.digit(q, j));
        if (!image)
          image = qc;
        else if (image->prefix != qc.prefix)
          ok = false;
      }
      if (!ok || od.measure(*image) != od.measure(cyl)) detail::fail(v, {{"k", k}, {"cylinder", c}});
    }
  }
  v.stats = {{"cylinders", cylinders}};
  return v;
}

inline Verdict arith_prefix_isomorphism(const SuiteConfig& cfg, std::uint32_t q, std::uint32_t p) {
  const std::string subject = "q=" + std::to_string(q) + ",p=" + std::to_string(p);
  Verdict v = detail::make("arith.prefix_isomorphism", subject, {"arith.prefix_isomorphism"});
  OdometerPrefixInducing ind(q, p);
  auto in_a = membership(ind.tower(), ind.base());
  const std::size_t steps = 10 * cfg.samples;
  OdometerPoint y{DigitStream::zeros(1)};
  RankOnePoint x = ind.from_odometer(y);
  for (std::size_t t = 0; t < steps; ++t) {
    x = induced_apply(ind.tower(), in_a, x);
    y = ind.induced().successor(y);
    if (!ind.induced().same(ind.to_odometer(x), y)) {
      detail::fail(v, {{"step", t + 1}});
      break;
    }
  }
  // Canonical tower heights p, pq, pq^2 are the induced odometer's periods.
  for (std::size_t k = 1; k <= 3; ++k)
    if (ind.canonical_height(k) != ind.induced().period(k)) detail::fail(v, {{"canonical_height", k}});
  v.stats = {{"steps", steps}, {"bases", ind.induced().spec().str()}};
  return v;
}

// ---------------------------------------------------------------------------
// induction_engine

inline Verdict induce_kac_accounting(const SuiteConfig&, const std::string& name) {
  Verdict v = detail::make("induce.kac_accounting", name, {"induce.kac_accounting"});
  RankOneSystem sys(builtin_spec(name));
  Rational prev_gap(1);
  Rational gap;
  for (std::size_t k = 2; k <= 14; ++k) {
    const auto d = column_decomposition(sys, sys.base_set(), k);
    gap = d.kac_gap;
    const bool upper = d.kac_sum <= Rational(1);
    // Levels below the first copy of A and from the last copy up are the unaccounted mass.
    const LevelSet lifted = sys.lift(sys.base_set(), k);
    const auto outside = static_cast<std::int64_t>(sys.height(k) - lifted.levels.back() + lifted.levels.front());
    const bool lower = d.kac_sum + Rational(outside) * sys.width(k) + sys.stage(k).residual == Rational(1);
    const bool shrinking = gap <= prev_gap;
    if (!upper || !lower || !shrinking)
      detail::fail(v, {{"stage", k}, {"upper", upper}, {"lower", lower}, {"shrinking", shrinking}});
    prev_gap = gap;
  }
  if (gap > Rational(1, 1000)) detail::fail(v, {{"final_gap", gap.str()}});
  v.stats = {{"final_gap", gap.str()}};
  return v;
}

inline Verdict induce_bijective(const SuiteConfig& cfg) {
  Verdict v = detail::make("induce.bijective", "chacon,rotation,odometer", {"induce.bijective"});
  auto rng = detail::check_rng(cfg, v.check, v.subject);
  std::size_t n_rank = 0, n_rot = 0, n_od = 0;
  {
    RankOneSystem sys(builtin_spec("chacon"), 64);
    InducedSystem ind(sys, membership(sys, LevelSet(2, {1, 2})));
    while (n_rank < cfg.samples) {
      const auto p = sys.sample_point(rng, 2);
      if (!ind.contains(p)) continue;
      ++n_rank;
      if (!sys.same(ind.step(ind.step(p, 1), -1), p)) detail::fail(v, {{"system", "chacon"}, {"point", point_id(sys, p)}});
    }
  }
  {
    RotationSystem sys(RotationAngle::parse("cf:[0;(1)]"));
    IntervalUnion a(sys, {{{0, 0}, {-1, 2}}, {{0, 1}, {1, 0}}});
    InducedSystem ind(sys, membership(sys, a));
    while (n_rot < cfg.samples) {
      const auto p = sys.sample_point(rng);
      if (!ind.contains(p)) continue;
      ++n_rot;
      if (!(ind.step(ind.step(p, 1), -1) == p)) detail::fail(v, {{"system", "rotation"}, {"point", p.b}});
    }
  }
  {
    OdometerSystem sys(OdometerSpec::parse("od:[3,*]"));
    InducedSystem ind(sys, membership(sys, Cylinder{{2, 0}}));
    for (; n_od < cfg.samples; ++n_od) {
      OdometerPoint p{DigitStream::generated(1, rng(), {2, 0})};
      const auto q = ind.step(p, 1);
      if (!ind.contains(q) || !sys.same(ind.step(q, -1), p)) detail::fail(v, {{"system", "odometer"}});
    }
  }
  v.stats = {{"rank_one", n_rank}, {"rotation", n_rot}, {"odometer", n_od}};
  return v;
}

inline Verdict induce_return_constant(const SuiteConfig& cfg, const std::string& name) {
  Verdict v = detail::make("induce.return_constant_on_cells", name, {"induce.return_constant_on_cells"});
  RankOneSystem sys(builtin_spec(name));
  auto rng = detail::check_rng(cfg, v.check, name);
  const LevelSet a(3, {0, sys.height(3) / 2});
  auto in_a = membership(sys, a);
  const auto d = column_decomposition(sys, a, 6);
  std::size_t probes = 0;
  for (const auto& cell : d.cells)
    for (int s = 0; s < 100; ++s) {
      const auto level = cell.set.levels[rng() % cell.set.levels.size()];
      const auto x = sys.point_at(6, level, DigitStream::generated(6, rng()));
      ++probes;
      if (return_time(sys, in_a, x) != cell.r) detail::fail(v, {{"cell_r", cell.r}, {"level", level}});
    }
  for (std::size_t i = 0; i < d.cells.size(); ++i)
    for (std::size_t j = i + 1; j < d.cells.size(); ++j)
      if (!(d.cells[i].set & d.cells[j].set).empty()) detail::fail(v, {{"overlap", {d.cells[i].r, d.cells[j].r}}});
  v.stats = {{"cells", d.cells.size()}, {"probes", probes}};
  return v;
}

inline Verdict induce_tower_disjoint(const SuiteConfig&, const std::string& name) {
  Verdict v = detail::make("induce.tower_disjoint", name, {"induce.tower_disjoint"});
  RankOneSystem sys(builtin_spec(name));
  const auto sky = skyscraper(sys, sys.base_set(), 64, 8);
  Rational total = sys.measure(sky.unresolved);
  for (std::size_t i = 0; i < sky.levels.size(); ++i) {
    total += sys.measure(sky.levels[i]);
    for (std::size_t j = i + 1; j < sky.levels.size(); ++j)
      if (!(sky.levels[i] & sky.levels[j]).empty()) detail::fail(v, {{"levels", {i, j}}});
  }
  // Level j+1 sits inside T(level j): every level index is one above a level of the previous set.
  for (std::size_t j = 1; j < sky.levels.size(); ++j)
    for (auto l : sky.levels[j].levels)
      if (l == 0 || !sky.levels[j - 1].has(l - 1)) detail::fail(v, {{"nesting", j}, {"level", l}});
  if (total != sys.measure(sys.full(8))) detail::fail(v, {{"mass", total.str()}});
  v.stats = {{"levels", sky.levels.size()}};
  return v;
}

inline Verdict induce_tower_disjoint_rotation(const SuiteConfig&, const std::string& cf) {
  Verdict v = detail::make("induce.tower_disjoint", cf, {"induce.tower_disjoint"});
  RotationSystem sys(RotationAngle::parse(cf));
  const auto sky = skyscraper(sys, IntervalUnion::initial(sys), 16);
  for (std::size_t i = 0; i < sky.size(); ++i)
    for (std::size_t j = i + 1; j < sky.size(); ++j)
      if (!sky[i].intersect(sys, sky[j]).empty()) detail::fail(v, {{"levels", {i, j}}});
  AffineValue total;
  for (const auto& l : sky) total = total + l.measure();
  if (!(total == AffineValue{1, 0})) detail::fail(v, {{"mass", total.str()}});
  v.stats = {{"levels", sky.size()}};
  return v;
}

// ---------------------------------------------------------------------------
// ergodicity_lab

inline Verdict ergodic_exact_averages(const SuiteConfig& cfg) {
  Verdict v = detail::make("ergodic.exact_averages", "dyadic_pair_left,chacon", {"ergodic.exact_averages"});
  auto rng = detail::check_rng(cfg, v.check, v.subject);
  RankOneSystem left(builtin_spec("dyadic_pair_left"));
  for (std::uint64_t n : {1u, 2u, 7u, 64u, 1000u}) {
    const auto x = left.sample_base_point(rng);
    if (return_time_average(left, x.digits, n) != Rational(2)) detail::fail(v, {{"n", n}});
  }
  RankOneSystem chacon(builtin_spec("chacon"));
  for (int i = 0; i < 50; ++i) {
    const auto x = chacon.sample_point(rng, 4);
    auto f = [&](const RankOnePoint& p) { return static_cast<std::int64_t>(chacon.level_index(p, 5) % 7); };
    if (birkhoff_average(chacon, f, x, 1) != Rational(f(x))) detail::fail(v, {{"n", 1}});
  }
  // Level indicator over one full pass of the stage-k stack from its bottom.
  const std::size_t k = 6;
  const auto x0 = chacon.point_at(k, 0, DigitStream::generated(k, rng()));
  const LevelSet lvl(1, {0});
  auto ind = [&](const RankOnePoint& p) { return chacon.contains(lvl, p) ? 1 : 0; };
  const Rational got = birkhoff_average(chacon, ind, x0, chacon.height(k));
  const Rational expect = Rational(static_cast<std::int64_t>(chacon.lift(lvl, k).levels.size()),
                                   static_cast<std::int64_t>(chacon.height(k)));
  if (got != expect) detail::fail(v, {{"indicator", got.str()}, {"expected", expect.str()}});
  v.stats = {{"full_pass_average", got.str()}};
  return v;
}

inline Verdict ergodic_cylinder_average(const SuiteConfig& cfg, const std::string& od_text) {
  Verdict v = detail::make("ergodic.cylinder_average", od_text, {"ergodic.cylinder_average"});
  OdometerSystem od(OdometerSpec::parse(od_text));
  auto rng = detail::check_rng(cfg, v.check, od_text);
  for (int i = 0; i < 50; ++i) {
    const std::size_t k = 1 + rng() % 3;
    Cylinder c;
    for (std::size_t j = 1; j <= k; ++j) c.prefix.push_back(static_cast<std::uint32_t>(rng() % od.spec().base(j)));
    auto f = [&](const OdometerPoint& p) { return od.contains(c, p) ? 1 : 0; };
    const auto x = od.sample_point(rng);
    if (birkhoff_average(od, f, x, od.period(k)) != od.measure(c)) detail::fail(v, {{"k", k}});
  }
  v.stats = {{"cylinders", 50}};
  return v;
}

inline Verdict ergodic_kac_along_heights(const SuiteConfig& cfg, const std::string& name) {
  Verdict v = detail::make("ergodic.kac_along_heights", name, {"ergodic.kac_along_heights"});
  RankOneSystem sys(builtin_spec(name));
  std::vector<std::uint64_t> ns;
  for (std::size_t k = 1; k <= 9; ++k) ns.push_back(sys.height(k));
  const auto samples = base_samples(detail::fnv1a(name, cfg.seed), cfg.samples);
  const auto rep = kac_check(sys, samples, ns);
  // Worst deviation over the sample set at each height.
  std::vector<Rational> worst(ns.size());
  std::size_t per_sample_increases = 0;
  for (std::size_t s = 0; s < samples.size(); ++s)
    for (std::size_t k = 0; k < ns.size(); ++k) {
      const auto& dev = rep.rows[s * ns.size() + k].abs_dev;
      worst[k] = std::max(worst[k], dev);
      if (k > 0 && dev > rep.rows[s * ns.size() + k - 1].abs_dev) ++per_sample_increases;
    }
  nlohmann::json wj = nlohmann::json::array();
  for (std::size_t k = 0; k < ns.size(); ++k) {
    wj.push_back(worst[k].str());
    if (k > 0 && worst[k] > worst[k - 1]) detail::fail(v, {{"n", ns[k]}, {"worst", worst[k].str()}});
  }
  v.stats = {{"heights", ns}, {"worst_deviation", wj}, {"per_sample_increases", per_sample_increases}};
  return v;
}

inline Verdict ergodic_kac_tolerance(const SuiteConfig& cfg, const std::string& name) {
  Verdict v = detail::make("ergodic.kac_tolerance", name, {"ergodic.kac_along_heights"});
  RankOneSystem sys(builtin_spec(name));
  const auto samples = base_samples(detail::fnv1a(name, cfg.seed + 1), cfg.samples);
  const auto rep = kac_check(sys, samples, {cfg.kac_horizon}, cfg.kac_tolerance);
  if (rep.exceedances) detail::fail(v, {{"exceedances", rep.exceedances}});
  v.stats = {{"target", rep.target.str()}, {"n", cfg.kac_horizon}, {"worst_deviation", rep.worst_dev.str()},
             {"tolerance", cfg.kac_tolerance.str()}};
  return v;
}

inline Verdict ergodic_estimate_monotone(const SuiteConfig& cfg, const std::string& name) {
  Verdict v = detail::make("ergodic.estimate_monotone", name, {"ergodic.estimate_monotone"});
  RankOneSystem sys(builtin_spec(name));
  const auto samples = base_samples(detail::fnv1a(name, cfg.seed + 2), std::min<std::size_t>(cfg.samples, 200));
  std::uint64_t prev = 0;
  nlohmann::json row = nlohmann::json::object();
  for (std::int64_t d : {2, 4, 8, 16}) {
    const Rational eps(1, d);
    try {
      const auto est = estimate_N(sys, eps, samples, 1u << 14);
      row[eps.str()] = est.n;
      if (est.n < prev) detail::fail(v, {{"eps", eps.str()}, {"n", est.n}, {"previous", prev}});
      prev = est.n;
    } catch (const HorizonExhausted&) {
      row[eps.str()] = "horizon";
      break;
    }
  }
  v.stats = {{"N", row}, {"empirical", true}};
  return v;
}

// ---------------------------------------------------------------------------
// kakutani_matcher

inline Verdict match_intertwining(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.intertwining", pair_name, {"match.intertwining"});
  const auto pair = builtin_pair(pair_name);
  const auto rep = check_intertwining(pair, detail::fnv1a(pair_name, cfg.seed), cfg.samples);
  if (rep.failures) detail::fail(v, {{"example", rep.counterexample.value_or("")}});
  v.stats = {{"samples", rep.samples}, {"failures", rep.failures}, {"even", pair.even()}};
  return v;
}

inline Verdict match_machine_bijective(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.machine_bijective", pair_name, {"match.machine_bijective"});
  const auto pair = builtin_pair(pair_name);
  nlohmann::json rows = nlohmann::json::array();
  for (std::int64_t w : cfg.windows) {
    for (std::uint64_t s = 0; s < 3; ++s) {
      const DigitStream anchor = DigitStream::generated(1, detail::fnv1a(std::to_string(s), cfg.seed ^ 0xa5a5u));
      PilePitFrame frame = make_frame(pair, anchor, 2 * w);
      MachineRun small(frame, -w, w), big(frame, -2 * w, 2 * w);
      const auto margin = static_cast<std::int64_t>(small.max_r());
      std::uint64_t stable_items = 0, stable_slots = 0, violations = 0;
      for (std::int64_t i = -w; i <= w; ++i) {
        if (std::min(i + w, w - i) <= margin) continue;
        for (std::uint64_t h = 1; h <= small.items(i); ++h) {
          const auto p = small.item(i, h), q = big.item(i, h);
          if (!(p && q && *p == *q)) continue;
          ++stable_items;
          const auto occ = small.slot(p->pit, p->depth);
          if (!occ || occ->pile != i || occ->h != h) ++violations;
        }
        for (std::uint64_t d = 1; d <= small.slots(i); ++d) {
          const auto p = small.slot(i, d), q = big.slot(i, d);
          if (!(p && q && *p == *q)) continue;
          ++stable_slots;
          const auto back = small.item(p->pile, p->h);
          if (!back || back->pit != i || back->depth != d) ++violations;
        }
      }
      const std::uint64_t collisions = small.collisions() + big.collisions();
      const auto audit = audit_window(pair, anchor, w);
      rows.push_back({{"window", w},
                      {"anchor", s},
                      {"collisions", collisions},
                      {"violations", violations},
                      {"stable_interior_items", stable_items},
                      {"stable_interior_slots", stable_slots},
                      {"interior_items", audit.interior_items},
                      {"unmatched_interior_items", audit.unmatched_interior_items},
                      {"unmatched_interior_slots", audit.unmatched_interior_slots},
                      {"max_r", audit.max_r},
                      {"deepest_instability", audit.deepest_instability}});
      if (collisions || violations) {
        Counterexample c{v.check, pair_name, anchor, w, 24, s};
        auto fails = [&](const Counterexample& t) {
          PilePitFrame f = make_frame(pair, t.truncated(pair.x().radix_fn()), t.window);
          return MachineRun(f, -t.window, t.window).collisions() > 0;
        };
        detail::fail(v, shrink(c, fails, pair.x().radix_fn()).to_json());
      }
    }
  }
  v.stats = {{"runs", rows}};
  return v;
}

inline Verdict match_round_trips(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.round_trips", pair_name, {"match.round_trips"});
  const auto pair = builtin_pair(pair_name);
  auto rng = detail::check_rng(cfg, v.check, pair_name);
  std::size_t forward = 0, backward = 0, unstable = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const auto x = pair.x().sample_point(rng, 12);
    try {
      const auto fwd = even_match_machine(pair, x, cfg.match_window);
      const auto inv = even_match_inverse(pair, fwd.y, cfg.match_window, MatchMode::Machine);
      ++forward;
      if (!pair.x().same(inv.x, x) || inv.D != fwd.d || inv.H != fwd.h || inv.m != fwd.n)
        detail::fail(v, {{"x", point_id(pair.x(), x)}, {"h", fwd.h}, {"n", fwd.n}, {"d", fwd.d}});
    } catch (const WindowExhausted&) {
      ++unstable;
    }
    const auto y = pair.y().sample_point(rng, 12);
    try {
      const auto inv = even_match_inverse(pair, y, cfg.match_window, MatchMode::Machine);
      ++backward;
      if (!pair.y().same(even_match_machine(pair, inv.x, cfg.match_window).y, y))
        detail::fail(v, {{"y", point_id(pair.y(), y)}});
    } catch (const WindowExhausted&) {
      ++unstable;
    }
  }
  v.stats = {{"forward", forward}, {"backward", backward}, {"unstable", unstable}};
  return v;
}

inline Verdict match_record_invariants(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.record_invariants", pair_name, {"match.record_invariants"});
  const auto pair = builtin_pair(pair_name);
  auto rng = detail::check_rng(cfg, v.check, pair_name);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const auto x = pair.x().sample_point(rng, 12);
    MatchRecord rec;
    try {
      rec = even_match_formula(pair, x, kDefaultMaxWindow, Boundary::Strict);
    } catch (const WindowExhausted&) {
      continue;
    }
    ++checked;
    if (rec.h == 0) {
      if (rec.d != 0 || rec.n != 0) detail::fail(v, {{"x", point_id(pair.x(), x)}, {"base", true}});
      continue;
    }
    const auto anchor = pair.x().step(x, -static_cast<std::int64_t>(rec.h)).digits;
    PilePitFrame f = make_frame(pair, anchor, static_cast<std::int64_t>(rec.n) + 1);
    const auto n = static_cast<std::int64_t>(rec.n);
    const bool ok = rec.d >= 1 && rec.d < f.pit(n) && rec.d == rec.h + f.theta(1, n) - f.psi(0, n - 1);
    if (!ok) detail::fail(v, {{"x", point_id(pair.x(), x)}, {"h", rec.h}, {"n", rec.n}, {"d", rec.d}});
  }
  v.stats = {{"checked", checked}};
  return v;
}

inline Verdict match_formula_agreement(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.formula_agreement", pair_name, {"match.formula_agreement"});
  const auto pair = builtin_pair(pair_name);
  auto rng = detail::check_rng(cfg, v.check, pair_name);
  std::size_t compared = 0, strict_disagree = 0, loose_disagree = 0, at_equality = 0, unstable = 0;
  std::size_t landed_on_base = 0;
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const auto x = detail::off_base_point(pair.x(), rng, 12);
    MatchRecord mach;
    try {
      mach = even_match_machine(pair, x, cfg.match_window);
    } catch (const WindowExhausted&) {
      ++unstable;
      continue;
    }
    ++compared;
    const auto strict = even_match_formula(pair, x, kDefaultMaxWindow, Boundary::Strict);
    if (strict.n != mach.n || strict.d != mach.d) {
      ++strict_disagree;
      if (!strict.equality_cell) detail::fail(v, {{"x", point_id(pair.x(), x)}, {"boundary", "strict"}});
    }
    const auto loose = even_match_formula(pair, x, kDefaultMaxWindow, Boundary::NonStrict);
    if (loose.n != mach.n || loose.d != mach.d) {
      ++loose_disagree;
      if (loose.equality_cell)
        ++at_equality;
      else
        detail::fail(v, {{"x", point_id(pair.x(), x)}, {"boundary", "non-strict"}});
      if (depth_below_base(pair, loose.y) == 0) ++landed_on_base;
      cells.push_back({{"x", point_id(pair.x(), x)},
                       {"h", loose.h},
                       {"formula", {{"n", loose.n}, {"d", loose.d}}},
                       {"machine", {{"n", mach.n}, {"d", mach.d}}}});
    }
  }
  if (loose_disagree > 0 && v.pass) v.note = "boundary disagreement";
  v.stats = {{"compared", compared},
             {"unstable", unstable},
             {"strict_disagreements", strict_disagree},
             {"nonstrict_disagreements", loose_disagree},
             {"nonstrict_at_equality_cells", at_equality},
             {"nonstrict_images_on_base", landed_on_base},
             {"equality_cells", cells}};
  return v;
}

inline Verdict match_conjugacy_restriction(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.conjugacy_restriction", pair_name, {"match.conjugacy_restriction"});
  const auto pair = builtin_pair(pair_name);
  auto in_a = membership(pair.x(), pair.x().base_set());
  auto in_b = membership(pair.y(), pair.y().base_set());
  auto rng = detail::check_rng(cfg, v.check, pair_name);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const auto x = pair.x().sample_base_point(rng);
    const auto y = even_match_machine(pair, x, cfg.match_window).y;
    const auto lhs = even_match_machine(pair, induced_apply(pair.x(), in_a, x), cfg.match_window).y;
    if (!pair.y().same(y, pair.phi(x)) || !pair.y().same(lhs, induced_apply(pair.y(), in_b, y)))
      detail::fail(v, {{"x", point_id(pair.x(), x)}});
  }
  v.stats = {{"samples", cfg.samples}};
  return v;
}

/// Pushforward of uniform X samples: frequency of each stage-k Y level vs its mass.
struct PushforwardReport {
  std::size_t samples = 0, unresolved = 0;
  std::vector<std::uint64_t> counts;  // per stage-k level, then one bucket for later-born points
  std::vector<Rational> masses;
  Rational worst_dev;
  std::size_t exceedances = 0;
};

inline PushforwardReport pushforward(const PairSpec& pair, std::size_t samples, std::uint64_t seed, std::size_t x_stage,
                                     std::size_t y_stage, std::int64_t window, std::int64_t sigmas,
                                     std::int64_t max_window = kDefaultMaxWindow) {
  PushforwardReport rep;
  rep.samples = samples;
  const std::uint64_t h = pair.y().height(y_stage);
  rep.counts.assign(h + 1, 0);
  for (std::uint64_t l = 0; l < h; ++l) rep.masses.push_back(pair.y().width(y_stage));
  rep.masses.push_back(pair.y().stage(y_stage).residual);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto x = pair.x().sample_point(rng, x_stage);
    RankOnePoint y;
    try {
      y = even_match_machine(pair, x, window, max_window).y;
    } catch (const WindowExhausted&) {
      ++rep.unresolved;
      continue;
    }
    if (y.birth_stage > y_stage)
      ++rep.counts[h];
    else
      ++rep.counts[pair.y().level_index(y, y_stage)];
  }
  for (std::size_t l = 0; l < rep.counts.size(); ++l) {
    const Rational freq(static_cast<std::int64_t>(rep.counts[l]), static_cast<std::int64_t>(samples));
    const Rational dev = abs(freq - rep.masses[l]);
    rep.worst_dev = std::max(rep.worst_dev, dev);
    if (!detail::within_sigma(dev, samples, sigmas)) ++rep.exceedances;
  }
  return rep;
}

inline Verdict match_measure_preservation(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.measure_preservation", pair_name, {"match.measure_preservation"});
  const auto pair = builtin_pair(pair_name);
  const auto rep = pushforward(pair, cfg.measure_samples, detail::fnv1a(pair_name, cfg.seed + 3), cfg.sample_stage,
                               cfg.measure_stage, cfg.match_window, cfg.measure_tolerance_sigmas);
  if (rep.exceedances || rep.unresolved) detail::fail(v, {{"exceedances", rep.exceedances}, {"unresolved", rep.unresolved}});
  v.stats = {{"samples", rep.samples},
             {"levels", rep.counts.size() - 1},
             {"worst_deviation", rep.worst_dev.str()},
             {"tolerance", std::to_string(cfg.measure_tolerance_sigmas) + "/sqrt(" + std::to_string(rep.samples) + ")"},
             {"counts", rep.counts}};
  return v;
}

inline Verdict match_stopping_finite(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.stopping_finite", pair_name, {"match.stopping_finite"});
  const auto pair = builtin_pair(pair_name);
  const auto samples = base_samples(detail::fnv1a(pair_name, cfg.seed + 4), cfg.samples);
  std::uint64_t max_n = 0;
  std::map<std::uint64_t, std::size_t> by_bits;  // histogram over bit length of n
  for (std::size_t i = 0; i < samples.size(); ++i) {
    try {
      const auto st = stopping_time(pair, samples[i], cfg.stopping_horizon);
      max_n = std::max(max_n, st.n);
      ++by_bits[static_cast<std::uint64_t>(std::bit_width(st.n))];
    } catch (const HorizonExhausted& e) {
      detail::fail(v, {{"sample", i}, {"what", e.what()}});
    }
  }
  nlohmann::json hist = nlohmann::json::object();
  for (auto [b, c] : by_bits) hist["<2^" + std::to_string(b)] = c;
  v.stats = {{"samples", samples.size()}, {"horizon", cfg.stopping_horizon}, {"max_n", max_n}, {"histogram", hist}};
  return v;
}

inline Verdict match_cocycle(const SuiteConfig& cfg, const std::string& pair_name) {
  Verdict v = detail::make("match.cocycle", pair_name, {"match.cocycle"});
  const auto pair = builtin_pair(pair_name);
  auto rng = detail::check_rng(cfg, v.check, pair_name);
  std::size_t checked = 0;
  std::map<std::int64_t, std::size_t> qs;
  for (std::size_t i = 0; i < std::min<std::size_t>(cfg.samples, 300); ++i) {
    const auto x = pair.x().sample_point(rng, 12);
    try {
      const auto c = cocycle_extract(pair, x, cfg.match_window);
      ++checked;
      ++qs[c.q];
      if (c.p != 1) detail::fail(v, {{"x", point_id(pair.x(), x)}});
    } catch (const WindowExhausted&) {
    } catch (const Error& e) {
      detail::fail(v, {{"x", point_id(pair.x(), x)}, {"what", e.what()}});
    }
  }
  nlohmann::json hist = nlohmann::json::object();
  for (auto [q, c] : qs) hist[std::to_string(q)] = c;
  v.stats = {{"checked", checked}, {"q_histogram", hist}};
  return v;
}

inline std::vector<Verdict> match_noneven(const SuiteConfig& cfg, const std::string& pair_name) {
  const auto pair = builtin_pair(pair_name);
  std::vector<Verdict> out;
  Verdict margin = detail::make("match.noneven_margin", pair_name, {"match.noneven_margin"});
  NonEvenOptions opt;
  opt.seed = detail::fnv1a(pair_name, cfg.seed + 5);
  opt.margin_samples = cfg.samples;
  NonEvenPlan plan;
  try {
    plan = noneven_prepare(pair, cfg.noneven_epsilon, opt);
  } catch (const Error& e) {
    detail::fail(margin, {{"what", e.what()}});
    out.push_back(margin);
    return out;
  }
  const bool eps_ok = plan.epsilon < plan.epsilon_bound;
  const auto n2 = 2 * std::max<std::uint64_t>(plan.n, 1);
  const bool sizes_ok = plan.period >= n2 && plan.a_prime_relative_mass < Rational(1, static_cast<std::int64_t>(n2));
  if (!eps_ok || !sizes_ok || plan.min_margin <= 0)
    detail::fail(margin, {{"eps_ok", eps_ok}, {"sizes_ok", sizes_ok}, {"min_margin", plan.min_margin}});
  margin.stats = {{"epsilon", plan.epsilon.str()}, {"epsilon_bound", plan.epsilon_bound.str()},
                  {"N1", plan.n1},  {"N2", plan.n2},
                  {"N", plan.n},    {"depth", plan.depth},
                  {"period", plan.period}, {"a_prime_relative_mass", plan.a_prime_relative_mass.str()},
                  {"margin_samples", plan.margin_samples}, {"min_margin", plan.min_margin},
                  {"max_pile", plan.max_pile}, {"max_pit", plan.max_pit},
                  {"attempts", plan.attempts}};
  out.push_back(margin);

  Verdict order = detail::make("match.noneven_order", pair_name, {"match.noneven_order"});
  Verdict conj = detail::make("match.noneven_conjugacy", pair_name, {"match.noneven_conjugacy", "match.cocycle"});
  auto rng = detail::check_rng(cfg, order.check, pair_name);
  std::int64_t min_gap = INT64_MAX;
  std::size_t round_trip_failures = 0;
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const auto x = pair.x().sample_point(rng, 14);
    const auto y = noneven_match(pair, plan, x);
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng() % 64);
    const auto gap = orbit_offset(pair.y(), y, noneven_match(pair, plan, pair.x().step(x, m)));
    if (!gap || *gap <= 0) detail::fail(order, {{"x", point_id(pair.x(), x)}, {"m", m}});
    if (gap) min_gap = std::min(min_gap, *gap);
    const bool conj_ok = pair.y().same(noneven_match(pair, plan, pair.x().step(x, 1)), image_induced_step(pair, plan, y));
    const bool rt_ok = in_image(pair, plan, y) && pair.x().same(noneven_inverse(pair, plan, y), x);
    if (!rt_ok) ++round_trip_failures;
    if (!conj_ok || !rt_ok) detail::fail(conj, {{"x", point_id(pair.x(), x)}, {"conjugacy", conj_ok}, {"round_trip", rt_ok}});
  }
  order.stats = {{"pairs", cfg.samples}, {"min_gap", min_gap}};
  conj.stats = {{"samples", cfg.samples}, {"round_trip_failures", round_trip_failures}};
  out.push_back(order);
  out.push_back(conj);
  return out;
}

}  // namespace checks

// ---------------------------------------------------------------------------
// Orchestration.

inline Verdict coverage_verdict(const std::vector<Verdict>& vs) {
  Verdict v = detail::make("suite.coverage", "all", {});
  std::set<std::string> seen;
  for (const auto& x : vs) seen.insert(x.covers.begin(), x.covers.end());
  std::vector<std::string> missing;
  for (const auto& id : invariant_ids())
    if (!seen.count(id)) missing.push_back(id);
  if (!missing.empty()) detail::fail(v, {{"missing", missing}});
  v.stats = {{"invariants", invariant_ids().size()}, {"covered", invariant_ids().size() - missing.size()}};
  return v;
}

/// Runs every registered check. Deterministic given the config; an exception
/// inside a check becomes a failing verdict.
inline std::vector<Verdict> run_suite(const SuiteConfig& cfg) {
  if (cfg.pairs.empty() && cfg.systems.empty()) throw PreconditionError("suite registry is empty");
  std::vector<Verdict> out;
  auto guarded = [&](const std::string& check, const std::string& subject, auto&& fn) {
    try {
      using R = decltype(fn());
      if constexpr (std::is_same_v<R, std::vector<Verdict>>) {
        for (auto& v : fn()) out.push_back(std::move(v));
      } else {
        out.push_back(fn());
      }
    } catch (const std::exception& e) {
      Verdict v = detail::make(check, subject, {});
      detail::fail(v, {{"exception", e.what()}});
      out.push_back(std::move(v));
    }
  };
  using namespace checks;
  guarded("spec.round_trip", "builtins+random", [&] { return spec_round_trip(cfg); });
  guarded("spec.height_recurrence", "builtins+random", [&] { return spec_height_recurrence(cfg); });
  guarded("rank.spacer_recovery", "builtins+random", [&] { return rank_spacer_recovery(cfg); });
  for (const auto& s : cfg.systems) {
    guarded("rank.group_action", s, [&] { return rank_group_action(cfg, s); });
    guarded("rank.boolean_algebra", s, [&] { return rank_boolean_algebra(cfg, s); });
    guarded("induce.kac_accounting", s, [&] { return induce_kac_accounting(cfg, s); });
    guarded("induce.return_constant_on_cells", s, [&] { return induce_return_constant(cfg, s); });
    guarded("induce.tower_disjoint", s, [&] { return induce_tower_disjoint(cfg, s); });
    guarded("ergodic.kac_along_heights", s, [&] { return ergodic_kac_along_heights(cfg, s); });
    guarded("ergodic.estimate_monotone", s, [&] { return ergodic_estimate_monotone(cfg, s); });
  }
  for (const char* s : {"chacon", "triple_heavy"})
    guarded("ergodic.kac_tolerance", s, [&] { return ergodic_kac_tolerance(cfg, s); });
  for (const auto& cf : cfg.rotations) {
    guarded("arith.rotation_order", cf, [&] { return arith_rotation_order(cfg, cf); });
    guarded("arith.exchange_first_return", cf, [&] { return arith_exchange_first_return(cfg, cf); });
    guarded("induce.tower_disjoint", cf, [&] { return induce_tower_disjoint_rotation(cfg, cf); });
  }
  for (const auto& od : cfg.odometers) {
    guarded("arith.odometer_cylinder_mass", od, [&] { return arith_odometer_cylinder_mass(cfg, od); });
    guarded("ergodic.cylinder_average", od, [&] { return ergodic_cylinder_average(cfg, od); });
  }
  guarded("arith.prefix_isomorphism", "q=3,p=2", [&] { return arith_prefix_isomorphism(cfg, 3, 2); });
  guarded("induce.bijective", "chacon,rotation,odometer", [&] { return induce_bijective(cfg); });
  guarded("ergodic.exact_averages", "dyadic_pair_left,chacon", [&] { return ergodic_exact_averages(cfg); });
  for (const auto& p : cfg.pairs) {
    guarded("match.intertwining", p, [&] { return match_intertwining(cfg, p); });
    if (!builtin_pair(p).even()) {
      guarded("match.noneven", p, [&] { return match_noneven(cfg, p); });
      continue;
    }
    guarded("match.machine_bijective", p, [&] { return match_machine_bijective(cfg, p); });
    guarded("match.round_trips", p, [&] { return match_round_trips(cfg, p); });
    guarded("match.record_invariants", p, [&] { return match_record_invariants(cfg, p); });
    guarded("match.formula_agreement", p, [&] { return match_formula_agreement(cfg, p); });
    guarded("match.conjugacy_restriction", p, [&] { return match_conjugacy_restriction(cfg, p); });
    guarded("match.measure_preservation", p, [&] { return match_measure_preservation(cfg, p); });
    guarded("match.stopping_finite", p, [&] { return match_stopping_finite(cfg, p); });
    guarded("match.cocycle", p, [&] { return match_cocycle(cfg, p); });
  }
  out.push_back(coverage_verdict(out));
  return out;
}

/// One JSON object per line, in suite order.
inline std::string verdicts_jsonl(const std::vector<Verdict>& vs) {
  std::string s;
  for (const auto& v : vs) s += v.to_json().dump() + "\n";
  return s;
}

inline bool all_pass(const std::vector<Verdict>& vs) {
  return std::all_of(vs.begin(), vs.end(), [](const Verdict& v) { return v.pass; });
}

/// Fixed-width table: check, subject, result, note; then a totals line.
inline std::string summary_table(const std::vector<Verdict>& vs) {
  std::size_t wc = 5, ws = 7;
  for (const auto& v : vs) {
    wc = std::max(wc, v.check.size());
    ws = std::max(ws, v.subject.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string out = pad("check", wc) + "  " + pad("subject", ws) + "  result  note\n";
  std::size_t passed = 0;
  for (const auto& v : vs) {
    passed += v.pass;
    out += pad(v.check, wc) + "  " + pad(v.subject, ws) + "  " + (v.pass ? "PASS  " : "FAIL  ") + "  " + v.note + "\n";
    while (out.size() > 1 && out[out.size() - 2] == ' ') out.erase(out.size() - 2, 1);
  }
  out += std::to_string(passed) + "/" + std::to_string(vs.size()) + " checks passed\n";
  return out;
}

}  // namespace kakutani
