#include <random>

#include <gtest/gtest.h>

#include "kakutani/matcher.hpp"
#include "oracles.hpp"

using namespace kakutani;

namespace {

PairSpec self_pair(const char* name) {
  return PairSpec(RankOneSystem(builtin_spec(name)), RankOneSystem(builtin_spec(name)), Conjugacy::identity());
}

// Uniform point of the stage-k X stack that is not in the base.
RankOnePoint sample_off_base(const PairSpec& pair, std::mt19937_64& rng, std::size_t k = 12) {
  for (;;) {
    auto x = pair.x().sample_point(rng, k);
    if (!pair.x().contains(pair.x().base_set(), x)) return x;
  }
}

// A base point of the given system whose return time is at least `r`.
DigitStream base_with_return(const RankOneSystem& s, std::uint64_t r, std::mt19937_64& rng) {
  for (;;) {
    auto d = DigitStream::generated(1, rng());
    if (BaseOrbitCursor(s, d).return_time() >= r) return d;
  }
}

}  // namespace

TEST(Matcher, PairSpecChecks) {
  auto dy = builtin_pair("dyadic");
  EXPECT_TRUE(dy.even());
  EXPECT_EQ(check_intertwining(dy, 1).failures, 0u);
  auto ch = builtin_pair("chacon_heavy");
  EXPECT_FALSE(ch.even());
  EXPECT_EQ(ch.mu_a(), Rational(2, 3));
  EXPECT_EQ(ch.nu_b(), Rational(2, 5));
  EXPECT_EQ(check_intertwining(ch, 2).failures, 0u);
  PairSpec tr(RankOneSystem(builtin_spec("dyadic_pair_left")), RankOneSystem(builtin_spec("dyadic_pair_right")),
              Conjugacy::translate(5));
  EXPECT_EQ(check_intertwining(tr, 3).failures, 0u);
  EXPECT_THROW(PairSpec(RankOneSystem(builtin_spec("chacon")), RankOneSystem(builtin_spec("dyadic_pair_left"))),
               PreconditionError);
  EXPECT_EQ(Conjugacy::parse("translate:7").shift, 7u);
  EXPECT_EQ(Conjugacy::parse("identity").str(), "identity");
  EXPECT_THROW(Conjugacy::parse("rotate"), ParseError);
}

TEST(Matcher, TranslationInverts) {
  std::mt19937_64 rng(3);
  PairSpec tr(RankOneSystem(builtin_spec("chacon")), RankOneSystem(builtin_spec("chacon")), Conjugacy::translate(1000));
  for (int i = 0; i < 200; ++i) {
    auto d = DigitStream::generated(1, rng());
    EXPECT_TRUE(same_digits(tr.phi_inverse(tr.phi(d)), d, tr.x().radix_fn()));
    // Translation by t equals t induced steps.
    BaseOrbitCursor c(tr.x(), d);
    for (int k = 0; k < 1000; ++k) c.advance();
    EXPECT_TRUE(same_digits(c.digits(), tr.phi(d), tr.x().radix_fn()));
  }
}

TEST(Matcher, HeightAboveBase) {
  auto dy = builtin_pair("dyadic");
  const auto& left = dy.x();
  const auto base = left.base_point(DigitStream::generated(1, 9));
  EXPECT_EQ(height_above_base(dy, base), 0u);
  EXPECT_EQ(height_above_base(dy, left.step(base, 1)), 1u);  // the spacer of "A s A"
  std::mt19937_64 rng(4);
  const auto& right = dy.y();
  for (int i = 0; i < 50; ++i) {
    const auto d = base_with_return(right, 3, rng);
    EXPECT_EQ(depth_below_base(dy, right.step(right.base_point(d), 2)), 2u);
  }
}

TEST(Matcher, IdentityPairIsIdentity) {
  std::mt19937_64 rng(5);
  for (const char* name : {"chacon", "dyadic_pair_right", "triple_heavy"}) {
    auto pair = self_pair(name);
    for (int i = 0; i < 200; ++i) {
      const auto x = pair.x().sample_point(rng, 10);
      for (auto rec : {even_match_formula(pair, x, 64), even_match_machine(pair, x, 64)}) {
        EXPECT_EQ(rec.n, 0u);
        EXPECT_EQ(rec.d, rec.h);
        EXPECT_TRUE(pair.y().same(rec.y, x));
      }
      const auto inv = even_match_inverse(pair, x, 64, MatchMode::Machine);
      EXPECT_EQ(inv.m, 0u);
      EXPECT_EQ(inv.H, inv.D);
      EXPECT_TRUE(pair.x().same(inv.x, x));
      const auto c = cocycle_extract(pair, x, 64);
      EXPECT_EQ(c.p, 1);
      EXPECT_EQ(c.q, 1);
    }
  }
}

TEST(Matcher, NZeroBranchInstance) {
  // h = 2 under a pit of depth 4 stays in pit 0 at depth 2.
  std::mt19937_64 rng(6);
  auto pair = self_pair("dyadic_pair_right");
  const auto d = [&] {
    for (;;) {
      auto s = base_with_return(pair.x(), 4, rng);
      if (BaseOrbitCursor(pair.y(), s).return_time() == 4) return s;
    }
  }();
  const auto x = pair.x().step(pair.x().base_point(d), 2);
  const auto rec = even_match_formula(pair, x, 16);
  EXPECT_EQ(rec.h, 2u);
  EXPECT_EQ(rec.n, 0u);
  EXPECT_EQ(rec.d, 2u);
  EXPECT_TRUE(pair.y().same(rec.y, pair.y().step(pair.y().base_point(d), 2)));
}

TEST(Matcher, AllZeroDyadicPoint) {
  // Pit depths along the zero orbit are 1,2,1,3,1,2,1,4,...; every pit has one
  // slot fewer than the piles deliver, so the zero orbit is never resolved.
  auto dy = builtin_pair("dyadic");
  const auto xt = dy.x().base_point(DigitStream::zeros(1));
  const auto x = dy.x().step(xt, 1);
  PilePitFrame frame(dy, DigitStream::zeros(1), 8);
  EXPECT_EQ(frame.theta(1, 1), 2u);
  EXPECT_EQ(frame.psi(0, 0), 1u);
  EXPECT_EQ(frame.psi(0, 1), 3u);
  const auto verbatim = even_match_formula(dy, x, 64, Boundary::NonStrict);
  EXPECT_EQ(verbatim.n, 0u);
  EXPECT_EQ(verbatim.d, 1u);
  EXPECT_TRUE(verbatim.equality_cell);
  // d equals the full pit depth, so the image is the next B_0 point.
  EXPECT_TRUE(dy.y().contains(dy.y().base_set(), verbatim.y));
  EXPECT_THROW(even_match_formula(dy, x, 64, Boundary::Strict), WindowExhausted);
  // The machine cannot use negative indices here (the predecessor of the zero point is
  // not resolvable), and forward it never places the item.
  EXPECT_THROW(even_match_machine(dy, x, 64, 64), Error);
}

TEST(Matcher, FormulaRecordInvariants) {
  std::mt19937_64 rng(7);
  auto dy = builtin_pair("dyadic");
  for (int i = 0; i < 500; ++i) {
    const auto x = dy.x().sample_point(rng, 12);
    for (Boundary b : {Boundary::NonStrict, Boundary::Strict}) {
      MatchRecord rec;
      try {
        rec = even_match_formula(dy, x, 1 << 10, b);
      } catch (const WindowExhausted&) {
        continue;
      }
      if (rec.h == 0) {
        EXPECT_EQ(rec.d, 0u);
        continue;
      }
      EXPECT_GE(rec.d, 1u);
      PilePitFrame f(dy, dy.x().step(x, -static_cast<std::int64_t>(rec.h)).digits, 1 << 10);
      const auto n = static_cast<std::int64_t>(rec.n);
      EXPECT_EQ(rec.d, rec.h + f.theta(1, n) - f.psi(0, n - 1));
      EXPECT_TRUE(dy.y().same(rec.y, dy.y().step(dy.y().base_point(f.pit_base(n)), static_cast<std::int64_t>(rec.d))));
    }
  }
}

TEST(Matcher, MachineAgreesWithStrictFormula) {
  std::mt19937_64 rng(8);
  auto dy = builtin_pair("dyadic");
  std::size_t disagreements = 0, boundary = 0, compared = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto x = sample_off_base(dy, rng);
    MatchRecord mach;
    try {
      mach = even_match_machine(dy, x, 64);
    } catch (const WindowExhausted&) {
      continue;
    }
    ++compared;
    const auto strict = even_match_formula(dy, x, kDefaultMaxWindow, Boundary::Strict);
    EXPECT_EQ(strict.n, mach.n);
    EXPECT_EQ(strict.d, mach.d);
    EXPECT_TRUE(dy.y().same(strict.y, mach.y));
    const auto loose = even_match_formula(dy, x, kDefaultMaxWindow, Boundary::NonStrict);
    if (loose.n != mach.n || loose.d != mach.d) {
      ++disagreements;
      if (loose.equality_cell) ++boundary;
    }
  }
  EXPECT_GT(compared, 1900u);
  EXPECT_GT(disagreements, 0u);
  EXPECT_EQ(boundary, disagreements);
}

TEST(Matcher, MachineConservation) {
  auto dy = builtin_pair("dyadic");
  for (std::int64_t w : {64, 256, 1024}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto anchor = DigitStream::generated(1, seed * 7919);
      const auto a = audit_window(dy, anchor, w);
      EXPECT_EQ(a.collisions, 0u);
      EXPECT_EQ(a.items, 2u * static_cast<std::uint64_t>(w) + 1);  // one interior point per pile
      // Items the window leaves unplaced are exactly those whose closed-form
      // shift runs past the right edge.
      PilePitFrame frame(dy, anchor, w);
      MachineRun run(frame, -w, w);
      for (std::int64_t i = -w; i <= w; ++i)
        for (std::uint64_t h = 1; h <= run.items(i); ++h) {
          const auto x = dy.x().step(dy.x().base_point(frame.pile_base(i)), static_cast<std::int64_t>(h));
          bool beyond = false;
          try {
            beyond = even_match_formula(dy, x, w - i, Boundary::Strict).n > static_cast<std::uint64_t>(w - i);
          } catch (const WindowExhausted&) {
            beyond = true;
          }
          EXPECT_EQ(!run.item(i, h).has_value(), beyond) << "pile " << i;
        }
    }
  }
}

TEST(Matcher, MachineTraceAndCounts) {
  auto dy = builtin_pair("dyadic");
  PilePitFrame frame(dy, DigitStream::generated(1, 77), 16);
  MachineRun run(frame, -16, 16, true);
  std::uint64_t items = 0, placed = 0;
  for (std::int64_t i = -16; i <= 16; ++i) {
    EXPECT_EQ(run.items(i), frame.pile(i) - 1);
    EXPECT_EQ(run.slots(i), frame.pit(i) - 1);
    for (std::uint64_t h = 1; h <= run.items(i); ++h, ++items)
      if (auto p = run.item(i, h)) {
        ++placed;
        EXPECT_EQ(p->pit, i + static_cast<std::int64_t>(p->shift));
        const auto occ = run.slot(p->pit, p->depth);
        ASSERT_TRUE(occ);
        EXPECT_EQ(occ->pile, i);
        EXPECT_EQ(occ->h, h);
      }
  }
  EXPECT_EQ(run.trace().size(), placed);
  EXPECT_EQ(run.trace_json().size(), placed);
  for (std::size_t k = 1; k < run.trace().size(); ++k) EXPECT_LE(run.trace()[k - 1].shift, run.trace()[k].shift);
}

TEST(Matcher, RoundTripsAndCellIdentities) {
  std::mt19937_64 rng(9);
  for (auto pair : {builtin_pair("dyadic"),
                    PairSpec(RankOneSystem(builtin_spec("dyadic_pair_left")),
                             RankOneSystem(builtin_spec("dyadic_pair_right")), Conjugacy::translate(3))}) {
    for (int i = 0; i < 500; ++i) {
      const auto x = pair.x().sample_point(rng, 12);
      MatchRecord fwd;
      try {
        fwd = even_match_machine(pair, x, 64);
      } catch (const WindowExhausted&) {
        continue;
      }
      const auto inv = even_match_inverse(pair, fwd.y, 64, MatchMode::Machine);
      EXPECT_TRUE(pair.x().same(inv.x, x));
      EXPECT_EQ(inv.D, fwd.d);
      EXPECT_EQ(inv.H, fwd.h);
      EXPECT_EQ(inv.m, fwd.n);
      const auto inv_formula = even_match_inverse(pair, fwd.y, kDefaultMaxWindow, MatchMode::Formula, Boundary::Strict);
      EXPECT_TRUE(pair.x().same(inv_formula.x, x));
    }
    for (int i = 0; i < 300; ++i) {
      const auto y = pair.y().sample_point(rng, 12);
      InverseMatchRecord inv;
      try {
        inv = even_match_inverse(pair, y, 64, MatchMode::Machine);
      } catch (const WindowExhausted&) {
        continue;
      }
      EXPECT_TRUE(pair.y().same(even_match_machine(pair, inv.x, 64).y, y));
    }
  }
}

TEST(Matcher, ConjugacyRestriction) {
  std::mt19937_64 rng(10);
  auto dy = builtin_pair("dyadic");
  auto in_a = membership(dy.x(), dy.x().base_set());
  auto in_b = membership(dy.y(), dy.y().base_set());
  for (int i = 0; i < 300; ++i) {
    const auto x = dy.x().sample_base_point(rng);
    const auto y = even_match_machine(dy, x, 64).y;
    EXPECT_TRUE(dy.y().same(y, dy.phi(x)));
    const auto lhs = even_match_machine(dy, induced_apply(dy.x(), in_a, x), 64).y;
    EXPECT_TRUE(dy.y().same(lhs, induced_apply(dy.y(), in_b, y)));
  }
}

TEST(Matcher, CellClassification) {
  std::mt19937_64 rng(11);
  auto dy = builtin_pair("dyadic");
  EXPECT_EQ(classify_cell(dy, dy.x().sample_base_point(rng), 64), (CellIndex{0, 0, 0}));
  auto id = self_pair("dyadic_pair_right");
  const auto d = base_with_return(id.x(), 4, rng);
  EXPECT_EQ(classify_cell(id, id.x().step(id.x().base_point(d), 3), 64), (CellIndex{0, 3, 3}));
  // Cylinder locality: the cell depends only on a finite digit prefix of x~ and h.
  for (int i = 0; i < 200; ++i) {
    const auto x = sample_off_base(dy, rng);
    CellIndex c;
    try {
      c = classify_cell(dy, x, 64);
    } catch (const WindowExhausted&) {
      continue;
    }
    const auto xt = dy.x().step(x, -static_cast<std::int64_t>(c.first));
    std::vector<std::uint32_t> prefix;
    for (std::size_t j = 1; j <= 30; ++j) prefix.push_back(xt.digits.digit(j, 2));
    const auto other = dy.x().step(dy.x().base_point(DigitStream::generated(1, rng(), prefix)), c.first);
    EXPECT_EQ(classify_cell(dy, other, 64), c);
    EXPECT_EQ(classify_cell_y(dy, even_match_machine(dy, x, 64).y, 64), (CellIndex{c.shift, c.second, c.first}));
  }
}

TEST(Matcher, StoppingTimes) {
  std::mt19937_64 rng(12);
  auto id = builtin_pair("identity");
  EXPECT_EQ(stopping_time(id, DigitStream::generated(1, 3), 10).n, 1u);
  auto dy = builtin_pair("dyadic");
  EXPECT_THROW(stopping_time(dy, DigitStream::zeros(1), 1 << 12), HorizonExhausted);
  // Oracle: literal stacks give r_A and r_B along the orbit of a point whose
  // first 14 digits are fixed and whose counter starts low enough to stay inside.
  const std::size_t k = 15;
  const auto pa = oracle::explicit_base_positions(dy.x().spec(), k);
  const auto pb = oracle::explicit_base_positions(dy.y().spec(), k);
  for (int s = 0; s < 50; ++s) {
    const std::uint64_t v = rng() % (pa.size() / 2);
    std::vector<std::uint32_t> prefix;
    for (std::size_t j = 0; j + 1 < k; ++j) prefix.push_back((v >> j) & 1u);
    const auto d = DigitStream::generated(1, rng(), prefix);
    std::int64_t sum = 0;
    std::uint64_t expect = 0;
    for (std::uint64_t i = v; i + 1 < pa.size(); ++i) {
      sum += static_cast<std::int64_t>(pa[i + 1] - pa[i]) - static_cast<std::int64_t>(pb[i + 1] - pb[i]);
      if (sum <= 0) {
        expect = i - v + 1;
        break;
      }
    }
    if (expect == 0) continue;
    EXPECT_EQ(stopping_time(dy, d, 1 << 16).n, expect);
  }
}

TEST(Matcher, TraceCsv) {
  auto id = builtin_pair("identity");
  const auto x = id.x().base_point(DigitStream::periodic(1, {1, 0}, {0}));
  const auto rec = even_match_machine(id, x, 8);
  EXPECT_EQ(match_trace_csv(id, {rec}),
            "x_id,h,n,d,y_id,mode,stable_window\n"
            "1.0:100000000000,0,0,0,1.0:100000000000,machine,0\n");
}

TEST(Matcher, EvenGuards) {
  auto ch = builtin_pair("chacon_heavy");
  std::mt19937_64 rng(13);
  const auto x = ch.x().sample_point(rng, 5);
  EXPECT_THROW(even_match_machine(ch, x, 8), PreconditionError);
  EXPECT_THROW(even_match_formula(ch, x, 8), PreconditionError);
  EXPECT_THROW(noneven_prepare(builtin_pair("dyadic"), Rational(1, 4)), PreconditionError);
}

class NonEven : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    pair_ = new PairSpec(builtin_pair("chacon_heavy"));
    NonEvenOptions opt;
    opt.margin_samples = 300;
    plan_ = new NonEvenPlan(noneven_prepare(*pair_, Rational(1, 4), opt));
  }
  static void TearDownTestSuite() {
    delete plan_;
    delete pair_;
  }
  static PairSpec* pair_;
  static NonEvenPlan* plan_;
};
PairSpec* NonEven::pair_ = nullptr;
NonEvenPlan* NonEven::plan_ = nullptr;

TEST_F(NonEven, PlanArithmetic) {
  const auto& p = *plan_;
  EXPECT_EQ(p.epsilon_bound, Rational(1, 2));
  EXPECT_GE(p.period, 2 * std::max<std::uint64_t>(p.n, 1));
  EXPECT_LT(p.a_prime_relative_mass, Rational(1, static_cast<std::int64_t>(2 * std::max<std::uint64_t>(p.n, 1))));
  EXPECT_GT(p.min_margin, 0);
  EXPECT_EQ(pair_->x().measure(p.a_prime), pair_->mu_a() * p.a_prime_relative_mass);
  EXPECT_THROW(noneven_prepare(*pair_, Rational(1, 2)), PreconditionError);
  // The cylinder's return time is one full period of base returns.
  std::mt19937_64 rng(14);
  auto in_ap = membership(pair_->x(), p.a_prime);
  for (int i = 0; i < 5; ++i) {
    const auto xd = DigitStream::generated(1, rng(), std::vector<std::uint32_t>(p.depth, 0));
    const auto x = pair_->x().base_point(xd);
    EXPECT_EQ(return_time(pair_->x(), in_ap, x), detail::cylinder_return(pair_->x(), xd, p.period));
  }
}

TEST_F(NonEven, MatchInverseOrderConjugacy) {
  const auto& pair = *pair_;
  const auto& plan = *plan_;
  std::mt19937_64 rng(15);
  // A' points go to phi.
  const auto xa = pair.x().base_point(DigitStream::generated(1, 5, std::vector<std::uint32_t>(plan.depth, 0)));
  EXPECT_TRUE(pair.y().same(noneven_match(pair, plan, xa), pair.phi(xa)));
  for (int i = 0; i < 200; ++i) {
    const auto x = pair.x().sample_point(rng, 14);
    const auto y = noneven_match(pair, plan, x);
    EXPECT_TRUE(in_image(pair, plan, y));
    EXPECT_TRUE(pair.x().same(noneven_inverse(pair, plan, y), x));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng() % 40);
    const auto gap = orbit_offset(pair.y(), y, noneven_match(pair, plan, pair.x().step(x, m)));
    ASSERT_TRUE(gap);
    EXPECT_GT(*gap, 0);
    EXPECT_TRUE(pair.y().same(noneven_match(pair, plan, pair.x().step(x, 1)), image_induced_step(pair, plan, y)));
  }
}
