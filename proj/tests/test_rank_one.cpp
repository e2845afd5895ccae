#include <random>

#include <gtest/gtest.h>

#include "kakutani/rank_one.hpp"
#include "oracles.hpp"

using namespace kakutani;

namespace {

StackingSpec random_spec(std::mt19937_64& rng, std::size_t stages) {
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
  return s;
}

// Engine point vs the tag of an explicitly stacked level at stage k.
bool matches_tag(const RankOneSystem& sys, const RankOnePoint& p, const oracle::ExplicitLevel& tag, std::size_t k) {
  if (p.birth_stage != tag.birth_stage || p.birth_level != tag.birth_level) return false;
  for (std::size_t j = tag.birth_stage; j < k; ++j)
    if (p.digits.digit(j, sys.cuts(j)) != tag.columns[j - tag.birth_stage]) return false;
  return true;
}

}  // namespace

TEST(RankOne, ChaconHeightsAndWidths) {
  RankOneSystem sys(builtin_spec("chacon"));
  const std::vector<std::uint64_t> h{1, 4, 13, 40};
  const std::vector<Rational> w{Rational(2, 3), Rational(2, 9), Rational(2, 27), Rational(2, 81)};
  for (std::size_t k = 1; k <= 4; ++k) {
    EXPECT_EQ(sys.height(k), h[k - 1]);
    EXPECT_EQ(sys.width(k), w[k - 1]);
  }
  // h_k / 3^{k-1} approaches 1/w1 = 3/2 from below.
  double pow3 = 1;
  for (std::size_t k = 1; k <= 20; ++k, pow3 *= 3) EXPECT_LT(sys.height(k) / pow3, 1.5);
  EXPECT_NEAR(static_cast<double>(sys.height(20)) / std::pow(3.0, 19), 1.5, 1e-8);
}

TEST(RankOne, OdometerHeightsAndWidths) {
  RankOneSystem sys(builtin_spec("odometer(2)"));
  for (std::size_t k = 1; k <= 4; ++k) {
    EXPECT_EQ(sys.height(k), 1u << (k - 1));
    EXPECT_EQ(sys.width(k), Rational(1, 1 << (k - 1)));
    EXPECT_EQ(sys.stage(k).residual, Rational(0));
  }
}

TEST(RankOne, ExplicitStackingAgreesOnHeightsAndProvenance) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    auto spec = random_spec(rng, 5);
    RankOneSystem sys(spec);
    for (std::size_t k = 1; k <= 5; ++k) {
      const auto stack = oracle::explicit_stack(spec, k);
      ASSERT_EQ(sys.height(k), stack.size());
      for (std::uint64_t level = 0; level < stack.size(); ++level) {
        auto p = sys.point_at(k, level, DigitStream::zeros(k));
        EXPECT_TRUE(matches_tag(sys, p, stack[level], k)) << "trial " << trial << " stage " << k << " level " << level;
        EXPECT_EQ(sys.level_index(p, k), level);
      }
    }
  }
}

TEST(RankOne, DyadicPairLeftStageThreePattern) {
  RankOneSystem sys(builtin_spec("dyadic_pair_left"));
  const auto stack = oracle::explicit_stack(sys.spec(), 3);
  std::string pattern;
  for (const auto& l : stack) pattern += l.is_spacer() ? 's' : 'A';
  EXPECT_EQ(pattern, "AsAsAsA");
  std::string engine;
  for (const auto& n : sys.read_names(3, 1)) engine += n.residual ? 's' : 'A';
  EXPECT_EQ(engine, pattern);
}

TEST(RankOne, ApplyExamples) {
  RankOneSystem odo(builtin_spec("odometer(2)"));
  auto x = odo.base_point(DigitStream::zeros(1));
  auto y = odo.apply(x, 1, 8);
  EXPECT_EQ(odo.level_index(y, 2), 1u);
  EXPECT_TRUE(odo.same(odo.apply(x, 0, 8), x));

  RankOneSystem left(builtin_spec("dyadic_pair_left"));
  auto top = left.point_at(3, 6, DigitStream::zeros(3));
  auto up = left.apply(top, 1, 8);
  // Stage 4 reads AsAsAsA s AsAsAsA: the top A of the lower copy is followed by the new spacer.
  const auto stack4 = oracle::explicit_stack(left.spec(), 4);
  EXPECT_EQ(left.level_index(up, 4), 7u);
  EXPECT_TRUE(stack4[7].is_spacer());
  EXPECT_TRUE(matches_tag(left, up, stack4[7], 4));
  EXPECT_EQ(up.birth_stage, 4u);
  EXPECT_TRUE(matches_tag(left, left.apply(top, 2, 8), stack4[8], 4));
}

TEST(RankOne, LevelIndexExamples) {
  RankOneSystem sys(builtin_spec("dyadic_pair_left"));
  auto p = sys.base_point(DigitStream::zeros(1));
  EXPECT_EQ(sys.level_index(p, 1), 0u);
  EXPECT_EQ(sys.level_index(p, 2), 0u);
  auto q = sys.base_point(DigitStream::periodic(1, {0, 1}, {0}));
  EXPECT_EQ(sys.level_index(q, 3), 4u);
  EXPECT_THROW(sys.level_index(sys.point_at(2, 1, DigitStream::zeros(2)), 1), PreconditionError);
  EXPECT_THROW(sys.level_index(sys.base_point(DigitStream::finite(1, {0})), 3), ExhaustedDigits);
}

TEST(RankOne, RemovedOrbitsReportNeedMoreDepth) {
  RankOneSystem odo(builtin_spec("odometer(2)"));
  auto zero = odo.base_point(DigitStream::zeros(1));
  EXPECT_THROW(odo.apply(zero, -1, 20), NeedMoreDepth);
  auto ones = odo.base_point(DigitStream::periodic(1, {}, {1}));
  EXPECT_THROW(odo.apply(ones, 1, 20), NeedMoreDepth);
  EXPECT_THROW(odo.apply(odo.base_point(DigitStream::finite(1, {1, 1})), 1, 20), ExhaustedDigits);
}

// Property: every in-range move at stage 5 lands on the explicitly stacked level.
TEST(RankOne, ApplyMatchesExplicitStack) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 25; ++trial) {
    auto spec = random_spec(rng, 5);
    RankOneSystem sys(spec);
    const std::size_t k = 5;
    const auto stack = oracle::explicit_stack(spec, k);
    for (int s = 0; s < 60; ++s) {
      const std::uint64_t from = rng() % stack.size();
      const std::uint64_t to = rng() % stack.size();
      auto p = sys.point_at(k, from, DigitStream::generated(k, rng()));
      auto q = sys.apply(p, static_cast<std::int64_t>(to) - static_cast<std::int64_t>(from), 30);
      EXPECT_TRUE(matches_tag(sys, q, stack[to], k));
      for (std::size_t j = k; j < std::min(k + 10, sys.depth()); ++j) EXPECT_EQ(q.digits.digit(j, sys.cuts(j)), p.digits.digit(j, sys.cuts(j)));
    }
  }
}

TEST(RankOne, GroupActionAndInverse) {
  std::mt19937_64 rng(13);
  for (const char* name : {"chacon", "dyadic_pair_left", "dyadic_pair_right", "triple_heavy", "odometer(2,3)"}) {
    RankOneSystem sys(builtin_spec(name), 40);
    for (int i = 0; i < 300; ++i) {
      auto p = sys.sample_point(rng, 4);
      const auto m = static_cast<std::int64_t>(rng() % 200) - 100;
      const auto n = static_cast<std::int64_t>(rng() % 200) - 100;
      auto a = sys.step(sys.step(p, m), n);
      auto b = sys.step(p, m + n);
      EXPECT_TRUE(sys.same(a, b)) << name;
      EXPECT_TRUE(sys.same(sys.step(sys.step(p, m), -m), p)) << name;
    }
  }
}

TEST(RankOne, ReadNamesExamples) {
  RankOneSystem left(builtin_spec("dyadic_pair_left"));
  const auto names = left.read_names(3, 2);
  const std::vector<NameSymbol> expected{{false, 0}, {false, 1}, {false, 2}, {true, 0},
                                         {false, 0}, {false, 1}, {false, 2}};
  EXPECT_EQ(names, expected);

  RankOneSystem chacon(builtin_spec("chacon"));
  const std::vector<NameSymbol> chacon_expected{{false, 0}, {false, 0}, {true, 0}, {false, 0}};
  EXPECT_EQ(chacon.read_names(2, 1), chacon_expected);

  const auto same = chacon.read_names(3, 3);
  for (std::uint64_t l = 0; l < same.size(); ++l) EXPECT_EQ(same[l], (NameSymbol{false, l}));
}

TEST(RankOne, RecoverSpacers) {
  RankOneSystem chacon(builtin_spec("chacon"));
  EXPECT_EQ(chacon.recover_spacers(1), (SpacerCounts{0, {0, 1, 0}}));
  RankOneSystem right(builtin_spec("dyadic_pair_right"));
  EXPECT_EQ(right.recover_spacers(2), (SpacerCounts{0, {0, 1}}));
  RankOneSystem odo(builtin_spec("odometer(5)"));
  EXPECT_EQ(odo.recover_spacers(3), (SpacerCounts{0, {0, 0, 0, 0, 0}}));

  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    auto spec = random_spec(rng, 6);
    RankOneSystem sys(spec);
    for (std::size_t i = 1; i < 6; ++i) {
      const auto& r = spec.rule(i);
      EXPECT_EQ(sys.recover_spacers(i), (SpacerCounts{r.spacers_below, r.spacers_above}));
    }
  }
  EXPECT_THROW(RankOneSystem::recover_spacers_from_names({{false, 0}, {false, 0}}, 2), Error);
}

TEST(RankOne, MeasuresAndSetAlgebra) {
  RankOneSystem chacon(builtin_spec("chacon"));
  EXPECT_EQ(chacon.measure(chacon.base_set()), Rational(2, 3));
  RankOneSystem heavy(builtin_spec("triple_heavy"));
  EXPECT_EQ(heavy.measure(heavy.base_set()), Rational(2, 5));
  EXPECT_EQ(chacon.measure(LevelSet(3, {})), Rational(0));

  EXPECT_EQ(chacon.lift(chacon.base_set(), 2).levels, (std::vector<std::uint64_t>{0, 1, 3}));
  // Lifting preserves measure.
  EXPECT_EQ(chacon.measure(chacon.lift(chacon.base_set(), 6)), Rational(2, 3));

  const LevelSet a(4, {0, 3, 7, 11});
  EXPECT_TRUE((a & chacon.complement(a)).empty());
  EXPECT_EQ(chacon.measure(a | chacon.complement(a)), chacon.measure(chacon.full(4)));
  EXPECT_THROW(a | chacon.base_set(), Error);

  std::mt19937_64 rng(15);
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = 1 + rng() % 6;
    auto random_set = [&] {
      std::vector<std::uint64_t> ls;
      for (std::uint64_t l = 0; l < chacon.height(k); ++l)
        if (rng() % 2) ls.push_back(l);
      return LevelSet(k, ls);
    };
    const auto x = random_set(), y = random_set();
    EXPECT_EQ(chacon.measure(x | y) + chacon.measure(x & y), chacon.measure(x) + chacon.measure(y));
    EXPECT_EQ(chacon.measure(x - y) + chacon.measure(x & y), chacon.measure(x));
    EXPECT_EQ(chacon.complement(chacon.complement(x)), x);
  }
}

TEST(RankOne, MembershipAgreesWithLevelIndex) {
  RankOneSystem sys(builtin_spec("chacon"));
  std::mt19937_64 rng(16);
  const auto base4 = sys.lift(sys.base_set(), 4);
  for (int i = 0; i < 500; ++i) {
    auto p = sys.sample_point(rng, 4);
    EXPECT_EQ(sys.contains(base4, p), p.birth_stage == 1 && p.birth_level == 0);
  }
}

TEST(RankOne, StageReportAndBuildTowers) {
  auto stages = build_towers(builtin_spec("chacon"), 4);
  ASSERT_EQ(stages.size(), 4u);
  auto report = stage_report(stages);
  EXPECT_EQ(report[3]["h"], 40);
  EXPECT_EQ(report[3]["w"], "2/81");
  EXPECT_EQ(report[1]["spacer_count"], 1);
  EXPECT_EQ(report[0]["residual"], "1/3");
  EXPECT_THROW(build_towers(builtin_spec("chacon"), 60), NeedMoreDepth);
  EXPECT_THROW(RankOneSystem(parse_spec("stage * : cuts=1 above=[1]")), ValidationError);
}

TEST(RankOne, FiniteSpecsStopAtLastStage) {
  RankOneSystem sys(parse_spec("stage 1 : cuts=2 above=[1,0]\nstage 2 : cuts=2 above=[0,0]"));
  EXPECT_EQ(sys.depth(), 3u);
  EXPECT_EQ(sys.stage(3).residual, Rational(0));
  EXPECT_THROW(sys.stage(4), NeedMoreDepth);
}
