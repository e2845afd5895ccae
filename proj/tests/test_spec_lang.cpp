#include <random>

#include <gtest/gtest.h>

#include "kakutani/spec_lang.hpp"
#include "oracles.hpp"

using namespace kakutani;

TEST(SpecLang, ParsesChaconRecipe) {
  auto spec = parse_spec("stage * : cuts=3 above=[0,1,0] below=0");
  ASSERT_TRUE(spec.tail.has_value());
  EXPECT_TRUE(spec.prefix.empty());
  EXPECT_EQ(spec.tail->cuts, 3u);
  EXPECT_EQ(spec.tail->spacers_above, (std::vector<std::uint32_t>{0, 1, 0}));
  EXPECT_EQ(spec.tail->spacers_below, 0u);
  EXPECT_EQ(spec.initial_height, 1u);
}

TEST(SpecLang, ParsesDyadicOdometer) {
  auto spec = parse_spec("stage * : cuts=2 above=[0,0] below=0");
  EXPECT_EQ(spec.tail->spacer_count(), 0u);
  EXPECT_EQ(spec.tail->cuts, 2u);
}

TEST(SpecLang, CanonicalizationFoldsPrefixIntoTail) {
  auto a = parse_spec("stage 1 : cuts=2 above=[1,0]\nstage * : cuts=2 above=[1,0]\n");
  auto b = parse_spec("stage * : cuts=2 above=[1,0]");
  EXPECT_EQ(a, b);
}

TEST(SpecLang, HeadersCommentsAndDefaults) {
  auto spec = parse_spec(
      "# a comment\n"
      "system demo   # trailing comment\n"
      "h1=2\n"
      "\n"
      "stage 1 : cuts=2 above=[0,3] below=1\n"
      "stage *:cuts=3 above=[0, 1, 0]\r\n");
  EXPECT_EQ(spec.name, "demo");
  EXPECT_EQ(spec.initial_height, 2u);
  ASSERT_EQ(spec.prefix.size(), 1u);
  EXPECT_EQ(spec.prefix[0].spacers_below, 1u);
  EXPECT_EQ(spec.tail->spacers_below, 0u);
}

TEST(SpecLang, ErrorsCarryPositions) {
  try {
    parse_spec("system x\nstage 1 : cuts=3 above=[0,1]\n");
    FAIL() << "arity mismatch accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  try {
    parse_spec("stage * : cuts=0 above=[]");
    FAIL() << "zero cuts accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
  try {
    parse_spec("stage 1 : cuts=2 above=[0,0]\nstage 1 cuts=2 above=[0,0]\n");
    FAIL() << "bad stage line accepted";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.column(), 7u);
  }
  EXPECT_THROW(parse_spec("stage * : cuts=2 above=[0,0]\nstage * : cuts=2 above=[0,0]"), ParseError);
  EXPECT_THROW(parse_spec("stage 2 : cuts=2 above=[0,0]"), ParseError);
  EXPECT_THROW(parse_spec("stage * : cuts=2 above=[0,0] sideways=1"), ParseError);
  EXPECT_THROW(parse_spec("stage * : cuts=2"), ParseError);
  EXPECT_THROW(parse_spec("# nothing\n"), ParseError);
  EXPECT_THROW(parse_spec("frobnicate"), ParseError);
}

TEST(SpecLang, JsonMirrorParsesToIdenticalSpec) {
  const char* dsl = "system mixed\nh1=3\nstage 1 : cuts=2 above=[1,0] below=2\nstage * : cuts=3 above=[0,1,0]\n";
  auto from_dsl = parse_spec(dsl);
  auto j = nlohmann::json::parse(R"({"system":"mixed","h1":3,"stages":[
      {"stage":1,"cuts":2,"above":[1,0],"below":2},
      {"stage":"*","cuts":3,"above":[0,1,0]}]})");
  EXPECT_EQ(parse_spec_json(j), from_dsl);
  EXPECT_EQ(parse_spec_json(to_json(from_dsl)), from_dsl);
  EXPECT_THROW(parse_spec_json(nlohmann::json::parse(R"({"stages":[{"stage":1,"cuts":2,"above":[1]}]})")),
               ParseError);
}

// Property: serialize/parse round trip over seeded random specs.
TEST(SpecLang, RoundTripProperty) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    StackingSpec s;
    s.name = (trial % 3 == 0) ? "" : "sys" + std::to_string(trial);
    s.initial_height = 1 + rng() % 4;
    auto random_rule = [&] {
      StageRule r;
      r.cuts = 1 + rng() % 4;
      r.spacers_above.clear();
      for (std::uint32_t j = 0; j < r.cuts; ++j) r.spacers_above.push_back(rng() % 4);
      r.spacers_below = rng() % 3;
      return r;
    };
    const std::size_t n = rng() % 5;
    for (std::size_t i = 0; i < n; ++i) s.prefix.push_back(random_rule());
    if (n == 0 || rng() % 2) s.tail = random_rule();
    const auto canonical = canonicalize(s);
    const auto reparsed = parse_spec(serialize(s));
    EXPECT_EQ(reparsed, canonical);
    EXPECT_EQ(parse_spec(serialize(reparsed)), reparsed);
    EXPECT_EQ(parse_spec_json(to_json(reparsed)), reparsed);
  }
}

TEST(SpecLang, ValidateChacon) {
  auto report = validate_spec(builtin_spec("chacon"), 8);
  EXPECT_TRUE(report.accepted);
  EXPECT_EQ(report.method, "exact-series");
  ASSERT_EQ(report.stages.size(), 8u);
  ASSERT_TRUE(report.limit_spacer_mass.has_value());
  // 1/3 + 1/9 + ... of the h1=1, c=3, one-spacer recurrence, scaled by w1 = 2/3:
  // sum_{i>=1} 3^{-i} = 1/2, so spacer mass = (2/3)(1/2) = 1/3.
  EXPECT_EQ(*report.limit_spacer_mass, Rational(1, 3));
  // Stage-k spacer mass is (h_k - 3^{k-1}) * w_k with w_k = 2/3^k.
  const auto h = oracle::height_recurrence(builtin_spec("chacon"), 8);
  std::int64_t pow3 = 1;
  for (std::size_t k = 1; k <= 8; ++k) {
    const Rational wk = Rational(2, pow3 * 3);
    EXPECT_EQ(report.stages[k - 1].width, wk);
    EXPECT_EQ(report.stages[k - 1].spacer_mass, Rational(static_cast<std::int64_t>(h[k - 1]) - pow3) * wk);
    pow3 *= 3;
  }
}

TEST(SpecLang, ValidateSpacerFreeAndDivergent) {
  auto dyadic = validate_spec(parse_spec("stage * : cuts=2 above=[0,0]"), 6);
  EXPECT_TRUE(dyadic.accepted);
  EXPECT_EQ(*dyadic.limit_spacer_mass, Rational(0));

  // cuts=1 with a spacer: every stage adds mass w1, the series diverges.
  auto div = validate_spec(parse_spec("stage * : cuts=1 above=[1]"), 8);
  EXPECT_FALSE(div.accepted);
  EXPECT_THROW(require_valid(parse_spec("stage * : cuts=1 above=[1]"), 8), ValidationError);
  // Direct series evaluation: partial spacer masses 1, 2, 3, ... (in units of w1).
  for (std::size_t k = 1; k < div.stages.size(); ++k)
    EXPECT_EQ(div.stages[k].spacer_mass - div.stages[k - 1].spacer_mass, Rational(1));

  // Pure spacer insertion with no spacers is fine.
  EXPECT_TRUE(validate_spec(parse_spec("stage * : cuts=1 above=[0]"), 4).accepted);
}

TEST(SpecLang, HeuristicOnFiniteSpecs) {
  std::string text;
  for (int i = 1; i <= 12; ++i) text += "stage " + std::to_string(i) + " : cuts=1 above=[1]\n";
  auto grow = validate_spec(parse_spec(text), 20);
  EXPECT_EQ(grow.method, "heuristic");
  EXPECT_FALSE(grow.accepted);

  auto finite = validate_spec(parse_spec("stage 1 : cuts=2 above=[1,0]\nstage 2 : cuts=2 above=[0,0]\n"), 10);
  EXPECT_TRUE(finite.accepted);
  EXPECT_EQ(finite.stages.size(), 3u);
  EXPECT_EQ(finite.stages.back().residual, Rational(0));
}

TEST(SpecLang, Builtins) {
  EXPECT_EQ(oracle::height_recurrence(builtin_spec("chacon"), 4), (std::vector<std::uint64_t>{1, 4, 13, 40}));
  EXPECT_EQ(oracle::height_recurrence(builtin_spec("odometer(2)"), 4), (std::vector<std::uint64_t>{1, 2, 4, 8}));
  EXPECT_EQ(oracle::height_recurrence(builtin_spec("triple_heavy"), 3), (std::vector<std::uint64_t>{1, 6, 21}));
  auto mixed = builtin_spec("odometer(2,3,5)");
  EXPECT_EQ(mixed.rule(1).cuts, 2u);
  EXPECT_EQ(mixed.rule(2).cuts, 3u);
  EXPECT_EQ(mixed.rule(9).cuts, 5u);
  EXPECT_EQ(builtin_spec("odometer(2,2,...)").rule(5).cuts, 2u);
  EXPECT_EQ(builtin_spec("dyadic_pair_right").tail->spacers_above, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_THROW(builtin_spec("baker"), Error);
  EXPECT_THROW(builtin_spec("odometer(1)"), Error);
}
