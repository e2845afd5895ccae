// Walks one point through the main pipelines: towers, inducing, even and
// non-even matching.

#include <iostream>
#include <random>

#include "kakutani/ergodic.hpp"
#include "kakutani/induction.hpp"
#include "kakutani/matcher.hpp"
#include "kakutani/rank_one.hpp"

using namespace kakutani;

int main() {
  RankOneSystem chacon(builtin_spec("chacon"));
  std::cout << "chacon heights:";
  for (std::size_t k = 1; k <= 6; ++k) std::cout << ' ' << chacon.height(k);
  std::cout << "\nbase measure " << chacon.measure(chacon.base_set()).str() << "\n";

  const auto d = column_decomposition(chacon, chacon.base_set(), 8);
  std::cout << "return-time histogram at stage 8:\n" << histogram_csv(d);

  const auto rep = kac_check(chacon, base_samples(1, 100), {6561});
  std::cout << "Kac target " << rep.target.str() << ", worst deviation over 100 samples " << rep.worst_dev.str()
            << "\n";

  const auto pair = builtin_pair("dyadic");
  std::mt19937_64 rng(42);
  auto x = pair.x().sample_point(rng, 10);
  while (pair.x().contains(pair.x().base_set(), x)) x = pair.x().sample_point(rng, 10);
  const auto m = even_match_machine(pair, x, 64);
  std::cout << "even match " << point_id(pair.x(), x) << " -> " << point_id(pair.y(), m.y) << " (h=" << m.h
            << " n=" << m.n << " d=" << m.d << ")\n";

  const auto heavy = builtin_pair("chacon_heavy");
  const auto plan = noneven_prepare(heavy, Rational(1, 4));
  std::cout << "non-even plan: N=" << plan.n << " cylinder depth " << plan.depth << " min margin " << plan.min_margin
            << "\n";
  const auto y = noneven_match(heavy, plan, heavy.x().sample_point(rng, 10));
  std::cout << "non-even image " << point_id(heavy.y(), y) << "\n";
}
