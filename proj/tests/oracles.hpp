#pragma once

// Test-only reference constructions. Nothing here calls into the engine's
// offset/provenance arithmetic: stacks are built by literal concatenation.

#include <cstdint>
#include <vector>

#include "kakutani/spec_lang.hpp"

namespace kakutani::oracle {

/// One level of an explicitly stacked tower, tagged with the address of the
/// points it contains: birth stage/level and the column chosen at each later stage.
struct ExplicitLevel {
  std::size_t birth_stage = 1;
  std::uint64_t birth_level = 0;
  std::vector<std::uint32_t> columns;  // choices for stages birth..K-1
  bool is_spacer() const { return birth_stage > 1; }
};

/// Stage-K stack built by cutting, inserting spacers and concatenating copies.
inline std::vector<ExplicitLevel> explicit_stack(const StackingSpec& spec, std::size_t k) {
  std::vector<ExplicitLevel> stack;
  for (std::uint64_t l = 0; l < spec.initial_height; ++l) stack.push_back({1, l, {}});
  for (std::size_t i = 1; i < k; ++i) {
    const StageRule& r = spec.rule(i);
    std::vector<ExplicitLevel> next;
    auto spacer = [&] { next.push_back({i + 1, next.size(), {}}); };
    for (std::uint32_t s = 0; s < r.spacers_below; ++s) spacer();
    for (std::uint32_t a = 0; a < r.cuts; ++a) {
      for (auto lvl : stack) {
        lvl.columns.push_back(a);
        next.push_back(std::move(lvl));
      }
      for (std::uint32_t s = 0; s < r.spacers_above[a]; ++s) spacer();
    }
    stack = std::move(next);
  }
  return stack;
}

/// Height recurrence h_{i+1} = s^- + c h_i + sum s^+ evaluated directly.
inline std::vector<std::uint64_t> height_recurrence(const StackingSpec& spec, std::size_t depth) {
  std::vector<std::uint64_t> h{spec.initial_height};
  for (std::size_t i = 1; i < depth; ++i) {
    const auto& r = spec.rule(i);
    std::uint64_t sum_above = 0;
    for (auto a : r.spacers_above) sum_above += a;
    h.push_back(r.spacers_below + r.cuts * h.back() + sum_above);
  }
  return h;
}

/// q-adic tower of first height q as an integer counter; T is +1.
/// Returns the induced orbit of 0 on {N mod q < p}: each entry is N.
inline std::vector<std::uint64_t> brute_force_induced_counter(std::uint64_t q, std::uint64_t p, std::size_t steps) {
  std::vector<std::uint64_t> orbit{0};
  std::uint64_t n = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    do {
      ++n;
    } while (n % q >= p);
    orbit.push_back(n);
  }
  return orbit;
}

/// Stage-K positions of the copies of stage-1 level 0, bottom to top. The
/// copy with column choices (d_1, ..., d_{K-1}) is entry sum d_j * c_1...c_{j-1}.
inline std::vector<std::uint64_t> explicit_base_positions(const StackingSpec& spec, std::size_t k) {
  std::vector<std::uint64_t> pos;
  const auto stack = explicit_stack(spec, k);
  for (std::uint64_t l = 0; l < stack.size(); ++l)
    if (stack[l].birth_stage == 1 && stack[l].birth_level == 0) pos.push_back(l);
  return pos;
}

}  // namespace kakutani::oracle
