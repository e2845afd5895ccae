#pragma once

// Cutting-and-stacking recipes: data model, line-oriented DSL, JSON mirror,
// validation (summability of spacer mass) and the built-in classic systems.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "kakutani/errors.hpp"
#include "kakutani/rational.hpp"

namespace kakutani {

/// One cut-and-restack step: cut into `cuts` equal columns, put
/// `spacers_above[j]` spacers over column j (0-based) and `spacers_below`
/// under column 0, then stack column j+1 on top of column j.
struct StageRule {
  std::uint32_t cuts = 1;
  std::vector<std::uint32_t> spacers_above{0};
  std::uint32_t spacers_below = 0;

  std::uint64_t spacer_count() const {
    std::uint64_t s = spacers_below;
    for (auto a : spacers_above) s += a;
    return s;
  }

  friend bool operator==(const StageRule&, const StageRule&) = default;
};

/// A rank-one recipe: explicit rules for stages 1..prefix.size(), then `tail`
/// repeated forever (if present). Rule i drives the passage from stage i to i+1.
struct StackingSpec {
  std::string name;
  std::uint64_t initial_height = 1;
  std::vector<StageRule> prefix;
  std::optional<StageRule> tail;

  /// Rule for stage `stage` (1-based). Throws Error past the end of a finite spec.
  const StageRule& rule(std::size_t stage) const {
    if (stage == 0) throw Error("stages are 1-based");
    if (stage <= prefix.size()) return prefix[stage - 1];
    if (tail) return *tail;
    throw Error("finite spec '" + name + "' has no rule for stage " + std::to_string(stage));
  }

  /// Highest stage index that exists (prefix.size()+1) for finite specs.
  std::optional<std::size_t> last_stage() const {
    if (tail) return std::nullopt;
    return prefix.size() + 1;
  }

  friend bool operator==(const StackingSpec&, const StackingSpec&) = default;
};

namespace detail {

inline void check_rule(const StageRule& r, std::size_t line, std::size_t col) {
  if (r.cuts == 0) throw ParseError(line, col, "cuts must be positive");
  if (r.spacers_above.size() != r.cuts)
    throw ParseError(line, col,
                     "arity mismatch: cuts=" + std::to_string(r.cuts) + " but above has " +
                         std::to_string(r.spacers_above.size()) + " entries");
}

/// Character cursor over one DSL line, tracking 1-based columns.
class LineCursor {
 public:
  LineCursor(std::string_view text, std::size_t line) : text_(text), line_(line) {}

  std::size_t column() const { return pos_ + 1; }
  std::size_t line() const { return line_; }
  bool done() {
    skip_ws();
    return pos_ >= text_.size();
  }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }
  bool accept(char c) {
    if (peek() != c) return false;
    ++pos_;
    return true;
  }
  std::string word() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
      ++pos_;
    if (start == pos_) fail("expected identifier");
    return std::string(text_.substr(start, pos_ - start));
  }
  std::uint64_t integer() {
    skip_ws();
    std::size_t start = pos_;
    std::uint64_t v = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      const std::uint64_t digit = static_cast<std::uint64_t>(text_[pos_] - '0');
      if (v > (UINT32_MAX - digit) / 10) {
        pos_ = start;
        fail("integer too large");
      }
      v = v * 10 + digit;
      ++pos_;
    }
    if (start == pos_) fail("expected non-negative integer");
    return v;
  }
  std::string rest() {
    skip_ws();
    std::string r(text_.substr(pos_));
    while (!r.empty() && std::isspace(static_cast<unsigned char>(r.back()))) r.pop_back();
    pos_ = text_.size();
    return r;
  }
  [[noreturn]] void fail(const std::string& what) { throw ParseError(line_, column(), what); }

 private:
  std::string_view text_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

inline StageRule parse_rule_fields(LineCursor& cur) {
  StageRule rule;
  bool have_cuts = false, have_above = false, have_below = false;
  std::size_t rule_col = cur.column();
  while (!cur.done()) {
    const std::size_t col = cur.column();
    const std::string key = cur.word();
    cur.expect('=');
    if (key == "cuts") {
      if (have_cuts) throw ParseError(cur.line(), col, "duplicate field 'cuts'");
      rule.cuts = static_cast<std::uint32_t>(cur.integer());
      have_cuts = true;
    } else if (key == "above") {
      if (have_above) throw ParseError(cur.line(), col, "duplicate field 'above'");
      cur.expect('[');
      rule.spacers_above.clear();
      if (!cur.accept(']')) {
        do {
          rule.spacers_above.push_back(static_cast<std::uint32_t>(cur.integer()));
        } while (cur.accept(','));
        cur.expect(']');
      }
      have_above = true;
    } else if (key == "below") {
      if (have_below) throw ParseError(cur.line(), col, "duplicate field 'below'");
      rule.spacers_below = static_cast<std::uint32_t>(cur.integer());
      have_below = true;
    } else {
      throw ParseError(cur.line(), col, "unknown field '" + key + "'");
    }
  }
  if (!have_cuts) throw ParseError(cur.line(), rule_col, "missing field 'cuts'");
  if (!have_above) throw ParseError(cur.line(), rule_col, "missing field 'above'");
  check_rule(rule, cur.line(), rule_col);
  return rule;
}

}  // namespace detail

/// Folds trailing prefix rules that equal the periodic tail into the tail.
inline StackingSpec canonicalize(StackingSpec spec) {
  if (spec.tail)
    while (!spec.prefix.empty() && spec.prefix.back() == *spec.tail) spec.prefix.pop_back();
  return spec;
}

/// Parses the line-oriented DSL:
///
///     # comment
///     system chacon
///     h1=1
///     stage 1 : cuts=2 above=[1,0]
///     stage * : cuts=3 above=[0,1,0] below=0
inline StackingSpec parse_spec(std::string_view text) {
  StackingSpec spec;
  bool have_name = false, have_h1 = false, have_tail = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    detail::LineCursor cur(line, line_no);
    if (cur.done()) {
      if (end == text.size()) break;
      continue;
    }
    const std::size_t kw_col = cur.column();
    const std::string kw = cur.word();
    if (kw == "system") {
      if (have_name) cur.fail("duplicate 'system' header");
      spec.name = cur.rest();
      if (spec.name.empty()) cur.fail("missing system name");
      have_name = true;
    } else if (kw == "h1") {
      if (have_h1) cur.fail("duplicate 'h1' header");
      cur.expect('=');
      spec.initial_height = cur.integer();
      if (spec.initial_height == 0) throw ParseError(line_no, kw_col, "h1 must be positive");
      if (!cur.done()) cur.fail("trailing characters after h1");
      have_h1 = true;
    } else if (kw == "stage") {
      if (have_tail) throw ParseError(line_no, kw_col, "'stage *' must be the last stage line");
      cur.skip_ws();
      const std::size_t k_col = cur.column();
      bool periodic = false;
      std::uint64_t k = 0;
      if (cur.accept('*')) {
        periodic = true;
      } else {
        k = cur.integer();
        if (k != spec.prefix.size() + 1)
          throw ParseError(line_no, k_col,
                           "expected stage " + std::to_string(spec.prefix.size() + 1) + " or '*', got " +
                               std::to_string(k));
      }
      cur.expect(':');
      StageRule rule = detail::parse_rule_fields(cur);
      if (periodic) {
        spec.tail = std::move(rule);
        have_tail = true;
      } else {
        spec.prefix.push_back(std::move(rule));
      }
    } else {
      throw ParseError(line_no, kw_col, "unknown keyword '" + kw + "'");
    }
    if (end == text.size()) break;
  }
  if (spec.prefix.empty() && !spec.tail) throw ParseError(line_no, 1, "spec has no stage rules");
  return canonicalize(std::move(spec));
}

/// Canonical DSL text; parse_spec(serialize(s)) == canonicalize(s).
inline std::string serialize(const StackingSpec& spec) {
  std::ostringstream os;
  auto rule_text = [&os](const StageRule& r) {
    os << "cuts=" << r.cuts << " above=[";
    for (std::size_t j = 0; j < r.spacers_above.size(); ++j) os << (j ? "," : "") << r.spacers_above[j];
    os << "] below=" << r.spacers_below << "\n";
  };
  if (!spec.name.empty()) os << "system " << spec.name << "\n";
  if (spec.initial_height != 1) os << "h1=" << spec.initial_height << "\n";
  for (std::size_t i = 0; i < spec.prefix.size(); ++i) {
    os << "stage " << (i + 1) << " : ";
    rule_text(spec.prefix[i]);
  }
  if (spec.tail) {
    os << "stage * : ";
    rule_text(*spec.tail);
  }
  return os.str();
}

/// Structured mirror of the DSL: one object per stage rule.
inline nlohmann::json to_json(const StackingSpec& spec) {
  nlohmann::json stages = nlohmann::json::array();
  auto rule_json = [](const StageRule& r, nlohmann::json stage) {
    return nlohmann::json{{"stage", std::move(stage)},
                          {"cuts", r.cuts},
                          {"above", r.spacers_above},
                          {"below", r.spacers_below}};
  };
  for (std::size_t i = 0; i < spec.prefix.size(); ++i) stages.push_back(rule_json(spec.prefix[i], i + 1));
  if (spec.tail) stages.push_back(rule_json(*spec.tail, "*"));
  return {{"system", spec.name}, {"h1", spec.initial_height}, {"stages", stages}};
}

/// Parses the structured mirror. Errors carry the 1-based stage-entry index as line.
inline StackingSpec parse_spec_json(const nlohmann::json& j) {
  StackingSpec spec;
  if (!j.is_object()) throw ParseError(1, 1, "structured spec must be an object");
  if (j.contains("system")) {
    if (!j["system"].is_string()) throw ParseError(1, 1, "'system' must be a string");
    spec.name = j["system"].get<std::string>();
  }
  if (j.contains("h1")) {
    if (!j["h1"].is_number_unsigned() || j["h1"].get<std::uint64_t>() == 0)
      throw ParseError(1, 1, "'h1' must be a positive integer");
    spec.initial_height = j["h1"].get<std::uint64_t>();
  }
  if (!j.contains("stages") || !j["stages"].is_array()) throw ParseError(1, 1, "missing 'stages' array");
  std::size_t entry = 0;
  for (const auto& s : j["stages"]) {
    ++entry;
    if (spec.tail) throw ParseError(entry, 1, "'stage *' must be the last stage entry");
    auto field_u32 = [&](const char* key, bool required, std::uint32_t fallback) -> std::uint32_t {
      if (!s.contains(key)) {
        if (required) throw ParseError(entry, 1, std::string("missing field '") + key + "'");
        return fallback;
      }
      if (!s[key].is_number_unsigned() || s[key].get<std::uint64_t>() > UINT32_MAX)
        throw ParseError(entry, 1, std::string("field '") + key + "' must be a non-negative integer");
      return s[key].get<std::uint32_t>();
    };
    if (!s.is_object()) throw ParseError(entry, 1, "stage entry must be an object");
    StageRule rule;
    rule.cuts = field_u32("cuts", true, 0);
    rule.spacers_below = field_u32("below", false, 0);
    if (!s.contains("above") || !s["above"].is_array()) throw ParseError(entry, 1, "missing field 'above'");
    rule.spacers_above.clear();
    for (const auto& a : s["above"]) {
      if (!a.is_number_unsigned()) throw ParseError(entry, 1, "'above' entries must be non-negative integers");
      rule.spacers_above.push_back(a.get<std::uint32_t>());
    }
    detail::check_rule(rule, entry, 1);
    if (!s.contains("stage")) throw ParseError(entry, 1, "missing field 'stage'");
    const auto& k = s["stage"];
    if (k.is_string() && k.get<std::string>() == "*") {
      spec.tail = std::move(rule);
    } else if (k.is_number_unsigned() && k.get<std::uint64_t>() == spec.prefix.size() + 1) {
      spec.prefix.push_back(std::move(rule));
    } else {
      throw ParseError(entry, 1, "expected stage " + std::to_string(spec.prefix.size() + 1) + " or \"*\"");
    }
  }
  if (spec.prefix.empty() && !spec.tail) throw ParseError(1, 1, "spec has no stage rules");
  return canonicalize(std::move(spec));
}

/// Total mass of the construction when the stage-1 width is 1, i.e.
/// lim h_k / prod_{j<k} c(j). Exact geometric series for periodic tails.
/// Throws ValidationError when the spacer mass diverges.
inline Rational unnormalized_total_mass(const StackingSpec& spec) {
  Rational u(static_cast<std::int64_t>(spec.initial_height));
  Rational scale(1);  // 1 / prod_{j<=i} c(j)
  for (const auto& r : spec.prefix) {
    scale = scale / Rational(static_cast<std::int64_t>(r.cuts));
    u += Rational(static_cast<std::int64_t>(r.spacer_count())) * scale;
  }
  if (!spec.tail) return u;
  const auto c = static_cast<std::int64_t>(spec.tail->cuts);
  const auto s = static_cast<std::int64_t>(spec.tail->spacer_count());
  if (s == 0) return u;
  if (c == 1) throw ValidationError("spacer mass diverges: periodic tail adds spacers without cutting");
  // sum_{t>=1} s * scale / c^t = s * scale / (c - 1)
  return u + Rational(s) * scale / Rational(c - 1);
}

/// Width of the stage-1 levels after scaling the total mass to 1.
inline Rational normalized_base_width(const StackingSpec& spec) {
  return Rational(1) / unnormalized_total_mass(spec);
}

struct StageSummary {
  std::size_t index = 0;
  std::uint64_t height = 0;
  Rational width;
  std::uint64_t spacers_born = 0;
  Rational spacer_mass;  // normalized mass of spacer levels in the stage stack
  Rational residual;     // normalized mass not yet in the stack
};

struct ValidationReport {
  std::vector<StageSummary> stages;
  bool accepted = true;
  std::string method;  // "exact-series" or "heuristic"
  std::string diagnostic;
  std::optional<Rational> limit_spacer_mass;  // normalized, when accepted and computable
};

/// Relative per-stage growth above which the divergence heuristic counts a stage.
inline constexpr double kDivergenceRelTol = 1e-6;
/// Consecutive growing stages at the horizon that trigger rejection.
inline constexpr std::size_t kDivergenceRun = 8;

/// Per-stage heights/widths/spacer mass through `horizon` stages and a
/// verdict on summability of the spacer mass.
inline ValidationReport validate_spec(const StackingSpec& spec, std::size_t horizon) {
  if (horizon == 0) throw PreconditionError("validation horizon must be >= 1");
  ValidationReport report;
  std::optional<Rational> total;
  if (spec.tail) {
    report.method = "exact-series";
    try {
      total = unnormalized_total_mass(spec);
    } catch (const ValidationError& e) {
      report.accepted = false;
      report.diagnostic = e.what();
    }
  } else {
    report.method = "heuristic";
  }
  if (auto last = spec.last_stage()) horizon = std::min(horizon, *last);

  // Unnormalized: stage-1 width 1.
  std::vector<Rational> unnorm_width;
  std::vector<std::uint64_t> heights;
  std::vector<std::uint64_t> born;
  std::uint64_t h = spec.initial_height;
  Rational w(1);
  for (std::size_t i = 1; i <= horizon; ++i) {
    heights.push_back(h);
    unnorm_width.push_back(w);
    born.push_back(i == 1 ? 0 : spec.rule(i - 1).spacer_count());
    if (i == horizon) break;
    const StageRule& r = spec.rule(i);
    const unsigned __int128 next = static_cast<unsigned __int128>(h) * r.cuts + r.spacer_count();
    if (next > static_cast<unsigned __int128>(INT64_MAX)) {
      horizon = i;
      break;
    }
    h = static_cast<std::uint64_t>(next);
    w = w / Rational(static_cast<std::int64_t>(r.cuts));
  }

  if (!spec.tail) {
    // Cumulative spacer mass M_k = h_k w_k - h_1; reject on a sustained run of growth.
    std::size_t run = 0;
    Rational prev(0);
    for (std::size_t i = 0; i < heights.size(); ++i) {
      Rational m = Rational(static_cast<std::int64_t>(heights[i])) * unnorm_width[i] -
                   Rational(static_cast<std::int64_t>(spec.initial_height));
      if (i > 0) {
        const double growth = (m - prev).to_double();
        run = (growth > kDivergenceRelTol * std::max(prev.to_double(), 0.0) && growth > 0) ? run + 1 : 0;
      }
      prev = m;
    }
    if (run >= kDivergenceRun) {
      report.accepted = false;
      report.diagnostic = "spacer mass still growing over the last " + std::to_string(run) + " stages";
    } else {
      total = Rational(static_cast<std::int64_t>(heights.back())) * unnorm_width.back();
    }
  }

  const Rational scale = total ? Rational(1) / *total : Rational(1);
  for (std::size_t i = 0; i < heights.size(); ++i) {
    StageSummary s;
    s.index = i + 1;
    s.height = heights[i];
    s.width = unnorm_width[i] * scale;
    s.spacers_born = born[i];
    const Rational stack = Rational(static_cast<std::int64_t>(heights[i])) * s.width;
    s.spacer_mass = stack - Rational(static_cast<std::int64_t>(spec.initial_height)) * scale;
    s.residual = total ? Rational(1) - stack : Rational(0);
    report.stages.push_back(s);
  }
  if (report.accepted && total)
    report.limit_spacer_mass = Rational(1) - Rational(static_cast<std::int64_t>(spec.initial_height)) * scale;
  return report;
}

/// Throws ValidationError unless validate_spec accepts the spec.
inline void require_valid(const StackingSpec& spec, std::size_t horizon) {
  auto report = validate_spec(spec, horizon);
  if (!report.accepted) throw ValidationError(report.diagnostic);
}

namespace detail {
inline StageRule uniform_rule(std::uint32_t cuts, std::vector<std::uint32_t> above) {
  StageRule r;
  r.cuts = cuts;
  r.spacers_above = std::move(above);
  return r;
}
}  // namespace detail

/// Built-in systems: chacon, odometer(b1,...,bk) (bk repeats), dyadic_pair_left,
/// dyadic_pair_right, triple_heavy.
inline StackingSpec builtin_spec(std::string_view name) {
  StackingSpec spec;
  if (name == "chacon") {
    spec.tail = detail::uniform_rule(3, {0, 1, 0});
  } else if (name == "dyadic_pair_left") {
    spec.tail = detail::uniform_rule(2, {1, 0});
  } else if (name == "dyadic_pair_right") {
    spec.tail = detail::uniform_rule(2, {0, 1});
  } else if (name == "triple_heavy") {
    spec.tail = detail::uniform_rule(3, {1, 1, 1});
  } else if (name.starts_with("odometer(") && name.ends_with(")")) {
    std::string_view body = name.substr(9, name.size() - 10);
    std::vector<std::uint32_t> bases;
    std::size_t pos = 0;
    while (pos <= body.size()) {
      std::size_t comma = body.find(',', pos);
      if (comma == std::string_view::npos) comma = body.size();
      std::string tok(body.substr(pos, comma - pos));
      tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char ch) { return std::isspace(ch); }),
                tok.end());
      pos = comma + 1;
      if (tok == "..." || tok == "\xE2\x80\xA6" || tok == "*") break;
      if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](unsigned char ch) { return std::isdigit(ch); }))
        throw Error("bad odometer base '" + tok + "'");
      const auto b = std::stoul(tok);
      if (b < 2) throw Error("odometer bases must be >= 2");
      bases.push_back(static_cast<std::uint32_t>(b));
    }
    if (bases.empty()) throw Error("odometer needs at least one base");
    for (std::size_t i = 0; i + 1 < bases.size(); ++i)
      spec.prefix.push_back(detail::uniform_rule(bases[i], std::vector<std::uint32_t>(bases[i], 0)));
    spec.tail = detail::uniform_rule(bases.back(), std::vector<std::uint32_t>(bases.back(), 0));
  } else {
    throw Error("unknown built-in system '" + std::string(name) + "'");
  }
  spec.name = std::string(name);
  return canonicalize(std::move(spec));
}

}  // namespace kakutani
