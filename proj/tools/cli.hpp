#pragma once

// Command-line pipelines over the library. Every command writes its outputs
// under --out-dir and a manifest.json describing the run, even on failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "kakutani/ergodic.hpp"
#include "kakutani/induction.hpp"
#include "kakutani/matcher.hpp"
#include "kakutani/odometer.hpp"
#include "kakutani/rank_one.hpp"
#include "kakutani/rotation.hpp"
#include "kakutani/spec_lang.hpp"
#include "kakutani/verify.hpp"

#ifndef KAKUTANI_VERSION
#define KAKUTANI_VERSION "dev"
#endif

namespace kakutani::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Process exit codes; one per failure class.
enum Exit : int {
  kOk = 0,
  kInternal = 1,
  kParse = 2,
  kValidation = 3,
  kInadmissible = 4,
  kUnstable = 5,
  kChecksFailed = 6,
  kExhausted = 7,
  kPrecondition = 8,
  kIo = 9,
  kUsage = 64,
};

/// Failure with a chosen exit code.
struct CliFailure : Error {
  CliFailure(int code, const std::string& what) : Error(what), code(code) {}
  int code;
};

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliFailure(kIo, "cannot read '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

/// Run bookkeeping: inputs, outputs, and the manifest written at exit.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, fs::path out_dir)
      : command_(std::move(command)), argv_(std::move(argv)), out_dir_(std::move(out_dir)) {}

  const fs::path& out_dir() const { return out_dir_; }
  json& config() { return config_; }

  void add_input(const std::string& path, const std::string& bytes) {
    inputs_.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
  }

  /// Writes `text` to `path` (relative paths resolve under --out-dir) and lists it.
  void write(const fs::path& path, const std::string& text) {
    const fs::path p = path.is_absolute() ? path : out_dir_ / path;
    std::error_code ec;
    if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary);
    if (!out || !(out << text)) throw CliFailure(kIo, "cannot write '" + p.string() + "'");
    outputs_.push_back(p.string());
  }

  void write_manifest(int code, const std::string& error) {
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json m = {{"command", command_},
              {"argv", argv_},
              {"config", config_},
              {"seed", config_.value("seed", json())},
              {"tool_version", KAKUTANI_VERSION},
              {"inputs", inputs_},
              {"outputs", outputs_},
              {"exit_code", code},
              {"status", code == kOk ? "ok" : "failed"},
              {"finished_at", stamp}};
    if (!error.empty()) m["error"] = error;
    std::ofstream(out_dir_ / "manifest.json") << m.dump(2) << "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  fs::path out_dir_;
  json config_ = json::object();
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
};

// ---------------------------------------------------------------------------
// Inputs.

/// "builtin:NAME", a .json spec file, or a DSL spec file.
inline StackingSpec load_spec(const std::string& arg, Run& run) {
  if (arg.rfind("builtin:", 0) == 0) return builtin_spec(arg.substr(8));
  const std::string text = read_file(arg);
  run.add_input(arg, text);
  if (fs::path(arg).extension() == ".json") {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(1, e.byte, std::string("invalid JSON: ") + e.what());
    }
    return parse_spec_json(j);
  }
  return parse_spec(text);
}

/// Stages inspected by the convergence check; widths stay representable.
inline constexpr std::size_t kValidationHorizon = 20;

/// Rejects specs whose spacer mass does not converge.
inline ValidationReport validated(const StackingSpec& spec) {
  auto rep = validate_spec(spec, kValidationHorizon);
  if (!rep.accepted) {
    std::string msg = "spec rejected (" + rep.method + "): " + rep.diagnostic;
    const std::size_t n = rep.stages.size();
    for (std::size_t i = n > 4 ? n - 4 : 0; i < n; ++i)
      msg += "\n  stage " + std::to_string(rep.stages[i].index) + ": spacer mass " + rep.stages[i].spacer_mass.str();
    throw ValidationError(msg);
  }
  return rep;
}

inline Rational parse_rational(const std::string& s) {
  try {
    return Rational::parse(s);
  } catch (const std::exception& e) {
    throw ParseError(1, 1, "bad rational '" + s + "': " + e.what());
  }
}

inline std::string odometer_digits(const OdometerSystem& od, const OdometerPoint& p, std::size_t shown) {
  std::size_t last = 1;
  const bool finite = p.digits.tail() != DigitStream::Tail::Generated;
  std::size_t upto = shown;
  if (finite) {
    upto = std::max<std::size_t>(p.digits.prefix_end(), 2) - 1;
    for (std::size_t j = 1; j <= upto; ++j)
      if (od.digit(p, j) != 0) last = j;
    upto = last;
  }
  std::string s;
  for (std::size_t j = 1; j <= upto; ++j) {
    s += std::to_string(od.digit(p, j));
    if (od.spec().base(j) > 10) s += ' ';
  }
  return finite ? s : s + "...";
}

// ---------------------------------------------------------------------------
// Commands.

struct Globals {
  std::uint64_t seed = 1;
  std::size_t budget = kDefaultMaxStage;
  std::string out_dir = "out";
};

struct BuildOpts {
  std::string spec;
  std::size_t stages = 8;
  std::string out = "stages.json";
};

inline int cmd_build(const Globals& g, const BuildOpts& o, Run& run) {
  run.config().update({{"spec", o.spec}, {"stages", o.stages}, {"out", o.out}});
  const StackingSpec spec = load_spec(o.spec, run);
  const auto rep = validated(spec);
  if (o.stages > g.budget) throw PreconditionError("--stages exceeds --budget");
  const auto stages = build_towers(spec, o.stages);
  json out = {{"system", spec.name},
              {"spec", serialize(spec)},
              {"validation", {{"method", rep.method},
                              {"limit_spacer_mass", rep.limit_spacer_mass ? json(rep.limit_spacer_mass->str()) : json()}}},
              {"stages", stage_report(stages)}};
  run.write(o.out, out.dump(2) + "\n");
  for (const auto& s : stages) std::cout << "stage " << s.index << ": h=" << s.height << " w=" << s.width.str() << "\n";
  return kOk;
}

struct OrbitOpts {
  std::string system;
  std::string from = "zero";
  std::int64_t steps = 8;
  std::string out = "orbit.csv";
};

inline int cmd_orbit(const Globals& g, const OrbitOpts& o, Run& run) {
  run.config().update({{"system", o.system}, {"from", o.from}, {"steps", o.steps}, {"out", o.out}});
  if (o.from != "zero" && o.from != "random") throw PreconditionError("--from must be zero or random");
  std::mt19937_64 rng(g.seed);
  std::string csv = "step,point\n";
  auto emit = [&](std::int64_t i, const std::string& p) {
    csv += std::to_string(i) + "," + p + "\n";
    std::cout << p << "\n";
  };
  if (o.system.rfind("od:", 0) == 0) {
    OdometerSystem od(OdometerSpec::parse(o.system));
    OdometerPoint p = o.from == "zero" ? OdometerPoint{} : od.sample_point(rng);
    for (std::int64_t i = 0; i <= o.steps; ++i, p = od.successor(p)) emit(i, odometer_digits(od, p, 12));
  } else if (o.system.rfind("cf:", 0) == 0) {
    RotationSystem rot(RotationAngle::parse(o.system));
    RotationPoint p = o.from == "zero" ? rot.point(0) : rot.sample_point(rng);
    for (std::int64_t i = 0; i <= o.steps; ++i, p = rot.rotate(p, 1))
      emit(i, AffineValue{p.a, p.b}.str());
  } else {
    const StackingSpec spec = load_spec(o.system, run);
    validated(spec);
    RankOneSystem sys(spec, 32, g.budget);
    RankOnePoint p = o.from == "zero" ? sys.base_point(DigitStream::zeros(1)) : sys.sample_point(rng, 1);
    for (std::int64_t i = 0; i <= o.steps; ++i, p = sys.step(p, 1)) emit(i, point_id(sys, p));
  }
  run.write(o.out, csv);
  return kOk;
}

struct InduceOpts {
  std::string system;
  std::string base = "1:0";  // stage:level,level,...
  std::size_t stage = 10;
  std::size_t skyscraper_levels = 16;
};

inline LevelSet parse_levels(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParseError(1, 1, "base must be 'stage:level,level,...'");
  try {
    LevelSet s;
    s.stage = std::stoul(text.substr(0, colon));
    std::stringstream ss(text.substr(colon + 1));
    for (std::string tok; std::getline(ss, tok, ',');) s.levels.push_back(std::stoull(tok));
    std::sort(s.levels.begin(), s.levels.end());
    s.levels.erase(std::unique(s.levels.begin(), s.levels.end()), s.levels.end());
    return s;
  } catch (const std::logic_error&) {
    throw ParseError(1, colon + 2, "bad level list '" + text + "'");
  }
}

inline int cmd_induce(const Globals& g, const InduceOpts& o, Run& run) {
  run.config().update({{"system", o.system}, {"base", o.base}, {"stage", o.stage},
                       {"skyscraper_levels", o.skyscraper_levels}});
  if (o.system.rfind("cf:", 0) == 0) {
    RotationSystem rot(RotationAngle::parse(o.system));
    const auto a = IntervalUnion::initial(rot);
    const auto d = column_decomposition(rot, a, g.budget * 64);
    std::string csv = "r,mass,mass_approx,pieces\n";
    for (const auto& c : d.cells) {
      std::ostringstream approx;
      approx << std::setprecision(12) << rot.value(c.mass);
      csv += std::to_string(c.r) + "," + c.mass.str() + "," + approx.str() + "," + std::to_string(c.set.pieces().size()) + "\n";
    }
    run.write("histogram.csv", csv);
    run.write("induce.json", json({{"base", "initial interval"},
                                   {"kac_sum", d.kac_sum.str()},
                                   {"unresolved_empty", d.unresolved.empty()}})
                                 .dump(2) + "\n");
    std::cout << csv;
    return kOk;
  }
  const StackingSpec spec = load_spec(o.system, run);
  validated(spec);
  RankOneSystem sys(spec, 32, g.budget);
  const LevelSet a = parse_levels(o.base);
  if (a.stage < 1 || a.stage > sys.depth() || a.levels.empty() || a.levels.back() >= sys.height(a.stage))
    throw PreconditionError("base levels out of range for stage " + std::to_string(a.stage));
  if (o.stage > sys.depth()) throw NeedMoreDepth(sys.depth());
  const auto d = column_decomposition(sys, a, o.stage);
  run.write("histogram.csv", histogram_csv(d));
  const auto sky = skyscraper(sys, a, o.skyscraper_levels, o.stage);
  run.write("skyscraper.txt", skyscraper_dump(sys, sky));
  run.write("induce.json", json({{"base", o.base},
                                 {"work_stage", d.work_stage},
                                 {"base_mass", sys.measure(a).str()},
                                 {"kac_sum", d.kac_sum.str()},
                                 {"kac_gap", d.kac_gap.str()},
                                 {"unresolved_mass", d.unresolved_mass.str()}})
                               .dump(2) + "\n");
  std::cout << histogram_csv(d);
  return kOk;
}

struct ErgodicOpts {
  std::string system;
  std::size_t samples = 1000;
  std::vector<std::uint64_t> ns{6561};
  std::string eps;        // optional tolerance for exceedance flags
  std::string estimate;   // optional eps for an N(eps) estimate
  std::uint64_t horizon = 1u << 14;
};

inline int cmd_ergodic(const Globals& g, const ErgodicOpts& o, Run& run) {
  run.config().update({{"system", o.system}, {"samples", o.samples}, {"n", o.ns}, {"eps", o.eps},
                       {"estimate", o.estimate}, {"horizon", o.horizon}});
  const StackingSpec spec = load_spec(o.system, run);
  validated(spec);
  RankOneSystem sys(spec, 32, g.budget);
  const auto samples = base_samples(g.seed, o.samples);
  std::optional<Rational> eps;
  if (!o.eps.empty()) eps = parse_rational(o.eps);
  const auto rep = kac_check(sys, samples, o.ns, eps);
  run.write("kac.csv", rep.csv());
  json summary = {{"target", rep.target.str()},
                  {"worst_deviation", rep.worst_dev.str()},
                  {"exceedances", rep.exceedances},
                  {"eps", eps ? json(eps->str()) : json()}};
  if (!o.estimate.empty()) {
    const auto est = estimate_N(sys, parse_rational(o.estimate), samples, o.horizon);
    summary["N_estimate"] = {{"eps", o.estimate}, {"N", est.n}, {"horizon", o.horizon}, {"empirical", est.empirical}};
  }
  run.write("ergodic.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return kOk;
}

struct MatchOpts {
  std::string mode = "even";
  std::string x, y;
  std::string phi = "identity";
  std::size_t samples = 1000;
  std::size_t sample_stage = 12;
  std::int64_t window = 64;
  std::int64_t max_window = 4096;
  std::string semantics = "machine";
  std::string boundary = "nonstrict";
  std::string max_unstable = "1/100";
  std::string eps = "1/4";
  std::string out = "trace.csv";
};

inline PairSpec make_pair(const MatchOpts& o, const Globals& g, Run& run) {
  const StackingSpec xs = load_spec(o.x, run), ys = load_spec(o.y, run);
  validated(xs);
  validated(ys);
  const Conjugacy phi = Conjugacy::parse(o.phi);
  try {
    return PairSpec(RankOneSystem(xs, 32, g.budget), RankOneSystem(ys, 32, g.budget), phi);
  } catch (const PreconditionError& e) {
    throw CliFailure(kInadmissible, e.what());
  }
}

inline int cmd_match_even(const Globals& g, const MatchOpts& o, const PairSpec& pair, Run& run) {
  if (!pair.even())
    throw CliFailure(kInadmissible, "even mode needs equal base measures, got " + pair.mu_a().str() + " and " +
                                        pair.nu_b().str());
  if (o.semantics != "formula" && o.semantics != "machine" && o.semantics != "both")
    throw PreconditionError("--semantics must be formula, machine or both");
  if (o.boundary != "strict" && o.boundary != "nonstrict") throw PreconditionError("--boundary must be strict or nonstrict");
  const Boundary boundary = o.boundary == "strict" ? Boundary::Strict : Boundary::NonStrict;
  const bool want_formula = o.semantics != "machine", want_machine = o.semantics != "formula";
  std::mt19937_64 rng(g.seed);
  std::vector<MatchRecord> trace;
  std::size_t unstable = 0, round_trip_failures = 0, disagreements = 0, at_equality = 0;
  std::string diff_csv = "x_id,h,formula_n,formula_d,machine_n,machine_d,equality_cell\n";
  for (std::size_t i = 0; i < o.samples; ++i) {
    const auto x = pair.x().sample_point(rng, o.sample_stage);
    std::optional<MatchRecord> mach, form;
    try {
      if (want_machine) mach = even_match_machine(pair, x, o.window, o.max_window);
    } catch (const WindowExhausted&) {
      ++unstable;
    }
    if (want_formula) form = even_match_formula(pair, x, kDefaultMaxWindow, boundary);
    if (mach) {
      trace.push_back(*mach);
      try {
        const auto inv = even_match_inverse(pair, mach->y, o.window, MatchMode::Machine, Boundary::Strict, o.max_window);
        if (!pair.x().same(inv.x, x) || inv.D != mach->d || inv.H != mach->h) ++round_trip_failures;
      } catch (const WindowExhausted&) {
        ++unstable;
      }
    }
    if (form) trace.push_back(*form);
    if (mach && form && (mach->n != form->n || mach->d != form->d)) {
      ++disagreements;
      at_equality += form->equality_cell;
      diff_csv += point_id(pair.x(), x) + "," + std::to_string(form->h) + "," + std::to_string(form->n) + "," +
                  std::to_string(form->d) + "," + std::to_string(mach->n) + "," + std::to_string(mach->d) + "," +
                  (form->equality_cell ? "1" : "0") + "\n";
    }
  }
  run.write(o.out, match_trace_csv(pair, trace));
  json verdicts = {{"pair", pair.name()},
                   {"mode", "even"},
                   {"samples", o.samples},
                   {"window", o.window},
                   {"max_window", o.max_window},
                   {"semantics", o.semantics},
                   {"unstable", unstable},
                   {"round_trip_failures", round_trip_failures}};
  if (o.semantics == "both") {
    verdicts["disagreements"] = {{"count", disagreements},
                                 {"at_equality_cells", at_equality},
                                 {"boundary", o.boundary},
                                 {"classification", disagreements == at_equality ? "boundary" : "unexplained"}};
    run.write("disagreements.csv", diff_csv);
  }
  run.write("verdicts.json", verdicts.dump(2) + "\n");
  std::cout << verdicts.dump(2) << "\n";
  const Rational limit = parse_rational(o.max_unstable);
  if (Rational(static_cast<std::int64_t>(unstable), static_cast<std::int64_t>(std::max<std::size_t>(o.samples, 1))) >
      limit)
    throw CliFailure(kUnstable, std::to_string(unstable) + " of " + std::to_string(o.samples) +
                                    " samples were unstable at window " + std::to_string(o.window));
  if (round_trip_failures) throw CliFailure(kChecksFailed, "round-trip failures: " + std::to_string(round_trip_failures));
  return kOk;
}

inline int cmd_match_noneven(const Globals& g, const MatchOpts& o, const PairSpec& pair, Run& run) {
  if (!(pair.mu_a() > pair.nu_b()))
    throw CliFailure(kInadmissible, "non-even mode needs mu(A) > nu(B), got " + pair.mu_a().str() + " and " +
                                        pair.nu_b().str());
  NonEvenOptions opt;
  opt.seed = g.seed;
  opt.margin_samples = o.samples;
  const Rational eps = parse_rational(o.eps);
  NonEvenPlan plan;
  try {
    plan = noneven_prepare(pair, eps, opt);
  } catch (const PreconditionError& e) {
    throw CliFailure(kInadmissible, e.what());
  }
  json pj = {{"pair", pair.name()},
             {"epsilon", plan.epsilon.str()},
             {"epsilon_bound", plan.epsilon_bound.str()},
             {"N1", plan.n1},
             {"N2", plan.n2},
             {"N", plan.n},
             {"cylinder_depth", plan.depth},
             {"period", plan.period},
             {"a_prime_relative_mass", plan.a_prime_relative_mass.str()},
             {"margin_samples", plan.margin_samples},
             {"min_margin", plan.min_margin},
             {"max_pile", plan.max_pile},
             {"max_pit", plan.max_pit},
             {"attempts", plan.attempts}};
  std::mt19937_64 rng(g.seed);
  std::string csv = "x_id,y_id\n";
  std::size_t conj_failures = 0, round_trip_failures = 0;
  for (std::size_t i = 0; i < o.samples; ++i) {
    const auto x = pair.x().sample_point(rng, o.sample_stage);
    const auto y = noneven_match(pair, plan, x);
    csv += point_id(pair.x(), x) + "," + point_id(pair.y(), y) + "\n";
    if (!pair.y().same(noneven_match(pair, plan, pair.x().step(x, 1)), image_induced_step(pair, plan, y))) ++conj_failures;
    if (!pair.x().same(noneven_inverse(pair, plan, y), x)) ++round_trip_failures;
  }
  pj["conjugacy_failures"] = conj_failures;
  pj["round_trip_failures"] = round_trip_failures;
  run.write(o.out, csv);
  run.write("plan.json", pj.dump(2) + "\n");
  std::cout << pj.dump(2) << "\n";
  if (conj_failures || round_trip_failures) throw CliFailure(kChecksFailed, "non-even conjugacy checks failed");
  return kOk;
}

inline int cmd_match(const Globals& g, const MatchOpts& o, Run& run) {
  run.config().update({{"mode", o.mode}, {"x", o.x}, {"y", o.y}, {"phi", o.phi}, {"samples", o.samples},
                       {"sample_stage", o.sample_stage}, {"window", o.window}, {"max_window", o.max_window}, {"semantics", o.semantics},
                       {"boundary", o.boundary}, {"max_unstable", o.max_unstable}, {"eps", o.eps}, {"out", o.out}});
  if (o.mode != "even" && o.mode != "noneven") throw PreconditionError("--mode must be even or noneven");
  const PairSpec pair = make_pair(o, g, run);
  return o.mode == "even" ? cmd_match_even(g, o, pair, run) : cmd_match_noneven(g, o, pair, run);
}

struct VerifyOpts {
  std::string suite = "default";
};

inline int cmd_verify(const Globals& g, const VerifyOpts& o, Run& run) {
  if (o.suite != "default") throw PreconditionError("unknown suite '" + o.suite + "' (available: default)");
  SuiteConfig cfg;
  cfg.name = o.suite;
  cfg.seed = g.seed;
  run.config().update({{"suite", cfg.to_json()}});
  const auto vs = run_suite(cfg);
  run.write("verdicts.jsonl", verdicts_jsonl(vs));
  const std::string table = summary_table(vs);
  run.write("summary.txt", table);
  std::cout << table;
  return all_pass(vs) ? kOk : kChecksFailed;
}

// ---------------------------------------------------------------------------

inline int exit_code_for(const std::exception& e) {
  if (auto* c = dynamic_cast<const CliFailure*>(&e)) return c->code;
  if (dynamic_cast<const ParseError*>(&e)) return kParse;
  if (dynamic_cast<const ValidationError*>(&e)) return kValidation;
  if (dynamic_cast<const WindowExhausted*>(&e)) return kUnstable;
  if (dynamic_cast<const NeedMoreDepth*>(&e) || dynamic_cast<const BudgetExhausted*>(&e) ||
      dynamic_cast<const HorizonExhausted*>(&e) || dynamic_cast<const NeedMoreDigits*>(&e) ||
      dynamic_cast<const ExhaustedDigits*>(&e))
    return kExhausted;
  if (dynamic_cast<const PreconditionError*>(&e) || dynamic_cast<const MarginViolation*>(&e)) return kPrecondition;
  if (dynamic_cast<const Error*>(&e)) return kPrecondition;
  return kInternal;
}

/// Parses argv, runs one command, writes the manifest. Returns the exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Rank-one systems, induced maps and Kakutani matchings", "kakutani"};
  app.set_version_flag("--version", KAKUTANI_VERSION);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every sampled quantity")->capture_default_str();
  app.add_option("--budget", g.budget, "Largest stage built for rank-one systems")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for outputs and manifest.json")->capture_default_str();

  BuildOpts bo;
  auto* build = app.add_subcommand("build", "Build tower stages of a spec and write the stage report");
  build->add_option("spec", bo.spec, "Spec file (.json or DSL) or builtin:NAME")->required();
  build->add_option("--stages", bo.stages, "Number of stages")->capture_default_str();
  build->add_option("--out", bo.out, "Report path")->capture_default_str();

  OrbitOpts oo;
  auto* orbit = app.add_subcommand("orbit", "Trace an orbit");
  orbit->add_option("system", oo.system, "Spec, builtin:NAME, od:[b1,...] or cf:[a0;(period)]")->required();
  orbit->add_option("--from", oo.from, "zero | random")->capture_default_str();
  orbit->add_option("--steps", oo.steps, "Steps")->capture_default_str();
  orbit->add_option("--out", oo.out, "Trace path")->capture_default_str();

  InduceOpts io;
  auto* induce = app.add_subcommand("induce", "Return-time histogram and skyscraper over a base");
  induce->add_option("system", io.system, "Spec, builtin:NAME or cf:[...]")->required();
  induce->add_option("--base", io.base, "Base as stage:level,level,...")->capture_default_str();
  induce->add_option("--stage", io.stage, "Working stage")->capture_default_str();
  induce->add_option("--levels", io.skyscraper_levels, "Skyscraper levels listed")->capture_default_str();

  ErgodicOpts eo;
  auto* ergodic = app.add_subcommand("ergodic", "Kac averages of the base return time");
  ergodic->add_option("system", eo.system, "Spec or builtin:NAME")->required();
  ergodic->add_option("--samples", eo.samples, "Seeded base samples")->capture_default_str();
  ergodic->add_option("--n", eo.ns, "Horizons")->capture_default_str();
  ergodic->add_option("--eps", eo.eps, "Flag deviations above this rational");
  ergodic->add_option("--estimate", eo.estimate, "Estimate N(eps) for this rational eps");
  ergodic->add_option("--horizon", eo.horizon, "Horizon for the N(eps) estimate")->capture_default_str();

  MatchOpts mo;
  auto* match = app.add_subcommand("match", "Even or non-even matching between two systems");
  match->add_option("--mode", mo.mode, "even | noneven")->capture_default_str();
  match->add_option("x", mo.x, "Source system")->required();
  match->add_option("y", mo.y, "Target system")->required();
  match->add_option("--phi", mo.phi, "identity | translate:K")->capture_default_str();
  match->add_option("--samples", mo.samples, "Seeded samples")->capture_default_str();
  match->add_option("--sample-stage", mo.sample_stage, "Stage whose stack the samples are drawn from")
      ->capture_default_str();
  match->add_option("--window", mo.window, "Initial machine window")->capture_default_str();
  match->add_option("--max-window", mo.max_window, "Largest window tried before a sample counts as unstable")
      ->capture_default_str();
  match->add_option("--semantics", mo.semantics, "formula | machine | both")->capture_default_str();
  match->add_option("--boundary", mo.boundary, "Formula boundary: nonstrict | strict")->capture_default_str();
  match->add_option("--max-unstable", mo.max_unstable, "Unstable fraction that fails the run")->capture_default_str();
  match->add_option("--eps", mo.eps, "Non-even ergodic tolerance")->capture_default_str();
  match->add_option("--out", mo.out, "Trace path")->capture_default_str();

  VerifyOpts vo;
  auto* verify = app.add_subcommand("verify", "Run the property suite");
  verify->add_option("--suite", vo.suite, "Suite name")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  std::vector<std::string> args(argv, argv + argc);
  CLI::App* sub = app.get_subcommands().front();
  Run r(sub->get_name(), args, g.out_dir);
  r.config().update({{"seed", g.seed}, {"budget", g.budget}, {"out_dir", g.out_dir}});
  int code = kOk;
  std::string error;
  try {
    if (sub == build) code = cmd_build(g, bo, r);
    else if (sub == orbit) code = cmd_orbit(g, oo, r);
    else if (sub == induce) code = cmd_induce(g, io, r);
    else if (sub == ergodic) code = cmd_ergodic(g, eo, r);
    else if (sub == match) code = cmd_match(g, mo, r);
    else code = cmd_verify(g, vo, r);
  } catch (const std::exception& e) {
    code = exit_code_for(e);
    error = e.what();
    std::cerr << "error: " << error << "\n";
  }
  try {
    r.write_manifest(code, error);
  } catch (const std::exception& e) {
    std::cerr << "error: manifest: " << e.what() << "\n";
    if (code == kOk) code = kIo;
  }
  return code;
}

}  // namespace kakutani::cli
