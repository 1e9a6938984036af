// Experiment runner: every library module behind one reproducible command.
// Outputs are written atomically and depend only on (config, seed), never on
// the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nsflow/bounds.hpp"
#include "nsflow/chaos.hpp"
#include "nsflow/counterexample.hpp"
#include "nsflow/errors.hpp"
#include "nsflow/influence.hpp"
#include "nsflow/io.hpp"
#include "nsflow/law.hpp"
#include "nsflow/noise.hpp"
#include "nsflow/polymer.hpp"
#include "nsflow/rng.hpp"
#include "nsflow/space.hpp"
#include "nsflow/tribes.hpp"

using namespace nsflow;
using njson = nlohmann::json;

namespace {

// exit 4: a checked inequality failed on a concrete function
struct PropertyViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr uint64_t kDomBoundVals = 0x626e6476616c7331ull;  // "bndvals1"
constexpr uint64_t kDomBoundLaws = 0x626e646c61777331ull;  // "bndlaws1"

struct GlobalOpts {
  uint64_t seed = 2026;
  unsigned workers = 1;
  std::string out;
  std::string format = "csv";
};

int fail_json(const std::string& type, const std::string& message, int code) {
  njson err{{"error", {{"type", type}, {"message", message}, {"exit", code}}}};
  std::fprintf(stderr, "%s\n", err.dump().c_str());
  return code;
}

// result body + manifest, both atomic; manifest records the full resolved
// config so a run can be reproduced from its outputs alone
void emit(const GlobalOpts& g, const std::string& subcommand, const Table& t,
          const njson& params) {
  if (g.out.empty())
    throw OutOfRange("--out is required (result files are the only output)");
  const std::string body = g.format == "json" ? to_json(t) : to_csv(t);
  atomic_write_file(g.out, body);
  njson manifest{{"tool", "nsflow"},       {"version", kToolVersion},
                 {"subcommand", subcommand}, {"seed", g.seed},
                 {"workers", g.workers},   {"format", g.format},
                 {"out", g.out},           {"params", params}};
  atomic_write_file(g.out + ".manifest.json", manifest.dump(2) + "\n");
}

std::string fmt(double v) { return format_double(v); }

// ---- fixtures ----------------------------------------------------------

TabulatedFunction make_fixture(const std::string& name, uint64_t n) {
  auto majority = [](size_t m) {
    auto space = rademacher_space(m);
    return tabulate(space, [space](const Config& c) {
      double s = 0.0;
      for (size_t k = 0; k < c.idx.size(); ++k)
        s += space->law(k).atom(c.idx[k]);
      return s > 0.0 ? 1.0 : -1.0;
    });
  };
  if (name == "maj3") return majority(3);
  if (name == "maj5") return majority(5);
  if (name == "dict3") {
    auto space = rademacher_space(3);
    return tabulate(space, [space](const Config& c) {
      return space->law(0).atom(c.idx[0]);
    });
  }
  if (name == "parity") {
    if (n < 1 || n > 24) throw OutOfRange("parity needs 1 <= n <= 24");
    auto space = rademacher_space((size_t)n);
    return tabulate(space, [space](const Config& c) {
      double p = 1.0;
      for (size_t k = 0; k < c.idx.size(); ++k)
        p *= space->law(k).atom(c.idx[k]);
      return p;
    });
  }
  if (name == "and3") {
    auto space = rademacher_space(3);
    return tabulate(space, [space](const Config& c) {
      for (size_t k = 0; k < c.idx.size(); ++k)
        if (space->law(k).atom(c.idx[k]) < 0.0) return 0.0;
      return 1.0;
    });
  }
  if (name == "cx5") return counterexample_function(5);
  throw OutOfRange("unknown fixture: " + name +
                   " (expected maj3, maj5, dict3, parity, and3, cx5)");
}

// ---- option parsing helpers --------------------------------------------

FiniteLaw parse_law(const std::string& s) {
  if (s == "rademacher") return rademacher_law();
  if (s == "three_point") {
    const double r = std::sqrt(2.0);
    return make_finite_law({-r, 0.0, r}, {0.25, 0.5, 0.25});
  }
  auto colon = s.find(':');
  if (colon != std::string::npos) {
    const std::string kind = s.substr(0, colon);
    const std::string arg = s.substr(colon + 1);
    try {
      if (kind == "biased") return biased_pm1_law(std::stod(arg));
      if (kind == "uniform") return uniform_law((size_t)std::stoul(arg));
    } catch (const std::logic_error&) {
      throw OutOfRange("bad law argument: " + s);
    }
  }
  throw OutOfRange("unknown law: " + s +
                   " (expected rademacher, three_point, biased:p, uniform:k)");
}

// "a,b,c" as explicit sizes or "1e3:1e5" as decade steps from a to b
std::vector<uint64_t> parse_t_grid(const std::string& s) {
  std::vector<uint64_t> grid;
  auto colon = s.find(':');
  try {
    if (colon != std::string::npos) {
      const double lo = std::stod(s.substr(0, colon));
      const double hi = std::stod(s.substr(colon + 1));
      if (!(lo >= 2.0 && hi >= lo && hi <= 1e15))
        throw OutOfRange("t grid must satisfy 2 <= lo <= hi <= 1e15");
      for (double t = lo; t <= hi * (1.0 + 1e-12); t *= 10.0)
        grid.push_back((uint64_t)std::llround(t));
      return grid;
    }
    size_t pos = 0;
    while (pos < s.size()) {
      auto next = s.find(',', pos);
      if (next == std::string::npos) next = s.size();
      grid.push_back((uint64_t)std::stoull(s.substr(pos, next - pos)));
      pos = next + 1;
    }
  } catch (const std::logic_error&) {
    throw OutOfRange("bad t grid: " + s);
  }
  if (grid.empty()) throw OutOfRange("empty t grid");
  return grid;
}

BoundMode parse_mode(const std::string& s) {
  if (s == "general") return BoundMode::general;
  if (s == "refined") return BoundMode::refined;
  if (s == "optimal") return BoundMode::optimal;
  if (s == "k_power") return BoundMode::k_power;
  if (s == "key_bound") return BoundMode::key_bound;
  if (s == "kk_original") return BoundMode::kk_original;
  if (s == "vh") return BoundMode::vh;
  throw OutOfRange("unknown bound mode: " + s);
}

TestFunction2D profile_by_name(const std::string& s) {
  if (s == "box")
    return {[](double x, double y) {
              return std::max(std::fabs(x), std::fabs(y)) <= 1.0 ? 1.0 : 0.0;
            },
            1.0};
  if (s == "cone")
    return {[](double x, double y) {
              return std::max(0.0,
                              1.0 - std::max(std::fabs(x), std::fabs(y)));
            },
            1.0};
  throw OutOfRange("unknown profile: " + s + " (expected box, cone)");
}

SpaceTimeFunction rho_by_name(const std::string& s) {
  if (s == "box")
    return {[](double, double x, double y) {
              return std::max(std::fabs(x), std::fabs(y)) <= 1.0 ? 1.0 : 0.0;
            },
            1.0};
  if (s == "cone")
    return {[](double t, double x, double y) {
              return (1.0 - t) *
                     std::max(0.0, 1.0 - std::max(std::fabs(x), std::fabs(y)));
            },
            1.0};
  throw OutOfRange("unknown profile: " + s + " (expected box, cone)");
}

// ---- bounds-check function generator ------------------------------------

SpacePtr bound_space(const std::string& family, unsigned n, uint64_t seed,
                     uint64_t idx) {
  if (family != "mixed") return rademacher_space(n);
  RngStream ls(seed, idx, kDomBoundLaws);
  std::vector<FiniteLaw> laws;
  laws.reserve(n);
  for (unsigned k = 0; k < n; ++k) {
    const uint32_t size = 2 + (uint32_t)(ls.next_u64() % 3);
    std::vector<double> atoms;
    for (uint32_t j = 0; j < size; ++j)
      atoms.push_back(-1.0 + 2.0 * j / (size - 1.0));
    std::vector<double> probs;
    double tot = 0.0;
    for (uint32_t j = 0; j < size; ++j) {
      probs.push_back(1.0 + double(ls.next_u64() >> 40));
      tot += probs.back();
    }
    for (auto& p : probs) p /= tot;
    laws.push_back(make_finite_law(std::move(atoms), std::move(probs)));
  }
  return product_space(std::move(laws));
}

TabulatedFunction random_function(const std::string& family, unsigned n,
                                  uint64_t seed, uint64_t idx) {
  auto space = bound_space(family, n, seed, idx);
  RngStream vs(seed, idx, kDomBoundVals);
  const uint64_t count = space->config_count();
  TabulatedFunction f{space, std::vector<double>((size_t)count, 0.0)};
  for (;;) {
    for (auto& v : f.values) {
      if (family == "boolean") {
        v = double(vs.next_u64() >> 63);
      } else if (family == "pm1") {
        v = (vs.next_u64() >> 63) ? 1.0 : -1.0;
      } else {
        v = 2.0 * vs.next_unit() - 1.0;
      }
    }
    // constant tables carry no variance; keep drawing on the same stream
    auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
    if (*lo != *hi) break;
  }
  return f;
}

// ---- subcommands ---------------------------------------------------------

void run_decompose(const GlobalOpts& g, const std::string& fixture,
                   uint64_t n) {
  auto f = make_fixture(fixture, n);
  auto spec = variance_spectrum(f);
  Table t{{"degree", "norm_sq"}, {}};
  for (size_t d = 0; d < spec.norms_sq.size(); ++d)
    t.add_row({format_u64(d), fmt(spec.norms_sq[d])});
  emit(g, "decompose", t, njson{{"fixture", fixture}, {"n", n}});
}

void run_influence(const GlobalOpts& g, const std::string& fixture,
                   uint64_t n) {
  auto f = make_fixture(fixture, n);
  auto prof = influence_profile(f);
  Table t{{"coord", "inf1", "inf2", "flip"}, {}};
  for (size_t k = 0; k < prof.inf1.size(); ++k) {
    std::string flip =
        prof.classical ? fmt((*prof.classical)[k]) : std::string();
    t.add_row({format_u64(k), fmt(prof.inf1[k]), fmt(prof.inf2[k]),
               std::move(flip)});
  }
  emit(g, "influence", t, njson{{"fixture", fixture}, {"n", n}});
}

void run_noise_cov(const GlobalOpts& g, const std::string& fixture,
                   uint64_t n, const std::vector<double>& eps,
                   uint64_t samples) {
  auto f = make_fixture(fixture, n);
  auto rows = noise_sweep(f, eps, samples, g.seed, g.workers);
  Table t{{"epsilon", "cov_exact", "cov_mc", "se"}, {}};
  for (const auto& r : rows)
    t.add_row({fmt(r.epsilon), fmt(r.cov_exact), fmt(r.cov_mc), fmt(r.se)});
  emit(g, "noise-cov", t,
       njson{{"fixture", fixture},
             {"n", n},
             {"eps", eps},
             {"samples", samples}});
}

void run_bounds_check(const GlobalOpts& g, const std::string& family,
                      unsigned funcs, unsigned n, double eps, double q,
                      const std::vector<std::string>& modes, int k_param) {
  if (funcs < 1) throw OutOfRange("need at least one function");
  if (n < 1 || n > 12) throw OutOfRange("need 1 <= n <= 12 coordinates");
  if (family != "boolean" && family != "pm1" && family != "real" &&
      family != "mixed")
    throw OutOfRange("unknown family: " + family);

  Table t{{"func", "mode", "epsilon", "q", "lhs", "rhs", "holds"}, {}};
  uint64_t violations = 0;
  for (uint64_t i = 0; i < funcs; ++i) {
    auto f = random_function(family, n, g.seed, i);
    auto profile = space_profile(*f.space, q);
    for (const auto& mode_name : modes) {
      const BoundMode mode = parse_mode(mode_name);
      BoundReport rep = mode == BoundMode::key_bound
                            ? check_key_bound(f, (size_t)std::max(1, k_param),
                                              profile)
                            : check_bound(f, eps, mode, profile, k_param);
      if (!rep.holds) ++violations;
      t.add_row({format_u64(i), mode_name, fmt(rep.epsilon), fmt(rep.q),
                 fmt(rep.lhs), fmt(rep.rhs), rep.holds ? "1" : "0"});
    }
  }
  emit(g, "bounds-check", t,
       njson{{"family", family},
             {"funcs", funcs},
             {"n", n},
             {"eps", eps},
             {"q", q},
             {"modes", modes},
             {"k", k_param}});
  if (violations > 0)
    throw PropertyViolation(format_u64(violations) +
                            " bound checks failed; see " + g.out);
}

void run_hyper(const GlobalOpts& g, const std::vector<std::string>& law_names,
               const std::vector<double>& qs) {
  Table t{{"law", "q", "m_q", "eta_q", "eta_lower", "eta_upper"}, {}};
  for (const auto& name : law_names) {
    const FiniteLaw law = parse_law(name);
    for (double q : qs) {
      auto prof = eta_q_estimate(law, q);
      t.add_row({name, fmt(prof.q), fmt(prof.m_q), fmt(prof.eta_q),
                 fmt(prof.eta_lower), fmt(prof.eta_upper)});
    }
  }
  emit(g, "hyper", t, njson{{"laws", law_names}, {"q", qs}});
}

void run_tribes(const GlobalOpts& g, double gamma, double eps,
                const std::string& t_grid) {
  auto grid = parse_t_grid(t_grid);
  auto rows = sharp_ratio_report(gamma, eps, grid);
  Table t{{"t", "a_t", "p_t", "m", "r_t", "q_eps", "cov", "var", "w_inf1",
           "w_classical", "lhs_ratio", "rhs_ratio", "ratio", "cond1_ratio",
           "p_over_q"},
          {}};
  for (const auto& r : rows)
    t.add_row({format_u64(r.t), format_i64(r.a_t), fmt(r.p_t), fmt(r.m_t),
               fmt(r.r_t), fmt(r.q_eps), fmt(r.cov_exact), fmt(r.var_exact),
               fmt(r.w_inf1), fmt(r.w_classical), fmt(r.lhs_ratio),
               fmt(r.rhs_ratio), fmt(r.ratio), fmt(r.cond1_ratio),
               fmt(r.p_over_q)});
  emit(g, "tribes", t,
       njson{{"gamma", gamma}, {"eps", eps}, {"t_grid", t_grid}});
}

void run_polymer(const GlobalOpts& g, uint64_t length, double theta,
                 double eps, uint64_t samples, const std::string& law_name) {
  const FiniteLaw law = parse_law(law_name);
  // MC-facing truncation: box tail far below the Monte Carlo noise floor
  auto params = make_polymer_params(length, theta, law, 1e-6);
  std::vector<ZSpec> specs{{profile_by_name("box"), profile_by_name("box")}};
  auto res =
      mc_polymer_noise_cov(params, specs, eps, samples, g.seed, g.workers);
  Table t{{"length", "theta", "epsilon", "samples", "cov", "se"}, {}};
  t.add_row({format_u64(length), fmt(theta), fmt(eps),
             format_u64(res.samples), fmt(res.value), fmt(res.std_error)});
  emit(g, "polymer", t,
       njson{{"N", length},
             {"theta", theta},
             {"eps", eps},
             {"samples", samples},
             {"law", law_name}});
}

void run_shf_independence(const GlobalOpts& g,
                          const std::vector<uint64_t>& lengths, double theta,
                          uint64_t max_degree, uint64_t samples,
                          const std::string& law_name,
                          const std::string& rho_name,
                          const std::string& phi_name) {
  const FiniteLaw law = parse_law(law_name);
  std::function<double(double)> phi;
  if (phi_name == "tanh") {
    phi = [](double u) { return std::tanh(u); };
  } else if (phi_name == "linear") {
    phi = [](double u) { return u; };
  } else {
    throw OutOfRange("unknown phi: " + phi_name + " (expected tanh, linear)");
  }
  auto report = independence_diagnostic(
      lengths, theta, law, profile_by_name("box"), profile_by_name("box"),
      {rho_by_name(rho_name)}, max_degree, phi, samples, g.seed, g.workers);
  Table t{{"length", "monomial", "cov", "se", "decoupled"}, {}};
  const std::string dec = report.decoupled ? "1" : "0";
  for (const auto& r : report.rows) {
    std::string mono;
    for (size_t i = 0; i < r.exponents.size(); ++i) {
      if (i) mono += ';';
      mono += format_u64(r.exponents[i]);
    }
    t.add_row({format_u64(r.length), std::move(mono), fmt(r.cov),
               fmt(r.std_error), dec});
  }
  emit(g, "shf-independence", t,
       njson{{"lengths", lengths},
             {"theta", theta},
             {"max_degree", max_degree},
             {"samples", samples},
             {"law", law_name},
             {"rho", rho_name},
             {"phi", phi_name}});
}

void run_counterexample(const GlobalOpts& g,
                        const std::vector<uint64_t>& sizes, double eps,
                        double q) {
  auto rows = counterexample_demo(sizes, eps, q);
  Table t{{"n", "variance", "cov", "cov_ratio", "inf1", "w_total", "w_bound",
           "mq_lower", "mq_rate"},
          {}};
  for (const auto& r : rows)
    t.add_row({format_u64(r.n_coords), fmt(r.variance), fmt(r.cov),
               fmt(r.cov_ratio), fmt(r.inf1), fmt(r.w_total), fmt(r.w_bound),
               fmt(r.mq_lower), fmt(r.mq_rate)});
  emit(g, "counterexample", t, njson{{"sizes", sizes}, {"eps", eps}, {"q", q}});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noise sensitivity toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("nsflow ") + kToolVersion);
  app.set_config("--config", "", "read option defaults from an INI file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "master seed for every random stream")
      ->capture_default_str();
  app.add_option("--workers", g.workers, "worker threads for MC estimators")
      ->check(CLI::Range(1u, 64u))
      ->capture_default_str();
  app.add_option("--out", g.out, "result file path (manifest lands beside it)");
  app.add_option("--format", g.format, "result body format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->capture_default_str();

  {
    auto* sc = app.add_subcommand("decompose",
                                  "chaos spectrum of a bundled fixture");
    sc->fallthrough();
    auto fixture = std::make_shared<std::string>("maj3");
    auto n = std::make_shared<uint64_t>(4);
    sc->add_option("--fixture", *fixture,
                   "maj3, maj5, dict3, parity, and3, cx5")
        ->capture_default_str();
    sc->add_option("--n", *n, "coordinate count for the parity fixture")
        ->capture_default_str();
    sc->callback([&g, fixture, n] { run_decompose(g, *fixture, *n); });
  }

  {
    auto* sc = app.add_subcommand("influence",
                                  "influence profile of a bundled fixture");
    sc->fallthrough();
    auto fixture = std::make_shared<std::string>("maj3");
    auto n = std::make_shared<uint64_t>(4);
    sc->add_option("--fixture", *fixture,
                   "maj3, maj5, dict3, parity, and3, cx5")
        ->capture_default_str();
    sc->add_option("--n", *n, "coordinate count for the parity fixture")
        ->capture_default_str();
    sc->callback([&g, fixture, n] { run_influence(g, *fixture, *n); });
  }

  {
    auto* sc = app.add_subcommand(
        "noise-cov", "exact and Monte Carlo noise covariance sweep");
    sc->fallthrough();
    auto fixture = std::make_shared<std::string>("maj3");
    auto n = std::make_shared<uint64_t>(4);
    auto eps = std::make_shared<std::vector<double>>(
        std::vector<double>{0.1, 0.3, 0.5});
    auto samples = std::make_shared<uint64_t>(10000);
    sc->add_option("--fixture", *fixture,
                   "maj3, maj5, dict3, parity, and3, cx5")
        ->capture_default_str();
    sc->add_option("--n", *n, "coordinate count for the parity fixture")
        ->capture_default_str();
    sc->add_option("--eps", *eps, "resample probabilities")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_option("--samples", *samples, "Monte Carlo sample pairs")
        ->capture_default_str();
    sc->callback([&g, fixture, n, eps, samples] {
      run_noise_cov(g, *fixture, *n, *eps, *samples);
    });
  }

  {
    auto* sc = app.add_subcommand(
        "bounds-check",
        "noise-sensitivity bounds on random functions; any failure exits 4");
    sc->fallthrough();
    auto family = std::make_shared<std::string>("boolean");
    auto funcs = std::make_shared<unsigned>(100);
    auto n = std::make_shared<unsigned>(3);
    auto eps = std::make_shared<double>(0.3);
    auto q = std::make_shared<double>(4.0);
    auto modes = std::make_shared<std::vector<std::string>>(
        std::vector<std::string>{"general", "refined", "optimal", "k_power"});
    auto k_param = std::make_shared<int>(2);
    sc->add_option("--family", *family, "boolean, pm1, real, mixed")
        ->capture_default_str();
    sc->add_option("--funcs", *funcs, "random functions to draw")
        ->capture_default_str();
    sc->add_option("--n", *n, "coordinates per function")
        ->capture_default_str();
    sc->add_option("--eps", *eps, "resample probability")
        ->capture_default_str();
    sc->add_option("--q", *q, "moment order for the hyper profile")
        ->capture_default_str();
    sc->add_option("--modes", *modes,
                   "general, refined, optimal, k_power, key_bound, "
                   "kk_original, vh")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_option("--k", *k_param, "K for k_power, degree for key_bound")
        ->capture_default_str();
    sc->callback([&g, family, funcs, n, eps, q, modes, k_param] {
      run_bounds_check(g, *family, *funcs, *n, *eps, *q, *modes, *k_param);
    });
  }

  {
    auto* sc = app.add_subcommand(
        "hyper", "hypercontractivity constants for finite laws");
    sc->fallthrough();
    auto laws = std::make_shared<std::vector<std::string>>(
        std::vector<std::string>{"rademacher"});
    auto qs =
        std::make_shared<std::vector<double>>(std::vector<double>{3, 4, 6});
    sc->add_option("--law", *laws,
                   "rademacher, three_point, biased:p, uniform:k")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_option("--q", *qs, "moment orders, each > 2")
        ->delimiter(',')
        ->capture_default_str();
    sc->callback([&g, laws, qs] { run_hyper(g, *laws, *qs); });
  }

  {
    auto* sc = app.add_subcommand(
        "tribes", "sharpness sweep for the modified tribes family");
    sc->fallthrough();
    auto gamma = std::make_shared<double>(0.25);
    auto eps = std::make_shared<double>(0.3);
    auto t_grid = std::make_shared<std::string>("1e3:1e5");
    sc->add_option("--gamma", *gamma, "target growth exponent in (0, 1/2)")
        ->capture_default_str();
    sc->add_option("--eps", *eps, "resample probability")
        ->capture_default_str();
    sc->add_option("--t-grid", *t_grid,
                   "block sizes: lo:hi for decade steps, or a,b,c")
        ->capture_default_str();
    sc->callback([&g, gamma, eps, t_grid] {
      run_tribes(g, *gamma, *eps, *t_grid);
    });
  }

  {
    auto* sc = app.add_subcommand(
        "polymer", "Monte Carlo noise covariance of the polymer partition sum");
    sc->fallthrough();
    auto length = std::make_shared<uint64_t>(256);
    auto theta = std::make_shared<double>(0.0);
    auto eps = std::make_shared<double>(0.5);
    auto samples = std::make_shared<uint64_t>(20000);
    auto law = std::make_shared<std::string>("rademacher");
    sc->add_option("--N", *length, "polymer length")->capture_default_str();
    sc->add_option("--theta", *theta, "inverse-temperature offset")
        ->capture_default_str();
    sc->add_option("--eps", *eps, "resample probability")
        ->capture_default_str();
    sc->add_option("--samples", *samples, "replicate pairs")
        ->capture_default_str();
    sc->add_option("--law", *law, "disorder law")->capture_default_str();
    sc->callback([&g, length, theta, eps, samples, law] {
      run_polymer(g, *length, *theta, *eps, *samples, *law);
    });
  }

  {
    auto* sc = app.add_subcommand(
        "shf-independence",
        "joint decorrelation of the partition field and smoothed noise");
    sc->fallthrough();
    auto lengths = std::make_shared<std::vector<uint64_t>>(
        std::vector<uint64_t>{64, 128});
    auto theta = std::make_shared<double>(0.0);
    auto max_degree = std::make_shared<uint64_t>(2);
    auto samples = std::make_shared<uint64_t>(2000);
    auto law = std::make_shared<std::string>("rademacher");
    auto rho = std::make_shared<std::string>("cone");
    auto phi = std::make_shared<std::string>("tanh");
    sc->add_option("--lengths", *lengths, "polymer lengths, ascending")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_option("--theta", *theta, "inverse-temperature offset")
        ->capture_default_str();
    sc->add_option("--max-degree", *max_degree, "monomial degree cap (<= 6)")
        ->capture_default_str();
    sc->add_option("--samples", *samples, "replicates per length")
        ->capture_default_str();
    sc->add_option("--law", *law, "disorder law")->capture_default_str();
    sc->add_option("--rho", *rho, "noise smoothing profile: box, cone")
        ->capture_default_str();
    sc->add_option("--phi", *phi, "partition squashing: tanh, linear")
        ->capture_default_str();
    sc->callback([&g, lengths, theta, max_degree, samples, law, rho, phi] {
      run_shf_independence(g, *lengths, *theta, *max_degree, *samples, *law,
                           *rho, *phi);
    });
  }

  {
    auto* sc = app.add_subcommand(
        "counterexample",
        "counting family with vanishing influence weight yet no sensitivity");
    sc->fallthrough();
    auto sizes = std::make_shared<std::vector<uint64_t>>(
        std::vector<uint64_t>{100, 1000, 10000});
    auto eps = std::make_shared<double>(0.5);
    auto q = std::make_shared<double>(4.0);
    sc->add_option("--sizes", *sizes, "coordinate counts")
        ->delimiter(',')
        ->capture_default_str();
    sc->add_option("--eps", *eps, "resample probability")
        ->capture_default_str();
    sc->add_option("--q", *q, "moment order for the blow-up rate")
        ->capture_default_str();
    sc->callback([&g, sizes, eps, q] {
      run_counterexample(g, *sizes, *eps, *q);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help, --version
    return fail_json("ConfigError", e.what(), 2);
  } catch (const PropertyViolation& e) {
    return fail_json("PropertyViolation", e.what(), 4);
  } catch (const CapExceeded& e) {
    return fail_json("CapExceeded", e.what(), 3);
  }
#define NSFLOW_FAIL2(T) \
  catch (const T& e) { return fail_json(#T, e.what(), 2); }
  NSFLOW_FAIL2(NonNormalized)
  NSFLOW_FAIL2(DuplicateAtom)
  NSFLOW_FAIL2(NegativeProb)
  NSFLOW_FAIL2(CoordinateOutOfRange)
  NSFLOW_FAIL2(DimensionMismatch)
  NSFLOW_FAIL2(DegenerateLaw)
  NSFLOW_FAIL2(ZeroVariance)
  NSFLOW_FAIL2(NoAdmissibleQ)
  NSFLOW_FAIL2(OutOfRange)
  NSFLOW_FAIL2(NoRoot)
  NSFLOW_FAIL2(SupportEscape)
  NSFLOW_FAIL2(SignedTestFunction)
  NSFLOW_FAIL2(IoError)
#undef NSFLOW_FAIL2
  catch (const std::exception& e) {
    return fail_json("InternalError", e.what(), 1);
  }
  return 0;
}
