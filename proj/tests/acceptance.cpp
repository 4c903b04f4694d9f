// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. `--only N[,M...]` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lagscope/autodiff/ops.hpp"
#include "lagscope/discovery.hpp"
#include "lagscope/gradcheck_suite.hpp"
#include "lagscope/lbm.hpp"
#include "lagscope/models/train.hpp"
#include "lagscope/synth.hpp"
#ifdef LAGSCOPE_HAVE_CLI
#include "lagscope_cli/cli.hpp"
#endif

using namespace lagscope;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 -------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckSuiteOptions opt;
  opt.points = 100;
  const auto cases = run_gradcheck_suite(opt);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  std::size_t min_probes = ~std::size_t{0};
  for (const auto& c : cases) {
    if (c.result.max_relative_error >= worst) {
      worst = c.result.max_relative_error;
      worst_name = c.name;
    }
    min_probes = std::min(min_probes, c.result.probes);
  }
  const bool ok = worst < 1e-5 && min_probes >= 100 && elapsed < 120.0;
  return {ok, fmt("%zu cases, max rel err %.3g (%s), min probes %zu, %.1fs", cases.size(), worst, worst_name.c_str(),
                  min_probes, elapsed)};
}

// ---- 2 -------------------------------------------------------------------

Outcome conv_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  const int trials = 2000;
  for (int trial = 0; trial < trials; ++trial) {
    const std::size_t L = 1 + rng() % 64, k = 1 + rng() % 8, d = 1 + rng() % 16;
    const std::size_t B = 1 + rng() % 2, C = 1 + rng() % 3, O = 1 + rng() % 3;
    ad::Tensor x({B, C, L}), w({O, C, k}), b({O});
    for (double& v : x.values()) v = u(rng);
    for (double& v : w.values()) v = u(rng);
    for (double& v : b.values()) v = u(rng);
    ad::Tape tape;
    const ad::Tensor y = ad::conv1d_dilated_causal(tape.constant(x), tape.constant(w), tape.constant(b), d).value();
    for (std::size_t bi = 0; bi < B; ++bi)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t s = 0; s < L; ++s) {
          // F(s) = sum_i f(i) x_{s - d i}, summed over input channels.
          double f = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              if (s >= d * i) f += w[(o * C + c) * k + i] * x[(bi * C + c) * L + s - d * i];
          worst = std::max(worst, std::fabs(f - y[(bi * O + o) * L + s]));
        }
  }
  return {worst <= 1e-12, fmt("%d random configurations, max abs deviation %.3g", trials, worst)};
}

// ---- 3, 5 ----------------------------------------------------------------

// x0_t = 0.8 x1_{t - lag} + 0.01 eps, x1 white noise.
GroundTruthGraph single_edge_graph(std::size_t lag) {
  GroundTruthGraph g;
  g.kind = GraphKind::linear_custom;
  g.n_vars = 2;
  g.noise_scale = {0.01, 1.0};
  g.edges = {{0, 1, 0.8, lag}};
  return g;
}

// Model budget shared by the single-edge tasks: 10 epochs at batch 32, LBM
// with 200 mask steps over mini-batches of 256 test windows.
DiscoveryConfig single_edge_config(models::ModelKind kind, std::uint64_t seed) {
  DiscoveryConfig c;
  c.model.kind = kind;
  c.model.window = 64;
  c.train.epochs = 10;
  c.train.batch_size = 32;
  c.lbm = lbm_preset("linear");
  c.lbm.steps = 200;
  c.lbm.batch_size = 256;
  c.depth_limit = 1;
  c.seed = seed;
  return c;
}

struct EdgeRun {
  EdgeScore score;
  std::string lags;
  double test_mse = 0.0;
};

EdgeRun run_single_edge(std::size_t lag, models::ModelKind kind, std::uint64_t seed) {
  const auto g = single_edge_graph(lag);
  const auto series = simulate_linear(g, 10000, seed);
  const auto graph = discover(series, 0, single_edge_config(kind, seed));
  const auto deps = graph.dependencies(0);
  EdgeRun r;
  r.score = score_edges(deps, g.edges_into(0), {2});
  r.test_mse = graph.nodes[0].test_mse;
  for (const auto& d : deps) {
    r.lags += "x" + std::to_string(d.source) + "{";
    for (std::size_t i = 0; i < d.lags.size(); ++i) r.lags += (i ? "," : "") + std::to_string(d.lags[i]);
    r.lags += "}";
  }
  if (r.lags.empty()) r.lags = "none";
  return r;
}

Outcome single_edge_recovery() {
  int good = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const EdgeRun r = run_single_edge(5, models::ModelKind::tcn, seed);
    const bool ok = r.score.precision == 1.0 && r.score.recall == 1.0;
    good += ok;
    detail += fmt("seed %llu P=%.3g R=%.3g %s (%.0fs); ", static_cast<unsigned long long>(seed), r.score.precision,
                  r.score.recall, r.lags.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return {good >= 2, detail + fmt("%d/3 exact", good)};
}

Outcome rnn_tcn_gap() {
  int good = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const EdgeRun tcn = run_single_edge(50, models::ModelKind::tcn, seed);
    const EdgeRun lstm = run_single_edge(50, models::ModelKind::lstm, seed);
    const EdgeRun gru = run_single_edge(50, models::ModelKind::gru, seed);
    const bool ok = tcn.score.recall == 1.0 && lstm.score.recall == 0.0 && gru.score.recall == 0.0;
    good += ok;
    detail += fmt("seed %llu R tcn/lstm/gru %.3g/%.3g/%.3g; ", static_cast<unsigned long long>(seed),
                  tcn.score.recall, lstm.score.recall, gru.score.recall);
  }
  return {good >= 2, detail + fmt("%d/3 show the gap", good)};
}

// ---- 4 -------------------------------------------------------------------

Outcome nonlinear_x2() {
  const auto truth = nonlinear_ground_truth();
  double best_p = 0.0, best_r = 0.0;
  bool pass = false;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto sc = simulate_nonlinear(30000, seed);
    DiscoveryConfig c;
    c.model.kind = models::ModelKind::tcn;
    c.model.window = 128;
    c.train.epochs = 10;
    c.train.batch_size = 32;
    c.lbm = lbm_preset("nonlinear");
    c.lbm.steps = 200;
    c.lbm.batch_size = 256;
    c.depth_limit = 1;
    c.seed = seed;
    const auto graph = discover(sc.series, 2, c);
    const auto s = score_edges(graph.dependencies(2), truth.edges_into(2), {5});
    detail += fmt("seed %llu P=%.3g R=%.3g units=%zu mse=%.3g (%.0fs); ", static_cast<unsigned long long>(seed),
                  s.precision, s.recall, s.predicted_units, graph.nodes[2].test_mse, seconds_since(t0));
    if (s.precision >= 0.75 && s.recall >= 0.5) pass = true;
    if (s.precision + s.recall > best_p + best_r) {
      best_p = s.precision;
      best_r = s.recall;
    }
  }
  return {pass, detail + fmt("best P=%.3g R=%.3g", best_p, best_r)};
}

// ---- 6 -------------------------------------------------------------------

bool same_series(const MultivariateSeries& a, const MultivariateSeries& b) {
  return a.length() == b.length() && a.n_vars() == b.n_vars() &&
         std::memcmp(a.values().data(), b.values().data(), a.values().size_bytes()) == 0;
}

Outcome generators() {
  std::size_t range_violations = 0, edges = 0;
  double worst_residual = 0.0;
  SimulationOptions quiet;
  quiet.recursion_noise = false;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto g = sample_linear_system(seed);
    if (g.n_vars < 5 || g.n_vars > 15) ++range_violations;
    for (const auto& e : g.edges) {
      ++edges;
      if (std::fabs(e.alpha) > 0.4 || e.lag < 1 || e.lag > 250) ++range_violations;
    }
    const auto c = generate_linear_case(seed, 600, quiet);
    for (std::size_t t = c.graph.max_lag(); t < c.series.length(); ++t)
      for (std::size_t i = 0; i < c.graph.n_vars; ++i) {
        double f = 0.0;
        for (const auto& e : c.graph.edges_into(i)) f += e.alpha * c.series(t - e.lag, e.source);
        worst_residual = std::max(worst_residual, std::fabs(c.series(t, i) - f));
      }
  }
  const auto nl = simulate_nonlinear(1000, 1, quiet).series;
  for (std::size_t t = 270; t < nl.length(); ++t) {
    const double f4 = nl(t - 80, 3) / (20.0 + nl(t - 40, 2));
    const double f2 = nl(t - 10, 0) * nl(t - 100, 1) + nl(t - 70, 0) * nl(t - 40, 1);
    worst_residual = std::max({worst_residual, std::fabs(nl(t, 4) - f4), std::fabs(nl(t, 2) - f2)});
  }

  std::size_t mismatched = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = generate_linear_case(seed, 2000), b = generate_linear_case(seed, 2000);
    if (graph_to_json(a.graph).dump() != graph_to_json(b.graph).dump() || !same_series(a.series, b.series))
      ++mismatched;
  }
  if (!same_series(simulate_nonlinear(5000, 7).series, simulate_nonlinear(5000, 7).series)) ++mismatched;

  const bool ok = range_violations == 0 && worst_residual <= 1e-12 && mismatched == 0;
  return {ok, fmt("1000 systems, %zu edges, %zu range violations, max residual %.3g, %zu seed mismatches", edges,
                  range_violations, worst_residual, mismatched)};
}

// ---- 7 -------------------------------------------------------------------

Outcome scoring() {
  std::vector<GroundTruthEdge> truth;
  for (std::size_t j = 0; j < 8; ++j) truth.push_back({0, j, 0.2, 20 + 25 * j});
  const std::vector<Dependency> one = {{0, 2, true, {69, 70, 71}}};
  const auto s = score_edges(one, truth, {5});
  bool ok = s.precision == 1.0 && s.recall == 0.125;
  std::string detail = fmt("8-truth/1-match P=%.3g R=%.3g", s.precision, s.recall);

  std::mt19937_64 rng(7);
  std::size_t violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<GroundTruthEdge> t;
    const std::size_t n = 1 + rng() % 8;
    for (std::size_t i = 0; i < n; ++i) t.push_back({0, rng() % 5, 0.3, 1 + rng() % 299});
    std::vector<Dependency> pred;
    for (std::size_t j = 0; j < 5; ++j) {
      Dependency d{0, j, false, {}};
      for (std::size_t i = rng() % 10; i > 0; --i) d.lags.push_back(1 + rng() % 299);
      std::sort(d.lags.begin(), d.lags.end());
      d.lags.erase(std::unique(d.lags.begin(), d.lags.end()), d.lags.end());
      d.present = !d.lags.empty();
      pred.push_back(d);
    }
    double prev = -1.0;
    for (std::size_t w = 0; w <= 10; ++w) {
      const auto sc = score_edges(pred, t, {w});
      if (sc.recall < prev || sc.precision < 0 || sc.precision > 1 || sc.recall < 0 || sc.recall > 1) ++violations;
      prev = sc.recall;
    }
    std::map<std::size_t, Dependency> exact;
    for (const auto& e : t) {
      auto& d = exact[e.source];
      d.source = e.source;
      d.present = true;
      d.lags.push_back(e.lag);
    }
    std::vector<Dependency> perfect;
    for (auto& [k, d] : exact) {
      std::sort(d.lags.begin(), d.lags.end());
      perfect.push_back(d);
    }
    const auto ps = score_edges(perfect, t, {rng() % 6});
    if (ps.precision != 1.0 || ps.recall != 1.0) ++violations;
  }
  ok = ok && violations == 0;
  return {ok, detail + fmt("; 1000 random instances, %zu property violations", violations)};
}

// ---- 8 -------------------------------------------------------------------

Outcome lbm_invariants() {
  const auto g = single_edge_graph(5);
  const auto series = standardize(simulate_linear(g, 3000, 11)).series;
  const auto split = split_train_test(make_windows(series, 0, 16), 0.8);
  models::ModelConfig mc;
  mc.kind = models::ModelKind::tcn;
  mc.n_vars = 2;
  mc.window = 16;
  auto model = models::make_model(mc, 3);
  models::TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 32;
  models::train(*model, split.train, nullptr, tc);

  const std::string before = models::checkpoint_json(*model);
  std::size_t cell_mismatches = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    LbmConfig c = lbm_preset(seed % 2 ? "nonlinear" : "linear");
    c.batch_size = 128;
    const auto m = explain(*model, split.test, c, seed);
    for (std::size_t r = 0; r < m.binary.rows(); ++r)
      for (std::size_t col = 0; col < m.binary.cols(); ++col)
        cell_mismatches += m.binary(r, col) != (m.soft.at(r, col) > m.threshold);
  }
  const bool frozen = models::checkpoint_json(*model) == before;

  std::size_t inversion_failures = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto sys = sample_linear_system(seed);
    const std::size_t window = 1 + seed % 299;
    for (std::size_t k = 0; k < sys.n_vars; ++k) {
      std::vector<std::pair<std::size_t, std::size_t>> got, want;
      for (const auto& d : extract_dependencies(ground_truth_mask(sys, k, window).mask, k))
        for (std::size_t lag : d.lags) got.emplace_back(d.source, lag);
      for (const auto& e : sys.edges_into(k))
        if (e.lag <= window) want.emplace_back(e.source, e.lag);
      std::sort(got.begin(), got.end());
      std::sort(want.begin(), want.end());
      inversion_failures += got != want;
    }
  }
  const bool ok = cell_mismatches == 0 && frozen && inversion_failures == 0;
  return {ok, fmt("binary/soft mismatches %zu, parameters %s, inversion failures %zu over 1000 systems",
                  cell_mismatches, frozen ? "unchanged" : "CHANGED", inversion_failures)};
}

// ---- 9 -------------------------------------------------------------------

#ifdef LAGSCOPE_HAVE_CLI
std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / ("lagscope_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(root);
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  const std::string gen = (root / "gen").string(), lin = (root / "lin").string();
  const std::vector<std::vector<std::string>> runs = {
      {"gen-nonlinear", "--seed", "5", "--length", "2000", "--out", gen},
      {"gen-linear", "--seed", "5", "--length", "2000", "--out", lin},
      {"train", "--data", gen + "/series.csv", "--target", "2", "--tau", "24", "--channels", "6", "--kernel", "3",
       "--epochs", "2", "--batch-size", "64", "--seed", "1", "--out", (root / "train").string()},
      {"explain", "--data", gen + "/series.csv", "--target", "2", "--checkpoint",
       (root / "train/model.json").string(), "--preset", "nonlinear", "--mask-batch", "64", "--out",
       (root / "explain").string()},
      {"graph", "--data", gen + "/series.csv", "--target", "4", "--tau", "12", "--channels", "4", "--kernel", "3",
       "--epochs", "1", "--batch-size", "128", "--mask-batch", "64", "--steps", "10", "--out",
       (root / "graph").string()},
      {"score", "--truth", gen + "/truth.json", "--dependencies", (root / "explain/dependencies.json").string(),
       "--out", (root / "score").string()},
      {"gradcheck", "--points", "3", "--out", (root / "gradcheck").string()},
  };
  std::size_t compared = 0, differing = 0, failed = 0;
  std::string bad;
  for (const auto& args : runs) {
    const fs::path out = args.back();
    if (run(args) != cli::kExitOk) {
      ++failed;
      bad += " " + args[0];
      continue;
    }
    const fs::path replay = out.string() + "_replay";
    if (run({args[0], "--config", (out / "config.json").string(), "--out", replay.string()}) != cli::kExitOk) {
      ++failed;
      bad += " " + args[0] + "(replay)";
      continue;
    }
    for (const auto& entry : fs::directory_iterator(out)) {
      const auto ext = entry.path().extension();
      if (ext != ".csv" && ext != ".json" && ext != ".pgm") continue;
      ++compared;
      if (slurp(entry.path()) != slurp(replay / entry.path().filename())) {
        ++differing;
        bad += " " + entry.path().filename().string();
      }
    }
  }
  std::error_code ec;
  fs::remove_all(root, ec);
  const bool ok = failed == 0 && differing == 0 && compared > 0;
  return {ok, fmt("%zu commands, %zu artifacts compared, %zu differ, %zu runs failed", runs.size(), compared,
                  differing, failed) +
                  (bad.empty() ? "" : ":" + bad)};
}
#else
Outcome reproducibility() { return {false, "built without the command-line tool"}; }
#endif

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--only N[,M...]]\n", argv[0]);
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradients},
      {2, "dilated convolution oracle", conv_oracle},
      {3, "noiseless single-edge recovery", single_edge_recovery},
      {4, "nonlinear X2 reproduction", nonlinear_x2},
      {5, "RNN vs TCN long-lag gap", rnn_tcn_gap},
      {6, "generator conformance", generators},
      {7, "scoring oracle", scoring},
      {8, "LBM invariants", lbm_invariants},
      {9, "config replay reproducibility", reproducibility},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
