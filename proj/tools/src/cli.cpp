#include "lagscope_cli/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>

#include "lagscope/discovery.hpp"
#include "lagscope/error.hpp"
#include "lagscope/gradcheck_suite.hpp"
#include "lagscope/lbm.hpp"
#include "lagscope/models/train.hpp"
#include "lagscope/series.hpp"
#include "lagscope/synth.hpp"

namespace lagscope::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Options of one subcommand that make up its resolved configuration.
class ParamSet {
 public:
  explicit ParamSet(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& help) {
    CLI::Option* opt = app_->add_option("--" + name, var, help)->capture_default_str();
    entries_.push_back({name, opt, [&var](const json& j) { var = j.get<T>(); }, [&var] { return json(var); }});
    return opt;
  }

  CLI::Option* add_switch(const std::string& name, bool& var, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + name + ",!--no-" + name, var, help + (var ? " (default: on)" : " (default: off)"));
    entries_.push_back({name, opt, [&var](const json& j) { var = j.get<bool>(); }, [&var] { return json(var); }});
    return opt;
  }

  // Fills every option not given on the command line from a saved config.
  void apply(const json& doc) {
    for (Entry& e : entries_) {
      if (e.option->count() == 0 && doc.contains(e.name)) {
        try {
          e.set(doc.at(e.name));
        } catch (const json::exception& ex) {
          throw Error("config: bad value for '" + e.name + "': " + ex.what());
        }
      }
    }
  }

  json resolved(const std::string& command) const {
    json doc;
    doc["command"] = command;
    for (const Entry& e : entries_) doc[e.name] = e.get();
    return doc;
  }

  // Checked after a replayed config is applied, so --config can supply it.
  void require(const std::string& name) { required_.push_back(name); }

  void check_required(const json& doc) const {
    for (const std::string& name : required_) {
      if (!given(name) && !doc.contains(name)) throw Error("--" + name + " is required");
    }
  }

  bool given(const std::string& name) const {
    for (const Entry& e : entries_) {
      if (e.name == name) return e.option->count() > 0;
    }
    return false;
  }

 private:
  struct Entry {
    std::string name;
    CLI::Option* option;
    std::function<void(const json&)> set;
    std::function<json()> get;
  };
  CLI::App* app_;
  std::vector<Entry> entries_;
  std::vector<std::string> required_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

struct DataArgs {
  std::string data;
  std::string format = "csv";
  std::string target;
  double train_fraction = 0.8;
  std::size_t stride = 1;
  bool standardize = true;

  void add(ParamSet& p) {
    p.add("data", data, "input series file (required)");
    p.require("data");
    p.add("format", format, "csv or sml2010")->check(CLI::IsMember({"csv", "sml2010"}));
    p.add("target", target, "target column name or index (sml2010: defaults to the dataset target)");
    p.add("train-fraction", train_fraction, "chronological train share");
    p.add("stride", stride, "step between window origins");
    p.add_switch("standardize", standardize, "standardize columns before windowing");
  }

  struct Loaded {
    MultivariateSeries series;
    std::size_t target = 0;
  };

  Loaded load() const {
    Loaded out;
    if (format == "sml2010") {
      Sml2010Data d = load_sml2010(data);
      out.series = std::move(d.series);
      out.target = d.target_index;
    } else {
      out.series = load_csv(data);
    }
    if (!target.empty()) {
      const auto& names = out.series.names();
      if (std::find(names.begin(), names.end(), target) != names.end()) {
        out.target = out.series.index_of(target);
      } else if (target.find_first_not_of("0123456789") == std::string::npos) {
        out.target = std::stoul(target);
        if (out.target >= out.series.n_vars()) throw Error("target index " + target + " out of range");
      } else {
        throw Error("no column named '" + target + "'");
      }
    } else if (format == "csv") {
      throw Error("--target is required for csv input");
    }
    if (standardize) out.series = lagscope::standardize(out.series).series;
    return out;
  }
};

struct ModelArgs {
  std::string model = "tcn";
  std::size_t tau = 300;
  std::size_t hidden = 32;
  std::size_t channels = 16;
  std::size_t kernel = 7;
  std::size_t levels = 0;
  std::string variant = "default";
  double gamma = 0.01;
  double step_size = 0.01;
  std::size_t rhn_depth = 3;

  void add(ParamSet& p) {
    p.add("model", model, "lstm, gru, imv-lstm, antisymmetric-rnn, rhn or tcn");
    p.add("tau", tau, "window length");
    p.add("hidden", hidden, "recurrent hidden size");
    p.add("channels", channels, "TCN channels per level");
    p.add("kernel", kernel, "TCN kernel size");
    p.add("levels", levels, "TCN levels (0: smallest covering the window)");
    p.add("variant", variant, "TCN head: default, output-attention, layerwise-attention, stack, bidirectional");
    p.add("gamma", gamma, "AntisymmetricRNN diffusion");
    p.add("step-size", step_size, "AntisymmetricRNN Euler step");
    p.add("rhn-depth", rhn_depth, "RHN recurrence depth");
  }

  models::ModelConfig config(std::size_t n_vars) const {
    models::ModelConfig c;
    c.kind = models::parse_model_kind(model);
    c.n_vars = n_vars;
    c.window = tau;
    c.hidden = hidden;
    c.tcn.channels = channels;
    c.tcn.kernel_size = kernel;
    c.tcn.levels = levels;
    c.tcn.variant = models::parse_tcn_variant(variant);
    c.gamma = gamma;
    c.step_size = step_size;
    c.rhn_depth = rhn_depth;
    return c;
  }
};

struct TrainArgs {
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double lr = 1e-3;

  void add(ParamSet& p) {
    p.add("epochs", epochs, "training epochs");
    p.add("batch-size", batch_size, "training batch size");
    p.add("lr", lr, "Adam learning rate");
  }

  models::TrainConfig config(std::uint64_t seed) const {
    models::TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.learning_rate = lr;
    c.seed = seed;
    return c;
  }
};

struct LbmArgs {
  static constexpr double kFromPreset = std::numeric_limits<double>::quiet_NaN();
  std::string preset = "linear";
  std::size_t steps = 20;
  double mask_lr = 0.1;
  double lambda1 = kFromPreset, lambda2 = kFromPreset, lambda3 = kFromPreset;
  std::size_t mask_batch = 0;
  std::size_t restarts = 1;

  void add(ParamSet& p) {
    p.add("preset", preset, "lambda preset: linear or nonlinear")->check(CLI::IsMember({"linear", "nonlinear"}));
    p.add("steps", steps, "mask optimization steps");
    p.add("mask-lr", mask_lr, "mask learning rate");
    p.add("lambda1", lambda1, "sparsity weight (default: preset)");
    p.add("lambda2", lambda2, "binarization weight (default: preset)");
    p.add("lambda3", lambda3, "threshold-search size penalty (default: preset)");
    p.add("mask-batch", mask_batch, "test windows per mask step (0: all)");
    p.add("restarts", restarts, "soft masks averaged");
  }

  // Replaces unset lambdas with the preset's, so the saved config is explicit.
  void resolve() {
    const LbmConfig base = lbm_preset(preset);
    if (std::isnan(lambda1)) lambda1 = base.lambda1;
    if (std::isnan(lambda2)) lambda2 = base.lambda2;
    if (std::isnan(lambda3)) lambda3 = base.lambda3;
  }

  LbmConfig config() const {
    LbmConfig c = lbm_preset(preset);
    c.steps = steps;
    c.learning_rate = mask_lr;
    c.lambda1 = lambda1;
    c.lambda2 = lambda2;
    c.lambda3 = lambda3;
    c.batch_size = mask_batch;
    c.restarts = restarts;
    validate(c);
    return c;
  }
};

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json dependencies_to_json(const std::vector<Dependency>& deps, const MultivariateSeries& series, std::size_t target,
                          std::size_t window, double threshold) {
  json list = json::array();
  for (const Dependency& d : deps) {
    list.push_back({{"source", d.source}, {"name", series.names()[d.source]}, {"present", d.present}, {"lags", d.lags}});
  }
  return {{"target", target}, {"window", window}, {"threshold", threshold}, {"dependencies", std::move(list)}};
}

struct Command {
  CLI::App* app = nullptr;
  ParamSet params{nullptr};
  std::string config_path;
  std::string out;
  bool out_required = false;
  std::function<void(Command&)> prepare;  // after parsing, before config.json is written
  std::function<int(Command&, std::ostream&)> body;
};

int execute(Command& cmd, std::ostream& out) {
  if (cmd.out_required && cmd.out.empty()) throw Error("--out is required");
  json doc = json::object();
  if (!cmd.config_path.empty()) {
    doc = read_json(cmd.config_path);
    if (doc.value("command", std::string()) != cmd.app->get_name()) {
      throw Error("config " + cmd.config_path + " was written by '" + doc.value("command", std::string("?")) +
                  "', not '" + cmd.app->get_name() + "'");
    }
    cmd.params.apply(doc);
  }
  cmd.params.check_required(doc);
  if (cmd.prepare) cmd.prepare(cmd);
  if (!cmd.out.empty()) {
    fs::create_directories(cmd.out);
    write_json(fs::path(cmd.out) / "config.json", cmd.params.resolved(cmd.app->get_name()));
  }
  return cmd.body(cmd, out);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal dependency discovery with learned binary masks", "lagscope"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;

  auto add_command = [&](const std::string& name, const std::string& help, bool out_required) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->params = ParamSet(cmd->app);
    cmd->app->add_option("--config", cmd->config_path, "replay a resolved config.json")->check(CLI::ExistingFile);
    cmd->app->add_option("--out", cmd->out, out_required ? "output directory (required)" : "output directory");
    cmd->out_required = out_required;
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  // gen-linear
  std::uint64_t gl_seed = 1;
  std::size_t gl_length = 100000;
  {
    Command& c = add_command("gen-linear", "sample and simulate a random linear system", true);
    c.params.add("seed", gl_seed, "case seed");
    c.params.add("length", gl_length, "series length");
    c.body = [&](Command& cmd, std::ostream& os) {
      const SyntheticCase sc = generate_linear_case(gl_seed, gl_length);
      save_csv(sc.series, fs::path(cmd.out) / "series.csv");
      save_graph(sc.graph, fs::path(cmd.out) / "truth.json");
      os << "N=" << sc.graph.n_vars << " edges=" << sc.graph.edges.size() << " attempts=" << sc.attempts << "\n";
      return kExitOk;
    };
  }

  // gen-nonlinear
  std::uint64_t gn_seed = 1;
  std::size_t gn_length = 100000;
  {
    Command& c = add_command("gen-nonlinear", "simulate the fixed six-variable nonlinear system", true);
    c.params.add("seed", gn_seed, "noise seed");
    c.params.add("length", gn_length, "series length");
    c.body = [&](Command& cmd, std::ostream& os) {
      const SyntheticCase sc = simulate_nonlinear(gn_length, gn_seed);
      save_csv(sc.series, fs::path(cmd.out) / "series.csv");
      save_graph(sc.graph, fs::path(cmd.out) / "truth.json");
      os << "N=" << sc.graph.n_vars << " edges=" << sc.graph.edges.size() << "\n";
      return kExitOk;
    };
  }

  // train
  DataArgs tr_data;
  ModelArgs tr_model;
  TrainArgs tr_train;
  std::uint64_t tr_seed = 0;
  {
    Command& c = add_command("train", "train a regressor for one target", true);
    tr_data.add(c.params);
    tr_model.add(c.params);
    tr_train.add(c.params);
    c.params.add("seed", tr_seed, "initialization and shuffling seed");
    c.body = [&](Command& cmd, std::ostream& os) {
      const auto loaded = tr_data.load();
      const SupervisedDataset data = make_windows(loaded.series, loaded.target, tr_model.tau, tr_data.stride);
      const TrainTestSplit split = split_train_test(data, tr_data.train_fraction);
      auto model = models::make_model(tr_model.config(loaded.series.n_vars()), tr_seed);
      std::string history = "epoch,train_mse,test_mse\n";
      models::train(*model, split.train, &split.test, tr_train.config(tr_seed), [&](const models::EpochLoss& e) {
        history += std::to_string(e.epoch) + "," + format_number(e.train_mse) + "," + format_number(e.test_mse) + "\n";
        os << "epoch " << e.epoch << " train_mse " << e.train_mse << " test_mse " << e.test_mse << "\n";
      });
      models::save_checkpoint(*model, fs::path(cmd.out) / "model.json");
      write_text(fs::path(cmd.out) / "losses.csv", history);
      return kExitOk;
    };
  }

  // explain
  DataArgs ex_data;
  LbmArgs ex_lbm;
  std::string ex_checkpoint;
  std::uint64_t ex_seed = 0;
  {
    Command& c = add_command("explain", "learn an importance mask for a trained model", true);
    ex_data.add(c.params);
    c.params.add("checkpoint", ex_checkpoint, "model.json written by train (required)");
    c.params.require("checkpoint");
    ex_lbm.add(c.params);
    c.params.add("seed", ex_seed, "mask initialization seed");
    c.prepare = [&](Command&) { ex_lbm.resolve(); };
    c.body = [&](Command& cmd, std::ostream& os) {
      const auto loaded = ex_data.load();
      const auto model = models::load_checkpoint(ex_checkpoint);
      const std::size_t window = model->config().window;
      const SupervisedDataset data = make_windows(loaded.series, loaded.target, window, ex_data.stride);
      const TrainTestSplit split = split_train_test(data, ex_data.train_fraction);
      const ImportanceMask mask = explain(*model, split.test, ex_lbm.config(), ex_seed);
      const fs::path dir(cmd.out);
      save_soft_mask_csv(mask.soft, dir / "soft_mask.csv");
      save_binary_mask_csv(mask.binary, dir / "binary_mask.csv");
      render_heatmap(mask.soft, dir / "heatmap.pgm");
      const auto deps = extract_dependencies(mask.binary, loaded.target);
      write_json(dir / "dependencies.json",
                 dependencies_to_json(deps, loaded.series, loaded.target, window, mask.threshold));
      os << "threshold " << mask.threshold << " cells " << mask.binary.count() << "\n";
      return kExitOk;
    };
  }

  // graph
  DataArgs gr_data;
  ModelArgs gr_model;
  TrainArgs gr_train;
  LbmArgs gr_lbm;
  std::size_t gr_depth = 2;
  std::uint64_t gr_seed = 0;
  {
    Command& c = add_command("graph", "discover a two-level temporal knowledge graph", true);
    gr_data.add(c.params);
    gr_model.add(c.params);
    gr_train.add(c.params);
    gr_lbm.add(c.params);
    c.params.add("depth", gr_depth, "recursion depth (1 or 2)");
    c.params.add("seed", gr_seed, "base seed");
    c.prepare = [&](Command&) { gr_lbm.resolve(); };
    c.body = [&](Command& cmd, std::ostream& os) {
      DataArgs raw = gr_data;
      raw.standardize = false;  // discover() standardizes
      const auto loaded = raw.load();
      DiscoveryConfig dc;
      dc.model = gr_model.config(loaded.series.n_vars());
      dc.train = gr_train.config(gr_seed);
      dc.lbm = gr_lbm.config();
      dc.train_fraction = gr_data.train_fraction;
      dc.stride = gr_data.stride;
      dc.depth_limit = gr_depth;
      dc.standardize = gr_data.standardize;
      dc.seed = gr_seed;
      const TemporalKnowledgeGraph g = discover(loaded.series, loaded.target, dc);
      write_json(fs::path(cmd.out) / "graph.json", knowledge_graph_to_json(g));
      os << "models " << g.models_trained << " edges " << g.edges.size() << "\n";
      return kExitOk;
    };
  }

  // score
  std::string sc_truth, sc_graph, sc_deps;
  long long sc_target = -1;
  std::size_t sc_depth = 1, sc_tolerance = 5;
  {
    Command& c = add_command("score", "precision and recall of discovered edges against ground truth", true);
    c.params.add("truth", sc_truth, "truth.json (required)");
    c.params.require("truth");
    c.params.add("graph", sc_graph, "graph.json written by graph");
    c.params.add("dependencies", sc_deps, "dependencies.json written by explain");
    c.params.add("target", sc_target, "target index (default: from the predictions file)");
    c.params.add("depth", sc_depth, "graph edge depth to score");
    c.params.add("tolerance", sc_tolerance, "lag tolerance");
    c.body = [&](Command& cmd, std::ostream& os) {
      if (sc_graph.empty() == sc_deps.empty()) throw Error("score: give exactly one of --graph or --dependencies");
      const GroundTruthGraph truth = load_graph(sc_truth);
      const json doc = read_json(sc_graph.empty() ? sc_deps : sc_graph);
      std::size_t target = 0;
      std::vector<Dependency> predicted;
      try {
        target = sc_target >= 0 ? static_cast<std::size_t>(sc_target) : doc.at("target").get<std::size_t>();
        if (!sc_graph.empty()) {
          for (const json& e : doc.at("edges")) {
            if (e.at("dst").get<std::size_t>() == target && e.at("depth").get<std::size_t>() == sc_depth) {
              predicted.push_back({target, e.at("src").get<std::size_t>(), true,
                                   e.at("lags").get<std::vector<std::size_t>>()});
            }
          }
        } else {
          for (const json& d : doc.at("dependencies")) {
            predicted.push_back({target, d.at("source").get<std::size_t>(), d.at("present").get<bool>(),
                                 d.at("lags").get<std::vector<std::size_t>>()});
          }
        }
      } catch (const json::exception& e) {
        throw Error(std::string("score: malformed predictions: ") + e.what());
      }
      const auto truth_edges = truth.edges_into(target);
      const EdgeScore s = score_edges(predicted, truth_edges, {sc_tolerance});
      write_json(fs::path(cmd.out) / "score.json", score_to_json(s));
      os << "precision " << s.precision << " recall " << s.recall << "\n";
      return kExitOk;
    };
  }

  // gradcheck
  GradcheckSuiteOptions gc;
  {
    Command& c = add_command("gradcheck", "finite-difference check of every op and model", false);
    c.params.add("seed", gc.seed, "random point seed");
    c.params.add("points", gc.points, "input draws per op / probes per model");
    c.params.add("floor", gc.floor, "relative-error denominator floor");
    c.body = [&](Command& cmd, std::ostream& os) {
      const auto cases = run_gradcheck_suite(gc);
      double worst = 0.0;
      json report = json::array();
      for (const GradcheckCase& k : cases) {
        worst = std::max(worst, k.result.max_relative_error);
        os << k.name << " max_rel " << k.result.max_relative_error << " probes " << k.result.probes
           << " kinks_skipped " << k.result.kinks_skipped << "\n";
        report.push_back({{"name", k.name},
                          {"max_relative_error", k.result.max_relative_error},
                          {"max_absolute_error", k.result.max_absolute_error},
                          {"probes", k.result.probes},
                          {"kinks_skipped", k.result.kinks_skipped}});
      }
      os << "max relative error " << worst << "\n";
      if (!cmd.out.empty()) {
        write_json(fs::path(cmd.out) / "gradcheck.json", {{"cases", report}, {"max_relative_error", worst}});
      }
      return worst < 1e-5 ? kExitOk : kExitNumerical;
    };
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitInvalid;
  }

  for (auto& cmd : commands) {
    if (!cmd->app->parsed()) continue;
    try {
      return execute(*cmd, out);
    } catch (const NumericalError& e) {
      err << "numerical error: " << e.what() << "\n";
      return kExitNumerical;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitInvalid;
    }
  }
  return kExitInvalid;
}

}  // namespace lagscope::cli
