// perturbmap command-line front-end: train, eval, marginals, gen-synthetic,
// bench-dynamic. Exit codes: 0 ok, 2 bad input, 3 solver/config mismatch,
// 4 internal invariant violation.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "perturbmap/dataset.hpp"
#include "perturbmap/errors.hpp"
#include "perturbmap/exact.hpp"
#include "perturbmap/gumbel.hpp"
#include "perturbmap/rng.hpp"
#include "perturbmap/synthetic.hpp"
#include "perturbmap/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace pmap;

namespace {

// --- output -------------------------------------------------------------------

struct Report {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  json config = json::object();
  json datasets = json::array();
  json artifacts = json::array();
  json metrics = json::array();
  json timings = json::array();  // wall clock, not reproducible

  void metric(const std::string& name, double value, std::optional<double> stderr_ = std::nullopt,
              const std::string& variant = "") {
    json r;
    r["metric"] = name;
    r["value"] = value;
    r["stderr"] = stderr_ ? json(*stderr_) : json(nullptr);
    r["seed"] = seed;
    r["variant"] = variant.empty() ? json(nullptr) : json(variant);
    metrics.push_back(std::move(r));
  }

  void timing(const std::string& name, double seconds, const std::string& variant = "") {
    json r;
    r["metric"] = name;
    r["value"] = seconds;
    r["stderr"] = nullptr;
    r["seed"] = seed;
    r["variant"] = variant.empty() ? json(nullptr) : json(variant);
    timings.push_back(std::move(r));
  }

  void dataset(const std::string& path) { datasets.push_back({{"path", path}, {"digest", file_digest(path)}}); }
  void artifact(const std::string& path) { artifacts.push_back(path); }
};

std::string fmt_num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void print(const Report& r, const std::string& format) {
  if (format == "jsonl") {
    for (const auto& m : r.metrics) std::cout << m.dump() << '\n';
    for (const auto& m : r.timings) std::cout << m.dump() << '\n';
    return;
  }
  std::cout << std::left << std::setw(28) << "metric" << std::setw(10) << "variant" << std::setw(16) << "value"
            << "stderr\n";
  auto row = [](const json& m) {
    std::cout << std::left << std::setw(28) << m["metric"].get<std::string>() << std::setw(10)
              << (m["variant"].is_null() ? "-" : m["variant"].get<std::string>()) << std::setw(16)
              << fmt_num(m["value"].get<double>())
              << (m["stderr"].is_null() ? "-" : fmt_num(m["stderr"].get<double>())) << '\n';
  };
  for (const auto& m : r.metrics) row(m);
  for (const auto& m : r.timings) row(m);
}

void write_outputs(Report& r, const std::string& out_dir) {
  if (out_dir.empty()) return;
  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
  {
    std::ofstream m(metrics_path, std::ios::binary | std::ios::trunc);
    for (const auto& x : r.metrics) m << x.dump() << '\n';
  }
  r.artifact(metrics_path);
  json man;
  man["command"] = r.command;
  man["argv"] = r.argv;
  man["seed"] = r.seed;
  man["config"] = r.config;
  man["datasets"] = r.datasets;
  man["artifacts"] = r.artifacts;
  man["metrics"] = r.metrics;
  man["timings"] = r.timings;
  std::ofstream f((fs::path(out_dir) / "manifest.json").string(), std::ios::binary | std::ios::trunc);
  f << man.dump(2) << '\n';
}

// --- option parsing helpers ------------------------------------------------------

Solver parse_solver(const std::string& s) {
  if (s == "chain") return Solver::chain;
  if (s == "graphcut") return Solver::graphcut;
  return Solver::brute;
}

int max_labels(const std::vector<FeatureInstance>& data) {
  int K = 0;
  for (const auto& x : data) K = std::max(K, x.model->max_labels());
  return K;
}

struct LossOptions {
  std::string kind = "hamming";
  std::string rule = "volume-balanced";
  double floor = 0.0;

  LossSpec make(int num_labels) const {
    if (kind == "zero-one") return LossSpec::zero_one();
    if (kind == "hamming") return LossSpec::hamming();
    if (rule == "unit") return LossSpec::unit_weights(std::max(num_labels, 1));
    return LossSpec::volume_balanced(floor);
  }

  void add(CLI::App* app) {
    app->add_option("--loss", kind, "Loss")
        ->check(CLI::IsMember({"zero-one", "hamming", "weighted-hamming"}))
        ->capture_default_str();
    app->add_option("--weight-rule", rule, "Weights of weighted-hamming")
        ->check(CLI::IsMember({"volume-balanced", "unit"}))
        ->capture_default_str();
    app->add_option("--volume-floor", floor, "Class-volume floor as a fraction of total volume (0 = reject degenerate)")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
  }

  json echo() const { return {{"loss", kind}, {"weight_rule", rule}, {"volume_floor", floor}}; }
};

// Builds the loss weights of every fully labeled instance once so that
// degenerate instances fail at load time.
void check_loss(const LossSpec& spec, const std::vector<FeatureInstance>& data, int K) {
  if (spec.kind != LossKind::weighted_hamming) return;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data[i];
    if (!x.fully_labeled()) continue;
    try {
      loss_weights(spec, x.labeling(), x.volumes, K);
    } catch (const DegenerateInstanceError& e) {
      throw DegenerateInstanceError("instance " + std::to_string(i) + ": " + e.what());
    }
  }
}

void check_solver_all(const WeightLayout& layout, const std::vector<FeatureInstance>& data, Solver solver) {
  const WeightVector zero(layout);
  for (std::size_t i = 0; i < data.size(); ++i) {
    try {
      check_solver(compile(zero, data[i]), solver);
    } catch (const PreconditionError& e) {
      throw PreconditionError("instance " + std::to_string(i) + ": " + e.what());
    }
  }
}

std::vector<FeatureInstance> load(Report& r, const std::string& path) {
  auto data = read_dataset_file(path);
  r.dataset(path);
  return data;
}

void write_objective(const std::string& path, const std::vector<double>& obj) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  for (double v : obj) f << format_double(v) << '\n';
}

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return m;
}

// --- train ------------------------------------------------------------------------

struct TrainOptions {
  std::string data, unlabeled, out;
  LossOptions loss;
  double lambda = 0.01;
  int iters = 1000;
  int semi_iters = -1;
  int batch = 1;
  double kappa = 1.0;
  std::uint64_t seed = 0;
  int samples = 100;
  int noise_samples = 1;
  std::string solver = "chain";
  std::string pairwise = "label-pairs";
  std::string step = "inverse";
  double step_size = 0.01;
  bool no_gr = false, no_dc = false;
  std::string project = "auto";
};

TrainConfig make_config(const TrainOptions& o, int K) {
  TrainConfig c;
  c.lambda = o.lambda;
  c.iters = o.iters;
  c.semi_iters = o.semi_iters;
  c.batch = o.batch;
  c.kappa = o.kappa;
  c.seed = o.seed;
  c.inference_samples = o.samples;
  c.noise_samples = o.noise_samples;
  c.solver = parse_solver(o.solver);
  c.pairwise = o.pairwise == "potts" ? PairwiseParam::potts : PairwiseParam::label_pairs;
  c.step_rule = o.step == "constant" ? StepRule::constant : StepRule::inverse_lambda_h;
  c.step_size = o.step_size;
  c.accel.gumbel_reduction = !o.no_gr;
  c.accel.dynamic_cuts = !o.no_dc;
  if (o.project == "on") c.project = true;
  if (o.project == "off") c.project = false;
  c.loss = o.loss.make(K);
  return c;
}

void run_train(const TrainOptions& o, Report& r) {
  auto data = load(r, o.data);
  std::vector<FeatureInstance> unlabeled;
  if (!o.unlabeled.empty()) unlabeled = load(r, o.unlabeled);
  std::vector<FeatureInstance> all = data;
  all.insert(all.end(), unlabeled.begin(), unlabeled.end());
  const int K = max_labels(all);
  const TrainConfig cfg = make_config(o, K);
  cfg.validate();
  if (data.empty()) throw StructuralError("training set is empty");
  check_loss(cfg.loss, data, K);
  const WeightLayout layout = layout_for(all, cfg.pairwise);
  check_solver_all(layout, all, cfg.solver);

  r.config = {{"lambda", o.lambda},       {"iters", o.iters},         {"semi_iters", o.semi_iters},
              {"batch", o.batch},         {"kappa", o.kappa},         {"samples", o.samples},
              {"noise_samples", o.noise_samples}, {"solver", o.solver}, {"pairwise", o.pairwise},
              {"step", o.step},           {"step_size", o.step_size}, {"gumbel_reduction", !o.no_gr},
              {"dynamic_cuts", !o.no_dc}, {"project", o.project},     {"unlabeled", o.unlabeled}};
  r.config.update(o.loss.echo());

  const TrainReport rep =
      o.unlabeled.empty() ? train_supervised(data, cfg) : train_semisupervised(data, unlabeled, cfg);

  fs::create_directories(o.out);
  const std::string wpath = (fs::path(o.out) / "weights.txt").string();
  const std::string lpath = (fs::path(o.out) / "weights_last.txt").string();
  const std::string opath = (fs::path(o.out) / "objective.txt").string();
  write_weights_file(wpath, rep.averaged);
  write_weights_file(lpath, rep.weights);
  write_objective(opath, rep.objective);
  r.artifact(wpath);
  r.artifact(lpath);
  r.artifact(opath);

  const std::size_t H = rep.objective.size();
  const std::size_t win = std::max<std::size_t>(1, H / 10);
  r.metric("objective_first", window_mean(rep.objective, 0, win));
  r.metric("objective_last", window_mean(rep.objective, H - win, H));
  r.metric("map_solves", static_cast<double>(rep.counters.map_solves));
  r.metric("clamped_solves", static_cast<double>(rep.counters.clamped_solves));
  r.metric("skipped_solves", static_cast<double>(rep.counters.skipped));

  std::vector<double> losses;
  const LossSpec eval_loss = cfg.loss.kind == LossKind::zero_one ? LossSpec::hamming() : cfg.loss;
  for (const auto& x : data)
    losses.push_back(loss(eval_loss, x.labeling(), predict(rep.averaged, x, PredictMode::map, cfg, 0), x.volumes));
  const MeanStd ms = mean_std(losses);
  r.metric("train_loss", ms.mean, ms.std / std::sqrt(static_cast<double>(losses.size())));
  for (const auto& [phase, sec] : rep.phase_seconds) r.timing("seconds_" + phase, sec);
}

// --- eval -------------------------------------------------------------------------

struct EvalOptions {
  std::string weights, data, out;
  LossOptions loss;
  std::string predictor = "map";
  int samples = 100;
  std::string solver = "chain";
  std::uint64_t seed = 0;
};

void run_eval(const EvalOptions& o, Report& r) {
  auto data = load(r, o.data);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!data[i].fully_labeled())
      throw StructuralError("instance " + std::to_string(i) + " has unobserved labels; eval needs labeled data");
  const int K = max_labels(data);
  const LossSpec spec = o.loss.make(K);
  check_loss(spec, data, K);
  const bool needs_weights = o.predictor == "map" || o.predictor == "marginal";
  WeightVector w;
  if (needs_weights) {
    if (o.weights.empty()) throw StructuralError("--weights is required for predictor " + o.predictor);
    w = read_weights_file(o.weights);
    r.dataset(o.weights);
    check_solver_all(w.layout, data, parse_solver(o.solver));
  }
  r.config = {{"predictor", o.predictor}, {"samples", o.samples}, {"solver", o.solver}, {"weights", o.weights}};
  r.config.update(o.loss.echo());

  TrainConfig cfg;
  cfg.solver = parse_solver(o.solver);
  cfg.inference_samples = o.samples;
  std::vector<double> losses;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data[i];
    const Labeling y = x.labeling();
    Labeling pred;
    const std::uint64_t s = derive_seed(o.seed, {static_cast<std::uint64_t>(i)});
    if (o.predictor == "truth") {
      pred = y;
    } else if (o.predictor == "random") {
      Rng rng(s);
      pred.resize(y.size());
      for (int d = 0; d < x.model->num_vars(); ++d)
        pred[static_cast<std::size_t>(d)] = static_cast<int>(rng.below(static_cast<std::uint64_t>(x.model->labels(d))));
    } else {
      pred = predict(w, x, o.predictor == "map" ? PredictMode::map : PredictMode::marginal, cfg, s);
    }
    losses.push_back(loss(spec, y, pred, x.volumes));
  }
  const MeanStd ms = mean_std(losses);
  const double n = static_cast<double>(std::max<std::size_t>(losses.size(), 1));
  r.metric("loss", ms.mean, ms.std / std::sqrt(n));
  r.metric("loss_std", ms.std);
  r.metric("instances", static_cast<double>(losses.size()));
}

// --- marginals --------------------------------------------------------------------

struct MarginalOptions {
  std::string weights, data, out;
  int samples = 100;
  std::string solver = "chain";
  std::uint64_t seed = 0;
  bool conditional = false;
};

void run_marginals(const MarginalOptions& o, Report& r, std::vector<json>& tables) {
  auto data = load(r, o.data);
  WeightVector w = read_weights_file(o.weights);
  r.dataset(o.weights);
  const Solver solver = parse_solver(o.solver);
  check_solver_all(w.layout, data, solver);
  if (o.samples < 1) throw StructuralError("--samples must be at least 1");
  r.config = {{"samples", o.samples}, {"solver", o.solver}, {"conditional", o.conditional}, {"weights", o.weights}};

  double worst = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data[i];
    const EstimatorConfig ec{o.samples, derive_seed(o.seed, {static_cast<std::uint64_t>(i)}), solver};
    const CompiledPotentials p = compile(w, x);
    const MarginalTable q = o.conditional ? conditional_counting_marginals(p, x.labels, ec) : counting_marginals(p, ec);
    for (const auto& row : q.rows) {
      double s = 0.0;
      for (double v : row) s += v;
      worst = std::max(worst, std::abs(s - 1.0));
    }
    tables.push_back({{"instance", i}, {"q", q.rows}});
  }
  r.metric("instances", static_cast<double>(data.size()));
  r.metric("max_row_sum_error", worst);
}

// --- gen-synthetic ------------------------------------------------------------------

struct GenOptions {
  std::string kind = "chain";
  SyntheticConfig cfg;
  std::string out, teacher_out;
};

void run_gen(GenOptions& o) {
  o.cfg.kind = o.kind == "grid" ? SyntheticKind::grid : SyntheticKind::chain;
  const SyntheticData d = generate_synthetic(o.cfg);
  write_dataset_file(o.out, d.instances);
  if (!o.teacher_out.empty()) write_weights_file(o.teacher_out, d.teacher);
  std::cerr << "wrote " << d.instances.size() << " instances to " << o.out << '\n';
}

// --- bench-dynamic ------------------------------------------------------------------

struct BenchOptions {
  int side = 10;
  int iters = 1000;
  int num = 200;
  int feat_dim = 64;
  int batch = 1;
  double lambda = 0.01;
  std::uint64_t seed = 0;
  std::vector<std::string> variants{"basic", "dc", "gr", "dc+gr"};
  std::vector<int> checkpoints;
  std::string out;
};

// cumulative over iterations 1..c, i.e. what a run of c iterations saves
double skipped_fraction(const std::vector<SolveCounters>& per_iter, int c) {
  std::uint64_t skipped = 0, budget = 0;
  for (int h = 1; h <= c; ++h) {
    const auto& s = per_iter[static_cast<std::size_t>(h - 1)];
    skipped += s.skipped;
    budget += s.clamped_budget();
  }
  return budget ? static_cast<double>(skipped) / static_cast<double>(budget) : 0.0;
}

void run_bench(const BenchOptions& o, Report& r) {
  SyntheticConfig sc;
  sc.kind = SyntheticKind::grid;
  sc.side = o.side;
  sc.num = o.num;
  sc.feat_dim = o.feat_dim;
  sc.teacher_seed = derive_seed(o.seed, {1});
  sc.seed = derive_seed(o.seed, {2});
  const auto data = generate_synthetic(sc).instances;

  std::vector<int> checkpoints = o.checkpoints;
  if (checkpoints.empty()) checkpoints = {std::min(100, o.iters), o.iters};
  for (int c : checkpoints)
    if (c < 1 || c > o.iters) throw StructuralError("checkpoint outside [1, iters]: " + std::to_string(c));

  r.config = {{"side", o.side},         {"iters", o.iters},   {"num", o.num},
              {"feat_dim", o.feat_dim}, {"batch", o.batch},   {"lambda", o.lambda},
              {"variants", o.variants}, {"checkpoints", checkpoints}};

  struct Run {
    std::string name;
    TrainReport rep;
    double seconds;
  };
  std::vector<Run> runs;
  for (const auto& v : o.variants) {
    TrainConfig cfg;
    cfg.lambda = o.lambda;
    cfg.iters = o.iters;
    cfg.batch = o.batch;
    cfg.seed = o.seed;
    cfg.solver = Solver::graphcut;
    cfg.pairwise = PairwiseParam::potts;
    cfg.loss = LossSpec::volume_balanced(1e-6);
    cfg.accel.dynamic_cuts = v == "dc" || v == "dc+gr";
    cfg.accel.gumbel_reduction = v == "gr" || v == "dc+gr";
    cfg.record_trajectory = true;
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport rep = train_supervised(data, cfg);
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    runs.push_back({v, std::move(rep), sec});
  }

  double basic_seconds = 0.0;
  for (const auto& run : runs)
    if (run.name == "basic") basic_seconds = run.seconds;

  double worst_diff = 0.0;
  for (const auto& run : runs) {
    const auto& c = run.rep.counters;
    r.metric("map_solves", static_cast<double>(c.map_solves), std::nullopt, run.name);
    r.metric("clamped_solves", static_cast<double>(c.clamped_solves), std::nullopt, run.name);
    r.metric("skipped_solves", static_cast<double>(c.skipped), std::nullopt, run.name);
    for (int cp : checkpoints)
      r.metric("skipped_fraction_at_" + std::to_string(cp), skipped_fraction(run.rep.per_iteration, cp), std::nullopt,
               run.name);
    double diff = 0.0;
    const auto& ref = runs.front().rep.trajectory;
    for (std::size_t h = 0; h < ref.size(); ++h)
      for (std::size_t i = 0; i < ref[h].size(); ++i)
        diff = std::max(diff, std::abs(ref[h][i] - run.rep.trajectory[h][i]));
    worst_diff = std::max(worst_diff, diff);
    r.metric("max_trajectory_diff", diff, std::nullopt, run.name);
    r.timing("seconds", run.seconds, run.name);
    if (basic_seconds > 0.0) r.timing("speedup_vs_basic", basic_seconds / run.seconds, run.name);
  }
  if (worst_diff > 1e-9)
    throw InvariantViolation("variant trajectories differ by " + fmt_num(worst_diff) + " (> 1e-9)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"perturbmap: perturb-and-MAP structured learning"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string format = "table";
  app.add_option("--format", format, "stdout format")->check(CLI::IsMember({"table", "jsonl"}))->capture_default_str();

  const std::vector<std::string> solvers{"chain", "graphcut", "brute"};

  TrainOptions tr;
  auto* train = app.add_subcommand("train", "Train weights on a labeled dataset");
  train->add_option("--data", tr.data, "Labeled dataset")->required();
  train->add_option("--unlabeled", tr.unlabeled, "Unlabeled dataset (semi-supervised)");
  train->add_option("--out", tr.out, "Output directory")->required();
  tr.loss.add(train);
  train->add_option("--lambda", tr.lambda)->capture_default_str();
  train->add_option("--iters", tr.iters)->capture_default_str();
  train->add_option("--semi-iters", tr.semi_iters, "Phase-3 iterations (-1: same as --iters)")->capture_default_str();
  train->add_option("--batch", tr.batch)->capture_default_str();
  train->add_option("--kappa", tr.kappa)->capture_default_str();
  train->add_option("--seed", tr.seed)->capture_default_str();
  train->add_option("--samples", tr.samples, "Perturbed MAPs per marginal estimate")->capture_default_str();
  train->add_option("--noise-samples", tr.noise_samples, "Gumbel draws per element and step")->capture_default_str();
  train->add_option("--solver", tr.solver)->check(CLI::IsMember(solvers))->capture_default_str();
  train->add_option("--pairwise", tr.pairwise)->check(CLI::IsMember({"label-pairs", "potts"}))->capture_default_str();
  train->add_option("--step", tr.step)->check(CLI::IsMember({"inverse", "constant"}))->capture_default_str();
  train->add_option("--step-size", tr.step_size)->capture_default_str();
  train->add_flag("--no-gumbel-reduction", tr.no_gr);
  train->add_flag("--no-dynamic-cuts", tr.no_dc);
  train->add_option("--project", tr.project, "Supermodular projection")
      ->check(CLI::IsMember({"auto", "on", "off"}))
      ->capture_default_str();

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a predictor on a labeled dataset");
  eval->add_option("--weights", ev.weights);
  eval->add_option("--data", ev.data)->required();
  eval->add_option("--out", ev.out, "Output directory for manifest and metrics");
  ev.loss.add(eval);
  eval->add_option("--predictor", ev.predictor)
      ->check(CLI::IsMember({"map", "marginal", "random", "truth"}))
      ->capture_default_str();
  eval->add_option("--samples", ev.samples)->capture_default_str();
  eval->add_option("--solver", ev.solver)->check(CLI::IsMember(solvers))->capture_default_str();
  eval->add_option("--seed", ev.seed)->capture_default_str();

  MarginalOptions mo;
  auto* marg = app.add_subcommand("marginals", "Counting marginals per instance");
  marg->add_option("--weights", mo.weights)->required();
  marg->add_option("--data", mo.data)->required();
  marg->add_option("--out", mo.out, "Output directory; tables go to stdout without it");
  marg->add_option("--samples", mo.samples)->capture_default_str();
  marg->add_option("--solver", mo.solver)->check(CLI::IsMember(solvers))->capture_default_str();
  marg->add_option("--seed", mo.seed)->capture_default_str();
  marg->add_flag("--conditional", mo.conditional, "Clamp observed labels");

  GenOptions go;
  auto* gen = app.add_subcommand("gen-synthetic", "Teacher-generated synthetic dataset");
  gen->add_option("--kind", go.kind)->check(CLI::IsMember({"chain", "grid"}))->capture_default_str();
  gen->add_option("--num", go.cfg.num)->capture_default_str();
  gen->add_option("--vars", go.cfg.vars, "Chain length")->capture_default_str();
  gen->add_option("--side", go.cfg.side, "Grid side")->capture_default_str();
  gen->add_option("--labels", go.cfg.labels)->capture_default_str();
  gen->add_option("--feat-dim", go.cfg.feat_dim)->capture_default_str();
  gen->add_option("--teacher-seed", go.cfg.teacher_seed)->capture_default_str();
  gen->add_option("--seed", go.cfg.seed, "Feature and label seed")->capture_default_str();
  gen->add_option("--label-noise", go.cfg.label_noise)->capture_default_str();
  gen->add_option("--teacher-scale", go.cfg.teacher_scale)->capture_default_str();
  gen->add_flag("--hide-labels", go.cfg.hide_labels, "Write every label as unobserved");
  gen->add_option("--out", go.out)->required();
  gen->add_option("--teacher-out", go.teacher_out, "Write the teacher weights here");

  BenchOptions bo;
  auto* bench = app.add_subcommand("bench-dynamic", "Dynamic cuts / Gumbel reduction benchmark");
  bench->add_option("--side", bo.side)->capture_default_str();
  bench->add_option("--iters", bo.iters)->capture_default_str();
  bench->add_option("--num", bo.num, "Training grids")->capture_default_str();
  bench->add_option("--feat-dim", bo.feat_dim)->capture_default_str();
  bench->add_option("--batch", bo.batch)->capture_default_str();
  bench->add_option("--lambda", bo.lambda)->capture_default_str();
  bench->add_option("--seed", bo.seed)->capture_default_str();
  bench->add_option("--variants", bo.variants)
      ->delimiter(',')
      ->check(CLI::IsMember({"basic", "dc", "gr", "dc+gr"}))
      ->capture_default_str();
  bench->add_option("--checkpoints", bo.checkpoints, "Iterations at which to report the skipped fraction")
      ->delimiter(',');
  bench->add_option("--out", bo.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Report r;
  for (int i = 0; i < argc; ++i) r.argv.emplace_back(argv[i]);
  std::string out_dir;
  try {
    if (*train) {
      r.command = "train";
      r.seed = tr.seed;
      out_dir = tr.out;
      run_train(tr, r);
    } else if (*eval) {
      r.command = "eval";
      r.seed = ev.seed;
      out_dir = ev.out;
      run_eval(ev, r);
    } else if (*marg) {
      r.command = "marginals";
      r.seed = mo.seed;
      out_dir = mo.out;
      std::vector<json> tables;
      run_marginals(mo, r, tables);
      if (out_dir.empty()) {
        for (const auto& t : tables) std::cout << t.dump() << '\n';
        return 0;
      }
      fs::create_directories(out_dir);
      const std::string path = (fs::path(out_dir) / "marginals.jsonl").string();
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      for (const auto& t : tables) f << t.dump() << '\n';
      r.artifact(path);
    } else if (*gen) {
      run_gen(go);
      return 0;
    } else if (*bench) {
      r.command = "bench-dynamic";
      r.seed = bo.seed;
      out_dir = bo.out;
      try {
        run_bench(bo, r);
      } catch (const InvariantViolation&) {
        print(r, format);
        write_outputs(r, out_dir);
        throw;
      }
    }
    print(r, format);
    write_outputs(r, out_dir);
    return 0;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const StructuralError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const DegenerateInstanceError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const PreconditionError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 3;
  } catch (const CapacityError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 3;
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return 4;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
}
