#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "perturbmap/dataset.hpp"
#include "perturbmap/errors.hpp"
#include "perturbmap/exact.hpp"
#include "perturbmap/gumbel.hpp"
#include "perturbmap/model.hpp"
#include "perturbmap/synthetic.hpp"
#include "perturbmap/trainer.hpp"

namespace py = pybind11;
using namespace pmap;

namespace {

std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

void assign(std::span<double> dst, const std::vector<double>& src, const char* what) {
  if (src.size() != dst.size())
    throw StructuralError(std::string(what) + ": expected " + std::to_string(dst.size()) + " values, got " +
                          std::to_string(src.size()));
  std::copy(src.begin(), src.end(), dst.begin());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Perturb-and-MAP structured learning";

  auto base = py::register_exception<StructuralError>(m, "StructuralError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_RuntimeError);
  py::register_exception<DegenerateInstanceError>(m, "DegenerateInstanceError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<InvariantViolation>(m, "InvariantViolation", PyExc_RuntimeError);
  (void)base;

  py::enum_<StructureKind>(m, "StructureKind")
      .value("chain", StructureKind::chain)
      .value("grid", StructureKind::grid)
      .value("general", StructureKind::general);
  py::enum_<Solver>(m, "Solver").value("chain", Solver::chain).value("graphcut", Solver::graphcut).value("brute", Solver::brute);
  py::enum_<PairwiseParam>(m, "PairwiseParam")
      .value("label_pairs", PairwiseParam::label_pairs)
      .value("potts", PairwiseParam::potts);
  py::enum_<StepRule>(m, "StepRule")
      .value("inverse_lambda_h", StepRule::inverse_lambda_h)
      .value("constant", StepRule::constant);
  py::enum_<PredictMode>(m, "PredictMode").value("map", PredictMode::map).value("marginal", PredictMode::marginal);
  py::enum_<SyntheticKind>(m, "SyntheticKind").value("chain", SyntheticKind::chain).value("grid", SyntheticKind::grid);

  py::class_<PairwiseModel, std::shared_ptr<PairwiseModel>>(m, "PairwiseModel")
      .def(py::init([](std::vector<int> label_counts, const std::vector<std::pair<int, int>>& edges) {
             std::vector<Edge> es;
             for (auto [i, j] : edges) es.push_back({i, j});
             return std::make_shared<PairwiseModel>(PairwiseModel::infer_kind(std::move(label_counts), std::move(es)));
           }),
           py::arg("label_counts"), py::arg("edges") = std::vector<std::pair<int, int>>{})
      .def_static("chain", [](std::vector<int> counts) { return std::make_shared<PairwiseModel>(PairwiseModel::chain(std::move(counts))); })
      .def_static("grid", [](int rows, int cols, int labels) {
        return std::make_shared<PairwiseModel>(PairwiseModel::grid(rows, cols, labels));
      })
      .def_property_readonly("num_vars", &PairwiseModel::num_vars)
      .def_property_readonly("num_edges", &PairwiseModel::num_edges)
      .def_property_readonly("label_counts", &PairwiseModel::label_counts)
      .def_property_readonly("kind", &PairwiseModel::kind)
      .def_property_readonly("edges", [](const PairwiseModel& md) {
        std::vector<std::pair<int, int>> out;
        for (const auto& e : md.edges()) out.emplace_back(e.i, e.j);
        return out;
      });

  py::class_<CompiledPotentials>(m, "Potentials")
      .def(py::init([](std::shared_ptr<PairwiseModel> md) { return CompiledPotentials(std::move(md)); }))
      .def("unary", [](const CompiledPotentials& p, int d) { return to_vec(p.unary(d)); })
      .def("set_unary", [](CompiledPotentials& p, int d, const std::vector<double>& v) { assign(p.unary(d), v, "unary"); })
      .def("pairwise", [](const CompiledPotentials& p, int e) { return to_vec(p.pairwise(e)); })
      .def("set_pairwise",
           [](CompiledPotentials& p, int e, const std::vector<double>& v) { assign(p.pairwise(e), v, "pairwise"); })
      .def_property("offset", &CompiledPotentials::offset, &CompiledPotentials::set_offset)
      .def("is_supermodular", &CompiledPotentials::is_supermodular_binary, py::arg("tol") = 1e-12)
      .def("__call__", &evaluate_potential);

  py::class_<MapResult>(m, "MapResult").def_readonly("labeling", &MapResult::labeling).def_readonly("value", &MapResult::value);
  py::class_<Estimate>(m, "Estimate").def_readonly("mean", &Estimate::mean).def_readonly("std_error", &Estimate::std_error);
  py::class_<ExactInferenceResult>(m, "ExactResult")
      .def_readonly("log_partition", &ExactInferenceResult::log_partition)
      .def_readonly("map_labeling", &ExactInferenceResult::map_labeling)
      .def_readonly("map_value", &ExactInferenceResult::map_value)
      .def_property_readonly("marginals", [](const ExactInferenceResult& r) { return r.marginals.rows; });

  m.def("brute_force", &brute_force);
  m.def("viterbi_map", &viterbi_map);
  m.def("forward_log_partition", &forward_log_partition);
  m.def("forward_backward_marginals", [](const CompiledPotentials& p) { return forward_backward_marginals(p).rows; });
  m.def("solve_map", &solve_map, py::arg("potentials"), py::arg("solver"));

  py::class_<GumbelNoise>(m, "GumbelNoise").def_readonly("z", &GumbelNoise::z);
  m.def("sample_noise", &sample_noise, py::arg("model"), py::arg("seed"));
  m.def("perturbed_map", &perturbed_map);
  m.def("conditional_perturbed_map", &conditional_perturbed_map);

  auto est = [](int samples, std::uint64_t seed, Solver solver) { return EstimatorConfig{samples, seed, solver}; };
  m.def(
      "estimate_A",
      [est](const CompiledPotentials& p, int samples, std::uint64_t seed, Solver solver) {
        return estimate_A(p, est(samples, seed, solver));
      },
      py::arg("potentials"), py::arg("samples") = 100, py::arg("seed") = 0, py::arg("solver") = Solver::brute);
  m.def(
      "counting_marginals",
      [est](const CompiledPotentials& p, int samples, std::uint64_t seed, Solver solver) {
        return counting_marginals(p, est(samples, seed, solver)).rows;
      },
      py::arg("potentials"), py::arg("samples") = 100, py::arg("seed") = 0, py::arg("solver") = Solver::brute);

  py::class_<WeightVector>(m, "Weights")
      .def_readwrite("values", &WeightVector::values)
      .def_property_readonly("num_labels", [](const WeightVector& w) { return w.layout.num_labels; })
      .def_property_readonly("node_dim", [](const WeightVector& w) { return w.layout.node_dim; })
      .def_property_readonly("edge_dim", [](const WeightVector& w) { return w.layout.edge_dim; })
      .def("__len__", [](const WeightVector& w) { return w.values.size(); });

  py::class_<FeatureInstance>(m, "Instance")
      .def_property_readonly("model", [](const FeatureInstance& x) { return std::const_pointer_cast<PairwiseModel>(x.model); })
      .def_readonly("node_dim", &FeatureInstance::node_dim)
      .def_readonly("edge_dim", &FeatureInstance::edge_dim)
      .def_readonly("node_features", &FeatureInstance::node_features)
      .def_readonly("edge_features", &FeatureInstance::edge_features)
      .def_readwrite("labels", &FeatureInstance::labels)
      .def_readonly("volumes", &FeatureInstance::volumes)
      .def("compile", [](const FeatureInstance& x, const WeightVector& w) { return compile(w, x); });

  m.def("read_dataset", &read_dataset_file);
  m.def("write_dataset", [](const std::string& path, const std::vector<FeatureInstance>& d) { write_dataset_file(path, d); });
  m.def("dumps_dataset", [](const std::vector<FeatureInstance>& d) {
    std::ostringstream os;
    write_dataset(os, d);
    return os.str();
  });
  m.def("read_weights", &read_weights_file);
  m.def("write_weights", &write_weights_file);

  m.def(
      "generate_synthetic",
      [](SyntheticKind kind, int num, int vars, int side, int labels, int feat_dim, std::uint64_t teacher_seed,
         std::uint64_t seed, double label_noise) {
        SyntheticConfig c;
        c.kind = kind;
        c.num = num;
        c.vars = vars;
        c.side = side;
        c.labels = labels;
        c.feat_dim = feat_dim;
        c.teacher_seed = teacher_seed;
        c.seed = seed;
        c.label_noise = label_noise;
        auto d = generate_synthetic(c);
        return std::make_pair(d.teacher, d.instances);
      },
      py::arg("kind") = SyntheticKind::chain, py::arg("num") = 10, py::arg("vars") = 8, py::arg("side") = 6,
      py::arg("labels") = 2, py::arg("feat_dim") = 4, py::arg("teacher_seed") = 0, py::arg("seed") = 0,
      py::arg("label_noise") = 0.0);

  py::class_<LossSpec>(m, "Loss")
      .def_static("zero_one", &LossSpec::zero_one)
      .def_static("hamming", &LossSpec::hamming)
      .def_static("volume_balanced", &LossSpec::volume_balanced, py::arg("volume_floor") = 0.0);
  m.def("loss", [](const LossSpec& s, const Labeling& y, const Labeling& p, const std::vector<double>& v) {
    return loss(s, y, p, v);
  });

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lambda_", &TrainConfig::lambda)
      .def_readwrite("iters", &TrainConfig::iters)
      .def_readwrite("batch", &TrainConfig::batch)
      .def_readwrite("step_rule", &TrainConfig::step_rule)
      .def_readwrite("step_size", &TrainConfig::step_size)
      .def_readwrite("loss", &TrainConfig::loss)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("solver", &TrainConfig::solver)
      .def_readwrite("pairwise", &TrainConfig::pairwise)
      .def_readwrite("kappa", &TrainConfig::kappa)
      .def_readwrite("inference_samples", &TrainConfig::inference_samples)
      .def_readwrite("noise_samples", &TrainConfig::noise_samples)
      .def_readwrite("semi_iters", &TrainConfig::semi_iters)
      .def_property(
          "gumbel_reduction", [](const TrainConfig& c) { return c.accel.gumbel_reduction; },
          [](TrainConfig& c, bool v) { c.accel.gumbel_reduction = v; })
      .def_property(
          "dynamic_cuts", [](const TrainConfig& c) { return c.accel.dynamic_cuts; },
          [](TrainConfig& c, bool v) { c.accel.dynamic_cuts = v; });

  py::class_<SolveCounters>(m, "SolveCounters")
      .def_readonly("map_solves", &SolveCounters::map_solves)
      .def_readonly("clamped_solves", &SolveCounters::clamped_solves)
      .def_readonly("skipped", &SolveCounters::skipped);
  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("weights", &TrainReport::weights)
      .def_readonly("averaged", &TrainReport::averaged)
      .def_readonly("objective", &TrainReport::objective)
      .def_readonly("counters", &TrainReport::counters)
      .def_readonly("phase_seconds", &TrainReport::phase_seconds);

  m.def("train_supervised",
        [](const std::vector<FeatureInstance>& d, const TrainConfig& c) { return train_supervised(d, c); });
  m.def("train_semisupervised", [](const std::vector<FeatureInstance>& l, const std::vector<FeatureInstance>& u,
                                   const TrainConfig& c) { return train_semisupervised(l, u, c); });
  m.def("predict", &predict, py::arg("weights"), py::arg("instance"), py::arg("mode") = PredictMode::map,
        py::arg("config") = TrainConfig{}, py::arg("seed") = 0);
}
