#include "perturbmap/model.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "perturbmap/errors.hpp"

namespace pmap {

namespace {

bool is_exact_chain(int num_vars, const std::vector<Edge>& edges) {
  if (static_cast<int>(edges.size()) != std::max(num_vars - 1, 0)) return false;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (edges[e].i != static_cast<int>(e) || edges[e].j != static_cast<int>(e) + 1) return false;
  }
  return true;
}

}  // namespace

PairwiseModel::PairwiseModel(std::vector<int> label_counts, std::vector<Edge> edges,
                             StructureKind kind)
    : label_counts_(std::move(label_counts)), edges_(std::move(edges)), kind_(kind) {
  const int D = num_vars();
  for (int d = 0; d < D; ++d) {
    if (label_counts_[static_cast<std::size_t>(d)] < 2)
      throw StructuralError("variable " + std::to_string(d) + " has fewer than 2 labels");
  }
  if (D > 0) {
    max_labels_ = *std::max_element(label_counts_.begin(), label_counts_.end());
    min_labels_ = *std::min_element(label_counts_.begin(), label_counts_.end());
  }
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    if (ed.i < 0 || ed.j >= D || ed.i >= ed.j)
      throw StructuralError("edge " + std::to_string(e) + " is not an ordered in-range pair");
    if (e > 0 && !(edges_[e - 1] < ed))
      throw StructuralError("edge list must be sorted and duplicate-free");
  }
  if (kind_ == StructureKind::chain && !is_exact_chain(D, edges_))
    throw StructuralError("chain structure requires edges exactly {(d, d+1)}");

  incident_offsets_.assign(static_cast<std::size_t>(D) + 1, 0);
  for (const Edge& ed : edges_) {
    ++incident_offsets_[static_cast<std::size_t>(ed.i) + 1];
    ++incident_offsets_[static_cast<std::size_t>(ed.j) + 1];
  }
  std::partial_sum(incident_offsets_.begin(), incident_offsets_.end(), incident_offsets_.begin());
  incident_edges_.resize(edges_.size() * 2);
  std::vector<int> fill(incident_offsets_.begin(), incident_offsets_.end() - 1);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    incident_edges_[static_cast<std::size_t>(fill[static_cast<std::size_t>(edges_[e].i)]++)] =
        static_cast<int>(e);
    incident_edges_[static_cast<std::size_t>(fill[static_cast<std::size_t>(edges_[e].j)]++)] =
        static_cast<int>(e);
  }
}

PairwiseModel PairwiseModel::chain(int num_vars, int num_labels) {
  return chain(std::vector<int>(static_cast<std::size_t>(num_vars), num_labels));
}

PairwiseModel PairwiseModel::chain(std::vector<int> label_counts) {
  std::vector<Edge> edges;
  const int D = static_cast<int>(label_counts.size());
  for (int d = 0; d + 1 < D; ++d) edges.push_back({d, d + 1});
  return PairwiseModel(std::move(label_counts), std::move(edges), StructureKind::chain);
}

PairwiseModel PairwiseModel::grid(int rows, int cols, int num_labels) {
  if (rows < 1 || cols < 1) throw StructuralError("grid dimensions must be positive");
  std::vector<Edge> edges;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int v = r * cols + c;
      if (c + 1 < cols) edges.push_back({v, v + 1});
      if (r + 1 < rows) edges.push_back({v, v + cols});
    }
  }
  std::sort(edges.begin(), edges.end());
  return PairwiseModel(std::vector<int>(static_cast<std::size_t>(rows * cols), num_labels),
                       std::move(edges), StructureKind::grid);
}

PairwiseModel PairwiseModel::infer_kind(std::vector<int> label_counts, std::vector<Edge> edges) {
  const bool chain = is_exact_chain(static_cast<int>(label_counts.size()), edges);
  return PairwiseModel(std::move(label_counts), std::move(edges),
                       chain ? StructureKind::chain : StructureKind::general);
}

std::span<const int> PairwiseModel::incident(int d) const {
  const auto b = static_cast<std::size_t>(incident_offsets_.at(static_cast<std::size_t>(d)));
  const auto e = static_cast<std::size_t>(incident_offsets_.at(static_cast<std::size_t>(d) + 1));
  return {incident_edges_.data() + b, e - b};
}

std::size_t PairwiseModel::state_space_size() const noexcept {
  std::size_t n = 1;
  for (int k : label_counts_) {
    const auto kk = static_cast<std::size_t>(k);
    if (n > std::numeric_limits<std::size_t>::max() / kk) return std::numeric_limits<std::size_t>::max();
    n *= kk;
  }
  return n;
}

void PairwiseModel::check_labeling(const Labeling& y) const {
  if (static_cast<int>(y.size()) != num_vars())
    throw StructuralError("labeling has " + std::to_string(y.size()) + " entries, model has " +
                          std::to_string(num_vars()) + " variables");
  for (std::size_t d = 0; d < y.size(); ++d) {
    if (y[d] < 0 || y[d] >= label_counts_[d])
      throw StructuralError("label out of range at variable " + std::to_string(d));
  }
}

// ---------------------------------------------------------------------------

CompiledPotentials::CompiledPotentials(ModelPtr model) : model_(std::move(model)) {
  if (!model_) throw StructuralError("null model");
  const PairwiseModel& m = *model_;
  unary_offsets_.resize(static_cast<std::size_t>(m.num_vars()) + 1, 0);
  for (int d = 0; d < m.num_vars(); ++d)
    unary_offsets_[static_cast<std::size_t>(d) + 1] =
        unary_offsets_[static_cast<std::size_t>(d)] + static_cast<std::size_t>(m.labels(d));
  pair_offsets_.resize(static_cast<std::size_t>(m.num_edges()) + 1, 0);
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    pair_offsets_[static_cast<std::size_t>(e) + 1] =
        pair_offsets_[static_cast<std::size_t>(e)] +
        static_cast<std::size_t>(m.labels(ed.i) * m.labels(ed.j));
  }
  unary_.assign(unary_offsets_.back(), 0.0);
  pairwise_.assign(pair_offsets_.back(), 0.0);
}

std::span<double> CompiledPotentials::unary(int d) {
  const auto i = static_cast<std::size_t>(d);
  return {unary_.data() + unary_offsets_.at(i), unary_offsets_.at(i + 1) - unary_offsets_[i]};
}

std::span<const double> CompiledPotentials::unary(int d) const {
  const auto i = static_cast<std::size_t>(d);
  return {unary_.data() + unary_offsets_.at(i), unary_offsets_.at(i + 1) - unary_offsets_[i]};
}

std::span<double> CompiledPotentials::pairwise(int e) {
  const auto i = static_cast<std::size_t>(e);
  return {pairwise_.data() + pair_offsets_.at(i), pair_offsets_.at(i + 1) - pair_offsets_[i]};
}

std::span<const double> CompiledPotentials::pairwise(int e) const {
  const auto i = static_cast<std::size_t>(e);
  return {pairwise_.data() + pair_offsets_.at(i), pair_offsets_.at(i + 1) - pair_offsets_[i]};
}

double CompiledPotentials::pair(int e, int k, int l) const {
  const int kj = model_->labels(model_->edge(e).j);
  return pairwise(e)[static_cast<std::size_t>(k * kj + l)];
}

bool CompiledPotentials::is_supermodular_binary(double tol) const {
  if (!model_->is_binary() && model_->num_vars() > 0) return false;
  for (int e = 0; e < model_->num_edges(); ++e) {
    const auto t = pairwise(e);
    if (t[0] + t[3] < t[1] + t[2] - tol) return false;
  }
  return true;
}

double evaluate_potential(const CompiledPotentials& p, const Labeling& y) {
  const PairwiseModel& m = p.model();
  m.check_labeling(y);
  double f = p.offset();
  for (int d = 0; d < m.num_vars(); ++d) f += p.unary(d)[static_cast<std::size_t>(y[static_cast<std::size_t>(d)])];
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    f += p.pair(e, y[static_cast<std::size_t>(ed.i)], y[static_cast<std::size_t>(ed.j)]);
  }
  return f;
}

// ---------------------------------------------------------------------------

void FeatureInstance::validate() const {
  if (!model) throw StructuralError("instance has no model");
  const auto D = static_cast<std::size_t>(model->num_vars());
  const auto E = static_cast<std::size_t>(model->num_edges());
  if (node_dim < 0 || edge_dim < 0) throw StructuralError("negative feature dimension");
  if (node_features.size() != D * static_cast<std::size_t>(node_dim))
    throw StructuralError("node_features size does not match num_vars x node_dim");
  if (edge_features.size() != E * static_cast<std::size_t>(edge_dim))
    throw StructuralError("edge_features size does not match num_edges x edge_dim");
  if (labels.size() != D) throw StructuralError("labels length does not match num_vars");
  if (volumes.size() != D) throw StructuralError("volumes length does not match num_vars");
  for (std::size_t d = 0; d < D; ++d) {
    if (labels[d] && (*labels[d] < 0 || *labels[d] >= model->labels(static_cast<int>(d))))
      throw StructuralError("label out of range at variable " + std::to_string(d));
    if (!(volumes[d] > 0.0))
      throw StructuralError("volume must be positive at variable " + std::to_string(d));
  }
}

std::span<const double> FeatureInstance::node(int d) const {
  const auto n = static_cast<std::size_t>(node_dim);
  return {node_features.data() + static_cast<std::size_t>(d) * n, n};
}

std::span<const double> FeatureInstance::edge(int e) const {
  const auto n = static_cast<std::size_t>(edge_dim);
  return {edge_features.data() + static_cast<std::size_t>(e) * n, n};
}

bool FeatureInstance::fully_labeled() const noexcept {
  return std::all_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
}

bool FeatureInstance::has_any_label() const noexcept {
  return std::any_of(labels.begin(), labels.end(), [](const auto& l) { return l.has_value(); });
}

Labeling FeatureInstance::labeling() const {
  Labeling y(labels.size());
  for (std::size_t d = 0; d < labels.size(); ++d) {
    if (!labels[d]) throw StructuralError("variable " + std::to_string(d) + " is unlabeled");
    y[d] = *labels[d];
  }
  return y;
}

namespace {

void check_layout(const WeightLayout& layout, const FeatureInstance& x) {
  if (layout.node_dim != x.node_dim || layout.edge_dim != x.edge_dim)
    throw StructuralError("feature dimensions do not match the weight layout");
  if (x.model->num_vars() > 0 && x.model->max_labels() > layout.num_labels)
    throw StructuralError("instance has more labels than the weight layout");
}

double dot(const double* w, std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i];
  return s;
}

}  // namespace

CompiledPotentials compile(const WeightVector& w, const FeatureInstance& x) {
  const WeightLayout& L = w.layout;
  if (w.values.size() != L.size()) throw StructuralError("weight vector size does not match layout");
  check_layout(L, x);
  CompiledPotentials p(x.model);
  const PairwiseModel& m = *x.model;
  const double* wv = w.values.data();
  for (int d = 0; d < m.num_vars(); ++d) {
    auto u = p.unary(d);
    const auto feat = x.node(d);
    for (int k = 0; k < m.labels(d); ++k) u[static_cast<std::size_t>(k)] = dot(wv + L.unary_index(k, 0), feat);
  }
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    const int ki = m.labels(ed.i);
    const int kj = m.labels(ed.j);
    auto t = p.pairwise(e);
    const auto feat = x.edge(e);
    if (L.pairwise == PairwiseParam::potts) {
      const double disagree = dot(wv + L.pair_base(0, 1), feat);
      for (int k = 0; k < ki; ++k)
        for (int l = 0; l < kj; ++l) t[static_cast<std::size_t>(k * kj + l)] = k == l ? 0.0 : disagree;
    } else {
      for (int k = 0; k < ki; ++k)
        for (int l = 0; l < kj; ++l)
          t[static_cast<std::size_t>(k * kj + l)] = dot(wv + L.pair_base(k, l), feat);
    }
  }
  return p;
}

void accumulate_features(const WeightLayout& layout, const FeatureInstance& x, const Labeling& y,
                         double scale, std::span<double> out) {
  check_layout(layout, x);
  x.model->check_labeling(y);
  if (out.size() != layout.size()) throw StructuralError("feature buffer size does not match layout");
  const PairwiseModel& m = *x.model;
  for (int d = 0; d < m.num_vars(); ++d) {
    const auto feat = x.node(d);
    double* o = out.data() + layout.unary_index(y[static_cast<std::size_t>(d)], 0);
    for (std::size_t f = 0; f < feat.size(); ++f) o[f] += scale * feat[f];
  }
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    const int k = y[static_cast<std::size_t>(ed.i)];
    const int l = y[static_cast<std::size_t>(ed.j)];
    if (layout.pairwise == PairwiseParam::potts && k == l) continue;
    const auto feat = x.edge(e);
    double* o = out.data() + layout.pair_base(k, l);
    for (std::size_t g = 0; g < feat.size(); ++g) o[g] += scale * feat[g];
  }
}

std::vector<double> features(const WeightLayout& layout, const FeatureInstance& x, const Labeling& y) {
  std::vector<double> psi(layout.size(), 0.0);
  accumulate_features(layout, x, y, 1.0, psi);
  return psi;
}

// ---------------------------------------------------------------------------

void LossSpec::validate() const {
  if ((kind == LossKind::weighted_hamming) != weight_rule.has_value())
    throw StructuralError("weight rule must be given exactly for weighted Hamming loss");
  if (weight_rule && weight_rule->kind == WeightRule::Kind::per_label &&
      weight_rule->label_weights.empty())
    throw StructuralError("per-label weight rule needs label weights");
}

std::vector<double> class_volumes(const Labeling& y, std::span<const double> volumes, int num_labels) {
  if (y.size() != volumes.size()) throw StructuralError("labels and volumes differ in length");
  std::vector<double> v(static_cast<std::size_t>(num_labels), 0.0);
  for (std::size_t d = 0; d < y.size(); ++d) {
    if (y[d] < 0 || y[d] >= num_labels) throw StructuralError("label out of range");
    v[static_cast<std::size_t>(y[d])] += volumes[d];
  }
  return v;
}

std::vector<std::vector<double>> loss_weight_table(const LossSpec& spec,
                                                   std::span<const double> volumes,
                                                   std::span<const double> class_vol,
                                                   int num_labels) {
  spec.validate();
  const auto D = volumes.size();
  const auto K = static_cast<std::size_t>(num_labels);
  std::vector<std::vector<double>> theta(D, std::vector<double>(K, 1.0));
  if (spec.kind != LossKind::weighted_hamming) return theta;
  const WeightRule& rule = *spec.weight_rule;
  if (rule.kind == WeightRule::Kind::per_label) {
    if (rule.label_weights.size() < K) throw StructuralError("per-label weights shorter than label count");
    for (auto& row : theta)
      for (std::size_t k = 0; k < K; ++k) row[k] = rule.label_weights[k];
    return theta;
  }
  if (K != 2) throw StructuralError("volume-balanced weights are defined for binary labels only");
  if (class_vol.size() != K) throw StructuralError("class volume count does not match labels");
  double total = 0.0;
  for (double v : volumes) total += v;
  const double floor = rule.volume_floor * total;
  std::vector<double> vk(class_vol.begin(), class_vol.end());
  for (std::size_t k = 0; k < K; ++k) {
    if (vk[k] <= 0.0 && floor <= 0.0)
      throw DegenerateInstanceError("class " + std::to_string(k) +
                                    " has zero volume; weighted Hamming weights are undefined");
    vk[k] = std::max(vk[k], floor);
  }
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t k = 0; k < K; ++k) theta[d][k] = volumes[d] / (2.0 * vk[k]);
  return theta;
}

std::vector<double> loss_weights(const LossSpec& spec, const Labeling& y_true,
                                 std::span<const double> volumes, int num_labels) {
  spec.validate();
  std::vector<double> w(y_true.size(), 1.0);
  if (spec.kind != LossKind::weighted_hamming) return w;
  std::vector<double> cv;
  if (spec.weight_rule->kind == WeightRule::Kind::volume_balanced)
    cv = class_volumes(y_true, volumes, num_labels);
  const auto table = loss_weight_table(spec, volumes, cv, num_labels);
  for (std::size_t d = 0; d < y_true.size(); ++d) w[d] = table[d][static_cast<std::size_t>(y_true[d])];
  return w;
}

double loss(const LossSpec& spec, const Labeling& y_true, const Labeling& y_pred,
            std::span<const double> volumes) {
  spec.validate();
  if (y_true.size() != y_pred.size() || y_true.size() != volumes.size())
    throw StructuralError("loss inputs differ in length");
  if (spec.kind == LossKind::zero_one) return y_true == y_pred ? 0.0 : 1.0;
  if (y_true.empty()) return 0.0;
  int K = 2;
  for (std::size_t d = 0; d < y_true.size(); ++d) K = std::max({K, y_true[d] + 1, y_pred[d] + 1});
  if (spec.weight_rule && spec.weight_rule->kind == WeightRule::Kind::per_label)
    K = std::max(K, static_cast<int>(spec.weight_rule->label_weights.size()));
  const auto theta = loss_weights(spec, y_true, volumes, K);
  double s = 0.0;
  for (std::size_t d = 0; d < y_true.size(); ++d)
    if (y_true[d] != y_pred[d]) s += theta[d];
  return s / static_cast<double>(y_true.size());
}

}  // namespace pmap
