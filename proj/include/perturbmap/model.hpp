#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace pmap {

enum class StructureKind { chain, grid, general };

struct Edge {
  int i = 0;
  int j = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Per-variable label assignment.
using Labeling = std::vector<int>;

// Graph structure and label spaces of a discrete pairwise model.
class PairwiseModel {
 public:
  // Validates the edge list (sorted, i < j, in range, no duplicates) and the
  // structure tag. Throws StructuralError.
  PairwiseModel(std::vector<int> label_counts, std::vector<Edge> edges, StructureKind kind);

  static PairwiseModel chain(int num_vars, int num_labels);
  static PairwiseModel chain(std::vector<int> label_counts);
  // 4-connected rows x cols grid, row-major variable order.
  static PairwiseModel grid(int rows, int cols, int num_labels);
  // Tags the edge set as chain when it is exactly {(d, d+1)}, general otherwise.
  static PairwiseModel infer_kind(std::vector<int> label_counts, std::vector<Edge> edges);

  int num_vars() const noexcept { return static_cast<int>(label_counts_.size()); }
  int num_edges() const noexcept { return static_cast<int>(edges_.size()); }
  int labels(int d) const { return label_counts_.at(static_cast<std::size_t>(d)); }
  int max_labels() const noexcept { return max_labels_; }
  const std::vector<int>& label_counts() const noexcept { return label_counts_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Edge& edge(int e) const { return edges_.at(static_cast<std::size_t>(e)); }
  StructureKind kind() const noexcept { return kind_; }

  // Edge indices incident to d, ascending.
  std::span<const int> incident(int d) const;

  bool is_binary() const noexcept { return max_labels_ == 2 && min_labels_ == 2; }

  // Product of label counts, saturating at SIZE_MAX.
  std::size_t state_space_size() const noexcept;

  // Throws StructuralError unless y has one in-range label per variable.
  void check_labeling(const Labeling& y) const;

 private:
  std::vector<int> label_counts_;
  std::vector<Edge> edges_;
  StructureKind kind_;
  int max_labels_ = 0;
  int min_labels_ = 0;
  std::vector<int> incident_offsets_;
  std::vector<int> incident_edges_;
};

using ModelPtr = std::shared_ptr<const PairwiseModel>;

// Numeric unary and pairwise tables realizing
//   f(y) = offset + sum_d u_d(y_d) + sum_e p_e(y_i, y_j).
// The offset carries constants produced by clamping.
class CompiledPotentials {
 public:
  explicit CompiledPotentials(ModelPtr model);

  const PairwiseModel& model() const noexcept { return *model_; }
  const ModelPtr& model_ptr() const noexcept { return model_; }

  std::span<double> unary(int d);
  std::span<const double> unary(int d) const;

  // Row-major K_i x K_j table of edge e = (i, j).
  std::span<double> pairwise(int e);
  std::span<const double> pairwise(int e) const;

  double pair(int e, int k, int l) const;

  double offset() const noexcept { return offset_; }
  void set_offset(double c) noexcept { offset_ = c; }

  // p(0,0) + p(1,1) >= p(0,1) + p(1,0) - tol on every edge, all K_d = 2.
  bool is_supermodular_binary(double tol = 1e-12) const;

 private:
  ModelPtr model_;
  std::vector<std::size_t> unary_offsets_;
  std::vector<std::size_t> pair_offsets_;
  std::vector<double> unary_;
  std::vector<double> pairwise_;
  double offset_ = 0.0;
};

// f(y), summed in fixed order: offset, unaries by ascending variable,
// pairwise terms by ascending edge.
double evaluate_potential(const CompiledPotentials& p, const Labeling& y);

enum class PairwiseParam {
  // One weight block per label pair (k, l).
  label_pairs,
  // A single block scaling the disagreement indicator [k != l].
  potts,
};

// Index layout of the weight vector: unary block first, pairwise block after.
struct WeightLayout {
  int num_labels = 2;
  int node_dim = 1;
  int edge_dim = 1;
  PairwiseParam pairwise = PairwiseParam::label_pairs;

  std::size_t unary_size() const noexcept {
    return static_cast<std::size_t>(num_labels) * static_cast<std::size_t>(node_dim);
  }
  std::size_t pair_blocks() const noexcept {
    return pairwise == PairwiseParam::potts
               ? 1
               : static_cast<std::size_t>(num_labels) * static_cast<std::size_t>(num_labels);
  }
  std::size_t pairwise_size() const noexcept {
    return pair_blocks() * static_cast<std::size_t>(edge_dim);
  }
  std::size_t size() const noexcept { return unary_size() + pairwise_size(); }

  std::size_t unary_index(int k, int f) const noexcept {
    return static_cast<std::size_t>(k) * static_cast<std::size_t>(node_dim) +
           static_cast<std::size_t>(f);
  }
  // Start of the pairwise block used by label pair (k, l).
  std::size_t pair_base(int k, int l) const noexcept {
    const std::size_t block =
        pairwise == PairwiseParam::potts
            ? 0
            : static_cast<std::size_t>(k) * static_cast<std::size_t>(num_labels) +
                  static_cast<std::size_t>(l);
    return unary_size() + block * static_cast<std::size_t>(edge_dim);
  }

  friend bool operator==(const WeightLayout&, const WeightLayout&) = default;
};

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

struct WeightVector {
  WeightLayout layout;
  std::vector<double> values;

  WeightVector() = default;
  explicit WeightVector(const WeightLayout& l) : layout(l), values(l.size(), 0.0) {}

  IndexRange unary_block() const noexcept { return {0, layout.unary_size()}; }
  IndexRange pairwise_block() const noexcept { return {layout.unary_size(), layout.size()}; }
};

// One structured example: features on nodes and edges, optional labels and
// per-variable volumes (superpixel sizes; 1 by default).
struct FeatureInstance {
  ModelPtr model;
  int node_dim = 0;
  int edge_dim = 0;
  std::vector<double> node_features;  // num_vars x node_dim, row-major
  std::vector<double> edge_features;  // num_edges x edge_dim, row-major
  std::vector<std::optional<int>> labels;
  std::vector<double> volumes;

  // Throws StructuralError on shape, label-range or volume violations.
  void validate() const;

  std::span<const double> node(int d) const;
  std::span<const double> edge(int e) const;

  bool fully_labeled() const noexcept;
  bool has_any_label() const noexcept;
  // Throws StructuralError when a label is missing.
  Labeling labeling() const;
};

// Builds the unary and pairwise tables of f(y | x) = <w, Psi(x, y)>.
CompiledPotentials compile(const WeightVector& w, const FeatureInstance& x);

// Psi(x, y): the gradient of f(y | x) with respect to w.
std::vector<double> features(const WeightLayout& layout, const FeatureInstance& x,
                             const Labeling& y);

// out += scale * Psi(x, y).
void accumulate_features(const WeightLayout& layout, const FeatureInstance& x, const Labeling& y,
                         double scale, std::span<double> out);

enum class LossKind { zero_one, hamming, weighted_hamming };

struct WeightRule {
  enum class Kind {
    // theta_d(k) = V_d / (2 V_k) with V_k the total volume of class k.
    volume_balanced,
    // theta_d(k) = label_weights[k] for every d.
    per_label,
  };
  Kind kind = Kind::volume_balanced;
  std::vector<double> label_weights;
  // Lower clamp on class volumes as a fraction of sum V_d; 0 raises on
  // degenerate instances instead.
  double volume_floor = 0.0;
};

struct LossSpec {
  LossKind kind = LossKind::hamming;
  std::optional<WeightRule> weight_rule;

  static LossSpec zero_one() { return {LossKind::zero_one, std::nullopt}; }
  static LossSpec hamming() { return {LossKind::hamming, std::nullopt}; }
  static LossSpec weighted(WeightRule rule) { return {LossKind::weighted_hamming, std::move(rule)}; }
  static LossSpec volume_balanced(double volume_floor = 0.0) {
    return weighted({WeightRule::Kind::volume_balanced, {}, volume_floor});
  }
  static LossSpec unit_weights(int num_labels) {
    return weighted({WeightRule::Kind::per_label, std::vector<double>(num_labels, 1.0), 0.0});
  }

  // Throws StructuralError unless weight_rule is present iff weighted.
  void validate() const;
};

// Total volume of each class: result[k] = sum over {d : y_d = k} of V_d.
std::vector<double> class_volumes(const Labeling& y, std::span<const double> volumes, int num_labels);

// theta_d(k) for all d, k given per-class volumes, as a num_vars x K table.
// Class volumes below floor * sum V_d are clamped; with floor == 0 a zero
// class volume on a binary model raises DegenerateInstanceError.
std::vector<std::vector<double>> loss_weight_table(const LossSpec& spec,
                                                   std::span<const double> volumes,
                                                   std::span<const double> class_vol,
                                                   int num_labels);

// theta_d(y_d) per variable for a fully observed labeling; all ones for
// zero_one and hamming.
std::vector<double> loss_weights(const LossSpec& spec, const Labeling& y_true,
                                 std::span<const double> volumes, int num_labels);

double loss(const LossSpec& spec, const Labeling& y_true, const Labeling& y_pred,
            std::span<const double> volumes);

}  // namespace pmap
