#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "perturbmap/maxflow.hpp"
#include "perturbmap/model.hpp"

namespace pmap {

inline constexpr double kSupermodularTolerance = 1e-12;

enum class CutArithmetic {
  floating,
  // Capacities rounded to multiples of 2^-20 so every flow sum is exact.
  fixed_point,
};

struct CutSolveStats {
  std::uint64_t solves = 0;
  std::uint64_t augmentations = 0;
  std::uint64_t last_augmentations = 0;
};

// Exact MAP for binary supermodular potentials via s-t min-cut on the energy
// E(y) = -f(y). Source side of the cut is label 0, sink side label 1.
// Successive solves reuse the residual graph and search trees, so a sequence
// of problems differing only in unary tables is solved incrementally.
class DynamicCutState {
 public:
  // Throws PreconditionError unless all K_d = 2 and every edge satisfies
  // p(0,0) + p(1,1) >= p(0,1) + p(1,0) within kSupermodularTolerance.
  explicit DynamicCutState(const CompiledPotentials& p,
                           CutArithmetic arithmetic = CutArithmetic::floating);

  // Maximizer of the current potentials and its value f(y). Forced variables
  // (see force_label) take their forced label.
  std::pair<Labeling, double> solve();

  // Replaces u_d with (u0, u1).
  void update_unary(int d, double u0, double u1);

  // Pins y_d = k by raising the terminal capacity of the other side above
  // everything incident to d. Undone by release.
  void force_label(int d, int k);
  void release(int d);

  // Potentials with all unary updates applied (forcing is not reflected).
  const CompiledPotentials& potentials() const noexcept { return current_; }

  // Energy of the cut induced by y on the stored capacities, constant included.
  double cut_energy(const Labeling& y) const;
  // Energy of the last minimum cut according to the flow value.
  double flow_energy() const noexcept { return constant_ + graph_.flow(); }

  const CutSolveStats& stats() const noexcept { return stats_; }

 private:
  double quantize(double x) const;
  void set_terminals(int d, double e0, double e1);
  double forcing_margin(int d) const;

  CompiledPotentials current_;
  CutArithmetic arithmetic_;
  BkGraph graph_;
  double constant_ = 0.0;
  // Pairwise-derived terminal costs: pair_e0_ for label 0, pair_e1_ for 1.
  std::vector<double> pair_e0_, pair_e1_;
  // Terminal costs currently installed in the graph.
  std::vector<double> term_e0_, term_e1_;
  std::vector<double> arc_cap_;  // one entry per model edge, arc i -> j
  std::vector<std::optional<int>> forced_;
  bool solved_ = false;
  CutSolveStats stats_;
};

// The problem over the unclamped variables after fixing some labels: clamped
// variables are removed, their pairwise terms folded into neighbour unaries
// and constants moved to the offset.
struct ClampedProblem {
  CompiledPotentials reduced;
  std::vector<int> original_index;  // reduced variable -> original variable
  Labeling given;                   // original labeling with -1 at free variables

  // Full labeling from a labeling of the reduced problem.
  Labeling expand(const Labeling& reduced_y) const;
};

ClampedProblem clamp_variable(const CompiledPotentials& p, int d, int k);
ClampedProblem clamp_variables(const CompiledPotentials& p,
                               const std::vector<std::optional<int>>& given);

}  // namespace pmap
