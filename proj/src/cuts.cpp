#include "perturbmap/cuts.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "perturbmap/errors.hpp"

namespace pmap {

namespace {

constexpr double kFixedPointScale = 1048576.0;  // 2^20

}  // namespace

DynamicCutState::DynamicCutState(const CompiledPotentials& p, CutArithmetic arithmetic)
    : current_(p), arithmetic_(arithmetic), graph_(p.model().num_vars(), p.model().num_edges()) {
  const PairwiseModel& m = p.model();
  const int D = m.num_vars();
  if (D > 0 && !m.is_binary()) throw PreconditionError("graph cuts require binary labels");
  if (!p.is_supermodular_binary(kSupermodularTolerance))
    throw PreconditionError("potentials are not supermodular; graph cuts do not apply");

  const auto n = static_cast<std::size_t>(D);
  pair_e0_.assign(n, 0.0);
  pair_e1_.assign(n, 0.0);
  term_e0_.assign(n, 0.0);
  term_e1_.assign(n, 0.0);
  forced_.assign(n, std::nullopt);
  arc_cap_.assign(static_cast<std::size_t>(m.num_edges()), 0.0);

  // E(a, b) = A + (C - A)[a = 1] + (D - C)[b = 1] + (B + C - A - D)[a = 0, b = 1]
  // with A = E(0,0), B = E(0,1), C = E(1,0), D = E(1,1) and E = -p.
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    const auto t = p.pairwise(e);
    const double A = -t[0], B = -t[1], C = -t[2], Dd = -t[3];
    constant_ += A;
    pair_e1_[static_cast<std::size_t>(ed.i)] += C - A;
    pair_e1_[static_cast<std::size_t>(ed.j)] += Dd - C;
    const double cap = quantize(std::max(B + C - A - Dd, 0.0));
    arc_cap_[static_cast<std::size_t>(e)] = cap;
    graph_.add_edge(ed.i, ed.j, cap, 0.0);
  }
  for (int d = 0; d < D; ++d) {
    const auto u = current_.unary(d);
    set_terminals(d, pair_e0_[static_cast<std::size_t>(d)] - u[0], pair_e1_[static_cast<std::size_t>(d)] - u[1]);
  }
  constant_ -= current_.offset();
}

double DynamicCutState::quantize(double x) const {
  if (arithmetic_ == CutArithmetic::floating) return x;
  return std::round(x * kFixedPointScale) / kFixedPointScale;
}

void DynamicCutState::set_terminals(int d, double e0, double e1) {
  const auto i = static_cast<std::size_t>(d);
  e0 = quantize(e0);
  e1 = quantize(e1);
  const double ds = e1 - term_e1_[i];
  const double dt = e0 - term_e0_[i];
  if (ds == 0.0 && dt == 0.0) return;
  graph_.add_tweights(d, ds, dt);
  term_e0_[i] = e0;
  term_e1_[i] = e1;
  if (solved_) graph_.mark_node(d);
}

double DynamicCutState::forcing_margin(int d) const {
  const auto u = current_.unary(d);
  const auto i = static_cast<std::size_t>(d);
  double m = 1.0 + std::abs((pair_e0_[i] - u[0]) - (pair_e1_[i] - u[1]));
  for (int e : current_.model().incident(d)) m += arc_cap_[static_cast<std::size_t>(e)];
  return m;
}

void DynamicCutState::update_unary(int d, double u0, double u1) {
  if (d < 0 || d >= current_.model().num_vars())
    throw std::out_of_range("update_unary: variable " + std::to_string(d) + " out of range");
  auto u = current_.unary(d);
  u[0] = u0;
  u[1] = u1;
  if (const auto k = forced_[static_cast<std::size_t>(d)]) {
    force_label(d, *k);
    return;
  }
  const auto i = static_cast<std::size_t>(d);
  set_terminals(d, pair_e0_[i] - u0, pair_e1_[i] - u1);
}

void DynamicCutState::force_label(int d, int k) {
  if (d < 0 || d >= current_.model().num_vars())
    throw std::out_of_range("force_label: variable " + std::to_string(d) + " out of range");
  if (k != 0 && k != 1) throw StructuralError("force_label: label must be 0 or 1");
  const auto i = static_cast<std::size_t>(d);
  const auto u = current_.unary(d);
  const double f = forcing_margin(d);
  const double e0 = pair_e0_[i] - u[0] + (k == 1 ? f : 0.0);
  const double e1 = pair_e1_[i] - u[1] + (k == 0 ? f : 0.0);
  forced_[i] = k;
  set_terminals(d, e0, e1);
}

void DynamicCutState::release(int d) {
  if (d < 0 || d >= current_.model().num_vars())
    throw std::out_of_range("release: variable " + std::to_string(d) + " out of range");
  const auto i = static_cast<std::size_t>(d);
  forced_[i].reset();
  const auto u = current_.unary(d);
  set_terminals(d, pair_e0_[i] - u[0], pair_e1_[i] - u[1]);
}

double DynamicCutState::cut_energy(const Labeling& y) const {
  const PairwiseModel& m = current_.model();
  m.check_labeling(y);
  double e = constant_;
  for (int d = 0; d < m.num_vars(); ++d) {
    const auto i = static_cast<std::size_t>(d);
    e += y[i] == 0 ? term_e0_[i] : term_e1_[i];
  }
  for (int k = 0; k < m.num_edges(); ++k) {
    const Edge& ed = m.edge(k);
    if (y[static_cast<std::size_t>(ed.i)] == 0 && y[static_cast<std::size_t>(ed.j)] == 1)
      e += arc_cap_[static_cast<std::size_t>(k)];
  }
  return e;
}

std::pair<Labeling, double> DynamicCutState::solve() {
  const std::uint64_t before = graph_.augmentations();
  graph_.maxflow(solved_);
  solved_ = true;
  ++stats_.solves;
  stats_.last_augmentations = graph_.augmentations() - before;
  stats_.augmentations += stats_.last_augmentations;

  const PairwiseModel& m = current_.model();
  const int D = m.num_vars();
  Labeling y(static_cast<std::size_t>(D));
  double scale = 1.0 + std::abs(constant_);
  for (int d = 0; d < D; ++d) {
    const auto i = static_cast<std::size_t>(d);
    y[i] = graph_.what_segment(d) == BkGraph::Segment::sink ? 1 : 0;
    if (forced_[i] && *forced_[i] != y[i])
      throw InvariantViolation("forced variable " + std::to_string(d) + " left its label");
    scale += std::abs(term_e0_[i]) + std::abs(term_e1_[i]);
  }
  for (double c : arc_cap_) scale += c;
  const double cut = cut_energy(y);
  if (std::abs(cut - flow_energy()) > 1e-9 * scale)
    throw InvariantViolation("max-flow value differs from the extracted cut");
  const double value = evaluate_potential(current_, y);
  return {std::move(y), value};
}

// ---------------------------------------------------------------------------

Labeling ClampedProblem::expand(const Labeling& reduced_y) const {
  if (reduced_y.size() != original_index.size())
    throw StructuralError("reduced labeling has the wrong length");
  Labeling y = given;
  for (std::size_t r = 0; r < reduced_y.size(); ++r)
    y[static_cast<std::size_t>(original_index[r])] = reduced_y[r];
  return y;
}

ClampedProblem clamp_variables(const CompiledPotentials& p,
                               const std::vector<std::optional<int>>& given) {
  const PairwiseModel& m = p.model();
  const int D = m.num_vars();
  if (static_cast<int>(given.size()) != D) throw StructuralError("given labels have the wrong length");

  std::vector<int> new_index(static_cast<std::size_t>(D), -1);
  std::vector<int> original;
  std::vector<int> counts;
  Labeling fixed(static_cast<std::size_t>(D), -1);
  for (int d = 0; d < D; ++d) {
    const auto& g = given[static_cast<std::size_t>(d)];
    if (g) {
      if (*g < 0 || *g >= m.labels(d))
        throw StructuralError("clamp label out of range at variable " + std::to_string(d));
      fixed[static_cast<std::size_t>(d)] = *g;
    } else {
      new_index[static_cast<std::size_t>(d)] = static_cast<int>(original.size());
      original.push_back(d);
      counts.push_back(m.labels(d));
    }
  }
  std::vector<Edge> edges;
  std::vector<int> kept_edges;
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    const int a = new_index[static_cast<std::size_t>(ed.i)];
    const int b = new_index[static_cast<std::size_t>(ed.j)];
    if (a >= 0 && b >= 0) {
      edges.push_back({a, b});
      kept_edges.push_back(e);
    }
  }
  auto model = std::make_shared<const PairwiseModel>(PairwiseModel::infer_kind(counts, edges));
  ClampedProblem out{CompiledPotentials(model), original, fixed};
  CompiledPotentials& r = out.reduced;

  double offset = p.offset();
  for (int d = 0; d < D; ++d) {
    const int k = fixed[static_cast<std::size_t>(d)];
    if (k >= 0) offset += p.unary(d)[static_cast<std::size_t>(k)];
  }
  for (std::size_t v = 0; v < original.size(); ++v) {
    const auto src = p.unary(original[v]);
    auto dst = r.unary(static_cast<int>(v));
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (int e = 0; e < m.num_edges(); ++e) {
    const Edge& ed = m.edge(e);
    const int ki = fixed[static_cast<std::size_t>(ed.i)];
    const int kj = fixed[static_cast<std::size_t>(ed.j)];
    if (ki >= 0 && kj >= 0) {
      offset += p.pair(e, ki, kj);
    } else if (ki >= 0) {
      auto dst = r.unary(new_index[static_cast<std::size_t>(ed.j)]);
      for (int l = 0; l < m.labels(ed.j); ++l) dst[static_cast<std::size_t>(l)] += p.pair(e, ki, l);
    } else if (kj >= 0) {
      auto dst = r.unary(new_index[static_cast<std::size_t>(ed.i)]);
      for (int l = 0; l < m.labels(ed.i); ++l) dst[static_cast<std::size_t>(l)] += p.pair(e, l, kj);
    }
  }
  for (std::size_t e = 0; e < kept_edges.size(); ++e) {
    const auto src = p.pairwise(kept_edges[e]);
    auto dst = r.pairwise(static_cast<int>(e));
    std::copy(src.begin(), src.end(), dst.begin());
  }
  r.set_offset(offset);
  return out;
}

ClampedProblem clamp_variable(const CompiledPotentials& p, int d, int k) {
  const int D = p.model().num_vars();
  if (d < 0 || d >= D) throw StructuralError("clamp variable " + std::to_string(d) + " out of range");
  std::vector<std::optional<int>> given(static_cast<std::size_t>(D));
  given[static_cast<std::size_t>(d)] = k;
  return clamp_variables(p, given);
}

}  // namespace pmap
