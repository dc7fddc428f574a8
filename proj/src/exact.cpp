#include "perturbmap/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "perturbmap/errors.hpp"

namespace pmap {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const std::vector<double>& v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

// link[d] = index of edge (d, d+1) or -1.
std::vector<int> chain_links(const PairwiseModel& m) {
  std::vector<int> link(static_cast<std::size_t>(std::max(m.num_vars() - 1, 0)), -1);
  for (int e = 0; e < m.num_edges(); ++e) link[static_cast<std::size_t>(m.edge(e).i)] = e;
  return link;
}

void require_chain(const PairwiseModel& m, const char* op) {
  if (m.kind() != StructureKind::chain)
    throw PreconditionError(std::string(op) + " requires a chain-structured model");
}

// Forward messages alpha_d(k) (log-space, offset excluded).
std::vector<std::vector<double>> forward_messages(const CompiledPotentials& p,
                                                  const std::vector<int>& link) {
  const PairwiseModel& m = p.model();
  const int D = m.num_vars();
  std::vector<std::vector<double>> alpha(static_cast<std::size_t>(D));
  std::vector<double> terms;
  for (int d = 0; d < D; ++d) {
    const auto u = p.unary(d);
    auto& a = alpha[static_cast<std::size_t>(d)];
    a.assign(u.begin(), u.end());
    if (d == 0) continue;
    const int e = link[static_cast<std::size_t>(d - 1)];
    const auto& prev = alpha[static_cast<std::size_t>(d - 1)];
    if (e < 0) {
      const double z = log_sum_exp(prev);
      for (double& x : a) x += z;
      continue;
    }
    for (int l = 0; l < m.labels(d); ++l) {
      terms.clear();
      for (int k = 0; k < m.labels(d - 1); ++k) terms.push_back(prev[static_cast<std::size_t>(k)] + p.pair(e, k, l));
      a[static_cast<std::size_t>(l)] += log_sum_exp(terms);
    }
  }
  return alpha;
}

std::vector<std::vector<double>> backward_messages(const CompiledPotentials& p,
                                                   const std::vector<int>& link) {
  const PairwiseModel& m = p.model();
  const int D = m.num_vars();
  std::vector<std::vector<double>> beta(static_cast<std::size_t>(D));
  std::vector<double> terms;
  for (int d = D - 1; d >= 0; --d) {
    auto& b = beta[static_cast<std::size_t>(d)];
    b.assign(static_cast<std::size_t>(m.labels(d)), 0.0);
    if (d == D - 1) continue;
    const int e = link[static_cast<std::size_t>(d)];
    const auto& next = beta[static_cast<std::size_t>(d + 1)];
    const auto un = p.unary(d + 1);
    for (int k = 0; k < m.labels(d); ++k) {
      terms.clear();
      for (int l = 0; l < m.labels(d + 1); ++l)
        terms.push_back((e < 0 ? 0.0 : p.pair(e, k, l)) + un[static_cast<std::size_t>(l)] +
                        next[static_cast<std::size_t>(l)]);
      b[static_cast<std::size_t>(k)] = log_sum_exp(terms);
    }
  }
  return beta;
}

}  // namespace

void MarginalTable::check(double tol) const {
  for (std::size_t d = 0; d < rows.size(); ++d) {
    double s = 0.0;
    for (double q : rows[d]) {
      if (!(q >= 0.0)) throw StructuralError("negative marginal at variable " + std::to_string(d));
      s += q;
    }
    if (std::abs(s - 1.0) > tol)
      throw StructuralError("marginal row " + std::to_string(d) + " does not sum to 1");
  }
}

Labeling MarginalTable::argmax() const {
  Labeling y(rows.size(), 0);
  for (std::size_t d = 0; d < rows.size(); ++d)
    y[d] = static_cast<int>(std::max_element(rows[d].begin(), rows[d].end()) - rows[d].begin());
  return y;
}

ExactInferenceResult brute_force(const CompiledPotentials& p) {
  const PairwiseModel& m = p.model();
  const std::size_t n = m.state_space_size();
  if (n > kBruteForceLimit)
    throw CapacityError("state space of " + std::to_string(n) + " labelings exceeds the brute-force limit");
  const int D = m.num_vars();

  std::vector<double> values(n);
  Labeling y(static_cast<std::size_t>(D), 0);
  ExactInferenceResult r;
  r.map_value = kNegInf;
  for (std::size_t s = 0; s < n; ++s) {
    const double f = evaluate_potential(p, y);
    values[s] = f;
    if (f > r.map_value) {
      r.map_value = f;
      r.map_labeling = y;
    }
    // Odometer increment, last variable fastest: lexicographic order.
    for (int d = D - 1; d >= 0; --d) {
      auto& yd = y[static_cast<std::size_t>(d)];
      if (++yd < m.labels(d)) break;
      yd = 0;
    }
  }

  const double shift = r.map_value;
  double z = 0.0;
  for (double f : values) z += std::exp(f - shift);
  r.log_partition = shift + std::log(z);

  r.marginals.rows.resize(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) r.marginals[d].assign(static_cast<std::size_t>(m.labels(d)), 0.0);
  std::fill(y.begin(), y.end(), 0);
  for (std::size_t s = 0; s < n; ++s) {
    const double w = std::exp(values[s] - shift) / z;
    for (int d = 0; d < D; ++d) r.marginals[d][static_cast<std::size_t>(y[static_cast<std::size_t>(d)])] += w;
    for (int d = D - 1; d >= 0; --d) {
      auto& yd = y[static_cast<std::size_t>(d)];
      if (++yd < m.labels(d)) break;
      yd = 0;
    }
  }
  return r;
}

Labeling brute_force_map(const CompiledPotentials& p) {
  const PairwiseModel& m = p.model();
  const std::size_t n = m.state_space_size();
  if (n > kBruteForceLimit)
    throw CapacityError("state space of " + std::to_string(n) + " labelings exceeds the brute-force limit");
  const int D = m.num_vars();
  Labeling y(static_cast<std::size_t>(D), 0);
  Labeling best = y;
  double best_value = kNegInf;
  for (std::size_t s = 0; s < n; ++s) {
    const double f = evaluate_potential(p, y);
    if (f > best_value) {
      best_value = f;
      best = y;
    }
    for (int d = D - 1; d >= 0; --d) {
      auto& yd = y[static_cast<std::size_t>(d)];
      if (++yd < m.labels(d)) break;
      yd = 0;
    }
  }
  return best;
}

bool is_path_forest(const PairwiseModel& m) noexcept {
  for (const Edge& e : m.edges())
    if (e.j != e.i + 1) return false;
  return true;
}

Labeling path_forest_map(const CompiledPotentials& p) {
  const PairwiseModel& m = p.model();
  if (!is_path_forest(m)) throw PreconditionError("chain solver requires edges of the form (d, d+1)");
  const int D = m.num_vars();
  if (D == 0) return {};
  const auto link = chain_links(m);

  std::vector<std::vector<double>> score(static_cast<std::size_t>(D));
  std::vector<std::vector<int>> back(static_cast<std::size_t>(D));
  const auto u0 = p.unary(0);
  score[0].assign(u0.begin(), u0.end());
  for (int d = 1; d < D; ++d) {
    const auto u = p.unary(d);
    const auto& prev = score[static_cast<std::size_t>(d - 1)];
    auto& cur = score[static_cast<std::size_t>(d)];
    auto& bp = back[static_cast<std::size_t>(d)];
    cur.assign(u.begin(), u.end());
    bp.assign(u.size(), 0);
    const int e = link[static_cast<std::size_t>(d - 1)];
    for (int l = 0; l < m.labels(d); ++l) {
      double best = kNegInf;
      int arg = 0;
      for (int k = 0; k < m.labels(d - 1); ++k) {
        const double s = prev[static_cast<std::size_t>(k)] + (e < 0 ? 0.0 : p.pair(e, k, l));
        if (s > best) {
          best = s;
          arg = k;
        }
      }
      cur[static_cast<std::size_t>(l)] += best;
      bp[static_cast<std::size_t>(l)] = arg;
    }
  }
  Labeling y(static_cast<std::size_t>(D));
  const auto& last = score.back();
  y.back() = static_cast<int>(std::max_element(last.begin(), last.end()) - last.begin());
  for (int d = D - 1; d > 0; --d)
    y[static_cast<std::size_t>(d - 1)] = back[static_cast<std::size_t>(d)][static_cast<std::size_t>(y[static_cast<std::size_t>(d)])];
  return y;
}

Labeling viterbi_map(const CompiledPotentials& p) {
  require_chain(p.model(), "viterbi_map");
  return path_forest_map(p);
}

double forward_log_partition(const CompiledPotentials& p) {
  require_chain(p.model(), "forward_log_partition");
  if (p.model().num_vars() == 0) return p.offset();
  const auto alpha = forward_messages(p, chain_links(p.model()));
  return p.offset() + log_sum_exp(alpha.back());
}

MarginalTable forward_backward_marginals(const CompiledPotentials& p) {
  require_chain(p.model(), "forward_backward_marginals");
  const PairwiseModel& m = p.model();
  const int D = m.num_vars();
  MarginalTable q;
  if (D == 0) return q;
  const auto link = chain_links(m);
  const auto alpha = forward_messages(p, link);
  const auto beta = backward_messages(p, link);
  const double logz = log_sum_exp(alpha.back());
  q.rows.resize(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) {
    auto& row = q[d];
    row.resize(static_cast<std::size_t>(m.labels(d)));
    double s = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      row[k] = std::exp(alpha[static_cast<std::size_t>(d)][k] + beta[static_cast<std::size_t>(d)][k] - logz);
      s += row[k];
    }
    for (double& x : row) x /= s;
  }
  return q;
}

std::vector<double> crf_exact_gradient(const WeightVector& w, const FeatureInstance& x,
                                       const Labeling& y) {
  const PairwiseModel& m = *x.model;
  require_chain(m, "crf_exact_gradient");
  m.check_labeling(y);
  const CompiledPotentials p = compile(w, x);
  const WeightLayout& L = w.layout;
  std::vector<double> grad = features(L, x, y);
  const int D = m.num_vars();
  if (D == 0) return grad;

  const auto link = chain_links(m);
  const auto alpha = forward_messages(p, link);
  const auto beta = backward_messages(p, link);
  const double logz = log_sum_exp(alpha.back());

  for (int d = 0; d < D; ++d) {
    const auto feat = x.node(d);
    for (int k = 0; k < m.labels(d); ++k) {
      const double q = std::exp(alpha[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] +
                                beta[static_cast<std::size_t>(d)][static_cast<std::size_t>(k)] - logz);
      double* g = grad.data() + L.unary_index(k, 0);
      for (std::size_t f = 0; f < feat.size(); ++f) g[f] -= q * feat[f];
    }
  }
  for (int e = 0; e < m.num_edges(); ++e) {
    const int i = m.edge(e).i;
    const auto feat = x.edge(e);
    const auto un = p.unary(i + 1);
    for (int k = 0; k < m.labels(i); ++k) {
      for (int l = 0; l < m.labels(i + 1); ++l) {
        if (L.pairwise == PairwiseParam::potts && k == l) continue;
        const double xi = std::exp(alpha[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] +
                                   p.pair(e, k, l) + un[static_cast<std::size_t>(l)] +
                                   beta[static_cast<std::size_t>(i + 1)][static_cast<std::size_t>(l)] - logz);
        double* g = grad.data() + L.pair_base(k, l);
        for (std::size_t f = 0; f < feat.size(); ++f) g[f] -= xi * feat[f];
      }
    }
  }
  return grad;
}

double crf_log_likelihood(const WeightVector& w, const FeatureInstance& x, const Labeling& y) {
  const CompiledPotentials p = compile(w, x);
  return evaluate_potential(p, y) - forward_log_partition(p);
}

}  // namespace pmap
