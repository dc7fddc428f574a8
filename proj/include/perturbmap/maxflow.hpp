#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <vector>

namespace pmap {

// Boykov-Kolmogorov augmenting-path max-flow with search-tree reuse between
// solves (Kohli-Torr dynamic cuts). Capacities are doubles; terminal arcs are
// stored per node as a single residual tr_cap (positive: residual from the
// source, negative: residual to the sink).
class BkGraph {
 public:
  enum class Segment { source, sink };

  explicit BkGraph(int num_nodes, int arc_hint = 0);

  int num_nodes() const noexcept { return static_cast<int>(nodes_.size()); }

  // Adds cap_source to the source->i arc and cap_sink to the i->sink arc.
  // Either may be negative as long as the result stays representable: the
  // common part is moved into the flow constant.
  void add_tweights(int i, double cap_source, double cap_sink);

  // Directed arc i->j with capacity cap and j->i with rev_cap.
  void add_edge(int i, int j, double cap, double rev_cap);

  // Runs max-flow and returns the total flow (including constants moved in
  // by add_tweights). With reuse_trees the search trees of the previous call
  // are kept and only nodes passed to mark_node are re-examined.
  double maxflow(bool reuse_trees = false);

  // Must be called for every node whose terminal capacity changed before a
  // maxflow(true) call.
  void mark_node(int i);

  // Side of the minimum cut. Free nodes go to default_segment.
  Segment what_segment(int i, Segment default_segment = Segment::source) const;

  double flow() const noexcept { return flow_; }
  double terminal_residual(int i) const { return nodes_.at(static_cast<std::size_t>(i)).tr_cap; }

  // Number of augmenting paths pushed since construction.
  std::uint64_t augmentations() const noexcept { return augmentations_; }

  // Residual capacity of arc id (arcs come in sister pairs 2k, 2k+1 in
  // add_edge order).
  double arc_residual(int a) const { return arcs_.at(static_cast<std::size_t>(a)).r_cap; }
  int num_arcs() const noexcept { return static_cast<int>(arcs_.size()); }

 private:
  static constexpr int kNone = -1;
  static constexpr int kTerminal = -2;
  static constexpr int kOrphan = -3;
  static constexpr int kInfiniteDist = 1 << 30;

  struct Node {
    int first = kNone;   // first outgoing arc
    int parent = kNone;  // arc to parent, kTerminal, kOrphan or kNone (free)
    int next = kNone;    // active-queue link; == own index for the last entry
    std::int64_t ts = 0;
    int dist = 0;
    bool is_sink = false;
    bool is_marked = false;
    double tr_cap = 0.0;
  };

  struct Arc {
    int head = 0;
    int next = kNone;
    int sister = 0;
    double r_cap = 0.0;
  };

  void set_active(int i);
  int next_active();
  void set_orphan(int i);
  void init_fresh();
  void init_reuse();
  void augment(int middle_arc);
  void adopt_orphans();
  void process_source_orphan(int i);
  void process_sink_orphan(int i);

  std::vector<Node> nodes_;
  std::vector<Arc> arcs_;
  int queue_first_[2] = {kNone, kNone};
  int queue_last_[2] = {kNone, kNone};
  std::deque<int> orphans_;
  double flow_ = 0.0;
  std::int64_t time_ = 0;
  bool solved_once_ = false;
  std::uint64_t augmentations_ = 0;
};

}  // namespace pmap
