#include "perturbmap/maxflow.hpp"

#include <algorithm>
#include <string>

#include "perturbmap/errors.hpp"

namespace pmap {

BkGraph::BkGraph(int num_nodes, int arc_hint) : nodes_(static_cast<std::size_t>(std::max(num_nodes, 0))) {
  arcs_.reserve(static_cast<std::size_t>(std::max(arc_hint, 0)) * 2);
}

void BkGraph::add_tweights(int i, double cap_source, double cap_sink) {
  Node& n = nodes_.at(static_cast<std::size_t>(i));
  const double delta = n.tr_cap;
  if (delta > 0)
    cap_source += delta;
  else
    cap_sink -= delta;
  flow_ += std::min(cap_source, cap_sink);
  n.tr_cap = cap_source - cap_sink;
}

void BkGraph::add_edge(int i, int j, double cap, double rev_cap) {
  if (i == j || i < 0 || j < 0 || i >= num_nodes() || j >= num_nodes())
    throw StructuralError("invalid arc endpoints");
  if (cap < 0 || rev_cap < 0) throw PreconditionError("arc capacities must be non-negative");
  const int a = static_cast<int>(arcs_.size());
  Arc fwd{j, nodes_[static_cast<std::size_t>(i)].first, a + 1, cap};
  Arc rev{i, nodes_[static_cast<std::size_t>(j)].first, a, rev_cap};
  arcs_.push_back(fwd);
  arcs_.push_back(rev);
  nodes_[static_cast<std::size_t>(i)].first = a;
  nodes_[static_cast<std::size_t>(j)].first = a + 1;
}

void BkGraph::mark_node(int i) {
  Node& n = nodes_.at(static_cast<std::size_t>(i));
  if (n.next == kNone) {
    if (queue_last_[1] != kNone)
      nodes_[static_cast<std::size_t>(queue_last_[1])].next = i;
    else
      queue_first_[1] = i;
    queue_last_[1] = i;
    n.next = i;
  }
  n.is_marked = true;
}

BkGraph::Segment BkGraph::what_segment(int i, Segment default_segment) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(i));
  if (n.parent != kNone) return n.is_sink ? Segment::sink : Segment::source;
  return default_segment;
}

void BkGraph::set_active(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.next != kNone) return;
  if (queue_last_[1] != kNone)
    nodes_[static_cast<std::size_t>(queue_last_[1])].next = i;
  else
    queue_first_[1] = i;
  queue_last_[1] = i;
  n.next = i;
}

// Pops the next active node that still belongs to a tree, or kNone.
int BkGraph::next_active() {
  for (;;) {
    int i = queue_first_[0];
    if (i == kNone) {
      queue_first_[0] = i = queue_first_[1];
      queue_last_[0] = queue_last_[1];
      queue_first_[1] = queue_last_[1] = kNone;
      if (i == kNone) return kNone;
    }
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.next == i)
      queue_first_[0] = queue_last_[0] = kNone;
    else
      queue_first_[0] = n.next;
    n.next = kNone;
    if (n.parent != kNone) return i;
  }
}

void BkGraph::set_orphan(int i) {
  nodes_[static_cast<std::size_t>(i)].parent = kOrphan;
  orphans_.push_back(i);
}

void BkGraph::init_fresh() {
  queue_first_[0] = queue_last_[0] = kNone;
  queue_first_[1] = queue_last_[1] = kNone;
  orphans_.clear();
  time_ = 0;
  for (int i = 0; i < num_nodes(); ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    n.next = kNone;
    n.is_marked = false;
    n.ts = time_;
    if (n.tr_cap > 0) {
      n.is_sink = false;
      n.parent = kTerminal;
      set_active(i);
      n.dist = 1;
    } else if (n.tr_cap < 0) {
      n.is_sink = true;
      n.parent = kTerminal;
      set_active(i);
      n.dist = 1;
    } else {
      n.parent = kNone;
    }
  }
}

void BkGraph::init_reuse() {
  int queue = queue_first_[1];
  queue_first_[0] = queue_last_[0] = kNone;
  queue_first_[1] = queue_last_[1] = kNone;
  orphans_.clear();
  ++time_;

  while (queue != kNone) {
    const int i = queue;
    Node& n = nodes_[static_cast<std::size_t>(i)];
    queue = n.next;
    if (queue == i) queue = kNone;
    n.next = kNone;
    n.is_marked = false;
    set_active(i);

    if (n.tr_cap == 0) {
      if (n.parent != kNone) set_orphan(i);
      continue;
    }
    if (n.tr_cap > 0) {
      if (n.parent == kNone || n.is_sink) {
        n.is_sink = false;
        for (int a = n.first; a != kNone; a = arcs_[static_cast<std::size_t>(a)].next) {
          const Arc& arc = arcs_[static_cast<std::size_t>(a)];
          Node& j = nodes_[static_cast<std::size_t>(arc.head)];
          if (j.is_marked) continue;
          if (j.parent == arc.sister) set_orphan(arc.head);
          if (j.parent != kNone && j.is_sink && arc.r_cap > 0) set_active(arc.head);
        }
      }
    } else {
      if (n.parent == kNone || !n.is_sink) {
        n.is_sink = true;
        for (int a = n.first; a != kNone; a = arcs_[static_cast<std::size_t>(a)].next) {
          const Arc& arc = arcs_[static_cast<std::size_t>(a)];
          Node& j = nodes_[static_cast<std::size_t>(arc.head)];
          if (j.is_marked) continue;
          if (j.parent == arc.sister) set_orphan(arc.head);
          if (j.parent != kNone && !j.is_sink && arcs_[static_cast<std::size_t>(arc.sister)].r_cap > 0)
            set_active(arc.head);
        }
      }
    }
    n.parent = kTerminal;
    n.ts = time_;
    n.dist = 1;
  }
  adopt_orphans();
}

void BkGraph::augment(int middle_arc) {
  Arc& mid = arcs_[static_cast<std::size_t>(middle_arc)];
  double bottleneck = mid.r_cap;

  // Source tree: walk from the tail of the middle arc to the terminal.
  int i = arcs_[static_cast<std::size_t>(mid.sister)].head;
  for (;;) {
    const int a = nodes_[static_cast<std::size_t>(i)].parent;
    if (a == kTerminal) break;
    const Arc& arc = arcs_[static_cast<std::size_t>(a)];
    bottleneck = std::min(bottleneck, arcs_[static_cast<std::size_t>(arc.sister)].r_cap);
    i = arc.head;
  }
  bottleneck = std::min(bottleneck, nodes_[static_cast<std::size_t>(i)].tr_cap);

  // Sink tree.
  i = mid.head;
  for (;;) {
    const int a = nodes_[static_cast<std::size_t>(i)].parent;
    if (a == kTerminal) break;
    const Arc& arc = arcs_[static_cast<std::size_t>(a)];
    bottleneck = std::min(bottleneck, arc.r_cap);
    i = arc.head;
  }
  bottleneck = std::min(bottleneck, -nodes_[static_cast<std::size_t>(i)].tr_cap);

  arcs_[static_cast<std::size_t>(mid.sister)].r_cap += bottleneck;
  mid.r_cap -= bottleneck;

  i = arcs_[static_cast<std::size_t>(mid.sister)].head;
  for (;;) {
    const int a = nodes_[static_cast<std::size_t>(i)].parent;
    if (a == kTerminal) break;
    Arc& arc = arcs_[static_cast<std::size_t>(a)];
    Arc& sis = arcs_[static_cast<std::size_t>(arc.sister)];
    arc.r_cap += bottleneck;
    sis.r_cap -= bottleneck;
    const int parent = arc.head;
    if (sis.r_cap == 0) set_orphan(i);
    i = parent;
  }
  nodes_[static_cast<std::size_t>(i)].tr_cap -= bottleneck;
  if (nodes_[static_cast<std::size_t>(i)].tr_cap == 0) set_orphan(i);

  i = mid.head;
  for (;;) {
    const int a = nodes_[static_cast<std::size_t>(i)].parent;
    if (a == kTerminal) break;
    Arc& arc = arcs_[static_cast<std::size_t>(a)];
    Arc& sis = arcs_[static_cast<std::size_t>(arc.sister)];
    sis.r_cap += bottleneck;
    arc.r_cap -= bottleneck;
    const int parent = arc.head;
    if (arc.r_cap == 0) set_orphan(i);
    i = parent;
  }
  nodes_[static_cast<std::size_t>(i)].tr_cap += bottleneck;
  if (nodes_[static_cast<std::size_t>(i)].tr_cap == 0) set_orphan(i);

  flow_ += bottleneck;
  ++augmentations_;
}

void BkGraph::adopt_orphans() {
  while (!orphans_.empty()) {
    const int i = orphans_.front();
    orphans_.pop_front();
    if (nodes_[static_cast<std::size_t>(i)].is_sink)
      process_sink_orphan(i);
    else
      process_source_orphan(i);
  }
}

void BkGraph::process_source_orphan(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  int d_min = kInfiniteDist;
  int a0_min = kNone;

  for (int a0 = n.first; a0 != kNone; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
    const Arc& arc0 = arcs_[static_cast<std::size_t>(a0)];
    if (arcs_[static_cast<std::size_t>(arc0.sister)].r_cap == 0) continue;
    int j = arc0.head;
    if (nodes_[static_cast<std::size_t>(j)].is_sink || nodes_[static_cast<std::size_t>(j)].parent == kNone) continue;
    // Distance of j to the source terminal, or infinite if rooted at an orphan.
    int d = 0;
    for (;;) {
      Node& nj = nodes_[static_cast<std::size_t>(j)];
      if (nj.ts == time_) {
        d += nj.dist;
        break;
      }
      const int a = nj.parent;
      ++d;
      if (a == kTerminal) {
        nj.ts = time_;
        nj.dist = 1;
        break;
      }
      if (a == kOrphan) {
        d = kInfiniteDist;
        break;
      }
      j = arcs_[static_cast<std::size_t>(a)].head;
    }
    if (d < kInfiniteDist) {
      if (d < d_min) {
        a0_min = a0;
        d_min = d;
      }
      for (j = arc0.head; nodes_[static_cast<std::size_t>(j)].ts != time_;
           j = arcs_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(j)].parent)].head) {
        nodes_[static_cast<std::size_t>(j)].ts = time_;
        nodes_[static_cast<std::size_t>(j)].dist = d--;
      }
    }
  }

  n.parent = a0_min;
  if (a0_min != kNone) {
    n.ts = time_;
    n.dist = d_min + 1;
    return;
  }
  // No valid parent: i becomes free; neighbours may need to grow into it.
  n.parent = kNone;
  for (int a0 = n.first; a0 != kNone; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
    const Arc& arc0 = arcs_[static_cast<std::size_t>(a0)];
    const int j = arc0.head;
    Node& nj = nodes_[static_cast<std::size_t>(j)];
    if (nj.is_sink || nj.parent == kNone) continue;
    if (arcs_[static_cast<std::size_t>(arc0.sister)].r_cap > 0) set_active(j);
    if (nj.parent != kTerminal && nj.parent != kOrphan &&
        arcs_[static_cast<std::size_t>(nj.parent)].head == i)
      set_orphan(j);
  }
}

void BkGraph::process_sink_orphan(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  int d_min = kInfiniteDist;
  int a0_min = kNone;

  for (int a0 = n.first; a0 != kNone; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
    const Arc& arc0 = arcs_[static_cast<std::size_t>(a0)];
    if (arc0.r_cap == 0) continue;
    int j = arc0.head;
    if (!nodes_[static_cast<std::size_t>(j)].is_sink || nodes_[static_cast<std::size_t>(j)].parent == kNone) continue;
    int d = 0;
    for (;;) {
      Node& nj = nodes_[static_cast<std::size_t>(j)];
      if (nj.ts == time_) {
        d += nj.dist;
        break;
      }
      const int a = nj.parent;
      ++d;
      if (a == kTerminal) {
        nj.ts = time_;
        nj.dist = 1;
        break;
      }
      if (a == kOrphan) {
        d = kInfiniteDist;
        break;
      }
      j = arcs_[static_cast<std::size_t>(a)].head;
    }
    if (d < kInfiniteDist) {
      if (d < d_min) {
        a0_min = a0;
        d_min = d;
      }
      for (j = arc0.head; nodes_[static_cast<std::size_t>(j)].ts != time_;
           j = arcs_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(j)].parent)].head) {
        nodes_[static_cast<std::size_t>(j)].ts = time_;
        nodes_[static_cast<std::size_t>(j)].dist = d--;
      }
    }
  }

  n.parent = a0_min;
  if (a0_min != kNone) {
    n.ts = time_;
    n.dist = d_min + 1;
    return;
  }
  n.parent = kNone;
  for (int a0 = n.first; a0 != kNone; a0 = arcs_[static_cast<std::size_t>(a0)].next) {
    const Arc& arc0 = arcs_[static_cast<std::size_t>(a0)];
    const int j = arc0.head;
    Node& nj = nodes_[static_cast<std::size_t>(j)];
    if (!nj.is_sink || nj.parent == kNone) continue;
    if (arc0.r_cap > 0) set_active(j);
    if (nj.parent != kTerminal && nj.parent != kOrphan &&
        arcs_[static_cast<std::size_t>(nj.parent)].head == i)
      set_orphan(j);
  }
}

double BkGraph::maxflow(bool reuse_trees) {
  if (reuse_trees && solved_once_)
    init_reuse();
  else
    init_fresh();
  solved_once_ = true;

  int current = kNone;
  for (;;) {
    int i = current;
    if (i != kNone) {
      nodes_[static_cast<std::size_t>(i)].next = kNone;
      if (nodes_[static_cast<std::size_t>(i)].parent == kNone) i = kNone;
    }
    if (i == kNone) {
      i = next_active();
      if (i == kNone) break;
    }

    // Growth: find an arc joining the two trees.
    int joining = kNone;
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.is_sink) {
      for (int a = n.first; a != kNone; a = arcs_[static_cast<std::size_t>(a)].next) {
        const Arc& arc = arcs_[static_cast<std::size_t>(a)];
        if (arc.r_cap == 0) continue;
        Node& j = nodes_[static_cast<std::size_t>(arc.head)];
        if (j.parent == kNone) {
          j.is_sink = false;
          j.parent = arc.sister;
          j.ts = n.ts;
          j.dist = n.dist + 1;
          set_active(arc.head);
        } else if (j.is_sink) {
          joining = a;
          break;
        } else if (j.ts <= n.ts && j.dist > n.dist) {
          j.parent = arc.sister;
          j.ts = n.ts;
          j.dist = n.dist + 1;
        }
      }
    } else {
      for (int a = n.first; a != kNone; a = arcs_[static_cast<std::size_t>(a)].next) {
        const Arc& arc = arcs_[static_cast<std::size_t>(a)];
        if (arcs_[static_cast<std::size_t>(arc.sister)].r_cap == 0) continue;
        Node& j = nodes_[static_cast<std::size_t>(arc.head)];
        if (j.parent == kNone) {
          j.is_sink = true;
          j.parent = arc.sister;
          j.ts = n.ts;
          j.dist = n.dist + 1;
          set_active(arc.head);
        } else if (!j.is_sink) {
          joining = arc.sister;
          break;
        } else if (j.ts <= n.ts && j.dist > n.dist) {
          j.parent = arc.sister;
          j.ts = n.ts;
          j.dist = n.dist + 1;
        }
      }
    }

    ++time_;
    if (joining != kNone) {
      // Keep i active without queueing it; it is revisited next round.
      nodes_[static_cast<std::size_t>(i)].next = i;
      current = i;
      augment(joining);
      adopt_orphans();
    } else {
      current = kNone;
    }
  }
  return flow_;
}

}  // namespace pmap
