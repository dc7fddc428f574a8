#include "perturbmap/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "perturbmap/errors.hpp"

namespace pmap {

namespace {

// '#' starts a comment anywhere on the line
std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line.substr(0, line.find('#')));
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw InputError(line, "not a number: '" + s + "'");
  if (!std::isfinite(v)) throw InputError(line, "non-finite value: '" + s + "'");
  return v;
}

long long parse_int(const std::string& s, std::size_t line) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw InputError(line, "not an integer: '" + s + "'");
  return v;
}

int parse_count(const std::string& s, std::size_t line, const char* what) {
  long long v = parse_int(s, line);
  if (v < 0 || v > (1LL << 30)) throw InputError(line, std::string(what) + " out of range: " + s);
  return static_cast<int>(v);
}

struct Field {
  std::size_t line = 0;
  std::vector<std::string> values;
};

class RecordBuilder {
 public:
  explicit RecordBuilder(std::size_t start) : start_(start) {}

  void add(const std::string& name, Field f) {
    static const char* known[] = {"num_vars",      "structure", "label_counts",  "edges",  "node_dim",
                                  "node_features", "edge_dim",  "edge_features", "labels", "volumes"};
    bool ok = false;
    for (const char* k : known) ok = ok || name == k;
    if (!ok) throw InputError(f.line, "unknown field '" + name + "'");
    if (fields_.count(name)) throw InputError(f.line, "duplicate field '" + name + "'");
    fields_.emplace(name, std::move(f));
  }

  FeatureInstance build(std::size_t end_line) const {
    const Field& nv = require("num_vars", end_line);
    if (nv.values.size() != 1) throw InputError(nv.line, "num_vars takes one value");
    const int D = parse_count(nv.values[0], nv.line, "num_vars");

    const Field& lc = require("label_counts", end_line);
    if (lc.values.size() != static_cast<std::size_t>(D))
      throw InputError(lc.line, "label_counts has " + std::to_string(lc.values.size()) + " entries, expected " +
                                    std::to_string(D));
    std::vector<int> counts;
    for (const auto& s : lc.values) {
      int k = parse_count(s, lc.line, "label count");
      if (k < 1) throw InputError(lc.line, "label count must be positive");
      counts.push_back(k);
    }

    const Field& ef = require("edges", end_line);
    if (ef.values.size() % 2 != 0) throw InputError(ef.line, "edges must list index pairs");
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < ef.values.size(); i += 2)
      edges.push_back({parse_count(ef.values[i], ef.line, "edge endpoint"),
                       parse_count(ef.values[i + 1], ef.line, "edge endpoint")});

    ModelPtr model;
    try {
      auto st = fields_.find("structure");
      if (st == fields_.end()) {
        model = std::make_shared<const PairwiseModel>(PairwiseModel::infer_kind(counts, edges));
      } else {
        if (st->second.values.size() != 1) throw InputError(st->second.line, "structure takes one value");
        const std::string& s = st->second.values[0];
        StructureKind kind;
        if (s == "chain")
          kind = StructureKind::chain;
        else if (s == "grid")
          kind = StructureKind::grid;
        else if (s == "general")
          kind = StructureKind::general;
        else
          throw InputError(st->second.line, "unknown structure '" + s + "'");
        model = std::make_shared<const PairwiseModel>(counts, edges, kind);
      }
    } catch (const StructuralError& e) {
      throw InputError(ef.line, e.what());
    }

    FeatureInstance x;
    x.model = model;
    x.node_features = doubles("node_features", end_line);
    x.edge_features = doubles("edge_features", end_line);
    x.node_dim = dim("node_dim", "node_features", x.node_features.size(), static_cast<std::size_t>(D), end_line);
    x.edge_dim = dim("edge_dim", "edge_features", x.edge_features.size(),
                     static_cast<std::size_t>(model->num_edges()), end_line);

    const Field& lb = require("labels", end_line);
    if (lb.values.size() != static_cast<std::size_t>(D)) throw InputError(lb.line, "labels length mismatch");
    for (std::size_t d = 0; d < lb.values.size(); ++d) {
      if (lb.values[d] == "_") {
        x.labels.emplace_back();
      } else {
        int k = parse_count(lb.values[d], lb.line, "label");
        if (k >= counts[d]) throw InputError(lb.line, "label out of range at variable " + std::to_string(d));
        x.labels.emplace_back(k);
      }
    }

    auto vf = fields_.find("volumes");
    if (vf == fields_.end()) {
      x.volumes.assign(static_cast<std::size_t>(D), 1.0);
    } else {
      x.volumes = doubles("volumes", end_line);
      if (x.volumes.size() != static_cast<std::size_t>(D))
        throw InputError(vf->second.line, "volumes length mismatch");
      for (double v : x.volumes)
        if (!(v > 0.0)) throw InputError(vf->second.line, "volumes must be positive");
    }

    try {
      x.validate();
    } catch (const StructuralError& e) {
      throw InputError(start_, e.what());
    }
    return x;
  }

 private:
  const Field& require(const std::string& name, std::size_t end_line) const {
    auto it = fields_.find(name);
    if (it == fields_.end()) throw InputError(end_line, "record missing field '" + name + "'");
    return it->second;
  }

  std::vector<double> doubles(const std::string& name, std::size_t end_line) const {
    const Field& f = require(name, end_line);
    std::vector<double> v;
    v.reserve(f.values.size());
    for (const auto& s : f.values) v.push_back(parse_double(s, f.line));
    return v;
  }

  int dim(const std::string& dim_name, const std::string& feat_name, std::size_t count, std::size_t rows,
          std::size_t end_line) const {
    auto it = fields_.find(dim_name);
    const std::size_t line = require(feat_name, end_line).line;
    if (it != fields_.end()) {
      if (it->second.values.size() != 1) throw InputError(it->second.line, dim_name + " takes one value");
      int n = parse_count(it->second.values[0], it->second.line, dim_name.c_str());
      if (count != rows * static_cast<std::size_t>(n))
        throw InputError(line, feat_name + " has " + std::to_string(count) + " values, expected " +
                                   std::to_string(rows * static_cast<std::size_t>(n)));
      return n;
    }
    if (rows == 0) {
      if (count != 0) throw InputError(line, feat_name + " given for zero rows");
      return 0;
    }
    if (count % rows != 0) throw InputError(line, feat_name + " count is not a multiple of " + std::to_string(rows));
    return static_cast<int>(count / rows);
  }

  std::size_t start_;
  std::map<std::string, Field> fields_;
};

template <class T, class F>
void write_list(std::ostream& out, const char* name, const std::vector<T>& v, F fmt) {
  out << name;
  for (const auto& e : v) out << ' ' << fmt(e);
  out << '\n';
}

const char* kind_name(StructureKind k) {
  switch (k) {
    case StructureKind::chain: return "chain";
    case StructureKind::grid: return "grid";
    default: return "general";
  }
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(0, "cannot open '" + path + "'");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError(0, "cannot write '" + path + "'");
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::vector<FeatureInstance> read_dataset(std::istream& in) {
  std::vector<FeatureInstance> out;
  std::optional<RecordBuilder> rec;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = split(line);
    if (toks.empty()) continue;
    const std::string& key = toks[0];
    if (key == "record") {
      if (rec) throw InputError(n, "'record' inside an open record");
      if (toks.size() != 1) throw InputError(n, "'record' takes no values");
      rec.emplace(n);
    } else if (key == "end") {
      if (!rec) throw InputError(n, "'end' without 'record'");
      out.push_back(rec->build(n));
      rec.reset();
    } else {
      if (!rec) throw InputError(n, "field '" + key + "' outside a record");
      rec->add(key, Field{n, {toks.begin() + 1, toks.end()}});
    }
  }
  if (rec) throw InputError(n, "unterminated record at end of input");
  return out;
}

std::vector<FeatureInstance> read_dataset_file(const std::string& path) {
  auto in = open_in(path);
  return read_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const FeatureInstance> data) {
  auto num = [](double v) { return format_double(v); };
  auto integer = [](int v) { return std::to_string(v); };
  for (const auto& x : data) {
    x.validate();
    const auto& m = *x.model;
    out << "record\n";
    out << "num_vars " << m.num_vars() << '\n';
    out << "structure " << kind_name(m.kind()) << '\n';
    write_list(out, "label_counts", m.label_counts(), integer);
    out << "edges";
    for (const auto& e : m.edges()) out << ' ' << e.i << ' ' << e.j;
    out << '\n';
    out << "node_dim " << x.node_dim << '\n';
    write_list(out, "node_features", x.node_features, num);
    out << "edge_dim " << x.edge_dim << '\n';
    write_list(out, "edge_features", x.edge_features, num);
    write_list(out, "labels", x.labels,
               [](const std::optional<int>& l) { return l ? std::to_string(*l) : std::string("_"); });
    write_list(out, "volumes", x.volumes, num);
    out << "end\n";
  }
}

void write_dataset_file(const std::string& path, std::span<const FeatureInstance> data) {
  auto out = open_out(path);
  write_dataset(out, data);
}

WeightVector read_weights(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  std::map<std::string, Field> fields;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    auto toks = split(line);
    if (toks.empty()) continue;
    if (!header) {
      if (toks.size() != 2 || toks[0] != "perturbmap-weights" || toks[1] != "1")
        throw InputError(n, "not a weights file");
      header = true;
      continue;
    }
    if (fields.count(toks[0])) throw InputError(n, "duplicate field '" + toks[0] + "'");
    fields[toks[0]] = Field{n, {toks.begin() + 1, toks.end()}};
  }
  if (!header) throw InputError(n, "empty weights file");
  auto get = [&](const std::string& k) -> const Field& {
    auto it = fields.find(k);
    if (it == fields.end()) throw InputError(n, "missing field '" + k + "'");
    return it->second;
  };
  auto one = [&](const std::string& k) -> const std::string& {
    const Field& f = get(k);
    if (f.values.size() != 1) throw InputError(f.line, k + " takes one value");
    return f.values[0];
  };
  WeightLayout l;
  l.num_labels = parse_count(one("num_labels"), get("num_labels").line, "num_labels");
  l.node_dim = parse_count(one("node_dim"), get("node_dim").line, "node_dim");
  l.edge_dim = parse_count(one("edge_dim"), get("edge_dim").line, "edge_dim");
  const std::string& pw = one("pairwise");
  if (pw == "label_pairs")
    l.pairwise = PairwiseParam::label_pairs;
  else if (pw == "potts")
    l.pairwise = PairwiseParam::potts;
  else
    throw InputError(get("pairwise").line, "unknown pairwise parameterization '" + pw + "'");
  if (l.num_labels < 1) throw InputError(get("num_labels").line, "num_labels must be positive");
  const Field& vals = get("values");
  if (vals.values.size() != l.size())
    throw InputError(vals.line, "expected " + std::to_string(l.size()) + " values, got " +
                                    std::to_string(vals.values.size()));
  WeightVector w(l);
  for (std::size_t i = 0; i < l.size(); ++i) w.values[i] = parse_double(vals.values[i], vals.line);
  return w;
}

WeightVector read_weights_file(const std::string& path) {
  auto in = open_in(path);
  return read_weights(in);
}

void write_weights(std::ostream& out, const WeightVector& w) {
  out << "perturbmap-weights 1\n";
  out << "num_labels " << w.layout.num_labels << '\n';
  out << "node_dim " << w.layout.node_dim << '\n';
  out << "edge_dim " << w.layout.edge_dim << '\n';
  out << "pairwise " << (w.layout.pairwise == PairwiseParam::potts ? "potts" : "label_pairs") << '\n';
  write_list(out, "values", w.values, [](double v) { return format_double(v); });
}

void write_weights_file(const std::string& path, const WeightVector& w) {
  auto out = open_out(path);
  write_weights(out, w);
}

std::string file_digest(const std::string& path) {
  auto in = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

}  // namespace pmap
