#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include "perturbmap/dataset.hpp"
#include "perturbmap/errors.hpp"
#include "perturbmap/exact.hpp"
#include "perturbmap/synthetic.hpp"
#include "random_models.hpp"

using namespace pmap;
using namespace pmap::testing;

namespace {

std::string dump(std::span<const FeatureInstance> data) {
  std::ostringstream out;
  write_dataset(out, data);
  return out.str();
}

std::vector<FeatureInstance> load(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

std::size_t error_line(const std::string& text) {
  try {
    load(text);
  } catch (const InputError& e) {
    return e.line();
  }
  return 0;
}

const char* kSmall =
    "# two records\n"
    "record\n"
    "num_vars 3\n"
    "label_counts 2 2 2\n"
    "edges 0 1 1 2\n"
    "node_features 0.5 -1 2 0.25 0 1\n"
    "edge_features 1 1\n"
    "labels 0 _ 1\n"
    "volumes 1 2 3\n"
    "end\n"
    "\n"
    "record\n"
    "num_vars 1\n"
    "label_counts 3\n"
    "edges\n"
    "node_features 0.1\n"
    "edge_features\n"
    "labels 2\n"
    "volumes 4\n"
    "end\n";

}  // namespace

TEST(Dataset, TrailingCommentsIgnored) {
  auto data = load("record  # first\nnum_vars 2\nlabel_counts 2 2 # K\nedges 0 1\n"
                   "node_features 1 2 # one per var\nedge_features 1\nlabels 1 _ #\nend\n");
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data[0].node_features, (std::vector<double>{1, 2}));
  EXPECT_EQ(data[0].labels[0], 1);
  EXPECT_FALSE(data[0].labels[1].has_value());
}

TEST(Dataset, ParsesRecords) {
  auto data = load(kSmall);
  ASSERT_EQ(data.size(), 2u);
  const auto& x = data[0];
  EXPECT_EQ(x.model->num_vars(), 3);
  EXPECT_EQ(x.model->kind(), StructureKind::chain);
  EXPECT_EQ(x.node_dim, 2);
  EXPECT_EQ(x.edge_dim, 1);
  EXPECT_EQ(x.node_features[3], 0.25);
  EXPECT_EQ(x.labels[0], 0);
  EXPECT_FALSE(x.labels[1].has_value());
  EXPECT_EQ(x.labels[2], 1);
  EXPECT_EQ(x.volumes[2], 3.0);
  EXPECT_EQ(data[1].model->labels(0), 3);
  EXPECT_EQ(data[1].edge_dim, 0);
}

TEST(Dataset, WriteReadWriteIsByteIdentical) {
  std::mt19937_64 rng(11);
  std::vector<FeatureInstance> data;
  for (int i = 0; i < 20; ++i) {
    auto m = i % 2 ? share(PairwiseModel::grid(uniform_int(rng, 1, 3), uniform_int(rng, 1, 4), 2))
                   : share(PairwiseModel::chain(uniform_int(rng, 1, 6), uniform_int(rng, 2, 4)));
    auto x = random_instance(m, uniform_int(rng, 0, 3), uniform_int(rng, 1, 2), rng, i % 3 != 0);
    if (i % 3 == 1) x.labels[0].reset();
    // awkward doubles
    if (!x.node_features.empty()) x.node_features[0] = 0.1 + 0.2;
    if (x.node_features.size() > 1) x.node_features[1] = -1e-300;
    x.volumes[0] = 1.0 / 3.0;
    data.push_back(x);
  }
  const std::string a = dump(data);
  const auto back = load(a);
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].node_features, data[i].node_features);
    EXPECT_EQ(back[i].edge_features, data[i].edge_features);
    EXPECT_EQ(back[i].labels, data[i].labels);
    EXPECT_EQ(back[i].volumes, data[i].volumes);
    EXPECT_EQ(back[i].model->edges(), data[i].model->edges());
    EXPECT_EQ(back[i].model->kind(), data[i].model->kind());
  }
  EXPECT_EQ(dump(back), a);
}

TEST(Dataset, EmptyInput) {
  EXPECT_TRUE(load("").empty());
  EXPECT_TRUE(load("# nothing\n\n").empty());
  EXPECT_EQ(dump({}), "");
}

TEST(Dataset, ErrorsCarryLineNumbers) {
  std::string bad = kSmall;
  bad.replace(bad.find("0.25"), 4, "zz");
  EXPECT_EQ(error_line(bad), 6u);

  bad = kSmall;
  bad.replace(bad.find("labels 0 _ 1"), 12, "labels 0 _ 7");
  EXPECT_EQ(error_line(bad), 8u);

  bad = kSmall;
  bad.replace(bad.find("volumes 1 2 3"), 13, "volumes 1 0 3");
  EXPECT_EQ(error_line(bad), 9u);

  bad = kSmall;
  bad.replace(bad.find("edges 0 1 1 2"), 13, "edges 0 1 1 5");
  EXPECT_EQ(error_line(bad), 5u);

  bad = kSmall;
  bad.replace(bad.find("edge_features 1 1"), 17, "edge_features 1 1 1");
  EXPECT_EQ(error_line(bad), 7u);

  EXPECT_EQ(error_line("record\nnum_vars 1\n"), 2u);                        // unterminated
  EXPECT_EQ(error_line("num_vars 1\n"), 1u);                                // outside record
  EXPECT_EQ(error_line("record\nbogus 1\nend\n"), 2u);                      // unknown field
  EXPECT_EQ(error_line("record\nnum_vars 1\nnum_vars 1\nend\n"), 3u);       // duplicate
  EXPECT_EQ(error_line("record\nnum_vars 1\nend\n"), 3u);                   // missing fields
  EXPECT_EQ(error_line("record\nnum_vars 1\nlabel_counts 2\nedges\nnode_features nan\nedge_features\nlabels 0\nend\n"),
            5u);
}

TEST(Dataset, MissingFileIsInputError) {
  EXPECT_THROW(read_dataset_file("/nonexistent/dir/x.txt"), InputError);
}

TEST(Dataset, StructureFieldRespected) {
  std::string s = kSmall;
  s.insert(s.find("label_counts 2 2 2"), "structure general\n");
  EXPECT_EQ(load(s)[0].model->kind(), StructureKind::general);
  s = kSmall;
  s.insert(s.find("label_counts 2 2 2"), "structure ring\n");
  EXPECT_EQ(error_line(s), 4u);
}

TEST(Weights, RoundTrip) {
  std::mt19937_64 rng(3);
  for (auto pw : {PairwiseParam::label_pairs, PairwiseParam::potts}) {
    WeightVector w = random_weights({3, 4, 2, pw}, rng);
    w.values[0] = 0.1 + 0.2;
    std::ostringstream a;
    write_weights(a, w);
    std::istringstream in(a.str());
    WeightVector back = read_weights(in);
    EXPECT_EQ(back.layout, w.layout);
    EXPECT_EQ(back.values, w.values);
    std::ostringstream b;
    write_weights(b, back);
    EXPECT_EQ(a.str(), b.str());
  }
}

TEST(Weights, Malformed) {
  std::istringstream a("hello\n");
  EXPECT_THROW(read_weights(a), InputError);
  std::istringstream b("perturbmap-weights 1\nnum_labels 2\nnode_dim 1\nedge_dim 1\npairwise potts\nvalues 1 2\n");
  EXPECT_THROW(read_weights(b), InputError);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(1.0), "1");
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(0.1 + 0.2), "0.30000000000000004");
  std::mt19937_64 rng(5);
  for (int i = 0; i < 1000; ++i) {
    double v = uniform(rng, -1e6, 1e6) * std::pow(10.0, uniform_int(rng, -30, 30));
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

// --- synthetic -----------------------------------------------------------------

TEST(Synthetic, EmptyDataset) {
  SyntheticConfig cfg;
  cfg.num = 0;
  auto d = generate_synthetic(cfg);
  EXPECT_TRUE(d.instances.empty());
  EXPECT_EQ(dump(d.instances), "");
}

TEST(Synthetic, Deterministic) {
  for (auto kind : {SyntheticKind::chain, SyntheticKind::grid}) {
    SyntheticConfig cfg;
    cfg.kind = kind;
    cfg.num = 5;
    cfg.side = 4;
    cfg.teacher_seed = 9;
    cfg.seed = 21;
    cfg.label_noise = 0.1;
    EXPECT_EQ(dump(generate_synthetic(cfg).instances), dump(generate_synthetic(cfg).instances));
    auto other = cfg;
    other.seed = 22;
    EXPECT_NE(dump(generate_synthetic(cfg).instances), dump(generate_synthetic(other).instances));
  }
}

TEST(Synthetic, ShapesAndTeacher) {
  SyntheticConfig cfg;
  cfg.kind = SyntheticKind::grid;
  cfg.side = 3;
  cfg.num = 4;
  cfg.feat_dim = 3;
  auto d = generate_synthetic(cfg);
  ASSERT_EQ(d.instances.size(), 4u);
  for (const auto& x : d.instances) {
    EXPECT_EQ(x.model->num_vars(), 9);
    EXPECT_EQ(x.model->num_edges(), 12);
    EXPECT_TRUE(x.fully_labeled());
    for (double e : x.edge_features) EXPECT_GE(e, 0.0);
    for (double v : x.volumes) {
      EXPECT_GE(v, 1.0);
      EXPECT_LE(v, 10.0);
    }
  }
  auto pb = d.teacher.pairwise_block();
  for (std::size_t i = pb.begin; i < pb.end; ++i) EXPECT_LE(d.teacher.values[i], 0.0);
  EXPECT_EQ(d.teacher.layout.pairwise, PairwiseParam::potts);

  cfg.hide_labels = true;
  for (const auto& x : generate_synthetic(cfg).instances) EXPECT_FALSE(x.has_any_label());
}

TEST(Synthetic, InvalidShapes) {
  SyntheticConfig cfg;
  cfg.num = -1;
  EXPECT_THROW(generate_synthetic(cfg), StructuralError);
  cfg = {};
  cfg.kind = SyntheticKind::grid;
  cfg.labels = 3;
  EXPECT_THROW(generate_synthetic(cfg), StructuralError);
  cfg = {};
  cfg.label_noise = 1.5;
  EXPECT_THROW(generate_synthetic(cfg), StructuralError);
  cfg = {};
  cfg.vars = 0;
  EXPECT_THROW(generate_synthetic(cfg), StructuralError);
}

TEST(Synthetic, LabelNoiseAlwaysChangesAtOne) {
  SyntheticConfig cfg;
  cfg.num = 20;
  cfg.labels = 3;
  auto clean = generate_synthetic(cfg);
  cfg.label_noise = 1.0;
  auto noisy = generate_synthetic(cfg);
  for (std::size_t i = 0; i < clean.instances.size(); ++i)
    for (std::size_t d = 0; d < clean.instances[i].labels.size(); ++d)
      EXPECT_NE(clean.instances[i].labels[d], noisy.instances[i].labels[d]);
}

// Sampled joint frequencies against exp(f(y) - A) from enumeration.
TEST(Synthetic, ForwardFilterBackwardSampleIsExact) {
  std::mt19937_64 gen(17);
  auto p = random_chain(gen, 4, 2, 1.0);
  const double A = brute_force(p).log_partition;
  std::map<Labeling, int> counts;
  Rng rng(123);
  const int N = 40000;
  for (int i = 0; i < N; ++i) ++counts[sample_chain(p, rng)];
  int states = 0;
  for (int a = 0; a < 16; ++a) {
    Labeling y{a & 1, (a >> 1) & 1, (a >> 2) & 1, (a >> 3) & 1};
    const double prob = std::exp(evaluate_potential(p, y) - A);
    const double sd = std::sqrt(N * prob * (1 - prob));
    EXPECT_NEAR(counts[y], N * prob, 4.5 * sd + 1) << a;
    ++states;
  }
  EXPECT_EQ(states, 16);
}

TEST(Synthetic, SampleChainRejectsGrids) {
  std::mt19937_64 gen(1);
  auto p = random_supermodular(share(PairwiseModel::grid(2, 2, 2)), gen);
  Rng rng(1);
  EXPECT_THROW(sample_chain(p, rng), PreconditionError);
}

// The teacher's forward-backward argmax beats uniformly random guessing.
TEST(Synthetic, BayesPredictorBeatsRandom) {
  SyntheticConfig cfg;
  cfg.num = 200;
  cfg.vars = 8;
  cfg.labels = 3;
  cfg.teacher_seed = 4;
  cfg.seed = 5;
  auto data = generate_synthetic(cfg);
  std::mt19937_64 gen(6);
  double bayes = 0, random = 0;
  for (const auto& x : data.instances) {
    const Labeling y = x.labeling();
    const Labeling b = forward_backward_marginals(compile(data.teacher, x)).argmax();
    Labeling r(y.size());
    for (auto& l : r) l = uniform_int(gen, 0, 2);
    bayes += loss(LossSpec::hamming(), y, b, x.volumes);
    random += loss(LossSpec::hamming(), y, r, x.volumes);
  }
  EXPECT_LT(bayes, random);
}
