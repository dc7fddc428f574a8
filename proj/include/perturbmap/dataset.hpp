#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "perturbmap/exact.hpp"
#include "perturbmap/model.hpp"

namespace pmap {

// Text dataset format, one block per instance:
//
//   record
//   num_vars 3
//   structure chain
//   label_counts 2 2 2
//   edges 0 1 1 2
//   node_dim 2
//   node_features 0.5 -1 2 0.25 0 1
//   edge_dim 1
//   edge_features 1 1
//   labels 0 _ 1
//   volumes 1 1 1
//   end
//
// Blank lines and lines starting with '#' are ignored. '_' marks an
// unobserved label. structure, node_dim and edge_dim are optional on input
// (inferred kind, dimension from the feature count); the writer always emits
// them. Doubles are written in shortest round-trip form, so
// write(read(write(x))) reproduces the bytes of write(x).

// Throws InputError with the offending line.
std::vector<FeatureInstance> read_dataset(std::istream& in);
std::vector<FeatureInstance> read_dataset_file(const std::string& path);

void write_dataset(std::ostream& out, std::span<const FeatureInstance> data);
void write_dataset_file(const std::string& path, std::span<const FeatureInstance> data);

// Weight artifact:
//   perturbmap-weights 1
//   num_labels 2
//   node_dim 3
//   edge_dim 1
//   pairwise potts
//   values ...
WeightVector read_weights(std::istream& in);
WeightVector read_weights_file(const std::string& path);
void write_weights(std::ostream& out, const WeightVector& w);
void write_weights_file(const std::string& path, const WeightVector& w);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_digest(const std::string& path);

}  // namespace pmap
