#ifndef HPROBE_DATASET_HPP_
#define HPROBE_DATASET_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace hprobe {

// Row-major so each token's vector is contiguous, matching the blob layout.
using FloatMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Inclusive token range [start, end] with a binary support label
// (1 = hallucinated).
struct SpanAnnotation {
  int start = 0;
  int end = 0;
  int label = 0;

  int length() const { return end - start + 1; }
  bool operator==(const SpanAnnotation&) const = default;
};

struct TokenSequence {
  std::string id;
  int num_tokens = 0;
  // layer index (1-based) -> [num_tokens x hidden_dim]
  std::map<int, FloatMatrix> states;
  std::vector<std::uint8_t> mask;
  std::vector<SpanAnnotation> spans;
  std::vector<std::uint8_t> token_labels;
  std::optional<std::vector<double>> nll;
  std::optional<FloatMatrix> dist_base;     // [num_tokens x vocab]
  std::optional<FloatMatrix> dist_adapted;  // [num_tokens x vocab]
};

// Byte offsets of one sequence's payloads inside the blob file.
struct SequenceIndex {
  std::string id;
  std::map<int, std::uint64_t> layer_offsets;
  std::optional<std::uint64_t> dist_base_offset;
  std::optional<std::uint64_t> dist_adapted_offset;
};

struct DatasetMeta {
  int hidden_dim = 0;
  int num_layers = 0;
  std::optional<int> vocab_size;
  // Layers with stored states; a subset of 1..num_layers.
  std::vector<int> layers;
  // "seed=<n>;config=<hex>" for generated data, "external" otherwise.
  std::string fingerprint = "external";
  // Filled by save_dataset/load_dataset; empty for in-memory datasets.
  std::vector<SequenceIndex> index;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<TokenSequence> sequences;

  bool has_layer(int layer) const;
  std::size_t num_tokens() const;
  // Fraction of unmasked tokens with label 1.
  double positive_rate() const;
};

// token_labels[i] = 1 iff i lies inside a span with label 1.
std::vector<std::uint8_t> labels_from_spans(
    const std::vector<SpanAnnotation>& spans, int num_tokens);

struct Violation {
  std::string sequence_id;
  std::string field;
  std::string message;
};

// Checks every type invariant; an empty result means the dataset is valid.
std::vector<Violation> validate(const Dataset& ds);

// Seeded partition of the sequences into (train, held-out). The train half
// receives round(train_fraction * n) sequences, clamped to [1, n - 1].
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  std::uint64_t seed);

}  // namespace hprobe

#endif  // HPROBE_DATASET_HPP_
