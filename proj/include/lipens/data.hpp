#pragma once

#include "lipens/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lipens {

/// Classification dataset: inputs [N x d] (in [0,1] for image data), one
/// class index per row. Read-only after construction; safe to share.
struct LabeledDataset {
  enum class Split { Unspecified, Train, Heldout, Test };

  Tensor inputs;
  std::vector<int> labels;
  int class_count = 0;
  Split split_tag = Split::Unspecified;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }

  void validate() const;

  /// Rank-1 copy of one input row.
  Tensor row(Index i) const;

  /// Subset by row indices, preserving class_count and split_tag.
  LabeledDataset select(const std::vector<Index>& idx) const;
};

/// Parses an IDX image/label file pair (the MNIST binary format):
/// big-endian magic 0x00000803 / 0x00000801, dimension headers, unsigned
/// byte payload. Pixels are scaled to [0,1] by /255 and images flattened
/// row-major.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset as an IDX pair. Values are quantized to round(v*255)
/// clamped to [0,255]; rows*cols must equal the dataset width.
void save_idx(const LabeledDataset& ds, const std::string& images_path,
              const std::string& labels_path, Index rows, Index cols);

/// The four conventional MNIST files inside a directory.
struct MnistData {
  LabeledDataset train;
  LabeledDataset test;
};
MnistData load_mnist_dir(const std::string& dir);

/// Two Gaussian blobs at (0.3, 0.3) and (0.7, 0.7) with the given standard
/// deviation; classes alternate so |n0 - n1| <= 1. Deterministic in seed.
LabeledDataset make_blobs(Index n, double noise, std::uint64_t seed);

/// Two interleaved half-circles, rescaled into the unit box.
LabeledDataset make_two_moons(Index n, double noise, std::uint64_t seed);

/// Deterministic disjoint, exhaustive split by (train, heldout, test)
/// fractions that must sum to 1.
struct SplitResult {
  LabeledDataset train;
  LabeledDataset heldout;
  LabeledDataset test;
};
SplitResult split(const LabeledDataset& ds, double f_train, double f_heldout, double f_test,
                  std::uint64_t seed);

}  // namespace lipens
