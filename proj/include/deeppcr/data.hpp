#pragma once

#include "deeppcr/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace deeppcr {

struct Dataset {
  std::vector<Vector> samples;  // features in [0, 1]
  std::vector<int> labels;
  int feature_dim = 0;
  int class_count = 0;

  int size() const { return static_cast<int>(samples.size()); }
  void validate() const;
};

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class IdxBadMagicError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxTruncatedError : public IdxError {
 public:
  using IdxError::IdxError;
};
class IdxDimensionError : public IdxError {
 public:
  using IdxError::IdxError;
};

/// IDX image stream (magic 0x00000803, big-endian count/rows/cols header):
/// pixels are scaled from 0..255 to [0,1] and each image is flattened
/// row-major.
std::vector<Vector> parse_idx_images(const std::vector<std::uint8_t>& bytes);

/// IDX label stream (magic 0x00000801, big-endian count header).
std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> serialize_idx_images(const std::vector<Vector>& images, int rows,
                                               int cols);
std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels);

/// Loads train-images-idx3-ubyte / train-labels-idx1-ubyte from dir.
Dataset load_mnist_train(const std::string& dir);

/// Resolves the dataset directory: explicit flag first, then the
/// DEEPPCR_DATA_DIR environment variable; empty when neither is set.
std::string resolve_data_dir(const std::string& flag_value);

/// Gaussian blobs around class-specific centers, squashed into [0,1] with a
/// sigmoid; centers are spread far enough apart that a small MLP separates
/// them. Deterministic per seed.
Dataset synthetic_classification(int n, int feature_dim, int class_count, std::uint64_t seed);

std::vector<Vector> synthetic_gaussian(int n, int dim, std::uint64_t seed);

}  // namespace deeppcr
