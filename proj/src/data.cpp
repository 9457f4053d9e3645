#include "deeppcr/data.hpp"

#include "deeppcr/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace deeppcr {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_u32_be(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
  bytes.push_back(static_cast<std::uint8_t>(v >> 24));
  bytes.push_back(static_cast<std::uint8_t>(v >> 16));
  bytes.push_back(static_cast<std::uint8_t>(v >> 8));
  bytes.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

void Dataset::validate() const {
  if (samples.size() != labels.size()) {
    throw ShapeError("dataset: samples and labels must have equal length");
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != feature_dim) {
      throw ShapeError("dataset: sample " + std::to_string(i) + " has wrong dimension");
    }
    if (labels[i] < 0 || labels[i] >= class_count) {
      throw ShapeError("dataset: label " + std::to_string(i) + " out of range");
    }
    if ((samples[i].array() < 0.0).any() || (samples[i].array() > 1.0).any()) {
      throw ShapeError("dataset: features must lie in [0,1]");
    }
  }
}

std::vector<Vector> parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw IdxTruncatedError("idx images: stream shorter than the magic");
  const std::uint32_t magic = read_u32_be(bytes, 0);
  if (magic != kImageMagic) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%08x", magic);
    throw IdxBadMagicError(std::string("idx images: bad magic ") + buf);
  }
  if (bytes.size() < 16) throw IdxTruncatedError("idx images: truncated header");
  const std::uint64_t count = read_u32_be(bytes, 4);
  const std::uint64_t rows = read_u32_be(bytes, 8);
  const std::uint64_t cols = read_u32_be(bytes, 12);
  if (rows == 0 || cols == 0) throw IdxDimensionError("idx images: zero image dimensions");
  const std::uint64_t expected = count * rows * cols;
  const std::uint64_t payload = bytes.size() - 16;
  if (payload < expected) {
    throw IdxTruncatedError("idx images: payload holds " + std::to_string(payload) +
                            " bytes, header declares " + std::to_string(expected));
  }
  if (payload > expected) {
    throw IdxDimensionError("idx images: payload larger than the declared dimensions");
  }
  std::vector<Vector> images(count);
  const std::uint64_t pixels = rows * cols;
  for (std::uint64_t i = 0; i < count; ++i) {
    images[i].resize(pixels);
    const std::uint8_t* p = bytes.data() + 16 + i * pixels;
    for (std::uint64_t j = 0; j < pixels; ++j) {
      images[i][j] = static_cast<double>(p[j]) / 255.0;
    }
  }
  return images;
}

std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw IdxTruncatedError("idx labels: stream shorter than the magic");
  const std::uint32_t magic = read_u32_be(bytes, 0);
  if (magic != kLabelMagic) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "0x%08x", magic);
    throw IdxBadMagicError(std::string("idx labels: bad magic ") + buf);
  }
  if (bytes.size() < 8) throw IdxTruncatedError("idx labels: truncated header");
  const std::uint64_t count = read_u32_be(bytes, 4);
  const std::uint64_t payload = bytes.size() - 8;
  if (payload < count) {
    throw IdxTruncatedError("idx labels: payload holds " + std::to_string(payload) +
                            " labels, header declares " + std::to_string(count));
  }
  if (payload > count) {
    throw IdxDimensionError("idx labels: payload larger than the declared count");
  }
  std::vector<int> labels(count);
  for (std::uint64_t i = 0; i < count; ++i) labels[i] = bytes[8 + i];
  return labels;
}

std::vector<std::uint8_t> serialize_idx_images(const std::vector<Vector>& images, int rows,
                                               int cols) {
  std::vector<std::uint8_t> bytes;
  write_u32_be(bytes, kImageMagic);
  write_u32_be(bytes, static_cast<std::uint32_t>(images.size()));
  write_u32_be(bytes, static_cast<std::uint32_t>(rows));
  write_u32_be(bytes, static_cast<std::uint32_t>(cols));
  for (const Vector& img : images) {
    if (img.size() != static_cast<Eigen::Index>(rows) * cols) {
      throw ShapeError("serialize idx: image size does not match rows*cols");
    }
    for (Eigen::Index j = 0; j < img.size(); ++j) {
      bytes.push_back(static_cast<std::uint8_t>(std::lround(img[j] * 255.0)));
    }
  }
  return bytes;
}

std::vector<std::uint8_t> serialize_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> bytes;
  write_u32_be(bytes, kLabelMagic);
  write_u32_be(bytes, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) bytes.push_back(static_cast<std::uint8_t>(l));
  return bytes;
}

Dataset load_mnist_train(const std::string& dir) {
  auto images = parse_idx_images(read_file(dir + "/train-images-idx3-ubyte"));
  auto labels = parse_idx_labels(read_file(dir + "/train-labels-idx1-ubyte"));
  if (images.size() != labels.size()) {
    throw IdxDimensionError("mnist: image and label counts differ");
  }
  Dataset data;
  data.samples = std::move(images);
  data.labels = std::move(labels);
  data.feature_dim = data.samples.empty() ? 0 : static_cast<int>(data.samples[0].size());
  data.class_count = 10;
  return data;
}

std::string resolve_data_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  const char* env = std::getenv("DEEPPCR_DATA_DIR");
  return env != nullptr ? std::string(env) : std::string();
}

Dataset synthetic_classification(int n, int feature_dim, int class_count, std::uint64_t seed) {
  if (n < 1) throw ShapeError("synthetic dataset: n must be >= 1");
  if (feature_dim < 1 || class_count < 1) {
    throw ShapeError("synthetic dataset: dimensions must be >= 1");
  }
  Rng rng(seed);
  // Class centers on a sphere of radius 3 (pre-squash units, sigma = 1);
  // in high dimension random centers sit ~ radius*sqrt(2) apart.
  std::vector<Vector> centers(class_count);
  for (int c = 0; c < class_count; ++c) {
    Vector v = rng.gaussian_vector(feature_dim);
    const double norm = v.norm();
    centers[c] = norm > 0 ? Vector(3.0 * v / norm) : Vector::Zero(feature_dim);
  }
  Dataset data;
  data.feature_dim = feature_dim;
  data.class_count = class_count;
  data.samples.resize(n);
  data.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    const int c = i % class_count;
    Vector x = centers[c] + rng.gaussian_vector(feature_dim);
    // squash into [0,1], keeping the classes linearly separable
    data.samples[i] = (1.0 / (1.0 + (-x.array()).exp())).matrix();
    data.labels[i] = c;
  }
  return data;
}

std::vector<Vector> synthetic_gaussian(int n, int dim, std::uint64_t seed) {
  if (n < 1) throw ShapeError("synthetic gaussian: n must be >= 1");
  Rng rng(seed);
  std::vector<Vector> out(n);
  for (int i = 0; i < n; ++i) out[i] = rng.gaussian_vector(dim);
  return out;
}

}  // namespace deeppcr
