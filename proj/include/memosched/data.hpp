#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "memosched/rng.hpp"

namespace memosched {

enum class Split : std::uint8_t { train, val, test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct NoiseInfo {
  std::string type = "none";
  double rate = 0.0;
  std::uint64_t seed = 0;
};

// Features plus two label columns: the noisy labels the trainer sees and the
// clean ones, which stay private and are reachable only through metrics().
class NoisyDataset {
 public:
  NoisyDataset(Eigen::MatrixXd features, Eigen::VectorXi labels, std::vector<Split> split,
               int classes)
      : features_(std::move(features)),
        noisy_(labels),
        clean_(std::move(labels)),
        split_(std::move(split)),
        classes_(classes) {
    if (features_.rows() != noisy_.size() ||
        static_cast<Eigen::Index>(split_.size()) != noisy_.size()) {
      throw std::invalid_argument("NoisyDataset: row count mismatch");
    }
    if (classes_ < 2) throw std::invalid_argument("NoisyDataset: requires at least 2 classes");
    if ((noisy_.array() < 0).any() || (noisy_.array() >= classes_).any()) {
      throw std::invalid_argument("NoisyDataset: label outside class range");
    }
  }

  Eigen::Index rows() const { return features_.rows(); }
  Eigen::Index dim() const { return features_.cols(); }
  int classes() const { return classes_; }

  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXi& noisy_labels() const { return noisy_; }
  Split split_of(Eigen::Index i) const { return split_[static_cast<std::size_t>(i)]; }

  std::vector<int> indices_of(Split s) const {
    std::vector<int> out;
    for (Eigen::Index i = 0; i < rows(); ++i) {
      if (split_[static_cast<std::size_t>(i)] == s) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  const NoiseInfo& noise() const { return noise_; }

  // Metric-only window onto the hidden clean labels.
  class MetricsView {
   public:
    explicit MetricsView(const NoisyDataset& owner) : owner_(owner) {}
    const Eigen::VectorXi& clean_labels() const { return owner_.clean_; }
    bool is_clean(Eigen::Index i) const { return owner_.clean_(i) == owner_.noisy_(i); }
    double clean_fraction(Split s) const {
      std::int64_t total = 0, clean = 0;
      for (Eigen::Index i = 0; i < owner_.rows(); ++i) {
        if (owner_.split_[static_cast<std::size_t>(i)] != s) continue;
        ++total;
        if (is_clean(i)) ++clean;
      }
      return total == 0 ? 1.0 : static_cast<double>(clean) / static_cast<double>(total);
    }

   private:
    const NoisyDataset& owner_;
  };

  MetricsView metrics() const { return MetricsView(*this); }

  friend NoisyDataset inject_symmetric_noise(const NoisyDataset& base, double rate,
                                             std::uint64_t seed);
  friend NoisyDataset inject_pair_noise(const NoisyDataset& base, double rate, std::uint64_t seed);

 private:
  Eigen::MatrixXd features_;
  Eigen::VectorXi noisy_;
  Eigen::VectorXi clean_;
  std::vector<Split> split_;
  int classes_;
  NoiseInfo noise_;
};

namespace detail {

// 70 / 10 / 20 train / val / test assignment over a row order.
inline std::vector<Split> assign_splits(const std::vector<int>& order) {
  const std::size_t n = order.size();
  const auto n_train = static_cast<std::size_t>(0.7 * static_cast<double>(n));
  const auto n_val = static_cast<std::size_t>(0.1 * static_cast<double>(n));
  std::vector<Split> split(n, Split::test);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto row = static_cast<std::size_t>(order[pos]);
    if (pos < n_train) {
      split[row] = Split::train;
    } else if (pos < n_train + n_val) {
      split[row] = Split::val;
    }
  }
  return split;
}

// Helmert coordinates of a regular simplex with unit pairwise half-distance,
// scaled so class means sit pairwise distance 2 apart.
inline Eigen::MatrixXd simplex_means(int classes, int dim) {
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(classes, dim);
  if (classes - 1 <= dim) {
    for (int j = 1; j < classes; ++j) {
      const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
      for (int c = 0; c < classes; ++c) {
        double coord = 0.0;
        if (c < j) {
          coord = 1.0 / norm;
        } else if (c == j) {
          coord = -static_cast<double>(j) / norm;
        }
        means(c, j - 1) = coord * std::sqrt(2.0);
      }
    }
  } else {
    // too many classes for a simplex in this dimension; spread them on a
    // circle in the first two coordinates instead
    for (int c = 0; c < classes; ++c) {
      const double angle = 2.0 * 3.14159265358979323846 * c / classes;
      means(c, 0) = std::sqrt(2.0) * std::cos(angle);
      means(c, 1) = std::sqrt(2.0) * std::sin(angle);
    }
  }
  return means;
}

}  // namespace detail

// Noise-free Gaussian blobs, one isotropic cluster per class with means on a
// regular simplex at pairwise distance 2. Bayes-separable when spread stays
// well below 1.
inline NoisyDataset make_gaussian_mixture(int classes, int dim, int n_per_class, double spread,
                                          std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("make_gaussian_mixture: requires classes >= 2");
  if (dim < 2) throw std::invalid_argument("make_gaussian_mixture: requires dim >= 2");
  if (n_per_class < 1) throw std::invalid_argument("make_gaussian_mixture: requires n_per_class >= 1");
  if (!(spread >= 0.0)) throw std::invalid_argument("make_gaussian_mixture: requires spread >= 0");

  const Eigen::Index n = static_cast<Eigen::Index>(classes) * n_per_class;
  const Eigen::MatrixXd means = detail::simplex_means(classes, dim);
  Rng rng = Rng::derived(seed, {0xda7aull});

  Eigen::MatrixXd features(n, dim);
  Eigen::VectorXi labels(n);
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int s = 0; s < n_per_class; ++s, ++row) {
      labels(row) = c;
      for (int j = 0; j < dim; ++j) features(row, j) = means(c, j) + spread * rng.normal();
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  rng.shuffle(order);
  return NoisyDataset(std::move(features), std::move(labels), detail::assign_splits(order),
                      classes);
}

namespace detail {

inline std::uint32_t read_be32(std::ifstream& in, const std::string& path, std::size_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) {
    throw std::runtime_error("idx format error in " + path + " at offset " +
                             std::to_string(offset) + ": truncated header");
  }
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

}  // namespace detail

// Loads an idx3 image file and an idx1 label file into a noise-free dataset
// (pixels scaled to [0,1], labels restricted to 0..9). subsample_n keeps the
// first n rows only.
inline NoisyDataset load_idx(const std::string& images_path, const std::string& labels_path,
                             Eigen::Index subsample_n = 0) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw std::runtime_error("idx format error in " + images_path + " at offset 0: cannot open");
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw std::runtime_error("idx format error in " + labels_path + " at offset 0: cannot open");

  const std::uint32_t image_magic = detail::read_be32(images, images_path, 0);
  if (image_magic != 0x00000803u) {
    throw std::runtime_error("idx format error in " + images_path +
                             " at offset 0: bad magic, expected 0x00000803");
  }
  const std::uint32_t n_images = detail::read_be32(images, images_path, 4);
  const std::uint32_t n_rows = detail::read_be32(images, images_path, 8);
  const std::uint32_t n_cols = detail::read_be32(images, images_path, 12);

  const std::uint32_t label_magic = detail::read_be32(labels, labels_path, 0);
  if (label_magic != 0x00000801u) {
    throw std::runtime_error("idx format error in " + labels_path +
                             " at offset 0: bad magic, expected 0x00000801");
  }
  const std::uint32_t n_labels = detail::read_be32(labels, labels_path, 4);
  if (n_labels != n_images) {
    throw std::runtime_error("idx format error in " + labels_path +
                             " at offset 4: label count " + std::to_string(n_labels) +
                             " does not match image count " + std::to_string(n_images));
  }

  Eigen::Index n = static_cast<Eigen::Index>(n_images);
  if (subsample_n > 0) n = std::min(n, subsample_n);
  const Eigen::Index dim = static_cast<Eigen::Index>(n_rows) * static_cast<Eigen::Index>(n_cols);

  Eigen::MatrixXd features(n, dim);
  std::vector<unsigned char> pixel_row(static_cast<std::size_t>(dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    images.read(reinterpret_cast<char*>(pixel_row.data()), static_cast<std::streamsize>(dim));
    if (!images) {
      throw std::runtime_error("idx format error in " + images_path + " at offset " +
                               std::to_string(16 + i * dim) + ": truncated image data");
    }
    for (Eigen::Index j = 0; j < dim; ++j) {
      features(i, j) = static_cast<double>(pixel_row[static_cast<std::size_t>(j)]) / 255.0;
    }
  }

  Eigen::VectorXi label_vec(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    char byte = 0;
    labels.read(&byte, 1);
    if (!labels) {
      throw std::runtime_error("idx format error in " + labels_path + " at offset " +
                               std::to_string(8 + i) + ": truncated label data");
    }
    const int value = static_cast<unsigned char>(byte);
    if (value > 9) {
      throw std::runtime_error("idx format error in " + labels_path + " at offset " +
                               std::to_string(8 + i) + ": label " + std::to_string(value) +
                               " outside 0..9");
    }
    label_vec(i) = value;
  }

  // deterministic first-n split, no shuffle
  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);
  return NoisyDataset(std::move(features), std::move(label_vec), detail::assign_splits(order), 10);
}

// Flips each train-split label with the given probability, uniformly over the
// other classes. Validation and test labels are never touched.
inline NoisyDataset inject_symmetric_noise(const NoisyDataset& base, double rate,
                                           std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("inject_symmetric_noise: requires 0 <= rate < 1");
  NoisyDataset out = base;
  out.noise_ = NoiseInfo{"symmetric", rate, seed};
  Rng rng = Rng::derived(seed, {0x51f7ull});
  const int classes = base.classes();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (out.split_[static_cast<std::size_t>(i)] != Split::train) continue;
    if (rng.uniform() >= rate) continue;
    const int offset = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(classes - 1)));
    out.noisy_(i) = (out.clean_(i) + offset) % classes;
  }
  return out;
}

// Flips each train-split label to its paired class (y+1 mod C) with the given
// probability.
inline NoisyDataset inject_pair_noise(const NoisyDataset& base, double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("inject_pair_noise: requires 0 <= rate < 1");
  NoisyDataset out = base;
  out.noise_ = NoiseInfo{"pair", rate, seed};
  Rng rng = Rng::derived(seed, {0x9a12ull});
  const int classes = base.classes();
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (out.split_[static_cast<std::size_t>(i)] != Split::train) continue;
    if (rng.uniform() >= rate) continue;
    out.noisy_(i) = (out.clean_(i) + 1) % classes;
  }
  return out;
}

// Fraction of truly clean samples among the selected batch members.
inline double label_precision(const std::vector<int>& selected_indices,
                              const std::vector<bool>& batch_clean_mask) {
  if (selected_indices.empty()) {
    throw std::invalid_argument("label_precision: empty selection has no precision");
  }
  std::size_t clean = 0;
  for (int idx : selected_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= batch_clean_mask.size()) {
      throw std::invalid_argument("label_precision: index outside batch");
    }
    if (batch_clean_mask[static_cast<std::size_t>(idx)]) ++clean;
  }
  return static_cast<double>(clean) / static_cast<double>(selected_indices.size());
}

// CSV dump: feature columns, then y_noisy, y_clean, split.
inline std::string dataset_to_csv(const NoisyDataset& data) {
  std::string out;
  for (Eigen::Index j = 0; j < data.dim(); ++j) out += "x" + std::to_string(j) + ",";
  out += "y_noisy,y_clean,split\n";
  const auto metrics = data.metrics();
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", data.features()(i, j));
      out += buf;
      out += ',';
    }
    out += std::to_string(data.noisy_labels()(i)) + ',' +
           std::to_string(metrics.clean_labels()(i)) + ',' + to_string(data.split_of(i)) + '\n';
  }
  return out;
}

}  // namespace memosched
