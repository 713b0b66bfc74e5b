#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "advdet/binary_io.hpp"
#include "advdet/image.hpp"
#include "advdet/rng.hpp"

namespace advdet {

/// Labelled rasters. `ids` are provenance tags: the same source image keeps its
/// id through shuffles, splits and attacks, which is how train/eval overlap is
/// detected downstream.
template <class Item>
struct BasicDataset {
  std::string name;
  std::size_t num_classes = 0;
  std::vector<Item> images;
  std::vector<std::uint32_t> labels;
  std::vector<std::uint64_t> ids;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }
  Shape shape() const { return images.empty() ? Shape{} : images.front().shape(); }

  void validate() const {
    require(num_classes > 0, errc::invalid_input, "dataset '" + name + "' has no classes");
    require(images.size() == labels.size() && images.size() == ids.size(), errc::consistency,
            "dataset '" + name + "' has mismatched image/label/id counts");
    for (std::size_t i = 0; i < images.size(); ++i) {
      require(labels[i] < num_classes, errc::invalid_input, "label out of range in '" + name + "'");
      require(images[i].shape() == images[0].shape(), errc::invalid_input,
              "images in '" + name + "' differ in shape");
    }
  }

  void push(Item img, std::uint32_t label, std::uint64_t id) {
    images.push_back(std::move(img));
    labels.push_back(label);
    ids.push_back(id);
  }

  BasicDataset subset(std::span<const std::size_t> idx) const {
    BasicDataset out{name, num_classes, {}, {}, {}};
    out.images.reserve(idx.size());
    for (std::size_t i : idx) out.push(images.at(i), labels.at(i), ids.at(i));
    return out;
  }

  BasicDataset prefix(std::size_t n) const {
    std::vector<std::size_t> idx(std::min(n, size()));
    std::iota(idx.begin(), idx.end(), 0);
    return subset(idx);
  }
};

/// Images in [0,1] with class labels.
using LabeledDataset = BasicDataset<ImageTensor>;
/// Signed maps (detector inputs) with labels.
using MapDataset = BasicDataset<FeatureMap>;

/// Seeded permutation of the examples.
template <class Item>
BasicDataset<Item> shuffled(const BasicDataset<Item>& d, std::uint64_t seed) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  SeededRng rng(seed);
  rng.shuffle(std::span<std::size_t>(idx));
  return d.subset(idx);
}

template <class Item>
struct Split {
  BasicDataset<Item> train;
  BasicDataset<Item> test;
};

/// Seeded shuffle, then the first `train_fraction` of examples go to train.
template <class Item>
Split<Item> split_dataset(const BasicDataset<Item>& d, double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, errc::config, "split ratio must be in (0,1)");
  const BasicDataset<Item> s = shuffled(d, seed);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(s.size())));
  std::vector<std::size_t> a(n_train), b(s.size() - n_train);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), n_train);
  Split<Item> out{s.subset(a), s.subset(b)};
  out.train.name = d.name + "/train";
  out.test.name = d.name + "/test";
  return out;
}

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// MNIST IDX pair: 28x28x1 images scaled by 1/255.
inline LabeledDataset load_mnist(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const bytes img = read_file(images_path);
  const bytes lab = read_file(labels_path);
  require(img.size() >= 16, errc::io, "'" + images_path.string() + "' is truncated");
  require(lab.size() >= 8, errc::io, "'" + labels_path.string() + "' is truncated");
  require(read_be32(img, 0) == kIdxImagesMagic, errc::format,
          "'" + images_path.string() + "' does not start with the IDX image magic 0x00000803");
  require(read_be32(lab, 0) == kIdxLabelsMagic, errc::format,
          "'" + labels_path.string() + "' does not start with the IDX label magic 0x00000801");
  const std::uint32_t n = read_be32(img, 4), rows = read_be32(img, 8), cols = read_be32(img, 12);
  const std::uint32_t nl = read_be32(lab, 4);
  require(n == nl, errc::consistency,
          "image count " + std::to_string(n) + " != label count " + std::to_string(nl));
  require(rows > 0 && cols > 0, errc::format, "IDX image dimensions must be positive");
  const std::size_t px = static_cast<std::size_t>(rows) * cols;
  require(img.size() >= 16 + static_cast<std::size_t>(n) * px, errc::io, "'" + images_path.string() + "' is truncated");
  require(lab.size() >= 8 + static_cast<std::size_t>(n), errc::io, "'" + labels_path.string() + "' is truncated");

  LabeledDataset d{"mnist", 10, {}, {}, {}};
  d.images.reserve(n);
  const Shape s{rows, cols, 1};
  for (std::uint32_t i = 0; i < n; ++i) {
    std::vector<double> p(px);
    for (std::size_t k = 0; k < px; ++k) p[k] = img[16 + i * px + k] / 255.0;
    const std::uint32_t label = lab[8 + i];
    require(label < 10, errc::format, "MNIST label " + std::to_string(label) + " out of range");
    d.push(ImageTensor(s, std::move(p)), label, i);
  }
  return d;
}

inline constexpr std::size_t kCifarRecord = 3073;

/// CIFAR-10 binary batches: per record one label byte then 1024 R, 1024 G and
/// 1024 B bytes, reordered here to interleaved 32x32x3.
inline LabeledDataset load_cifar10(const std::vector<std::filesystem::path>& batch_paths) {
  LabeledDataset d{"cifar10", 10, {}, {}, {}};
  const Shape s{32, 32, 3};
  std::uint64_t next_id = 0;
  for (const auto& path : batch_paths) {
    const bytes b = read_file(path);
    require(b.size() % kCifarRecord == 0, errc::format,
            "'" + path.string() + "' size " + std::to_string(b.size()) + " is not a multiple of 3073");
    for (std::size_t off = 0; off < b.size(); off += kCifarRecord) {
      const std::uint32_t label = b[off];
      require(label < 10, errc::format, "CIFAR-10 label " + std::to_string(label) + " out of range");
      std::vector<double> p(s.size());
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 1024; ++i) p[i * 3 + c] = b[off + 1 + c * 1024 + i] / 255.0;
      d.push(ImageTensor(s, std::move(p)), label, next_id++);
    }
  }
  return d;
}

/// Two-class offline fixture: filled rectangles (label 0) and filled discs
/// (label 1) at random positions and sizes, plus uniform noise of amplitude
/// 0.05. Size ranges are disjoint in area (rectangle sides in [side/2, 3side/4],
/// disc radius in [side/8, side/5]), so total intensity alone separates the
/// classes. Classes alternate, so any n gives a balanced set (+-1).
inline LabeledDataset synth_shapes(std::size_t n, std::size_t side, SeededRng& rng) {
  require(n >= 2, errc::invalid_size, "synth_shapes needs n >= 2");
  require(side >= 16, errc::invalid_size, "synth_shapes needs side >= 16, got " + std::to_string(side));
  LabeledDataset d{"synth", 2, {}, {}, {}};
  const Shape s{side, side, 1};
  const double sd = static_cast<double>(side);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t label = static_cast<std::uint32_t>(i % 2);
    const double intensity = rng.next_uniform(0.6, 1.0);
    std::vector<double> p(s.size(), 0.0);
    if (label == 0) {
      const double w = rng.next_uniform(sd / 2, 3 * sd / 4), h = rng.next_uniform(sd / 2, 3 * sd / 4);
      const double x0 = rng.next_uniform(1.0, sd - w - 1.0), y0 = rng.next_uniform(1.0, sd - h - 1.0);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double cx = static_cast<double>(x) + 0.5, cy = static_cast<double>(y) + 0.5;
          if (cx >= x0 && cx < x0 + w && cy >= y0 && cy < y0 + h) p[y * side + x] = intensity;
        }
    } else {
      const double r = rng.next_uniform(sd / 8, sd / 5);
      const double cx0 = rng.next_uniform(r + 1.0, sd - r - 1.0), cy0 = rng.next_uniform(r + 1.0, sd - r - 1.0);
      for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx0, dy = static_cast<double>(y) + 0.5 - cy0;
          if (dx * dx + dy * dy <= r * r) p[y * side + x] = intensity;
        }
    }
    for (double& v : p) v = std::clamp(v + rng.next_uniform(-0.05, 0.05), 0.0, 1.0);
    d.push(ImageTensor(s, std::move(p)), label, i);
  }
  return d;
}

}  // namespace advdet
