#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include <unistd.h>

#include "advdet/dataset.hpp"
#include "advdet/serialize.hpp"
#include "test_util.hpp"

using namespace advdet;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("advdet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void put_be32(bytes& b, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

bytes idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols, std::uint8_t fill) {
  bytes b;
  put_be32(b, magic);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  b.insert(b.end(), static_cast<std::size_t>(n) * rows * cols, fill);
  return b;
}

bytes idx_labels(std::uint32_t magic, const std::vector<std::uint8_t>& labels) {
  bytes b;
  put_be32(b, magic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  return b;
}

errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an advdet::error";
  return errc::invalid_input;
}

}  // namespace

TEST(Mnist, SingleZeroImage) {
  TempDir d;
  write_file_atomic(d / "img", idx_images(kIdxImagesMagic, 1, 28, 28, 0));
  write_file_atomic(d / "lab", idx_labels(kIdxLabelsMagic, {7}));
  const auto ds = load_mnist(d / "img", d / "lab");
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.num_classes, 10u);
  EXPECT_EQ(ds.labels[0], 7u);
  EXPECT_EQ(ds.shape(), (Shape{28, 28, 1}));
  double sum = 0;
  for (double v : ds.images[0].values()) sum += v;
  EXPECT_EQ(sum, 0.0);
}

TEST(Mnist, ScalesByte255ToOne) {
  TempDir d;
  write_file_atomic(d / "img", idx_images(kIdxImagesMagic, 2, 28, 28, 255));
  write_file_atomic(d / "lab", idx_labels(kIdxLabelsMagic, {1, 2}));
  const auto ds = load_mnist(d / "img", d / "lab");
  for (double v : ds.images[1].values()) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(ds.ids, (std::vector<std::uint64_t>{0, 1}));
}

TEST(Mnist, Errors) {
  TempDir d;
  write_file_atomic(d / "wrong_magic", idx_images(kIdxLabelsMagic, 1, 28, 28, 0));
  write_file_atomic(d / "img", idx_images(kIdxImagesMagic, 2, 28, 28, 0));
  write_file_atomic(d / "lab1", idx_labels(kIdxLabelsMagic, {1}));
  write_file_atomic(d / "lab2", idx_labels(kIdxLabelsMagic, {1, 2}));
  auto trunc = idx_images(kIdxImagesMagic, 2, 28, 28, 0);
  trunc.resize(trunc.size() - 10);
  write_file_atomic(d / "trunc", trunc);

  EXPECT_EQ(code_of([&] { load_mnist(d / "wrong_magic", d / "lab1"); }), errc::format);
  EXPECT_EQ(code_of([&] { load_mnist(d / "img", d / "lab1"); }), errc::consistency);
  EXPECT_EQ(code_of([&] { load_mnist(d / "trunc", d / "lab2"); }), errc::io);
  EXPECT_EQ(code_of([&] { load_mnist(d / "missing", d / "lab2"); }), errc::io);
}

TEST(Cifar, SaturatedRecord) {
  TempDir d;
  bytes rec(kCifarRecord, 255);
  rec[0] = 3;
  write_file_atomic(d / "b1", rec);
  const auto ds = load_cifar10({d / "b1"});
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.labels[0], 3u);
  EXPECT_EQ(ds.shape(), (Shape{32, 32, 3}));
  for (double v : ds.images[0].values()) EXPECT_EQ(v, 1.0);
}

TEST(Cifar, PlanarToInterleaved) {
  TempDir d;
  bytes rec(kCifarRecord, 0);
  rec[0] = 9;
  rec[1 + 0 * 1024 + 5] = 10;   // R at pixel 5
  rec[1 + 1 * 1024 + 5] = 20;   // G
  rec[1 + 2 * 1024 + 33] = 30;  // B at pixel (1, 1)
  bytes two = rec;
  two.insert(two.end(), rec.begin(), rec.end());
  write_file_atomic(d / "b", two);
  const auto ds = load_cifar10({d / "b"});
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_DOUBLE_EQ(ds.images[0].at(0, 5, 0), 10 / 255.0);
  EXPECT_DOUBLE_EQ(ds.images[0].at(0, 5, 1), 20 / 255.0);
  EXPECT_DOUBLE_EQ(ds.images[0].at(1, 1, 2), 30 / 255.0);
  EXPECT_EQ(ds.images[0].at(0, 5, 2), 0.0);
  EXPECT_EQ(ds.ids, (std::vector<std::uint64_t>{0, 1}));
}

TEST(Cifar, EmptyAndMalformed) {
  TempDir d;
  write_file_atomic(d / "empty", {});
  EXPECT_EQ(load_cifar10({d / "empty"}).size(), 0u);
  write_file_atomic(d / "bad", bytes(3000, 0));
  EXPECT_EQ(code_of([&] { load_cifar10({d / "bad"}); }), errc::format);
}

TEST(Synth, BalancedAndDeterministic) {
  SeededRng a(1), b(1);
  const auto x = synth_shapes(100, 28, a), y = synth_shapes(100, 28, b);
  EXPECT_EQ(std::count(x.labels.begin(), x.labels.end(), 0u), 50);
  EXPECT_EQ(std::count(x.labels.begin(), x.labels.end(), 1u), 50);
  EXPECT_EQ(x.images, y.images);
  EXPECT_EQ(x.labels, y.labels);
  for (const auto& img : x.images)
    for (double v : img.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
}

TEST(Synth, Errors) {
  SeededRng r(1);
  EXPECT_EQ(code_of([&] { synth_shapes(10, 15, r); }), errc::invalid_size);
  EXPECT_EQ(code_of([&] { synth_shapes(1, 28, r); }), errc::invalid_size);
}

TEST(DatasetProperty, ShuffleAndSplit) {
  SeededRng r(2);
  const auto d = synth_shapes(57, 16, r);
  const auto s1 = shuffled(d, 9), s2 = shuffled(d, 9);
  EXPECT_EQ(s1.ids, s2.ids);
  auto a = s1.labels, b = d.labels;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);

  const auto sp = split_dataset(d, 0.8, 4);
  EXPECT_EQ(sp.train.size() + sp.test.size(), d.size());
  EXPECT_EQ(sp.train.size(), 46u);
  std::set<std::uint64_t> tr(sp.train.ids.begin(), sp.train.ids.end());
  for (auto id : sp.test.ids) EXPECT_EQ(tr.count(id), 0u);
  EXPECT_THROW(split_dataset(d, 1.0, 4), error);
}

TEST(Snet, RoundTripBitExact) {
  TempDir d;
  const auto& f = advdet::testing::synth_fixture();
  save_model(f.victim, d / "m.snet");
  const auto back = load_model(d / "m.snet");
  EXPECT_TRUE(back == f.victim);
  EXPECT_FALSE(fs::exists(d / "m.snet.tmp"));
  // every architecture survives the trip
  SeededRng r(3);
  for (char a : {'A', 'B', 'C'}) {
    auto m = make_architecture(a, Shape{16, 16, 3}, 10);
    m.init_weights(r);
    EXPECT_TRUE(decode_model(encode_model(m)) == m);
  }
}

TEST(Snet, Errors) {
  const auto m = make_architecture('C', Shape{4, 4, 1}, 2);
  auto b = encode_model(m);
  auto bad = b;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_model(bad); }), errc::format);
  auto trunc = b;
  trunc.resize(trunc.size() - 8);
  EXPECT_EQ(code_of([&] { decode_model(trunc); }), errc::consistency);
  auto ver = b;
  ver[4] = 9;
  EXPECT_EQ(code_of([&] { decode_model(ver); }), errc::format);
}

TEST(Fmap, RoundTrip) {
  SeededRng r(4);
  std::vector<double> v(5 * 6 * 2);
  for (double& x : v) x = r.next_uniform(-3, 3);
  const FeatureMap m(Shape{5, 6, 2}, v);
  const auto back = decode_fmap(encode_fmap(m));
  EXPECT_TRUE(back == m);
  EXPECT_EQ(encode_fmap(m).size(), 16 + v.size() * 8);
  auto b = encode_fmap(m);
  b.pop_back();
  EXPECT_EQ(code_of([&] { decode_fmap(b); }), errc::consistency);
}

TEST(Advs, RoundTrip) {
  SeededRng r(5);
  std::vector<ImageTensor> imgs;
  for (int i = 0; i < 3; ++i) imgs.push_back(advdet::testing::random_image(Shape{4, 4, 3}, r));
  EXPECT_EQ(decode_advs(encode_advs(imgs)), imgs);
}

TEST(Pnm, RoundTripQuantized) {
  TempDir d;
  SeededRng r(6);
  for (std::size_t c : {1u, 3u}) {
    const auto img = advdet::testing::random_image(Shape{7, 9, c}, r);
    save_pnm(img, d / "x.pnm");
    const auto back = load_pnm(d / "x.pnm");
    ASSERT_EQ(back.shape(), img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(back.values()[i], to_byte(img.values()[i]) / 255.0);
  }
  write_text_atomic(d / "bad.pnm", "P2\n1 1\n255\n0");
  EXPECT_EQ(code_of([&] { load_pnm(d / "bad.pnm"); }), errc::format);
}
