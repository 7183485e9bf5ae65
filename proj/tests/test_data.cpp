#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "memosched/data.hpp"
#include "oracles.hpp"

using namespace memosched;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "memosched_data_test";
  std::filesystem::create_directories(dir);
  return dir;
}

void write_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels,
                    int count, int rows, int cols, bool corrupt_magic = false,
                    bool truncate_images = false, int bad_label_at = -1) {
  auto be32 = [](std::ofstream& out, std::uint32_t v) {
    unsigned char buf[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(buf), 4);
  };
  {
    std::ofstream out(images, std::ios::binary);
    be32(out, corrupt_magic ? 0x00000804u : 0x00000803u);
    be32(out, static_cast<std::uint32_t>(count));
    be32(out, static_cast<std::uint32_t>(rows));
    be32(out, static_cast<std::uint32_t>(cols));
    const int pixels = truncate_images ? count * rows * cols / 2 : count * rows * cols;
    for (int i = 0; i < pixels; ++i) {
      const unsigned char v = static_cast<unsigned char>((i * 37) % 256);
      out.write(reinterpret_cast<const char*>(&v), 1);
    }
  }
  {
    std::ofstream out(labels, std::ios::binary);
    be32(out, 0x00000801u);
    be32(out, static_cast<std::uint32_t>(count));
    for (int i = 0; i < count; ++i) {
      unsigned char v = static_cast<unsigned char>(i % 10);
      if (i == bad_label_at) v = 37;
      out.write(reinterpret_cast<const char*>(&v), 1);
    }
  }
}

}  // namespace

TEST_CASE("gaussian mixture generator") {
  SECTION("degenerate clusters are nearest-mean separable") {
    const NoisyDataset data = make_gaussian_mixture(3, 2, 200, 1e-6, 1);
    // nearest-mean oracle classifier
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(3, 2);
    Eigen::Vector3d counts = Eigen::Vector3d::Zero();
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      means.row(data.noisy_labels()(i)) += data.features().row(i);
      counts(data.noisy_labels()(i)) += 1.0;
    }
    for (int c = 0; c < 3; ++c) means.row(c) /= counts(c);
    int hits = 0;
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
      int best = 0;
      double best_d = (data.features().row(i) - means.row(0)).squaredNorm();
      for (int c = 1; c < 3; ++c) {
        const double d = (data.features().row(i) - means.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (best == data.noisy_labels()(i)) ++hits;
    }
    CHECK(hits == data.rows());
  }

  SECTION("same seed gives identical features") {
    const NoisyDataset a = make_gaussian_mixture(3, 2, 100, 0.5, 7);
    const NoisyDataset b = make_gaussian_mixture(3, 2, 100, 0.5, 7);
    CHECK((a.features() - b.features()).norm() == 0.0);
    CHECK((a.noisy_labels() - b.noisy_labels()).norm() == 0);
  }

  SECTION("splits are disjoint and cover all rows") {
    const NoisyDataset data = make_gaussian_mixture(4, 3, 100, 0.5, 3);
    const auto train = data.indices_of(Split::train);
    const auto val = data.indices_of(Split::val);
    const auto test = data.indices_of(Split::test);
    CHECK(train.size() + val.size() + test.size() == static_cast<std::size_t>(data.rows()));
    CHECK(static_cast<double>(val.size()) == Catch::Approx(0.1 * data.rows()).margin(1.0));
  }

  SECTION("more classes than the simplex dimension still works") {
    const NoisyDataset data = make_gaussian_mixture(10, 2, 10, 0.1, 5);
    CHECK(data.rows() == 100);
    CHECK(data.classes() == 10);
  }
}

TEST_CASE("idx loader") {
  const auto dir = temp_dir();
  const auto images = dir / "images.idx3";
  const auto labels = dir / "labels.idx1";

  SECTION("round trip with scaling") {
    write_idx_pair(images, labels, 50, 4, 5);
    const NoisyDataset data = load_idx(images.string(), labels.string());
    CHECK(data.rows() == 50);
    CHECK(data.dim() == 20);
    CHECK(data.features().minCoeff() >= 0.0);
    CHECK(data.features().maxCoeff() <= 1.0);
    CHECK(data.noisy_labels()(7) == 7);
  }

  SECTION("subsample keeps the first n rows deterministically") {
    write_idx_pair(images, labels, 50, 4, 5);
    const NoisyDataset all = load_idx(images.string(), labels.string());
    const NoisyDataset some = load_idx(images.string(), labels.string(), 20);
    CHECK(some.rows() == 20);
    CHECK((some.features() - all.features().topRows(20)).norm() == 0.0);
  }

  SECTION("bad magic is a format error naming the offset") {
    write_idx_pair(images, labels, 10, 2, 2, true);
    CHECK_THROWS_WITH(load_idx(images.string(), labels.string()),
                      Catch::Matchers::ContainsSubstring("offset 0") &&
                          Catch::Matchers::ContainsSubstring("magic"));
  }

  SECTION("truncated image data is a format error") {
    write_idx_pair(images, labels, 10, 2, 2, false, true);
    CHECK_THROWS_WITH(load_idx(images.string(), labels.string()),
                      Catch::Matchers::ContainsSubstring("truncated"));
  }

  SECTION("labels outside 0..9 are rejected") {
    write_idx_pair(images, labels, 10, 2, 2, false, false, 4);
    CHECK_THROWS_WITH(load_idx(images.string(), labels.string()),
                      Catch::Matchers::ContainsSubstring("outside 0..9"));
  }
}

TEST_CASE("symmetric noise injection") {
  const NoisyDataset clean = make_gaussian_mixture(10, 4, 1000, 0.5, 11);

  SECTION("rate zero is the identity") {
    const NoisyDataset noisy = inject_symmetric_noise(clean, 0.0, 1);
    CHECK((noisy.noisy_labels() - clean.noisy_labels()).norm() == 0);
  }

  SECTION("flips are uniform over the incorrect classes") {
    const NoisyDataset noisy = inject_symmetric_noise(clean, 0.5, 123);
    const auto metrics = noisy.metrics();
    // count flip targets relative to the clean label
    std::vector<double> offset_counts(9, 0.0);
    double flips = 0.0;
    for (int idx : noisy.indices_of(Split::train)) {
      if (metrics.is_clean(idx)) continue;
      const int offset =
          (noisy.noisy_labels()(idx) - metrics.clean_labels()(idx) + 10) % 10;
      offset_counts[static_cast<std::size_t>(offset - 1)] += 1.0;
      flips += 1.0;
    }
    // chi-square uniformity test, 8 degrees of freedom, 1% critical value
    const double expected = flips / 9.0;
    double chi2 = 0.0;
    for (double count : offset_counts) chi2 += (count - expected) * (count - expected) / expected;
    CHECK(chi2 < 20.09);

    // realized flip rate within two points of the configured rate
    const double train_size = static_cast<double>(noisy.indices_of(Split::train).size());
    CHECK(std::abs(flips / train_size - 0.5) < 0.02);
  }

  SECTION("validation and test labels are untouched") {
    const NoisyDataset noisy = inject_symmetric_noise(clean, 0.8, 5);
    const auto metrics = noisy.metrics();
    for (int idx : noisy.indices_of(Split::val)) REQUIRE(metrics.is_clean(idx));
    for (int idx : noisy.indices_of(Split::test)) REQUIRE(metrics.is_clean(idx));
  }
}

TEST_CASE("pair noise injection") {
  const NoisyDataset clean = make_gaussian_mixture(10, 4, 1500, 0.5, 2);

  SECTION("only the adjacent class receives flips") {
    const NoisyDataset noisy = inject_pair_noise(clean, 0.45, 77);
    const auto metrics = noisy.metrics();
    double flips = 0.0;
    for (int idx : noisy.indices_of(Split::train)) {
      if (metrics.is_clean(idx)) continue;
      REQUIRE(noisy.noisy_labels()(idx) == (metrics.clean_labels()(idx) + 1) % 10);
      flips += 1.0;
    }
    const double train_size = static_cast<double>(noisy.indices_of(Split::train).size());
    CHECK(std::abs(flips / train_size - 0.45) < 0.02);
  }

  SECTION("rate zero is the identity") {
    const NoisyDataset noisy = inject_pair_noise(clean, 0.0, 4);
    CHECK((noisy.noisy_labels() - clean.noisy_labels()).norm() == 0);
  }
}

TEST_CASE("label precision") {
  const std::vector<bool> mask{true, false, true, true};
  CHECK(label_precision({0, 2, 3}, mask) == 1.0);
  CHECK(label_precision({0, 1, 2, 3}, mask) == Catch::Approx(0.75));
  CHECK_THROWS_AS(label_precision({}, mask), std::invalid_argument);
  CHECK_THROWS_AS(label_precision({7}, mask), std::invalid_argument);

  SECTION("random selection calibrates to the clean rate") {
    const NoisyDataset noisy =
        inject_symmetric_noise(make_gaussian_mixture(5, 3, 2000, 0.5, 6), 0.4, 99);
    const auto metrics = noisy.metrics();
    const auto train = noisy.indices_of(Split::train);
    std::vector<bool> clean_mask;
    for (int idx : train) clean_mask.push_back(metrics.is_clean(idx));

    Rng rng(1234);
    oracles::MeanAccumulator acc(1);
    for (int batch = 0; batch < 2000; ++batch) {
      std::vector<int> selected;
      for (int i = 0; i < 16; ++i) selected.push_back(static_cast<int>(rng.below(train.size())));
      acc.add(Eigen::VectorXd::Constant(1, label_precision(selected, clean_mask)));
    }
    const double clean_rate = metrics.clean_fraction(Split::train);
    CHECK(std::abs(acc.mean()(0) - clean_rate) <= 3.0 * acc.standard_error()(0));
  }
}

TEST_CASE("dataset csv dump") {
  const NoisyDataset noisy = inject_symmetric_noise(make_gaussian_mixture(3, 2, 10, 0.5, 8), 0.4, 3);
  const std::string csv = dataset_to_csv(noisy);
  CHECK(csv.rfind("x0,x1,y_noisy,y_clean,split\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);  // header + 30 rows
}
