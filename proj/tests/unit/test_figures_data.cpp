#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "latsep/datasets.hpp"
#include "latsep/errors.hpp"
#include "latsep/figures.hpp"
#include "latsep/imageio.hpp"

using namespace latsep;
namespace fs = std::filesystem;

TEST_CASE("histogram bins over [-3, 3) and counts overflow separately") {
  const std::vector<double> v{-3.5, -3.0, -2.95, 0.0, 0.04, 2.99, 3.0, 10.0, std::nan("")};
  const auto h = histogram(v);
  CHECK(h.counts.size() == 60);
  CHECK(h.below == 1);
  CHECK(h.above == 2);
  CHECK(h.counts[0] == 2);
  CHECK(h.counts[30] == 2);
  CHECK(h.counts[59] == 1);
}

TEST_CASE("histogram bars are cut at the y limit") {
  std::vector<double> clean(500, 0.01);
  const std::string svg = histogram_svg(clean, {}, "class 0");
  // plot height is 252 px; a 500-count bar is drawn at the full height only.
  CHECK(svg.find("height=\"252.00\"") != std::string::npos);
  CHECK(svg.find("#d62222") == std::string::npos);
  CHECK(svg.find(">75.00<") != std::string::npos);
}

TEST_CASE("scatter colours poison red and clean blue") {
  Matrix c(3, 2);
  c << 0, 0, 1, 1, 2, 0.5;
  const std::vector<int> poison{0, 1, 0};
  const std::string svg = scatter_svg(c, poison);
  CHECK(svg.find("#d62222") != std::string::npos);
  CHECK(svg.find("#1f5fd6") != std::string::npos);
  const std::string clean_only = scatter_svg(c, std::vector<int>{0, 0, 0});
  CHECK(clean_only.find("#d62222") == std::string::npos);
  CHECK(scatter_svg(c, poison) == svg);
}

TEST_CASE("png figures are written") {
  const auto dir = fs::temp_directory_path() / "latsep_fig_test";
  fs::create_directories(dir);
  Matrix c(2, 2);
  c << 0, 0, 1, 1;
  write_scatter_png(dir / "s.png", c, std::vector<int>{0, 1}, 64);
  write_histogram_png(dir / "h.png", std::vector<double>{0.0, 0.1}, std::vector<double>{1.0});
  CHECK(read_image(dir / "s.png").shape == ImageShape{64, 64, 3});
  CHECK(read_image(dir / "h.png").shape == ImageShape{300, 480, 3});
  fs::remove_all(dir);
}

TEST_CASE("synthetic dataset is deterministic and balanced") {
  SyntheticOptions opt;
  opt.train_size = 200;
  opt.test_size = 100;
  const auto a = make_synthetic(opt, 1);
  const auto b = make_synthetic(opt, 1);
  CHECK(a.train == b.train);
  CHECK(a.train.shape() == ImageShape{16, 16, 3});
  for (auto c : class_counts(a.train)) CHECK(c == 20);
  for (float v : a.train.pixels()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("dataset loading carves validation and subsets") {
  DatasetOptions opt;
  opt.synthetic.train_size = 300;
  opt.synthetic.test_size = 200;
  opt.validation_size = 50;
  opt.train_subset = 100;
  const auto s = load_dataset("synthetic", "unused", opt, 3);
  CHECK(s.validation.size() == 50);
  CHECK(s.test.size() == 150);
  CHECK(s.train.size() == 100);
  CHECK_THROWS_AS(load_dataset("imagenet", "x", opt, 3), ConfigError);
  CHECK_THROWS_AS(load_dataset("cifar10", "/nonexistent", opt, 3), IoError);
}

TEST_CASE("cifar-10 binary batches are parsed channel-planar") {
  const auto dir = fs::temp_directory_path() / "latsep_cifar_test" / "cifar-10-batches-bin";
  fs::create_directories(dir);
  auto write_batch = [&](const std::string& name, int records) {
    std::ofstream out(dir / name, std::ios::binary);
    for (int r = 0; r < records; ++r) {
      out.put(static_cast<char>(r % 10));
      for (int c = 0; c < 3; ++c)
        for (int p = 0; p < 1024; ++p) out.put(static_cast<char>(c == 0 ? 255 : (c == 1 ? p % 256 : 0)));
    }
  };
  for (int b = 1; b <= 5; ++b) write_batch("data_batch_" + std::to_string(b) + ".bin", 4);
  write_batch("test_batch.bin", 3);
  CHECK(dataset_available("cifar10", dir.parent_path()));
  const auto s = load_cifar10(dir.parent_path());
  CHECK(s.train.size() == 20);
  CHECK(s.test.size() == 3);
  CHECK(s.train.label(3) == 3);
  const auto img = s.train.image(0);
  CHECK(img[0] == 1.0f);
  CHECK(img[2] == 0.0f);
  CHECK(img[3 * 7 + 1] == doctest::Approx(7.0f / 255.0f));
  fs::remove_all(dir.parent_path());
}

TEST_CASE("bilinear resize keeps constant images constant") {
  std::vector<float> img(10 * 12 * 3, 0.4f);
  const auto out = resize_bilinear(img, ImageShape{10, 12, 3}, 32, 32);
  CHECK(out.size() == 32 * 32 * 3);
  for (float v : out) CHECK(v == doctest::Approx(0.4f));
}

TEST_CASE("image set container round trips and rejects truncation") {
  auto splits = make_synthetic({.train_size = 30, .test_size = 10}, 5);
  const std::string bytes = encode_image_set(splits.train);
  CHECK(decode_image_set(bytes) == splits.train);
  CHECK_THROWS_AS(decode_image_set(bytes.substr(0, bytes.size() - 1)), IntegrityError);
  CHECK_THROWS_AS(decode_image_set("P6\n"), IntegrityError);

  ImageSet empty(ImageShape{4, 4, 1}, 3);
  CHECK(decode_image_set(encode_image_set(empty)) == empty);
}
