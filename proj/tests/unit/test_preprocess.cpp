#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "pcbmine/preprocess.hpp"

using namespace pcbmine;
using namespace pcbmine::preprocess;

namespace {

RasterImage board_on_dark(int w, int h, RoiRect board, std::mt19937_64& rng, int noise) {
  std::uniform_int_distribution<int> n(-noise, noise);
  RasterImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool in = x >= board.x0 && x < board.x1 && y >= board.y0 && y < board.y1;
      const int base = in ? 190 : 30;
      const auto v = [&](int off) { return static_cast<std::uint8_t>(std::clamp(base + off + n(rng), 0, 255)); };
      img.set_rgb(x, y, v(0), v(10), v(-10));
    }
  }
  return img;
}

RasterImage random_image(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> byte(0, 255);
  RasterImage img(w, h);
  for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(byte(rng));
  return img;
}

std::vector<Annotation> random_annotations(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> cls(0, 7);
  std::uniform_int_distribution<int> q(1, 1000);
  std::vector<Annotation> out;
  for (std::size_t i = 0; i < n; ++i) {
    // Dyadic coordinates so reflections are exact in binary floating point.
    const double w = q(rng) / 1024.0, h = q(rng) / 1024.0;
    out.push_back({static_cast<ClassLabel>(cls(rng)), {q(rng) / 1024.0, q(rng) / 1024.0, w, h}});
  }
  return out;
}

std::map<ClassLabel, int> class_counts(const std::vector<Annotation>& a) {
  std::map<ClassLabel, int> m;
  for (const auto& x : a) ++m[x.label];
  return m;
}

}  // namespace

TEST_CASE("RasterImage validates its shape") {
  CHECK_THROWS_AS(RasterImage(0, 5), std::invalid_argument);
  CHECK_THROWS_AS(RasterImage(2, 2, std::vector<std::uint8_t>(11)), std::invalid_argument);
  RasterImage img(2, 3, 7);
  CHECK(img.pixels().size() == 18);
  CHECK(img.at(1, 2, 2) == 7);
}

TEST_CASE("check_roi") {
  CHECK_NOTHROW(check_roi({0, 0, 10, 10}, 10, 10));
  CHECK_THROWS_AS(check_roi({0, 0, 11, 10}, 10, 10), std::invalid_argument);
  CHECK_THROWS_AS(check_roi({5, 0, 5, 10}, 10, 10), std::invalid_argument);
  CHECK_THROWS_AS(check_roi({-1, 0, 5, 10}, 10, 10), std::invalid_argument);
}

TEST_CASE("grayscale luma") {
  RasterImage img(3, 1);
  img.set_rgb(0, 0, 255, 0, 0);
  img.set_rgb(1, 0, 0, 255, 0);
  img.set_rgb(2, 0, 0, 0, 255);
  const auto g = to_grayscale(img);
  CHECK(g == std::vector<std::uint8_t>{76, 150, 29});
}

TEST_CASE("segment_board_roi examples") {
  RasterImage img(100, 100, 0);
  for (int y = 20; y < 60; ++y)
    for (int x = 20; x < 60; ++x) img.set_rgb(x, y, 255, 255, 255);
  CHECK(segment_board_roi(img, 0) == RoiRect{20, 20, 60, 60});
  CHECK(segment_board_roi(img, 5) == RoiRect{15, 15, 65, 65});
  CHECK(segment_board_roi(img, 50) == RoiRect{0, 0, 100, 100});

  CHECK(segment_board_roi(RasterImage(37, 23, 255), 0) == RoiRect{0, 0, 37, 23});
  try {
    segment_board_roi(RasterImage(40, 40, 0), 0);
    FAIL("expected NoBoardFound");
  } catch (const NoBoardFound& e) {
    CHECK(std::string(e.what()) == "no board found");
  }
}

TEST_CASE("segment_board_roi keeps the largest component") {
  RasterImage img(80, 60, 0);
  for (int y = 5; y < 10; ++y)
    for (int x = 5; x < 10; ++x) img.set_rgb(x, y, 250, 250, 250);
  for (int y = 20; y < 55; ++y)
    for (int x = 30; x < 75; ++x) img.set_rgb(x, y, 250, 250, 250);
  CHECK(segment_board_roi(img, 0) == RoiRect{30, 20, 75, 55});
  // Diagonal neighbours are not 4-connected.
  RasterImage diag(10, 10, 0);
  diag.set_rgb(2, 2, 255, 255, 255);
  diag.set_rgb(3, 3, 255, 255, 255);
  diag.set_rgb(4, 4, 255, 255, 255);
  CHECK(segment_board_roi(diag, 0).area() == 1);
}

TEST_CASE("segment_board_roi recovers noisy synthetic boards within 2 px and is idempotent") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 25; ++i) {
    std::uniform_int_distribution<int> dim(60, 160);
    const int w = dim(rng), h = dim(rng);
    std::uniform_int_distribution<int> ux(0, w / 3), uy(0, h / 3);
    RoiRect board{ux(rng), uy(rng), 0, 0};
    board.x1 = std::min(w, board.x0 + w / 3 + ux(rng) + 5);
    board.y1 = std::min(h, board.y0 + h / 3 + uy(rng) + 5);
    auto img = board_on_dark(w, h, board, rng, 20);
    const auto roi = segment_board_roi(img, 0);
    CHECK(std::abs(roi.x0 - board.x0) <= 2);
    CHECK(std::abs(roi.y0 - board.y0) <= 2);
    CHECK(std::abs(roi.x1 - board.x1) <= 2);
    CHECK(std::abs(roi.y1 - board.y1) <= 2);

    // A margin keeps some background in the crop; a margin-0 crop of a noisy
    // board is unimodal and Otsu splits the noise.
    const auto framed = segment_board_roi(img, 3);
    const auto cropped = crop(img, framed);
    const auto again = segment_board_roi(cropped, 3);
    CHECK(static_cast<double>(again.area()) >= 0.95 * static_cast<double>(framed.area()));

    const auto clean = board_on_dark(w, h, board, rng, 0);
    const auto clean_crop = crop(clean, segment_board_roi(clean, 0));
    CHECK(segment_board_roi(clean_crop, 0) == RoiRect{0, 0, clean_crop.width(), clean_crop.height()});
  }
}

TEST_CASE("otsu threshold agrees with OpenCV") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    std::normal_distribution<double> dark(60 + i, 15), bright(170, 20);
    std::bernoulli_distribution coin(0.4);
    cv::Mat gray(50, 50, CV_8UC1);
    std::array<std::size_t, 256> hist{};
    for (int k = 0; k < gray.rows * gray.cols; ++k) {
      const double v = coin(rng) ? bright(rng) : dark(rng);
      const auto b = static_cast<std::uint8_t>(std::clamp(static_cast<int>(v), 0, 255));
      gray.data[k] = b;
      ++hist[b];
    }
    cv::Mat dst;
    const double cv_t = cv::threshold(gray, dst, 0, 255, cv::THRESH_BINARY | cv::THRESH_OTSU);
    CHECK(otsu_threshold(hist) == static_cast<int>(cv_t));
  }
}

TEST_CASE("crop copies the exact pixel block") {
  std::mt19937_64 rng(8);
  auto img = random_image(rng, 13, 9);
  const RoiRect roi{3, 2, 11, 7};
  auto c = crop(img, roi);
  REQUIRE(c.width() == 8);
  REQUIRE(c.height() == 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 8; ++x)
      for (int ch = 0; ch < 3; ++ch) CHECK(c.at(x, y, ch) == img.at(x + 3, y + 2, ch));
  CHECK_THROWS_AS(crop(img, {0, 0, 14, 9}), std::invalid_argument);
}

TEST_CASE("crop_and_remap examples") {
  std::mt19937_64 rng(9);
  RasterImage img(100, 80, 10);

  SUBCASE("whole-image crop leaves annotations unchanged") {
    for (int i = 0; i < 20; ++i) {
      auto anns = random_annotations(rng, 6);
      for (auto& a : anns) a.box = clamp_box(a.box);
      std::vector<Annotation> valid;
      for (auto& a : anns)
        if (a.box.left() >= 0 && a.box.right() <= 1 && a.box.top() >= 0 && a.box.bottom() <= 1) valid.push_back(a);
      auto r = crop_and_remap(img, {0, 0, 100, 80}, valid);
      CHECK(r.annotations == valid);
      CHECK(r.image == img);
    }
  }
  SUBCASE("left half doubles cx and w") {
    std::vector<Annotation> a{{ClassLabel::diode, {0.25, 0.5, 0.1, 0.2}}};
    auto r = crop_and_remap(img, {0, 0, 50, 80}, a);
    REQUIRE(r.annotations.size() == 1);
    CHECK(r.annotations[0].box.cx == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.annotations[0].box.w == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(r.annotations[0].box.cy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.annotations[0].box.h == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("inside, outside and straddling boxes") {
    RasterImage sq(100, 100);
    // ROI is x,y in [20,80). Inside box spans 40..60, outside 2..8,
    // straddling spans 66..86 horizontally so 14 of 20 columns remain.
    std::vector<Annotation> a{{ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}},
                              {ClassLabel::coil, {0.05, 0.05, 0.06, 0.06}},
                              {ClassLabel::resistor, {0.76, 0.5, 0.2, 0.2}}};
    auto r = crop_and_remap(sq, {20, 20, 80, 80}, a);
    REQUIRE(r.annotations.size() == 2);
    CHECK(r.dropped_outside == 1);
    CHECK(r.dropped_clipped == 0);
    CHECK(r.annotations[0].box.cx == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.annotations[0].box.w == doctest::Approx(20.0 / 60.0).epsilon(1e-12));
    CHECK(r.annotations[1].label == ClassLabel::resistor);
    CHECK(r.annotations[1].box.cx == doctest::Approx(53.0 / 60.0).epsilon(1e-12));
    CHECK(r.annotations[1].box.w == doctest::Approx(14.0 / 60.0).epsilon(1e-12));
  }
  SUBCASE("a box losing more than half its area is dropped") {
    RasterImage sq(100, 100);
    std::vector<Annotation> a{{ClassLabel::ic, {0.84, 0.5, 0.2, 0.2}}};  // 74..94, keeps 6 of 20
    auto r = crop_and_remap(sq, {20, 20, 80, 80}, a);
    CHECK(r.annotations.empty());
    CHECK(r.dropped_clipped == 1);
  }
}

TEST_CASE("crop_and_remap preserves the absolute area of kept boxes") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coord(0, 199);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RasterImage img(200, 150);
  for (int trial = 0; trial < 200; ++trial) {
    RoiRect roi{coord(rng) % 150, coord(rng) % 100, 0, 0};
    roi.x1 = std::min(200, roi.x0 + 20 + coord(rng) % 100);
    roi.y1 = std::min(150, roi.y0 + 20 + coord(rng) % 80);
    std::vector<Annotation> a{{ClassLabel::capacitor, clamp_box({u(rng), u(rng), 0.05 + 0.3 * u(rng), 0.05 + 0.3 * u(rng)})}};
    auto r = crop_and_remap(img, roi, a);
    if (r.annotations.empty()) continue;
    const auto& o = a[0].box;
    const double ox = std::min(o.right() * 200, double(roi.x1)) - std::max(o.left() * 200, double(roi.x0));
    const double oy = std::min(o.bottom() * 150, double(roi.y1)) - std::max(o.top() * 150, double(roi.y0));
    const auto& k = r.annotations[0].box;
    const double kept = k.w * roi.width() * k.h * roi.height();
    CHECK(std::abs(kept - ox * oy) <= 1.0);
  }
}

TEST_CASE("contrast_stretch examples") {
  SUBCASE("full range is unchanged") {
    RasterImage img(256, 1);
    for (int x = 0; x < 256; ++x) img.set_rgb(x, 0, std::uint8_t(x), std::uint8_t(255 - x), std::uint8_t(x));
    CHECK(contrast_stretch(img, 0, 100) == img);
  }
  SUBCASE("constant gray is unchanged") {
    RasterImage img(7, 5, 128);
    CHECK(contrast_stretch(img, 0, 100) == img);
    CHECK(contrast_stretch(img, 2, 98) == img);
  }
  SUBCASE("two levels map to 0 and 255") {
    RasterImage img(4, 4, 64);
    for (int x = 0; x < 4; ++x) img.set_rgb(x, 0, 192, 192, 192);
    auto out = contrast_stretch(img, 0, 100);
    std::set<int> levels(out.pixels().begin(), out.pixels().end());
    CHECK(levels == std::set<int>{0, 255});
    CHECK(out.at(0, 0, 0) == 255);
    CHECK(out.at(0, 1, 0) == 0);
  }
  SUBCASE("percentile outliers are clamped") {
    RasterImage img(100, 1, 100);
    for (int x = 0; x < 50; ++x) img.set_rgb(x, 0, 50, 50, 50);
    img.set_rgb(0, 0, 0, 0, 0);
    img.set_rgb(99, 0, 255, 255, 255);
    auto out = contrast_stretch(img, 2, 98);
    CHECK(out.at(0, 0, 0) == 0);
    CHECK(out.at(1, 0, 0) == 0);
    CHECK(out.at(60, 0, 0) == 255);
    CHECK(out.at(99, 0, 0) == 255);
  }
  CHECK_THROWS_AS(contrast_stretch(RasterImage(2, 2), 50, 50), std::invalid_argument);
  CHECK_THROWS_AS(contrast_stretch(RasterImage(2, 2), -1, 50), std::invalid_argument);
  CHECK_THROWS_AS(contrast_stretch(RasterImage(2, 2), 0, 101), std::invalid_argument);
}

TEST_CASE("augment box formulas") {
  const BoundingBox b{0.25, 0.5, 0.1, 0.2};
  CHECK(transform_box(b, AugmentOp::hflip) == BoundingBox{0.75, 0.5, 0.1, 0.2});
  CHECK(transform_box(b, AugmentOp::vflip) == BoundingBox{0.25, 0.5, 0.1, 0.2});
  CHECK(transform_box(b, AugmentOp::rot90) == BoundingBox{0.5, 0.25, 0.2, 0.1});
  CHECK(transform_box(b, AugmentOp::rot180) == BoundingBox{0.75, 0.5, 0.1, 0.2});
  CHECK(transform_box(b, AugmentOp::rot270) == BoundingBox{0.5, 0.75, 0.2, 0.1});
}

TEST_CASE("rot90 pixel mapping is clockwise") {
  // 2x1 image [A B] rotated clockwise becomes a 1x2 column with A on top.
  RasterImage img(2, 1);
  img.set_rgb(0, 0, 1, 1, 1);
  img.set_rgb(1, 0, 2, 2, 2);
  auto r = transform_image(img, AugmentOp::rot90);
  REQUIRE(r.width() == 1);
  REQUIRE(r.height() == 2);
  CHECK(r.at(0, 0, 0) == 1);
  CHECK(r.at(0, 1, 0) == 2);

  // A marked pixel and its box must move together.
  RasterImage sq(8, 4, 0);
  sq.set_rgb(1, 0, 255, 255, 255);
  const BoundingBox px{1.5 / 8, 0.5 / 4, 1.0 / 8, 1.0 / 4};
  for (auto op : kAllAugmentOps) {
    auto out = augment(sq, {{ClassLabel::coil, px}}, op);
    const auto& b = out.annotations[0].box;
    const int x = static_cast<int>(b.cx * out.image.width());
    const int y = static_cast<int>(b.cy * out.image.height());
    CHECK(out.image.at(x, y, 0) == 255);
  }
}

TEST_CASE("augment group properties") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(1, 17);
  for (int i = 0; i < 50; ++i) {
    const auto img = random_image(rng, dim(rng), dim(rng));
    const auto anns = random_annotations(rng, static_cast<std::size_t>(i % 7));
    for (auto op : kAllAugmentOps) {
      auto fwd = augment(img, anns, op);
      CHECK(class_counts(fwd.annotations) == class_counts(anns));
      auto back = augment(fwd.image, fwd.annotations, inverse(op));
      CHECK(back.image == img);
      CHECK(back.annotations == anns);
    }
    auto twice = [&](AugmentOp op, int n) {
      Augmented a{img, anns};
      for (int k = 0; k < n; ++k) a = augment(a.image, a.annotations, op);
      return a;
    };
    for (auto [op, n] : {std::pair{AugmentOp::hflip, 2}, {AugmentOp::vflip, 2}, {AugmentOp::rot90, 4},
                         {AugmentOp::rot180, 2}, {AugmentOp::rot270, 4}}) {
      auto a = twice(op, n);
      CHECK(a.image == img);
      CHECK(a.annotations == anns);
    }
    auto r2 = augment(img, anns, AugmentOp::rot90);
    r2 = augment(r2.image, r2.annotations, AugmentOp::rot90);
    CHECK(r2.image == transform_image(img, AugmentOp::rot180));
  }
}

TEST_CASE("augment op names") {
  for (auto op : kAllAugmentOps) CHECK(augment_op_from_name(augment_op_name(op)) == op);
  CHECK_FALSE(augment_op_from_name("rot45"));
  CHECK(augmented_name("boards/pcb_01.png", AugmentOp::rot90) == "boards/pcb_01__rot90.png");
  CHECK(augmented_name("x.jpeg", AugmentOp::hflip) == "x__hflip.jpeg");
}
