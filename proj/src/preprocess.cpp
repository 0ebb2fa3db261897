#include "pcbmine/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace pcbmine::preprocess {

RasterImage::RasterImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument(fmt::format("image size {}x{} must be at least 1x1", width, height));
  }
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill);
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), pixels_(std::move(rgb)) {
  if (width < 1 || height < 1) {
    throw std::invalid_argument(fmt::format("image size {}x{} must be at least 1x1", width, height));
  }
  if (pixels_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw std::invalid_argument(fmt::format("pixel buffer holds {} bytes, expected 3*{}*{}",
                                            pixels_.size(), width, height));
  }
}

void RasterImage::set_rgb(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const std::size_t i = index(x, y, 0);
  pixels_[i] = r;
  pixels_[i + 1] = g;
  pixels_[i + 2] = b;
}

void check_roi(const RoiRect& roi, int width, int height) {
  if (!(0 <= roi.x0 && roi.x0 < roi.x1 && roi.x1 <= width && 0 <= roi.y0 && roi.y0 < roi.y1 &&
        roi.y1 <= height)) {
    throw std::invalid_argument(fmt::format("ROI ({},{})-({},{}) invalid for {}x{} image", roi.x0,
                                            roi.y0, roi.x1, roi.y1, width, height));
  }
}

std::vector<std::uint8_t> to_grayscale(const RasterImage& image) {
  const auto& px = image.pixels();
  std::vector<std::uint8_t> gray(px.size() / 3);
  for (std::size_t i = 0; i < gray.size(); ++i) {
    const double y = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
    gray[i] = static_cast<std::uint8_t>(std::min(255.0, std::round(y)));
  }
  return gray;
}

int otsu_threshold(const std::array<std::size_t, 256>& histogram) {
  double total = 0.0;
  double sum_all = 0.0;
  for (int v = 0; v < 256; ++v) {
    total += static_cast<double>(histogram[v]);
    sum_all += static_cast<double>(v) * static_cast<double>(histogram[v]);
  }

  int best_t = 0;
  double best_var = 0.0;
  double w0 = 0.0;
  double sum0 = 0.0;
  for (int t = 0; t < 255; ++t) {
    w0 += static_cast<double>(histogram[t]);
    sum0 += static_cast<double>(t) * static_cast<double>(histogram[t]);
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double diff = sum0 / w0 - (sum_all - sum0) / w1;
    const double var = w0 * w1 * diff * diff;
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

RoiRect segment_board_roi(const RasterImage& image, int margin) {
  if (margin < 0) throw std::invalid_argument("margin must be non-negative");
  const int w = image.width();
  const int h = image.height();
  const auto gray = to_grayscale(image);

  std::array<std::size_t, 256> hist{};
  for (auto g : gray) ++hist[g];
  const int t = otsu_threshold(hist);

  // Flood-fill labelling; the first component found wins size ties.
  std::vector<std::uint8_t> visited(gray.size(), 0);
  std::vector<std::size_t> stack;
  std::size_t best_size = 0;
  RoiRect best;
  for (std::size_t seed = 0; seed < gray.size(); ++seed) {
    if (visited[seed] || gray[seed] <= t) continue;
    visited[seed] = 1;
    stack.push_back(seed);
    std::size_t size = 0;
    RoiRect box{w, h, 0, 0};
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(p % static_cast<std::size_t>(w));
      const int y = static_cast<int>(p / static_cast<std::size_t>(w));
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
      auto visit = [&](std::size_t q) {
        if (!visited[q] && gray[q] > t) {
          visited[q] = 1;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - static_cast<std::size_t>(w));
      if (y + 1 < h) visit(p + static_cast<std::size_t>(w));
    }
    if (size > best_size) {
      best_size = size;
      best = box;
    }
  }
  if (best_size == 0) throw NoBoardFound();

  return RoiRect{std::max(0, best.x0 - margin), std::max(0, best.y0 - margin),
                 std::min(w, best.x1 + margin), std::min(h, best.y1 + margin)};
}

RasterImage crop(const RasterImage& image, const RoiRect& roi) {
  check_roi(roi, image.width(), image.height());
  RasterImage out(roi.width(), roi.height());
  const std::size_t row_bytes = static_cast<std::size_t>(roi.width()) * 3;
  const std::size_t stride = static_cast<std::size_t>(image.width()) * 3;
  auto src = image.pixels().begin() + static_cast<std::ptrdiff_t>(
                                         static_cast<std::size_t>(roi.y0) * stride +
                                         static_cast<std::size_t>(roi.x0) * 3);
  auto dst = out.pixels().begin();
  for (int y = 0; y < roi.height(); ++y) {
    std::copy_n(src, row_bytes, dst);
    src += static_cast<std::ptrdiff_t>(stride);
    dst += static_cast<std::ptrdiff_t>(row_bytes);
  }
  return out;
}

CropResult crop_and_remap(const RasterImage& image, const RoiRect& roi,
                          const std::vector<Annotation>& annotations) {
  CropResult result{crop(image, roi), {}, 0, 0};
  const double img_w = image.width();
  const double img_h = image.height();
  const double span_x = roi.width();
  const double span_y = roi.height();
  const double scale_x = img_w / span_x;
  const double scale_y = img_h / span_y;

  for (const auto& a : annotations) {
    const double bx0 = a.box.left() * img_w;
    const double bx1 = a.box.right() * img_w;
    const double by0 = a.box.top() * img_h;
    const double by1 = a.box.bottom() * img_h;
    const double ix0 = std::max(bx0, static_cast<double>(roi.x0));
    const double ix1 = std::min(bx1, static_cast<double>(roi.x1));
    const double iy0 = std::max(by0, static_cast<double>(roi.y0));
    const double iy1 = std::min(by1, static_cast<double>(roi.y1));
    if (ix1 <= ix0 || iy1 <= iy0) {
      ++result.dropped_outside;
      continue;
    }

    BoundingBox box;
    const bool inside = bx0 >= roi.x0 && bx1 <= roi.x1 && by0 >= roi.y0 && by1 <= roi.y1;
    if (inside) {
      // Written so that a whole-image ROI reproduces the input bit for bit.
      box = BoundingBox{(a.box.cx - roi.x0 / img_w) * scale_x, (a.box.cy - roi.y0 / img_h) * scale_y,
                        a.box.w * scale_x, a.box.h * scale_y};
    } else {
      const double kept = (ix1 - ix0) * (iy1 - iy0);
      const double original = (bx1 - bx0) * (by1 - by0);
      if (kept < 0.5 * original) {
        ++result.dropped_clipped;
        continue;
      }
      box = BoundingBox{((ix0 + ix1) / 2.0 - roi.x0) / span_x, ((iy0 + iy1) / 2.0 - roi.y0) / span_y,
                        (ix1 - ix0) / span_x, (iy1 - iy0) / span_y};
    }
    box.cx = std::clamp(box.cx, 0.0, 1.0);
    box.cy = std::clamp(box.cy, 0.0, 1.0);
    box.w = std::min(box.w, 1.0);
    box.h = std::min(box.h, 1.0);
    result.annotations.push_back(Annotation{a.label, box});
  }
  return result;
}

RasterImage contrast_stretch(const RasterImage& image, double low_pct, double high_pct) {
  if (!(0.0 <= low_pct && low_pct < high_pct && high_pct <= 100.0)) {
    throw std::invalid_argument(
        fmt::format("percentiles must satisfy 0 <= low < high <= 100, got {} and {}", low_pct, high_pct));
  }
  RasterImage out = image;
  const auto& src = image.pixels();
  auto& dst = out.pixels();
  const std::size_t n = src.size() / 3;

  for (int c = 0; c < 3; ++c) {
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < n; ++i) ++hist[src[3 * i + c]];

    // Nearest-rank percentile: smallest level whose cumulative count reaches rank.
    auto percentile = [&](double pct) {
      const auto rank = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(n))));
      std::size_t cum = 0;
      for (int v = 0; v < 256; ++v) {
        cum += hist[v];
        if (cum >= rank) return v;
      }
      return 255;
    };
    const int lo = percentile(low_pct);
    const int hi = percentile(high_pct);
    if (hi <= lo) continue;

    std::array<std::uint8_t, 256> lut{};
    for (int v = 0; v < 256; ++v) {
      const double mapped = std::round((v - lo) * 255.0 / (hi - lo));
      lut[v] = static_cast<std::uint8_t>(std::clamp(mapped, 0.0, 255.0));
    }
    for (std::size_t i = 0; i < n; ++i) dst[3 * i + c] = lut[src[3 * i + c]];
  }
  return out;
}

std::string_view augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::hflip: return "hflip";
    case AugmentOp::vflip: return "vflip";
    case AugmentOp::rot90: return "rot90";
    case AugmentOp::rot180: return "rot180";
    case AugmentOp::rot270: return "rot270";
  }
  return "unknown";
}

std::optional<AugmentOp> augment_op_from_name(std::string_view name) {
  for (auto op : kAllAugmentOps) {
    if (augment_op_name(op) == name) return op;
  }
  return std::nullopt;
}

AugmentOp inverse(AugmentOp op) {
  switch (op) {
    case AugmentOp::rot90: return AugmentOp::rot270;
    case AugmentOp::rot270: return AugmentOp::rot90;
    default: return op;
  }
}

BoundingBox transform_box(const BoundingBox& b, AugmentOp op) {
  switch (op) {
    case AugmentOp::hflip: return {1.0 - b.cx, b.cy, b.w, b.h};
    case AugmentOp::vflip: return {b.cx, 1.0 - b.cy, b.w, b.h};
    case AugmentOp::rot90: return {1.0 - b.cy, b.cx, b.h, b.w};
    case AugmentOp::rot180: return {1.0 - b.cx, 1.0 - b.cy, b.w, b.h};
    case AugmentOp::rot270: return {b.cy, 1.0 - b.cx, b.h, b.w};
  }
  return b;
}

RasterImage transform_image(const RasterImage& in, AugmentOp op) {
  const int w = in.width();
  const int h = in.height();
  const bool swaps = op == AugmentOp::rot90 || op == AugmentOp::rot270;
  RasterImage out(swaps ? h : w, swaps ? w : h);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      int sx = x;
      int sy = y;
      switch (op) {
        case AugmentOp::hflip: sx = w - 1 - x; break;
        case AugmentOp::vflip: sy = h - 1 - y; break;
        case AugmentOp::rot180: sx = w - 1 - x; sy = h - 1 - y; break;
        case AugmentOp::rot90: sx = y; sy = h - 1 - x; break;
        case AugmentOp::rot270: sx = w - 1 - y; sy = x; break;
      }
      out.set_rgb(x, y, in.at(sx, sy, 0), in.at(sx, sy, 1), in.at(sx, sy, 2));
    }
  }
  return out;
}

Augmented augment(const RasterImage& image, const std::vector<Annotation>& annotations, AugmentOp op) {
  Augmented out{transform_image(image, op), {}};
  out.annotations.reserve(annotations.size());
  for (const auto& a : annotations) out.annotations.push_back({a.label, transform_box(a.box, op)});
  return out;
}

std::filesystem::path augmented_name(const std::filesystem::path& original, AugmentOp op) {
  auto name = original.stem().string() + "__" + std::string(augment_op_name(op)) +
              original.extension().string();
  return original.parent_path() / name;
}

}  // namespace pcbmine::preprocess
