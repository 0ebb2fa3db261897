#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pcbmine/types.hpp"

namespace pcbmine::preprocess {

/// Row-major interleaved 8-bit RGB.
class RasterImage {
 public:
  RasterImage(int width, int height, std::uint8_t fill = 0);
  RasterImage(int width, int height, std::vector<std::uint8_t> rgb);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::vector<std::uint8_t>& pixels() { return pixels_; }

  std::uint8_t& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }

  void set_rgb(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  bool operator==(const RasterImage&) const = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c);
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;
};

/// Pixel rectangle [x0,x1) x [y0,y1).
struct RoiRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return static_cast<long>(width()) * height(); }

  bool operator==(const RoiRect&) const = default;
};

/// Throws std::invalid_argument unless 0 <= x0 < x1 <= width (same for y).
void check_roi(const RoiRect& roi, int width, int height);

class NoBoardFound : public std::runtime_error {
 public:
  NoBoardFound() : std::runtime_error("no board found") {}
};

/// Luma 0.299R + 0.587G + 0.114B, rounded to nearest.
std::vector<std::uint8_t> to_grayscale(const RasterImage& image);

/// Otsu threshold over an 8-bit histogram. Foreground is value > threshold.
/// When no split separates the classes (single-level histogram) returns 0.
int otsu_threshold(const std::array<std::size_t, 256>& histogram);

/// Grayscale, Otsu, largest 4-connected foreground component, its bounding
/// box grown by `margin` pixels and clamped to the image. Throws NoBoardFound
/// when nothing is above the threshold.
RoiRect segment_board_roi(const RasterImage& image, int margin);

RasterImage crop(const RasterImage& image, const RoiRect& roi);

struct CropResult {
  RasterImage image;
  std::vector<Annotation> annotations;
  /// Boxes with no overlap with the ROI.
  std::size_t dropped_outside = 0;
  /// Boxes that overlap but keep less than half their area after clipping.
  std::size_t dropped_clipped = 0;
};

/// Crops to `roi` and re-expresses boxes in crop-relative normalized
/// coordinates. Straddling boxes are clipped to the ROI and kept iff the
/// clipped area is at least half the original.
CropResult crop_and_remap(const RasterImage& image, const RoiRect& roi,
                          const std::vector<Annotation>& annotations);

/// Per-channel linear map of the low/high percentile intensities onto 0/255.
/// A channel whose two percentile levels coincide is returned unchanged.
RasterImage contrast_stretch(const RasterImage& image, double low_pct, double high_pct);

enum class AugmentOp { hflip, vflip, rot90, rot180, rot270 };

/// Planning order.
inline constexpr std::array<AugmentOp, 5> kAllAugmentOps = {
    AugmentOp::hflip, AugmentOp::vflip, AugmentOp::rot90, AugmentOp::rot180, AugmentOp::rot270};

std::string_view augment_op_name(AugmentOp op);
std::optional<AugmentOp> augment_op_from_name(std::string_view name);
AugmentOp inverse(AugmentOp op);

/// rot90 is clockwise.
BoundingBox transform_box(const BoundingBox& box, AugmentOp op);
RasterImage transform_image(const RasterImage& image, AugmentOp op);

struct Augmented {
  RasterImage image;
  std::vector<Annotation> annotations;
};

Augmented augment(const RasterImage& image, const std::vector<Annotation>& annotations, AugmentOp op);

/// `<stem>__<op>.<ext>`
std::filesystem::path augmented_name(const std::filesystem::path& original, AugmentOp op);

}  // namespace pcbmine::preprocess
