#include "pcbmine/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <fmt/format.h>

namespace pcbmine::preprocess {

RasterImage read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageIoError(fmt::format("cannot read image {}", path.string()));

  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(bgr.cols) * bgr.rows * 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * bgr.cols + x) * 3;
      rgb[i] = row[x][2];
      rgb[i + 1] = row[x][1];
      rgb[i + 2] = row[x][0];
    }
  }
  return RasterImage(bgr.cols, bgr.rows, std::move(rgb));
}

void write_image(const std::filesystem::path& path, const RasterImage& image) {
  cv::Mat bgr(image.height(), image.width(), CV_8UC3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < image.width(); ++x) {
      row[x] = cv::Vec3b(image.at(x, y, 2), image.at(x, y, 1), image.at(x, y, 0));
    }
  }
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), bgr);
  } catch (const cv::Exception& e) {
    throw ImageIoError(fmt::format("cannot write image {}: {}", path.string(), e.what()));
  }
  if (!ok) throw ImageIoError(fmt::format("cannot write image {}", path.string()));
}

}  // namespace pcbmine::preprocess
