#pragma once

#include <filesystem>
#include <stdexcept>

#include "pcbmine/preprocess.hpp"

namespace pcbmine::preprocess {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PNG or JPEG, decoded to RGB. Alpha and 16-bit data are dropped.
RasterImage read_image(const std::filesystem::path& path);

/// Format follows the extension (.png, .jpg, .jpeg).
void write_image(const std::filesystem::path& path, const RasterImage& image);

}  // namespace pcbmine::preprocess
