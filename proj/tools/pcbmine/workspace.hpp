#pragma once

#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "commands.hpp"
#include "pcbmine/dataset_io.hpp"
#include "pcbmine/preprocess.hpp"

namespace pcbmine::cli {

template <typename... T>
void warn(fmt::format_string<T...> f, T&&... args) {
  fmt::print(stderr, "warning: {}\n", fmt::format(f, std::forward<T>(args)...));
}

std::string read_text(const fs::path& path);

dataset::DatasetManifest load_manifest(const fs::path& path);

/// `override` if given, else `<manifest dir>/images`.
fs::path images_dir_for(const fs::path& manifest, const fs::path& override);

fs::path resolve_image(const fs::path& images_dir, const std::string& image_path);

/// `labels/<dir>/<stem>.txt` for a manifest image path.
fs::path label_path(const std::string& image_path);

/// Writes under one output directory and refuses to touch any registered input.
class OutputTree {
 public:
  explicit OutputTree(fs::path root) : root_(std::move(root)) {}

  void protect(const fs::path& input);
  const fs::path& root() const { return root_; }

  void write_text(const fs::path& rel, std::string_view content) const;
  void write_image(const fs::path& rel, const preprocess::RasterImage& image) const;
  void copy_file(const fs::path& from, const fs::path& rel) const;

 private:
  fs::path prepare(const fs::path& rel) const;

  fs::path root_;
  std::set<fs::path> inputs_;
};

}  // namespace pcbmine::cli
