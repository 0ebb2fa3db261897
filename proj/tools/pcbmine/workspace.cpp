#include "workspace.hpp"

#include <fstream>
#include <sstream>

#include "pcbmine/image_io.hpp"

namespace pcbmine::cli {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

dataset::DatasetManifest load_manifest(const fs::path& path) {
  try {
    return dataset::parse_manifest_json(read_text(path));
  } catch (const dataset::ParseError& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

fs::path images_dir_for(const fs::path& manifest, const fs::path& override) {
  if (!override.empty()) return override;
  return manifest.parent_path() / "images";
}

fs::path resolve_image(const fs::path& images_dir, const std::string& image_path) {
  const fs::path p(image_path);
  return p.is_absolute() ? p : images_dir / p;
}

fs::path label_path(const std::string& image_path) {
  fs::path p(image_path);
  if (p.is_absolute()) p = p.filename();
  return fs::path("labels") / p.parent_path() / (p.stem().string() + ".txt");
}

void OutputTree::protect(const fs::path& input) {
  if (!input.empty()) inputs_.insert(fs::weakly_canonical(input));
}

fs::path OutputTree::prepare(const fs::path& rel) const {
  const fs::path target = root_ / rel;
  if (inputs_.count(fs::weakly_canonical(target))) {
    throw ConfigError(fmt::format("refusing to overwrite input file {}", target.string()));
  }
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw InputError(fmt::format("cannot create {}: {}", target.parent_path().string(), ec.message()));
  return target;
}

void OutputTree::write_text(const fs::path& rel, std::string_view content) const {
  const auto target = prepare(rel);
  std::ofstream out(target, std::ios::binary | std::ios::trunc);
  out << content;
  if (!out) throw InputError(fmt::format("cannot write {}", target.string()));
}

void OutputTree::write_image(const fs::path& rel, const preprocess::RasterImage& image) const {
  const auto target = prepare(rel);
  try {
    preprocess::write_image(target, image);
  } catch (const preprocess::ImageIoError& e) {
    throw InputError(e.what());
  }
}

void OutputTree::copy_file(const fs::path& from, const fs::path& rel) const {
  const auto target = prepare(rel);
  std::error_code ec;
  fs::copy_file(from, target, fs::copy_options::overwrite_existing, ec);
  if (ec) throw InputError(fmt::format("cannot copy {} to {}: {}", from.string(), target.string(), ec.message()));
}

}  // namespace pcbmine::cli
