#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcbmine::cli {

namespace fs = std::filesystem;

/// Exit 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  fs::path output_dir = "pcbmine-out";
  unsigned jobs = 1;
  bool lenient = false;
};

struct IngestOptions {
  fs::path export_file;
  fs::path images_dir;
  std::string split = "train";
};

struct ConvertOptions {
  std::string to = "yolo";
  fs::path manifest;
  fs::path labels_dir;
  fs::path images_dir;
  std::string split = "train";
};

struct StatsOptions {
  fs::path manifest;
  std::optional<std::size_t> target_min;
};

struct RoiOptions {
  fs::path manifest;
  fs::path images_dir;
  int margin = 0;
  std::vector<double> contrast;
};

struct AugmentOptions {
  fs::path manifest;
  fs::path images_dir;
  std::size_t target_min = 0;
  std::vector<std::string> ops;
};

struct EvalOptions {
  fs::path manifest;
  fs::path detections_dir;
  std::string split = "val";
  std::vector<double> thresholds;
};

struct InventoryOptions {
  fs::path detections_dir;
  fs::path mapping;
  double floor = 0.0;
};

int cmd_ingest(const GlobalOptions& g, const IngestOptions& o);
int cmd_convert(const GlobalOptions& g, const ConvertOptions& o);
int cmd_stats(const GlobalOptions& g, const StatsOptions& o);
int cmd_roi(const GlobalOptions& g, const RoiOptions& o);
int cmd_augment(const GlobalOptions& g, const AugmentOptions& o);
int cmd_eval(const GlobalOptions& g, const EvalOptions& o);
int cmd_inventory(const GlobalOptions& g, const InventoryOptions& o);

}  // namespace pcbmine::cli
