#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pcbmine/types.hpp"

namespace pcbmine::dataset {

/// Thrown by every parser. line() is 1-based; 0 when the error is not tied
/// to a line (e.g. JSON structure problems).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what);

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

struct ParseOptions {
  /// Clamp out-of-range values into the valid range and record a warning
  /// instead of failing.
  bool lenient = false;
};

struct ParseWarning {
  std::size_t line = 0;
  std::string message;
};

// -- YOLO label files: `class_id cx cy w h` per line ------------------------

std::vector<Annotation> parse_yolo_labels(std::string_view text, const ClassTable& classes,
                                          const ParseOptions& opts,
                                          std::vector<ParseWarning>& warnings);
std::vector<Annotation> parse_yolo_labels(std::string_view text, const ClassTable& classes,
                                          const ParseOptions& opts = {});

/// Six fractional digits per field, LF line endings.
std::string write_yolo_labels(const std::vector<Annotation>& annotations);

// -- Detection files: `class_id confidence cx cy w h` per line --------------

std::vector<Detection> parse_detections(std::string_view text, const ClassTable& classes,
                                        const ParseOptions& opts,
                                        std::vector<ParseWarning>& warnings);
std::vector<Detection> parse_detections(std::string_view text, const ClassTable& classes,
                                        const ParseOptions& opts = {});

std::string write_detections(const std::vector<Detection>& detections);

// -- Manifest ----------------------------------------------------------------

enum class Split { train, val };

std::string_view split_name(Split s);

struct ImageRecord {
  /// Relative paths resolve against the dataset's image directory.
  std::string image_path;
  int width = 0;
  int height = 0;
  Split split = Split::train;
  std::vector<Annotation> annotations;

  bool operator==(const ImageRecord&) const = default;
};

struct DatasetManifest {
  std::vector<ImageRecord> records;
  ClassTable class_table = ClassTable::full();

  bool operator==(const DatasetManifest&) const = default;
};

/// Structural parse only. Unknown class names are rejected; semantic problems
/// (duplicates, degenerate boxes, ...) are left to validate_manifest().
DatasetManifest parse_manifest_json(std::string_view json_text);
std::string write_manifest_json(const DatasetManifest& manifest);

/// Converts a Label Studio JSON export (list of tasks with percent-unit
/// rectangle results) into manifest records. Every record is assigned to the
/// train split; width/height stay 0 for tasks without any rectangle result.
DatasetManifest parse_labelstudio_export(std::string_view json_text, const ClassTable& classes,
                                         const ParseOptions& opts,
                                         std::vector<ParseWarning>& warnings);
DatasetManifest parse_labelstudio_export(std::string_view json_text, const ClassTable& classes,
                                         const ParseOptions& opts = {});

// -- Validation --------------------------------------------------------------

enum class Severity { warning, error };

enum class FindingKind {
  duplicate_path,
  dangling_class,
  empty_split,
  degenerate_box,
  invalid_dimensions,
  duplicate_class,
};

std::string_view finding_kind_name(FindingKind k);

struct Finding {
  Severity severity = Severity::error;
  FindingKind kind = FindingKind::duplicate_path;
  /// Index into manifest.records, or -1 for manifest-level findings.
  long record = -1;
  std::string message;
};

/// Reports every violation; an empty result means the manifest is valid.
std::vector<Finding> validate_manifest(const DatasetManifest& manifest);

bool has_errors(const std::vector<Finding>& findings);

}  // namespace pcbmine::dataset
