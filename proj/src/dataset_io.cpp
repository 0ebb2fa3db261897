#include "pcbmine/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace pcbmine::dataset {

using json = nlohmann::json;

ParseError::ParseError(std::size_t line, std::string field, const std::string& what)
    : std::runtime_error(line > 0 ? fmt::format("line {}: {}", line, what) : what),
      line_(line),
      field_(std::move(field)) {}

namespace {

constexpr std::string_view kWhitespace = " \t\r\v\f";

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    pos = line.find_first_not_of(kWhitespace, pos);
    if (pos == std::string_view::npos) break;
    std::size_t end = line.find_first_of(kWhitespace, pos);
    if (end == std::string_view::npos) end = line.size();
    fields.push_back(line.substr(pos, end - pos));
    pos = end;
  }
  return fields;
}

double parse_real(std::string_view token, std::size_t line, const char* field) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw ParseError(line, field, fmt::format("field '{}' is not a finite decimal: '{}'", field, token));
  }
  return value;
}

ClassLabel parse_class(std::string_view token, std::size_t line, const ClassTable& classes) {
  long id = -1;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), id);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError(line, "class_id", fmt::format("class_id is not an integer: '{}'", token));
  }
  auto label = class_from_id(id);
  if (!label || !classes.contains(*label)) {
    throw ParseError(line, "class_id", fmt::format("class_id {} not in class table", id));
  }
  return *label;
}

/// Applies the box invariants; in lenient mode clamps what can be clamped.
BoundingBox checked_box(BoundingBox box, std::size_t line, const ParseOptions& opts,
                        std::vector<ParseWarning>& warnings) {
  auto err = box_error(box);
  if (!err) return box;
  if (opts.lenient && box.w > 0.0 && box.h > 0.0) {
    BoundingBox fixed{std::clamp(box.cx, 0.0, 1.0), std::clamp(box.cy, 0.0, 1.0),
                      std::min(box.w, 1.0), std::min(box.h, 1.0)};
    warnings.push_back({line, fmt::format("clamped box: {}", *err)});
    return fixed;
  }
  throw ParseError(line, "box", fmt::format("invalid box: {}", *err));
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    ++line_no;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto fields = split_fields(text.substr(pos, end - pos));
    if (!fields.empty()) fn(line_no, fields);
    pos = end + 1;
  }
}

}  // namespace

std::vector<Annotation> parse_yolo_labels(std::string_view text, const ClassTable& classes,
                                          const ParseOptions& opts,
                                          std::vector<ParseWarning>& warnings) {
  std::vector<Annotation> out;
  for_each_line(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (f.size() != 5) {
      throw ParseError(line, "line", fmt::format("expected 5 fields, got {}", f.size()));
    }
    Annotation a;
    a.label = parse_class(f[0], line, classes);
    BoundingBox box{parse_real(f[1], line, "cx"), parse_real(f[2], line, "cy"),
                    parse_real(f[3], line, "w"), parse_real(f[4], line, "h")};
    a.box = checked_box(box, line, opts, warnings);
    out.push_back(a);
  });
  return out;
}

std::vector<Annotation> parse_yolo_labels(std::string_view text, const ClassTable& classes,
                                          const ParseOptions& opts) {
  std::vector<ParseWarning> ignored;
  return parse_yolo_labels(text, classes, opts, ignored);
}

std::string write_yolo_labels(const std::vector<Annotation>& annotations) {
  std::string out;
  for (const auto& a : annotations) {
    fmt::format_to(std::back_inserter(out), "{} {:.6f} {:.6f} {:.6f} {:.6f}\n", class_id(a.label),
                   a.box.cx, a.box.cy, a.box.w, a.box.h);
  }
  return out;
}

std::vector<Detection> parse_detections(std::string_view text, const ClassTable& classes,
                                        const ParseOptions& opts,
                                        std::vector<ParseWarning>& warnings) {
  std::vector<Detection> out;
  for_each_line(text, [&](std::size_t line, const std::vector<std::string_view>& f) {
    if (f.size() != 6) {
      throw ParseError(line, "line", fmt::format("expected 6 fields, got {}", f.size()));
    }
    Detection d;
    d.label = parse_class(f[0], line, classes);
    d.confidence = parse_real(f[1], line, "confidence");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
      if (!opts.lenient) {
        throw ParseError(line, "confidence",
                         fmt::format("confidence {} outside [0,1]", d.confidence));
      }
      warnings.push_back({line, fmt::format("clamped confidence {}", d.confidence)});
      d.confidence = std::clamp(d.confidence, 0.0, 1.0);
    }
    BoundingBox box{parse_real(f[2], line, "cx"), parse_real(f[3], line, "cy"),
                    parse_real(f[4], line, "w"), parse_real(f[5], line, "h")};
    d.box = checked_box(box, line, opts, warnings);
    out.push_back(d);
  });
  return out;
}

std::vector<Detection> parse_detections(std::string_view text, const ClassTable& classes,
                                        const ParseOptions& opts) {
  std::vector<ParseWarning> ignored;
  return parse_detections(text, classes, opts, ignored);
}

std::string write_detections(const std::vector<Detection>& detections) {
  std::string out;
  for (const auto& d : detections) {
    fmt::format_to(std::back_inserter(out), "{} {:.6f} {:.6f} {:.6f} {:.6f} {:.6f}\n",
                   class_id(d.label), d.confidence, d.box.cx, d.box.cy, d.box.w, d.box.h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest JSON

std::string_view split_name(Split s) { return s == Split::train ? "train" : "val"; }

namespace {

constexpr std::string_view kManifestFormat = "pcbmine-manifest";

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(0, key, fmt::format("{}: missing '{}'", where, key));
  return *it;
}

double require_number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) throw ParseError(0, key, fmt::format("{}: '{}' must be a number", where, key));
  return v.get<double>();
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw ParseError(0, key, fmt::format("{}: '{}' must be a string", where, key));
  return v.get<std::string>();
}

int require_int(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) {
    throw ParseError(0, key, fmt::format("{}: '{}' must be an integer", where, key));
  }
  return v.get<int>();
}

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, "json", fmt::format("malformed JSON: {}", e.what()));
  }
}

}  // namespace

DatasetManifest parse_manifest_json(std::string_view json_text) {
  const json doc = parse_json_text(json_text);
  if (!doc.is_object()) throw ParseError(0, "manifest", "manifest must be a JSON object");
  if (auto it = doc.find("format"); it != doc.end() && *it != kManifestFormat) {
    throw ParseError(0, "format", fmt::format("unexpected format tag {}", it->dump()));
  }

  DatasetManifest m;
  m.class_table.classes.clear();
  const json& table = require(doc, "class_table", "manifest");
  if (!table.is_array()) throw ParseError(0, "class_table", "class_table must be an array");
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string where = fmt::format("class_table[{}]", i);
    const int id = require_int(table[i], "id", where);
    const std::string name = require_string(table[i], "name", where);
    auto by_name = class_from_name(name);
    if (!by_name) throw ParseError(0, "name", fmt::format("{}: unknown class '{}'", where, name));
    if (class_id(*by_name) != id) {
      throw ParseError(0, "id", fmt::format("{}: class '{}' has id {}, not {}", where, name,
                                            class_id(*by_name), id));
    }
    m.class_table.classes.push_back(*by_name);
  }

  const json& records = require(doc, "records", "manifest");
  if (!records.is_array()) throw ParseError(0, "records", "records must be an array");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string where = fmt::format("records[{}]", i);
    const json& r = records[i];
    ImageRecord rec;
    rec.image_path = require_string(r, "image_path", where);
    rec.width = require_int(r, "width", where);
    rec.height = require_int(r, "height", where);
    const std::string split = require_string(r, "split", where);
    if (split == "train") {
      rec.split = Split::train;
    } else if (split == "val") {
      rec.split = Split::val;
    } else {
      throw ParseError(0, "split", fmt::format("{}: unknown split '{}'", where, split));
    }
    const json& anns = require(r, "annotations", where);
    if (!anns.is_array()) throw ParseError(0, "annotations", where + ": annotations must be an array");
    for (std::size_t j = 0; j < anns.size(); ++j) {
      const std::string awhere = fmt::format("{}.annotations[{}]", where, j);
      const std::string name = require_string(anns[j], "class", awhere);
      auto label = class_from_name(name);
      if (!label) throw ParseError(0, "class", fmt::format("{}: unknown class '{}'", awhere, name));
      rec.annotations.push_back(Annotation{
          *label, BoundingBox{require_number(anns[j], "cx", awhere), require_number(anns[j], "cy", awhere),
                              require_number(anns[j], "w", awhere), require_number(anns[j], "h", awhere)}});
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

std::string write_manifest_json(const DatasetManifest& m) {
  json doc;
  doc["format"] = kManifestFormat;
  doc["version"] = 1;
  json table = json::array();
  for (auto c : m.class_table.classes) {
    table.push_back({{"id", class_id(c)}, {"name", class_name(c)}});
  }
  doc["class_table"] = std::move(table);
  json records = json::array();
  for (const auto& r : m.records) {
    json anns = json::array();
    for (const auto& a : r.annotations) {
      anns.push_back({{"class", class_name(a.label)},
                      {"cx", a.box.cx},
                      {"cy", a.box.cy},
                      {"w", a.box.w},
                      {"h", a.box.h}});
    }
    records.push_back({{"image_path", r.image_path},
                       {"width", r.width},
                       {"height", r.height},
                       {"split", split_name(r.split)},
                       {"annotations", std::move(anns)}});
  }
  doc["records"] = std::move(records);
  return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Label Studio export

namespace {

constexpr double kPercentSlack = 1e-9;

std::string task_image(const json& task, const std::string& where) {
  const json& data = require(task, "data", where);
  if (!data.is_object()) throw ParseError(0, "data", where + ": 'data' must be an object");
  return require_string(data, "image", where + ".data");
}

const json* active_annotation(const json& task) {
  auto it = task.find("annotations");
  if (it == task.end() || !it->is_array()) return nullptr;
  for (const auto& ann : *it) {
    if (ann.value("was_cancelled", false)) continue;
    return &ann;
  }
  return nullptr;
}

}  // namespace

DatasetManifest parse_labelstudio_export(std::string_view json_text, const ClassTable& classes,
                                         const ParseOptions& opts,
                                         std::vector<ParseWarning>& warnings) {
  const json doc = parse_json_text(json_text);
  if (!doc.is_array()) throw ParseError(0, "export", "Label Studio export must be a JSON array of tasks");

  DatasetManifest m;
  m.class_table = classes;
  for (std::size_t t = 0; t < doc.size(); ++t) {
    const json& task = doc[t];
    const std::string where = task.contains("id") ? fmt::format("task {}", task["id"].dump())
                                                  : fmt::format("task[{}]", t);
    if (!task.is_object()) throw ParseError(0, "task", where + ": task must be an object");

    ImageRecord rec;
    rec.image_path = task_image(task, where);

    const json* ann = active_annotation(task);
    const json empty = json::array();
    const json& results = ann ? ann->value("result", empty) : empty;
    for (std::size_t r = 0; r < results.size(); ++r) {
      const json& res = results[r];
      const std::string rwhere = fmt::format("{} result[{}]", where, r);
      if (res.value("type", std::string{}) != "rectanglelabels") continue;

      if (!res.contains("original_width") || !res.contains("original_height")) {
        throw ParseError(0, "original_width", rwhere + ": missing original width/height");
      }
      const int width = require_int(res, "original_width", rwhere);
      const int height = require_int(res, "original_height", rwhere);
      if (rec.width == 0 && rec.height == 0) {
        rec.width = width;
        rec.height = height;
      } else if (rec.width != width || rec.height != height) {
        throw ParseError(0, "original_width",
                         fmt::format("{}: size {}x{} disagrees with {}x{}", rwhere, width, height,
                                     rec.width, rec.height));
      }

      const json& value = require(res, "value", rwhere);
      if (value.value("rotation", 0.0) != 0.0) {
        throw ParseError(0, "rotation", rwhere + ": rotated rectangles are not supported");
      }
      double x = require_number(value, "x", rwhere);
      double y = require_number(value, "y", rwhere);
      double w = require_number(value, "width", rwhere);
      double h = require_number(value, "height", rwhere);

      const json& labels = require(value, "rectanglelabels", rwhere);
      if (!labels.is_array() || labels.size() != 1 || !labels[0].is_string()) {
        throw ParseError(0, "rectanglelabels", rwhere + ": expected exactly one rectangle label");
      }
      const std::string name = labels[0].get<std::string>();
      auto label = class_from_display_name(name);
      if (!label || !classes.contains(*label)) {
        throw ParseError(0, "rectanglelabels", fmt::format("{}: unknown class '{}'", rwhere, name));
      }

      const bool in_range = x >= -kPercentSlack && y >= -kPercentSlack && w > 0.0 && h > 0.0 &&
                            x + w <= 100.0 + kPercentSlack && y + h <= 100.0 + kPercentSlack;
      if (!in_range) {
        const std::string msg =
            fmt::format("{}: rectangle x={} y={} width={} height={} outside [0,100] percent", rwhere, x,
                        y, w, h);
        if (!opts.lenient || !(w > 0.0 && h > 0.0)) throw ParseError(0, "value", msg);
        const double x0 = std::clamp(x, 0.0, 100.0);
        const double y0 = std::clamp(y, 0.0, 100.0);
        const double x1 = std::clamp(x + w, 0.0, 100.0);
        const double y1 = std::clamp(y + h, 0.0, 100.0);
        if (x1 <= x0 || y1 <= y0) throw ParseError(0, "value", msg);
        warnings.push_back({0, "clipped " + msg});
        x = x0;
        y = y0;
        w = x1 - x0;
        h = y1 - y0;
      }
      BoundingBox box{(x + w / 2.0) / 100.0, (y + h / 2.0) / 100.0, w / 100.0, h / 100.0};
      if (auto err = box_error(box)) {
        throw ParseError(0, "value", fmt::format("{}: {}", rwhere, *err));
      }
      rec.annotations.push_back(Annotation{*label, box});
    }
    m.records.push_back(std::move(rec));
  }
  return m;
}

DatasetManifest parse_labelstudio_export(std::string_view json_text, const ClassTable& classes,
                                         const ParseOptions& opts) {
  std::vector<ParseWarning> ignored;
  return parse_labelstudio_export(json_text, classes, opts, ignored);
}

// ---------------------------------------------------------------------------
// Validation

std::string_view finding_kind_name(FindingKind k) {
  switch (k) {
    case FindingKind::duplicate_path: return "duplicate_path";
    case FindingKind::dangling_class: return "dangling_class";
    case FindingKind::empty_split: return "empty_split";
    case FindingKind::degenerate_box: return "degenerate_box";
    case FindingKind::invalid_dimensions: return "invalid_dimensions";
    case FindingKind::duplicate_class: return "duplicate_class";
  }
  return "unknown";
}

std::vector<Finding> validate_manifest(const DatasetManifest& m) {
  std::vector<Finding> findings;

  std::set<ClassLabel> seen_classes;
  for (auto c : m.class_table.classes) {
    if (!seen_classes.insert(c).second) {
      findings.push_back({Severity::error, FindingKind::duplicate_class, -1,
                          fmt::format("class '{}' listed twice in class_table", class_name(c))});
    }
  }

  std::set<std::string> seen_paths;
  std::size_t split_counts[2] = {0, 0};
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    const long idx = static_cast<long>(i);
    ++split_counts[r.split == Split::train ? 0 : 1];

    const std::string key = std::filesystem::path(r.image_path).lexically_normal().generic_string();
    if (!seen_paths.insert(key).second) {
      findings.push_back({Severity::error, FindingKind::duplicate_path, idx,
                          fmt::format("duplicate image path '{}'", r.image_path)});
    }
    if (r.width < 1 || r.height < 1) {
      findings.push_back({Severity::error, FindingKind::invalid_dimensions, idx,
                          fmt::format("'{}' has size {}x{}", r.image_path, r.width, r.height)});
    }
    for (std::size_t j = 0; j < r.annotations.size(); ++j) {
      const auto& a = r.annotations[j];
      if (!m.class_table.contains(a.label)) {
        findings.push_back({Severity::error, FindingKind::dangling_class, idx,
                            fmt::format("'{}' annotation {} uses class '{}' absent from class_table",
                                        r.image_path, j, class_name(a.label))});
      }
      if (auto err = box_error(a.box)) {
        findings.push_back({Severity::error, FindingKind::degenerate_box, idx,
                            fmt::format("'{}' annotation {}: {}", r.image_path, j, *err)});
      }
    }
  }

  for (Split s : {Split::train, Split::val}) {
    if (split_counts[s == Split::train ? 0 : 1] == 0) {
      findings.push_back({Severity::warning, FindingKind::empty_split, -1,
                          fmt::format("split '{}' has no images", split_name(s))});
    }
  }
  return findings;
}

bool has_errors(const std::vector<Finding>& findings) {
  return std::any_of(findings.begin(), findings.end(),
                     [](const Finding& f) { return f.severity == Severity::error; });
}

}  // namespace pcbmine::dataset
