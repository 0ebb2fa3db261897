#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcbmine/crm.hpp"
#include "pcbmine/dataset_io.hpp"
#include "pcbmine/eval.hpp"
#include "pcbmine/image_io.hpp"
#include "pcbmine/parallel.hpp"
#include "pcbmine/preprocess.hpp"
#include "pcbmine/stats.hpp"
#include "workspace.hpp"

namespace pcbmine::cli {

using dataset::DatasetManifest;
using dataset::ImageRecord;
using dataset::Split;
using preprocess::RasterImage;

namespace {

dataset::ParseOptions parse_options(const GlobalOptions& g) { return dataset::ParseOptions{g.lenient}; }

void print_warnings(const fs::path& file, const std::vector<dataset::ParseWarning>& warnings) {
  for (const auto& w : warnings) warn("{}: line {}: {}", file.string(), w.line, w.message);
}

RasterImage load_image(const fs::path& path) {
  try {
    return preprocess::read_image(path);
  } catch (const preprocess::ImageIoError& e) {
    throw InputError(e.what());
  }
}

void apply_split(const std::string& spec, std::vector<ImageRecord>& records) {
  if (spec == "train" || spec == "val") {
    for (auto& r : records) r.split = spec == "train" ? Split::train : Split::val;
    return;
  }
  if (spec.rfind("ratio:", 0) == 0) {
    double f = 0.0;
    try {
      std::size_t used = 0;
      f = std::stod(spec.substr(6), &used);
      if (used != spec.size() - 6) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("bad split spec '{}'", spec));
    }
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError(fmt::format("split ratio {} is outside [0, 1]", f));
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records[a].image_path < records[b].image_path; });
    const auto n_train = static_cast<std::size_t>(std::llround(f * static_cast<double>(records.size())));
    for (std::size_t k = 0; k < order.size(); ++k) records[order[k]].split = k < n_train ? Split::train : Split::val;
    return;
  }
  if (spec.rfind("list:", 0) == 0) {
    const fs::path list_file = spec.substr(5);
    std::set<std::string> val;
    std::istringstream in(read_text(list_file));
    std::string line;
    while (std::getline(in, line)) {
      line.erase(std::remove(line.begin(), line.end(), '\r'), line.end());
      const auto b = line.find_first_not_of(" \t");
      if (b == std::string::npos || line[b] == '#') continue;
      val.insert(line.substr(b, line.find_last_not_of(" \t") - b + 1));
    }
    std::set<std::string> seen;
    for (auto& r : records) {
      const bool is_val = val.count(r.image_path) > 0;
      r.split = is_val ? Split::val : Split::train;
      if (is_val) seen.insert(r.image_path);
    }
    for (const auto& name : val)
      if (!seen.count(name)) warn("{}: '{}' matches no image", list_file.string(), name);
    return;
  }
  throw ConfigError(fmt::format("bad split spec '{}' (expected train, val, ratio:F or list:FILE)", spec));
}

/// Finds the local file for a Label Studio image reference. Uploads are
/// stored as `<hash>-<original name>`, so the prefix is also tried stripped.
std::optional<std::string> find_local_image(const fs::path& images_dir, const std::string& reference) {
  std::string base = reference.substr(reference.find_last_of('/') + 1);
  if (auto q = base.find("?d="); q != std::string::npos) base = base.substr(q + 3);
  std::vector<std::string> candidates{base};
  if (auto dash = base.find('-'); dash != std::string::npos && dash + 1 < base.size()) {
    candidates.push_back(base.substr(dash + 1));
  }
  for (const auto& c : candidates)
    if (fs::is_regular_file(images_dir / c)) return c;
  return std::nullopt;
}

bool report_findings(const DatasetManifest& m) {
  const auto findings = dataset::validate_manifest(m);
  for (const auto& f : findings) {
    const std::string where = f.record >= 0 ? m.records[static_cast<std::size_t>(f.record)].image_path + ": " : "";
    fmt::print(stderr, "{}: {}{} ({})\n", f.severity == dataset::Severity::error ? "error" : "warning", where,
               f.message, dataset::finding_kind_name(f.kind));
  }
  return dataset::has_errors(findings);
}

void write_dataset(OutputTree& out, const DatasetManifest& m, const fs::path& source_images) {
  for (const auto& r : m.records) out.protect(resolve_image(source_images, r.image_path));
  for (const auto& r : m.records) {
    out.copy_file(resolve_image(source_images, r.image_path), fs::path("images") / r.image_path);
    out.write_text(label_path(r.image_path), dataset::write_yolo_labels(r.annotations));
  }
  out.write_text("manifest.json", dataset::write_manifest_json(m));
}

void require(bool present, std::string_view flag, std::string_view command) {
  if (!present) throw ConfigError(fmt::format("{} requires {}", command, flag));
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError(fmt::format("directory not found: {}", dir.string()));
}

std::vector<fs::path> list_files(const fs::path& dir, std::initializer_list<std::string_view> extensions) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Detection> load_detections(const fs::path& file, const GlobalOptions& g) {
  std::vector<dataset::ParseWarning> warnings;
  try {
    auto d = dataset::parse_detections(read_text(file), ClassTable::full(), parse_options(g), warnings);
    print_warnings(file, warnings);
    return d;
  } catch (const dataset::ParseError& e) {
    throw InputError(fmt::format("{}: {}", file.string(), e.what()));
  }
}

}  // namespace

int cmd_ingest(const GlobalOptions& g, const IngestOptions& o) {
  require(!o.export_file.empty(), "--export", "ingest");
  require(!o.images_dir.empty(), "--images-dir", "ingest");
  require_dir(o.images_dir);

  std::vector<dataset::ParseWarning> warnings;
  DatasetManifest m;
  try {
    m = dataset::parse_labelstudio_export(read_text(o.export_file), ClassTable::full(), parse_options(g), warnings);
  } catch (const dataset::ParseError& e) {
    throw InputError(fmt::format("{}: {}", o.export_file.string(), e.what()));
  }
  print_warnings(o.export_file, warnings);

  for (auto& r : m.records) {
    auto local = find_local_image(o.images_dir, r.image_path);
    if (!local) {
      throw InputError(fmt::format("image for '{}' not found in {}", r.image_path, o.images_dir.string()));
    }
    const auto img = load_image(o.images_dir / *local);
    if (r.width != 0 && (r.width != img.width() || r.height != img.height())) {
      warn("{}: export says {}x{}, file is {}x{}", *local, r.width, r.height, img.width(), img.height());
    }
    r.width = img.width();
    r.height = img.height();
    r.image_path = *local;
  }
  apply_split(o.split, m.records);
  if (m.records.empty()) warn("{} contains no tasks", o.export_file.string());
  if (report_findings(m)) return 1;

  OutputTree out(g.output_dir);
  out.protect(o.export_file);
  write_dataset(out, m, o.images_dir);
  const auto s = stats::split_summary(m);
  fmt::print("ingested {} images (train {}, val {}) into {}\n", m.records.size(), s.train_images, s.val_images,
             (g.output_dir / "manifest.json").string());
  return 0;
}

int cmd_convert(const GlobalOptions& g, const ConvertOptions& o) {
  OutputTree out(g.output_dir);
  if (o.to == "yolo") {
    require(!o.manifest.empty(), "--manifest", "convert --to yolo");
    const auto m = load_manifest(o.manifest);
    out.protect(o.manifest);
    std::string names;
    for (auto c : kAllClasses) names += fmt::format("{}\n", class_name(c));
    out.write_text("classes.txt", names);
    for (const auto& r : m.records) out.write_text(label_path(r.image_path), dataset::write_yolo_labels(r.annotations));
    fmt::print("wrote {} label files to {}\n", m.records.size(), (g.output_dir / "labels").string());
    return 0;
  }
  if (o.to == "manifest") {
    require(!o.labels_dir.empty(), "--labels-dir", "convert --to manifest");
    require(!o.images_dir.empty(), "--images-dir", "convert --to manifest");
    require_dir(o.labels_dir);
    require_dir(o.images_dir);
    DatasetManifest m;
    std::set<std::string> used_labels;
    for (const auto& image : list_files(o.images_dir, {".png", ".jpg", ".jpeg"})) {
      const auto img = load_image(image);
      ImageRecord r{image.filename().string(), img.width(), img.height(), Split::train, {}};
      const fs::path label = o.labels_dir / (image.stem().string() + ".txt");
      if (fs::exists(label)) {
        std::vector<dataset::ParseWarning> warnings;
        try {
          r.annotations = dataset::parse_yolo_labels(read_text(label), m.class_table, parse_options(g), warnings);
        } catch (const dataset::ParseError& e) {
          throw InputError(fmt::format("{}: {}", label.string(), e.what()));
        }
        print_warnings(label, warnings);
        used_labels.insert(label.filename().string());
      } else {
        warn("{} has no label file; treated as unannotated", image.filename().string());
      }
      m.records.push_back(std::move(r));
    }
    for (const auto& label : list_files(o.labels_dir, {".txt"}))
      if (!used_labels.count(label.filename().string())) warn("{} has no matching image", label.string());
    apply_split(o.split, m.records);
    if (report_findings(m)) return 1;
    write_dataset(out, m, o.images_dir);
    fmt::print("wrote manifest with {} images to {}\n", m.records.size(), (g.output_dir / "manifest.json").string());
    return 0;
  }
  throw ConfigError(fmt::format("convert --to must be 'yolo' or 'manifest', got '{}'", o.to));
}

int cmd_stats(const GlobalOptions& g, const StatsOptions& o) {
  require(!o.manifest.empty(), "--manifest", "stats");
  const auto m = load_manifest(o.manifest);
  const auto hist = stats::class_histogram(m);
  const auto summary = stats::split_summary(m);

  OutputTree out(g.output_dir);
  out.protect(o.manifest);
  const auto table = stats::histogram_table(hist, m.class_table);
  out.write_text("stats.json", stats::histogram_to_json(hist, summary, m.class_table));
  out.write_text("stats.txt", table);

  fmt::print("{}", table);
  fmt::print("images: train {}, val {}\n", summary.train_images, summary.val_images);
  for (auto s : summary.empty_splits) warn("{} split is empty", dataset::split_name(s));
  for (const auto& p : summary.unannotated) warn("{} has no annotations", p);

  if (o.target_min) {
    const auto plan = stats::plan_augmentation(m, *o.target_min);
    out.write_text("plan.json", stats::plan_to_json(plan, m.class_table));
    fmt::print("augmentation plan: {} operations to reach {} per class\n", plan.steps.size(), *o.target_min);
    for (const auto& [c, n] : plan.shortfall) warn("{} stays {} short of the target", class_name(c), n);
  }
  return 0;
}

int cmd_roi(const GlobalOptions& g, const RoiOptions& o) {
  require(!o.manifest.empty(), "--manifest", "roi");
  if (o.margin < 0) throw ConfigError("--margin must be non-negative");
  if (!o.contrast.empty() && o.contrast.size() != 2) throw ConfigError("--contrast takes LOW,HIGH percentiles");
  if (o.contrast.size() == 2 && !(o.contrast[0] >= 0 && o.contrast[0] < o.contrast[1] && o.contrast[1] <= 100)) {
    throw ConfigError("--contrast needs 0 <= LOW < HIGH <= 100");
  }
  auto m = load_manifest(o.manifest);
  const auto images = images_dir_for(o.manifest, o.images_dir);

  struct Slot {
    preprocess::RoiRect roi;
    std::optional<preprocess::CropResult> crop;
  };
  std::vector<Slot> slots(m.records.size());
  parallel_for(m.records.size(), g.jobs, [&](std::size_t i) {
    const auto& r = m.records[i];
    const auto img = load_image(resolve_image(images, r.image_path));
    try {
      slots[i].roi = preprocess::segment_board_roi(img, o.margin);
    } catch (const preprocess::NoBoardFound& e) {
      throw InputError(fmt::format("{}: {}", r.image_path, e.what()));
    }
    auto c = preprocess::crop_and_remap(img, slots[i].roi, r.annotations);
    if (o.contrast.size() == 2) c.image = preprocess::contrast_stretch(c.image, o.contrast[0], o.contrast[1]);
    slots[i].crop = std::move(c);
  });

  OutputTree out(g.output_dir);
  out.protect(o.manifest);
  for (const auto& r : m.records) out.protect(resolve_image(images, r.image_path));
  nlohmann::json log = nlohmann::json::array();
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    auto& r = m.records[i];
    auto& c = *slots[i].crop;
    const auto& roi = slots[i].roi;
    if (c.dropped_outside + c.dropped_clipped > 0) {
      warn("{}: dropped {} boxes outside the board and {} clipped below half their area", r.image_path,
           c.dropped_outside, c.dropped_clipped);
    }
    out.write_image(fs::path("images") / r.image_path, c.image);
    out.write_text(label_path(r.image_path), dataset::write_yolo_labels(c.annotations));
    log.push_back({{"image_path", r.image_path},
                   {"roi", {roi.x0, roi.y0, roi.x1, roi.y1}},
                   {"source_size", {r.width, r.height}},
                   {"dropped_outside", c.dropped_outside},
                   {"dropped_clipped", c.dropped_clipped}});
    r.width = c.image.width();
    r.height = c.image.height();
    r.annotations = std::move(c.annotations);
  }
  out.write_text("manifest.json", dataset::write_manifest_json(m));
  out.write_text("roi.json", log.dump(2) + "\n");
  fmt::print("cropped {} images into {}\n", m.records.size(), g.output_dir.string());
  return 0;
}

int cmd_augment(const GlobalOptions& g, const AugmentOptions& o) {
  require(!o.manifest.empty(), "--manifest", "augment");
  std::vector<preprocess::AugmentOp> ops;
  for (const auto& name : o.ops) {
    auto op = preprocess::augment_op_from_name(name);
    if (!op) throw ConfigError(fmt::format("unknown augmentation op '{}'", name));
    ops.push_back(*op);
  }
  if (o.ops.empty()) ops.assign(preprocess::kAllAugmentOps.begin(), preprocess::kAllAugmentOps.end());

  auto m = load_manifest(o.manifest);
  const auto images = images_dir_for(o.manifest, o.images_dir);
  const auto plan = stats::plan_augmentation(m, o.target_min, ops);
  for (const auto& [c, n] : plan.shortfall) warn("{} stays {} short of the target", class_name(c), n);
  if (plan.steps.empty()) {
    fmt::print("augmentation plan is empty; nothing written\n");
    return 0;
  }

  std::vector<preprocess::Augmented> made(plan.steps.size(), {RasterImage(1, 1), {}});
  parallel_for(plan.steps.size(), g.jobs, [&](std::size_t i) {
    const auto& s = plan.steps[i];
    const auto& r = m.records[s.record];
    made[i] = preprocess::augment(load_image(resolve_image(images, r.image_path)), r.annotations, s.op);
  });

  OutputTree out(g.output_dir);
  out.protect(o.manifest);
  for (const auto& r : m.records) out.protect(resolve_image(images, r.image_path));
  const std::size_t originals = m.records.size();
  for (std::size_t i = 0; i < originals; ++i) {
    const auto& r = m.records[i];
    out.copy_file(resolve_image(images, r.image_path), fs::path("images") / r.image_path);
    out.write_text(label_path(r.image_path), dataset::write_yolo_labels(r.annotations));
  }
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    const auto name = preprocess::augmented_name(m.records[s.record].image_path, s.op).generic_string();
    out.write_image(fs::path("images") / name, made[i].image);
    out.write_text(label_path(name), dataset::write_yolo_labels(made[i].annotations));
    m.records.push_back({name, made[i].image.width(), made[i].image.height(), Split::train, std::move(made[i].annotations)});
  }
  out.write_text("manifest.json", dataset::write_manifest_json(m));
  out.write_text("plan.json", stats::plan_to_json(plan, m.class_table));
  fmt::print("wrote {} augmented images into {}\n", plan.steps.size(), g.output_dir.string());
  return 0;
}

int cmd_eval(const GlobalOptions& g, const EvalOptions& o) {
  require(!o.manifest.empty(), "--manifest", "eval");
  require(!o.detections_dir.empty(), "--detections-dir", "eval");
  if (o.split != "val" && o.split != "train" && o.split != "all") {
    throw ConfigError(fmt::format("--split must be val, train or all, got '{}'", o.split));
  }
  for (double t : o.thresholds)
    if (!(t > 0.0 && t < 1.0)) throw ConfigError(fmt::format("IoU threshold {} is outside (0, 1)", t));

  const auto m = load_manifest(o.manifest);
  require_dir(o.detections_dir);

  std::map<std::string, std::size_t> by_stem;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto stem = fs::path(m.records[i].image_path).stem().string();
    if (!by_stem.emplace(stem, i).second) {
      throw InputError(fmt::format("two manifest images share the stem '{}'; detection files would be ambiguous", stem));
    }
  }
  for (const auto& f : list_files(o.detections_dir, {".txt"})) {
    if (!by_stem.count(f.stem().string())) {
      throw InputError(fmt::format("detection file {} matches no manifest image", f.string()));
    }
  }

  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto s = m.records[i].split;
    if (o.split == "all" || dataset::split_name(s) == o.split) chosen.push_back(i);
  }
  if (chosen.empty()) warn("manifest has no {} images", o.split);

  std::vector<std::optional<std::vector<Detection>>> loaded(chosen.size());
  parallel_for(chosen.size(), g.jobs, [&](std::size_t k) {
    const auto file = o.detections_dir / (fs::path(m.records[chosen[k]].image_path).stem().string() + ".txt");
    if (fs::exists(file)) loaded[k] = load_detections(file, g);
  });

  eval::GroundTruthSet gt;
  eval::DetectionSet det;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto& r = m.records[chosen[k]];
    gt[r.image_path] = r.annotations;
    if (!loaded[k]) warn("no detection file for {}; counted as zero detections", r.image_path);
    det[r.image_path] = loaded[k] ? std::move(*loaded[k]) : std::vector<Detection>{};
  }

  const auto report = eval::evaluate(gt, det, eval::EvalOptions{o.thresholds, g.jobs});
  OutputTree out(g.output_dir);
  out.protect(o.manifest);
  out.write_text("eval_report.json", eval::report_to_json(report));
  out.write_text("eval_report.md", eval::report_to_markdown(report));
  fmt::print("{}\n", eval::summary_line(report));
  return 0;
}

int cmd_inventory(const GlobalOptions& g, const InventoryOptions& o) {
  require(!o.detections_dir.empty(), "--detections-dir", "inventory");
  if (!(o.floor >= 0.0 && o.floor <= 1.0)) throw ConfigError(fmt::format("--floor {} is outside [0, 1]", o.floor));

  std::shared_ptr<const crm::CrmMapping> mapping;
  if (o.mapping.empty()) {
    mapping = std::make_shared<const crm::CrmMapping>(crm::default_mapping());
  } else {
    std::string text;
    try {
      text = read_text(o.mapping);
    } catch (const InputError& e) {
      throw ConfigError(e.what());
    }
    try {
      mapping = std::make_shared<const crm::CrmMapping>(crm::load_mapping(text));
    } catch (const crm::MappingError& e) {
      throw ConfigError(fmt::format("{}: {}", o.mapping.string(), e.what()));
    }
  }

  require_dir(o.detections_dir);
  const auto files = list_files(o.detections_dir, {".txt"});
  std::vector<crm::CrmInventory> boards(files.size());
  parallel_for(files.size(), g.jobs, [&](std::size_t i) {
    boards[i] = crm::inventory(files[i].stem().string(), load_detections(files[i], g), mapping, o.floor);
  });
  auto total = crm::aggregate(boards);
  if (boards.empty()) {
    warn("no detection files in {}", o.detections_dir.string());
    total = crm::inventory("", {}, mapping, o.floor);
    total.boards.clear();
  }

  OutputTree out(g.output_dir);
  nlohmann::json doc;
  doc["aggregate"] = nlohmann::json::parse(crm::inventory_to_json(total));
  doc["boards"] = nlohmann::json::array();
  for (const auto& b : boards) {
    const auto name = b.boards.front();
    doc["boards"].push_back(nlohmann::json::parse(crm::inventory_to_json(b)));
    out.write_text(fs::path("boards") / (name + ".csv"), crm::inventory_to_csv(b));
  }
  out.write_text("inventory.json", doc.dump(2) + "\n");
  out.write_text("inventory.csv", crm::inventory_to_csv(total));
  fmt::print("inventoried {} boards: {} elements present\n", boards.size(), total.elements.size());
  return 0;
}

}  // namespace pcbmine::cli
