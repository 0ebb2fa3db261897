#include "pcbmine/stats.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace pcbmine::stats {

using preprocess::AugmentOp;

std::size_t ClassHistogram::total(Split s) const {
  const auto& c = counts[index(s)];
  return std::accumulate(c.begin(), c.end(), std::size_t{0});
}

ClassHistogram class_histogram(const DatasetManifest& manifest) {
  ClassHistogram h;
  for (const auto& r : manifest.records) {
    for (const auto& a : r.annotations) ++h.counts[ClassHistogram::index(r.split)][class_id(a.label)];
  }
  return h;
}

double imbalance_ratio(const ClassHistogram& hist, Split split, const ClassTable& classes) {
  std::size_t hi = 0;
  std::size_t lo = 0;
  for (auto c : classes.classes) {
    const std::size_t n = hist.count(split, c);
    if (n == 0) continue;
    hi = std::max(hi, n);
    lo = lo == 0 ? n : std::min(lo, n);
  }
  return lo == 0 ? 0.0 : static_cast<double>(hi) / static_cast<double>(lo);
}

SplitSummary split_summary(const DatasetManifest& manifest) {
  SplitSummary s;
  for (const auto& r : manifest.records) {
    (r.split == Split::train ? s.train_images : s.val_images)++;
    if (r.annotations.empty()) s.unannotated.push_back(r.image_path);
  }
  if (s.train_images == 0) s.empty_splits.push_back(Split::train);
  if (s.val_images == 0) s.empty_splits.push_back(Split::val);
  return s;
}

AugmentPlan plan_augmentation(const DatasetManifest& manifest, std::size_t target_min,
                              std::span<const AugmentOp> ops) {
  std::vector<AugmentOp> order;
  for (auto op : preprocess::kAllAugmentOps) {
    if (std::find(ops.begin(), ops.end(), op) != ops.end()) order.push_back(op);
  }

  AugmentPlan plan;
  plan.target_min = target_min;

  std::vector<std::size_t> train;
  std::vector<ClassCounts> per_image;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.split != Split::train) continue;
    ClassCounts c{};
    for (const auto& a : r.annotations) ++c[class_id(a.label)];
    for (std::size_t k = 0; k < kNumClasses; ++k) plan.current[k] += c[k];
    train.push_back(i);
    per_image.push_back(c);
  }
  plan.projected = plan.current;

  auto deficit = [&] {
    std::vector<std::size_t> d;
    for (auto c : manifest.class_table.classes) {
      if (plan.projected[class_id(c)] < target_min) d.push_back(class_id(c));
    }
    return d;
  };

  std::vector<std::size_t> used(train.size(), 0);
  for (auto d = deficit(); !d.empty(); d = deficit()) {
    std::size_t best = train.size();
    std::size_t best_richness = 0;
    for (std::size_t j = 0; j < train.size(); ++j) {
      if (used[j] >= order.size()) continue;
      std::size_t richness = 0;
      for (auto k : d) richness += per_image[j][k];
      if (richness > best_richness) {
        best = j;
        best_richness = richness;
      }
    }
    if (best == train.size()) break;

    const auto& rec = manifest.records[train[best]];
    plan.steps.push_back({train[best], rec.image_path, order[used[best]++]});
    for (std::size_t k = 0; k < kNumClasses; ++k) plan.projected[k] += per_image[best][k];
  }

  for (auto k : deficit()) {
    plan.shortfall[static_cast<ClassLabel>(k)] = target_min - plan.projected[k];
  }
  return plan;
}

// ---------------------------------------------------------------------------

std::string histogram_to_json(const ClassHistogram& hist, const SplitSummary& summary,
                              const ClassTable& classes) {
  using nlohmann::json;
  json per_class = json::array();
  for (auto c : classes.classes) {
    per_class.push_back({{"class", class_name(c)},
                         {"train", hist.count(Split::train, c)},
                         {"val", hist.count(Split::val, c)}});
  }
  json empty = json::array();
  for (auto s : summary.empty_splits) empty.push_back(dataset::split_name(s));
  json doc;
  doc["classes"] = std::move(per_class);
  doc["totals"] = {{"train", hist.total(Split::train)}, {"val", hist.total(Split::val)}, {"all", hist.total()}};
  doc["images"] = {{"train", summary.train_images}, {"val", summary.val_images}};
  doc["empty_splits"] = std::move(empty);
  doc["unannotated_images"] = summary.unannotated;
  doc["imbalance_ratio"] = {{"train", imbalance_ratio(hist, Split::train, classes)},
                            {"val", imbalance_ratio(hist, Split::val, classes)}};
  return doc.dump(2) + "\n";
}

std::string histogram_table(const ClassHistogram& hist, const ClassTable& classes) {
  std::size_t width = 5;
  for (auto c : classes.classes) width = std::max(width, class_name(c).size());
  std::string out;
  auto row = [&](std::string_view name, auto train, auto val, auto all) {
    fmt::format_to(std::back_inserter(out), "{:<{}}  {:>7}  {:>7}  {:>7}\n", name, width, train, val, all);
  };
  row("class", "train", "val", "total");
  for (auto c : classes.classes) {
    row(class_name(c), hist.count(Split::train, c), hist.count(Split::val, c),
        hist.count(Split::train, c) + hist.count(Split::val, c));
  }
  row("total", hist.total(Split::train), hist.total(Split::val), hist.total());
  return out;
}

std::string plan_to_json(const AugmentPlan& plan, const ClassTable& classes) {
  using nlohmann::json;
  json steps = json::array();
  for (const auto& s : plan.steps) {
    steps.push_back({{"record", s.record}, {"image_path", s.image_path}, {"op", preprocess::augment_op_name(s.op)}});
  }
  json counts = json::array();
  for (auto c : classes.classes) {
    counts.push_back({{"class", class_name(c)},
                      {"current", plan.current[class_id(c)]},
                      {"projected", plan.projected[class_id(c)]}});
  }
  json shortfall = json::object();
  for (const auto& [c, n] : plan.shortfall) shortfall[std::string(class_name(c))] = n;
  json doc;
  doc["target_min"] = plan.target_min;
  doc["steps"] = std::move(steps);
  doc["train_counts"] = std::move(counts);
  doc["shortfall"] = std::move(shortfall);
  return doc.dump(2) + "\n";
}

}  // namespace pcbmine::stats
