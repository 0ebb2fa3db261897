#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pcbmine/dataset_io.hpp"
#include "pcbmine/preprocess.hpp"

namespace pcbmine::stats {

using dataset::DatasetManifest;
using dataset::Split;
using ClassCounts = std::array<std::size_t, kNumClasses>;

struct ClassHistogram {
  /// counts[split][class id]
  std::array<ClassCounts, 2> counts{};

  std::size_t count(Split s, ClassLabel c) const { return counts[index(s)][class_id(c)]; }
  const ClassCounts& split(Split s) const { return counts[index(s)]; }
  std::size_t total(Split s) const;
  std::size_t total() const { return total(Split::train) + total(Split::val); }

  bool operator==(const ClassHistogram&) const = default;

  static std::size_t index(Split s) { return s == Split::train ? 0 : 1; }
};

ClassHistogram class_histogram(const DatasetManifest& manifest);

/// Largest over smallest non-zero per-class count among `classes` in one
/// split; 0 when the split has no instances.
double imbalance_ratio(const ClassHistogram& hist, Split split, const ClassTable& classes);

struct SplitSummary {
  std::size_t train_images = 0;
  std::size_t val_images = 0;
  std::vector<std::string> unannotated;
  std::vector<Split> empty_splits;
};

SplitSummary split_summary(const DatasetManifest& manifest);

struct PlannedAugment {
  std::size_t record = 0;
  std::string image_path;
  preprocess::AugmentOp op = preprocess::AugmentOp::hflip;

  bool operator==(const PlannedAugment&) const = default;
};

struct AugmentPlan {
  std::size_t target_min = 0;
  std::vector<PlannedAugment> steps;
  /// Train-split counts before and after executing the plan.
  ClassCounts current{};
  ClassCounts projected{};
  /// Classes still under target when candidates ran out, with the missing count.
  std::map<ClassLabel, std::size_t> shortfall;

  bool operator==(const AugmentPlan&) const = default;
};

/// Greedy deficit-first planning over train images. Each round picks the
/// image with the most instances of still-deficient classes (lowest record
/// index on ties) and schedules its next unused op in canonical order. An
/// augmented copy duplicates every annotation of its source image.
AugmentPlan plan_augmentation(const DatasetManifest& manifest, std::size_t target_min,
                              std::span<const preprocess::AugmentOp> ops = preprocess::kAllAugmentOps);

std::string histogram_to_json(const ClassHistogram& hist, const SplitSummary& summary,
                              const ClassTable& classes);

/// Aligned text table: class vs train/val/total.
std::string histogram_table(const ClassHistogram& hist, const ClassTable& classes);

std::string plan_to_json(const AugmentPlan& plan, const ClassTable& classes);

}  // namespace pcbmine::stats
