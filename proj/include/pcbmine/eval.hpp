#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcbmine/types.hpp"

namespace pcbmine::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Intersection over union in normalized coordinates; 0 for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

struct MatchResult {
  /// Indexed like the detection input.
  std::vector<bool> detection_tp;
  /// Matched ground-truth index per detection, -1 for false positives.
  std::vector<long> detection_match;
  /// Indexed like the ground-truth input.
  std::vector<bool> gt_matched;

  std::size_t tp() const;
  std::size_t fp() const;
  std::size_t fn() const;
};

/// Greedy single-assignment matching. Within each class, detections are
/// visited by descending confidence (ties keep input order) and take the
/// unmatched same-class ground truth with the highest IoU >= iou_thresh
/// (IoU ties go to the lower ground-truth index).
MatchResult match_detections(std::span<const Annotation> gt, std::span<const Detection> det,
                             double iou_thresh);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  /// Cumulative counts the ratios were formed from.
  std::size_t tp = 0;
  std::size_t fp = 0;

  bool operator==(const PrPoint&) const = default;
};

struct PrCurve {
  std::vector<PrPoint> points;
  std::size_t num_gt = 0;
};

/// One point per ranked detection. num_gt must be positive: AP is undefined
/// for a class without ground truth.
PrCurve pr_curve(const std::vector<bool>& tp_in_rank_order, std::size_t num_gt);

/// All-point interpolated AP: area under the monotone precision envelope.
/// Accumulates in extended precision from the integer counts.
double average_precision(const PrCurve& curve);

/// Plain arithmetic mean in input order; 0 for an empty input.
double mean_average_precision(std::span<const double> aps);

/// {0.50, 0.55, ..., 0.95}
std::vector<double> coco_thresholds();

using GroundTruthSet = std::map<std::string, std::vector<Annotation>>;
using DetectionSet = std::map<std::string, std::vector<Detection>>;

struct EvalOptions {
  /// Extra IoU thresholds reported per class, on top of the ten used for
  /// mAP@[.5:.95].
  std::vector<double> iou_thresholds;
  unsigned jobs = 1;
};

struct ClassMetrics {
  ClassLabel label = ClassLabel::capacitor;
  std::size_t num_gt = 0;
  std::size_t num_detections = 0;
  /// At IoU 0.5 over all detections.
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// False when the class has no ground truth; it is then excluded from mAP.
  bool evaluated = false;
  double ap50 = 0.0;
  double ap50_95 = 0.0;
  /// Parallel to EvalReport::thresholds.
  std::vector<double> ap_by_threshold;
  PrCurve curve50;
};

struct EvalReport {
  std::size_t num_images = 0;
  std::vector<double> thresholds;
  std::string ap_method = "all-point";
  std::string operating_point = "max-f1";

  std::vector<ClassMetrics> classes;
  std::vector<ClassLabel> excluded_classes;

  double precision = 0.0;
  bool precision_defined = false;
  double recall = 0.0;
  bool recall_defined = false;
  double f1 = 0.0;
  std::optional<double> confidence_cutoff;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double map50 = 0.0;
  double map50_95 = 0.0;
  bool map_defined = false;
};

/// Throws EvalError when a detection image id has no ground-truth entry or a
/// threshold lies outside (0,1). Images present only in `gt` have no
/// detections. Results do not depend on `jobs`.
EvalReport evaluate(const GroundTruthSet& gt, const DetectionSet& det, const EvalOptions& opts = {});

std::string report_to_json(const EvalReport& report);

/// Headline table with the Precision / Recall / mAP / mAP-95 columns,
/// followed by a per-class table.
std::string report_to_markdown(const EvalReport& report);

/// `P=<..> R=<..> mAP@.5=<..> mAP@.5:.95=<..>`
std::string summary_line(const EvalReport& report);

}  // namespace pcbmine::eval
