#include "pcbmine/eval.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pcbmine/parallel.hpp"

namespace pcbmine::eval {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a.right() - a.left()) * (a.bottom() - a.top());
  const double area_b = (b.right() - b.left()) * (b.bottom() - b.top());
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::size_t MatchResult::tp() const {
  return static_cast<std::size_t>(std::count(detection_tp.begin(), detection_tp.end(), true));
}

std::size_t MatchResult::fp() const { return detection_tp.size() - tp(); }

std::size_t MatchResult::fn() const {
  return static_cast<std::size_t>(std::count(gt_matched.begin(), gt_matched.end(), false));
}

namespace {

/// Descending confidence, stable on input order.
std::vector<std::size_t> confidence_order(std::span<const Detection> det) {
  std::vector<std::size_t> order(det.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return det[a].confidence > det[b].confidence;
  });
  return order;
}

}  // namespace

MatchResult match_detections(std::span<const Annotation> gt, std::span<const Detection> det,
                             double iou_thresh) {
  MatchResult m;
  m.detection_tp.assign(det.size(), false);
  m.detection_match.assign(det.size(), -1);
  m.gt_matched.assign(gt.size(), false);

  // Classes never interact, so one pass in global confidence order is the
  // same as running each class separately.
  for (std::size_t d : confidence_order(det)) {
    long best = -1;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (m.gt_matched[g] || gt[g].label != det[d].label) continue;
      const double v = iou(gt[g].box, det[d].box);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<long>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      m.gt_matched[static_cast<std::size_t>(best)] = true;
      m.detection_tp[d] = true;
      m.detection_match[d] = best;
    }
  }
  return m;
}

PrCurve pr_curve(const std::vector<bool>& tp_in_rank_order, std::size_t num_gt) {
  if (num_gt == 0) throw EvalError("precision/recall curve needs at least one ground-truth instance");
  PrCurve curve;
  curve.num_gt = num_gt;
  curve.points.reserve(tp_in_rank_order.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (bool is_tp : tp_in_rank_order) {
    is_tp ? ++tp : ++fp;
    curve.points.push_back(PrPoint{static_cast<double>(tp) / static_cast<double>(num_gt),
                                   static_cast<double>(tp) / static_cast<double>(tp + fp), tp, fp});
  }
  return curve;
}

double average_precision(const PrCurve& curve) {
  if (curve.num_gt == 0) throw EvalError("average precision is undefined without ground truth");
  const auto& pts = curve.points;
  // Envelope from the right; recall only grows at TP steps, each by tp-delta/num_gt.
  long double envelope = 0.0L;
  long double sum = 0.0L;
  for (std::size_t i = pts.size(); i-- > 0;) {
    const long double p = static_cast<long double>(pts[i].tp) /
                          static_cast<long double>(pts[i].tp + pts[i].fp);
    envelope = std::max(envelope, p);
    const std::size_t prev_tp = i == 0 ? 0 : pts[i - 1].tp;
    if (pts[i].tp > prev_tp) sum += static_cast<long double>(pts[i].tp - prev_tp) * envelope;
  }
  const double ap = static_cast<double>(sum / static_cast<long double>(curve.num_gt));
  return std::clamp(ap, 0.0, 1.0);
}

double mean_average_precision(std::span<const double> aps) {
  if (aps.empty()) return 0.0;
  double sum = 0.0;
  for (double ap : aps) sum += ap;
  return sum / static_cast<double>(aps.size());
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

// ---------------------------------------------------------------------------

namespace {

struct RankedDetection {
  double confidence;
  std::size_t image;
  std::size_t index;
  bool tp;
};

bool ranks_before(const RankedDetection& a, const RankedDetection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.image != b.image) return a.image < b.image;
  return a.index < b.index;
}

void choose_operating_point(EvalReport& report, std::vector<RankedDetection> ranked,
                            std::size_t total_gt) {
  report.recall_defined = total_gt > 0;
  report.fn = total_gt;
  if (ranked.empty()) return;

  std::sort(ranked.begin(), ranked.end(), ranks_before);
  std::size_t tp = 0;
  std::size_t fp = 0;
  double best_f1 = -1.0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    ranked[i].tp ? ++tp : ++fp;
    // A cutoff admits every detection at its confidence, so only evaluate
    // at the end of a tie group.
    if (i + 1 < ranked.size() && ranked[i + 1].confidence == ranked[i].confidence) continue;
    const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(tp + fp + total_gt);
    if (f1 > best_f1) {
      best_f1 = f1;
      report.f1 = f1;
      report.confidence_cutoff = ranked[i].confidence;
      report.tp = tp;
      report.fp = fp;
      report.fn = total_gt - tp;
    }
  }
  report.precision_defined = true;
  report.precision = static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fp);
  report.recall = total_gt > 0 ? static_cast<double>(report.tp) / static_cast<double>(total_gt) : 0.0;
}

}  // namespace

EvalReport evaluate(const GroundTruthSet& gt, const DetectionSet& det, const EvalOptions& opts) {
  for (const auto& [image, _] : det) {
    if (!gt.count(image)) {
      throw EvalError(fmt::format("detections for image '{}' have no ground truth", image));
    }
  }

  std::vector<double> thresholds = coco_thresholds();
  for (double t : opts.iou_thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw EvalError(fmt::format("IoU threshold {} outside (0,1)", t));
    thresholds.push_back(t);
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const auto index_of = [&](double t) {
    return static_cast<std::size_t>(std::find(thresholds.begin(), thresholds.end(), t) - thresholds.begin());
  };
  const std::size_t t50 = index_of(0.5);
  std::vector<std::size_t> coco_idx;
  for (double t : coco_thresholds()) coco_idx.push_back(index_of(t));

  // Images in key order; that order breaks confidence ties across images.
  std::vector<const std::string*> ids;
  std::vector<const std::vector<Annotation>*> gts;
  std::vector<std::span<const Detection>> dets;
  for (const auto& [image, anns] : gt) {
    ids.push_back(&image);
    gts.push_back(&anns);
    auto it = det.find(image);
    dets.push_back(it == det.end() ? std::span<const Detection>{} : std::span<const Detection>(it->second));
  }

  // matches[image][threshold]
  std::vector<std::vector<MatchResult>> matches(ids.size());
  parallel_for(ids.size(), opts.jobs, [&](std::size_t i) {
    matches[i].reserve(thresholds.size());
    for (double t : thresholds) matches[i].push_back(match_detections(*gts[i], dets[i], t));
  });

  EvalReport report;
  report.num_images = ids.size();
  report.thresholds = thresholds;

  std::size_t total_gt = 0;
  std::vector<RankedDetection> all50;
  std::vector<double> ap50s;
  std::vector<double> ap95s;
  for (ClassLabel label : kAllClasses) {
    ClassMetrics cm;
    cm.label = label;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (const auto& a : *gts[i]) cm.num_gt += a.label == label;
      for (const auto& d : dets[i]) cm.num_detections += d.label == label;
    }
    if (cm.num_gt == 0 && cm.num_detections == 0) continue;
    total_gt += cm.num_gt;

    for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
      std::vector<RankedDetection> ranked;
      ranked.reserve(cm.num_detections);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t k = 0; k < dets[i].size(); ++k) {
          if (dets[i][k].label != label) continue;
          ranked.push_back({dets[i][k].confidence, i, k, matches[i][ti].detection_tp[k]});
        }
      }
      std::sort(ranked.begin(), ranked.end(), ranks_before);

      if (ti == t50) {
        for (const auto& r : ranked) r.tp ? ++cm.tp : ++cm.fp;
        cm.fn = cm.num_gt - cm.tp;
        all50.insert(all50.end(), ranked.begin(), ranked.end());
      }
      if (cm.num_gt == 0) continue;

      std::vector<bool> flags;
      flags.reserve(ranked.size());
      for (const auto& r : ranked) flags.push_back(r.tp);
      PrCurve curve = pr_curve(flags, cm.num_gt);
      cm.ap_by_threshold.push_back(average_precision(curve));
      if (ti == t50) cm.curve50 = std::move(curve);
    }

    if (cm.num_gt == 0) {
      report.excluded_classes.push_back(label);
    } else {
      cm.evaluated = true;
      cm.ap50 = cm.ap_by_threshold[t50];
      std::vector<double> coco_aps;
      for (std::size_t ti : coco_idx) coco_aps.push_back(cm.ap_by_threshold[ti]);
      cm.ap50_95 = mean_average_precision(coco_aps);
      ap50s.push_back(cm.ap50);
      ap95s.push_back(cm.ap50_95);
    }
    report.classes.push_back(std::move(cm));
  }

  report.map_defined = !ap50s.empty();
  report.map50 = mean_average_precision(ap50s);
  report.map50_95 = mean_average_precision(ap95s);
  choose_operating_point(report, std::move(all50), total_gt);
  return report;
}

// ---------------------------------------------------------------------------

std::string report_to_json(const EvalReport& r) {
  using nlohmann::json;
  json doc;
  doc["num_images"] = r.num_images;
  doc["iou_thresholds"] = r.thresholds;
  doc["ap_method"] = r.ap_method;
  doc["operating_point"] = r.operating_point;
  doc["summary"] = {
      {"precision", r.precision},
      {"precision_defined", r.precision_defined},
      {"recall", r.recall},
      {"recall_defined", r.recall_defined},
      {"f1", r.f1},
      {"confidence_cutoff", r.confidence_cutoff ? json(*r.confidence_cutoff) : json(nullptr)},
      {"tp", r.tp},
      {"fp", r.fp},
      {"fn", r.fn},
      {"mAP50", r.map50},
      {"mAP50_95", r.map50_95},
      {"map_defined", r.map_defined},
  };
  json classes = json::array();
  for (const auto& c : r.classes) {
    json points = json::array();
    for (const auto& p : c.curve50.points) points.push_back({p.recall, p.precision});
    json ap_at = json::object();
    if (c.evaluated) {
      for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
        ap_at[fmt::format("{:.2f}", r.thresholds[i])] = c.ap_by_threshold[i];
      }
    }
    classes.push_back({
        {"class", class_name(c.label)},
        {"id", class_id(c.label)},
        {"num_gt", c.num_gt},
        {"num_detections", c.num_detections},
        {"tp", c.tp},
        {"fp", c.fp},
        {"fn", c.fn},
        {"evaluated", c.evaluated},
        {"ap50", c.evaluated ? json(c.ap50) : json(nullptr)},
        {"ap50_95", c.evaluated ? json(c.ap50_95) : json(nullptr)},
        {"ap_by_threshold", std::move(ap_at)},
        {"pr_curve50", std::move(points)},
    });
  }
  doc["classes"] = std::move(classes);
  json excluded = json::array();
  for (auto c : r.excluded_classes) excluded.push_back(class_name(c));
  doc["excluded_classes"] = std::move(excluded);
  return doc.dump(2) + "\n";
}

namespace {

template <typename... T>
void append(std::string& out, fmt::format_string<T...> f, T&&... args) {
  fmt::format_to(std::back_inserter(out), f, std::forward<T>(args)...);
}

}  // namespace

std::string report_to_markdown(const EvalReport& r) {
  std::string out;
  append(out, "| Precision | Recall | mAP | mAP-95 |\n");
  append(out, "|-----------|--------|-----|--------|\n");
  append(out, "| {:.3f}{} | {:.3f} | {:.3f} | {:.3f} |\n\n", r.precision, r.precision_defined ? "" : "*",
      r.recall, r.map50, r.map50_95);
  if (!r.precision_defined) append(out, "\\* precision undefined: no detections.\n\n");
  append(out, "mAP at IoU 0.5; mAP-95 averaged over IoU 0.50:0.05:0.95 ({} AP). ", r.ap_method);
  if (r.confidence_cutoff) {
    append(out, "Precision/recall at confidence >= {:.6f} ({}).\n\n", *r.confidence_cutoff, r.operating_point);
  } else {
    append(out, "No operating point ({}).\n\n", r.operating_point);
  }
  append(out, "| Class | GT | Det | TP | FP | FN | AP@.5 | AP@.5:.95 |\n");
  append(out, "|-------|----|-----|----|----|----|-------|-----------|\n");
  for (const auto& c : r.classes) {
    if (c.evaluated) {
      append(out, "| {} | {} | {} | {} | {} | {} | {:.3f} | {:.3f} |\n", class_name(c.label), c.num_gt,
          c.num_detections, c.tp, c.fp, c.fn, c.ap50, c.ap50_95);
    } else {
      append(out, "| {} | {} | {} | {} | {} | {} | n/a | n/a |\n", class_name(c.label), c.num_gt,
          c.num_detections, c.tp, c.fp, c.fn);
    }
  }
  return out;
}

std::string summary_line(const EvalReport& r) {
  return fmt::format("P={:.4f}{} R={:.4f} mAP@.5={:.4f} mAP@.5:.95={:.4f}", r.precision,
                     r.precision_defined ? "" : " (undefined)", r.recall, r.map50, r.map50_95);
}

}  // namespace pcbmine::eval
