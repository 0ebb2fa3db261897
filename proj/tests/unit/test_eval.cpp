#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "pcbmine/eval.hpp"
#include "random_scenes.hpp"
#include "reference_eval.hpp"

using namespace pcbmine;
using namespace pcbmine::eval;
using pcbmine::testing::Scene;

namespace {

std::vector<Scene> make_scenes(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  std::vector<Scene> scenes;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "s%04d", i);
    scenes.push_back(pcbmine::testing::random_scene(rng, id));
  }
  return scenes;
}

std::pair<GroundTruthSet, DetectionSet> to_sets(const std::vector<Scene>& scenes) {
  GroundTruthSet gt;
  DetectionSet det;
  for (const auto& s : scenes) {
    gt[s.image_id] = s.gt;
    det[s.image_id] = s.det;
  }
  return {gt, det};
}

// Fraction of a 1000x1000 pixel grid covered by intersection over union.
double raster_iou(const BoundingBox& a, const BoundingBox& b) {
  const int n = 1000;
  long inter = 0, uni = 0;
  auto inside = [](const BoundingBox& r, double x, double y) {
    return x >= r.cx - r.w / 2 && x < r.cx + r.w / 2 && y >= r.cy - r.h / 2 && y < r.cy + r.h / 2;
  };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double x = (i + 0.5) / n, y = (j + 0.5) / n;
      const bool ia = inside(a, x, y), ib = inside(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

const BoundingBox kCornerA{1.0 / 3, 1.0 / 3, 2.0 / 3, 2.0 / 3};  // (0,0)-(2,2) on a 3x3 grid
const BoundingBox kCornerB{2.0 / 3, 2.0 / 3, 2.0 / 3, 2.0 / 3};  // (1,1)-(3,3)

}  // namespace

TEST_CASE("iou examples") {
  const BoundingBox b{0.4, 0.3, 0.2, 0.1};
  CHECK(iou(b, b) == 1.0);
  CHECK(iou(b, {0.9, 0.9, 0.1, 0.1}) == 0.0);
  CHECK(iou({0.25, 0.5, 0.5, 1.0}, {0.75, 0.5, 0.5, 1.0}) == 0.0);  // edge contact
  CHECK(std::abs(iou(kCornerA, kCornerB) - 1.0 / 7.0) <= 1e-12);
  CHECK(std::abs(raster_iou(kCornerA, kCornerB) - 1.0 / 7.0) <= 1e-3);
}

TEST_CASE("iou is symmetric, bounded and matches rasterization") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 60; ++i) {
    auto a = pcbmine::testing::random_box(rng);
    auto b = pcbmine::testing::jitter(a, rng);
    const double v0 = iou(a, b);
    CHECK(v0 == iou(b, a));
    auto off_grid = [](const BoundingBox& r) { return r.left() < 0 || r.right() > 1 || r.top() < 0 || r.bottom() > 1; };
    if (off_grid(a) || off_grid(b)) continue;
    const double v = v0;
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(std::abs(v - raster_iou(a, b)) <= 3e-2);  // edge sampling error on thin overlaps
  }
}

TEST_CASE("match_detections examples") {
  const std::vector<Annotation> one{{ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}}};
  SUBCASE("single exact hit") {
    std::vector<Detection> d{{ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}, 0.9}};
    auto m = match_detections(one, d, 0.5);
    CHECK(m.tp() == 1);
    CHECK(m.fp() == 0);
    CHECK(m.fn() == 0);
  }
  SUBCASE("two overlapping detections, higher confidence wins") {
    std::vector<Detection> d{{ClassLabel::ic, {0.51, 0.5, 0.2, 0.2}, 0.3},
                             {ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}, 0.8}};
    auto m = match_detections(one, d, 0.5);
    CHECK(m.tp() == 1);
    CHECK(m.fp() == 1);
    CHECK(m.detection_tp == std::vector<bool>{false, true});
    CHECK(m.detection_match == std::vector<long>{-1, 0});
  }
  SUBCASE("confidence ties follow input order") {
    std::vector<Detection> d{{ClassLabel::ic, {0.52, 0.5, 0.2, 0.2}, 0.5},
                             {ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}, 0.5}};
    auto m = match_detections(one, d, 0.5);
    CHECK(m.detection_tp == std::vector<bool>{true, false});
  }
  SUBCASE("cross-class matches never occur") {
    std::vector<Detection> d{{ClassLabel::diode, {0.5, 0.5, 0.2, 0.2}, 0.9}};
    auto m = match_detections(one, d, 0.5);
    CHECK(m.tp() == 0);
    CHECK(m.fp() == 1);
    CHECK(m.fn() == 1);
  }
  SUBCASE("threshold is inclusive") {
    std::vector<Detection> d{{ClassLabel::ic, kCornerB, 0.9}};
    const std::vector<Annotation> g{{ClassLabel::ic, kCornerA}};
    CHECK(match_detections(g, d, iou(kCornerA, kCornerB)).tp() == 1);
    CHECK(match_detections(g, d, 0.15).tp() == 0);
  }
  SUBCASE("empty inputs") {
    CHECK(match_detections({}, {}, 0.5).tp() == 0);
    CHECK(match_detections(one, {}, 0.5).fn() == 1);
  }
}

TEST_CASE("greedy matching against exhaustive maximum matching") {
  auto scenes = make_scenes(17, 400);
  int agree = 0;
  for (const auto& s : scenes) {
    for (double t : {0.5, 0.75}) {
      auto m = match_detections(s.gt, s.det, t);
      const auto best = pcbmine::testing::max_feasible_matching(s, t);
      CHECK(m.tp() <= best);
      agree += m.tp() == best;
      // Single-assignment invariants.
      CHECK(m.tp() + m.fn() == s.gt.size());
      CHECK(m.tp() + m.fp() == s.det.size());
      std::vector<int> used(s.gt.size(), 0);
      for (std::size_t k = 0; k < s.det.size(); ++k) {
        if (!m.detection_tp[k]) continue;
        const auto g = static_cast<std::size_t>(m.detection_match[k]);
        ++used[g];
        CHECK(s.gt[g].label == s.det[k].label);
        CHECK(iou(s.gt[g].box, s.det[k].box) >= t);
      }
      for (std::size_t g = 0; g < s.gt.size(); ++g) CHECK(used[g] == (m.gt_matched[g] ? 1 : 0));
    }
  }
  MESSAGE("greedy equals exhaustive optimum in " << agree << " of 800 cases");
  CHECK(agree > 700);
}

TEST_CASE("pr_curve example") {
  auto c = pr_curve({true, false, true}, 2);
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0] == PrPoint{0.5, 1.0, 1, 0});
  CHECK(c.points[1] == PrPoint{0.5, 0.5, 1, 1});
  CHECK(c.points[2] == PrPoint{1.0, 2.0 / 3.0, 2, 1});
  CHECK_THROWS_AS(pr_curve({true}, 0), EvalError);
  CHECK(pr_curve({}, 3).points.empty());
}

TEST_CASE("average_precision examples") {
  CHECK(average_precision(pr_curve({true, false, true}, 2)) == 5.0 / 6.0);
  CHECK(average_precision(pr_curve({true, true, true}, 3)) == 1.0);
  CHECK(average_precision(pr_curve({}, 4)) == 0.0);
  CHECK(average_precision(pr_curve({false, false}, 1)) == 0.0);
  CHECK(average_precision(pr_curve({false, true}, 1)) == 0.5);
  CHECK(average_precision(pr_curve({true, true}, 4)) == 0.5);
}

TEST_CASE("mAP is the arithmetic mean") {
  CHECK(mean_average_precision(std::vector<double>{}) == 0.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 1; i < 50; ++i) {
    std::vector<double> aps(static_cast<std::size_t>(i % 8 + 1));
    for (auto& a : aps) a = u(rng);
    double sum = 0.0;
    for (double a : aps) sum += a;
    CHECK(mean_average_precision(aps) == sum / static_cast<double>(aps.size()));
  }
  const auto t = coco_thresholds();
  REQUIRE(t.size() == 10);
  CHECK(t.front() == 0.5);
  CHECK(t[5] == 0.75);
  CHECK(t.back() == 0.95);
}

TEST_CASE("evaluate examples") {
  auto scenes = make_scenes(5, 20);
  GroundTruthSet gt;
  DetectionSet det;
  for (const auto& s : scenes) {
    gt[s.image_id] = s.gt;
    auto& d = det[s.image_id];
    for (const auto& g : s.gt) d.push_back({g.label, g.box, 1.0});
  }
  SUBCASE("perfect detector") {
    auto r = evaluate(gt, det);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.map50 == 1.0);
    CHECK(r.map50_95 == 1.0);
    CHECK(r.fp == 0);
    CHECK(r.fn == 0);
  }
  SUBCASE("no detections") {
    auto r = evaluate(gt, {});
    CHECK(r.precision == 0.0);
    CHECK_FALSE(r.precision_defined);
    CHECK(r.recall == 0.0);
    CHECK(r.map50 == 0.0);
    CHECK(r.map_defined);
    CHECK(r.tp == 0);
    CHECK(r.fn > 0);
  }
  SUBCASE("unknown image id is an error") {
    det["zzz"] = {};
    CHECK_THROWS_AS(evaluate(gt, det), EvalError);
  }
  SUBCASE("invalid threshold") {
    CHECK_THROWS_AS(evaluate(gt, det, EvalOptions{{1.0}, 1}), EvalError);
    CHECK_THROWS_AS(evaluate(gt, det, EvalOptions{{0.0}, 1}), EvalError);
  }
  SUBCASE("class with detections but no ground truth is excluded from mAP") {
    GroundTruthSet g{{"a", {{ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}}}}};
    DetectionSet d{{"a", {{ClassLabel::ic, {0.5, 0.5, 0.2, 0.2}, 0.9}, {ClassLabel::coil, {0.2, 0.2, 0.1, 0.1}, 0.8}}}};
    auto r = evaluate(g, d);
    CHECK(r.map50 == 1.0);
    CHECK(r.excluded_classes == std::vector<ClassLabel>{ClassLabel::coil});
    CHECK(r.fp == 0);  // the max-F1 cutoff excludes the coil detection
    CHECK(r.confidence_cutoff == 0.9);
  }
}

TEST_CASE("evaluate equals the brute-force reference on randomized scenes") {
  const auto start = std::chrono::steady_clock::now();
  auto scenes = make_scenes(1234, 300);
  auto [gt, det] = to_sets(scenes);
  auto rep = evaluate(gt, det);
  auto ref = pcbmine::testing::reference_evaluate(scenes);

  CHECK(std::abs(rep.map50 - ref.map50) <= 1e-9);
  CHECK(std::abs(rep.map50_95 - ref.map50_95) <= 1e-9);
  CHECK(std::abs(rep.precision - ref.precision) <= 1e-9);
  CHECK(std::abs(rep.recall - ref.recall) <= 1e-9);
  CHECK(rep.tp == ref.tp);
  CHECK(rep.fp == ref.fp);
  CHECK(rep.fn == ref.fn);
  REQUIRE(rep.classes.size() == ref.classes.size());
  for (const auto& c : rep.classes) {
    const auto& rc = ref.classes.at(class_id(c.label));
    CHECK(c.num_gt == rc.num_gt);
    CHECK(c.tp == rc.tp);
    CHECK(c.fp == rc.fp);
    CHECK(c.fn == rc.fn);
    REQUIRE(c.curve50.points.size() == rc.points50.size());
    for (std::size_t i = 0; i < rc.points50.size(); ++i) {
      CHECK(std::abs(c.curve50.points[i].recall - rc.points50[i].first) <= 1e-9);
      CHECK(std::abs(c.curve50.points[i].precision - rc.points50[i].second) <= 1e-9);
    }
    if (rc.num_gt == 0) continue;
    const auto t = coco_thresholds();
    for (std::size_t k = 0; k < t.size(); ++k) CHECK(std::abs(c.ap_by_threshold[k] - rc.ap.at(t[k])) <= 1e-9);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 10.0);
}

TEST_CASE("evaluate invariants") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    auto scenes = make_scenes(seed, 60);
    auto [gt, det] = to_sets(scenes);
    auto rep = evaluate(gt, det, EvalOptions{{}, 1});
    const std::string json = report_to_json(rep);

    std::vector<double> evaluated;
    for (const auto& c : rep.classes) {
      CHECK(c.tp + c.fn == c.num_gt);
      CHECK(c.tp + c.fp == c.num_detections);
      if (!c.evaluated) continue;
      evaluated.push_back(c.ap50);
      for (std::size_t k = 1; k < c.ap_by_threshold.size(); ++k)
        CHECK(c.ap_by_threshold[k] <= c.ap_by_threshold[k - 1]);
      for (double v : c.ap_by_threshold) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      for (std::size_t k = 1; k < c.curve50.points.size(); ++k)
        CHECK(c.curve50.points[k].recall >= c.curve50.points[k - 1].recall);
    }
    CHECK(rep.map50 == mean_average_precision(evaluated));
    for (double v : {rep.precision, rep.recall, rep.f1, rep.map50, rep.map50_95}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }

    SUBCASE("parallelism does not change the report") {
      CHECK(report_to_json(evaluate(gt, det, EvalOptions{{}, 8})) == json);
    }
    SUBCASE("strictly increasing confidence rescaling") {
      DetectionSet scaled = det;
      for (auto& [id, ds] : scaled)
        for (auto& d : ds) d.confidence = std::sqrt(d.confidence) * 0.5 + 0.25;
      auto r2 = evaluate(gt, scaled);
      CHECK(r2.map50 == rep.map50);
      CHECK(r2.map50_95 == rep.map50_95);
      CHECK(r2.precision == rep.precision);
      CHECK(r2.recall == rep.recall);
    }
    SUBCASE("insertion order of images is irrelevant") {
      GroundTruthSet g2;
      DetectionSet d2;
      for (auto it = gt.rbegin(); it != gt.rend(); ++it) g2.insert(*it);
      for (auto it = det.rbegin(); it != det.rend(); ++it) d2.insert(*it);
      CHECK(report_to_json(evaluate(g2, d2)) == json);
    }
    SUBCASE("renaming images is irrelevant when confidences are distinct") {
      std::mt19937_64 rng(seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<Scene> distinct = scenes;
      for (auto& s : distinct)
        for (auto& d : s.det) d.confidence = u(rng);
      auto [g1, d1] = to_sets(distinct);
      std::vector<Scene> renamed = distinct;
      std::shuffle(renamed.begin(), renamed.end(), rng);
      for (std::size_t i = 0; i < renamed.size(); ++i) renamed[i].image_id = "r" + std::to_string(1000 + i);
      auto [g2, d2] = to_sets(renamed);
      auto a = evaluate(g1, d1), b = evaluate(g2, d2);
      CHECK(a.map50 == b.map50);
      CHECK(a.map50_95 == b.map50_95);
      CHECK(a.precision == b.precision);
      CHECK(a.recall == b.recall);
    }
  }
}

TEST_CASE("report rendering") {
  auto scenes = make_scenes(77, 10);
  auto [gt, det] = to_sets(scenes);
  auto rep = evaluate(gt, det, EvalOptions{{0.3}, 1});
  auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["summary"]["mAP50"].get<double>() == rep.map50);
  CHECK(j["operating_point"] == "max-f1");
  CHECK(j["ap_method"] == "all-point");
  CHECK(j["iou_thresholds"].size() == 11);
  CHECK(j["classes"][0].contains("ap_by_threshold"));

  const auto md = report_to_markdown(rep);
  CHECK(md.rfind("| Precision | Recall | mAP | mAP-95 |", 0) == 0);
  CHECK(summary_line(rep).rfind("P=", 0) == 0);
  CHECK(summary_line(evaluate(gt, {})).find("(undefined)") != std::string::npos);
}
