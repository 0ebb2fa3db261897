#include "pcbmine/types.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace pcbmine {

namespace {

constexpr std::array<std::string_view, kNumClasses> kNames = {
    "capacitor",  "electrolytic_capacitor", "diode", "ic",
    "transistor", "resistor",               "coil",  "transformer",
};

}  // namespace

std::string_view class_name(ClassLabel c) { return kNames[class_id(c)]; }

std::optional<ClassLabel> class_from_id(long id) {
  if (id < 0 || id >= kNumClasses) return std::nullopt;
  return static_cast<ClassLabel>(id);
}

std::optional<ClassLabel> class_from_name(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i) {
    if (kNames[i] == name) return static_cast<ClassLabel>(i);
  }
  return std::nullopt;
}

std::optional<ClassLabel> class_from_display_name(std::string_view name) {
  std::string norm;
  norm.reserve(name.size());
  for (char ch : name) {
    if (ch == ' ' || ch == '-') {
      norm.push_back('_');
    } else {
      norm.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (auto c = class_from_name(norm)) return c;
  if (norm == "integrated_circuit" || norm == "integrated_circuits") return ClassLabel::ic;
  return std::nullopt;
}

ClassTable ClassTable::full() {
  return ClassTable{std::vector<ClassLabel>(kAllClasses.begin(), kAllClasses.end())};
}

bool ClassTable::contains(ClassLabel c) const {
  return std::find(classes.begin(), classes.end(), c) != classes.end();
}

std::optional<std::string> box_error(const BoundingBox& b) {
  // Negated comparisons so NaN fails every check.
  if (!(b.cx >= 0.0 && b.cx <= 1.0)) return fmt::format("cx={} outside [0,1]", b.cx);
  if (!(b.cy >= 0.0 && b.cy <= 1.0)) return fmt::format("cy={} outside [0,1]", b.cy);
  if (!(b.w > 0.0 && b.w <= 1.0)) return fmt::format("w={} outside (0,1]", b.w);
  if (!(b.h > 0.0 && b.h <= 1.0)) return fmt::format("h={} outside (0,1]", b.h);
  return std::nullopt;
}

BoundingBox clamp_box(const BoundingBox& b) {
  if (!(b.w > 0.0) || !(b.h > 0.0)) return b;
  const double x0 = std::clamp(b.left(), 0.0, 1.0);
  const double x1 = std::clamp(b.right(), 0.0, 1.0);
  const double y0 = std::clamp(b.top(), 0.0, 1.0);
  const double y1 = std::clamp(b.bottom(), 0.0, 1.0);
  if (x1 <= x0 || y1 <= y0) {
    // Entirely outside the image: keep the extent, pull the center in.
    return BoundingBox{std::clamp(b.cx, 0.0, 1.0), std::clamp(b.cy, 0.0, 1.0),
                       std::min(b.w, 1.0), std::min(b.h, 1.0)};
  }
  return BoundingBox{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
}

}  // namespace pcbmine
