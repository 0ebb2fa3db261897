#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pcbmine {

/// Component classes annotated on the boards. Ids are the on-disk class ids.
enum class ClassLabel : std::uint8_t {
  capacitor = 0,
  electrolytic_capacitor = 1,
  diode = 2,
  ic = 3,
  transistor = 4,
  resistor = 5,
  coil = 6,
  transformer = 7,
};

inline constexpr int kNumClasses = 8;

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::capacitor,  ClassLabel::electrolytic_capacitor,
    ClassLabel::diode,      ClassLabel::ic,
    ClassLabel::transistor, ClassLabel::resistor,
    ClassLabel::coil,       ClassLabel::transformer,
};

constexpr int class_id(ClassLabel c) { return static_cast<int>(c); }

std::string_view class_name(ClassLabel c);

/// Exact id lookup; nullopt for anything outside 0..7.
std::optional<ClassLabel> class_from_id(long id);

/// Exact canonical-name lookup ("electrolytic_capacitor", not "Electrolytic Capacitor").
std::optional<ClassLabel> class_from_name(std::string_view name);

/// Lowercases and maps spaces/hyphens to underscores, then looks the result
/// up among canonical names and the fixed aliases ("integrated_circuit(s)").
std::optional<ClassLabel> class_from_display_name(std::string_view name);

/// Classes a dataset declares. The on-disk id of a class is always its
/// ClassLabel id; the table only restricts which ids are admissible.
struct ClassTable {
  std::vector<ClassLabel> classes;

  static ClassTable full();
  bool contains(ClassLabel c) const;
  bool operator==(const ClassTable&) const = default;
};

/// Normalized center-format box. Values are fractions of image width/height.
/// Construction does not validate; use box_error() or the parsers.
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double left() const { return cx - w / 2.0; }
  double right() const { return cx + w / 2.0; }
  double top() const { return cy - h / 2.0; }
  double bottom() const { return cy + h / 2.0; }
  double area() const { return w * h; }

  bool operator==(const BoundingBox&) const = default;
};

/// nullopt when 0 <= cx,cy <= 1 and 0 < w,h <= 1; otherwise a description of
/// the first violated bound.
std::optional<std::string> box_error(const BoundingBox& box);

/// Explicit clamp: center into [0,1], extent into (0,1] and edges into [0,1].
/// Boxes with non-positive extent are returned unchanged.
BoundingBox clamp_box(const BoundingBox& box);

struct Annotation {
  ClassLabel label = ClassLabel::capacitor;
  BoundingBox box;

  bool operator==(const Annotation&) const = default;
};

struct Detection {
  ClassLabel label = ClassLabel::capacitor;
  BoundingBox box;
  double confidence = 0.0;

  bool operator==(const Detection&) const = default;
};

}  // namespace pcbmine
