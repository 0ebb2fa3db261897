#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pcbmine/types.hpp"

namespace pcbmine::crm {

/// Critical raw materials that appear in the board-composition table.
enum class CrmElement : std::uint8_t { Ta, Pd, Nb, Ru, Ga, Ge, In, Sb, Be, Ni, Cu, Au };

inline constexpr std::size_t kNumElements = 12;

inline constexpr std::array<CrmElement, kNumElements> kAllElements = {
    CrmElement::Ta, CrmElement::Pd, CrmElement::Nb, CrmElement::Ru, CrmElement::Ga, CrmElement::Ge,
    CrmElement::In, CrmElement::Sb, CrmElement::Be, CrmElement::Ni, CrmElement::Cu, CrmElement::Au,
};

std::string_view element_symbol(CrmElement e);
std::optional<CrmElement> element_from_symbol(std::string_view symbol);

class ElementSet {
 public:
  ElementSet() = default;
  ElementSet(std::initializer_list<CrmElement> elements);

  void insert(CrmElement e) { bits_.set(static_cast<std::size_t>(e)); }
  bool contains(CrmElement e) const { return bits_.test(static_cast<std::size_t>(e)); }
  std::size_t size() const { return bits_.count(); }
  bool empty() const { return bits_.none(); }
  std::vector<CrmElement> elements() const;

  ElementSet& operator|=(const ElementSet& o) {
    bits_ |= o.bits_;
    return *this;
  }
  bool operator==(const ElementSet&) const = default;

 private:
  std::bitset<kNumElements> bits_;
};

std::string to_string(const ElementSet& s);

class MappingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CrmMapping {
  /// Component category -> elements it contains.
  std::map<std::string, ElementSet> categories;
  /// Categories whose element set is declared as the union of others.
  std::map<std::string, std::vector<std::string>> unions;
  /// Detection class -> category. Classes absent here are unmapped.
  std::map<ClassLabel, std::string> class_category;

  /// Elements a detection of `label` contributes; nullopt if unmapped.
  std::optional<ElementSet> elements_of(ClassLabel label) const;

  bool operator==(const CrmMapping&) const = default;
};

/// The board-composition table. "connectors" and "plating" have no detection
/// class pointing at them; coil and transformer are unmapped.
CrmMapping default_mapping();

/// JSON config:
///   {"categories": {"capacitors": ["Ta","Pd","Nb"], ...,
///                   "ics": {"union_of": ["capacitors", ...], "elements": [...]}},
///    "classes": {"capacitor": "capacitors", "coil": null, ...}}
/// A union category may also list "elements", which must then equal the union.
CrmMapping load_mapping(std::string_view config_text);

std::string mapping_to_json(const CrmMapping& mapping);

struct ElementTally {
  std::size_t count = 0;
  std::set<ClassLabel> classes;

  bool operator==(const ElementTally&) const = default;
};

/// Counts components, not mass: an element's count is the number of kept
/// detections whose class contains it.
struct CrmInventory {
  /// Sorted board ids that contributed.
  std::vector<std::string> boards;
  std::map<ClassLabel, std::size_t> class_counts;
  std::map<CrmElement, ElementTally> elements;
  std::map<ClassLabel, std::size_t> unmapped;
  /// Detections dropped below the floor.
  std::size_t below_floor = 0;
  /// Unset only for the empty identity inventory.
  std::optional<double> confidence_floor;
  std::shared_ptr<const CrmMapping> mapping;

  bool operator==(const CrmInventory& o) const;
};

CrmInventory inventory(const std::string& board, const std::vector<Detection>& detections,
                       std::shared_ptr<const CrmMapping> mapping, double confidence_floor);

/// Associative and commutative; a default-constructed inventory is the
/// identity. Throws MappingError when inputs disagree on mapping or floor.
CrmInventory aggregate(const std::vector<CrmInventory>& inventories);

std::string inventory_to_json(const CrmInventory& inv);

/// Header `element,contributing_component_count,contributing_classes`;
/// classes are ';'-separated. Rows follow element order.
std::string inventory_to_csv(const CrmInventory& inv);

}  // namespace pcbmine::crm
