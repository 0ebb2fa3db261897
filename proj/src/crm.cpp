#include "pcbmine/crm.hpp"

#include <algorithm>
#include <functional>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace pcbmine::crm {

namespace {

constexpr std::array<std::string_view, kNumElements> kSymbols = {
    "Ta", "Pd", "Nb", "Ru", "Ga", "Ge", "In", "Sb", "Be", "Ni", "Cu", "Au",
};

}  // namespace

std::string_view element_symbol(CrmElement e) { return kSymbols[static_cast<std::size_t>(e)]; }

std::optional<CrmElement> element_from_symbol(std::string_view symbol) {
  for (std::size_t i = 0; i < kNumElements; ++i) {
    if (kSymbols[i] == symbol) return static_cast<CrmElement>(i);
  }
  return std::nullopt;
}

ElementSet::ElementSet(std::initializer_list<CrmElement> elements) {
  for (auto e : elements) insert(e);
}

std::vector<CrmElement> ElementSet::elements() const {
  std::vector<CrmElement> out;
  for (auto e : kAllElements) {
    if (contains(e)) out.push_back(e);
  }
  return out;
}

std::string to_string(const ElementSet& s) {
  std::string out = "{";
  for (auto e : s.elements()) {
    if (out.size() > 1) out += ",";
    out += element_symbol(e);
  }
  return out + "}";
}

std::optional<ElementSet> CrmMapping::elements_of(ClassLabel label) const {
  auto it = class_category.find(label);
  if (it == class_category.end()) return std::nullopt;
  auto cat = categories.find(it->second);
  if (cat == categories.end()) return std::nullopt;
  return cat->second;
}

CrmMapping default_mapping() {
  using E = CrmElement;
  CrmMapping m;
  m.categories["capacitors"] = {E::Ta, E::Pd, E::Nb};
  m.categories["resistors"] = {E::Ru, E::Ta};
  m.categories["semiconductors"] = {E::Ga, E::Ge, E::In, E::Sb, E::Ta};
  m.categories["transistors"] = {E::Ga, E::Ge};
  m.categories["connectors"] = {E::Pd, E::Ru, E::Be};
  m.categories["plating"] = {E::Ni, E::Cu, E::Au};

  // ICs contain everything the four discrete categories do.
  m.unions["ics"] = {"capacitors", "resistors", "semiconductors", "transistors"};
  ElementSet ics;
  for (const auto& part : m.unions["ics"]) ics |= m.categories[part];
  m.categories["ics"] = ics;

  m.class_category[ClassLabel::capacitor] = "capacitors";
  m.class_category[ClassLabel::electrolytic_capacitor] = "capacitors";
  m.class_category[ClassLabel::resistor] = "resistors";
  m.class_category[ClassLabel::diode] = "semiconductors";
  m.class_category[ClassLabel::transistor] = "transistors";
  m.class_category[ClassLabel::ic] = "ics";
  return m;
}

CrmMapping load_mapping(std::string_view config_text) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw MappingError(fmt::format("malformed mapping config: {}", e.what()));
  }
  if (!doc.is_object() || !doc.contains("categories") || !doc["categories"].is_object()) {
    throw MappingError("mapping config needs a 'categories' object");
  }

  auto parse_elements = [](const json& list, const std::string& cat) {
    if (!list.is_array()) throw MappingError(fmt::format("category '{}': elements must be an array", cat));
    ElementSet set;
    for (const auto& sym : list) {
      if (!sym.is_string()) throw MappingError(fmt::format("category '{}': element symbols must be strings", cat));
      auto e = element_from_symbol(sym.get<std::string>());
      if (!e) throw MappingError(fmt::format("category '{}': unknown element symbol '{}'", cat, sym.get<std::string>()));
      set.insert(*e);
    }
    return set;
  };

  CrmMapping m;
  std::map<std::string, ElementSet> declared;  // explicit lists on union categories
  for (const auto& [cat, value] : doc["categories"].items()) {
    if (value.is_array()) {
      m.categories[cat] = parse_elements(value, cat);
    } else if (value.is_object() && value.contains("union_of")) {
      const json& parts = value["union_of"];
      if (!parts.is_array() || parts.empty()) {
        throw MappingError(fmt::format("category '{}': union_of must be a non-empty array", cat));
      }
      for (const auto& p : parts) {
        if (!p.is_string()) throw MappingError(fmt::format("category '{}': union_of entries must be names", cat));
        m.unions[cat].push_back(p.get<std::string>());
      }
      if (value.contains("elements")) declared[cat] = parse_elements(value["elements"], cat);
    } else {
      throw MappingError(fmt::format("category '{}': expected an element list or a union_of object", cat));
    }
  }

  // Resolve unions depth-first; unions may nest but not cycle.
  std::set<std::string> resolving;
  std::function<ElementSet(const std::string&)> resolve = [&](const std::string& cat) -> ElementSet {
    if (auto it = m.categories.find(cat); it != m.categories.end()) return it->second;
    auto u = m.unions.find(cat);
    if (u == m.unions.end()) throw MappingError(fmt::format("union refers to undeclared category '{}'", cat));
    if (!resolving.insert(cat).second) throw MappingError(fmt::format("category '{}' is part of a union cycle", cat));
    ElementSet set;
    for (const auto& part : u->second) set |= resolve(part);
    resolving.erase(cat);
    m.categories[cat] = set;
    return set;
  };
  for (const auto& [cat, _] : m.unions) {
    const ElementSet set = resolve(cat);
    if (auto d = declared.find(cat); d != declared.end() && !(d->second == set)) {
      throw MappingError(fmt::format("category '{}' lists {} but the union of its parts is {}", cat,
                                     to_string(d->second), to_string(set)));
    }
  }

  if (doc.contains("classes")) {
    if (!doc["classes"].is_object()) throw MappingError("'classes' must be an object");
    for (const auto& [name, value] : doc["classes"].items()) {
      auto label = class_from_name(name);
      if (!label) throw MappingError(fmt::format("unknown class '{}'", name));
      if (value.is_null()) continue;
      if (!value.is_string()) throw MappingError(fmt::format("class '{}': category must be a string or null", name));
      const std::string cat = value.get<std::string>();
      if (!m.categories.count(cat)) {
        throw MappingError(fmt::format("class '{}' mapped to undeclared category '{}'", name, cat));
      }
      m.class_category[*label] = cat;
    }
  }
  return m;
}

std::string mapping_to_json(const CrmMapping& m) {
  using nlohmann::json;
  json cats = json::object();
  for (const auto& [cat, set] : m.categories) {
    json syms = json::array();
    for (auto e : set.elements()) syms.push_back(element_symbol(e));
    if (auto u = m.unions.find(cat); u != m.unions.end()) {
      cats[cat] = {{"union_of", u->second}, {"elements", syms}};
    } else {
      cats[cat] = syms;
    }
  }
  json classes = json::object();
  for (auto c : kAllClasses) {
    auto it = m.class_category.find(c);
    classes[std::string(class_name(c))] = it == m.class_category.end() ? json(nullptr) : json(it->second);
  }
  return json{{"categories", cats}, {"classes", classes}}.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

bool CrmInventory::operator==(const CrmInventory& o) const {
  const bool same_mapping = (!mapping && !o.mapping) || (mapping && o.mapping && *mapping == *o.mapping);
  return same_mapping && boards == o.boards && class_counts == o.class_counts &&
         elements == o.elements && unmapped == o.unmapped && below_floor == o.below_floor &&
         confidence_floor == o.confidence_floor;
}

CrmInventory inventory(const std::string& board, const std::vector<Detection>& detections,
                       std::shared_ptr<const CrmMapping> mapping, double confidence_floor) {
  if (!mapping) throw MappingError("inventory needs a mapping");
  if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) {
    throw std::invalid_argument(fmt::format("confidence floor {} outside [0,1]", confidence_floor));
  }
  CrmInventory inv;
  inv.boards = {board};
  inv.confidence_floor = confidence_floor;
  for (const auto& d : detections) {
    if (d.confidence < confidence_floor) {
      ++inv.below_floor;
      continue;
    }
    ++inv.class_counts[d.label];
    auto elements = mapping->elements_of(d.label);
    if (!elements) {
      ++inv.unmapped[d.label];
      continue;
    }
    for (auto e : elements->elements()) {
      auto& tally = inv.elements[e];
      ++tally.count;
      tally.classes.insert(d.label);
    }
  }
  inv.mapping = std::move(mapping);
  return inv;
}

CrmInventory aggregate(const std::vector<CrmInventory>& inventories) {
  CrmInventory out;
  for (const auto& inv : inventories) {
    if (inv.mapping) {
      if (out.mapping && !(*out.mapping == *inv.mapping)) {
        throw MappingError("cannot aggregate inventories built with different mappings");
      }
      if (!out.mapping) out.mapping = inv.mapping;
    }
    if (inv.confidence_floor) {
      if (out.confidence_floor && *out.confidence_floor != *inv.confidence_floor) {
        throw MappingError(fmt::format("cannot aggregate inventories with confidence floors {} and {}",
                                       *out.confidence_floor, *inv.confidence_floor));
      }
      out.confidence_floor = inv.confidence_floor;
    }
    out.boards.insert(out.boards.end(), inv.boards.begin(), inv.boards.end());
    for (const auto& [c, n] : inv.class_counts) out.class_counts[c] += n;
    for (const auto& [c, n] : inv.unmapped) out.unmapped[c] += n;
    for (const auto& [e, tally] : inv.elements) {
      auto& t = out.elements[e];
      t.count += tally.count;
      t.classes.insert(tally.classes.begin(), tally.classes.end());
    }
    out.below_floor += inv.below_floor;
  }
  std::sort(out.boards.begin(), out.boards.end());
  return out;
}

std::string inventory_to_json(const CrmInventory& inv) {
  using nlohmann::json;
  json elements = json::array();
  for (const auto& [e, tally] : inv.elements) {
    json classes = json::array();
    for (auto c : tally.classes) classes.push_back(class_name(c));
    elements.push_back({{"element", element_symbol(e)},
                        {"contributing_component_count", tally.count},
                        {"contributing_classes", classes}});
  }
  auto counts = [](const std::map<ClassLabel, std::size_t>& m) {
    json j = json::object();
    for (const auto& [c, n] : m) j[std::string(class_name(c))] = n;
    return j;
  };
  json doc;
  doc["boards"] = inv.boards;
  doc["confidence_floor"] = inv.confidence_floor ? json(*inv.confidence_floor) : json(nullptr);
  doc["unit"] = "component count (presence proxy, not mass)";
  doc["class_counts"] = counts(inv.class_counts);
  doc["elements"] = std::move(elements);
  doc["unmapped"] = counts(inv.unmapped);
  doc["below_floor"] = inv.below_floor;
  return doc.dump(2) + "\n";
}

std::string inventory_to_csv(const CrmInventory& inv) {
  std::string out = "element,contributing_component_count,contributing_classes\n";
  for (const auto& [e, tally] : inv.elements) {
    std::string classes;
    for (auto c : tally.classes) {
      if (!classes.empty()) classes += ';';
      classes += class_name(c);
    }
    fmt::format_to(std::back_inserter(out), "{},{},{}\n", element_symbol(e), tally.count, classes);
  }
  return out;
}

}  // namespace pcbmine::crm
