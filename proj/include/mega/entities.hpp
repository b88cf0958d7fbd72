#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mega/common.hpp"

namespace mega {

enum class EntityKind : std::uint8_t { Project = 0, Package = 1, Class = 2, Method = 3, Api = 4 };

inline constexpr std::size_t kEntityKindCount = 5;

inline const char* kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::Project: return "project";
    case EntityKind::Package: return "package";
    case EntityKind::Class: return "class";
    case EntityKind::Method: return "method";
    case EntityKind::Api: return "api";
  }
  return "?";
}

/// Dense handle into a Universe. `index` is global across all kinds so a
/// single embedding table row exists per entity.
struct EntityId {
  std::uint32_t index = 0;
  EntityKind kind = EntityKind::Project;

  friend bool operator==(const EntityId& a, const EntityId& b) {
    return a.index == b.index && a.kind == b.kind;
  }
  friend bool operator!=(const EntityId& a, const EntityId& b) { return !(a == b); }
};

/// String interner over the five entity kinds. Indices are assigned densely
/// in first-seen order; (kind, name) -> index is a bijection.
class Universe {
 public:
  EntityId intern(EntityKind kind, std::string_view name) {
    auto& table = lookup_[static_cast<std::size_t>(kind)];
    auto it = table.find(std::string(name));
    if (it != table.end()) return {it->second, kind};
    auto index = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    kinds_.push_back(kind);
    by_kind_[static_cast<std::size_t>(kind)].push_back(index);
    table.emplace(std::string(name), index);
    return {index, kind};
  }

  std::optional<EntityId> find(EntityKind kind, std::string_view name) const {
    const auto& table = lookup_[static_cast<std::size_t>(kind)];
    auto it = table.find(std::string(name));
    if (it == table.end()) return std::nullopt;
    return EntityId{it->second, kind};
  }

  const std::string& name(std::uint32_t index) const { return names_.at(index); }
  const std::string& name(EntityId id) const { return names_.at(id.index); }
  EntityKind kind(std::uint32_t index) const { return kinds_.at(index); }

  EntityId id(std::uint32_t index) const { return {index, kinds_.at(index)}; }

  std::size_t size() const { return names_.size(); }
  std::size_t count(EntityKind kind) const {
    return by_kind_[static_cast<std::size_t>(kind)].size();
  }

  /// Global indices of all entities of one kind, in interning order.
  const std::vector<std::uint32_t>& of_kind(EntityKind kind) const {
    return by_kind_[static_cast<std::size_t>(kind)];
  }

  /// Fingerprint of the full (kind, name) table; stored in checkpoint
  /// manifests to guard against vocabulary mismatches at load time.
  std::uint64_t fingerprint() const {
    std::uint64_t h = fnv1a64("mega-universe");
    for (std::size_t i = 0; i < names_.size(); ++i) {
      unsigned char k = static_cast<unsigned char>(kinds_[i]);
      h = fnv1a64_bytes(&k, 1, h);
      h = fnv1a64(names_[i], h);
      h = fnv1a64_bytes("\x1f", 1, h);
    }
    return h;
  }

 private:
  std::vector<std::string> names_;
  std::vector<EntityKind> kinds_;
  std::array<std::vector<std::uint32_t>, kEntityKindCount> by_kind_;
  std::array<std::unordered_map<std::string, std::uint32_t>, kEntityKindCount> lookup_;
};

}  // namespace mega
