// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>

namespace hcache {

/// Functional role of a KV head.
///  - Volatile: unique and unstable, keeps its full cache.
///  - Anchor: unique and stable, statically compressed.
///  - Pivot: cluster center, keeps its full cache and watches for drift.
///  - Satellite: redundant cluster member, compressed and refreshed on drift.
enum class Role { Volatile, Anchor, Pivot, Satellite };

inline constexpr Role kAllRoles[] = {Role::Volatile, Role::Anchor, Role::Pivot, Role::Satellite};

std::string_view to_string(Role role) noexcept;
std::optional<Role> parse_role(std::string_view name) noexcept;

/// Volatile and Pivot heads keep every position on the GPU.
constexpr bool is_full(Role role) noexcept { return role == Role::Volatile || role == Role::Pivot; }

}  // namespace hcache
