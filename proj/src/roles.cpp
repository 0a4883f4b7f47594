// SPDX-License-Identifier: Apache-2.0

#include "hcache/roles.hpp"

namespace hcache {

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::Volatile: return "volatile";
        case Role::Anchor: return "anchor";
        case Role::Pivot: return "pivot";
        case Role::Satellite: return "satellite";
    }
    return "unknown";
}

std::optional<Role> parse_role(std::string_view name) noexcept {
    for (Role r : kAllRoles) {
        if (to_string(r) == name) return r;
    }
    return std::nullopt;
}

}  // namespace hcache
