// SPDX-License-Identifier: Apache-2.0

#include "hcache/index_set.hpp"

#include <algorithm>
#include <iterator>

namespace hcache {

IndexSet::IndexSet(std::initializer_list<value_type> members)
    : IndexSet(from_unsorted(std::vector<value_type>(members))) {}

IndexSet IndexSet::from_unsorted(std::vector<value_type> members) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    IndexSet out;
    out.members_ = std::move(members);
    return out;
}

IndexSet IndexSet::range(value_type first, value_type last) {
    IndexSet out;
    if (last > first) {
        out.members_.reserve(last - first);
        for (value_type p = first; p < last; ++p) {
            out.members_.push_back(p);
        }
    }
    return out;
}

bool IndexSet::contains(value_type position) const noexcept {
    return std::binary_search(members_.begin(), members_.end(), position);
}

std::size_t IndexSet::intersection_size(const IndexSet& other) const noexcept {
    std::size_t count = 0;
    auto a = members_.begin();
    auto b = other.members_.begin();
    while (a != members_.end() && b != other.members_.end()) {
        if (*a < *b) {
            ++a;
        } else if (*b < *a) {
            ++b;
        } else {
            ++count;
            ++a;
            ++b;
        }
    }
    return count;
}

IndexSet IndexSet::union_with(const IndexSet& other) const {
    IndexSet out;
    out.members_.reserve(members_.size() + other.members_.size());
    std::set_union(members_.begin(), members_.end(), other.members_.begin(), other.members_.end(),
                   std::back_inserter(out.members_));
    return out;
}

IndexSet IndexSet::difference(const IndexSet& other) const {
    IndexSet out;
    std::set_difference(members_.begin(), members_.end(), other.members_.begin(), other.members_.end(),
                        std::back_inserter(out.members_));
    return out;
}

bool IndexSet::is_subset_of(const IndexSet& other) const noexcept {
    return std::includes(other.members_.begin(), other.members_.end(), members_.begin(), members_.end());
}

std::size_t IndexSet::count_below(value_type bound) const noexcept {
    return static_cast<std::size_t>(std::lower_bound(members_.begin(), members_.end(), bound) - members_.begin());
}

}  // namespace hcache
