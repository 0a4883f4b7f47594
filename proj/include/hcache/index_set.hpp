// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace hcache {

/// Set of token positions, stored sorted and unique.
class IndexSet {
public:
    using value_type = std::uint32_t;
    using const_iterator = std::vector<value_type>::const_iterator;

    IndexSet() = default;
    IndexSet(std::initializer_list<value_type> members);

    /// Sorts and de-duplicates `members`.
    static IndexSet from_unsorted(std::vector<value_type> members);

    /// Builds {first, ..., last - 1}.
    static IndexSet range(value_type first, value_type last);

    std::size_t size() const noexcept { return members_.size(); }
    bool empty() const noexcept { return members_.empty(); }
    bool contains(value_type position) const noexcept;

    const_iterator begin() const noexcept { return members_.begin(); }
    const_iterator end() const noexcept { return members_.end(); }
    std::span<const value_type> members() const noexcept { return members_; }

    std::size_t intersection_size(const IndexSet& other) const noexcept;
    IndexSet union_with(const IndexSet& other) const;
    IndexSet difference(const IndexSet& other) const;
    bool is_subset_of(const IndexSet& other) const noexcept;

    /// Number of members strictly below `bound`.
    std::size_t count_below(value_type bound) const noexcept;

    friend bool operator==(const IndexSet&, const IndexSet&) = default;

private:
    std::vector<value_type> members_;
};

}  // namespace hcache
