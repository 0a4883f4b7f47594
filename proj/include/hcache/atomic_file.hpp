// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string_view>

namespace hcache {

/// Writes `content` to a sibling temporary file, then renames it over `path`.
/// Throws std::runtime_error on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace hcache
