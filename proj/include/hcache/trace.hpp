// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcache {

/// Index value of an unused (index, score) slot.
inline constexpr std::uint32_t kPaddingIndex = 0xFFFFFFFFu;

/// Leading bytes of every trace file; the final character is the format version.
inline constexpr char kTraceMagic[8] = {'H', 'C', 'T', 'R', 'A', 'C', 'E', '1'};

struct TokenScore {
    std::uint32_t index = kPaddingIndex;
    float score = 0.0f;

    bool is_padding() const noexcept { return index == kPaddingIndex; }
    friend bool operator==(const TokenScore&, const TokenScore&) = default;
};

/// A KV head, addressed by layer and head-within-layer.
struct HeadId {
    std::uint32_t layer = 0;
    std::uint32_t head = 0;

    friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

struct TraceManifest {
    std::string model_name;
    std::uint32_t num_layers = 1;
    std::uint32_t heads_per_layer = 1;
    std::uint32_t prefill_len = 1;
    std::uint32_t decode_steps = 0;
    std::uint32_t trace_topk = 1;
    std::uint32_t pool_kernel_used = 0;
    std::uint64_t bytes_per_kv_entry = 0;

    std::size_t num_heads() const noexcept {
        return static_cast<std::size_t>(num_layers) * heads_per_layer;
    }
    std::size_t flat(HeadId id) const noexcept {
        return static_cast<std::size_t>(id.layer) * heads_per_layer + id.head;
    }
    HeadId head_id(std::size_t flat_index) const noexcept {
        return {static_cast<std::uint32_t>(flat_index / heads_per_layer),
                static_cast<std::uint32_t>(flat_index % heads_per_layer)};
    }

    friend bool operator==(const TraceManifest&, const TraceManifest&) = default;
};

/// Recorded attention for one step: `trace_topk` pairs per head, heads in
/// layer-major order, each head's pairs sorted by score descending.
struct StepAttention {
    std::uint32_t step_index = 0;
    std::vector<TokenScore> entries;

    friend bool operator==(const StepAttention&, const StepAttention&) = default;
};

/// Prefill (step 0) followed by `decode_steps` decode steps.
struct AttentionTrace {
    TraceManifest manifest;
    std::vector<StepAttention> steps;

    std::span<const TokenScore> head_entries(std::size_t step, std::size_t flat_head) const;
    std::span<const TokenScore> head_entries(std::size_t step, HeadId head) const {
        return head_entries(step, manifest.flat(head));
    }

    friend bool operator==(const AttentionTrace&, const AttentionTrace&) = default;
};

enum class TraceErrorKind {
    io,
    bad_magic,
    unsupported_version,
    truncated,
    invalid_manifest,
    invariant,
    trailing_bytes,
};

const char* to_string(TraceErrorKind kind) noexcept;

class TraceError : public std::runtime_error {
public:
    TraceError(TraceErrorKind kind, const std::string& what, std::optional<std::uint64_t> offset = std::nullopt);

    TraceErrorKind kind() const noexcept { return kind_; }
    /// Byte offset at which reading failed, when known.
    std::optional<std::uint64_t> offset() const noexcept { return offset_; }

private:
    TraceErrorKind kind_;
    std::optional<std::uint64_t> offset_;
};

/// Returns every invariant violation found; an empty result means valid.
std::vector<std::string> validate(const AttentionTrace& trace);

/// Throws TraceError(invariant) listing the first violation.
void check_valid(const AttentionTrace& trace);

/// Writes the HCTRACE1 format. The trace is validated before any byte is emitted.
std::uint64_t write_trace(const AttentionTrace& trace, std::ostream& sink);
AttentionTrace read_trace(std::istream& source);

/// File variants; writing goes through a temporary file and a rename.
std::uint64_t write_trace_file(const AttentionTrace& trace, const std::filesystem::path& path);
AttentionTrace read_trace_file(const std::filesystem::path& path);

/// Stable 64-bit FNV-1a digest of the serialized trace, as 16 hex digits.
std::string trace_fingerprint(const AttentionTrace& trace);

}  // namespace hcache
