// SPDX-License-Identifier: Apache-2.0

#include "hcache/trace.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "hcache/atomic_file.hpp"
#include "json.hpp"

namespace hcache {

namespace {

constexpr std::size_t kMagicLen = sizeof(kTraceMagic);
constexpr std::size_t kVersionPrefixLen = kMagicLen - 1;
constexpr std::uint32_t kMaxManifestLen = 1u << 20;

const std::set<std::string> kManifestKeys = {
    "model_name",   "num_layers", "heads_per_layer",  "prefill_len",
    "decode_steps", "trace_topk", "pool_kernel_used", "bytes_per_kv_entry",
};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string manifest_to_json(const TraceManifest& m) {
    nlohmann::json j = {
        {"model_name", m.model_name},
        {"num_layers", m.num_layers},
        {"heads_per_layer", m.heads_per_layer},
        {"prefill_len", m.prefill_len},
        {"decode_steps", m.decode_steps},
        {"trace_topk", m.trace_topk},
        {"pool_kernel_used", m.pool_kernel_used},
        {"bytes_per_kv_entry", m.bytes_per_kv_entry},
    };
    return j.dump();
}

template <class T>
T manifest_uint(const nlohmann::json& j, const char* key, std::uint64_t offset) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw TraceError(TraceErrorKind::invalid_manifest,
                         std::string("manifest key '") + key + "' must be a nonnegative integer", offset);
    }
    const auto raw = v.get<std::uint64_t>();
    if (raw > std::numeric_limits<T>::max()) {
        throw TraceError(TraceErrorKind::invalid_manifest, std::string("manifest key '") + key + "' out of range",
                         offset);
    }
    return static_cast<T>(raw);
}

TraceManifest manifest_from_json(std::string_view text, std::uint64_t offset) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(TraceErrorKind::invalid_manifest, std::string("manifest is not valid JSON: ") + e.what(),
                         offset);
    }
    if (!j.is_object()) {
        throw TraceError(TraceErrorKind::invalid_manifest, "manifest must be a JSON object", offset);
    }
    std::set<std::string> keys;
    for (const auto& item : j.items()) {
        keys.insert(item.key());
    }
    if (keys != kManifestKeys) {
        throw TraceError(TraceErrorKind::invalid_manifest, "manifest keys do not match the HCTRACE1 key set", offset);
    }
    if (!j.at("model_name").is_string()) {
        throw TraceError(TraceErrorKind::invalid_manifest, "manifest key 'model_name' must be a string", offset);
    }
    TraceManifest m;
    m.model_name = j.at("model_name").get<std::string>();
    m.num_layers = manifest_uint<std::uint32_t>(j, "num_layers", offset);
    m.heads_per_layer = manifest_uint<std::uint32_t>(j, "heads_per_layer", offset);
    m.prefill_len = manifest_uint<std::uint32_t>(j, "prefill_len", offset);
    m.decode_steps = manifest_uint<std::uint32_t>(j, "decode_steps", offset);
    m.trace_topk = manifest_uint<std::uint32_t>(j, "trace_topk", offset);
    m.pool_kernel_used = manifest_uint<std::uint32_t>(j, "pool_kernel_used", offset);
    m.bytes_per_kv_entry = manifest_uint<std::uint64_t>(j, "bytes_per_kv_entry", offset);
    return m;
}

std::vector<std::string> validate_manifest(const TraceManifest& m) {
    std::vector<std::string> errors;
    if (m.num_layers < 1) errors.emplace_back("num_layers must be >= 1");
    if (m.heads_per_layer < 1) errors.emplace_back("heads_per_layer must be >= 1");
    if (m.prefill_len < 1) errors.emplace_back("prefill_len must be >= 1");
    if (m.trace_topk < 1) errors.emplace_back("trace_topk must be >= 1");
    if (static_cast<std::uint64_t>(m.trace_topk) >
        static_cast<std::uint64_t>(m.prefill_len) + m.decode_steps) {
        errors.emplace_back("trace_topk must not exceed prefill_len + decode_steps");
    }
    if (m.pool_kernel_used != 0 && m.pool_kernel_used % 2 == 0) {
        errors.emplace_back("pool_kernel_used must be 0 or odd");
    }
    return errors;
}

// Reads exactly n bytes or throws truncated with the offset of the first missing byte.
void read_exact(std::istream& in, char* dst, std::size_t n, std::uint64_t& offset, const char* what) {
    in.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::uint64_t>(in.gcount());
    if (got != n) {
        throw TraceError(TraceErrorKind::truncated,
                         std::string("truncated payload while reading ") + what + " at byte offset " +
                             std::to_string(offset + got),
                         offset + got);
    }
    offset += n;
}

}  // namespace

std::span<const TokenScore> AttentionTrace::head_entries(std::size_t step, std::size_t flat_head) const {
    const std::size_t k = manifest.trace_topk;
    return std::span<const TokenScore>(steps.at(step).entries).subspan(flat_head * k, k);
}

const char* to_string(TraceErrorKind kind) noexcept {
    switch (kind) {
        case TraceErrorKind::io: return "io error";
        case TraceErrorKind::bad_magic: return "bad magic";
        case TraceErrorKind::unsupported_version: return "unsupported version";
        case TraceErrorKind::truncated: return "truncated payload";
        case TraceErrorKind::invalid_manifest: return "invalid manifest";
        case TraceErrorKind::invariant: return "invariant violation";
        case TraceErrorKind::trailing_bytes: return "trailing bytes";
    }
    return "unknown";
}

TraceError::TraceError(TraceErrorKind kind, const std::string& what, std::optional<std::uint64_t> offset)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), offset_(offset) {}

std::vector<std::string> validate(const AttentionTrace& trace) {
    const auto& m = trace.manifest;
    std::vector<std::string> errors = validate_manifest(m);
    if (!errors.empty()) {
        return errors;
    }
    if (trace.steps.size() != static_cast<std::size_t>(m.decode_steps) + 1) {
        errors.push_back("expected " + std::to_string(m.decode_steps + 1ull) + " steps, found " +
                         std::to_string(trace.steps.size()));
        return errors;
    }
    const std::size_t k = m.trace_topk;
    const std::size_t per_step = m.num_heads() * k;
    std::vector<std::uint32_t> seen;
    for (std::size_t s = 0; s < trace.steps.size(); ++s) {
        const auto& step = trace.steps[s];
        const std::string where = "step " + std::to_string(s);
        if (step.step_index != s) {
            errors.push_back(where + ": step_index is " + std::to_string(step.step_index));
        }
        if (step.entries.size() != per_step) {
            errors.push_back(where + ": expected " + std::to_string(per_step) + " entries, found " +
                             std::to_string(step.entries.size()));
            continue;
        }
        const std::uint64_t seq_len = static_cast<std::uint64_t>(m.prefill_len) + s;
        for (std::size_t h = 0; h < m.num_heads(); ++h) {
            const auto entries = std::span<const TokenScore>(step.entries).subspan(h * k, k);
            const std::string head_where = where + " head " + std::to_string(h);
            bool in_padding = false;
            float previous = std::numeric_limits<float>::infinity();
            seen.clear();
            for (std::size_t i = 0; i < k; ++i) {
                const auto& e = entries[i];
                if (e.is_padding()) {
                    in_padding = true;
                    if (e.score != 0.0f) {
                        errors.push_back(head_where + ": padding slot " + std::to_string(i) + " has nonzero score");
                    }
                    continue;
                }
                if (in_padding) {
                    errors.push_back(head_where + ": valid entry after padding at slot " + std::to_string(i));
                }
                if (e.index >= seq_len) {
                    errors.push_back(head_where + ": token index " + std::to_string(e.index) +
                                     " >= sequence length " + std::to_string(seq_len));
                }
                if (!std::isfinite(e.score) || e.score < 0.0f) {
                    errors.push_back(head_where + ": score at slot " + std::to_string(i) +
                                     " is negative or not finite");
                } else if (e.score > previous) {
                    errors.push_back(head_where + ": scores increase at slot " + std::to_string(i));
                }
                previous = e.score;
                seen.push_back(e.index);
            }
            std::sort(seen.begin(), seen.end());
            if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
                errors.push_back(head_where + ": duplicate token index");
            }
        }
    }
    return errors;
}

void check_valid(const AttentionTrace& trace) {
    const auto errors = validate(trace);
    if (!errors.empty()) {
        std::string msg = errors.front();
        if (errors.size() > 1) {
            msg += " (and " + std::to_string(errors.size() - 1) + " more)";
        }
        throw TraceError(TraceErrorKind::invariant, msg);
    }
}

namespace {

std::string serialize(const AttentionTrace& trace) {
    check_valid(trace);
    const std::string manifest = manifest_to_json(trace.manifest);
    std::string out;
    const std::size_t body = trace.steps.size() * trace.manifest.num_heads() * trace.manifest.trace_topk * 8;
    out.reserve(kMagicLen + 4 + manifest.size() + body);
    out.append(kTraceMagic, kMagicLen);
    put_u32(out, static_cast<std::uint32_t>(manifest.size()));
    out.append(manifest);
    for (const auto& step : trace.steps) {
        for (const auto& e : step.entries) {
            put_u32(out, e.index);
            put_u32(out, std::bit_cast<std::uint32_t>(e.score));
        }
    }
    return out;
}

}  // namespace

std::uint64_t write_trace(const AttentionTrace& trace, std::ostream& sink) {
    const std::string bytes = serialize(trace);
    sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!sink) {
        throw TraceError(TraceErrorKind::io, "failed to write trace to sink");
    }
    return bytes.size();
}

AttentionTrace read_trace(std::istream& source) {
    std::uint64_t offset = 0;
    std::array<char, kMagicLen> magic{};
    read_exact(source, magic.data(), magic.size(), offset, "magic");
    if (std::memcmp(magic.data(), kTraceMagic, kVersionPrefixLen) != 0) {
        throw TraceError(TraceErrorKind::bad_magic, "stream does not start with HCTRACE", 0);
    }
    if (magic[kVersionPrefixLen] != kTraceMagic[kVersionPrefixLen]) {
        throw TraceError(TraceErrorKind::unsupported_version,
                         std::string("format version '") + magic[kVersionPrefixLen] + "' is not supported",
                         kVersionPrefixLen);
    }

    std::array<unsigned char, 4> len_bytes{};
    read_exact(source, reinterpret_cast<char*>(len_bytes.data()), 4, offset, "manifest length");
    const std::uint32_t manifest_len = get_u32(len_bytes.data());
    if (manifest_len > kMaxManifestLen) {
        throw TraceError(TraceErrorKind::invalid_manifest, "manifest length exceeds 1 MiB", offset - 4);
    }
    std::string manifest_text(manifest_len, '\0');
    const std::uint64_t manifest_offset = offset;
    read_exact(source, manifest_text.data(), manifest_len, offset, "manifest");

    AttentionTrace trace;
    trace.manifest = manifest_from_json(manifest_text, manifest_offset);
    if (auto errors = validate_manifest(trace.manifest); !errors.empty()) {
        throw TraceError(TraceErrorKind::invalid_manifest, errors.front(), manifest_offset);
    }

    const std::size_t per_step = trace.manifest.num_heads() * trace.manifest.trace_topk;
    std::vector<unsigned char> buffer(per_step * 8);
    trace.steps.reserve(static_cast<std::size_t>(trace.manifest.decode_steps) + 1);
    for (std::uint64_t s = 0; s <= trace.manifest.decode_steps; ++s) {
        read_exact(source, reinterpret_cast<char*>(buffer.data()), buffer.size(), offset,
                   ("step " + std::to_string(s)).c_str());
        StepAttention step;
        step.step_index = static_cast<std::uint32_t>(s);
        step.entries.resize(per_step);
        for (std::size_t i = 0; i < per_step; ++i) {
            step.entries[i].index = get_u32(&buffer[i * 8]);
            step.entries[i].score = std::bit_cast<float>(get_u32(&buffer[i * 8 + 4]));
        }
        trace.steps.push_back(std::move(step));
    }
    if (source.peek() != std::char_traits<char>::eof()) {
        throw TraceError(TraceErrorKind::trailing_bytes, "unexpected bytes after the last step", offset);
    }
    check_valid(trace);
    return trace;
}

std::uint64_t write_trace_file(const AttentionTrace& trace, const std::filesystem::path& path) {
    const std::string bytes = serialize(trace);
    try {
        write_file_atomic(path, bytes);
    } catch (const std::exception& e) {
        throw TraceError(TraceErrorKind::io, e.what());
    }
    return bytes.size();
}

AttentionTrace read_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw TraceError(TraceErrorKind::io, "cannot open " + path.string());
    }
    return read_trace(in);
}

std::string trace_fingerprint(const AttentionTrace& trace) {
    const std::string bytes = serialize(trace);
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

}  // namespace hcache
