// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstring>
#include <sstream>

#include "json.hpp"

#include "hcache/trace.hpp"
#include "support.hpp"

using namespace hcache;
using testing_support::random_trace;

namespace {

AttentionTrace minimal_trace() {
    AttentionTrace t;
    t.manifest = {"tiny", 1, 1, 4, 0, 2, 0, 16};
    t.steps.push_back({0, {{3, 0.7f}, {1, 0.3f}}});
    return t;
}

std::string to_bytes(const AttentionTrace& t) {
    std::ostringstream out;
    write_trace(t, out);
    return out.str();
}

AttentionTrace from_bytes(const std::string& bytes) {
    std::istringstream in(bytes);
    return read_trace(in);
}

TraceErrorKind read_error(const std::string& bytes) {
    try {
        from_bytes(bytes);
    } catch (const TraceError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "read succeeded";
    return TraceErrorKind::io;
}

std::uint32_t u32_at(const std::string& b, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[off + i]);
    return v;
}

}  // namespace

TEST(TraceFormat, MinimalTraceLayout) {
    const auto t = minimal_trace();
    const auto bytes = to_bytes(t);
    ASSERT_EQ(bytes.substr(0, 8), "HCTRACE1");
    const auto manifest_len = u32_at(bytes, 8);
    EXPECT_EQ(bytes.size(), 8u + 4u + manifest_len + 2u * 8u);
    const auto manifest = nlohmann::json::parse(bytes.substr(12, manifest_len));
    EXPECT_EQ(manifest.size(), 8u);
    EXPECT_EQ(manifest.at("trace_topk"), 2);
    const std::size_t body = 12 + manifest_len;
    EXPECT_EQ(u32_at(bytes, body), 3u);
    float score = 0;
    std::memcpy(&score, bytes.data() + body + 4, 4);
    EXPECT_EQ(score, 0.7f);
    EXPECT_EQ(u32_at(bytes, body + 8), 1u);
}

TEST(TraceFormat, WriteReturnsByteCount) {
    const auto t = minimal_trace();
    std::ostringstream out;
    const auto written = write_trace(t, out);
    EXPECT_EQ(written, out.str().size());
}

TEST(TraceFormat, PaddingSentinelFillsUnusedSlots) {
    AttentionTrace t;
    t.manifest = {"pad", 1, 1, 2, 1, 3, 0, 8};
    t.steps.push_back({0, {{1, 0.6f}, {0, 0.4f}, {kPaddingIndex, 0.0f}}});
    t.steps.push_back({1, {{2, 0.5f}, {0, 0.3f}, {1, 0.2f}}});
    EXPECT_TRUE(validate(t).empty());
    const auto bytes = to_bytes(t);
    const std::size_t third = 12 + u32_at(bytes, 8) + 2 * 8;
    EXPECT_EQ(u32_at(bytes, third), 0xFFFFFFFFu);
    EXPECT_EQ(u32_at(bytes, third + 4), 0u);
    EXPECT_EQ(from_bytes(bytes), t);
}

TEST(TraceFormat, RoundTripsRandomTraces) {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto t = random_trace(seed);
        ASSERT_TRUE(validate(t).empty()) << "seed " << seed << ": " << validate(t).front();
        ASSERT_EQ(from_bytes(to_bytes(t)), t) << "seed " << seed;
    }
}

TEST(TraceFormat, BadMagic) {
    auto bytes = to_bytes(minimal_trace());
    bytes[0] = 'X';
    EXPECT_EQ(read_error(bytes), TraceErrorKind::bad_magic);
    EXPECT_EQ(read_error("HC"), TraceErrorKind::truncated);
}

TEST(TraceFormat, UnsupportedVersion) {
    auto bytes = to_bytes(minimal_trace());
    bytes[7] = '2';
    EXPECT_EQ(read_error(bytes), TraceErrorKind::unsupported_version);
}

TEST(TraceFormat, TruncatedMidStepReportsOffset) {
    const auto bytes = to_bytes(minimal_trace());
    const auto cut = bytes.substr(0, bytes.size() - 5);
    try {
        from_bytes(cut);
        FAIL() << "read succeeded";
    } catch (const TraceError& e) {
        EXPECT_EQ(e.kind(), TraceErrorKind::truncated);
        ASSERT_TRUE(e.offset().has_value());
        EXPECT_EQ(*e.offset(), cut.size());
    }
}

TEST(TraceFormat, ManifestKeysMustBeExact) {
    const auto t = minimal_trace();
    auto bytes = to_bytes(t);
    const auto len = u32_at(bytes, 8);
    auto manifest = nlohmann::json::parse(bytes.substr(12, len));
    manifest["extra"] = 1;
    const auto text = manifest.dump();
    std::string patched = bytes.substr(0, 8);
    for (int i = 0; i < 4; ++i) patched.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
    patched += text + bytes.substr(12 + len);
    EXPECT_EQ(read_error(patched), TraceErrorKind::invalid_manifest);

    manifest.erase("extra");
    manifest.erase("model_name");
    const auto shorter = manifest.dump();
    patched = bytes.substr(0, 8);
    for (int i = 0; i < 4; ++i) patched.push_back(static_cast<char>((shorter.size() >> (8 * i)) & 0xFF));
    patched += shorter + bytes.substr(12 + len);
    EXPECT_EQ(read_error(patched), TraceErrorKind::invalid_manifest);
}

TEST(TraceFormat, TrailingBytesRejected) {
    EXPECT_EQ(read_error(to_bytes(minimal_trace()) + "x"), TraceErrorKind::trailing_bytes);
}

TEST(TraceFormat, InvariantViolationOnReadIsDistinguished) {
    auto bytes = to_bytes(minimal_trace());
    // Swap the two records so scores increase.
    const std::size_t body = 12 + u32_at(bytes, 8);
    std::swap_ranges(bytes.begin() + body, bytes.begin() + body + 8, bytes.begin() + body + 8);
    EXPECT_EQ(read_error(bytes), TraceErrorKind::invariant);
}

TEST(TraceFormat, WriteRejectsInvalidTraceBeforeWriting) {
    auto t = minimal_trace();
    t.steps[0].entries[0].index = 9;  // beyond L
    std::ostringstream out;
    EXPECT_THROW(write_trace(t, out), TraceError);
    EXPECT_TRUE(out.str().empty());
}

TEST(TraceValidate, ReportsEachKindOfViolation) {
    auto base = minimal_trace();
    EXPECT_TRUE(validate(base).empty());

    auto t = base;
    t.manifest.trace_topk = 5;  // exceeds L + T
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.steps[0].step_index = 1;
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.steps[0].entries = {{kPaddingIndex, 0.0f}, {1, 0.3f}};  // padding not a suffix
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.steps[0].entries = {{3, 0.5f}, {3, 0.5f}};
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.steps[0].entries[1].score = -0.1f;
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.steps[0].entries[1] = {kPaddingIndex, 0.2f};
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.manifest.pool_kernel_used = 4;
    EXPECT_FALSE(validate(t).empty());

    t = base;
    t.steps.push_back(t.steps[0]);
    EXPECT_FALSE(validate(t).empty());
}

TEST(TraceValidate, DecodeStepMayReferenceGeneratedTokens) {
    AttentionTrace t;
    t.manifest = {"dec", 1, 1, 4, 2, 1, 0, 8};
    t.steps.push_back({0, {{3, 1.0f}}});
    t.steps.push_back({1, {{4, 1.0f}}});
    t.steps.push_back({2, {{5, 1.0f}}});
    EXPECT_TRUE(validate(t).empty());
    t.steps[1].entries[0].index = 5;
    EXPECT_FALSE(validate(t).empty());
}

TEST(TraceFile, WriteReadAndFingerprint) {
    testing_support::TempDir dir;
    const auto t = random_trace(42);
    const auto path = dir / "t.hctr";
    write_trace_file(t, path);
    EXPECT_EQ(read_trace_file(path), t);
    EXPECT_EQ(trace_fingerprint(t), trace_fingerprint(read_trace_file(path)));
    EXPECT_EQ(trace_fingerprint(t).size(), 16u);
    EXPECT_NE(trace_fingerprint(t), trace_fingerprint(random_trace(43)));
    try {
        read_trace_file(dir / "missing.hctr");
        FAIL();
    } catch (const TraceError& e) {
        EXPECT_EQ(e.kind(), TraceErrorKind::io);
    }
}
