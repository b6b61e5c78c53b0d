#pragma once

// RIFF/WAVE reading (PCM16 or IEEE float32, mono) and PCM16 writing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"

namespace denoise {

namespace wav_detail {

inline std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

inline void put16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace wav_detail

/// Decodes an in-memory WAV image.
inline AudioBuffer decode_wav(const std::vector<unsigned char>& bytes) {
    using namespace wav_detail;
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw WavError(WavErrorKind::malformed_header, "not a RIFF/WAVE file");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t len = le32(chunk + 4);
        const std::size_t body = pos + 8;
        // Truncated data chunks are tolerated (common in streamed files); others are not.
        const bool is_data = std::memcmp(chunk, "data", 4) == 0;
        if (!is_data && body + len > bytes.size())
            throw WavError(WavErrorKind::malformed_header, "chunk extends past end of file");
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (len < 16) throw WavError(WavErrorKind::malformed_header, "fmt chunk too short");
            format = le16(chunk + 8);
            channels = le16(chunk + 10);
            rate = le32(chunk + 12);
            bits = le16(chunk + 22);
            if (format == kFormatExtensible && len >= 40) format = le16(chunk + 32);
            have_fmt = true;
        } else if (is_data) {
            data = bytes.data() + body;
            data_len = std::min<std::size_t>(len, bytes.size() - body);
        }
        pos = body + len + (len & 1u);
    }
    if (!have_fmt) throw WavError(WavErrorKind::malformed_header, "missing fmt chunk");
    if (data == nullptr) throw WavError(WavErrorKind::malformed_header, "missing data chunk");
    if (rate == 0) throw WavError(WavErrorKind::malformed_header, "sample rate is zero");
    if (channels != 1)
        throw WavError(WavErrorKind::multichannel, "expected mono audio, got " + std::to_string(channels) + " channels");

    AudioBuffer out;
    out.sample_rate = static_cast<int>(rate);
    if (format == kFormatPcm && bits == 16) {
        const std::size_t n = data_len / 2;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            out.samples[i] = static_cast<std::int16_t>(le16(data + 2 * i)) / 32768.0;
    } else if (format == kFormatFloat && bits == 32) {
        const std::size_t n = data_len / 4;
        out.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t raw = le32(data + 4 * i);
            float f;
            std::memcpy(&f, &raw, sizeof f);
            if (!std::isfinite(f)) throw WavError(WavErrorKind::invalid_samples, "non-finite float sample");
            out.samples[i] = f;
        }
    } else {
        throw WavError(WavErrorKind::unsupported_encoding,
                       "unsupported encoding: format " + std::to_string(format) + ", " + std::to_string(bits) + " bits");
    }
    return out;
}

inline AudioBuffer read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw WavError(WavErrorKind::io, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_wav(bytes);
}

inline std::int16_t to_pcm16(double s) {
    s = std::clamp(s, -1.0, 1.0);
    return static_cast<std::int16_t>(std::clamp(std::lround(s * 32768.0), -32768L, 32767L));
}

/// Encodes as PCM16 little-endian mono; amplitudes are clamped to [-1, 1].
inline std::vector<unsigned char> encode_wav(const AudioBuffer& buf) {
    using namespace wav_detail;
    if (buf.sample_rate <= 0) throw WavError(WavErrorKind::invalid_samples, "sample rate must be positive");
    for (double s : buf.samples)
        if (std::isnan(s)) throw WavError(WavErrorKind::invalid_samples, "NaN sample");
    const auto data_len = static_cast<std::uint32_t>(buf.samples.size() * 2);
    std::vector<unsigned char> out;
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
    put32(out, 16);
    put16(out, kFormatPcm);
    put16(out, 1);
    put32(out, static_cast<std::uint32_t>(buf.sample_rate));
    put32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
    put16(out, 2);
    put16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put32(out, data_len);
    for (double s : buf.samples) put16(out, static_cast<std::uint16_t>(to_pcm16(s)));
    return out;
}

inline void write_wav(const AudioBuffer& buf, const std::filesystem::path& path) {
    const auto bytes = encode_wav(buf);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw WavError(WavErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw WavError(WavErrorKind::io, "write failed for " + path.string());
}

}  // namespace denoise
