#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "denoise/error.hpp"

namespace denoise {

/// Mono sampled signal. Amplitudes are nominally in [-1, 1].
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 8000;

    AudioBuffer() = default;
    AudioBuffer(std::vector<double> s, int rate) : samples(std::move(s)), sample_rate(rate) {}

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    double duration() const noexcept { return static_cast<double>(samples.size()) / sample_rate; }
    std::span<const double> view() const noexcept { return samples; }
};

inline constexpr int kTargetRate = 8000;

/// Throws InvalidArgument unless the rate is positive and every sample finite.
inline void validate(const AudioBuffer& buf) {
    if (buf.sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
    for (double s : buf.samples)
        if (!std::isfinite(s)) throw InvalidArgument("audio buffer contains a non-finite sample");
}

inline double sum_squares(std::span<const double> x) {
    return std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
}

inline double mean_square(std::span<const double> x) {
    return x.empty() ? 0.0 : sum_squares(x) / static_cast<double>(x.size());
}

struct FrameSequence {
    std::size_t frame_len = 0;
    std::size_t hop = 0;
    int source_rate = 0;
    std::vector<std::vector<double>> frames;
    /// Number of zero samples appended to the final frame (0 when it is complete).
    std::size_t last_padding = 0;

    std::size_t size() const noexcept { return frames.size(); }
    std::size_t start(std::size_t k) const noexcept { return k * hop; }
};

/// Number of frames frame_signal produces for a signal of `len` samples.
inline std::size_t frame_count(std::size_t len, std::size_t frame_len, std::size_t hop) {
    if (len == 0) return 0;
    std::size_t over = len > frame_len ? len - frame_len : 0;
    return (over + hop - 1) / hop + 1;
}

inline FrameSequence frame_signal(std::span<const double> x, int rate, std::size_t frame_len, std::size_t hop) {
    if (frame_len == 0 || hop == 0) throw InvalidArgument("frame_len and hop must be >= 1");
    if (hop > frame_len) throw InvalidArgument("hop must not exceed frame_len");
    FrameSequence seq{frame_len, hop, rate, {}, 0};
    const std::size_t n = frame_count(x.size(), frame_len, hop);
    seq.frames.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> f(frame_len, 0.0);
        const std::size_t begin = k * hop;
        const std::size_t end = std::min(begin + frame_len, x.size());
        std::copy(x.begin() + static_cast<std::ptrdiff_t>(begin), x.begin() + static_cast<std::ptrdiff_t>(end), f.begin());
        if (k + 1 == n) seq.last_padding = frame_len - (end - begin);
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

inline FrameSequence frame_signal(const AudioBuffer& buf, std::size_t frame_len, std::size_t hop) {
    return frame_signal(buf.view(), buf.sample_rate, frame_len, hop);
}

}  // namespace denoise
