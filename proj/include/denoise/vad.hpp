#pragma once

// Frame-level voice activity detection. Features are compared against an
// adaptive threshold (noise mean + k * noise std) whose statistics are seeded
// from the leading frames and tracked through later unvoiced frames.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"
#include "denoise/fft.hpp"

namespace denoise::vad {

enum class Feature { energy, cepstral };

inline std::string_view to_string(Feature f) { return f == Feature::energy ? "energy" : "cepstral"; }

inline Feature parse_feature(std::string_view s) {
    if (s == "energy") return Feature::energy;
    if (s == "cepstral") return Feature::cepstral;
    throw InvalidArgument("unknown VAD feature '" + std::string(s) + "'");
}

struct VadParams {
    std::size_t frame_len = 160;
    std::size_t hop = 80;
    std::size_t noise_init_frames = 10;
    double k_sigma = 3.0;
    double smoothing = 0.9;
    Feature feature = Feature::energy;
    std::size_t n_cepstral = 12;
};

struct VadDecision {
    std::vector<std::uint8_t> flags;
    std::vector<double> threshold_trace;
    std::vector<double> feature_trace;
    std::size_t frame_len = 0;
    std::size_t hop = 0;

    std::size_t size() const noexcept { return flags.size(); }
    std::size_t voiced_count() const noexcept {
        std::size_t n = 0;
        for (auto f : flags) n += f;
        return n;
    }
};

struct CepstrumFrame {
    std::vector<double> coefficients;
};

inline constexpr double kCepstrumFloor = 1e-10;

inline double frame_energy(std::span<const double> frame) {
    if (frame.empty()) throw InvalidArgument("frame_energy: empty frame");
    return mean_square(frame);
}

/// Real cepstrum of a Hann-windowed frame, zero-padded to a power of two:
/// IDFT(log(|DFT(frame)| + 1e-10)), first `n_cepstral` coefficients.
inline CepstrumFrame real_cepstrum(std::span<const double> frame, std::size_t n_cepstral) {
    const std::size_t n = frame.size();
    const std::size_t len = next_pow2(n);
    std::vector<std::complex<double>> spec(len);
    for (std::size_t i = 0; i < n; ++i) {
        const double w = n > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)) : 1.0;
        spec[i] = frame[i] * w;
    }
    fft(spec);
    for (auto& v : spec) v = std::log(std::abs(v) + kCepstrumFloor);
    fft(spec, true);
    CepstrumFrame out;
    out.coefficients.resize(std::min(n_cepstral, len));
    for (std::size_t i = 0; i < out.coefficients.size(); ++i) out.coefficients[i] = spec[i].real();
    return out;
}

namespace detail {

struct RunningStats {
    double mean = 0.0;
    double var = 0.0;

    void seed(std::span<const double> values) {
        mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
    }

    void update(double v, double a) {
        mean = a * mean + (1.0 - a) * v;
        var = a * var + (1.0 - a) * (v - mean) * (v - mean);
    }

    double threshold(double k) const { return mean + k * std::sqrt(var); }
};

inline double distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace detail

inline VadDecision detect(const AudioBuffer& buf, const VadParams& params) {
    if (params.noise_init_frames < 1) throw InvalidArgument("noise_init_frames must be >= 1");
    if (!(params.smoothing > 0.0 && params.smoothing < 1.0)) throw InvalidArgument("smoothing must lie in (0, 1)");
    if (params.feature == Feature::cepstral && params.n_cepstral < 2)
        throw InvalidArgument("cepstral VAD needs n_cepstral >= 2");

    const FrameSequence frames = frame_signal(buf, params.frame_len, params.hop);
    const std::size_t n = frames.size();
    if (n < params.noise_init_frames)
        throw InvalidArgument("VAD needs at least " + std::to_string(params.noise_init_frames) + " frames, got " +
                              std::to_string(n));

    VadDecision out;
    out.frame_len = params.frame_len;
    out.hop = params.hop;
    out.flags.assign(n, 0);
    out.threshold_trace.assign(n, 0.0);
    out.feature_trace.assign(n, 0.0);

    const std::size_t init = params.noise_init_frames;
    detail::RunningStats stats;

    if (params.feature == Feature::energy) {
        std::vector<double> energy(n);
        for (std::size_t k = 0; k < n; ++k) energy[k] = frame_energy(frames.frames[k]);
        stats.seed(std::span<const double>(energy).first(init));
        for (std::size_t k = 0; k < n; ++k) {
            const double t = stats.threshold(params.k_sigma);
            out.feature_trace[k] = energy[k];
            out.threshold_trace[k] = t;
            if (k < init) continue;
            if (energy[k] > t) {
                out.flags[k] = 1;
            } else {
                stats.update(energy[k], params.smoothing);
            }
        }
        return out;
    }

    // Cepstral: distance of c[1..n_cepstral) from the running noise-cepstrum mean.
    std::vector<std::vector<double>> ceps(n);
    for (std::size_t k = 0; k < n; ++k) {
        auto c = real_cepstrum(frames.frames[k], params.n_cepstral).coefficients;
        ceps[k].assign(c.begin() + 1, c.end());
    }
    const std::size_t dim = ceps[0].size();
    std::vector<double> noise_mean(dim, 0.0);
    for (std::size_t k = 0; k < init; ++k)
        for (std::size_t i = 0; i < dim; ++i) noise_mean[i] += ceps[k][i];
    for (double& v : noise_mean) v /= static_cast<double>(init);

    std::vector<double> init_dist(init);
    for (std::size_t k = 0; k < init; ++k) init_dist[k] = detail::distance(ceps[k], noise_mean);
    stats.seed(init_dist);

    for (std::size_t k = 0; k < n; ++k) {
        const double f = k < init ? init_dist[k] : detail::distance(ceps[k], noise_mean);
        const double t = stats.threshold(params.k_sigma);
        out.feature_trace[k] = f;
        out.threshold_trace[k] = t;
        if (k < init) continue;
        if (f > t) {
            out.flags[k] = 1;
        } else {
            stats.update(f, params.smoothing);
            for (std::size_t i = 0; i < dim; ++i)
                noise_mean[i] = params.smoothing * noise_mean[i] + (1.0 - params.smoothing) * ceps[k][i];
        }
    }
    return out;
}

/// Per-frame debug dump: index,feature,threshold,flag
inline void write_trace_csv(const VadDecision& d, std::ostream& os) {
    os << "index,feature,threshold,flag\n";
    os.precision(10);
    for (std::size_t k = 0; k < d.size(); ++k)
        os << k << ',' << d.feature_trace[k] << ',' << d.threshold_trace[k] << ',' << int(d.flags[k]) << '\n';
}

}  // namespace denoise::vad
