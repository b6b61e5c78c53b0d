#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"

namespace denoise::metrics {

inline constexpr double kSnrFloorDb = -20.0;
inline constexpr double kSnrCeilDb = 60.0;
inline constexpr double kSegFloorDb = -10.0;
inline constexpr double kSegCeilDb = 35.0;
inline constexpr double kSilentFrameEnergy = 1e-8;
inline constexpr std::ptrdiff_t kDefaultMaxLag = 512;

struct Alignment {
    std::ptrdiff_t lag = 0;
    /// +1 or -1: sign of the correlation peak.
    int polarity = 1;
};

/// Finds the lag l in [-max_lag, max_lag] maximizing |sum_n clean[n] processed[n + l]|.
/// Ties resolve to the smallest |l|, then the negative lag.
inline Alignment align(const AudioBuffer& clean, const AudioBuffer& processed, std::ptrdiff_t max_lag = kDefaultMaxLag) {
    if (clean.sample_rate != processed.sample_rate) throw InvalidArgument("align: sample rates differ");
    if (!(sum_squares(clean.view()) > 0.0) || !(sum_squares(processed.view()) > 0.0))
        throw InvalidArgument("align: zero-energy input");
    const auto nc = static_cast<std::ptrdiff_t>(clean.size());
    const auto np = static_cast<std::ptrdiff_t>(processed.size());
    Alignment best;
    double best_mag = -1.0;
    for (std::ptrdiff_t a = 0; a <= max_lag; ++a) {
        for (std::ptrdiff_t lag : {a, -a}) {
            if (a == 0 && lag < 0) continue;
            const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -lag);
            const std::ptrdiff_t hi = std::min(nc, np - lag);
            double acc = 0.0;
            for (std::ptrdiff_t n = lo; n < hi; ++n) acc += clean.samples[n] * processed.samples[n + lag];
            if (std::abs(acc) > best_mag) {
                best_mag = std::abs(acc);
                best = Alignment{lag, acc < 0.0 ? -1 : 1};
            }
        }
    }
    return best;
}

/// Overlapping portions of clean[n] and processed[n + lag].
inline std::pair<std::vector<double>, std::vector<double>> overlap(const AudioBuffer& clean, const AudioBuffer& processed,
                                                                   std::ptrdiff_t lag = 0) {
    const auto nc = static_cast<std::ptrdiff_t>(clean.size());
    const auto np = static_cast<std::ptrdiff_t>(processed.size());
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -lag);
    const std::ptrdiff_t hi = std::max(lo, std::min(nc, np - lag));
    std::vector<double> c(clean.samples.begin() + lo, clean.samples.begin() + hi);
    std::vector<double> p(processed.samples.begin() + lo + lag, processed.samples.begin() + hi + lag);
    return {std::move(c), std::move(p)};
}

/// 10 log10(sum clean^2 / sum (clean - processed)^2), clamped to [-20, 60] dB.
inline double snr_db(std::span<const double> clean, std::span<const double> processed) {
    const std::size_t n = std::min(clean.size(), processed.size());
    double sig = 0.0, err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sig += clean[i] * clean[i];
        const double d = clean[i] - processed[i];
        err += d * d;
    }
    if (!(sig > 0.0)) throw InvalidArgument("snr_db: clean signal has zero energy");
    if (err == 0.0) return kSnrCeilDb;
    return std::clamp(10.0 * std::log10(sig / err), kSnrFloorDb, kSnrCeilDb);
}

inline double snr_db(const AudioBuffer& clean, const AudioBuffer& processed) {
    return snr_db(clean.view(), processed.view());
}

/// Mean of per-frame SNRs over non-overlapping frames, each clamped to
/// [-10, 35] dB. Frames whose clean energy is below 1e-8 are skipped.
inline double segmental_snr(std::span<const double> clean, std::span<const double> processed, std::size_t frame_len = 160) {
    if (frame_len == 0) throw InvalidArgument("segmental_snr: frame_len must be >= 1");
    const std::size_t n = std::min(clean.size(), processed.size());
    double total = 0.0;
    std::size_t frames = 0;
    for (std::size_t start = 0; start < n; start += frame_len) {
        const std::size_t end = std::min(start + frame_len, n);
        double sig = 0.0, err = 0.0;
        for (std::size_t i = start; i < end; ++i) {
            sig += clean[i] * clean[i];
            const double d = clean[i] - processed[i];
            err += d * d;
        }
        if (sig < kSilentFrameEnergy) continue;
        const double snr = err == 0.0 ? kSegCeilDb : std::clamp(10.0 * std::log10(sig / err), kSegFloorDb, kSegCeilDb);
        total += snr;
        ++frames;
    }
    if (frames == 0) throw InvalidArgument("segmental_snr: no frame has enough clean energy");
    return total / static_cast<double>(frames);
}

inline double segmental_snr(const AudioBuffer& clean, const AudioBuffer& processed, std::size_t frame_len = 160) {
    return segmental_snr(clean.view(), processed.view(), frame_len);
}

struct MetricReport {
    std::string file;
    std::string algorithm;
    std::string variant;
    double input_snr_db = 0.0;
    double output_snr_db = 0.0;
    double improvement_db = 0.0;
    double segsnr_db = 0.0;
    std::ptrdiff_t lag = 0;
    int polarity = 1;
};

/// Input SNR of `noisy`, output SNR and segmental SNR of `denoised` after
/// alignment to `clean`.
inline MetricReport snr_improvement(const AudioBuffer& clean, const AudioBuffer& noisy, const AudioBuffer& denoised,
                                    std::ptrdiff_t max_lag = kDefaultMaxLag) {
    if (clean.sample_rate != noisy.sample_rate || clean.sample_rate != denoised.sample_rate)
        throw InvalidArgument("snr_improvement: sample rates differ");
    MetricReport r;
    r.input_snr_db = snr_db(clean, noisy);
    Alignment a;
    if (sum_squares(denoised.view()) > 0.0) a = align(clean, denoised, max_lag);
    const auto [c, p] = overlap(clean, denoised, a.lag);
    r.output_snr_db = snr_db(c, p);
    r.improvement_db = r.output_snr_db - r.input_snr_db;
    r.segsnr_db = segmental_snr(c, p);
    r.lag = a.lag;
    r.polarity = a.polarity;
    return r;
}

struct MosRecord {
    std::string rater;
    std::string clip;
    std::string algorithm;
    std::string variant;
    int score = 0;
    long long timestamp = 0;
};

struct MosSummary {
    std::string algorithm;
    std::string variant;
    double mean = 0.0;
    std::size_t n = 0;
    /// Sample standard deviation; 0 for a single rating.
    double stddev = 0.0;
};

/// Arithmetic mean per (algorithm, variant), ordered by key.
inline std::vector<MosSummary> mos_aggregate(std::span<const MosRecord> records) {
    if (records.empty()) throw InvalidArgument("mos_aggregate: no ratings");
    std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
    for (const auto& r : records) {
        if (r.score < 0 || r.score > 10) throw InvalidArgument("MOS score out of range: " + std::to_string(r.score));
        groups[{r.algorithm, r.variant}].push_back(r.score);
    }
    std::vector<MosSummary> out;
    for (const auto& [key, scores] : groups) {
        MosSummary s{key.first, key.second, 0.0, scores.size(), 0.0};
        double sum = 0.0;
        for (int v : scores) sum += v;
        s.mean = sum / static_cast<double>(s.n);
        if (s.n > 1) {
            double ss = 0.0;
            for (int v : scores) ss += (v - s.mean) * (v - s.mean);
            s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace denoise::metrics
