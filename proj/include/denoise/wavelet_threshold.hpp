#pragma once

// Threshold estimation and shrinkage for wavelet coefficients. One global
// threshold is computed over the detail bands (every band except the
// all-low-pass band 0) unless per-band estimation is requested.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/error.hpp"
#include "denoise/wavelet.hpp"

namespace denoise::wavelet {

enum class ThresholdMethod { universal, balance_sparsity };
enum class ShrinkMode { soft, hard };

inline std::string_view to_string(ThresholdMethod m) {
    return m == ThresholdMethod::universal ? "universal" : "balance_sparsity";
}
inline std::string_view to_string(ShrinkMode m) { return m == ShrinkMode::soft ? "soft" : "hard"; }

inline ThresholdMethod parse_method(std::string_view s) {
    if (s == "universal") return ThresholdMethod::universal;
    if (s == "balance_sparsity" || s == "balance-sparsity") return ThresholdMethod::balance_sparsity;
    throw InvalidArgument("unknown threshold method '" + std::string(s) + "'");
}

inline ShrinkMode parse_mode(std::string_view s) {
    if (s == "soft") return ShrinkMode::soft;
    if (s == "hard") return ShrinkMode::hard;
    throw InvalidArgument("unknown shrink mode '" + std::string(s) + "'");
}

struct ThresholdSpec {
    ThresholdMethod method = ThresholdMethod::universal;
    ShrinkMode mode = ShrinkMode::hard;
    /// Global threshold, used when `per_band` is empty.
    double value = 0.0;
    /// Optional per-band thresholds indexed like WaveletDecomposition::bands.
    std::vector<double> per_band;
    double sigma_hat = 0.0;

    double for_band(std::size_t b) const { return per_band.empty() ? value : per_band.at(b); }
};

inline constexpr double kMadToSigma = 0.6745;

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

/// sigma_hat = median(|finest band|) / 0.6745
inline double estimate_sigma(const WaveletDecomposition& decomp) {
    const auto& band = decomp.bands.at(decomp.finest_band());
    std::vector<double> mags(band.size());
    std::transform(band.begin(), band.end(), mags.begin(), [](double c) { return std::abs(c); });
    return median(std::move(mags)) / kMadToSigma;
}

/// sigma * sqrt(2 ln N)
inline double universal_value(double sigma, std::size_t n) {
    return n < 2 ? 0.0 : sigma * std::sqrt(2.0 * std::log(static_cast<double>(n)));
}

inline ThresholdSpec universal_threshold(const WaveletDecomposition& decomp, ShrinkMode mode = ShrinkMode::hard) {
    if (decomp.bands.size() < 2) throw InvalidArgument("universal_threshold: decomposition has no detail band");
    ThresholdSpec spec;
    spec.method = ThresholdMethod::universal;
    spec.mode = mode;
    spec.sigma_hat = estimate_sigma(decomp);
    spec.value = universal_value(spec.sigma_hat, decomp.original_length);
    return spec;
}

/// Retained-energy percentage E(t) and zeros percentage Z(t) at every
/// distinct coefficient magnitude, ascending. Retained means |c| > t.
struct SparsityCurve {
    std::vector<double> candidates;
    std::vector<double> retained_energy_pct;
    std::vector<double> zeros_pct;
};

/// Energy sums accumulate from the largest magnitude downwards.
inline SparsityCurve sparsity_curve(std::span<const double> coeffs) {
    SparsityCurve curve;
    if (coeffs.empty()) return curve;
    std::vector<double> mags(coeffs.size());
    std::transform(coeffs.begin(), coeffs.end(), mags.begin(), [](double c) { return std::abs(c); });
    std::sort(mags.begin(), mags.end());

    const std::size_t n = mags.size();
    // suffix[i] = sum of mags[j]^2 for j >= i, accumulated from j = n-1 down.
    std::vector<double> suffix(n + 1, 0.0);
    for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] + mags[i] * mags[i];
    const double total = suffix[0];
    if (!(total > 0.0)) return curve;

    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && mags[j] == mags[i]) ++j;
        // At t = mags[i], indices [0, j) are zeroed and [j, n) retained.
        curve.candidates.push_back(mags[i]);
        curve.retained_energy_pct.push_back(100.0 * suffix[j] / total);
        curve.zeros_pct.push_back(100.0 * static_cast<double>(j) / static_cast<double>(n));
        i = j;
    }
    return curve;
}

/// Threshold where E(t) and Z(t) cross. The candidates are scanned in
/// ascending order for the first one with E <= Z; the crossing is linearly
/// interpolated between it and the previous candidate. If E <= Z already at
/// the smallest candidate, that candidate is returned.
inline double balance_sparsity_value(std::span<const double> coeffs) {
    const SparsityCurve curve = sparsity_curve(coeffs);
    if (curve.candidates.empty()) return 0.0;
    for (std::size_t i = 0; i < curve.candidates.size(); ++i) {
        const double diff = curve.retained_energy_pct[i] - curve.zeros_pct[i];
        if (diff > 0.0) continue;
        if (i == 0) return curve.candidates[0];
        const double prev = curve.retained_energy_pct[i - 1] - curve.zeros_pct[i - 1];
        const double t0 = curve.candidates[i - 1];
        const double t1 = curve.candidates[i];
        return t0 + (t1 - t0) * prev / (prev - diff);
    }
    // Unreachable: at the largest magnitude E = 0 and Z = 100.
    return curve.candidates.back();
}

/// All coefficients outside band 0, concatenated in band order.
inline std::vector<double> detail_coefficients(const WaveletDecomposition& decomp) {
    std::vector<double> out;
    for (std::size_t b = 1; b < decomp.bands.size(); ++b) out.insert(out.end(), decomp.bands[b].begin(), decomp.bands[b].end());
    return out;
}

inline ThresholdSpec balance_sparsity_threshold(const WaveletDecomposition& decomp, ShrinkMode mode = ShrinkMode::hard) {
    ThresholdSpec spec;
    spec.method = ThresholdMethod::balance_sparsity;
    spec.mode = mode;
    spec.sigma_hat = decomp.bands.size() >= 2 ? estimate_sigma(decomp) : 0.0;
    spec.value = balance_sparsity_value(detail_coefficients(decomp));
    return spec;
}

/// Per-band variant: each detail band gets its own threshold. Band 0 gets 0.
inline ThresholdSpec per_band_threshold(const WaveletDecomposition& decomp, ThresholdMethod method, ShrinkMode mode) {
    ThresholdSpec spec = method == ThresholdMethod::universal ? universal_threshold(decomp, mode)
                                                              : balance_sparsity_threshold(decomp, mode);
    spec.per_band.assign(decomp.bands.size(), 0.0);
    for (std::size_t b = 1; b < decomp.bands.size(); ++b) {
        const auto& band = decomp.bands[b];
        if (method == ThresholdMethod::universal) {
            std::vector<double> mags(band.size());
            std::transform(band.begin(), band.end(), mags.begin(), [](double c) { return std::abs(c); });
            spec.per_band[b] = universal_value(median(std::move(mags)) / kMadToSigma, band.size());
        } else {
            spec.per_band[b] = balance_sparsity_value(band);
        }
    }
    return spec;
}

inline double soft(double c, double t) {
    const double m = std::abs(c) - t;
    return m > 0.0 ? std::copysign(m, c) : 0.0;
}

inline double hard(double c, double t) { return std::abs(c) > t ? c : 0.0; }

inline WaveletDecomposition apply_threshold(WaveletDecomposition decomp, const ThresholdSpec& spec) {
    if (spec.value < 0.0) throw InvalidArgument("threshold must be nonnegative");
    for (std::size_t b = 1; b < decomp.bands.size(); ++b) {
        const double t = spec.for_band(b);
        for (double& c : decomp.bands[b]) c = spec.mode == ShrinkMode::soft ? soft(c, t) : hard(c, t);
    }
    return decomp;
}

}  // namespace denoise::wavelet
