#pragma once

// Periodic-extension DWT (Mallat cascade) and full-tree wavelet packet
// transform, plus their inverses.

#include <cstddef>
#include <string>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"
#include "denoise/wavelet_filters.hpp"

namespace denoise::wavelet {

enum class Kind { dwt, wpt };

inline std::string_view to_string(Kind k) { return k == Kind::dwt ? "dwt" : "wpt"; }

inline Kind parse_kind(std::string_view s) {
    if (s == "dwt") return Kind::dwt;
    if (s == "wpt") return Kind::wpt;
    throw InvalidArgument("unknown transform kind '" + std::string(s) + "'");
}

/// Coefficient bands of a `levels`-deep transform.
///
/// dwt: bands = [a_L, d_L, d_{L-1}, ..., d_1] (L + 1 bands).
/// wpt: bands = the 2^L leaves in natural filter-bank order; leaf i at depth
///      L is reached by reading the bits of i from the most significant end,
///      0 = low-pass branch, 1 = high-pass branch.
/// In both layouts band 0 is the all-low-pass band.
struct WaveletDecomposition {
    Kind kind = Kind::dwt;
    Family family = Family::haar;
    int levels = 0;
    std::size_t original_length = 0;
    std::size_t padded_length = 0;
    int sample_rate = kTargetRate;
    std::vector<std::vector<double>> bands;

    std::size_t coefficient_count() const noexcept {
        std::size_t n = 0;
        for (const auto& b : bands) n += b.size();
        return n;
    }

    /// Index of the highest-frequency detail band: d_1 for dwt, and for wpt
    /// the leaf at frequency position 2^L - 1, whose natural index is the Gray
    /// code of that position.
    std::size_t finest_band() const noexcept {
        if (kind == Kind::dwt) return bands.size() - 1;
        const std::size_t top = (std::size_t{1} << levels) - 1;
        return top ^ (top >> 1);
    }
};

namespace detail {

inline void analyze(const std::vector<double>& x, const WaveletFilter& w, std::vector<double>& lo, std::vector<double>& hi) {
    const std::size_t n = x.size();
    const std::size_t half = n / 2;
    lo.assign(half, 0.0);
    hi.assign(half, 0.0);
    const std::size_t len = w.length();
    for (std::size_t k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
            const double v = x[(2 * k + j) % n];
            a += w.h[j] * v;
            d += w.g[j] * v;
        }
        lo[k] = a;
        hi[k] = d;
    }
}

inline std::vector<double> synthesize(const std::vector<double>& lo, const std::vector<double>& hi, const WaveletFilter& w) {
    const std::size_t half = lo.size();
    const std::size_t n = 2 * half;
    const std::size_t len = w.length();
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < half; ++k)
        for (std::size_t i = 0; i < len; ++i) x[(2 * k + len - 1 - i) % n] += lo[k] * w.h_r[i] + hi[k] * w.g_r[i];
    return x;
}

inline std::vector<double> padded_copy(const AudioBuffer& signal, int levels) {
    if (levels < 1) throw InvalidArgument("levels must be >= 1");
    if (signal.empty()) throw InvalidArgument("cannot transform an empty signal");
    const std::size_t block = std::size_t{1} << levels;
    const std::size_t padded = (signal.size() + block - 1) / block * block;
    std::vector<double> x(signal.samples);
    x.resize(padded, 0.0);
    return x;
}

}  // namespace detail

inline WaveletDecomposition dwt(const AudioBuffer& signal, const WaveletFilter& filter, int levels) {
    WaveletDecomposition out;
    out.kind = Kind::dwt;
    out.family = filter.family;
    out.levels = levels;
    out.original_length = signal.size();
    out.sample_rate = signal.sample_rate;
    std::vector<double> approx = detail::padded_copy(signal, levels);
    out.padded_length = approx.size();

    std::vector<std::vector<double>> details;
    for (int l = 0; l < levels; ++l) {
        std::vector<double> lo, hi;
        detail::analyze(approx, filter, lo, hi);
        details.push_back(std::move(hi));
        approx = std::move(lo);
    }
    out.bands.push_back(std::move(approx));
    for (auto it = details.rbegin(); it != details.rend(); ++it) out.bands.push_back(std::move(*it));
    return out;
}

inline WaveletDecomposition wpt(const AudioBuffer& signal, const WaveletFilter& filter, int depth) {
    WaveletDecomposition out;
    out.kind = Kind::wpt;
    out.family = filter.family;
    out.levels = depth;
    out.original_length = signal.size();
    out.sample_rate = signal.sample_rate;
    std::vector<std::vector<double>> nodes{detail::padded_copy(signal, depth)};
    out.padded_length = nodes[0].size();
    for (int l = 0; l < depth; ++l) {
        std::vector<std::vector<double>> next(2 * nodes.size());
        for (std::size_t i = 0; i < nodes.size(); ++i) detail::analyze(nodes[i], filter, next[2 * i], next[2 * i + 1]);
        nodes = std::move(next);
    }
    out.bands = std::move(nodes);
    return out;
}

inline WaveletDecomposition transform(const AudioBuffer& signal, const WaveletFilter& filter, Kind kind, int levels) {
    return kind == Kind::dwt ? dwt(signal, filter, levels) : wpt(signal, filter, levels);
}

/// Inverse of dwt/wpt, truncated to the original length.
inline AudioBuffer reconstruct(const WaveletDecomposition& decomp, const WaveletFilter& filter) {
    if (decomp.family != filter.family)
        throw InvalidArgument("reconstruct: decomposition uses " + std::string(to_string(decomp.family)) +
                              " but filter is " + std::string(to_string(filter.family)));
    std::vector<double> x;
    if (decomp.kind == Kind::dwt) {
        if (decomp.bands.size() != static_cast<std::size_t>(decomp.levels) + 1)
            throw InvalidArgument("reconstruct: malformed dwt band layout");
        x = decomp.bands[0];
        for (std::size_t b = 1; b < decomp.bands.size(); ++b) x = detail::synthesize(x, decomp.bands[b], filter);
    } else {
        if (decomp.bands.size() != (std::size_t{1} << decomp.levels))
            throw InvalidArgument("reconstruct: malformed wpt band layout");
        std::vector<std::vector<double>> nodes = decomp.bands;
        while (nodes.size() > 1) {
            std::vector<std::vector<double>> parent(nodes.size() / 2);
            for (std::size_t i = 0; i < parent.size(); ++i)
                parent[i] = detail::synthesize(nodes[2 * i], nodes[2 * i + 1], filter);
            nodes = std::move(parent);
        }
        x = std::move(nodes[0]);
    }
    x.resize(decomp.original_length);
    return AudioBuffer(std::move(x), decomp.sample_rate);
}

}  // namespace denoise::wavelet
