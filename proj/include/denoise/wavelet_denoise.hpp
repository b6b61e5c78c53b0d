#pragma once

#include <string>

#include "denoise/audio.hpp"
#include "denoise/wavelet.hpp"
#include "denoise/wavelet_filters.hpp"
#include "denoise/wavelet_threshold.hpp"

namespace denoise::wavelet {

struct DenoiseConfig {
    Family family = Family::sym15;
    Kind kind = Kind::wpt;
    int levels = 5;
    ThresholdMethod method = ThresholdMethod::universal;
    ShrinkMode mode = ShrinkMode::hard;
    bool per_band = false;

    /// e.g. "wpt-universal-hard"
    std::string variant() const {
        std::string v = std::string(to_string(kind)) + "-" + std::string(to_string(method)) + "-" + std::string(to_string(mode));
        if (per_band) v += "-band";
        return v;
    }
};

/// Transform, estimate a threshold, shrink, invert. Output length equals input length.
inline AudioBuffer denoise_wavelet(const AudioBuffer& noisy, const DenoiseConfig& config) {
    const WaveletFilter filter = wavelet_filters(config.family);
    const WaveletDecomposition decomp = transform(noisy, filter, config.kind, config.levels);
    ThresholdSpec spec;
    if (config.per_band)
        spec = per_band_threshold(decomp, config.method, config.mode);
    else if (config.method == ThresholdMethod::universal)
        spec = universal_threshold(decomp, config.mode);
    else
        spec = balance_sparsity_threshold(decomp, config.mode);
    return reconstruct(apply_threshold(decomp, spec), filter);
}

}  // namespace denoise::wavelet
