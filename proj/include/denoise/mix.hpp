#pragma once

#include <cmath>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"
#include "denoise/vad.hpp"

namespace denoise {

struct MixSpec {
    double target_snr_db = 0.0;
    double noise_gain = 0.0;
    double measured_snr_db = 0.0;
    /// True when powers were taken over VAD-active samples, false for the whole utterance.
    bool active_region = true;
};

struct MixResult {
    AudioBuffer noisy;
    /// The scaled noise that was added (noisy - clean).
    AudioBuffer noise;
    MixSpec spec;
};

/// Sample mask marking every sample covered by a voiced frame.
inline std::vector<bool> active_mask(std::size_t len, const vad::VadDecision& d) {
    std::vector<bool> mask(len, false);
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (!d.flags[k]) continue;
        const std::size_t begin = k * d.hop;
        const std::size_t end = std::min(begin + d.frame_len, len);
        for (std::size_t i = begin; i < end; ++i) mask[i] = true;
    }
    return mask;
}

namespace detail {

inline double masked_mean_square(std::span<const double> x, const std::vector<bool>& mask) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (mask[i]) {
            acc += x[i] * x[i];
            ++n;
        }
    return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

}  // namespace detail

/// Mean-square level of the voiced frames in dB; whole-signal level when nothing is voiced.
inline double active_level(const AudioBuffer& buf, const vad::VadDecision& decisions) {
    const auto mask = active_mask(buf.size(), decisions);
    double p = detail::masked_mean_square(buf.view(), mask);
    if (std::find(mask.begin(), mask.end(), true) == mask.end()) p = mean_square(buf.view());
    return 10.0 * std::log10(p);
}

/// sqrt(P_clean / (P_noise * 10^(snr/10)))
inline double noise_gain_for(double p_clean, double p_noise, double target_snr_db) {
    if (!(p_noise > 0.0)) throw InvalidArgument("noise has zero power");
    if (!(p_clean > 0.0)) throw InvalidArgument("clean signal has zero power");
    return std::sqrt(p_clean / (p_noise * std::pow(10.0, target_snr_db / 10.0)));
}

/// Noise laid out to the clean length starting at `offset`, looping end-to-start.
inline std::vector<double> fit_noise(const AudioBuffer& noise, std::size_t len, std::size_t offset = 0) {
    if (noise.empty()) throw InvalidArgument("noise buffer is empty");
    std::vector<double> out(len);
    for (std::size_t i = 0; i < len; ++i) out[i] = noise.samples[(offset + i) % noise.size()];
    return out;
}

/// Adds noise scaled so that the clean-to-noise power ratio over the clean
/// signal's active region equals `target_snr_db`. The active region comes from
/// an energy VAD on the clean signal; signals too short for the VAD use the
/// whole utterance.
inline MixResult mix_at_snr(const AudioBuffer& clean, const AudioBuffer& noise, double target_snr_db,
                            std::size_t noise_offset = 0, const vad::VadParams& vad_params = {}) {
    if (clean.sample_rate != noise.sample_rate) throw InvalidArgument("mix_at_snr: sample rates differ");
    if (clean.empty()) throw InvalidArgument("clean signal has zero power");
    const std::vector<double> fitted = fit_noise(noise, clean.size(), noise_offset);

    std::vector<bool> mask(clean.size(), true);
    bool active = false;
    if (frame_count(clean.size(), vad_params.frame_len, vad_params.hop) >= vad_params.noise_init_frames) {
        auto params = vad_params;
        params.feature = vad::Feature::energy;
        const auto decision = vad::detect(clean, params);
        if (decision.voiced_count() > 0) {
            mask = active_mask(clean.size(), decision);
            active = true;
        }
    }

    const double p_clean = detail::masked_mean_square(clean.view(), mask);
    const double p_noise = detail::masked_mean_square(fitted, mask);
    const double gain = noise_gain_for(p_clean, p_noise, target_snr_db);

    MixResult r;
    r.noise = AudioBuffer(std::vector<double>(clean.size()), clean.sample_rate);
    r.noisy = AudioBuffer(std::vector<double>(clean.size()), clean.sample_rate);
    double e_clean = 0.0, e_noise = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double scaled = gain * fitted[i];
        r.noise.samples[i] = scaled;
        r.noisy.samples[i] = clean.samples[i] + scaled;
        if (mask[i]) {
            e_clean += clean.samples[i] * clean.samples[i];
            e_noise += scaled * scaled;
        }
    }
    r.spec = MixSpec{target_snr_db, gain, 10.0 * std::log10(e_clean / e_noise), active};
    return r;
}

}  // namespace denoise
