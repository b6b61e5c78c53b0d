#pragma once

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"

namespace denoise {

/// Kaiser-windowed sinc low-pass, odd length, unit DC gain.
/// `cutoff` and `transition` are fractions of the sampling rate.
inline std::vector<double> kaiser_lowpass(double cutoff, double transition, double atten_db) {
    const double beta = atten_db > 50.0   ? 0.1102 * (atten_db - 8.7)
                        : atten_db > 21.0 ? 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0)
                                          : 0.0;
    auto taps = static_cast<std::size_t>(std::ceil((atten_db - 8.0) / (2.285 * 2.0 * std::numbers::pi * transition)));
    taps |= 1u;
    const double mid = static_cast<double>(taps - 1) / 2.0;
    const double i0_beta = std::cyl_bessel_i(0.0, beta);
    std::vector<double> h(taps);
    for (std::size_t k = 0; k < taps; ++k) {
        const double t = static_cast<double>(k) - mid;
        const double sinc = t == 0.0 ? 2.0 * cutoff : std::sin(2.0 * std::numbers::pi * cutoff * t) / (std::numbers::pi * t);
        const double r = t / mid;
        h[k] = sinc * std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    }
    const double sum = std::accumulate(h.begin(), h.end(), 0.0);
    for (double& v : h) v /= sum;
    return h;
}

/// Rational-rate conversion down to 8 kHz. The anti-alias filter is a
/// linear-phase FIR whose -6 dB point sits at 0.45 x 8000 Hz; its delay is
/// compensated so output sample m lines up with input time m / 8000.
inline AudioBuffer resample_to_8k(const AudioBuffer& buf) {
    if (buf.sample_rate < kTargetRate)
        throw InvalidArgument("resample_to_8k: input rate " + std::to_string(buf.sample_rate) +
                              " Hz is below 8000 Hz (upsampling unsupported)");
    if (buf.sample_rate == kTargetRate) return buf;

    const long g = std::gcd(static_cast<long>(buf.sample_rate), static_cast<long>(kTargetRate));
    const long up = kTargetRate / g;
    const long down = buf.sample_rate / g;
    const double high_rate = static_cast<double>(buf.sample_rate) * static_cast<double>(up);

    // Pass band to 3300 Hz, -60 dB from 3900 Hz.
    const double cutoff = 0.45 * kTargetRate / high_rate;
    const double transition = 600.0 / high_rate;
    const std::vector<double> h = kaiser_lowpass(cutoff, transition, 60.0);
    const long taps = static_cast<long>(h.size());
    const long delay = (taps - 1) / 2;

    const long n_in = static_cast<long>(buf.size());
    const long n_out = (n_in * up + down - 1) / down;
    std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);
    for (long m = 0; m < n_out; ++m) {
        // y[m] = up * sum_j x[j] h[m*down + delay - j*up], 0 <= index < taps
        const long pos = m * down + delay;
        long j_hi = pos / up;
        long j_lo = (pos - taps + 1 + up - 1) / up;
        if (pos - taps + 1 < 0) j_lo = 0;
        j_hi = std::min(j_hi, n_in - 1);
        double acc = 0.0;
        for (long j = j_lo; j <= j_hi; ++j) acc += buf.samples[static_cast<std::size_t>(j)] * h[static_cast<std::size_t>(pos - j * up)];
        y[static_cast<std::size_t>(m)] = acc * static_cast<double>(up);
    }
    return AudioBuffer(std::move(y), kTargetRate);
}

}  // namespace denoise
