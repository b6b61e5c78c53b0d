#pragma once

// Adaptive noise cancellation: an FIR filter on a noise reference x(n) is
// adapted so its output y(n) tracks the noise in the primary input d(n); the
// error e(n) = d(n) - y(n) is the speech estimate.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "denoise/audio.hpp"
#include "denoise/error.hpp"
#include "denoise/vad.hpp"

namespace denoise::adaptive {

enum class Algorithm { lms, nlms, rls, afa, anlms };

inline constexpr Algorithm kAllAlgorithms[] = {Algorithm::lms, Algorithm::nlms, Algorithm::rls, Algorithm::afa,
                                               Algorithm::anlms};

inline std::string_view to_string(Algorithm a) {
    switch (a) {
        case Algorithm::lms: return "lms";
        case Algorithm::nlms: return "nlms";
        case Algorithm::rls: return "rls";
        case Algorithm::afa: return "afa";
        case Algorithm::anlms: return "anlms";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view s) {
    for (Algorithm a : kAllAlgorithms)
        if (to_string(a) == s) return a;
    throw InvalidArgument("unknown adaptive algorithm '" + std::string(s) + "'");
}

struct OptimizerParams {
    Algorithm algorithm = Algorithm::nlms;
    std::size_t order = 70;
    double mu = 0.09;     ///< LMS step; ANLMS per-term numerator
    double alpha = 0.09;  ///< NLMS step
    double c = 0.01;      ///< NLMS/ANLMS regularizer; RLS P(0) = I / c
    double gamma = 0.95;  ///< RLS forgetting factor; AFA/ANLMS averaging constant
};

/// lms {mu 0.09, order 46}; nlms {c 0.01, alpha 0.09, order 70};
/// rls {c 0.99, gamma 0.95, order 80}; afa {gamma 0.5, order 450};
/// anlms {gamma 0.05, c 0.01, order 200, mu 0.09}.
inline OptimizerParams default_params(Algorithm a) {
    OptimizerParams p;
    p.algorithm = a;
    switch (a) {
        case Algorithm::lms: p.order = 46; p.mu = 0.09; break;
        case Algorithm::nlms: p.order = 70; p.alpha = 0.09; p.c = 0.01; break;
        case Algorithm::rls: p.order = 80; p.c = 0.99; p.gamma = 0.95; break;
        case Algorithm::afa: p.order = 450; p.gamma = 0.5; break;
        // ANLMS reuses the LMS/NLMS step.
        case Algorithm::anlms: p.order = 200; p.gamma = 0.05; p.c = 0.01; p.mu = 0.09; break;
    }
    return p;
}

inline void validate(const OptimizerParams& p) {
    if (p.order < 1) throw InvalidArgument("filter order must be >= 1");
    switch (p.algorithm) {
        case Algorithm::lms:
            if (!(p.mu > 0.0)) throw InvalidArgument("lms: mu must be positive");
            break;
        case Algorithm::nlms:
            if (!(p.alpha > 0.0 && p.alpha < 2.0)) throw InvalidArgument("nlms: alpha must lie in (0, 2)");
            if (!(p.c >= 0.0)) throw InvalidArgument("nlms: c must be nonnegative");
            break;
        case Algorithm::rls:
            if (!(p.c > 0.0)) throw InvalidArgument("rls: c must be positive");
            if (!(p.gamma > 0.0 && p.gamma <= 1.0)) throw InvalidArgument("rls: gamma must lie in (0, 1]");
            break;
        case Algorithm::afa:
        case Algorithm::anlms:
            if (!(p.gamma > 0.0)) throw InvalidArgument("averaging constant gamma must be positive");
            if (p.algorithm == Algorithm::anlms && !(p.mu > 0.0 && p.c >= 0.0))
                throw InvalidArgument("anlms: mu must be positive and c nonnegative");
            break;
    }
}

struct AdaptiveFilterState {
    std::vector<double> w;
    std::vector<double> x_hist;  ///< most recent first
    long long n = 0;             ///< completed updates
    std::vector<double> P;       ///< order x order, row-major (RLS)
    std::vector<double> w_sum;   ///< AFA/ANLMS
    std::vector<double> u_sum;   ///< AFA/ANLMS

    std::size_t order() const noexcept { return w.size(); }
    double p(std::size_t i, std::size_t j) const { return P[i * w.size() + j]; }
};

struct AncIo {
    double x = 0.0;
    double d = 0.0;
    double y = 0.0;
    double e = 0.0;
};

inline AdaptiveFilterState init_state(const OptimizerParams& params) {
    validate(params);
    const std::size_t m = params.order;
    AdaptiveFilterState s;
    s.w.assign(m, 0.0);
    s.x_hist.assign(m, 0.0);
    if (params.algorithm == Algorithm::rls) {
        s.P.assign(m * m, 0.0);
        for (std::size_t i = 0; i < m; ++i) s.P[i * m + i] = 1.0 / params.c;
    }
    if (params.algorithm == Algorithm::afa || params.algorithm == Algorithm::anlms) {
        s.w_sum.assign(m, 0.0);
        s.u_sum.assign(m, 0.0);
    }
    return s;
}

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline void rls_update(AdaptiveFilterState& s, const OptimizerParams& p, double e) {
    const std::size_t m = s.order();
    const auto& x = s.x_hist;
    // No update for an all-zero regressor.
    if (std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0; })) return;
    std::vector<double> px(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = &s.P[i * m];
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += row[j] * x[j];
        px[i] = acc;
    }
    const double denom = p.gamma + dot(x, px);
    std::vector<double> k(m);
    for (std::size_t i = 0; i < m; ++i) k[i] = px[i] / denom;
    for (std::size_t i = 0; i < m; ++i) s.w[i] += k[i] * e;
    // P <- (P - K x^T P) / gamma, where x^T P = (P x)^T; upper triangle mirrored.
    const double inv_gamma = 1.0 / p.gamma;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            const double v = (s.P[i * m + j] - k[i] * px[j]) * inv_gamma;
            s.P[i * m + j] = v;
            s.P[j * m + i] = v;
        }
}

}  // namespace detail

/// One sample of the ANC loop: shift x into the history, y = w . x_hist,
/// e = d - y, then the algorithm's weight update.
inline AncIo filter_step(AdaptiveFilterState& s, const OptimizerParams& p, double x, double d) {
    const std::size_t m = s.order();
    if (m != p.order || m == 0) throw InvalidArgument("filter state does not match params.order");

    std::copy_backward(s.x_hist.begin(), s.x_hist.end() - 1, s.x_hist.end());
    s.x_hist[0] = x;

    AncIo io{x, d, detail::dot(s.w, s.x_hist), 0.0};
    io.e = d - io.y;
    const double e = io.e;
    s.n += 1;

    switch (p.algorithm) {
        case Algorithm::lms:
            for (std::size_t i = 0; i < m; ++i) s.w[i] += p.mu * e * s.x_hist[i];
            break;
        case Algorithm::nlms: {
            const double step = p.alpha / (p.c + detail::dot(s.x_hist, s.x_hist));
            for (std::size_t i = 0; i < m; ++i) s.w[i] += step * e * s.x_hist[i];
            break;
        }
        case Algorithm::rls:
            detail::rls_update(s, p, e);
            break;
        case Algorithm::afa:
        case Algorithm::anlms: {
            const double scale = p.algorithm == Algorithm::afa
                                     ? 1.0
                                     : p.mu / (p.c + detail::dot(s.x_hist, s.x_hist));
            const double n = static_cast<double>(s.n);
            for (std::size_t i = 0; i < m; ++i) {
                s.w_sum[i] += s.w[i];
                s.u_sum[i] += scale * e * s.x_hist[i];
                s.w[i] = s.w_sum[i] / n + s.u_sum[i] / (n * p.gamma);
            }
            break;
        }
    }

    for (double v : s.w)
        if (!std::isfinite(v)) throw DivergenceError(std::string(to_string(p.algorithm)), s.n);
    return io;
}

enum class ReferenceMode { vad_reference, external_reference };

/// Replays the samples of unvoiced frames in order, looping. A frame's hop
/// segment joins the template once the loop has moved past it, so the
/// reference only ever draws on samples already seen.
class NoiseTemplate {
public:
    NoiseTemplate(std::span<const double> signal, const vad::VadDecision& decision)
        : signal_(signal), decision_(decision) {}

    /// Reference sample for time index t. Must be called with t = 0, 1, 2, ...
    double next(std::size_t t) {
        admit_segments_before(t);
        if (samples_.empty()) return 0.0;
        const double v = samples_[cursor_ % samples_.size()];
        cursor_ = (cursor_ + 1) % samples_.size();
        return v;
    }

    std::size_t size() const noexcept { return samples_.size(); }

private:
    void admit_segments_before(std::size_t t) {
        const std::size_t hop = decision_.hop;
        while (next_frame_ < decision_.size() && (next_frame_ + 1) * hop <= t) {
            if (!decision_.flags[next_frame_]) {
                const std::size_t begin = next_frame_ * hop;
                const std::size_t end = std::min(begin + hop, signal_.size());
                samples_.insert(samples_.end(), signal_.begin() + static_cast<std::ptrdiff_t>(begin),
                                signal_.begin() + static_cast<std::ptrdiff_t>(end));
            }
            ++next_frame_;
        }
    }

    std::span<const double> signal_;
    const vad::VadDecision& decision_;
    std::vector<double> samples_;
    std::size_t next_frame_ = 0;
    std::size_t cursor_ = 0;
};

/// Runs the ANC loop over every sample with d = noisy and returns e(n).
inline AudioBuffer denoise_adaptive(const AudioBuffer& noisy, const OptimizerParams& params,
                                    const vad::VadDecision& vad, ReferenceMode mode,
                                    const std::optional<AudioBuffer>& reference = std::nullopt) {
    validate(params);
    AdaptiveFilterState state = init_state(params);
    AudioBuffer out(std::vector<double>(noisy.size(), 0.0), noisy.sample_rate);

    if (mode == ReferenceMode::external_reference) {
        if (!reference) throw InvalidArgument("external_reference mode needs a reference signal");
        if (reference->sample_rate != noisy.sample_rate || reference->size() != noisy.size())
            throw InvalidArgument("reference must match the noisy signal in length and rate");
        for (std::size_t t = 0; t < noisy.size(); ++t)
            out.samples[t] = filter_step(state, params, reference->samples[t], noisy.samples[t]).e;
        return out;
    }

    if (vad.size() > 0 && vad.voiced_count() == vad.size())
        throw InvalidArgument("vad_reference mode found no unvoiced frames; supply a recording with a longer leading noise segment");
    if (vad.size() == 0 && !noisy.empty())
        throw InvalidArgument("vad_reference mode needs VAD decisions for the noisy signal");
    NoiseTemplate tmpl(noisy.view(), vad);
    for (std::size_t t = 0; t < noisy.size(); ++t)
        out.samples[t] = filter_step(state, params, tmpl.next(t), noisy.samples[t]).e;
    return out;
}

}  // namespace denoise::adaptive
