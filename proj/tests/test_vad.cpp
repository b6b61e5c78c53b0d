#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "denoise/vad.hpp"
#include "support/synthetic.hpp"

using namespace denoise;
using namespace denoise::vad;
using Catch::Approx;

namespace {

AudioBuffer silence_then_tone() {
    AudioBuffer buf(std::vector<double>(8000, 0.0), 8000);
    const auto tone = testing::sine(1000.0, 1.0, 4000, 8000);
    std::copy(tone.samples.begin(), tone.samples.end(), buf.samples.begin() + 4000);
    return buf;
}

AudioBuffer noisy_sentence(std::uint64_t seed, double snr_db, testing::Sentence& s) {
    s = testing::synthetic_sentence(seed, 4.0);
    const auto noise = testing::white_noise(seed + 1000, s.audio.size());
    return mix_at_snr(s.audio, noise, snr_db).noisy;
}

}  // namespace

TEST_CASE("frame_energy", "[vad]") {
    CHECK(frame_energy(std::vector<double>(10, 0.0)) == 0.0);
    CHECK(frame_energy(std::vector<double>(7, 0.5)) == 0.25);
    CHECK(frame_energy(std::vector<double>{1, -1, 1, -1}) == 1.0);
    REQUIRE_THROWS_AS(frame_energy(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("real_cepstrum of a silent frame is a pure DC term", "[vad][cepstrum]") {
    const auto c = real_cepstrum(std::vector<double>(160, 0.0), 12).coefficients;
    REQUIRE(c.size() == 12);
    CHECK(c[0] == Approx(std::log(1e-10)).epsilon(1e-12));
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(std::abs(c[i]) < 1e-12);
}

TEST_CASE("real_cepstrum of white noise is dominated by c[0]", "[vad][cepstrum]") {
    double ratio = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto x = testing::white_noise(seed + 40, 160);
        const auto c = real_cepstrum(x.samples, 12).coefficients;
        double rest = 0.0;
        for (std::size_t i = 1; i < c.size(); ++i) rest += c[i] * c[i];
        ratio += std::sqrt(rest) / std::abs(c[0]) / 20.0;
    }
    CHECK(ratio < 0.3);
}

TEST_CASE("real_cepstrum scaling only moves c[0]", "[vad][cepstrum][property]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto x = testing::white_noise(seed, 160, 0.2);
        const auto a = real_cepstrum(x.samples, 12).coefficients;
        for (double& v : x.samples) v *= 2.0;
        const auto b = real_cepstrum(x.samples, 12).coefficients;
        CHECK(b[0] - a[0] == Approx(std::log(2.0)).margin(1e-8));
        for (std::size_t i = 1; i < a.size(); ++i) CHECK(std::abs(b[i] - a[i]) < 1e-8);
    }
}

TEST_CASE("detect on silence flags nothing", "[vad]") {
    const AudioBuffer zeros(std::vector<double>(8000, 0.0), 8000);
    for (Feature f : {Feature::energy, Feature::cepstral}) {
        VadParams p;
        p.feature = f;
        const auto d = detect(zeros, p);
        CHECK(d.voiced_count() == 0);
        CHECK(d.size() == frame_count(8000, 160, 80));
    }
}

TEST_CASE("detect silence then tone", "[vad]") {
    const auto buf = silence_then_tone();
    const auto d = detect(buf, {});
    int errors = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
        const std::size_t start = k * d.hop;
        const bool in_tone = start >= 4000;
        const bool in_silence = start + d.frame_len <= 4000;
        if (in_silence && d.flags[k]) ++errors;
        if (in_tone && !d.flags[k]) ++errors;
    }
    CHECK(errors == 0);
    // Only the frames straddling the onset are ambiguous.
    std::size_t straddle = 0;
    for (std::size_t k = 0; k < d.size(); ++k)
        if (k * d.hop < 4000 && k * d.hop + d.frame_len > 4000) ++straddle;
    CHECK(straddle <= 2);
}

TEST_CASE("energy VAD accuracy on a labeled 20 dB mixture", "[vad]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        testing::Sentence s;
        const auto noisy = noisy_sentence(seed, 20.0, s);
        const auto d = detect(noisy, {});
        const auto truth = testing::frame_truth(s.voiced, d.frame_len, d.hop);
        CHECK(testing::frame_accuracy(d.flags, truth) >= 0.95);
    }
}

TEST_CASE("detect invariants", "[vad][property]") {
    testing::Sentence s;
    const auto noisy = noisy_sentence(9, 10.0, s);
    for (Feature f : {Feature::energy, Feature::cepstral}) {
        VadParams p;
        p.feature = f;
        const auto d = detect(noisy, p);
        const auto again = detect(noisy, p);
        CHECK(d.flags == again.flags);
        CHECK(d.feature_trace == again.feature_trace);
        CHECK(d.threshold_trace == again.threshold_trace);
        for (std::size_t k = 0; k < d.size(); ++k) {
            REQUIRE(d.flags[k] <= 1);
            REQUIRE(std::isfinite(d.threshold_trace[k]));
            if (f == Feature::energy) REQUIRE(d.threshold_trace[k] >= 0.0);
            if (k < p.noise_init_frames) REQUIRE(d.flags[k] == 0);
        }
    }
}

TEST_CASE("amplifying voiced regions never clears a flag", "[vad][property]") {
    testing::Sentence s;
    const auto noisy = noisy_sentence(4, 15.0, s);
    const auto base = detect(noisy, {});
    for (double gain : {1.5, 2.0, 4.0}) {
        AudioBuffer louder = noisy;
        for (std::size_t i = 0; i < louder.size(); ++i)
            if (s.voiced[i]) louder.samples[i] *= gain;
        const auto d = detect(louder, {});
        for (std::size_t k = 0; k < d.size(); ++k)
            if (base.flags[k]) REQUIRE(d.flags[k] == 1);
    }
}

TEST_CASE("cepstral features are gain invariant", "[vad][property]") {
    testing::Sentence s;
    const auto noisy = noisy_sentence(6, 10.0, s);
    VadParams p;
    p.feature = Feature::cepstral;
    const auto a = detect(noisy, p);
    AudioBuffer scaled = noisy;
    for (double& v : scaled.samples) v *= 3.0;
    const auto b = detect(scaled, p);
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(std::abs(a.feature_trace[k] - b.feature_trace[k]) < 1e-6);
    CHECK(a.flags == b.flags);
}

TEST_CASE("cepstral VAD finds speech in a 20 dB mixture", "[vad]") {
    testing::Sentence s;
    const auto noisy = noisy_sentence(2, 20.0, s);
    VadParams p;
    p.feature = Feature::cepstral;
    const auto d = detect(noisy, p);
    const auto truth = testing::frame_truth(s.voiced, d.frame_len, d.hop);
    CHECK(testing::frame_accuracy(d.flags, truth) >= 0.8);
}

TEST_CASE("detect errors and trace dump", "[vad]") {
    REQUIRE_THROWS_AS(detect(AudioBuffer(std::vector<double>(400, 0.0), 8000), {}), InvalidArgument);
    VadParams bad;
    bad.smoothing = 1.0;
    REQUIRE_THROWS_AS(detect(silence_then_tone(), bad), InvalidArgument);
    REQUIRE_THROWS_AS(parse_feature("zcr"), InvalidArgument);

    const auto d = detect(silence_then_tone(), {});
    std::ostringstream os;
    write_trace_csv(d, os);
    const std::string text = os.str();
    CHECK(text.rfind("index,feature,threshold,flag\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == d.size() + 1);
}
