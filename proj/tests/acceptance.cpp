// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "denoise/adaptive.hpp"
#include "denoise/bench.hpp"
#include "denoise/metrics.hpp"
#include "denoise/mix.hpp"
#include "denoise/mos_service.hpp"
#include "denoise/vad.hpp"
#include "denoise/wavelet_denoise.hpp"
#include "support/synthetic.hpp"

using namespace denoise;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string printf_str(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

fs::path scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("denoise_acceptance_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// 1 ---------------------------------------------------------------------------
Outcome perfect_reconstruction() {
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::size_t signals = 0;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto f : wavelet::kAllFamilies) {
        const auto filt = wavelet::wavelet_filters(f);
        for (auto k : {wavelet::Kind::dwt, wavelet::Kind::wpt})
            for (int s = 0; s < 50; ++s) {
                std::vector<double> x(4096);
                for (double& v : x) v = u(rng);
                const AudioBuffer in(x, 8000);
                const auto y = wavelet::reconstruct(wavelet::transform(in, filt, k, 5), filt);
                for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y.samples[i] - x[i]));
                ++signals;
            }
    }
    const double dt = seconds_since(t0);
    return {worst < 1e-8 && dt < 30.0, printf_str("max abs error %.3g over %zu signals (< 1e-8), %.2f s (< 30 s)", worst, signals, dt)};
}

// 2 ---------------------------------------------------------------------------
Outcome qmf_invariants() {
    double dc = 0.0, orth = 0.0;
    for (auto f : wavelet::kAllFamilies) {
        const auto w = wavelet::wavelet_filters(f);
        dc = std::max(dc, wavelet::dc_residual(w.h));
        orth = std::max(orth, wavelet::orthonormality_residual(w.h));
    }
    return {dc < 1e-10 && orth < 1e-8,
            printf_str("9 tables: worst |sum h - sqrt2| %.2g (< 1e-10), worst orthonormality residual %.2g (< 1e-8)", dc, orth)};
}

// 3 ---------------------------------------------------------------------------
Outcome optimizer_oracles() {
    using adaptive::Algorithm;
    struct Expect {
        Algorithm a;
        double w1, e2, w2;
    };
    const Expect table[] = {
        {Algorithm::lms, 0.09, -0.245, 0.078975},
        {Algorithm::nlms, 0.0891089108910891, -0.24455445544554455, 0.04678217821782178},
        {Algorithm::rls, 0.515331100231899, -0.4576655501159495, 0.4060234777105053},
        {Algorithm::afa, 2.0, -1.2, 1.4},
        {Algorithm::anlms, 1.7821782178217822, -1.0910891089108912, -0.10624523990860635},
    };
    double worst = 0.0;
    for (const auto& t : table) {
        auto p = adaptive::default_params(t.a);
        p.order = 1;
        auto s = adaptive::init_state(p);
        adaptive::filter_step(s, p, 1.0, 1.0);
        worst = std::max(worst, std::abs(s.w[0] - t.w1));
        const auto io = adaptive::filter_step(s, p, 0.5, -0.2);
        worst = std::max(worst, std::abs(io.e - t.e2));
        worst = std::max(worst, std::abs(s.w[0] - t.w2));
        if (t.a == Algorithm::rls) worst = std::max(worst, std::abs(s.P[0] - 0.47767467965941796));
    }
    const auto rls = adaptive::init_state(adaptive::default_params(Algorithm::rls));
    const bool p0 = std::abs(rls.P[0] - 1.01010) < 5e-6 && std::abs(rls.P[0] - 1.0 / 0.99) < 1e-15;
    auto nl = adaptive::default_params(Algorithm::nlms);
    nl.order = 1;
    auto ns = adaptive::init_state(nl);
    adaptive::filter_step(ns, nl, 1.0, 1.0);
    const bool nlms_w1 = std::abs(ns.w[0] - 0.089109) < 5e-7;
    return {worst < 1e-12 && p0 && nlms_w1,
            printf_str("5 optimizers x 2 steps: worst deviation %.2g (< 1e-12); NLMS w1 %.6f; RLS P(0) diag %.5f", worst,
                       ns.w[0], rls.P[0])};
}

// 4 ---------------------------------------------------------------------------
double brute_force_balance(const std::vector<double>& coeffs) {
    std::vector<double> mags;
    for (double c : coeffs) mags.push_back(std::abs(c));
    std::vector<double> desc = mags;
    std::sort(desc.begin(), desc.end(), std::greater<>());
    double total = 0.0;
    for (double m : desc) total += m * m;
    if (!(total > 0.0)) return 0.0;
    std::vector<double> cands = mags;
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    const double n = static_cast<double>(mags.size());
    double prev_t = 0.0, prev_f = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const double t = cands[i];
        double kept = 0.0;
        for (double m : desc)
            if (m > t) kept += m * m;
        std::size_t zeros = 0;
        for (double m : mags)
            if (m <= t) ++zeros;
        const double f = 100.0 * kept / total - 100.0 * static_cast<double>(zeros) / n;
        if (f <= 0.0) return i == 0 ? t : prev_t + (t - prev_t) * prev_f / (prev_f - f);
        prev_t = t;
        prev_f = f;
    }
    return cands.back();
}

Outcome balance_sparsity() {
    std::mt19937_64 rng(77);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng() % 256;
        std::vector<double> c(n);
        std::normal_distribution<double> g(0.0, 1.0);
        for (double& v : c) v = (rng() % 4 == 0) ? g(rng) * 5.0 : g(rng) * 0.2;
        if (trial % 10 == 0) c[rng() % n] = c[rng() % n];  // ties
        if (wavelet::balance_sparsity_value(c) != brute_force_balance(c)) ++mismatches;
    }
    return {mismatches == 0, printf_str("100 random sets (size 1..256): %zu mismatches against the exhaustive scan", mismatches)};
}

// 5 ---------------------------------------------------------------------------
Outcome mixer_accuracy() {
    double worst = 0.0;
    std::size_t mixes = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto clean = testing::synthetic_sentence(seed, 3.0).audio;
        const auto noise = testing::white_noise(seed + 100, 10000, 0.3);
        const auto mask = active_mask(clean.size(), vad::detect(clean, {}));
        for (double target : {0.0, 5.0, 10.0, 15.0}) {
            const auto m = mix_at_snr(clean, noise, target, seed * 313);
            double ec = 0.0, en = 0.0;
            for (std::size_t i = 0; i < clean.size(); ++i)
                if (mask[i]) {
                    const double d = m.noisy.samples[i] - clean.samples[i];
                    ec += clean.samples[i] * clean.samples[i];
                    en += d * d;
                }
            worst = std::max(worst, std::abs(10.0 * std::log10(ec / en) - target));
            worst = std::max(worst, std::abs(m.spec.measured_snr_db - target));
            ++mixes;
        }
    }
    return {worst <= 0.01, printf_str("%zu mixes at {0,5,10,15} dB: worst |measured - target| %.2g dB (<= 0.01)", mixes, worst)};
}

// 6 ---------------------------------------------------------------------------
Outcome convergence() {
    using adaptive::Algorithm;
    struct Row {
        Algorithm a;
        double need;
    };
    const Row rows[] = {{Algorithm::nlms, 10.0}, {Algorithm::rls, 10.0}, {Algorithm::lms, 5.0}};
    bool pass = true;
    std::string detail;
    for (const auto& r : rows) {
        double worst_imp = 1e9, worst_time = 0.0;
        for (std::uint64_t seed : {1, 2, 3}) {
            const auto rig = testing::anc_rig(seed, 0.0);
            const auto t0 = Clock::now();
            const auto out = adaptive::denoise_adaptive(rig.noisy, adaptive::default_params(r.a), {},
                                                        adaptive::ReferenceMode::external_reference, rig.reference);
            worst_time = std::max(worst_time, seconds_since(t0));
            worst_imp = std::min(worst_imp, metrics::snr_db(rig.clean.audio, out) - metrics::snr_db(rig.clean.audio, rig.noisy));
        }
        const bool ok = worst_imp >= r.need && worst_time < 10.0;
        pass = pass && ok;
        detail += printf_str("%s%s %+.2f dB (>= %.0f), %.2f s%s", detail.empty() ? "" : "; ",
                             std::string(adaptive::to_string(r.a)).c_str(), worst_imp, r.need, worst_time, ok ? "" : " [short]");
    }
    return {pass, "0 dB rig, default parameters, worst of 3 seeds: " + detail};
}

// 7 ---------------------------------------------------------------------------
Outcome vad_accuracy() {
    double worst = 1.0, mean = 0.0;
    const int seeds = 10;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto s = testing::synthetic_sentence(300 + seed, 4.0, 0.5);
        const auto noise = testing::white_noise(700 + seed, s.audio.size());
        const auto noisy = mix_at_snr(s.audio, noise, 20.0).noisy;
        const auto d = vad::detect(noisy, {});
        const double acc = testing::frame_accuracy(d.flags, testing::frame_truth(s.voiced, d.frame_len, d.hop));
        worst = std::min(worst, acc);
        mean += acc / seeds;
    }
    return {worst >= 0.95, printf_str("energy VAD at 20 dB, %d seeds: worst %.2f%%, mean %.2f%% (>= 95%%)", seeds, 100 * worst, 100 * mean)};
}

// 8 and 9 share one synthetic sweep ---------------------------------------------
struct Sweep {
    double wavelet[4] = {0, 0, 0, 0};
    double energy[4] = {0, 0, 0, 0};
    double cepstral[4] = {0, 0, 0, 0};
    int seeds = 0;
};

const double kTargets[4] = {0.0, 5.0, 10.0, 15.0};

Sweep run_sweep(int seeds) {
    Sweep sw;
    sw.seeds = seeds;
    for (int seed = 0; seed < seeds; ++seed) {
        const auto s = testing::synthetic_sentence(100 + seed, 3.0, 0.5);
        const auto noise = testing::white_noise(900 + seed, s.audio.size());
        for (int i = 0; i < 4; ++i) {
            const auto noisy = mix_at_snr(s.audio, noise, kTargets[i]).noisy;
            double acc = 0.0;
            int n = 0;
            for (auto f : wavelet::kAllFamilies)
                for (auto k : {wavelet::Kind::dwt, wavelet::Kind::wpt}) {
                    const wavelet::DenoiseConfig c{f, k, 5, wavelet::ThresholdMethod::universal, wavelet::ShrinkMode::hard, false};
                    acc += metrics::snr_improvement(s.audio, noisy, wavelet::denoise_wavelet(noisy, c)).improvement_db;
                    ++n;
                }
            sw.wavelet[i] += acc / n / seeds;
            for (auto feat : {vad::Feature::energy, vad::Feature::cepstral}) {
                vad::VadParams vp;
                vp.feature = feat;
                const auto dec = vad::detect(noisy, vp);
                double a = 0.0;
                for (auto alg : adaptive::kAllAlgorithms) {
                    const auto out = adaptive::denoise_adaptive(noisy, adaptive::default_params(alg), dec,
                                                                adaptive::ReferenceMode::vad_reference);
                    a += metrics::snr_improvement(s.audio, noisy, out).improvement_db / 5.0;
                }
                (feat == vad::Feature::energy ? sw.energy : sw.cepstral)[i] += a / seeds;
            }
        }
    }
    return sw;
}

Outcome wavelet_trend(const Sweep& sw) {
    bool ok = true;
    for (int i = 1; i < 4; ++i) ok = ok && sw.wavelet[i] <= sw.wavelet[i - 1];
    return {ok, printf_str("universal/hard, 9 families x {dwt,wpt}, %d seeds: mean improvement %.3f / %.3f / %.3f / %.3f dB at 0/5/10/15 dB",
                           sw.seeds, sw.wavelet[0], sw.wavelet[1], sw.wavelet[2], sw.wavelet[3])};
}

Outcome vad_trend(const Sweep& sw) {
    double e = 0.0, c = 0.0;
    for (int i = 0; i < 4; ++i) {
        e += sw.energy[i] / 4.0;
        c += sw.cepstral[i] / 4.0;
    }
    return {e >= c, printf_str("vad_reference, 5 optimizers x 4 SNRs, %d seeds: energy %.3f dB vs cepstral %.3f dB "
                               "(per SNR %.2f/%.2f, %.2f/%.2f, %.2f/%.2f, %.2f/%.2f)",
                               sw.seeds, e, c, sw.energy[0], sw.cepstral[0], sw.energy[1], sw.cepstral[1], sw.energy[2],
                               sw.cepstral[2], sw.energy[3], sw.cepstral[3])};
}

// 10 --------------------------------------------------------------------------
Outcome determinism() {
    const fs::path root = scratch("determinism");
    bench::ExperimentConfig base;
    base.clean_dir = root / "clean_in";
    base.noise_file = root / "noise.wav";
    base.seed = 11;
    fs::create_directories(base.clean_dir);
    for (int i = 0; i < 2; ++i) {
        AudioBuffer s = testing::synthetic_sentence(500 + i, 2.5, 0.4, 16000).audio;
        const auto floor = testing::white_noise(600 + i, s.size(), 1e-3, 16000);
        for (std::size_t k = 0; k < s.size(); ++k) s.samples[k] += floor.samples[k];
        write_wav(s, base.clean_dir / ("sp0" + std::to_string(i + 1) + ".wav"));
    }
    write_wav(testing::white_noise(3, 30000, 0.2, 16000), base.noise_file);

    std::ostringstream log;
    std::vector<std::string> outputs[2];
    std::size_t files = 0;
    bool ok = true;
    for (int run = 0; run < 2; ++run) {
        auto c = base;
        c.output_dir = root / ("run" + std::to_string(run));
        c.jobs = run == 0 ? 4 : 1;
        ok = ok && bench::cmd_mix(c, log) == bench::kOk;
        ok = ok && bench::cmd_denoise(c, bench::Method::all, log) == bench::kOk;
        ok = ok && bench::cmd_eval(c, log) == bench::kOk;
        ok = ok && bench::cmd_report(c.results_path(), c.report_path(), std::nullopt, log, log) == bench::kOk;
        for (const auto& p : {c.manifest_path(), c.results_path(), c.report_path()}) outputs[run].push_back(slurp(p));
        const auto wavs = bench::list_wavs(c.denoised_out());
        files = wavs.size();
        for (const auto& p : wavs) outputs[run].push_back(slurp(p));
    }
    const bool same = outputs[0] == outputs[1] && !outputs[0][1].empty();
    fs::remove_all(root);
    return {ok && same, printf_str("mix/denoise/eval/report twice (jobs 4 vs 1), seed 11: manifest, results, report CSVs and "
                                   "%zu denoised WAVs %s",
                                   files, same ? "identical" : "DIFFER")};
}

// 11 --------------------------------------------------------------------------
/// Recomputes per-(algorithm, variant) MOS straight from the JSONL log.
std::map<std::pair<std::string, std::string>, std::vector<int>> brute_force_mos(const fs::path& log) {
    std::map<std::string, std::map<std::string, std::pair<std::string, std::string>>> sessions;
    std::map<std::pair<std::string, std::string>, int> latest;
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
        const auto e = nlohmann::json::parse(line);
        if (e["type"] == "session")
            for (const auto& b : e["playlist"]) sessions[e["session_id"]][b["id"]] = {b["algorithm"], b["variant"]};
        else
            latest[{e["session_id"], e["clip_id"]}] = e["score"];
    }
    std::map<std::pair<std::string, std::string>, std::vector<int>> groups;
    for (const auto& [key, score] : latest) groups[sessions.at(key.first).at(key.second)].push_back(score);
    return groups;
}

bool report_matches(const std::vector<metrics::MosSummary>& rows,
                    const std::map<std::pair<std::string, std::string>, std::vector<int>>& truth) {
    if (rows.size() != truth.size()) return false;
    for (const auto& r : rows) {
        const auto it = truth.find({r.algorithm, r.variant});
        if (it == truth.end() || it->second.size() != r.n) return false;
        double sum = 0.0;
        for (int v : it->second) sum += v;
        const double mean = sum / static_cast<double>(r.n);
        double ss = 0.0;
        for (int v : it->second) ss += (v - mean) * (v - mean);
        const double sd = r.n > 1 ? std::sqrt(ss / static_cast<double>(r.n - 1)) : 0.0;
        if (std::abs(mean - r.mean) > 1e-12 || std::abs(sd - r.stddev) > 1e-12) return false;
    }
    return true;
}

Outcome mos_report_and_restart() {
    const fs::path root = scratch("mos");
    const fs::path log = root / "mos_events.jsonl";
    std::vector<mos::Clip> pool;
    for (const char* alg : {"nlms", "rls", "sym15"})
        for (const char* v : {"vad-energy", "vad-cepstral"})
            pool.push_back(mos::clip_from_file(std::string("sp01_snr5__") + alg + "__" + v + ".wav"));

    std::mt19937_64 rng(31);
    std::size_t rejected = 0, ratings = 0;
    std::string csv_before;
    bool live_ok = false;
    {
        mos::MosStore store(log, 99);
        std::vector<mos::Session> sessions;
        for (int i = 0; i < 40; ++i) sessions.push_back(store.create_session("rater" + std::to_string(i), pool));
        for (int k = 0; k < 400; ++k) {
            const auto& s = sessions[rng() % sessions.size()];
            const auto& clip = s.playlist[rng() % s.playlist.size()];
            const int score = static_cast<int>(rng() % 13) - 1;  // includes -1 and 11
            try {
                store.record_rating(s.id, clip.id, score);
                ++ratings;
            } catch (const InvalidArgument&) {
                ++rejected;
            }
        }
        live_ok = report_matches(store.report(), brute_force_mos(log));
        csv_before = mos::report_csv(store.report());
    }
    mos::MosStore reopened(log);
    const bool replay_ok = report_matches(reopened.report(), brute_force_mos(log)) &&
                           mos::report_csv(reopened.report()) == csv_before &&
                           reopened.snapshot()->rating_events == ratings && reopened.snapshot()->sessions.size() == 40;
    fs::remove_all(root);
    return {live_ok && replay_ok,
            printf_str("40 sessions, %zu accepted ratings (with resubmissions), %zu out-of-range rejected: report %s brute force; "
                       "after restart %s",
                       ratings, rejected, live_ok ? "equals" : "DIFFERS FROM", replay_ok ? "identical" : "DIFFERENT")};
}

}  // namespace

int main() {
    int failed = 0;
    auto run = [&](int id, const char* name, const std::function<Outcome()>& f) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("[%s] %2d %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    };

    run(1, "perfect reconstruction", perfect_reconstruction);
    run(2, "QMF invariants", qmf_invariants);
    run(3, "optimizer oracles", optimizer_oracles);
    run(4, "balance-sparsity oracle", balance_sparsity);
    run(5, "mixer accuracy", mixer_accuracy);
    run(6, "ANC convergence", convergence);
    run(7, "VAD accuracy", vad_accuracy);
    const Sweep sweep = run_sweep(10);
    run(8, "wavelet trend over input SNR", [&] { return wavelet_trend(sweep); });
    run(9, "energy VAD >= cepstral VAD", [&] { return vad_trend(sweep); });
    run(10, "end-to-end determinism", determinism);
    run(11, "MOS report and restart", mos_report_and_restart);

    std::printf("%d of 11 criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
