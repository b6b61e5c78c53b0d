#pragma once

// Batch experiment driver behind the denoise_bench CLI: corpus mixing, grid
// denoising, metric evaluation and grouped reports. Commands return process
// exit codes (0 ok, 1 partial failure, 2 configuration/fatal error).

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "denoise/adaptive.hpp"
#include "denoise/metrics.hpp"
#include "denoise/mix.hpp"
#include "denoise/resample.hpp"
#include "denoise/vad.hpp"
#include "denoise/wav.hpp"
#include "denoise/wavelet_denoise.hpp"

namespace denoise::bench {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kOk = 0;
inline constexpr int kPartial = 1;
inline constexpr int kFatal = 2;

enum class Method { wavelet, adaptive, all };

inline Method parse_method(std::string_view s) {
    if (s == "wavelet") return Method::wavelet;
    if (s == "adaptive") return Method::adaptive;
    if (s == "all") return Method::all;
    throw InvalidArgument("unknown method '" + std::string(s) + "'");
}

/// Reference source for the adaptive grid: a VAD-built noise template, or the
/// scaled noise written next to each noisy file.
enum class ReferenceSource { vad, external, both };

inline std::string_view to_string(ReferenceSource r) {
    switch (r) {
        case ReferenceSource::vad: return "vad";
        case ReferenceSource::external: return "external";
        case ReferenceSource::both: return "both";
    }
    return "?";
}

inline ReferenceSource parse_reference(std::string_view s) {
    if (s == "vad") return ReferenceSource::vad;
    if (s == "external") return ReferenceSource::external;
    if (s == "both") return ReferenceSource::both;
    throw InvalidArgument("unknown reference source '" + std::string(s) + "'");
}

struct ExperimentConfig {
    fs::path clean_dir;
    fs::path noise_file;
    fs::path output_dir;
    std::vector<double> snr_targets{0.0, 5.0, 10.0, 15.0};

    std::vector<wavelet::Family> families{std::begin(wavelet::kAllFamilies), std::end(wavelet::kAllFamilies)};
    std::vector<wavelet::Kind> kinds{wavelet::Kind::dwt, wavelet::Kind::wpt};
    std::vector<wavelet::ThresholdMethod> thresholds{wavelet::ThresholdMethod::universal,
                                                     wavelet::ThresholdMethod::balance_sparsity};
    std::vector<wavelet::ShrinkMode> modes{wavelet::ShrinkMode::soft, wavelet::ShrinkMode::hard};
    int levels = 5;

    std::vector<adaptive::Algorithm> algorithms{std::begin(adaptive::kAllAlgorithms), std::end(adaptive::kAllAlgorithms)};
    std::vector<vad::Feature> vad_features{vad::Feature::energy, vad::Feature::cepstral};
    ReferenceSource reference = ReferenceSource::vad;
    /// Per-algorithm overrides of the default optimizer parameters.
    std::map<adaptive::Algorithm, adaptive::OptimizerParams> optimizer;

    std::uint64_t seed = 0;
    unsigned jobs = 1;

    fs::path clean_out() const { return output_dir / "clean"; }
    fs::path noisy_out() const { return output_dir / "noisy"; }
    fs::path noise_out() const { return output_dir / "noise"; }
    fs::path denoised_out() const { return output_dir / "denoised"; }
    fs::path manifest_path() const { return output_dir / "manifest.csv"; }
    fs::path results_path() const { return output_dir / "results.csv"; }
    fs::path report_path() const { return output_dir / "report.csv"; }

    adaptive::OptimizerParams optimizer_params(adaptive::Algorithm a) const {
        if (auto it = optimizer.find(a); it != optimizer.end()) return it->second;
        return adaptive::default_params(a);
    }
};

// ---------------------------------------------------------------- formatting

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw InvalidArgument("not a number: '" + s + "'");
    return v;
}

/// "_snr<k>" suffix for a target, e.g. 5 -> "5", -2.5 -> "-2.5".
inline std::string snr_tag(double target) { return fmt(target); }

/// Target parsed from a "<stem>_snr<k>" name, if present.
inline std::optional<double> target_from_stem(const std::string& stem) {
    const auto pos = stem.rfind("_snr");
    if (pos == std::string::npos) return std::nullopt;
    try {
        return parse_double(stem.substr(pos + 4));
    } catch (const InvalidArgument&) {
        return std::nullopt;
    }
}

inline std::string output_name(const std::string& noisy_stem, const std::string& algorithm, const std::string& variant) {
    return noisy_stem + "__" + algorithm + "__" + variant;
}

struct OutputKey {
    std::string noisy_stem;
    std::string algorithm;
    std::string variant;
};

/// Splits "<stem>__<algorithm>__<variant>" at the last two separators.
inline std::optional<OutputKey> parse_output_name(const std::string& name) {
    const auto b = name.rfind("__");
    if (b == std::string::npos || b == 0) return std::nullopt;
    const auto a = name.rfind("__", b - 1);
    if (a == std::string::npos || a == 0 || a + 2 >= b) return std::nullopt;
    return OutputKey{name.substr(0, a), name.substr(a + 2, b - a - 2), name.substr(b + 2)};
}

// ---------------------------------------------------------------------- CSV

namespace csv {

inline std::string quote(const std::string& f) {
    if (f.find_first_of(",\"\n\r") == std::string::npos) return f;
    std::string out = "\"";
    for (char c : f) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << quote(fields[i]);
    os << '\n';
}

inline std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                out.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                out.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else if (c != '\r') {
            out.back() += c;
        }
    }
    return out;
}

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InvalidArgument("CSV lacks column '" + std::string(name) + "'");
    }
};

inline Table read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    Table t;
    std::string line;
    if (!std::getline(in, line)) throw InvalidArgument(path.string() + " is empty");
    t.header = split_row(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto row = split_row(line);
        if (row.size() != t.header.size())
            throw InvalidArgument(path.string() + ": row has " + std::to_string(row.size()) + " fields, expected " +
                                  std::to_string(t.header.size()));
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Writes through a temporary file so readers never see a partial table.
inline void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace csv

// ------------------------------------------------------------------- config

inline json optimizer_json(const adaptive::OptimizerParams& p) {
    return json{{"algorithm", adaptive::to_string(p.algorithm)}, {"order", p.order}, {"mu", p.mu},
             {"alpha", p.alpha}, {"c", p.c}, {"gamma", p.gamma}};
}

template <class T, class Parse>
std::vector<T> parse_list(const json& j, Parse parse) {
    std::vector<T> out;
    for (const auto& v : j) out.push_back(parse(v.get<std::string>()));
    return out;
}

template <class T>
json names(const std::vector<T>& xs) {
    json a = json::array();
    for (const auto& x : xs) a.push_back(std::string(to_string(x)));
    return a;
}

inline json config_to_json(const ExperimentConfig& c) {
    json opt = json::object();
    for (const auto& [a, p] : c.optimizer) opt[std::string(adaptive::to_string(a))] = optimizer_json(p);
    return json{{"clean_dir", c.clean_dir.string()},
                {"noise_file", c.noise_file.string()},
                {"output_dir", c.output_dir.string()},
                {"snr_targets", c.snr_targets},
                {"wavelet",
                 {{"families", names(c.families)},
                  {"kinds", names(c.kinds)},
                  {"thresholds", names(c.thresholds)},
                  {"modes", names(c.modes)},
                  {"levels", c.levels}}},
                {"adaptive",
                 {{"algorithms", names(c.algorithms)},
                  {"vad", names(c.vad_features)},
                  {"reference", to_string(c.reference)},
                  {"optimizer", opt}}},
                {"seed", c.seed},
                {"jobs", c.jobs}};
}

/// Reads the JSON schema produced by config_to_json; absent keys keep defaults.
inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    try {
        if (j.contains("clean_dir")) c.clean_dir = j.at("clean_dir").get<std::string>();
        if (j.contains("noise_file")) c.noise_file = j.at("noise_file").get<std::string>();
        if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
        if (j.contains("snr_targets")) c.snr_targets = j.at("snr_targets").get<std::vector<double>>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("jobs")) c.jobs = j.at("jobs").get<unsigned>();
        if (j.contains("wavelet")) {
            const auto& w = j.at("wavelet");
            if (w.contains("families")) c.families = parse_list<wavelet::Family>(w["families"], wavelet::parse_family);
            if (w.contains("kinds")) c.kinds = parse_list<wavelet::Kind>(w["kinds"], wavelet::parse_kind);
            if (w.contains("thresholds"))
                c.thresholds = parse_list<wavelet::ThresholdMethod>(w["thresholds"], wavelet::parse_method);
            if (w.contains("modes")) c.modes = parse_list<wavelet::ShrinkMode>(w["modes"], wavelet::parse_mode);
            if (w.contains("levels")) c.levels = w["levels"].get<int>();
        }
        if (j.contains("adaptive")) {
            const auto& a = j.at("adaptive");
            if (a.contains("algorithms"))
                c.algorithms = parse_list<adaptive::Algorithm>(a["algorithms"], adaptive::parse_algorithm);
            if (a.contains("vad")) c.vad_features = parse_list<vad::Feature>(a["vad"], vad::parse_feature);
            if (a.contains("reference")) c.reference = parse_reference(a["reference"].get<std::string>());
            if (a.contains("optimizer")) {
                for (const auto& [name, p] : a["optimizer"].items()) {
                    const auto alg = adaptive::parse_algorithm(name);
                    auto params = adaptive::default_params(alg);
                    if (p.contains("order")) params.order = p["order"].get<std::size_t>();
                    if (p.contains("mu")) params.mu = p["mu"].get<double>();
                    if (p.contains("alpha")) params.alpha = p["alpha"].get<double>();
                    if (p.contains("c")) params.c = p["c"].get<double>();
                    if (p.contains("gamma")) params.gamma = p["gamma"].get<double>();
                    adaptive::validate(params);
                    c.optimizer[alg] = params;
                }
            }
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open config " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InvalidArgument("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

/// DENOISE_BENCH_SEED, when set, replaces the configured seed.
inline void apply_seed_env(ExperimentConfig& c) {
    if (const char* s = std::getenv("DENOISE_BENCH_SEED"); s && *s) {
        std::uint64_t v = 0;
        const char* end = s + std::char_traits<char>::length(s);
        auto r = std::from_chars(s, end, v);
        if (r.ec != std::errc() || r.ptr != end) throw InvalidArgument("DENOISE_BENCH_SEED is not an unsigned integer");
        c.seed = v;
    }
}

// ------------------------------------------------------------------ helpers

/// FNV-1a, used to derive stable per-file values from the seed.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::vector<fs::path> list_wavs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".wav") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct Failures {
    std::mutex mu;
    std::vector<std::string> items;

    void add(std::string what) {
        std::lock_guard lock(mu);
        items.push_back(std::move(what));
    }
};

inline int summarize(std::ostream& log, const std::string& command, std::size_t done, const Failures& f) {
    log << command << ": " << done << " ok, " << f.items.size() << " failed\n";
    for (const auto& item : f.items) log << "  failed: " << item << '\n';
    return f.items.empty() ? kOk : kPartial;
}

/// Runs tasks[0..n) on up to `jobs` threads.
inline void run_parallel(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& task) {
    const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) task(i);
        });
    for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------- manifest

struct ManifestEntry {
    std::string file;   ///< noisy stem, "<clean>_snr<k>"
    std::string clean;  ///< clean stem
    double target_snr_db = 0.0;
    double measured_snr_db = 0.0;
    double noise_gain = 0.0;
    std::size_t noise_offset = 0;
    double scale = 1.0;  ///< common headroom gain applied to clean and noisy
};

inline const std::vector<std::string>& manifest_header() {
    static const std::vector<std::string> h{"file", "clean", "target_snr_db", "measured_snr_db", "noise_gain",
                                            "noise_offset", "scale"};
    return h;
}

inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    const auto t = csv::read(path);
    const auto cf = t.column("file"), cc = t.column("clean"), ct = t.column("target_snr_db"),
               cm = t.column("measured_snr_db"), cg = t.column("noise_gain"), co = t.column("noise_offset"),
               cs = t.column("scale");
    std::vector<ManifestEntry> out;
    for (const auto& r : t.rows)
        out.push_back({r[cf], r[cc], parse_double(r[ct]), parse_double(r[cm]), parse_double(r[cg]),
                       static_cast<std::size_t>(std::stoull(r[co])), parse_double(r[cs])});
    return out;
}

// ---------------------------------------------------------------------- mix

inline int cmd_mix(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
    if (cfg.snr_targets.empty()) {
        log << "mix: snr_targets is empty\n";
        return kFatal;
    }
    if (!fs::is_regular_file(cfg.noise_file)) {
        log << "mix: noise file not found: " << cfg.noise_file << '\n';
        return kFatal;
    }
    if (!fs::is_directory(cfg.clean_dir)) {
        log << "mix: clean directory not found: " << cfg.clean_dir << '\n';
        return kFatal;
    }
    AudioBuffer noise;
    std::vector<fs::path> cleans;
    try {
        noise = resample_to_8k(read_wav(cfg.noise_file));
        if (!(sum_squares(noise.view()) > 0.0)) throw InvalidArgument("noise file is silent");
        cleans = list_wavs(cfg.clean_dir);
        fs::create_directories(cfg.clean_out());
        fs::create_directories(cfg.noisy_out());
        fs::create_directories(cfg.noise_out());
    } catch (const std::exception& e) {
        log << "mix: " << e.what() << '\n';
        return kFatal;
    }
    if (cleans.empty()) {
        log << "mix: no .wav files in " << cfg.clean_dir << '\n';
        return kFatal;
    }

    Failures failures;
    std::vector<std::vector<ManifestEntry>> per_file(cleans.size());
    run_parallel(cleans.size(), cfg.jobs, [&](std::size_t i) {
        const std::string stem = cleans[i].stem().string();
        try {
            const AudioBuffer clean = resample_to_8k(read_wav(cleans[i]));
            std::vector<MixResult> mixes;
            std::vector<ManifestEntry> entries;
            double peak = 0.0;
            for (double target : cfg.snr_targets) {
                ManifestEntry e;
                e.clean = stem;
                e.file = stem + "_snr" + snr_tag(target);
                e.target_snr_db = target;
                e.noise_offset = static_cast<std::size_t>(fnv1a(e.file, fnv1a(std::to_string(cfg.seed))) % noise.size());
                auto m = mix_at_snr(clean, noise, target, e.noise_offset);
                e.noise_gain = m.spec.noise_gain;
                e.measured_snr_db = m.spec.measured_snr_db;
                for (double v : m.noisy.samples) peak = std::max(peak, std::abs(v));
                mixes.push_back(std::move(m));
                entries.push_back(e);
            }
            // Shared headroom gain for the clean file and all of its mixes.
            const double scale = peak > 0.99 ? 0.99 / peak : 1.0;
            auto scaled = [scale](AudioBuffer b) {
                for (double& v : b.samples) v *= scale;
                return b;
            };
            write_wav(scaled(clean), cfg.clean_out() / (stem + ".wav"));
            for (std::size_t k = 0; k < mixes.size(); ++k) {
                entries[k].scale = scale;
                write_wav(scaled(mixes[k].noisy), cfg.noisy_out() / (entries[k].file + ".wav"));
                write_wav(scaled(mixes[k].noise), cfg.noise_out() / (entries[k].file + ".wav"));
            }
            per_file[i] = std::move(entries);
        } catch (const std::exception& e) {
            failures.add(cleans[i].filename().string() + ": " + e.what());
        }
    });

    std::ostringstream manifest;
    csv::write_row(manifest, manifest_header());
    std::size_t written = 0;
    for (const auto& entries : per_file)
        for (const auto& e : entries) {
            csv::write_row(manifest, {e.file, e.clean, fmt(e.target_snr_db), fmt(e.measured_snr_db), fmt(e.noise_gain),
                                      std::to_string(e.noise_offset), fmt(e.scale)});
            ++written;
        }
    try {
        csv::write_atomic(cfg.manifest_path(), manifest.str());
        std::ofstream(cfg.output_dir / "config.json") << config_to_json(cfg).dump(2) << '\n';
    } catch (const std::exception& e) {
        log << "mix: " << e.what() << '\n';
        return kFatal;
    }
    return summarize(log, "mix", written, failures);
}

// ------------------------------------------------------------------ denoise

struct DenoiseTask {
    const ManifestEntry* entry = nullptr;
    bool is_wavelet = true;
    wavelet::DenoiseConfig wavelet;
    adaptive::OptimizerParams optimizer;
    vad::Feature feature = vad::Feature::energy;
    adaptive::ReferenceMode mode = adaptive::ReferenceMode::vad_reference;

    std::string algorithm() const {
        return is_wavelet ? std::string(wavelet::to_string(wavelet.family)) : std::string(adaptive::to_string(optimizer.algorithm));
    }
    std::string variant() const {
        if (is_wavelet) return wavelet.variant();
        if (mode == adaptive::ReferenceMode::external_reference) return "external";
        return "vad-" + std::string(vad::to_string(feature));
    }
};

inline std::vector<DenoiseTask> plan_denoise(const ExperimentConfig& cfg, Method method,
                                             const std::vector<ManifestEntry>& manifest) {
    std::vector<DenoiseTask> tasks;
    for (const auto& e : manifest) {
        if (method != Method::adaptive)
            for (auto f : cfg.families)
                for (auto k : cfg.kinds)
                    for (auto t : cfg.thresholds)
                        for (auto m : cfg.modes) {
                            DenoiseTask task;
                            task.entry = &e;
                            task.wavelet = wavelet::DenoiseConfig{f, k, cfg.levels, t, m, false};
                            tasks.push_back(task);
                        }
        if (method != Method::wavelet)
            for (auto a : cfg.algorithms) {
                DenoiseTask task;
                task.entry = &e;
                task.is_wavelet = false;
                task.optimizer = cfg.optimizer_params(a);
                if (cfg.reference != ReferenceSource::external)
                    for (auto f : cfg.vad_features) {
                        task.feature = f;
                        task.mode = adaptive::ReferenceMode::vad_reference;
                        tasks.push_back(task);
                    }
                if (cfg.reference != ReferenceSource::vad) {
                    task.mode = adaptive::ReferenceMode::external_reference;
                    tasks.push_back(task);
                }
            }
    }
    return tasks;
}

inline json task_metadata(const ExperimentConfig& cfg, const DenoiseTask& t, const AudioBuffer& noisy,
                          const std::optional<vad::VadDecision>& decision) {
    json j{{"source", "noisy/" + t.entry->file + ".wav"},
           {"clean", "clean/" + t.entry->clean + ".wav"},
           {"target_snr_db", t.entry->target_snr_db},
           {"algorithm", t.algorithm()},
           {"variant", t.variant()},
           {"sample_rate", noisy.sample_rate},
           {"length", noisy.size()},
           {"seed", cfg.seed}};
    if (t.is_wavelet) {
        const auto& w = t.wavelet;
        j["method"] = "wavelet";
        j["params"] = {{"family", wavelet::to_string(w.family)}, {"kind", wavelet::to_string(w.kind)},
                       {"levels", w.levels},                     {"threshold", wavelet::to_string(w.method)},
                       {"mode", wavelet::to_string(w.mode)},     {"per_band", w.per_band}};
    } else {
        j["method"] = "adaptive";
        j["params"] = optimizer_json(t.optimizer);
        j["reference"] = t.mode == adaptive::ReferenceMode::external_reference ? "external" : "vad";
        if (decision) {
            const vad::VadParams vp;
            j["vad"] = {{"feature", vad::to_string(t.feature)}, {"frame_len", vp.frame_len},
                        {"hop", vp.hop},                        {"noise_init_frames", vp.noise_init_frames},
                        {"k_sigma", vp.k_sigma},                {"smoothing", vp.smoothing},
                        {"n_cepstral", vp.n_cepstral},          {"frames", decision->size()},
                        {"voiced_frames", decision->voiced_count()}};
        }
    }
    return j;
}

inline int cmd_denoise(const ExperimentConfig& cfg, Method method, std::ostream& log = std::cerr) {
    std::vector<ManifestEntry> manifest;
    try {
        manifest = read_manifest(cfg.manifest_path());
        fs::create_directories(cfg.denoised_out());
    } catch (const std::exception& e) {
        log << "denoise: " << e.what() << " (run `mix` first)\n";
        return kFatal;
    }
    const auto tasks = plan_denoise(cfg, method, manifest);
    if (tasks.empty()) {
        log << "denoise: the selected grid is empty\n";
        return kFatal;
    }

    Failures failures;
    std::atomic<std::size_t> done{0};
    run_parallel(tasks.size(), cfg.jobs, [&](std::size_t i) {
        const DenoiseTask& t = tasks[i];
        const std::string name = output_name(t.entry->file, t.algorithm(), t.variant());
        try {
            const AudioBuffer noisy = read_wav(cfg.noisy_out() / (t.entry->file + ".wav"));
            AudioBuffer out;
            std::optional<vad::VadDecision> decision;
            if (t.is_wavelet) {
                out = wavelet::denoise_wavelet(noisy, t.wavelet);
            } else if (t.mode == adaptive::ReferenceMode::external_reference) {
                const AudioBuffer ref = read_wav(cfg.noise_out() / (t.entry->file + ".wav"));
                out = adaptive::denoise_adaptive(noisy, t.optimizer, {}, t.mode, ref);
            } else {
                vad::VadParams vp;
                vp.feature = t.feature;
                decision = vad::detect(noisy, vp);
                out = adaptive::denoise_adaptive(noisy, t.optimizer, *decision, t.mode);
            }
            write_wav(out, cfg.denoised_out() / (name + ".wav"));
            std::ofstream(cfg.denoised_out() / (name + ".json")) << task_metadata(cfg, t, noisy, decision).dump(2) << '\n';
            ++done;
        } catch (const std::exception& e) {
            failures.add(name + ": " + e.what());
        }
    });
    std::sort(failures.items.begin(), failures.items.end());
    return summarize(log, "denoise", done, failures);
}

// --------------------------------------------------------------------- eval

inline const std::vector<std::string>& results_header() {
    static const std::vector<std::string> h{"file",           "algorithm",      "variant",   "input_snr_db",
                                            "output_snr_db",  "improvement_db", "segsnr_db", "lag"};
    return h;
}

inline std::vector<std::string> result_row(const metrics::MetricReport& r) {
    return {r.file, r.algorithm, r.variant, fmt(r.input_snr_db), fmt(r.output_snr_db), fmt(r.improvement_db),
            fmt(r.segsnr_db), std::to_string(r.lag)};
}

inline std::vector<metrics::MetricReport> read_results(const fs::path& path) {
    const auto t = csv::read(path);
    std::vector<std::size_t> cols;
    for (const auto& name : results_header()) cols.push_back(t.column(name));
    std::vector<metrics::MetricReport> out;
    for (const auto& r : t.rows) {
        metrics::MetricReport m;
        m.file = r[cols[0]];
        m.algorithm = r[cols[1]];
        m.variant = r[cols[2]];
        m.input_snr_db = parse_double(r[cols[3]]);
        m.output_snr_db = parse_double(r[cols[4]]);
        m.improvement_db = parse_double(r[cols[5]]);
        m.segsnr_db = parse_double(r[cols[6]]);
        m.lag = std::stoll(r[cols[7]]);
        out.push_back(std::move(m));
    }
    return out;
}

inline int cmd_eval(const ExperimentConfig& cfg, std::ostream& log = std::cerr) {
    std::map<std::string, ManifestEntry> by_file;
    std::vector<fs::path> outputs;
    try {
        for (auto& e : read_manifest(cfg.manifest_path())) by_file[e.file] = e;
        outputs = list_wavs(cfg.denoised_out());
    } catch (const std::exception& e) {
        log << "eval: " << e.what() << '\n';
        return kFatal;
    }

    Failures failures;
    std::vector<std::optional<metrics::MetricReport>> rows(outputs.size());
    run_parallel(outputs.size(), cfg.jobs, [&](std::size_t i) {
        const std::string name = outputs[i].stem().string();
        try {
            const auto key = parse_output_name(name);
            if (!key) throw InvalidArgument("name does not follow <stem>__<algorithm>__<variant>");
            const auto it = by_file.find(key->noisy_stem);
            if (it == by_file.end()) throw InvalidArgument("no manifest entry for '" + key->noisy_stem + "'");
            const fs::path clean_path = cfg.clean_out() / (it->second.clean + ".wav");
            const fs::path noisy_path = cfg.noisy_out() / (key->noisy_stem + ".wav");
            for (const auto& p : {clean_path, noisy_path})
                if (!fs::exists(p)) throw InvalidArgument("missing counterpart " + p.string());
            auto r = metrics::snr_improvement(read_wav(clean_path), read_wav(noisy_path), read_wav(outputs[i]));
            r.file = key->noisy_stem;
            r.algorithm = key->algorithm;
            r.variant = key->variant;
            rows[i] = std::move(r);
        } catch (const std::exception& e) {
            failures.add(outputs[i].filename().string() + ": " + e.what());
        }
    });

    std::ostringstream out;
    csv::write_row(out, results_header());
    std::size_t written = 0;
    for (const auto& r : rows)
        if (r) {
            csv::write_row(out, result_row(*r));
            ++written;
        }
    try {
        csv::write_atomic(cfg.results_path(), out.str());
    } catch (const std::exception& e) {
        log << "eval: " << e.what() << '\n';
        return kFatal;
    }
    std::sort(failures.items.begin(), failures.items.end());
    return summarize(log, "eval", written, failures);
}

// ------------------------------------------------------------------- report

struct GroupKey {
    std::string algorithm;
    std::string variant;
    double target_snr_db = 0.0;

    auto operator<=>(const GroupKey&) const = default;
};

struct GroupSummary {
    GroupKey key;
    std::size_t n = 0;
    double input_snr_db = 0.0;
    double output_snr_db = 0.0;
    double improvement_db = 0.0;
    double segsnr_db = 0.0;
    std::size_t pesq_n = 0;
    double pesq = 0.0;
};

/// PESQ scores keyed by (file, algorithm, variant).
using PesqTable = std::map<std::tuple<std::string, std::string, std::string>, double>;

inline PesqTable read_pesq(const fs::path& path) {
    const auto t = csv::read(path);
    const auto cf = t.column("file"), ca = t.column("algorithm"), cv = t.column("variant"), cp = t.column("pesq");
    PesqTable out;
    for (const auto& r : t.rows) out[{r[cf], r[ca], r[cv]}] = parse_double(r[cp]);
    return out;
}

/// Means per (algorithm, variant, target). The target comes from the
/// "_snr<k>" file suffix, or the rounded input SNR when absent.
inline std::vector<GroupSummary> group_results(const std::vector<metrics::MetricReport>& rows,
                                               const PesqTable* pesq = nullptr) {
    if (rows.empty()) throw InvalidArgument("report: no result rows");
    std::map<GroupKey, GroupSummary> groups;
    for (const auto& r : rows) {
        const double target = target_from_stem(r.file).value_or(std::round(r.input_snr_db));
        GroupKey key{r.algorithm, r.variant, target};
        auto& g = groups[key];
        g.key = key;
        g.n += 1;
        g.input_snr_db += r.input_snr_db;
        g.output_snr_db += r.output_snr_db;
        g.improvement_db += r.improvement_db;
        g.segsnr_db += r.segsnr_db;
        if (pesq)
            if (auto it = pesq->find({r.file, r.algorithm, r.variant}); it != pesq->end()) {
                g.pesq += it->second;
                g.pesq_n += 1;
            }
    }
    std::vector<GroupSummary> out;
    for (auto& [_, g] : groups) {
        const double n = static_cast<double>(g.n);
        g.input_snr_db /= n;
        g.output_snr_db /= n;
        g.improvement_db /= n;
        g.segsnr_db /= n;
        if (g.pesq_n) g.pesq /= static_cast<double>(g.pesq_n);
        out.push_back(g);
    }
    return out;
}

inline std::string report_csv(const std::vector<GroupSummary>& groups, bool with_pesq) {
    std::ostringstream os;
    std::vector<std::string> header{"algorithm",     "variant",        "target_snr_db", "n",
                                    "input_snr_db",  "output_snr_db",  "improvement_db", "segsnr_db"};
    if (with_pesq) {
        header.push_back("pesq");
        header.push_back("pesq_n");
    }
    csv::write_row(os, header);
    for (const auto& g : groups) {
        std::vector<std::string> row{g.key.algorithm,    g.key.variant,        fmt(g.key.target_snr_db), std::to_string(g.n),
                                     fmt(g.input_snr_db), fmt(g.output_snr_db), fmt(g.improvement_db),  fmt(g.segsnr_db)};
        if (with_pesq) {
            row.push_back(g.pesq_n ? fmt(g.pesq) : "");
            row.push_back(std::to_string(g.pesq_n));
        }
        csv::write_row(os, row);
    }
    return os.str();
}

/// Mean improvement table: one line per (algorithm, variant), one column per target.
inline void print_summary(const std::vector<GroupSummary>& groups, std::ostream& os) {
    std::vector<double> targets;
    std::map<std::pair<std::string, std::string>, std::map<double, double>> table;
    for (const auto& g : groups) {
        targets.push_back(g.key.target_snr_db);
        table[{g.key.algorithm, g.key.variant}][g.key.target_snr_db] = g.improvement_db;
    }
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    os << "mean SNR improvement (dB) by input SNR target\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s %-28s", "algorithm", "variant");
    os << buf;
    for (double t : targets) {
        std::snprintf(buf, sizeof buf, " %8s", (fmt(t) + " dB").c_str());
        os << buf;
    }
    os << '\n';
    for (const auto& [key, row] : table) {
        std::snprintf(buf, sizeof buf, "%-10s %-28s", key.first.c_str(), key.second.c_str());
        os << buf;
        for (double t : targets) {
            if (auto it = row.find(t); it != row.end())
                std::snprintf(buf, sizeof buf, " %8.3f", it->second);
            else
                std::snprintf(buf, sizeof buf, " %8s", "-");
            os << buf;
        }
        os << '\n';
    }
}

inline int cmd_report(const fs::path& results, const fs::path& output, const std::optional<fs::path>& pesq_csv,
                      std::ostream& out = std::cout, std::ostream& log = std::cerr) {
    try {
        const auto rows = read_results(results);
        std::optional<PesqTable> pesq;
        if (pesq_csv) pesq = read_pesq(*pesq_csv);
        const auto groups = group_results(rows, pesq ? &*pesq : nullptr);
        csv::write_atomic(output, report_csv(groups, pesq.has_value()));
        print_summary(groups, out);
    } catch (const std::exception& e) {
        log << "report: " << e.what() << '\n';
        return kFatal;
    }
    return kOk;
}

}  // namespace denoise::bench
