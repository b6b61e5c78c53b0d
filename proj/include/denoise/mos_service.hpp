#pragma once

// Blinded MOS listening-test service. MosStore keeps sessions and ratings in
// an append-only JSONL event log and rebuilds its state by replaying it;
// MosService exposes the store over HTTP and serves the clip pool.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "denoise/error.hpp"
#include "denoise/metrics.hpp"

namespace denoise::mos {

namespace fs = std::filesystem;
using json = nlohmann::json;

class NotFound : public Error {
public:
    using Error::Error;
};

/// A rateable file and the condition it belongs to.
struct Clip {
    std::string file;  ///< name relative to the clip directory
    std::string algorithm;
    std::string variant;

    bool operator==(const Clip&) const = default;
};

/// Algorithm and variant from "<stem>__<algorithm>__<variant>.wav"; other
/// names count as their own algorithm.
inline Clip clip_from_file(const std::string& file) {
    const std::string stem = fs::path(file).stem().string();
    const auto b = stem.rfind("__");
    if (b != std::string::npos && b > 0) {
        const auto a = stem.rfind("__", b - 1);
        if (a != std::string::npos && a > 0 && a + 2 < b)
            return {file, stem.substr(a + 2, b - a - 2), stem.substr(b + 2)};
    }
    return {file, stem, ""};
}

inline std::vector<Clip> scan_clips(const fs::path& dir) {
    std::vector<Clip> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".wav") out.push_back(clip_from_file(e.path().filename().string()));
    }
    std::sort(out.begin(), out.end(), [](const Clip& a, const Clip& b) { return a.file < b.file; });
    return out;
}

struct BlindClip {
    std::string id;
    Clip clip;
};

struct Session {
    std::string id;
    std::string rater;
    std::uint64_t seed = 0;
    long long created_ms = 0;
    std::vector<BlindClip> playlist;
    /// Latest score per blinded id.
    std::map<std::string, int> scores;

    bool complete() const { return scores.size() == playlist.size(); }
};

struct State {
    std::map<std::string, Session> sessions;
    /// blinded id -> (session id, playlist index)
    std::map<std::string, std::pair<std::string, std::size_t>> clips;
    std::size_t events = 0;
    std::size_t rating_events = 0;
};

struct RatingAck {
    bool superseded = false;
    std::size_t seq = 0;  ///< position of the event in the log
};

inline long long now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

inline void check_score(int score) {
    if (score < 0 || score > 10) throw InvalidArgument("score must be an integer from 0 to 10, got " + std::to_string(score));
}

class MosStore {
public:
    /// Opens (creating if needed) the event log and replays it. `rng_seed`
    /// makes tokens and shuffles reproducible; otherwise they come from
    /// std::random_device.
    explicit MosStore(fs::path log_path, std::optional<std::uint64_t> rng_seed = std::nullopt)
        : path_(std::move(log_path)) {
        if (rng_seed) {
            rng_.seed(*rng_seed);
        } else {
            std::random_device rd;
            std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
            rng_.seed(seq);
        }
        if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
        auto state = std::make_shared<State>();
        replay(*state);
        fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw Error("cannot open MOS log " + path_.string());
        snapshot_ = std::move(state);
    }

    MosStore(const MosStore&) = delete;
    MosStore& operator=(const MosStore&) = delete;
    ~MosStore() {
        if (fd_ >= 0) ::close(fd_);
    }

    const fs::path& log_path() const noexcept { return path_; }

    /// Immutable view of the current state; safe to hold while writes continue.
    std::shared_ptr<const State> snapshot() const { return std::atomic_load(&snapshot_); }

    Session create_session(const std::string& rater, const std::vector<Clip>& pool) {
        if (pool.empty()) throw InvalidArgument("the clip pool is empty");
        if (rater.empty()) throw InvalidArgument("rater label must not be empty");
        std::lock_guard lock(write_mu_);
        Session s;
        s.id = token();
        s.rater = rater;
        s.seed = rng_();
        s.created_ms = now_ms();
        std::vector<Clip> order = pool;
        std::mt19937_64 shuffle_rng(s.seed);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (auto& c : order) s.playlist.push_back({token(), std::move(c)});

        json playlist = json::array();
        for (const auto& b : s.playlist)
            playlist.push_back({{"id", b.id}, {"file", b.clip.file}, {"algorithm", b.clip.algorithm}, {"variant", b.clip.variant}});
        const json event{{"type", "session"}, {"session_id", s.id}, {"rater", s.rater}, {"seed", s.seed},
                         {"created_ms", s.created_ms}, {"playlist", playlist}};
        commit(event);
        return s;
    }

    RatingAck record_rating(const std::string& session_id, const std::string& clip_id, int score,
                            std::optional<long long> client_ms = std::nullopt) {
        check_score(score);
        std::lock_guard lock(write_mu_);
        const auto current = snapshot();
        const auto it = current->sessions.find(session_id);
        if (it == current->sessions.end()) throw NotFound("unknown session '" + session_id + "'");
        const auto& s = it->second;
        if (std::none_of(s.playlist.begin(), s.playlist.end(), [&](const BlindClip& b) { return b.id == clip_id; }))
            throw NotFound("clip '" + clip_id + "' is not in this session's playlist");
        RatingAck ack;
        ack.superseded = s.scores.count(clip_id) > 0;
        ack.seq = current->events;
        json event{{"type", "rating"},    {"seq", ack.seq},     {"session_id", session_id}, {"clip_id", clip_id},
                   {"score", score},      {"server_ms", now_ms()}, {"supersedes", ack.superseded}};
        event["client_ms"] = client_ms ? json(*client_ms) : json(nullptr);
        commit(event);
        return ack;
    }

    /// Latest rating per (session, clip), unblinded.
    std::vector<metrics::MosRecord> active_ratings() const {
        const auto st = snapshot();
        std::vector<metrics::MosRecord> out;
        for (const auto& [id, s] : st->sessions)
            for (const auto& b : s.playlist)
                if (auto it = s.scores.find(b.id); it != s.scores.end())
                    out.push_back({s.rater, b.clip.file, b.clip.algorithm, b.clip.variant, it->second, s.created_ms});
        return out;
    }

    std::vector<metrics::MosSummary> report() const {
        const auto records = active_ratings();
        if (records.empty()) throw NotFound("no ratings recorded yet");
        return metrics::mos_aggregate(records);
    }

private:
    std::string token() {
        char buf[33];
        std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                      static_cast<unsigned long long>(rng_()));
        return buf;
    }

    static void apply(State& st, const json& e) {
        const std::string type = e.at("type").get<std::string>();
        if (type == "session") {
            Session s;
            s.id = e.at("session_id").get<std::string>();
            s.rater = e.at("rater").get<std::string>();
            s.seed = e.at("seed").get<std::uint64_t>();
            s.created_ms = e.at("created_ms").get<long long>();
            for (const auto& b : e.at("playlist")) {
                s.playlist.push_back({b.at("id").get<std::string>(),
                                      {b.at("file").get<std::string>(), b.at("algorithm").get<std::string>(),
                                       b.at("variant").get<std::string>()}});
                st.clips[s.playlist.back().id] = {s.id, s.playlist.size() - 1};
            }
            st.sessions[s.id] = std::move(s);
        } else if (type == "rating") {
            const int score = e.at("score").get<int>();
            check_score(score);
            auto& s = st.sessions.at(e.at("session_id").get<std::string>());
            s.scores[e.at("clip_id").get<std::string>()] = score;
            st.rating_events += 1;
        } else {
            throw InvalidArgument("unknown event type '" + type + "'");
        }
        st.events += 1;
    }

    /// Replays the log. A torn final line (no newline, unparsable) is cut off;
    /// damage anywhere else is fatal.
    void replay(State& st) {
        if (!fs::exists(path_)) return;
        std::ifstream in(path_, std::ios::binary);
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::size_t pos = 0, line_no = 0;
        while (pos < content.size()) {
            const auto nl = content.find('\n', pos);
            const std::string line = content.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
            ++line_no;
            if (!line.empty()) {
                try {
                    apply(st, json::parse(line));
                } catch (const std::exception& ex) {
                    if (nl == std::string::npos) {
                        fs::resize_file(path_, pos);
                        break;
                    }
                    throw Error("MOS log " + path_.string() + " line " + std::to_string(line_no) + ": " + ex.what());
                }
            }
            if (nl == std::string::npos) break;
            pos = nl + 1;
        }
    }

    /// Appends and fsyncs the event, then publishes the new state. Caller holds write_mu_.
    void commit(const json& event) {
        auto next = std::make_shared<State>(*snapshot());
        apply(*next, event);
        const std::string line = event.dump() + "\n";
        std::size_t off = 0;
        while (off < line.size()) {
            const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw Error("MOS log write failed");
            }
            off += static_cast<std::size_t>(n);
        }
        if (::fsync(fd_) != 0) throw Error("MOS log fsync failed");
        std::atomic_store(&snapshot_, std::shared_ptr<const State>(std::move(next)));
    }

    fs::path path_;
    int fd_ = -1;
    std::mutex write_mu_;
    std::mt19937_64 rng_;
    std::shared_ptr<const State> snapshot_;
};

inline std::string report_csv(const std::vector<metrics::MosSummary>& rows) {
    std::ostringstream os;
    os << "algorithm,variant,mos,n,stddev\n";
    char buf[64];
    for (const auto& r : rows) {
        os << r.algorithm << ',' << r.variant << ',';
        std::snprintf(buf, sizeof buf, "%.6f,%zu,%.6f\n", r.mean, r.n, r.stddev);
        os << buf;
    }
    return os.str();
}

/// Client view of a session: blinded ids only.
inline json session_json(const Session& s) {
    json playlist = json::array(), submitted = json::array();
    for (const auto& b : s.playlist) {
        playlist.push_back(b.id);
        if (s.scores.count(b.id)) submitted.push_back(b.id);
    }
    return json{{"session_id", s.id}, {"rater", s.rater},          {"playlist", playlist},
                {"submitted", submitted}, {"complete", s.complete()}, {"created_ms", s.created_ms}};
}

struct ServiceOptions {
    fs::path clips_dir;
    fs::path data_dir;
    std::optional<fs::path> static_dir;
    /// Token required by GET /api/report; empty disables the report endpoint.
    std::string admin_token;
    std::optional<std::uint64_t> rng_seed;
};

class MosService {
public:
    explicit MosService(ServiceOptions opts)
        : opts_(std::move(opts)), store_(opts_.data_dir / "mos_events.jsonl", opts_.rng_seed), pool_(scan_clips(opts_.clips_dir)) {
        routes();
    }

    MosStore& store() noexcept { return store_; }
    const std::vector<Clip>& pool() const noexcept { return pool_; }
    httplib::Server& http() noexcept { return server_; }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    static void reply_error(httplib::Response& res, int status, const std::string& msg) {
        res.status = status;
        res.set_content(json{{"error", msg}}.dump(), "application/json");
    }

    static void reply_json(httplib::Response& res, const json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    /// Runs a handler, mapping store errors to HTTP statuses.
    template <class F>
    static void guarded(httplib::Response& res, F&& f) {
        try {
            f();
        } catch (const NotFound& e) {
            reply_error(res, 404, e.what());
        } catch (const InvalidArgument& e) {
            reply_error(res, 400, e.what());
        } catch (const json::exception& e) {
            reply_error(res, 400, std::string("malformed request: ") + e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    }

    bool admin(const httplib::Request& req) const {
        if (opts_.admin_token.empty()) return false;
        const std::string auth = req.get_header_value("Authorization");
        if (auth == "Bearer " + opts_.admin_token) return true;
        return req.has_param("token") && req.get_param_value("token") == opts_.admin_token;
    }

    void routes() {
        server_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json body = req.body.empty() ? json::object() : json::parse(req.body);
                if (!body.is_object() || !body.contains("rater") || !body["rater"].is_string())
                    throw InvalidArgument("body must be {\"rater\": string}");
                if (pool_.empty()) {
                    reply_error(res, 503, "the clip pool is empty");
                    return;
                }
                reply_json(res, session_json(store_.create_session(body["rater"].get<std::string>(), pool_)), 201);
            });
        });

        server_.Get(R"(/api/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto st = store_.snapshot();
                const auto it = st->sessions.find(req.matches[1]);
                if (it == st->sessions.end()) throw NotFound("unknown session");
                reply_json(res, session_json(it->second));
            });
        });

        server_.Get(R"(/api/clips/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const auto st = store_.snapshot();
                const auto it = st->clips.find(req.matches[1]);
                if (it == st->clips.end()) throw NotFound("unknown clip");
                const auto& clip = st->sessions.at(it->second.first).playlist.at(it->second.second).clip;
                std::ifstream in(opts_.clips_dir / clip.file, std::ios::binary);
                if (!in) throw NotFound("clip file is no longer available");
                std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
                res.set_header("Cache-Control", "no-store");
                res.set_content(std::move(bytes), "audio/wav");
            });
        });

        server_.Post("/api/ratings", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                const json body = json::parse(req.body);
                if (!body.is_object() || !body.contains("session_id") || !body.contains("clip_id") || !body.contains("score"))
                    throw InvalidArgument("body must be {session_id, clip_id, score}");
                const json& score = body["score"];
                if (!score.is_number_integer()) throw InvalidArgument("score must be an integer from 0 to 10");
                const auto value = score.get<long long>();
                if (value < 0 || value > 10) throw InvalidArgument("score must be an integer from 0 to 10");
                std::optional<long long> client_ms;
                if (body.contains("client_ts") && body["client_ts"].is_number_integer())
                    client_ms = body["client_ts"].get<long long>();
                const auto ack = store_.record_rating(body["session_id"].get<std::string>(), body["clip_id"].get<std::string>(),
                                                      static_cast<int>(value), client_ms);
                reply_json(res, json{{"ok", true}, {"superseded", ack.superseded}});
            });
        });

        server_.Get("/api/report", [this](const httplib::Request& req, httplib::Response& res) {
            if (!admin(req)) {
                reply_error(res, opts_.admin_token.empty() ? 403 : 401, "admin token required");
                return;
            }
            guarded(res, [&] { res.set_content(report_csv(store_.report()), "text/csv"); });
        });

        if (opts_.static_dir && fs::is_directory(*opts_.static_dir)) server_.set_mount_point("/", opts_.static_dir->string());
    }

    ServiceOptions opts_;
    MosStore store_;
    std::vector<Clip> pool_;
    httplib::Server server_;
};

}  // namespace denoise::mos
