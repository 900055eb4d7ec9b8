#include "trialsupply/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

namespace trialsupply {

namespace {

HttpResponse json_response(int status, const Json& body) { return {status, "application/json", body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
    return json_response(status, Json{{"error", message}});
}

Json issues_json(const std::vector<ValidationIssue>& issues) {
    Json a = Json::array();
    for (const auto& i : issues) a.push_back(Json{{"field", i.field}, {"value", i.value}, {"rule", i.rule}});
    return a;
}

long long whole(double v) { return static_cast<long long>(std::ceil(v - 1e-9)); }

Json dose_row(const Eigen::Ref<const Eigen::VectorXd>& v) {
    Json a = Json::array();
    for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(whole(v[k]));
    return a;
}

Json doses(const Eigen::MatrixXd& m) {
    Json a = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(dose_row(m.row(r).transpose()));
    return a;
}

Json breakdown_json(const CostBreakdown& b) {
    return Json{{"production", b.production},     {"recruitment", b.recruitment},
                {"shipment", b.shipment},         {"holding_dc", b.holding_dc},
                {"holding_sites", b.holding_sites}, {"shortage_penalty", b.shortage_penalty},
                {"disposal", b.disposal},         {"total", b.total}};
}

Json optimization_json(const OptimizationRecord& r) {
    return Json{{"applied", r.applied},
                {"forced", r.forced},
                {"trigger", doses(r.trigger)},
                {"ceiling", doses(r.ceiling)},
                {"predicted_remaining_cost", r.predicted_remaining_cost},
                {"shortage_probability", r.shortage_probability},
                {"breakdown", breakdown_json(r.breakdown)},
                {"scenarios", r.scenarios},
                {"skipped", r.skipped},
                {"failed", r.failed},
                {"note", r.note}};
}

int monitor_status(MonitorError::Code c) {
    switch (c) {
        case MonitorError::Code::out_of_order: return 409;
        case MonitorError::Code::terminated: return 410;
        case MonitorError::Code::invalid_observation:
        case MonitorError::Code::capacity: return 422;
        case MonitorError::Code::replay_mismatch: return 500;
    }
    return 500;
}

std::string new_id() {
    static std::mutex m;
    static std::mt19937_64 eng{std::random_device{}()};
    std::lock_guard lock(m);
    std::ostringstream os;
    os << std::hex << std::setfill('0') << std::setw(16) << eng();
    return os.str();
}

std::vector<std::string> segments(const std::string& path) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : path) {
        if (c == '/') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Eigen::MatrixXd matrix_from(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw FormatError(field, "expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw FormatError(field, "expected rows of " + std::to_string(cols) + " numbers");
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!row[static_cast<std::size_t>(c)].is_number()) throw FormatError(field, "expected numbers");
            m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
        }
    }
    return m;
}

}  // namespace

Json session_state_json(const MonitorSession& s) {
    int checkpoint = 1;
    for (int t : s.model.trial.optimization_times)
        if (t <= s.clock) ++checkpoint;
    Json boxes = Json::array();
    for (Eigen::Index k = 0; k < s.trajectory.pre_boxes.size(); ++k) boxes.push_back(s.trajectory.pre_boxes[k]);
    Json state{{"week", s.clock},
               {"checkpoint", checkpoint},
               {"terminated", s.terminated()},
               {"enrollment_mean", s.dists.enrollment_mean},
               {"production", dose_row(s.decisions.production)},
               {"dc_inventory", dose_row(s.state.dc)},
               {"site_inventory", doses(s.state.site)},
               {"trigger", doses(s.decisions.trigger)},
               {"ceiling", doses(s.decisions.ceiling)},
               {"pre_trial_shipment",
                Json{{"doses", doses(s.trajectory.pre_shipment)},
                     {"boxes", boxes}}}};
    state["last_optimization"] = s.last_optimization ? optimization_json(*s.last_optimization) : Json(nullptr);
    return state;
}

struct SessionService::Entry {
    std::string id;
    RunSpec spec;
    std::string log_path;

    std::mutex mutex;  // serializes commands; guards everything below up to the snapshot
    MonitorSession session;
    std::map<std::string, HttpResponse> idempotent;

    std::mutex snapshot_mutex;
    std::shared_ptr<const std::string> state_text;
    std::shared_ptr<const std::string> trajectory_text;

    std::mutex jobs_mutex;
    std::map<std::string, std::shared_future<HttpResponse>> jobs;
    int next_job = 0;

    void publish() {
        Json state = session_state_json(session);
        state["id"] = id;
        auto text = std::make_shared<const std::string>(state.dump());
        std::ostringstream csv;
        write_trajectory_csv(csv, session.trajectory);
        auto traj = std::make_shared<const std::string>(csv.str());
        std::lock_guard lock(snapshot_mutex);
        state_text = std::move(text);
        trajectory_text = std::move(traj);
    }

    std::pair<std::shared_ptr<const std::string>, std::shared_ptr<const std::string>> snapshot() {
        std::lock_guard lock(snapshot_mutex);
        return {state_text, trajectory_text};
    }

    void append(const std::vector<std::string>& lines) const {
        if (log_path.empty() || lines.empty()) return;
        std::ofstream f(log_path, std::ios::app | std::ios::binary);
        for (const auto& l : lines) f << l << "\n";
        f.flush();
        if (!f) throw std::runtime_error("cannot append to " + log_path);
    }

    void append_events_from(std::size_t first) const {
        std::vector<std::string> lines;
        for (std::size_t k = first; k < session.events.size(); ++k) lines.push_back(event_line(session.events[k]));
        append(lines);
    }
};

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)) {
    if (!options_.data_dir.empty()) std::filesystem::create_directories(options_.data_dir);
}

SessionService::~SessionService() {
    std::vector<std::shared_ptr<Entry>> all;
    {
        std::shared_lock lock(sessions_mutex_);
        for (auto& [id, e] : sessions_) all.push_back(e);
    }
    for (auto& e : all) {
        std::lock_guard lock(e->jobs_mutex);
        for (auto& [token, job] : e->jobs) job.wait();
    }
}

std::shared_ptr<SessionService::Entry> SessionService::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

HttpResponse SessionService::handle(const HttpRequest& r) {
    if (!options_.token.empty()) {
        const auto it = r.headers.find("authorization");
        if (it == r.headers.end() || it->second != "Bearer " + options_.token)
            return error_response(401, "missing or wrong bearer token");
    }
    const auto seg = segments(r.path);
    if (seg.empty() || seg[0] != "sessions") return error_response(404, "no such route");
    try {
        if (seg.size() == 1) {
            if (r.method == "POST") return create(r);
            return error_response(405, "method not allowed");
        }
        const auto entry = find(seg[1]);
        if (!entry) return error_response(404, "unknown session " + seg[1]);
        if (seg.size() == 2 && r.method == "GET") return get_state(*entry);
        if (seg.size() == 3 && seg[2] == "observations" && r.method == "POST") return post_observation(*entry, r);
        if (seg.size() == 3 && seg[2] == "optimize" && r.method == "POST") return post_optimize(*entry);
        if (seg.size() == 4 && seg[2] == "optimize" && r.method == "GET") return poll_optimize(*entry, seg[3]);
        if (seg.size() == 3 && seg[2] == "whatif" && r.method == "GET") return whatif(*entry, r);
        if (seg.size() == 3 && seg[2] == "trajectory" && r.method == "GET") return trajectory(*entry);
        return error_response(404, "no such route");
    } catch (const Json::exception& e) {
        return error_response(400, std::string("malformed JSON: ") + e.what());
    } catch (const FormatError& e) {
        return json_response(422, Json{{"error", e.what()},
                                       {"errors", Json::array({Json{{"field", e.field()}, {"rule", e.what()}}})}});
    } catch (const ConfigError& e) {
        return json_response(422, Json{{"error", "invalid configuration"}, {"errors", issues_json(e.report().errors)}});
    } catch (const MonitorError& e) {
        return error_response(monitor_status(e.code()), e.what());
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
}

HttpResponse SessionService::create(const HttpRequest& r) {
    const Json body = Json::parse(r.body);
    if (!body.is_object()) throw FormatError("", "expected an object");
    for (auto it = body.begin(); it != body.end(); ++it) {
        if (it.key() != "runspec" && it.key() != "decisions" && it.key() != "seed")
            throw FormatError(it.key(), "unknown field");
    }
    if (!body.contains("runspec")) throw FormatError("runspec", "missing required field");
    RunSpec spec = runspec_from_json(body["runspec"]);
    if (body.contains("seed")) {
        if (!body["seed"].is_number_unsigned()) throw FormatError("seed", "expected a non-negative integer");
        spec.seed = body["seed"].get<Seed>();
    }
    DecisionVars decisions;
    if (body.contains("decisions")) {
        decisions = decisions_from_json(body["decisions"], spec.model);
        const auto problems = check_decisions(decisions, spec.model);
        if (!problems.empty()) {
            Json errors = Json::array();
            for (const auto& p : problems) errors.push_back(Json{{"field", "decisions"}, {"rule", p}});
            return json_response(422, Json{{"error", "invalid decisions"}, {"errors", errors}});
        }
    } else {
        try {
            decisions = plan(spec.dists, spec.model, spec.planner, spec.seed).decisions;
        } catch (const PlanningFailure& e) {
            return error_response(503, e.what());
        }
    }

    auto entry = std::make_shared<Entry>();
    entry->id = new_id();
    entry->spec = spec;
    entry->session = start_session(decisions, spec.dists, spec.model, spec.monitor, spec.seed);
    if (!options_.data_dir.empty()) {
        entry->log_path = (std::filesystem::path(options_.data_dir) / (entry->id + ".jsonl")).string();
        const Json header{{"session", entry->id},
                          {"runspec", runspec_to_json(spec)},
                          {"decisions", decisions_to_json(decisions)}};
        entry->append({header.dump()});
    }
    entry->publish();
    {
        std::unique_lock lock(sessions_mutex_);
        sessions_[entry->id] = entry;
    }
    Json state = Json::parse(*entry->snapshot().first);
    return json_response(201, Json{{"id", entry->id}, {"state", state}});
}

HttpResponse SessionService::get_state(Entry& e) { return {200, "application/json", *e.snapshot().first}; }

HttpResponse SessionService::trajectory(Entry& e) { return {200, "text/csv", *e.snapshot().second}; }

HttpResponse SessionService::post_observation(Entry& e, const HttpRequest& r) {
    const auto key_it = r.headers.find("idempotency-key");
    const std::string key = key_it == r.headers.end() ? "" : key_it->second;

    std::lock_guard lock(e.mutex);
    if (!key.empty()) {
        const auto it = e.idempotent.find(key);
        if (it != e.idempotent.end()) return it->second;
    }

    HttpResponse response;
    try {
        const WeeklyObservation obs = observation_from_json(Json::parse(r.body));
        const std::size_t before = e.session.events.size();
        const AdvanceResult res = advance(e.session, obs);
        e.append_events_from(before);
        e.publish();

        Json shipments = Json::array();
        for (const auto& s : res.shipments) {
            shipments.push_back(Json{{"site", s.site + 1}, {"doses", dose_row(s.doses)}, {"boxes", s.boxes},
                                     {"reduced", s.reduced}});
        }
        Json shortages = Json::array();
        for (const auto& s : res.shortages) {
            shortages.push_back(Json{{"site", s.site + 1}, {"treatment", s.treatment + 1}, {"week", s.week},
                                     {"level", s.level}});
        }
        Json body{{"week", res.week},     {"shipments", shipments}, {"emergency", res.emergency},
                  {"shortages", shortages}, {"terminated", res.terminated}};
        body["reestimation"] = res.reestimation ? Json{{"previous_mean", res.reestimation->previous_mean},
                                                       {"new_mean", res.reestimation->new_mean},
                                                       {"p_value", res.reestimation->p_value},
                                                       {"changed", res.reestimation->changed}}
                                                : Json(nullptr);
        body["optimization"] = res.optimization ? optimization_json(*res.optimization) : Json(nullptr);
        Json state = Json::parse(*e.snapshot().first);
        body["state"] = state;
        response = json_response(200, body);
    } catch (const MonitorError& err) {
        response = error_response(monitor_status(err.code()), err.what());
    } catch (const FormatError& err) {
        response = json_response(422, Json{{"error", err.what()},
                                           {"errors", Json::array({Json{{"field", err.field()}, {"rule", err.what()}}})}});
    } catch (const Json::exception& err) {
        response = error_response(400, std::string("malformed JSON: ") + err.what());
    }

    if (!key.empty()) {
        e.idempotent[key] = response;
        e.append({Json{{"idempotency_key", key},
                       {"status", response.status},
                       {"content_type", response.content_type},
                       {"body", response.body}}
                      .dump()});
    }
    return response;
}

HttpResponse SessionService::post_optimize(Entry& e) {
    if (Json::parse(*e.snapshot().first)["terminated"].get<bool>()) return error_response(410, "session has terminated");
    Entry* entry = &e;
    std::shared_future<HttpResponse> job = std::async(std::launch::async, [entry]() {
        std::lock_guard lock(entry->mutex);
        if (entry->session.terminated()) return error_response(410, "session has terminated");
        const std::size_t before = entry->session.events.size();
        const OptimizationRecord rec = reoptimize(entry->session, true);
        entry->append_events_from(before);
        entry->publish();
        const bool init_failed = !rec.applied && rec.failed > 0 && rec.scenarios == 0;
        return json_response(init_failed ? 503 : 200, optimization_json(rec));
    }).share();

    std::string token;
    {
        std::lock_guard lock(e.jobs_mutex);
        token = std::to_string(++e.next_job);
        e.jobs[token] = job;
    }
    if (job.wait_for(options_.optimize_wait) == std::future_status::ready) return job.get();
    return json_response(202, Json{{"token", token}, {"poll", "/sessions/" + e.id + "/optimize/" + token}});
}

HttpResponse SessionService::poll_optimize(Entry& e, const std::string& token) {
    std::shared_future<HttpResponse> job;
    {
        std::lock_guard lock(e.jobs_mutex);
        const auto it = e.jobs.find(token);
        if (it == e.jobs.end()) return error_response(404, "unknown optimization token " + token);
        job = it->second;
    }
    if (job.wait_for(std::chrono::milliseconds(0)) != std::future_status::ready)
        return json_response(202, Json{{"token", token}, {"poll", "/sessions/" + e.id + "/optimize/" + token}});
    return job.get();
}

HttpResponse SessionService::whatif(Entry& e, const HttpRequest& r) {
    MonitorSession copy;
    {
        std::lock_guard lock(e.mutex);
        copy = e.session;
    }
    if (copy.terminated()) return error_response(410, "session has terminated");
    const Eigen::Index S = copy.model.sites();
    const Eigen::Index I = copy.model.treatments();
    Thresholds candidate{copy.decisions.trigger, copy.decisions.ceiling};
    const auto number = [&](const std::string& name) -> std::optional<double> {
        const auto it = r.query.find(name);
        if (it == r.query.end()) return std::nullopt;
        try {
            std::size_t used = 0;
            const double v = std::stod(it->second, &used);
            if (used != it->second.size()) throw std::invalid_argument(name);
            return v;
        } catch (const std::exception&) {
            throw FormatError(name, "expected a number");
        }
    };
    if (const auto it = r.query.find("trigger"); it != r.query.end())
        candidate.trigger = matrix_from(Json::parse(it->second), S, I, "trigger");
    if (const auto it = r.query.find("ceiling"); it != r.query.end())
        candidate.ceiling = matrix_from(Json::parse(it->second), S, I, "ceiling");
    if (const auto v = number("trigger_scale")) candidate.trigger *= *v;
    if (const auto v = number("ceiling_scale")) candidate.ceiling *= *v;
    int paths = copy.settings.evaluation_paths;
    if (const auto v = number("paths")) paths = static_cast<int>(*v);
    if (paths < 1) throw FormatError("paths", "must be >= 1");
    if ((candidate.trigger.array() < 0).any() || (candidate.ceiling.array() < 0).any())
        throw FormatError("trigger", "thresholds must be non-negative");

    const WhatIf w = what_if(copy, candidate, paths);
    return json_response(200, Json{{"week", copy.clock},
                                   {"trigger", doses(candidate.trigger)},
                                   {"ceiling", doses(candidate.ceiling)},
                                   {"cost", w.cost},
                                   {"shortage_probability", w.shortage_probability},
                                   {"paths", w.paths},
                                   {"breakdown", breakdown_json(w.mean)}});
}

std::size_t SessionService::recover() {
    if (options_.data_dir.empty()) return 0;
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(options_.data_dir))
        if (f.path().extension() == ".jsonl") files.push_back(f.path());
    std::sort(files.begin(), files.end());

    std::size_t count = 0;
    for (const auto& file : files) {
        try {
            std::ifstream in(file, std::ios::binary);
            std::string line;
            if (!std::getline(in, line)) continue;
            const Json header = Json::parse(line);
            auto entry = std::make_shared<Entry>();
            entry->id = header.at("session").get<std::string>();
            entry->spec = runspec_from_json(header.at("runspec"));
            entry->log_path = file.string();
            const DecisionVars decisions = decisions_from_json(header.at("decisions"), entry->spec.model);
            std::vector<Event> events;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const Json j = Json::parse(line);
                if (j.contains("idempotency_key")) {
                    entry->idempotent[j["idempotency_key"].get<std::string>()] =
                        HttpResponse{j["status"].get<int>(), j["content_type"].get<std::string>(),
                                     j["body"].get<std::string>()};
                } else {
                    events.push_back(event_from_json(j));
                }
            }
            const auto& spec = entry->spec;
            entry->session = replay(start_session(decisions, spec.dists, spec.model, spec.monitor, spec.seed), events);
            entry->publish();
            std::unique_lock lock(sessions_mutex_);
            sessions_[entry->id] = entry;
            ++count;
        } catch (const std::exception& e) {
            std::cerr << "skipping " << file.string() << ": " << e.what() << "\n";
        }
    }
    return count;
}

struct HttpFrontend::Impl {
    SessionService& service;
    httplib::Server server;
    std::thread thread;

    explicit Impl(SessionService& s) : service(s) {}
};

HttpFrontend::HttpFrontend(SessionService& service) : impl_(std::make_unique<Impl>(service)) {
    const auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        HttpRequest r;
        r.method = req.method;
        r.path = req.path;
        r.body = req.body;
        for (const auto& [name, value] : req.headers) {
            std::string lower = name;
            std::transform(lower.begin(), lower.end(), lower.begin(),
                           [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            r.headers[lower] = value;
        }
        for (const auto& [name, value] : req.params) r.query[name] = value;
        const HttpResponse out = impl_->service.handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    impl_->server.Get(".*", handler);
    impl_->server.Post(".*", handler);
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) return -1;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void HttpFrontend::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpFrontend::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace trialsupply
