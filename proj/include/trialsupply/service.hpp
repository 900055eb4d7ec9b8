#pragma once

#include "trialsupply/io_formats.hpp"

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

namespace trialsupply {

struct ServiceOptions {
    std::string token;     // empty disables the bearer check
    std::string data_dir;  // empty keeps sessions in memory only
    std::chrono::milliseconds optimize_wait{2000};
};

struct HttpRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> headers;  // lower-case names
    std::map<std::string, std::string> query;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;

    Json json() const { return Json::parse(body); }
};

/// Sessions keyed by opaque id. Each session serializes its commands behind
/// its own mutex; GET requests read a snapshot published after every change.
class SessionService {
  public:
    explicit SessionService(ServiceOptions options);
    ~SessionService();
    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    HttpResponse handle(const HttpRequest& request);

    /// Rebuilds every session logged under data_dir. Returns the count.
    std::size_t recover();

    struct Entry;

  private:
    std::shared_ptr<Entry> find(const std::string& id) const;

    HttpResponse create(const HttpRequest& r);
    HttpResponse get_state(Entry& e);
    HttpResponse post_observation(Entry& e, const HttpRequest& r);
    HttpResponse post_optimize(Entry& e);
    HttpResponse poll_optimize(Entry& e, const std::string& token);
    HttpResponse whatif(Entry& e, const HttpRequest& r);
    HttpResponse trajectory(Entry& e);

    ServiceOptions options_;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

/// Session state as served: doses rounded up to whole doses, weeks 1-based.
Json session_state_json(const MonitorSession& session);

/// Blocking HTTP transport in front of a SessionService.
class HttpFrontend {
  public:
    explicit HttpFrontend(SessionService& service);
    ~HttpFrontend();
    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    /// Binds and starts serving on a background thread; port 0 picks a free
    /// port. Returns the bound port, or -1.
    int start(const std::string& host, int port);
    void stop();
    void wait();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace trialsupply
