#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "webtopic/detail/http.hpp"
#include "webtopic/error.hpp"

namespace webtopic {

using json = nlohmann::json;

/// Operations every backend understands.
inline const std::vector<std::string>& protocol_ops() {
  static const std::vector<std::string> ops = {"train", "score", "embed", "info", "generate"};
  return ops;
}

/// Wire framing: compact JSON, one object per line.
inline std::string frame(const json& message) {
  return message.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

inline json error_response(const json& id, const std::string& message) {
  return {{"id", id}, {"ok", false}, {"error", message}};
}

/// Moves request/response objects to and from a backend. call_many may keep
/// several requests in flight; responses are returned in request order.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual json call(const json& request) { return call_many({request}).front(); }
  virtual std::vector<json> call_many(const std::vector<json>& requests) = 0;
};

/// Handler executed in the same process; used by tests and the mock server.
using Handler = std::function<json(const json& request)>;

class InProcessTransport : public Transport {
 public:
  explicit InProcessTransport(Handler h) : handler_(std::move(h)) {}
  std::vector<json> call_many(const std::vector<json>& requests) override {
    std::vector<json> out;
    out.reserve(requests.size());
    // round-trip through the wire framing so tests see exactly what a peer would
    for (const auto& r : requests) {
      const json req = json::parse(frame(r));
      json resp;
      try {
        resp = handler_(req);
      } catch (const std::exception& e) {
        resp = error_response(req.value("id", json()), e.what());
      }
      out.push_back(json::parse(frame(resp)));
    }
    return out;
  }

 private:
  Handler handler_;
};

namespace detail {

// Orders responses to match requests by "id".
inline std::vector<json> match_by_id(const std::vector<json>& requests, std::vector<json> responses) {
  std::map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& id = requests[i].at("id");
    if (!id.is_number_integer()) throw ProtocolError("request id must be an integer");
    if (!slot.emplace(id.get<std::int64_t>(), i).second) throw ProtocolError("duplicate request id");
  }
  std::vector<json> out(requests.size());
  std::vector<bool> filled(requests.size(), false);
  for (auto& r : responses) {
    if (!r.is_object() || !r.contains("id") || !r["id"].is_number_integer()) {
      if (r.is_object() && r.value("ok", true) == false) {
        throw ProtocolError("backend error: " + r.value("error", std::string("unknown")));
      }
      throw ProtocolError("response without integer id: " + r.dump());
    }
    const auto it = slot.find(r["id"].get<std::int64_t>());
    if (it == slot.end()) throw ProtocolError("response for unknown id " + r["id"].dump());
    if (filled[it->second]) throw ProtocolError("duplicate response for id " + r["id"].dump());
    filled[it->second] = true;
    out[it->second] = std::move(r);
  }
  return out;
}

}  // namespace detail

/// Spawns `/bin/sh -c command` and speaks JSONL over its stdin/stdout.
/// Requests are pipelined: all are written before responses are collected,
/// and responses may arrive in any order.
class StdioTransport : public Transport {
 public:
  explicit StdioTransport(const std::string& command,
                          std::chrono::milliseconds timeout = std::chrono::minutes(10))
      : command_(command), timeout_(timeout) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe(to_child) != 0) throw TransportError("pipe failed: " + std::string(std::strerror(errno)));
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError("pipe failed: " + std::string(std::strerror(errno)));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw TransportError("fork failed: " + std::string(std::strerror(errno)));
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFL, ::fcntl(to_child[1], F_GETFL) | O_NONBLOCK);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    in_ = to_child[1];
    out_ = from_child[0];
  }

  ~StdioTransport() override {
    if (in_ >= 0) ::close(in_);
    if (out_ >= 0) ::close(out_);
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 100; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) != 0) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }

  StdioTransport(const StdioTransport&) = delete;
  StdioTransport& operator=(const StdioTransport&) = delete;

  std::vector<json> call_many(const std::vector<json>& requests) override {
    std::lock_guard lock(mu_);
    if (broken_) throw TransportError("backend '" + command_ + "' is no longer usable");
    std::string payload;
    for (const auto& r : requests) payload += frame(r);

    std::atomic<bool> write_failed{false};
    std::atomic<bool> stop{false};
    std::thread writer([&] {
      std::size_t off = 0;
      while (off < payload.size() && !stop) {
        pollfd p{in_, POLLOUT, 0};
        if (::poll(&p, 1, 100) <= 0) continue;
        const auto n = ::write(in_, payload.data() + off, payload.size() - off);
        if (n < 0) {
          if (errno == EINTR || errno == EAGAIN) continue;
          write_failed = true;
          return;
        }
        off += static_cast<std::size_t>(n);
      }
    });
    std::vector<json> responses;
    try {
      while (responses.size() < requests.size()) {
        const std::string line = read_line();
        try {
          responses.push_back(json::parse(line));
        } catch (const json::parse_error&) {
          throw ProtocolError("malformed response line from backend: " + line.substr(0, 200));
        }
      }
    } catch (...) {
      broken_ = true;
      stop = true;
      writer.join();
      throw;
    }
    writer.join();
    if (write_failed) {
      broken_ = true;
      throw TransportError("write to backend failed");
    }
    return detail::match_by_id(requests, std::move(responses));
  }

 private:
  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TransportError("backend timed out");
      pollfd p{out_, POLLIN, 0};
      const int rc = ::poll(&p, 1, static_cast<int>(std::min<std::int64_t>(left.count(), 1000)));
      if (rc < 0 && errno != EINTR) throw TransportError("poll failed");
      if (rc <= 0) continue;
      char buf[65536];
      const auto n = ::read(out_, buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw TransportError("backend '" + command_ + "' closed its output");
      buffer_.append(buf, static_cast<std::size_t>(n));
    }
  }

  std::string command_;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  std::string buffer_;
  bool broken_ = false;
  std::mutex mu_;
};

/// POST /v1/{op} with the request object as body. call_many spreads requests
/// over up to `parallel` connections.
class HttpTransport : public Transport {
 public:
  HttpTransport(std::string host, int port, std::size_t parallel = 4,
                std::chrono::milliseconds timeout = std::chrono::minutes(10))
      : host_(std::move(host)), port_(port), parallel_(std::max<std::size_t>(1, parallel)),
        timeout_(timeout) {}

  std::vector<json> call_many(const std::vector<json>& requests) override {
    std::vector<json> out(requests.size());
    std::vector<std::exception_ptr> errors(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      httplib::Client client(host_, port_);
      const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_).count();
      client.set_connection_timeout(std::chrono::seconds(std::max<std::int64_t>(1, secs)));
      client.set_read_timeout(timeout_);
      client.set_write_timeout(timeout_);
      for (std::size_t i = next++; i < requests.size(); i = next++) {
        try {
          out[i] = post(client, requests[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    const std::size_t n_threads = std::min(parallel_, requests.size());
    if (n_threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> threads;
      for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
      for (auto& t : threads) t.join();
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    return detail::match_by_id(requests, std::move(out));
  }

 private:
  json post(httplib::Client& client, const json& request) const {
    const std::string op = request.value("op", "");
    auto res = client.Post("/v1/" + op, request.dump(), "application/json");
    if (!res) {
      throw TransportError("cannot reach backend at " + host_ + ":" + std::to_string(port_) + ": " +
                           httplib::to_string(res.error()));
    }
    json body;
    try {
      body = json::parse(res->body);
    } catch (const json::parse_error&) {
      throw ProtocolError("backend returned HTTP " + std::to_string(res->status) + " with non-JSON body");
    }
    if (res->status != 200 && body.value("ok", true)) {
      throw ProtocolError("backend returned HTTP " + std::to_string(res->status));
    }
    return body;
  }

  std::string host_;
  int port_;
  std::size_t parallel_;
  std::chrono::milliseconds timeout_;
};

/// "stdio:<shell command>" or "http://host:port".
inline std::unique_ptr<Transport> make_transport(const std::string& endpoint) {
  if (endpoint.starts_with("stdio:")) {
    const std::string cmd = endpoint.substr(6);
    if (cmd.empty()) throw ConfigError("stdio endpoint needs a command");
    return std::make_unique<StdioTransport>(cmd);
  }
  if (endpoint.starts_with("http://")) {
    std::string rest = endpoint.substr(7);
    if (const auto slash = rest.find('/'); slash != std::string::npos) rest.resize(slash);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) {
      throw ConfigError("http endpoint needs host:port: '" + endpoint + "'");
    }
    int port = 0;
    try {
      std::size_t used = 0;
      port = std::stoi(rest.substr(colon + 1), &used);
      if (used != rest.size() - colon - 1 || port <= 0 || port > 65535) throw std::out_of_range("port");
    } catch (const std::exception&) {
      throw ConfigError("invalid port in endpoint '" + endpoint + "'");
    }
    return std::make_unique<HttpTransport>(rest.substr(0, colon), port);
  }
  throw ConfigError("unsupported endpoint '" + endpoint + "' (use stdio:<cmd> or http://host:port)");
}

// ---------------------------------------------------------------------------
// Server side

/// Runs `handler` on each request line from `in` until EOF. Malformed lines
/// get an error response with a null id.
inline void serve_stdio(const Handler& handler, std::istream& in, std::ostream& out) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json response;
    try {
      const json request = json::parse(line);
      try {
        response = handler(request);
      } catch (const std::exception& e) {
        response = error_response(request.value("id", json()), e.what());
      }
    } catch (const json::parse_error&) {
      response = error_response(nullptr, "malformed request");
    }
    out << frame(response) << std::flush;
  }
}

/// Registers POST /v1/{op} routes that forward to `handler`. The op in the
/// path wins over any op in the body.
inline void mount_http(httplib::Server& server, Handler handler) {
  server.Post(R"(/v1/([a-z_]+))", [handler = std::move(handler)](const httplib::Request& req,
                                                                  httplib::Response& res) {
    json response;
    try {
      json request = json::parse(req.body);
      request["op"] = req.matches[1].str();
      try {
        response = handler(request);
      } catch (const std::exception& e) {
        response = error_response(request.value("id", json()), e.what());
      }
    } catch (const json::parse_error&) {
      response = error_response(nullptr, "malformed request");
      res.status = 400;
    }
    res.set_content(response.dump(-1, ' ', false, json::error_handler_t::replace), "application/json");
  });
}

}  // namespace webtopic
