// Copyright 2026 The zhprobe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Transports for the probe protocol: a child process's standard streams or a
// TCP connection, both carrying the same line-delimited JSON.
//
// The client pipelines up to `max_in_flight` queries and multiplexes reads
// and writes with poll(), so a backend that answers while the client is
// still sending can never deadlock the pipe. Every query ends with exactly
// one outcome: a validated response, or a ProtocolError (backend error,
// malformed reply, timeout, or a closed connection).

#pragma once

#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "zhprobe/error.hpp"
#include "zhprobe/evaluator.hpp"
#include "zhprobe/protocol.hpp"

namespace zhprobe {

using Clock = std::chrono::steady_clock;

class TransportError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

inline void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) {
    throw TransportError(errno_text("fcntl"));
  }
}

/// Owns a file descriptor.
class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  int release() noexcept { return std::exchange(fd_, -1); }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

inline void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        pollfd p{fd, POLLOUT, 0};
        ::poll(&p, 1, -1);
        continue;
      }
      throw TransportError(errno_text("write"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace detail

/// Buffered, non-blocking line I/O over a read fd and a write fd (which may
/// be the same socket).
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {
    // Writes to a vanished peer must surface as EPIPE, not kill the process.
    ::signal(SIGPIPE, SIG_IGN);
    detail::set_nonblocking(read_fd_);
    if (write_fd_ != read_fd_) detail::set_nonblocking(write_fd_);
  }

  virtual ~LineChannel() = default;

  void queue(std::string_view line) {
    outbuf_.append(line);
    outbuf_.push_back('\n');
  }

  bool closed() const noexcept { return closed_; }

  /// Moves bytes until at least one complete line has arrived, the deadline
  /// passes, or the peer closes. Returns the complete lines received.
  std::vector<std::string> pump(Clock::time_point deadline) {
    std::vector<std::string> lines;
    while (!closed_) {
      take_lines(lines);
      if (!lines.empty()) return lines;
      const auto now = Clock::now();
      if (now >= deadline) return lines;
      const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();

      pollfd fds[2];
      nfds_t count = 0;
      fds[count++] = {read_fd_, POLLIN, 0};
      const bool want_write = !outbuf_.empty();
      if (want_write && write_fd_ != read_fd_) {
        fds[count++] = {write_fd_, POLLOUT, 0};
      } else if (want_write) {
        fds[0].events |= POLLOUT;
      }
      const int rc = ::poll(fds, count, static_cast<int>(std::min<long long>(wait_ms + 1, 1000)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw TransportError(detail::errno_text("poll"));
      }
      for (nfds_t i = 0; i < count; ++i) {
        if (fds[i].fd == write_fd_ && (fds[i].revents & (POLLOUT | POLLERR))) flush_some();
        if (fds[i].fd == read_fd_ && (fds[i].revents & (POLLIN | POLLHUP | POLLERR))) read_some();
      }
    }
    take_lines(lines);
    return lines;
  }

 private:
  void flush_some() {
    while (!outbuf_.empty()) {
      const ssize_t n = ::write(write_fd_, outbuf_.data(), outbuf_.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) return;
        closed_ = true;  // EPIPE and friends: the peer is gone
        return;
      }
      outbuf_.erase(0, static_cast<std::size_t>(n));
    }
  }

  void read_some() {
    char buf[65536];
    for (;;) {
      const ssize_t n = ::read(read_fd_, buf, sizeof buf);
      if (n > 0) {
        inbuf_.append(buf, static_cast<std::size_t>(n));
        continue;
      }
      if (n == 0) {
        closed_ = true;
        return;
      }
      if (errno == EINTR) continue;
      if (errno != EAGAIN && errno != EWOULDBLOCK) closed_ = true;
      return;
    }
  }

  void take_lines(std::vector<std::string>& lines) {
    std::size_t start = 0;
    for (;;) {
      const auto nl = inbuf_.find('\n', start);
      if (nl == std::string::npos) break;
      std::string line = inbuf_.substr(start, nl - start);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) lines.push_back(std::move(line));
      start = nl + 1;
    }
    inbuf_.erase(0, start);
  }

  int read_fd_;
  int write_fd_;
  std::string inbuf_;
  std::string outbuf_;
  bool closed_ = false;
};

/// A backend launched as `/bin/sh -c command`, spoken to over its stdin and
/// stdout. The child's stderr is inherited.
class ChildProcessChannel : public LineChannel {
 public:
  static std::unique_ptr<ChildProcessChannel> spawn(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) < 0) throw TransportError(detail::errno_text("pipe"));
    if (::pipe(from_child) < 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError(detail::errno_text("pipe"));
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError(detail::errno_text("fork"));
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::unique_ptr<ChildProcessChannel>(
        new ChildProcessChannel(pid, detail::UniqueFd(from_child[0]), detail::UniqueFd(to_child[1])));
  }

  ~ChildProcessChannel() override {
    write_.reset();  // EOF on the child's stdin asks it to exit
    read_.reset();
    for (int i = 0; i < 200; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGTERM);
    ::waitpid(pid_, nullptr, 0);
  }

 private:
  ChildProcessChannel(pid_t pid, detail::UniqueFd read, detail::UniqueFd write)
      : LineChannel(read.get(), write.get()), pid_(pid), read_(std::move(read)), write_(std::move(write)) {}

  pid_t pid_;
  detail::UniqueFd read_;
  detail::UniqueFd write_;
};

class TcpChannel : public LineChannel {
 public:
  static std::unique_ptr<TcpChannel> connect(const std::string& host, const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0) {
      throw TransportError("cannot resolve " + host + ":" + port + ": " + ::gai_strerror(rc));
    }
    detail::UniqueFd fd;
    for (addrinfo* ai = res; ai; ai = ai->ai_next) {
      detail::UniqueFd s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (s.get() < 0) continue;
      if (::connect(s.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
        fd = std::move(s);
        break;
      }
    }
    ::freeaddrinfo(res);
    if (fd.get() < 0) throw TransportError("cannot connect to " + host + ":" + port);
    return std::unique_ptr<TcpChannel>(new TcpChannel(std::move(fd)));
  }

  /// Parses "host:port"; the last colon separates the port.
  static std::unique_ptr<TcpChannel> connect(std::string_view endpoint) {
    const auto colon = endpoint.rfind(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == endpoint.size()) {
      throw TransportError("endpoint must be host:port, got '" + std::string(endpoint) + "'");
    }
    return connect(std::string(endpoint.substr(0, colon)), std::string(endpoint.substr(colon + 1)));
  }

 private:
  explicit TcpChannel(detail::UniqueFd fd) : LineChannel(fd.get(), fd.get()), fd_(std::move(fd)) {}

  detail::UniqueFd fd_;
};

/// Wraps an existing pair of descriptors without taking ownership.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd) : LineChannel(read_fd, write_fd) {}
};

// ---------------------------------------------------------------------------
// Client

struct BridgeOptions {
  std::size_t max_in_flight = 64;
  std::chrono::milliseconds timeout{30000};
};

struct BridgeStats {
  std::size_t sent = 0;
  std::size_t responses = 0;
  std::size_t protocol_errors = 0;
  std::size_t timeouts = 0;
  std::size_t stray_lines = 0;  // unparseable, or for an unknown / finished id
};

class BridgeClient : public QueryExecutor {
 public:
  BridgeClient(std::unique_ptr<LineChannel> channel, BridgeOptions opts = {})
      : channel_(std::move(channel)), opts_(opts) {
    if (opts_.max_in_flight == 0) throw ContractError("max_in_flight must be positive");
  }

  std::vector<QueryOutcome> exchange(const std::vector<ProbeQuery>& queries) override {
    const std::size_t n = queries.size();
    std::vector<std::optional<QueryOutcome>> outcomes(n);
    std::size_t resolved = 0;
    auto resolve = [&](std::size_t idx, QueryOutcome o) {
      if (std::holds_alternative<ProtocolError>(o)) {
        ++stats_.protocol_errors;
      } else {
        ++stats_.responses;
      }
      outcomes[idx] = std::move(o);
      ++resolved;
    };

    struct Pending {
      std::size_t index;
      Clock::time_point deadline;
    };
    std::unordered_map<std::string, Pending> in_flight;
    std::unordered_map<std::string, std::size_t> ids_in_batch;
    std::size_t next = 0;

    while (resolved < n) {
      while (in_flight.size() < opts_.max_in_flight && next < n && !channel_->closed()) {
        const std::size_t idx = next++;
        const ProbeQuery& q = queries[idx];
        try {
          validate_query(q);
        } catch (const ProtocolError& e) {
          resolve(idx, e);
          continue;
        }
        if (!ids_in_batch.emplace(q.id, idx).second || in_flight.count(q.id)) {
          resolve(idx, ProtocolError(q.id, "duplicate query id in batch"));
          continue;
        }
        channel_->queue(encode_query(q));
        in_flight.emplace(q.id, Pending{idx, Clock::now() + opts_.timeout});
        ++stats_.sent;
      }
      if (resolved == n) break;

      if (channel_->closed()) {
        for (auto& [id, p] : in_flight) resolve(p.index, ProtocolError(id, "bridge closed"));
        in_flight.clear();
        for (; next < n; ++next) resolve(next, ProtocolError(queries[next].id, "bridge closed"));
        break;
      }

      auto deadline = Clock::time_point::max();
      for (const auto& [id, p] : in_flight) deadline = std::min(deadline, p.deadline);
      for (const std::string& line : channel_->pump(deadline)) {
        std::string id;
        try {
          ResponseMessage msg = decode_response_message(line);
          id = msg.id;
          auto it = in_flight.find(id);
          if (it == in_flight.end()) {
            ++stats_.stray_lines;
            continue;
          }
          const std::size_t idx = it->second.index;
          in_flight.erase(it);
          if (auto* err = std::get_if<std::string>(&msg.body)) {
            resolve(idx, ProtocolError(id, "backend error: " + *err));
            continue;
          }
          auto& resp = std::get<ProbeResponse>(msg.body);
          try {
            validate_response(resp, queries[idx]);
            resolve(idx, std::move(resp));
          } catch (const ProtocolError& e) {
            resolve(idx, e);
          }
        } catch (const ProtocolError& e) {
          // A malformed message still aborts its query if the id was readable.
          auto it = e.id().empty() ? in_flight.end() : in_flight.find(e.id());
          if (it == in_flight.end()) {
            ++stats_.stray_lines;
            continue;
          }
          const std::size_t idx = it->second.index;
          in_flight.erase(it);
          resolve(idx, e);
        }
      }

      const auto now = Clock::now();
      for (auto it = in_flight.begin(); it != in_flight.end();) {
        if (it->second.deadline <= now) {
          ++stats_.timeouts;
          resolve(it->second.index, ProtocolError(it->first, "timed out"));
          it = in_flight.erase(it);
        } else {
          ++it;
        }
      }
    }

    std::vector<QueryOutcome> out;
    out.reserve(n);
    for (auto& o : outcomes) out.push_back(std::move(*o));
    return out;
  }

  const BridgeStats& stats() const noexcept { return stats_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  BridgeOptions opts_;
  BridgeStats stats_;
};

/// "host:port" (port all digits) selects TCP; anything else is a command.
inline bool looks_like_tcp_endpoint(std::string_view s) {
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == s.size()) return false;
  for (char c : s.substr(0, colon)) {
    if (c == ' ' || c == '/') return false;
  }
  return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(colon) + 1, s.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

inline std::unique_ptr<LineChannel> open_endpoint(const std::string& endpoint) {
  if (looks_like_tcp_endpoint(endpoint)) return TcpChannel::connect(endpoint);
  return ChildProcessChannel::spawn(endpoint);
}

// ---------------------------------------------------------------------------
// Server side

/// Answers request lines from `in_fd` on `out_fd` until EOF. Returns the
/// number of lines answered.
inline std::size_t serve_fd(int in_fd, int out_fd, const Backend& backend) {
  std::string buf;
  char chunk[65536];
  std::size_t served = 0;
  for (;;) {
    const ssize_t n = ::read(in_fd, chunk, sizeof chunk);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        pollfd p{in_fd, POLLIN, 0};
        ::poll(&p, 1, -1);
        continue;
      }
      throw TransportError(detail::errno_text("read"));
    }
    if (n == 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    std::string reply;
    std::size_t start = 0;
    for (;;) {
      const auto nl = buf.find('\n', start);
      if (nl == std::string::npos) break;
      std::string_view line(buf.data() + start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) {
        reply += answer_line(backend, line);
        reply += '\n';
        ++served;
      }
      start = nl + 1;
    }
    buf.erase(0, start);
    if (!reply.empty()) {
      try {
        detail::write_all(out_fd, reply);
      } catch (const TransportError&) {
        break;  // client went away
      }
    }
  }
  return served;
}

/// Listening TCP socket; each accepted connection is served on its own thread.
class TcpServer {
 public:
  /// Binds `host:port`; port 0 picks an ephemeral port (see port()).
  TcpServer(const std::string& host, unsigned short port) {
    ::signal(SIGPIPE, SIG_IGN);
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE;
    addrinfo* res = nullptr;
    const std::string port_text = std::to_string(port);
    if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_text.c_str(), &hints, &res);
        rc != 0) {
      throw TransportError(std::string("cannot resolve listen address: ") + ::gai_strerror(rc));
    }
    for (addrinfo* ai = res; ai && fd_.get() < 0; ai = ai->ai_next) {
      detail::UniqueFd s(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (s.get() < 0) continue;
      int one = 1;
      ::setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(s.get(), ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(s.get(), 16) == 0) {
        fd_ = std::move(s);
      }
    }
    ::freeaddrinfo(res);
    if (fd_.get() < 0) throw TransportError(detail::errno_text("bind/listen"));
    sockaddr_storage addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd_.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                             : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
  }

  unsigned short port() const noexcept { return port_; }

  /// Accepts connections until `max_connections` have been served (0 means
  /// forever) and all of them have finished.
  void serve(const Backend& backend, std::size_t max_connections = 0) {
    std::vector<std::thread> workers;
    for (std::size_t served = 0; max_connections == 0 || served < max_connections; ++served) {
      const int client = ::accept(fd_.get(), nullptr, nullptr);
      if (client < 0) {
        if (errno == EINTR) continue;
        break;
      }
      workers.emplace_back([client, &backend] {
        detail::UniqueFd owned(client);
        try {
          serve_fd(owned.get(), owned.get(), backend);
        } catch (const TransportError&) {
        }
      });
    }
    for (auto& t : workers) t.join();
  }

 private:
  detail::UniqueFd fd_;
  unsigned short port_ = 0;
};

}  // namespace zhprobe
