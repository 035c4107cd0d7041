#pragma once

// Line-delimited byte-stream transports: child processes over their standard
// streams and TCP connections. POSIX only.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace segprover {

/// Raised when the peer is unreachable, hangs up or the stream breaks.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One request line out, one response line in.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void send(std::string_view line) = 0;
  /// Next line without its terminator; nullopt at end of stream.
  virtual std::optional<std::string> receive() = 0;

  std::string exchange(std::string_view line) {
    send(line);
    auto reply = receive();
    if (!reply) throw TransportError("peer closed the stream");
    return *reply;
  }
};

/// Buffered line I/O over a pair of file descriptors it owns.
class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd) : read_fd_(read_fd), write_fd_(write_fd) {}
  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;
  ~FdChannel() override { close_fds(); }

  void send(std::string_view line) override {
    std::string buf(line);
    buf.push_back('\n');
    std::size_t off = 0;
    while (off < buf.size()) {
      ssize_t n = send_or_write(write_fd_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::optional<std::string> receive() override {
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      char chunk[4096];
      ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        if (buffer_.empty()) return std::nullopt;
        std::string line = std::move(buffer_);
        buffer_.clear();
        return line;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 protected:
  void close_fds() {
    if (read_fd_ >= 0) ::close(read_fd_);
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    read_fd_ = write_fd_ = -1;
  }

 private:
  static ssize_t send_or_write(int fd, const char* data, std::size_t len) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK) n = ::write(fd, data, len);
    return n;
  }

  int read_fd_;
  int write_fd_;
  std::string buffer_;
};

/// Runs `/bin/sh -c command` and talks to it over its stdin/stdout.
class ChildProcessChannel : public FdChannel {
 public:
  static std::unique_ptr<ChildProcessChannel> spawn(const std::string& command) {
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError("pipe failed");
    if (::pipe2(from_child, O_CLOEXEC) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw TransportError("pipe failed");
    }
    pid_t pid = ::fork();
    if (pid < 0) throw TransportError("fork failed");
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    return std::unique_ptr<ChildProcessChannel>(new ChildProcessChannel(from_child[0], to_child[1], pid));
  }

  ~ChildProcessChannel() override {
    close_fds();
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }

 private:
  ChildProcessChannel(int r, int w, pid_t pid) : FdChannel(r, w), pid_(pid) {}
  pid_t pid_;
};

inline std::unique_ptr<FdChannel> tcp_connect(const std::string& host, const std::string& port) {
  ::signal(SIGPIPE, SIG_IGN);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* p = res; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype | SOCK_CLOEXEC, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw TransportError("cannot connect to " + host + ":" + port);
  return std::make_unique<FdChannel>(fd, fd);
}

/// Listening socket bound to 127.0.0.1 (port 0 picks a free port).
class TcpListener {
 public:
  explicit TcpListener(unsigned short port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw TransportError("socket failed");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 16) != 0) {
      ::close(fd_);
      throw TransportError("cannot listen on port " + std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener() { shutdown(); }

  unsigned short port() const noexcept { return port_; }

  /// Blocks for the next connection; nullptr once shut down.
  std::unique_ptr<FdChannel> accept() {
    for (;;) {
      int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
      if (c >= 0) return std::make_unique<FdChannel>(c, c);
      if (errno == EINTR) continue;
      return nullptr;
    }
  }

  void shutdown() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
  unsigned short port_ = 0;
};

/// `exec:<command>` or `tcp:<host>:<port>`.
struct Endpoint {
  enum class Kind { exec, tcp, other } kind = Kind::other;
  std::string scheme;
  std::string target;  // command, or host
  std::string port;

  static Endpoint parse(std::string_view s) {
    Endpoint e;
    auto colon = s.find(':');
    if (colon == std::string_view::npos || colon == 0)
      throw std::invalid_argument("endpoint needs a scheme: " + std::string(s));
    e.scheme = std::string(s.substr(0, colon));
    auto rest = s.substr(colon + 1);
    if (e.scheme == "exec") {
      e.kind = Kind::exec;
      e.target = std::string(rest);
    } else if (e.scheme == "tcp") {
      e.kind = Kind::tcp;
      auto pc = rest.rfind(':');
      if (pc == std::string_view::npos || pc == 0 || pc + 1 == rest.size())
        throw std::invalid_argument("tcp endpoint must be tcp:<host>:<port>");
      e.target = std::string(rest.substr(0, pc));
      e.port = std::string(rest.substr(pc + 1));
    } else {
      e.target = std::string(rest);
    }
    if (e.target.empty()) throw std::invalid_argument("empty endpoint target: " + std::string(s));
    return e;
  }
};

/// Opens a channel for exec: and tcp: endpoints.
inline std::unique_ptr<LineChannel> open_channel(const Endpoint& e) {
  switch (e.kind) {
    case Endpoint::Kind::exec: return ChildProcessChannel::spawn(e.target);
    case Endpoint::Kind::tcp: return tcp_connect(e.target, e.port);
    default: throw TransportError("no stream transport for scheme " + e.scheme);
  }
}

}  // namespace segprover
