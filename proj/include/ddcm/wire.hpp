#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ddcm/error.hpp"
#include "ddcm/hash.hpp"
#include "ddcm/model.hpp"

// External denoiser protocol. Every message travels as a frame: u32 LE byte
// length, then the body. Bodies are documented in docs/format.md.
namespace ddcm::wire {

inline constexpr std::string_view kMagic = "DDCMNET";
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint32_t kMaxFrame = 64u << 20;

enum class Opcode : std::uint8_t { kDenoise = 1, kScore = 2, kConditionalScore = 3 };

using Bytes = std::vector<std::uint8_t>;
using Reader = ByteReader<ProtocolError>;

// A bidirectional byte stream over one or two file descriptors.
class Channel {
 public:
  Channel(int read_fd, int write_fd, int timeout_ms = 10000)
      : read_fd_(read_fd), write_fd_(write_fd), timeout_ms_(timeout_ms) {}

  void write_frame(std::span<const std::uint8_t> body) {
    if (body.size() > kMaxFrame) throw ProtocolError("frame too large");
    ByteWriter w;
    w.put_le(static_cast<std::uint32_t>(body.size()));
    w.put_bytes(body);
    write_all(w.bytes());
  }

  // Returns false on a clean end of stream before the first length byte.
  bool read_frame(Bytes& body) {
    std::uint8_t len_bytes[4];
    if (!read_exact(len_bytes, 4, true)) return false;
    const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) | (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                              (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                              (static_cast<std::uint32_t>(len_bytes[3]) << 24);
    if (len > kMaxFrame) throw ProtocolError("frame length " + std::to_string(len) + " exceeds limit");
    body.resize(len);
    if (len > 0) read_exact(body.data(), len, false);
    return true;
  }

  Bytes expect_frame() {
    Bytes body;
    if (!read_frame(body)) throw ProtocolError("peer closed the connection");
    return body;
  }

  int timeout_ms() const { return timeout_ms_; }

 private:
  void write_all(std::span<const std::uint8_t> data) {
    std::size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::write(write_fd_, data.data() + done, data.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  bool read_exact(std::uint8_t* out, std::size_t n, bool eof_ok) {
    std::size_t done = 0;
    while (done < n) {
      if (timeout_ms_ >= 0) {
        pollfd p{read_fd_, POLLIN, 0};
        const int ready = ::poll(&p, 1, timeout_ms_);
        if (ready < 0) {
          if (errno == EINTR) continue;
          throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) throw TimeoutError("no response within " + std::to_string(timeout_ms_) + " ms");
      }
      const ssize_t got = ::read(read_fd_, out + done, n - done);
      if (got < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
      }
      if (got == 0) {
        if (done == 0 && eof_ok) return false;
        throw ProtocolError("connection closed mid-frame");
      }
      done += static_cast<std::size_t>(got);
    }
    return true;
  }

  int read_fd_;
  int write_fd_;
  int timeout_ms_;
};

inline Bytes handshake_request(std::uint32_t dim, std::uint32_t steps, std::uint16_t version = kVersion) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_le(version);
  w.put_le(dim);
  w.put_le(steps);
  return w.take();
}

inline Bytes handshake_reply(std::uint64_t model_id, std::uint16_t version = kVersion) {
  ByteWriter w;
  w.put_bytes(kMagic);
  w.put_le(version);
  w.put_le(model_id);
  return w.take();
}

inline Bytes request_body(Opcode op, std::uint32_t step, const std::string& condition, VecView x) {
  ByteWriter w;
  w.put_le(static_cast<std::uint8_t>(op));
  w.put_le(step);
  if (op == Opcode::kConditionalScore) {
    w.put_le(static_cast<std::uint32_t>(condition.size()));
    w.put_bytes(condition);
  }
  for (double v : x) w.put_f32(static_cast<float>(v));
  return w.take();
}

inline Bytes ok_body(VecView values) {
  ByteWriter w;
  w.put_le(std::uint8_t{0});
  for (double v : values) w.put_f32(static_cast<float>(v));
  return w.take();
}

inline Bytes error_body(const std::string& message, std::uint8_t status = 1) {
  ByteWriter w;
  w.put_le(status);
  w.put_le(static_cast<std::uint32_t>(message.size()));
  w.put_bytes(message);
  return w.take();
}

inline void check_magic(Reader& r) {
  const auto magic = r.get_bytes(kMagic.size());
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw ProtocolError("bad protocol magic");
}

// Serves `model` on one connection until the peer closes it. Malformed
// requests get an error response and the connection stays usable.
inline void serve(const ScoreModel& model, Channel& channel) {
  Bytes frame;
  if (!channel.read_frame(frame)) return;
  {
    Reader r(frame);
    std::uint16_t version = 0;
    std::uint32_t dim = 0;
    std::uint32_t steps = 0;
    try {
      check_magic(r);
      version = r.get_le<std::uint16_t>();
      dim = r.get_le<std::uint32_t>();
      steps = r.get_le<std::uint32_t>();
    } catch (const ProtocolError& e) {
      channel.write_frame(error_body(std::string("bad handshake: ") + e.what()));
      return;
    }
    if (version != kVersion) {
      channel.write_frame(error_body("unsupported protocol version " + std::to_string(version)));
      return;
    }
    if (dim != model.dim() || steps != static_cast<std::uint32_t>(model.schedule().steps())) {
      channel.write_frame(error_body("model serves d=" + std::to_string(model.dim()) +
                                     " T=" + std::to_string(model.schedule().steps())));
      return;
    }
    channel.write_frame(handshake_reply(model.model_id()));
  }

  while (channel.read_frame(frame)) {
    Bytes reply;
    try {
      Reader r(frame);
      const auto op = r.get_le<std::uint8_t>();
      const auto step = r.get_le<std::uint32_t>();
      Condition condition;
      if (op == static_cast<std::uint8_t>(Opcode::kConditionalScore)) {
        const auto len = r.get_le<std::uint32_t>();
        const auto text = r.get_bytes(len);
        condition = std::string(text.begin(), text.end());
      } else if (op != static_cast<std::uint8_t>(Opcode::kDenoise) &&
                 op != static_cast<std::uint8_t>(Opcode::kScore)) {
        throw ProtocolError("unknown opcode " + std::to_string(op));
      }
      if (r.remaining() != 4 * model.dim()) {
        throw DimensionMismatch("dimension mismatch: expected " + std::to_string(model.dim()) + " floats, got " +
                                std::to_string(r.remaining()) + " bytes");
      }
      if (step > static_cast<std::uint32_t>(model.schedule().steps())) {
        throw InvalidArgument("step " + std::to_string(step) + " out of range");
      }
      Vec x(model.dim());
      for (auto& v : x) v = r.get_f32();
      const int t = static_cast<int>(step);
      const Vec out = op == static_cast<std::uint8_t>(Opcode::kDenoise) ? model.denoise(x, t) : model.score(x, t, condition);
      reply = ok_body(out);
    } catch (const Error& e) {
      reply = error_body(e.what());
    }
    channel.write_frame(reply);
  }
}

// A model evaluated by a remote process. Requests are serialised: one in
// flight per connection.
class RemoteDenoiser final : public ScoreModel {
 public:
  // `schedule` must be the schedule the remote model was trained on; it is
  // used for the score/denoiser conversion on the client side.
  RemoteDenoiser(std::unique_ptr<Channel> channel, std::size_t dim, Schedule schedule)
      : channel_(std::move(channel)), dim_(dim), schedule_(std::move(schedule)) {
    channel_->write_frame(handshake_request(static_cast<std::uint32_t>(dim_),
                                            static_cast<std::uint32_t>(schedule_.steps())));
    const Bytes reply = channel_->expect_frame();
    Reader r(reply);
    if (!reply.empty() && reply[0] != static_cast<std::uint8_t>(kMagic[0])) {
      throw ProtocolError("handshake rejected: " + read_error(r));
    }
    check_magic(r);
    version_ = r.get_le<std::uint16_t>();
    if (version_ != kVersion) throw ProtocolError("server speaks protocol version " + std::to_string(version_));
    model_id_ = r.get_le<std::uint64_t>();
    if (r.remaining() != 0) throw ProtocolError("trailing bytes in handshake reply");
  }

  std::size_t dim() const override { return dim_; }
  const Schedule& schedule() const override { return schedule_; }
  std::uint64_t model_id() const override { return model_id_; }
  bool supports_conditioning() const override { return true; }
  std::uint16_t protocol_version() const { return version_; }

 protected:
  Vec do_denoise(VecView x, int t, const Condition& condition) const override {
    if (condition) return ScoreModel::do_denoise(x, t, condition);
    return call(Opcode::kDenoise, t, "", x);
  }
  Vec do_score(VecView x, int t, const Condition& condition) const override {
    if (condition) return call(Opcode::kConditionalScore, t, *condition, x);
    return call(Opcode::kScore, t, "", x);
  }

 private:
  static std::string read_error(Reader& r) {
    r.get_le<std::uint8_t>();
    const auto len = r.get_le<std::uint32_t>();
    const auto text = r.get_bytes(len);
    return std::string(text.begin(), text.end());
  }

  Vec call(Opcode op, int t, const std::string& condition, VecView x) const {
    std::lock_guard lock(mutex_);
    channel_->write_frame(request_body(op, static_cast<std::uint32_t>(t), condition, x));
    const Bytes reply = channel_->expect_frame();
    Reader r(reply);
    const auto status = r.get_le<std::uint8_t>();
    if (status != 0) {
      Reader e(reply);
      throw ProtocolError("remote error: " + read_error(e));
    }
    if (r.remaining() % 4 != 0) throw ProtocolError("response body is not a float array");
    if (r.remaining() / 4 != dim_) {
      throw DimensionMismatch("remote returned " + std::to_string(r.remaining() / 4) + " values, expected " +
                              std::to_string(dim_));
    }
    Vec out(dim_);
    for (auto& v : out) {
      v = r.get_f32();
      if (!std::isfinite(v)) throw NumericError("remote returned a non-finite value");
    }
    return out;
  }

  std::unique_ptr<Channel> channel_;
  std::size_t dim_;
  Schedule schedule_;
  std::uint64_t model_id_ = 0;
  std::uint16_t version_ = 0;
  mutable std::mutex mutex_;
};

// Channel over a child process's stdin/stdout; the child is reaped on
// destruction.
class ChildProcess {
 public:
  explicit ChildProcess(const std::vector<std::string>& argv, int timeout_ms = 10000) {
    if (argv.empty()) throw InvalidArgument("empty command line");
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) throw IoError("pipe failed");
    ::signal(SIGPIPE, SIG_IGN);
    pid_ = ::fork();
    if (pid_ < 0) throw IoError("fork failed");
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      std::vector<char*> args;
      for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
      args.push_back(nullptr);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    timeout_ms_ = timeout_ms;
  }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      // Give the child a moment to exit on EOF, then kill it.
      int status = 0;
      for (int n = 0; n < 200; ++n) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
        ::usleep(10000);
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }

  std::unique_ptr<Channel> channel() const { return std::make_unique<Channel>(read_fd_, write_fd_, timeout_ms_); }

 private:
  pid_t pid_ = -1;
  int read_fd_ = -1;
  int write_fd_ = -1;
  int timeout_ms_ = 10000;
};

// Owns a connected TCP socket.
class TcpConnection {
 public:
  TcpConnection(const std::string& host, std::uint16_t port, int timeout_ms = 10000) : timeout_ms_(timeout_ms) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
      throw IoError("cannot resolve " + host);
    }
    for (addrinfo* a = res; a; a = a->ai_next) {
      fd_ = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, a->ai_addr, a->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) throw IoError("cannot connect to " + host + ":" + std::to_string(port));
  }
  TcpConnection(const TcpConnection&) = delete;
  TcpConnection& operator=(const TcpConnection&) = delete;
  ~TcpConnection() {
    if (fd_ >= 0) ::close(fd_);
  }

  std::unique_ptr<Channel> channel() const { return std::make_unique<Channel>(fd_, fd_, timeout_ms_); }

 private:
  int fd_ = -1;
  int timeout_ms_;
};

// Accepts connections on `port` and serves each to completion in turn.
// Never returns unless the listening socket fails.
inline void serve_tcp(const ScoreModel& model, std::uint16_t port) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw IoError("socket failed");
  const int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(listener, 4) != 0) {
    ::close(listener);
    throw IoError("cannot listen on port " + std::to_string(port));
  }
  ::signal(SIGPIPE, SIG_IGN);
  for (;;) {
    const int fd = ::accept(listener, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      ::close(listener);
      throw IoError("accept failed");
    }
    Channel channel(fd, fd, -1);
    try {
      serve(model, channel);
    } catch (const ProtocolError&) {
    }
    ::close(fd);
  }
}

}  // namespace ddcm::wire
