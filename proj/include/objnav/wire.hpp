#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <signal.h>
#include <sodium.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "objnav/mapping.hpp"
#include "objnav/predictor.hpp"
#include "objnav/tensor.hpp"

namespace objnav::wire {

using json = nlohmann::json;

constexpr int kProtocolVersion = 1;
constexpr int kDefaultTimeoutMs = 5000;
constexpr std::size_t kMaxLineBytes = std::size_t{256} << 20;

/// Peer sent something that violates the protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};
/// No complete message arrived in time.
class TimeoutError : public Error {
 public:
  using Error::Error;
};
/// The byte stream closed or failed.
class ConnectionError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

namespace detail {
inline void sodium_ready() {
  if (sodium_init() < 0) throw Error("libsodium failed to initialize");
}
}  // namespace detail

inline std::string base64_encode(std::string_view bytes) {
  detail::sodium_ready();
  const std::size_t cap = sodium_base64_ENCODED_LEN(bytes.size(), sodium_base64_VARIANT_ORIGINAL);
  std::string out(cap, '\0');
  sodium_bin2base64(out.data(), cap, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(),
                    sodium_base64_VARIANT_ORIGINAL);
  out.resize(cap - 1);  // drop the terminating NUL
  return out;
}

inline std::string base64_decode(std::string_view text) {
  detail::sodium_ready();
  std::string out(text.size() / 4 * 3 + 3, '\0');
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(reinterpret_cast<unsigned char*>(out.data()), out.size(), text.data(), text.size(),
                        nullptr, &len, &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
      end != text.data() + text.size())
    throw ProtocolError("invalid base64 payload");
  out.resize(len);
  return out;
}

inline json tensor_to_json(const Tensor& t) {
  if (Tensor::element_count(t.shape) != t.data.size()) throw ShapeError("tensor data does not match its shape");
  return {{"shape", t.shape}, {"dtype", "f32le"}, {"data", base64_encode(f32le_bytes(t.data))}};
}

inline Tensor tensor_from_json(const json& j, std::string_view what = "tensor") {
  const std::string name(what);
  if (!j.is_object() || !j.contains("shape") || !j.contains("dtype") || !j.contains("data"))
    throw ProtocolError(name + ": expected {shape, dtype, data}");
  if (j["dtype"] != "f32le") throw ProtocolError(name + ": unsupported dtype " + j["dtype"].dump());
  Tensor t;
  if (!j["shape"].is_array()) throw ProtocolError(name + ": shape must be an array");
  for (const auto& d : j["shape"]) {
    if (!d.is_number_unsigned() || d.get<std::uint64_t>() > 0xffffffffULL)
      throw ProtocolError(name + ": bad dimension " + d.dump());
    t.shape.push_back(d.get<std::uint32_t>());
  }
  if (!j["data"].is_string()) throw ProtocolError(name + ": data must be a base64 string");
  const std::string bytes = base64_decode(j["data"].get<std::string>());
  if (bytes.size() != Tensor::element_count(t.shape) * 4)
    throw ProtocolError(name + ": " + std::to_string(bytes.size()) + " payload bytes do not match shape " +
                        j["shape"].dump());
  t.data = f32le_values(bytes);
  return t;
}

inline json hello_message() { return {{"type", "hello"}, {"version", kProtocolVersion}}; }

inline void check_hello(const json& j) {
  if (!j.is_object() || j.value("type", "") != "hello") throw ProtocolError("expected hello, got " + j.dump().substr(0, 200));
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kProtocolVersion)
    throw ProtocolError("protocol version mismatch: peer sent " + j.value("version", json()).dump() + ", expected " +
                        std::to_string(kProtocolVersion));
}

inline json error_message(std::string_view message) { return {{"type", "error"}, {"message", message}}; }

inline json predict_message(const PredictionRequest& r) {
  return {{"type", "predict"},
          {"episode", r.episode},
          {"step", r.step},
          {"target", r.target},
          {"orientation_bin", r.orientation_bin},
          {"local", tensor_to_json(r.local)},
          {"global", tensor_to_json(r.global)},
          {"rays", {{"depth", r.ray_depth}, {"class", r.ray_class}}}};
}

inline PredictionRequest parse_predict(const json& j) {
  if (!j.is_object() || j.value("type", "") != "predict") throw ProtocolError("expected a predict message");
  PredictionRequest r;
  try {
    r.episode = j.at("episode").get<int>();
    r.step = j.at("step").get<int>();
    r.target = j.at("target").get<int>();
    r.orientation_bin = j.at("orientation_bin").get<int>();
    r.ray_depth = j.at("rays").at("depth").get<std::vector<float>>();
    r.ray_class = j.at("rays").at("class").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed predict message: ") + e.what());
  }
  r.local = tensor_from_json(j.at("local"), "local");
  r.global = tensor_from_json(j.at("global"), "global");
  const std::vector<std::uint32_t> want{kMapChannels, kLocalMapSize, kLocalMapSize};
  if (r.local.shape != want || r.global.shape != want) throw ProtocolError("predict maps must be [18,140,140]");
  if (r.orientation_bin < 1 || r.orientation_bin > 8) throw ProtocolError("orientation_bin out of 1..8");
  if (r.target < 0 || r.target >= static_cast<int>(kTargetCategories.size())) throw ProtocolError("unknown target id");
  if (r.ray_depth.size() != r.ray_class.size()) throw ProtocolError("ray depth and class lengths differ");
  return r;
}

inline json costmap_message(const Tensor& nav, const Tensor& occ) {
  return {{"type", "costmap"}, {"nav", tensor_to_json(nav)}, {"occ", tensor_to_json(occ)}};
}

inline std::string shape_string(const std::vector<std::uint32_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

/// Checks a costmap head against the response contract: shape [1,140,140],
/// finite values in [0,1].
inline Grid<double> validated_head(const Tensor& t, std::string_view name) {
  const std::vector<std::uint32_t> want{1, kLocalMapSize, kLocalMapSize};
  if (t.shape != want)
    throw ProtocolError(std::string(name) + " has shape " + shape_string(t.shape) + ", expected " + shape_string(want));
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    const float v = t.data[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
      throw ProtocolError(std::string(name) + " value " + std::to_string(v) + " at flat index " + std::to_string(i) +
                          " is outside [0,1]");
  }
  return tensor_grid(t);
}

/// Decodes a costmap reply; an error reply becomes a ProtocolError carrying the
/// peer's message.
inline PredictionResponse parse_costmap(const json& j, Cell origin, double resolution) {
  if (!j.is_object() || !j.contains("type")) throw ProtocolError("reply is not a typed message");
  if (j["type"] == "error") throw ProtocolError("predictor error: " + j.value("message", std::string("?")));
  if (j["type"] != "costmap") throw ProtocolError("expected costmap, got " + j["type"].dump());
  if (!j.contains("nav") || !j.contains("occ")) throw ProtocolError("costmap reply needs nav and occ");
  PredictionResponse r;
  r.nav = validated_head(tensor_from_json(j["nav"], "nav"), "nav");
  r.occ = validated_head(tensor_from_json(j["occ"], "occ"), "occ");
  r.origin = origin;
  r.resolution = resolution;
  return r;
}

inline json parse_line(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("message is not JSON: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

/// Newline-delimited messages over a pair of file descriptors.
class LineChannel {
 public:
  LineChannel() = default;
  LineChannel(int read_fd, int write_fd, bool is_socket = false, bool owns = true)
      : rfd_(read_fd), wfd_(write_fd), socket_(is_socket), owns_(owns) {}
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;
  LineChannel(LineChannel&& o) noexcept { *this = std::move(o); }
  LineChannel& operator=(LineChannel&& o) noexcept {
    if (this != &o) {
      close();
      rfd_ = std::exchange(o.rfd_, -1);
      wfd_ = std::exchange(o.wfd_, -1);
      socket_ = o.socket_;
      owns_ = o.owns_;
      buffer_ = std::move(o.buffer_);
    }
    return *this;
  }
  ~LineChannel() { close(); }

  [[nodiscard]] bool open() const noexcept { return rfd_ >= 0 && wfd_ >= 0; }

  void close() noexcept {
    if (owns_) {
      if (rfd_ >= 0) ::close(rfd_);
      if (wfd_ >= 0 && wfd_ != rfd_) ::close(wfd_);
    }
    rfd_ = wfd_ = -1;
    buffer_.clear();
  }

  void write_line(std::string_view line) {
    if (!open()) throw ConnectionError("channel is closed");
    std::string msg(line);
    msg.push_back('\n');
    std::size_t off = 0;
    while (off < msg.size()) {
      const ssize_t n = socket_ ? ::send(wfd_, msg.data() + off, msg.size() - off, MSG_NOSIGNAL)
                                : ::write(wfd_, msg.data() + off, msg.size() - off);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) throw ConnectionError(std::string("write failed: ") + std::strerror(errno));
      off += static_cast<std::size_t>(n);
    }
  }

  void send(const json& j) { write_line(j.dump()); }

  /// Next line without its newline. Throws TimeoutError when nothing complete
  /// arrives within `timeout_ms` (negative waits forever) and ConnectionError on
  /// end of stream.
  std::string read_line(int timeout_ms = kDefaultTimeoutMs) {
    if (!open()) throw ConnectionError("channel is closed");
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      if (buffer_.size() > kMaxLineBytes) throw ProtocolError("message exceeds the line size limit");
      int wait = -1;
      if (timeout_ms >= 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) throw TimeoutError("no reply within " + std::to_string(timeout_ms) + " ms");
        wait = static_cast<int>(left.count());
      }
      pollfd p{rfd_, POLLIN, 0};
      const int rc = ::poll(&p, 1, wait);
      if (rc < 0 && errno == EINTR) continue;
      if (rc < 0) throw ConnectionError(std::string("poll failed: ") + std::strerror(errno));
      if (rc == 0) continue;  // deadline check above
      char chunk[65536];
      const ssize_t n = ::read(rfd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n < 0) throw ConnectionError(std::string("read failed: ") + std::strerror(errno));
      if (n == 0) throw ConnectionError("peer closed the stream");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  json receive(int timeout_ms = kDefaultTimeoutMs) { return parse_line(read_line(timeout_ms)); }

 private:
  int rfd_ = -1;
  int wfd_ = -1;
  bool socket_ = false;
  bool owns_ = true;
  std::string buffer_;
};

/// Splits "host:port"; nullopt when the text is not of that form.
inline std::optional<std::pair<std::string, int>> parse_host_port(std::string_view endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == endpoint.size()) return std::nullopt;
  const std::string_view port = endpoint.substr(colon + 1);
  int p = 0;
  for (char c : port) {
    if (c < '0' || c > '9') return std::nullopt;
    p = p * 10 + (c - '0');
    if (p > 65535) return std::nullopt;
  }
  const std::string_view host = endpoint.substr(0, colon);
  if (host.find(' ') != std::string_view::npos) return std::nullopt;
  return std::pair{std::string(host), p};
}

inline LineChannel connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res); rc != 0)
    throw ConnectionError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  int fd = -1;
  for (addrinfo* a = res; a; a = a->ai_next) {
    fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw ConnectionError("cannot connect to " + host + ":" + std::to_string(port));
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return LineChannel(fd, fd, true);
}

/// A predictor started with `/bin/sh -c command`, spoken to over its stdin and
/// stdout.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw ConnectionError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw ConnectionError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) throw ConnectionError("fork failed");
    if (pid_ == 0) {
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
    // A dead child must surface as a write error, not kill this process.
    ::signal(SIGPIPE, SIG_IGN);
    channel_ = LineChannel(from_child[0], to_child[1]);
  }
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;
  ~ChildProcess() {
    channel_.close();
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }

  LineChannel& channel() noexcept { return channel_; }

 private:
  pid_t pid_ = -1;
  LineChannel channel_;
};

/// A connected, handshaken predictor: TCP when `endpoint` is "host:port",
/// otherwise a command to spawn.
class Connection {
 public:
  explicit Connection(const std::string& endpoint, int timeout_ms = kDefaultTimeoutMs) {
    if (auto hp = parse_host_port(endpoint)) {
      tcp_ = connect_tcp(hp->first, hp->second);
    } else {
      child_ = std::make_unique<ChildProcess>(endpoint);
    }
    channel().send(hello_message());
    check_hello(channel().receive(timeout_ms));
  }

  LineChannel& channel() noexcept { return child_ ? child_->channel() : tcp_; }

 private:
  LineChannel tcp_;
  std::unique_ptr<ChildProcess> child_;
};

// ---------------------------------------------------------------------------
// Remote provider
// ---------------------------------------------------------------------------

/// Cost maps from an out-of-process predictor. A broken stream is retried once
/// on a fresh connection; timeouts and contract violations are not.
class RemoteProvider final : public CostMapProvider {
 public:
  explicit RemoteProvider(std::string endpoint, int timeout_ms = kDefaultTimeoutMs)
      : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms) {}

  [[nodiscard]] std::string name() const override { return "remote"; }

  PredictionResponse predict(const PredictionContext& ctx) override {
    const PredictionRequest req = make_request(ctx.episode_id, ctx.step, ctx.episode.target, ctx.pose, ctx.local,
                                               ctx.global, ctx.observation);
    return predict(req, ctx.local.origin(), ctx.local.resolution());
  }

  PredictionResponse predict(const PredictionRequest& req, Cell origin, double resolution) {
    const std::string line = predict_message(req).dump();
    const auto t0 = std::chrono::steady_clock::now();
    json reply;
    try {
      reply = exchange(line);
    } catch (const ConnectionError&) {
      conn_.reset();
      ++reconnects_;
      reply = exchange(line);
    }
    PredictionResponse r = parse_costmap(reply, origin, resolution);
    r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }

  [[nodiscard]] int reconnects() const noexcept { return reconnects_; }

 private:
  json exchange(const std::string& line) {
    if (!conn_) conn_ = std::make_unique<Connection>(endpoint_, timeout_ms_);
    try {
      conn_->channel().write_line(line);
      return conn_->channel().receive(timeout_ms_);
    } catch (const TimeoutError&) {
      conn_.reset();  // a late reply would desynchronize the stream
      throw;
    }
  }

  std::string endpoint_;
  int timeout_ms_;
  std::unique_ptr<Connection> conn_;
  int reconnects_ = 0;
};

// ---------------------------------------------------------------------------
// Stub predictor
// ---------------------------------------------------------------------------

enum class StubMode {
  Uniform,   // nav 0.5 and occ 0 everywhere
  Echo,      // nav = local obstacle channel, occ = local explored channel
  BadShape,  // nav shaped [1,140,139]
  BadRange,  // nav 1.5 everywhere
  Silent,    // never answers a predict
  DropOnce,  // closes the first connection instead of answering, then Uniform
  Mirror,    // answers with the decoded request re-encoded as a predict message
};

inline StubMode parse_stub_mode(std::string_view s) {
  if (s == "uniform") return StubMode::Uniform;
  if (s == "echo") return StubMode::Echo;
  if (s == "bad-shape") return StubMode::BadShape;
  if (s == "bad-range") return StubMode::BadRange;
  if (s == "silent") return StubMode::Silent;
  if (s == "drop-once") return StubMode::DropOnce;
  if (s == "mirror") return StubMode::Mirror;
  throw Error("unknown stub mode '" + std::string(s) + "'");
}

inline json stub_reply(const PredictionRequest& req, StubMode mode) {
  constexpr std::uint32_t n = kLocalMapSize;
  const std::size_t plane = std::size_t{n} * n;
  Tensor nav{{1, n, n}, std::vector<float>(plane, 0.5f)};
  Tensor occ{{1, n, n}, std::vector<float>(plane, 0.0f)};
  switch (mode) {
    case StubMode::Echo:
      nav.data.assign(req.local.data.begin(), req.local.data.begin() + static_cast<std::ptrdiff_t>(plane));
      occ.data.assign(req.local.data.begin() + static_cast<std::ptrdiff_t>(plane),
                      req.local.data.begin() + static_cast<std::ptrdiff_t>(2 * plane));
      break;
    case StubMode::BadShape:
      nav = Tensor{{1, n, n - 1}, std::vector<float>(std::size_t{n} * (n - 1), 0.5f)};
      break;
    case StubMode::BadRange:
      nav.data.assign(plane, 1.5f);
      break;
    case StubMode::Mirror:
      return predict_message(req);
    default:
      break;
  }
  return costmap_message(nav, occ);
}

/// Serves one stream until the peer closes it. Returns false when the stub
/// hung up on purpose (DropOnce).
inline bool serve_channel(LineChannel& ch, StubMode mode, bool drop_now = false) {
  try {
    check_hello(ch.receive(-1));
    ch.send(hello_message());
    for (;;) {
      const std::string line = ch.read_line(-1);
      json reply;
      try {
        const PredictionRequest req = parse_predict(parse_line(line));
        if (mode == StubMode::Silent) continue;
        if (drop_now) {
          ch.close();
          return false;
        }
        reply = stub_reply(req, mode);
      } catch (const ProtocolError& e) {
        reply = error_message(e.what());
      }
      ch.send(reply);
    }
  } catch (const ConnectionError&) {
  } catch (const ProtocolError& e) {
    try {
      ch.send(error_message(e.what()));
    } catch (const Error&) {
    }
  }
  return true;
}

/// Stub predictor on a loopback TCP port, served from a background thread, one
/// connection at a time.
class StubServer {
 public:
  explicit StubServer(StubMode mode, int port = 0) : mode_(mode) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ConnectionError("socket failed");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 8) != 0) {
      ::close(fd_);
      throw ConnectionError("cannot listen on 127.0.0.1:" + std::to_string(port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { loop(); });
  }
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;
  ~StubServer() { stop(); }

  [[nodiscard]] int port() const noexcept { return port_; }
  [[nodiscard]] std::string endpoint() const { return "127.0.0.1:" + std::to_string(port_); }
  [[nodiscard]] int connections() const noexcept { return connections_.load(); }

  void stop() {
    if (stopping_.exchange(true)) return;
    ::shutdown(fd_, SHUT_RDWR);
    ::close(fd_);
    if (const int c = client_.load(); c >= 0) ::shutdown(c, SHUT_RDWR);
    if (thread_.joinable()) thread_.join();
  }

 private:
  void loop() {
    while (!stopping_) {
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) continue;
      const int c = ::accept(fd_, nullptr, nullptr);
      if (c < 0) continue;
      client_ = c;
      const int n = ++connections_;
      LineChannel ch(c, c, true);
      serve_channel(ch, mode_, mode_ == StubMode::DropOnce && n == 1);
      client_ = -1;
    }
  }

  StubMode mode_;
  int fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::atomic<int> client_{-1};
  std::atomic<int> connections_{0};
  std::thread thread_;
};

}  // namespace objnav::wire
