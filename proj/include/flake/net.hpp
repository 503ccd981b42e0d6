#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "flake/error.hpp"
#include "flake/wire.hpp"

namespace flake {

namespace netdetail {

/// Payloads beyond this are treated as stream corruption, not data.
inline constexpr std::uint64_t kMaxPayloadBytes = 1ULL << 31;

inline void set_socket_timeout(int fd, double seconds) {
  timeval tv{};
  tv.tv_sec = static_cast<long>(seconds);
  tv.tv_usec = static_cast<long>((seconds - static_cast<double>(tv.tv_sec)) * 1e6);
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
}

inline sockaddr_in resolve_ipv4(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &result) != 0 || result == nullptr) {
    throw IoError("cannot resolve host: " + host);
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(result->ai_addr);
  addr.sin_port = htons(port);
  freeaddrinfo(result);
  return addr;
}

}  // namespace netdetail

/// A connected byte stream carrying frames. Move-only; closes on destruction.
class TcpStream {
 public:
  TcpStream() = default;
  explicit TcpStream(int fd) : fd_(fd) {}
  TcpStream(TcpStream&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
  TcpStream& operator=(TcpStream&& other) noexcept {
    if (this != &other) {
      close();
      fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
  }
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;
  ~TcpStream() { close(); }

  bool valid() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  /// Connects with retries until the deadline, so a client may start
  /// slightly before its server finishes binding.
  static TcpStream connect(const std::string& host, std::uint16_t port, double timeout_s = 30.0) {
    const sockaddr_in addr = netdetail::resolve_ipv4(host, port);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    while (true) {
      const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (fd < 0) throw IoError("socket(): " + std::string(std::strerror(errno)));
      if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
        const int one = 1;
        setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        netdetail::set_socket_timeout(fd, timeout_s);
        return TcpStream(fd);
      }
      ::close(fd);
      if (std::chrono::steady_clock::now() >= deadline) {
        throw IoError("connect to " + host + ":" + std::to_string(port) + " timed out");
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  void set_timeout(double seconds) { netdetail::set_socket_timeout(fd_, seconds); }

  void write_all(const std::uint8_t* data, std::size_t size) {
    std::size_t sent = 0;
    while (sent < size) {
      const ssize_t n = ::send(fd_, data + sent, size - sent, MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        throw IoError("connection lost while writing");
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void read_exact(std::uint8_t* data, std::size_t size) {
    std::size_t got = 0;
    while (got < size) {
      const ssize_t n = ::recv(fd_, data + got, size - got, 0);
      if (n == 0) throw IoError("connection closed by peer");
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) throw IoError("read timed out");
        throw IoError("read failed: " + std::string(std::strerror(errno)));
      }
      got += static_cast<std::size_t>(n);
    }
  }

  void send_frame(const Frame& frame) {
    const std::vector<std::uint8_t> bytes = encode_frame(frame);
    write_all(bytes.data(), bytes.size());
  }

  Frame recv_frame() {
    std::uint8_t header[kFrameHeaderSize];
    read_exact(header, sizeof(header));
    const FrameHeader h = parse_frame_header(header);
    if (h.payload_len > netdetail::kMaxPayloadBytes) {
      throw ProtocolError("frame payload of " + std::to_string(h.payload_len) + " bytes exceeds limit");
    }
    Frame f;
    f.type = h.type;
    f.party_id = h.party_id;
    f.iteration = h.iteration;
    f.payload.resize(h.payload_len);
    if (h.payload_len > 0) read_exact(f.payload.data(), f.payload.size());
    return f;
  }

 private:
  int fd_ = -1;
};

/// A bound, listening IPv4 socket. Binding to port 0 picks an ephemeral
/// port, which port() reports so orchestration can pass it to clients.
class TcpListener {
 public:
  explicit TcpListener(const std::string& address = "127.0.0.1", std::uint16_t port = 0) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw IoError("socket(): " + std::string(std::strerror(errno)));
    const int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr = netdetail::resolve_ipv4(address, port);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string msg = std::strerror(errno);
      ::close(fd_);
      throw IoError("bind " + address + ":" + std::to_string(port) + " failed: " + msg);
    }
    if (::listen(fd_, 16) != 0) {
      const std::string msg = std::strerror(errno);
      ::close(fd_);
      throw IoError("listen failed: " + msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  TcpListener(TcpListener&& other) noexcept
      : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }

  std::uint16_t port() const { return port_; }

  TcpStream accept(double timeout_s = 30.0) {
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(timeout_s * 1000.0));
    if (rc == 0) throw IoError("accept timed out");
    if (rc < 0) throw IoError("poll failed: " + std::string(std::strerror(errno)));
    const int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) throw IoError("accept failed: " + std::string(std::strerror(errno)));
    const int one = 1;
    setsockopt(client, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    netdetail::set_socket_timeout(client, timeout_s);
    return TcpStream(client);
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace flake
