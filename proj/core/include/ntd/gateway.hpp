// SPDX-License-Identifier: Apache-2.0
//
// Sidecar detection service.
//
// Wire format: each message is a frame of a 4-byte big-endian payload length
// followed by that many bytes of UTF-8 text. The text is a key=value
// document (see kvdoc.hpp).
//
// Request keys:  input_id, predicted_class, and either embedding (space
//                separated reals) or embedding_ref (name of a pre-registered
//                embedding).
// Response keys: input_id, status=ok, decision, score, threshold, class,
//                latency_us, request_seq, seed, degraded
//            or: input_id (when known), status=error, error_code, error.
//
// The comparison set for request k is sampled with
// Rng(request_seed(service_seed, k)), so any verdict can be replayed offline
// with detect_one().
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ntd/detect.hpp"

namespace ntd {

inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kMaxFrameBytes = 16u << 20;

std::string encode_frame(std::string_view payload);
/// Big-endian length prefix of a 4-byte header.
std::uint32_t decode_frame_length(std::string_view header);

struct GatewayRequest {
  std::string input_id;
  std::uint32_t predicted_class = 0;
  std::optional<std::vector<float>> embedding;
  std::optional<std::string> embedding_ref;

  std::string render() const;
  static GatewayRequest parse(std::string_view payload);
};

struct GatewayResponse {
  std::string input_id;
  bool ok = false;
  std::string error_code;
  std::string error;
  Decision decision = Decision::kBenign;
  double score = 0.0;
  double threshold = 0.0;
  std::uint32_t cls = 0;
  std::uint64_t latency_us = 0;
  std::uint64_t request_seq = 0;
  std::uint64_t seed = 0;
  bool degraded = false;

  std::string render() const;
  static GatewayResponse parse(std::string_view payload);
};

std::uint64_t request_seed(std::uint64_t service_seed, std::uint64_t request_seq) noexcept;

using EmbeddingRegistry = std::map<std::string, FeatureVector, std::less<>>;

/// Request handling without sockets. `next_seq` is consulted only for
/// well-formed requests; protocol errors do not consume a sequence number.
class RequestHandler {
 public:
  RequestHandler(std::shared_ptr<const Detector> detector, std::uint64_t service_seed,
                 EmbeddingRegistry registry = {});

  GatewayResponse handle(std::string_view payload);

  std::uint64_t requests_handled() const noexcept { return next_seq_.load(); }
  std::uint64_t service_seed() const noexcept { return seed_; }

 private:
  std::shared_ptr<const Detector> detector_;
  std::uint64_t seed_;
  EmbeddingRegistry registry_;
  std::atomic<std::uint64_t> next_seq_{0};
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks an ephemeral port
  std::uint64_t seed = 0;
  EmbeddingRegistry registry;
};

/// Thread-per-connection TCP server over IPv4.
class GatewayServer {
 public:
  GatewayServer(std::shared_ptr<const Detector> detector, ServerOptions options);
  ~GatewayServer();

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds, listens and starts the accept loop. Throws kIo on failure.
  void start();
  /// Stops accepting, closes live connections and joins all threads.
  void stop();

  std::uint16_t port() const noexcept { return port_; }
  std::uint64_t requests_handled() const noexcept { return handler_.requests_handled(); }

 private:
  struct Connection {
    int fd = -1;
    std::thread worker;
    std::atomic<bool> done{false};
  };

  void accept_loop();
  void serve_connection(Connection& conn);
  void reap_finished();

  RequestHandler handler_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::unique_ptr<Connection>> connections_;
};

/// Blocking client, one connection.
class GatewayClient {
 public:
  GatewayClient(const std::string& host, std::uint16_t port);
  ~GatewayClient();

  GatewayClient(const GatewayClient&) = delete;
  GatewayClient& operator=(const GatewayClient&) = delete;

  GatewayResponse call(const GatewayRequest& request);
  /// Sends one framed payload and returns the raw response payload.
  std::string call_raw(std::string_view payload);
  /// Writes bytes as-is (for malformed-frame testing).
  void send_bytes(std::string_view bytes);
  /// Reads one response frame; nullopt if the server closed the connection.
  std::optional<std::string> read_frame();

 private:
  int fd_ = -1;
};

/// "host:port" with an IPv4 literal or "localhost".
std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint);

}  // namespace ntd
