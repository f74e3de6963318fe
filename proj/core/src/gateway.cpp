// SPDX-License-Identifier: Apache-2.0
#include "ntd/gateway.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <limits>

#include "ntd/batch.hpp"
#include "ntd/error.hpp"
#include "ntd/kvdoc.hpp"

namespace ntd {

namespace {

constexpr std::uint64_t kServiceStream = 0x7365727669636500ULL;

std::string render_embedding(std::span<const float> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += format_shortest(values[i]);
  }
  return out;
}

bool read_exact(int fd, char* buf, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t r = ::recv(fd, buf + got, len - got, 0);
    if (r == 0) return false;
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

bool write_all(int fd, std::string_view bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t r = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

// Reads one frame. nullopt on clean EOF or a connection error. Throws
// kProtocol for frames over kMaxFrameBytes (the stream cannot be resynced).
std::optional<std::string> read_frame_fd(int fd) {
  char header[kFrameHeaderBytes];
  if (!read_exact(fd, header, sizeof header)) return std::nullopt;
  const std::uint32_t len = decode_frame_length(std::string_view(header, sizeof header));
  if (len > kMaxFrameBytes) {
    throw Error(ErrorCode::kProtocol, "frame of " + std::to_string(len) + " bytes exceeds the " +
                                          std::to_string(kMaxFrameBytes) + "-byte limit");
  }
  std::string payload(len, '\0');
  if (len > 0 && !read_exact(fd, payload.data(), len)) return std::nullopt;
  return payload;
}

GatewayResponse error_response(std::string input_id, ErrorCode code, std::string message) {
  GatewayResponse r;
  r.input_id = std::move(input_id);
  r.ok = false;
  r.error_code = std::string(to_string(code));
  r.error = std::move(message);
  return r;
}

in_addr resolve_ipv4(const std::string& host) {
  in_addr addr{};
  const std::string literal = host == "localhost" ? "127.0.0.1" : host;
  if (::inet_pton(AF_INET, literal.c_str(), &addr) != 1) {
    throw Error(ErrorCode::kInvalidArgument, "not an IPv4 address: '" + host + "'");
  }
  return addr;
}

}  // namespace

std::string encode_frame(std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) {
    throw Error(ErrorCode::kProtocol, "payload exceeds the frame size limit");
  }
  const auto len = static_cast<std::uint32_t>(payload.size());
  std::string out;
  out.reserve(kFrameHeaderBytes + payload.size());
  out.push_back(static_cast<char>((len >> 24) & 0xffu));
  out.push_back(static_cast<char>((len >> 16) & 0xffu));
  out.push_back(static_cast<char>((len >> 8) & 0xffu));
  out.push_back(static_cast<char>(len & 0xffu));
  out.append(payload);
  return out;
}

std::uint32_t decode_frame_length(std::string_view header) {
  if (header.size() != kFrameHeaderBytes) {
    throw Error(ErrorCode::kProtocol, "frame header must be 4 bytes");
  }
  auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(header[i])); };
  return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

std::string GatewayRequest::render() const {
  KvDocument doc;
  doc.set("input_id", input_id);
  doc.set("predicted_class", std::to_string(predicted_class));
  if (embedding) doc.set("embedding", render_embedding(*embedding));
  if (embedding_ref) doc.set("embedding_ref", *embedding_ref);
  return doc.render();
}

GatewayRequest GatewayRequest::parse(std::string_view payload) {
  const KvDocument doc = KvDocument::parse(payload);
  GatewayRequest req;
  req.input_id = std::string(doc.require("input_id"));
  const auto cls = parse_u64(doc.require("predicted_class"));
  if (cls > std::numeric_limits<std::uint32_t>::max()) {
    throw Error(ErrorCode::kParse, "predicted_class out of range");
  }
  req.predicted_class = static_cast<std::uint32_t>(cls);
  if (auto e = doc.get("embedding")) req.embedding = parse_reals(*e);
  if (auto r = doc.get("embedding_ref")) req.embedding_ref = std::string(*r);
  if (req.embedding.has_value() == req.embedding_ref.has_value()) {
    throw Error(ErrorCode::kParse, "request needs exactly one of embedding / embedding_ref");
  }
  return req;
}

std::string GatewayResponse::render() const {
  KvDocument doc;
  if (!input_id.empty()) doc.set("input_id", input_id);
  if (!ok) {
    doc.set("status", "error");
    doc.set("error_code", error_code);
    doc.set("error", error);
    return doc.render();
  }
  doc.set("status", "ok");
  doc.set("decision", std::string(decision_name(decision)));
  doc.set("score", format_real17(score));
  doc.set("threshold", format_real17(threshold));
  doc.set("class", std::to_string(cls));
  doc.set("latency_us", std::to_string(latency_us));
  doc.set("request_seq", std::to_string(request_seq));
  doc.set("seed", std::to_string(seed));
  doc.set("degraded", degraded ? "1" : "0");
  return doc.render();
}

GatewayResponse GatewayResponse::parse(std::string_view payload) {
  const KvDocument doc = KvDocument::parse(payload);
  GatewayResponse r;
  if (auto id = doc.get("input_id")) r.input_id = std::string(*id);
  const auto status = doc.require("status");
  if (status == "error") {
    r.ok = false;
    r.error_code = std::string(doc.require("error_code"));
    r.error = std::string(doc.require("error"));
    return r;
  }
  if (status != "ok") throw Error(ErrorCode::kParse, "unknown response status '" + std::string(status) + "'");
  r.ok = true;
  const auto decision = doc.require("decision");
  if (decision == "benign") {
    r.decision = Decision::kBenign;
  } else if (decision == "trigger") {
    r.decision = Decision::kTrigger;
  } else {
    throw Error(ErrorCode::kParse, "unknown decision '" + std::string(decision) + "'");
  }
  r.score = parse_real(doc.require("score"));
  r.threshold = parse_real(doc.require("threshold"));
  r.cls = static_cast<std::uint32_t>(parse_u64(doc.require("class")));
  r.latency_us = parse_u64(doc.require("latency_us"));
  r.request_seq = parse_u64(doc.require("request_seq"));
  r.seed = parse_u64(doc.require("seed"));
  r.degraded = doc.require("degraded") == "1";
  return r;
}

std::uint64_t request_seed(std::uint64_t service_seed, std::uint64_t request_seq) noexcept {
  return derive_seed(service_seed, kServiceStream, request_seq);
}

// ---------------------------------------------------------------------------

RequestHandler::RequestHandler(std::shared_ptr<const Detector> detector, std::uint64_t service_seed,
                               EmbeddingRegistry registry)
    : detector_(std::move(detector)), seed_(service_seed), registry_(std::move(registry)) {
  if (!detector_) throw Error(ErrorCode::kInvalidArgument, "request handler needs a detector");
}

GatewayResponse RequestHandler::handle(std::string_view payload) {
  if (payload.empty()) {
    return error_response({}, ErrorCode::kProtocol, "empty frame");
  }
  GatewayRequest req;
  try {
    req = GatewayRequest::parse(payload);
  } catch (const Error& e) {
    return error_response({}, ErrorCode::kProtocol, e.what());
  }

  FeatureVector embedding;
  if (req.embedding) {
    embedding = FeatureVector(std::move(*req.embedding));
  } else {
    auto it = registry_.find(*req.embedding_ref);
    if (it == registry_.end()) {
      return error_response(req.input_id, ErrorCode::kInvalidArgument,
                            "unknown embedding_ref '" + *req.embedding_ref + "'");
    }
    embedding = it->second;
  }

  const std::uint64_t seq = next_seq_.fetch_add(1);
  const std::uint64_t seed = request_seed(seed_, seq);
  try {
    const Query query{req.input_id, ClassId{req.predicted_class}, std::move(embedding)};
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(seed);
    const Verdict v = detector_->detect(query, rng);
    const auto t1 = std::chrono::steady_clock::now();

    GatewayResponse r;
    r.input_id = req.input_id;
    r.ok = true;
    r.decision = v.decision;
    r.score = v.score;
    r.threshold = v.threshold;
    r.cls = v.cls.value;
    r.latency_us = static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(t1 - t0).count());
    r.request_seq = seq;
    r.seed = seed;
    r.degraded = v.degraded;
    return r;
  } catch (const Error& e) {
    return error_response(req.input_id, e.code(), e.what());
  }
}

// ---------------------------------------------------------------------------

GatewayServer::GatewayServer(std::shared_ptr<const Detector> detector, ServerOptions options)
    : handler_(std::move(detector), options.seed, std::move(options.registry)), options_(std::move(options)) {}

GatewayServer::~GatewayServer() { stop(); }

void GatewayServer::start() {
  if (listen_fd_ >= 0) return;
  const in_addr addr = resolve_ipv4(options_.host);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kIo, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr = addr;
  sa.sin_port = htons(options_.port);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0 || ::listen(listen_fd_, 128) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::kIo, "cannot listen on " + options_.host + ":" + std::to_string(options_.port) +
                                    ": " + why);
  }
  socklen_t len = sizeof sa;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
  port_ = ntohs(sa.sin_port);
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void GatewayServer::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;

  std::vector<std::unique_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(connections_);
  }
  for (auto& c : conns) ::shutdown(c->fd, SHUT_RDWR);
  for (auto& c : conns) {
    if (c->worker.joinable()) c->worker.join();
    ::close(c->fd);
  }
}

void GatewayServer::reap_finished() {
  std::lock_guard lock(mu_);
  std::erase_if(connections_, [](std::unique_ptr<Connection>& c) {
    if (!c->done.load()) return false;
    if (c->worker.joinable()) c->worker.join();
    ::close(c->fd);
    return true;
  });
}

void GatewayServer::accept_loop() {
  while (!stopping_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, 100);
    if (ready <= 0 || !(pfd.revents & POLLIN)) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

    reap_finished();
    auto conn = std::make_unique<Connection>();
    conn->fd = fd;
    Connection& ref = *conn;
    std::lock_guard lock(mu_);
    connections_.push_back(std::move(conn));
    ref.worker = std::thread([this, &ref] { serve_connection(ref); });
  }
}

void GatewayServer::serve_connection(Connection& conn) {
  while (!stopping_.load()) {
    std::optional<std::string> payload;
    try {
      payload = read_frame_fd(conn.fd);
    } catch (const Error& e) {
      // Oversized frame: answer, then drop the connection.
      write_all(conn.fd, encode_frame(error_response({}, ErrorCode::kProtocol, e.what()).render()));
      break;
    }
    if (!payload) break;
    const GatewayResponse response = handler_.handle(*payload);
    if (!write_all(conn.fd, encode_frame(response.render()))) break;
  }
  // The peer sees EOF now; the descriptor itself is closed by the reaper.
  ::shutdown(conn.fd, SHUT_RDWR);
  conn.done = true;
}

// ---------------------------------------------------------------------------

GatewayClient::GatewayClient(const std::string& host, std::uint16_t port) {
  const in_addr addr = resolve_ipv4(host);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::kIo, std::string("socket: ") + std::strerror(errno));
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr = addr;
  sa.sin_port = htons(port);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kIo, "cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

GatewayClient::~GatewayClient() {
  if (fd_ >= 0) ::close(fd_);
}

void GatewayClient::send_bytes(std::string_view bytes) {
  if (!write_all(fd_, bytes)) throw Error(ErrorCode::kIo, "send failed");
}

std::optional<std::string> GatewayClient::read_frame() { return read_frame_fd(fd_); }

std::string GatewayClient::call_raw(std::string_view payload) {
  send_bytes(encode_frame(payload));
  auto reply = read_frame();
  if (!reply) throw Error(ErrorCode::kIo, "connection closed before a response arrived");
  return *reply;
}

GatewayResponse GatewayClient::call(const GatewayRequest& request) {
  return GatewayResponse::parse(call_raw(request.render()));
}

std::pair<std::string, std::uint16_t> parse_endpoint(std::string_view endpoint) {
  const auto colon = endpoint.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw Error(ErrorCode::kInvalidArgument, "expected host:port, got '" + std::string(endpoint) + "'");
  }
  const auto port = parse_u64(endpoint.substr(colon + 1));
  if (port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
  std::string host(endpoint.substr(0, colon));
  resolve_ipv4(host);
  return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace ntd
