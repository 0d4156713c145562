#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "fedveca/fed_core.hpp"

namespace fedveca {

// Wire messages. Byte layout is documented in FRAMING.md.
struct RoundStartMsg {
  std::uint32_t round = 0;
  std::uint32_t tau = 1;  // step count for the receiving client
  ParamVector params;

  friend bool operator==(const RoundStartMsg&, const RoundStartMsg&) = default;
};

struct PrevGlobalGradMsg {
  std::uint32_t round = 0;  // the k-1 the gradient was taken at
  ParamVector grad;

  friend bool operator==(const PrevGlobalGradMsg&, const PrevGlobalGradMsg&) = default;
};

struct ClientReportMsg {
  ClientReport report;

  friend bool operator==(const ClientReportMsg&, const ClientReportMsg&) = default;
};

struct StopMsg {
  friend bool operator==(const StopMsg&, const StopMsg&) = default;
};

using Message = std::variant<RoundStartMsg, PrevGlobalGradMsg, ClientReportMsg, StopMsg>;

// frame := length:u32be | tag:u8 | payload, where length = 1 + |payload|.
std::vector<std::uint8_t> encode_frame(const Message& m);

// Inverse of encode_frame on a complete frame. Throws BadTagError,
// TruncatedFrameError or LengthMismatchError.
Message decode_frame(std::span<const std::uint8_t> frame);

// Ordered, reliable, message-oriented duplex channel.
class MessageChannel {
 public:
  virtual ~MessageChannel() = default;
  virtual void send(const Message& m) = 0;
  // Blocks until a message arrives; throws TimeoutError on expiry when a
  // timeout is given.
  virtual Message recv(std::optional<std::chrono::milliseconds> timeout) = 0;
};

// In-process bus: a pair of queue-backed endpoints.
class InProcConduit {
 public:
  InProcConduit();
  MessageChannel& server_end() { return *server_end_; }
  MessageChannel& client_end() { return *client_end_; }

 private:
  struct Queue {
    std::mutex mutex;
    std::condition_variable cv;
    std::deque<Message> items;
  };
  class Endpoint;
  std::shared_ptr<Queue> to_client_;
  std::shared_ptr<Queue> to_server_;
  std::unique_ptr<MessageChannel> server_end_;
  std::unique_ptr<MessageChannel> client_end_;
};

// Loopback TCP transport. The server listens, each client connects and
// announces its id with a 4-byte big-endian preamble, then frames flow in
// both directions.
class TcpListener {
 public:
  explicit TcpListener(std::uint16_t port);  // port 0 picks an ephemeral port
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  // Accepts one connection and reads the client-id preamble.
  std::pair<std::uint32_t, std::unique_ptr<MessageChannel>> accept_client(
      std::optional<std::chrono::milliseconds> timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Connects to 127.0.0.1:port and sends the client-id preamble.
std::unique_ptr<MessageChannel> tcp_connect_client(std::uint16_t port,
                                                   std::uint32_t client_id);

// Sends RoundStart (and PrevGlobalGrad when round >= 1) to every client,
// blocks until all reports arrive, and returns them sorted by client id.
// Channel index i addresses client i. Throws RoundAbortError naming the
// client on timeout or protocol violation.
std::vector<ClientReport> broadcast_and_collect(
    std::span<MessageChannel* const> clients, const RoundPlan& plan,
    std::optional<std::chrono::milliseconds> timeout);

void broadcast_stop(std::span<MessageChannel* const> clients);

}  // namespace fedveca
