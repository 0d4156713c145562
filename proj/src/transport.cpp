#include "fedveca/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cstring>
#include <string>

#include "fedveca/error.hpp"

namespace fedveca {

namespace {

constexpr std::uint8_t kTagRoundStart = 0x01;
constexpr std::uint8_t kTagPrevGlobalGrad = 0x02;
constexpr std::uint8_t kTagClientReport = 0x03;
constexpr std::uint8_t kTagStop = 0x04;
constexpr std::size_t kMaxFrameLen = 0x7FFFFFFF;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_f64(std::vector<std::uint8_t>& out, double x) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(bits >> shift));
  }
}

void put_vec(std::vector<std::uint8_t>& out, const ParamVector& v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  for (double x : v) put_f64(out, x);
}

// Cursor over a payload; every read checks the remaining length.
struct Reader {
  std::span<const std::uint8_t> data;
  std::size_t pos = 0;

  std::uint32_t u32() {
    if (pos + 4 > data.size()) throw TruncatedFrameError("frame: truncated u32");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | data[pos++];
    return v;
  }

  std::uint8_t u8() {
    if (pos + 1 > data.size()) throw TruncatedFrameError("frame: truncated u8");
    return data[pos++];
  }

  double f64() {
    if (pos + 8 > data.size()) throw TruncatedFrameError("frame: truncated f64");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits = (bits << 8) | data[pos++];
    return std::bit_cast<double>(bits);
  }

  ParamVector vec() {
    const std::uint32_t dim = u32();
    if (pos + 8ull * dim > data.size()) {
      throw TruncatedFrameError("frame: truncated vector body");
    }
    ParamVector v(dim);
    for (std::uint32_t i = 0; i < dim; ++i) v[i] = f64();
    return v;
  }

  void expect_consumed() const {
    if (pos != data.size()) {
      throw LengthMismatchError("frame: " + std::to_string(data.size() - pos) +
                                " unexpected trailing bytes");
    }
  }
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const Message& m) {
  std::vector<std::uint8_t> body;  // tag + payload
  if (const auto* rs = std::get_if<RoundStartMsg>(&m)) {
    body.push_back(kTagRoundStart);
    put_u32(body, rs->round);
    put_u32(body, rs->tau);
    put_vec(body, rs->params);
  } else if (const auto* pg = std::get_if<PrevGlobalGradMsg>(&m)) {
    body.push_back(kTagPrevGlobalGrad);
    put_u32(body, pg->round);
    put_vec(body, pg->grad);
  } else if (const auto* cr = std::get_if<ClientReportMsg>(&m)) {
    const ClientReport& r = cr->report;
    if (r.beta.has_value() != r.delta.has_value()) {
      throw ContractError("encode_frame: beta and delta must be present together");
    }
    body.push_back(kTagClientReport);
    put_u32(body, r.client_id);
    put_u32(body, r.tau_used);
    put_f64(body, r.loss_at_start);
    body.push_back(r.beta.has_value() ? 1 : 0);
    if (r.beta.has_value()) {
      put_f64(body, *r.beta);
      put_f64(body, *r.delta);
    }
    put_vec(body, r.normalized_grad);
    put_vec(body, r.grad_at_start);
  } else {
    body.push_back(kTagStop);
  }

  if (body.size() > kMaxFrameLen) throw FrameTooLargeError("frame exceeds 2^31 bytes");
  std::vector<std::uint8_t> frame;
  frame.reserve(4 + body.size());
  put_u32(frame, static_cast<std::uint32_t>(body.size()));
  frame.insert(frame.end(), body.begin(), body.end());
  return frame;
}

Message decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < 4) throw TruncatedFrameError("frame: missing length header");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | frame[i];
  if (len < 1) throw LengthMismatchError("frame: declared length below 1");
  if (frame.size() - 4 < len) throw TruncatedFrameError("frame: body shorter than declared");
  if (frame.size() - 4 > len) {
    throw LengthMismatchError("frame: body longer than declared");
  }

  const std::uint8_t tag = frame[4];
  Reader r{frame.subspan(5), 0};
  switch (tag) {
    case kTagRoundStart: {
      RoundStartMsg msg;
      msg.round = r.u32();
      msg.tau = r.u32();
      msg.params = r.vec();
      r.expect_consumed();
      return msg;
    }
    case kTagPrevGlobalGrad: {
      PrevGlobalGradMsg msg;
      msg.round = r.u32();
      msg.grad = r.vec();
      r.expect_consumed();
      return msg;
    }
    case kTagClientReport: {
      ClientReportMsg msg;
      msg.report.client_id = r.u32();
      msg.report.tau_used = r.u32();
      msg.report.loss_at_start = r.f64();
      const std::uint8_t flags = r.u8();
      if (flags > 1) throw BadTagError("frame: bad report flags");
      if (flags == 1) {
        msg.report.beta = r.f64();
        msg.report.delta = r.f64();
      }
      msg.report.normalized_grad = r.vec();
      msg.report.grad_at_start = r.vec();
      r.expect_consumed();
      return msg;
    }
    case kTagStop: {
      r.expect_consumed();
      return StopMsg{};
    }
    default:
      throw BadTagError("frame: unknown tag " + std::to_string(tag));
  }
}

// ---------------------------------------------------------------------------
// In-process bus

class InProcConduit::Endpoint : public MessageChannel {
 public:
  Endpoint(std::shared_ptr<Queue> out, std::shared_ptr<Queue> in)
      : out_(std::move(out)), in_(std::move(in)) {}

  void send(const Message& m) override {
    {
      std::lock_guard<std::mutex> lock(out_->mutex);
      out_->items.push_back(m);
    }
    out_->cv.notify_one();
  }

  Message recv(std::optional<std::chrono::milliseconds> timeout) override {
    std::unique_lock<std::mutex> lock(in_->mutex);
    const auto ready = [this] { return !in_->items.empty(); };
    if (timeout) {
      if (!in_->cv.wait_for(lock, *timeout, ready)) {
        throw TimeoutError("inproc channel: receive timed out");
      }
    } else {
      in_->cv.wait(lock, ready);
    }
    Message m = std::move(in_->items.front());
    in_->items.pop_front();
    return m;
  }

 private:
  std::shared_ptr<Queue> out_;
  std::shared_ptr<Queue> in_;
};

InProcConduit::InProcConduit()
    : to_client_(std::make_shared<Queue>()), to_server_(std::make_shared<Queue>()) {
  server_end_ = std::make_unique<Endpoint>(to_client_, to_server_);
  client_end_ = std::make_unique<Endpoint>(to_server_, to_client_);
}

// ---------------------------------------------------------------------------
// TCP transport

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

void send_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("tcp send");
    }
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

// Reads exactly len bytes, honoring the remaining time budget.
void recv_all(int fd, std::uint8_t* data, std::size_t len,
              std::optional<std::chrono::steady_clock::time_point> deadline) {
  while (len > 0) {
    if (deadline) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= *deadline) throw TimeoutError("tcp recv: timed out");
      const auto budget =
          std::chrono::duration_cast<std::chrono::milliseconds>(*deadline - now);
      struct pollfd pfd{fd, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(budget.count()) + 1);
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw_errno("tcp poll");
      }
      if (rc == 0) throw TimeoutError("tcp recv: timed out");
    }
    const ssize_t n = ::recv(fd, data, len, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("tcp recv");
    }
    if (n == 0) throw TransportError("tcp recv: connection closed");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

class TcpChannel : public MessageChannel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {}
  ~TcpChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  void send(const Message& m) override {
    const auto frame = encode_frame(m);
    send_all(fd_, frame.data(), frame.size());
  }

  Message recv(std::optional<std::chrono::milliseconds> timeout) override {
    std::optional<std::chrono::steady_clock::time_point> deadline;
    if (timeout) deadline = std::chrono::steady_clock::now() + *timeout;
    std::uint8_t header[4];
    recv_all(fd_, header, 4, deadline);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len = (len << 8) | header[i];
    if (len < 1 || len > kMaxFrameLen) {
      throw LengthMismatchError("tcp recv: bad frame length");
    }
    std::vector<std::uint8_t> frame(4 + static_cast<std::size_t>(len));
    std::memcpy(frame.data(), header, 4);
    recv_all(fd_, frame.data() + 4, len, deadline);
    return decode_frame(frame);
  }

  int fd() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

TcpListener::TcpListener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw_errno("tcp listener socket");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    throw_errno("tcp bind");
  }
  if (::listen(fd_, 64) < 0) throw_errno("tcp listen");
  socklen_t len = sizeof(addr);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
    throw_errno("tcp getsockname");
  }
  port_ = ntohs(addr.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::pair<std::uint32_t, std::unique_ptr<MessageChannel>> TcpListener::accept_client(
    std::optional<std::chrono::milliseconds> timeout) {
  std::optional<std::chrono::steady_clock::time_point> deadline;
  if (timeout) deadline = std::chrono::steady_clock::now() + *timeout;
  if (deadline) {
    struct pollfd pfd{fd_, POLLIN, 0};
    const auto budget = std::chrono::duration_cast<std::chrono::milliseconds>(
        *deadline - std::chrono::steady_clock::now());
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::max<long>(budget.count(), 0)) + 1);
    if (rc == 0) throw TimeoutError("tcp accept: timed out");
    if (rc < 0) throw_errno("tcp accept poll");
  }
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw_errno("tcp accept");
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  auto channel = std::make_unique<TcpChannel>(fd);
  std::uint8_t preamble[4];
  recv_all(fd, preamble, 4, deadline);
  std::uint32_t id = 0;
  for (int i = 0; i < 4; ++i) id = (id << 8) | preamble[i];
  return {id, std::move(channel)};
}

std::unique_ptr<MessageChannel> tcp_connect_client(std::uint16_t port,
                                                   std::uint32_t client_id) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw_errno("tcp client socket");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    const int saved = errno;
    ::close(fd);
    errno = saved;
    throw_errno("tcp connect");
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  const std::uint8_t preamble[4] = {static_cast<std::uint8_t>(client_id >> 24),
                                    static_cast<std::uint8_t>(client_id >> 16),
                                    static_cast<std::uint8_t>(client_id >> 8),
                                    static_cast<std::uint8_t>(client_id)};
  send_all(fd, preamble, 4);
  return std::make_unique<TcpChannel>(fd);
}

// ---------------------------------------------------------------------------
// Round barrier

std::vector<ClientReport> broadcast_and_collect(
    std::span<MessageChannel* const> clients, const RoundPlan& plan,
    std::optional<std::chrono::milliseconds> timeout) {
  plan.validate();
  if (clients.size() != plan.tau_per_client.size()) {
    throw ContractError("broadcast: endpoint count does not match plan");
  }

  for (std::size_t i = 0; i < clients.size(); ++i) {
    clients[i]->send(RoundStartMsg{plan.round, plan.tau_per_client[i], plan.params});
    if (plan.prev_global_grad) {
      clients[i]->send(PrevGlobalGradMsg{plan.round - 1, *plan.prev_global_grad});
    }
  }

  std::vector<ClientReport> reports;
  reports.reserve(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    Message m;
    try {
      m = clients[i]->recv(timeout);
    } catch (const TimeoutError&) {
      throw RoundAbortError("round " + std::to_string(plan.round) +
                                ": client " + std::to_string(i) + " did not report",
                            static_cast<std::uint32_t>(i));
    }
    auto* cr = std::get_if<ClientReportMsg>(&m);
    if (cr == nullptr) {
      throw RoundAbortError("round " + std::to_string(plan.round) + ": client " +
                                std::to_string(i) + " sent an unexpected message",
                            static_cast<std::uint32_t>(i));
    }
    reports.push_back(std::move(cr->report));
  }

  std::sort(reports.begin(), reports.end(),
            [](const ClientReport& a, const ClientReport& b) {
              return a.client_id < b.client_id;
            });
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].client_id != i) {
      throw ContractError("broadcast: reports do not cover every client id");
    }
    if (reports[i].tau_used != plan.tau_per_client[i]) {
      throw ContractError("broadcast: client " + std::to_string(i) +
                          " ran a different tau than planned");
    }
  }
  return reports;
}

void broadcast_stop(std::span<MessageChannel* const> clients) {
  for (MessageChannel* c : clients) c->send(StopMsg{});
}

}  // namespace fedveca
