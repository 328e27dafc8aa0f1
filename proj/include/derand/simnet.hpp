#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "derand/dns.hpp"
#include "derand/nat.hpp"
#include "derand/rng.hpp"
#include "derand/types.hpp"

namespace derand {

enum class Side : std::uint8_t { Inside, Outside };

/// One delivered packet, as written to the trace.
struct TraceRecord {
  SimTime at{};
  /// Host that actually emitted the packet (not the claimed src_ip).
  HostId origin{};
  HostId receiver{};
  MessageKind kind = MessageKind::Probe;
  HostId src_ip{};
  Port src_port = 0;
  HostId dst_ip{};
  Port dst_port = 0;
  std::uint16_t txid = 0;
  bool authentic = false;
  /// Number of NAT translations the packet went through.
  unsigned nat_crossings = 0;
};

/// Stable one-line text form: time, origin, receiver, kind, addresses, txid.
std::string format_trace_line(const TraceRecord& r);

struct NetStats {
  std::size_t sent = 0;
  std::size_t delivered = 0;
  std::size_t lost = 0;
  std::size_t unroutable = 0;
  std::size_t nat_outbound = 0;
  std::size_t nat_inbound = 0;
  std::size_t nat_outbound_dropped = 0;
  std::size_t nat_inbound_dropped = 0;
};

/// Deterministic discrete-event network with one NAT gateway.
///
/// Events run in (time, sequence) order. Inside hosts reach the outside only
/// through the NAT, which translates each crossing packet exactly once. A
/// packet is handed only to the host that owns its destination address.
/// Hosts not marked as spoofers have their source address overwritten with
/// their own.
class Network {
public:
  using Handler = std::function<void(const DnsMessage&)>;
  using Timer = std::function<void()>;
  using OutboundObserver = std::function<void(HostId origin, const DnsMessage& translated)>;

  Network(HostId nat_address, MappingTable nat, std::uint64_t seed, double loss = 0.0);

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  void add_host(HostId id, Side side, std::string name, SimTime access_latency, bool may_spoof = false);
  void set_handler(HostId id, Handler handler);
  /// One-way latency override for (src, dst); otherwise the sum of the two
  /// hosts' access latencies (the NAT has none).
  void set_latency(HostId src, HostId dst, SimTime one_way);
  SimTime latency(HostId src, HostId dst) const;

  void send(HostId from, DnsMessage packet);

  /// Requires at >= now().
  void schedule(SimTime at, Timer fn);
  void schedule_in(SimTime delay, Timer fn) { schedule(now_ + delay, std::move(fn)); }

  /// Executes every event with time <= t, then sets the clock to t.
  std::size_t run_until(SimTime t);
  /// Executes until the queue is empty.
  std::size_t run();
  bool idle() const { return queue_.empty(); }

  SimTime now() const { return now_; }
  HostId nat_address() const { return nat_address_; }
  MappingTable& nat() { return nat_; }
  const MappingTable& nat() const { return nat_; }

  void on_nat_outbound(OutboundObserver obs) { outbound_observer_ = std::move(obs); }

  void enable_trace(bool on) { tracing_ = on; }
  const std::vector<TraceRecord>& trace() const { return trace_; }

  const NetStats& stats() const { return stats_; }
  std::optional<Side> side_of(HostId id) const;
  std::string name_of(HostId id) const;

private:
  enum class Stage : std::uint8_t { ToNatOutbound, ToNatInbound, ToHost };

  struct Delivery {
    Stage stage;
    HostId origin;
    unsigned crossings;
    DnsMessage packet;
  };

  struct Event {
    SimTime at;
    std::uint64_t seq;
    std::variant<Delivery, Timer> payload;
  };

  struct Host {
    Side side;
    std::string name;
    SimTime access;
    bool may_spoof;
    Handler handler;
  };

  void push(SimTime at, std::variant<Delivery, Timer> payload);
  void process(Delivery d);
  void deliver_to_host(Delivery d);
  const Host* find(HostId id) const;

  HostId nat_address_;
  MappingTable nat_;
  Rng nat_rng_;
  Rng loss_rng_;
  double loss_;
  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::vector<Event> queue_;
  std::unordered_map<std::uint32_t, Host> hosts_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, SimTime> latency_override_;
  OutboundObserver outbound_observer_;
  bool tracing_ = false;
  std::vector<TraceRecord> trace_;
  NetStats stats_;
};

} // namespace derand
