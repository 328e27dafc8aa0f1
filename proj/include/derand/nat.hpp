#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "derand/dns.hpp"
#include "derand/rng.hpp"
#include "derand/types.hpp"

namespace derand {

/// Inclusive range of external ports a gateway hands out.
struct PortPool {
  Port lo = 1024;
  Port hi = 65535;

  /// Throws std::invalid_argument unless lo <= hi and the pool has >= 2 ports.
  static PortPool make(Port lo, Port hi);

  std::size_t size() const { return static_cast<std::size_t>(hi) - lo + 1; }
  bool contains(Port p) const { return p >= lo && p <= hi; }
  Port at(std::size_t offset) const { return static_cast<Port>(lo + offset); }
  std::size_t offset_of(Port p) const { return static_cast<std::size_t>(p - lo); }

  friend bool operator==(const PortPool&, const PortPool&) = default;
};

enum class PolicyKind : std::uint8_t {
  /// Keep the internal source port when it is free.
  Preserving,
  /// Hand out ports from a cursor advanced by a constant increment.
  Sequential,
  /// Uniform over every free port; the table may grow to the whole pool.
  RandomUnrestricted,
  /// Uniform over every free port with the table capped at half the pool.
  DefendedRestrictedRandom,
};

enum class PreservingFallback : std::uint8_t { SequentialScan, Random };

struct AllocationPolicy {
  PolicyKind kind = PolicyKind::RandomUnrestricted;
  /// Sequential only.
  std::uint32_t increment = 1;
  /// Sequential only; defaults to the bottom of the pool.
  std::optional<Port> sequential_start;
  /// Defended only; 0 selects floor(pool / 2).
  std::size_t capacity = 0;
  /// Preserving only: what to do when the internal port is taken.
  PreservingFallback fallback = PreservingFallback::SequentialScan;

  static AllocationPolicy preserving(PreservingFallback fb = PreservingFallback::SequentialScan) {
    return {PolicyKind::Preserving, 1, std::nullopt, 0, fb};
  }
  static AllocationPolicy sequential(std::uint32_t increment = 1, std::optional<Port> start = std::nullopt) {
    return {PolicyKind::Sequential, increment, start, 0, PreservingFallback::SequentialScan};
  }
  static AllocationPolicy random_unrestricted() { return {}; }
  static AllocationPolicy defended(std::size_t capacity = 0) {
    return {PolicyKind::DefendedRestrictedRandom, 1, std::nullopt, capacity, PreservingFallback::SequentialScan};
  }
};

std::string_view to_string(PolicyKind k);

struct Binding {
  HostId internal_host{};
  Port internal_port = 0;
  Port external_port = 0;
  SimTime expires_at{};

  friend bool operator==(const Binding&, const Binding&) = default;
};

enum class AllocError : std::uint8_t { PoolExhausted, TableFull };

std::string_view to_string(AllocError e);

class AllocationFailure : public std::runtime_error {
public:
  explicit AllocationFailure(AllocError code);
  AllocError code() const { return code_; }

private:
  AllocError code_;
};

inline constexpr SimTime kDefaultBindingTimeout = std::chrono::seconds{30};

/// NAT mapping table: live bindings keyed by external port, plus the policy
/// that picks the next external port.
///
/// Bindings expire at a fixed timeout after their last outbound packet.
/// Expired bindings are reclaimed in expiry order by release_expired().
class MappingTable {
public:
  MappingTable(PortPool pool, AllocationPolicy policy, SimTime timeout = kDefaultBindingTimeout);

  /// Picks an external port for a new flow and inserts its binding with
  /// expires_at = now + timeout. Throws AllocationFailure.
  Port allocate(HostId internal_host, Port internal_port, SimTime now, Rng& rng);

  /// Removes every binding with expires_at <= now; returns how many.
  std::size_t release_expired(SimTime now);

  /// Drops the binding on `external_port` at once, if any.
  bool release(Port external_port);

  /// Pushes the flow's expiry to now + timeout. False if the flow is unbound.
  bool renew(HostId internal_host, Port internal_port, SimTime now);

  std::optional<Binding> find_flow(HostId internal_host, Port internal_port) const;
  std::optional<Binding> find_external(Port external_port) const;

  std::size_t size() const { return pool_.size() - free_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t free_ports() const { return free_.size(); }
  bool is_free(Port p) const;

  const PortPool& pool() const { return pool_; }
  const AllocationPolicy& policy() const { return policy_; }
  SimTime timeout() const { return timeout_; }
  Port cursor() const { return pool_.at(cursor_); }

  /// Live bindings in external-port order.
  std::vector<Binding> bindings() const;

  /// Unique external ports, size within capacity, indexes consistent.
  bool check_invariants() const;

private:
  static std::uint64_t flow_key(HostId h, Port p) { return (std::uint64_t{raw(h)} << 16) | p; }

  void occupy(std::size_t offset, const Binding& b);
  void vacate(std::size_t offset);
  std::optional<std::size_t> pick_sequential();
  std::optional<std::size_t> scan_up(std::size_t from) const;
  std::size_t pick_random(Rng& rng) const;

  PortPool pool_;
  AllocationPolicy policy_;
  SimTime timeout_;
  std::size_t capacity_;
  std::size_t cursor_ = 0;

  std::vector<std::optional<Binding>> slots_;
  std::vector<Port> free_;
  std::vector<std::uint32_t> free_pos_;
  std::unordered_map<std::uint64_t, Port> flows_;

  using ExpiryItem = std::pair<SimTime, Port>;
  std::priority_queue<ExpiryItem, std::vector<ExpiryItem>, std::greater<>> expiry_;
};

/// Rewrites the source to (nat_ip, external port), allocating a binding for a
/// new flow and renewing an existing one. Releases expired bindings first.
/// Throws AllocationFailure when no binding can be made.
DnsMessage translate_outbound(MappingTable& table, const DnsMessage& packet, HostId nat_ip, SimTime now,
                              Rng& rng);

/// Rewrites the destination to the bound internal flow, or nullopt (drop)
/// when dst_port has no live binding at `now`.
std::optional<DnsMessage> translate_inbound(const MappingTable& table, const DnsMessage& packet, SimTime now);

} // namespace derand
