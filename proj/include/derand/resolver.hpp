#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "derand/dns.hpp"
#include "derand/rng.hpp"
#include "derand/types.hpp"

namespace derand {

enum class WeakTxid : std::uint8_t { Constant, Sequential };

/// Which anti-spoofing patches the resolver runs.
struct PatchConfig {
  bool randomize_txid = true;
  bool randomize_port = true;
  bool randomize_ns_ip = true;
  bool use_0x20 = true;
  /// Random prefix label length; 0 disables.
  std::size_t prefix_len = 0;
  /// Birthday protection: concurrent queries per (name, type); 0 disables.
  std::size_t birthday_max_concurrent = 1;
  /// txid behaviour when randomize_txid is off.
  WeakTxid weak_txid = WeakTxid::Constant;
  /// Refuse queries too long to take the random prefix instead of sending
  /// them unprefixed.
  bool restrict_max_length_queries = false;
  /// Source port when randomize_port is off.
  Port fixed_port = 5353;
  /// Source port range when randomize_port is on.
  Port ephemeral_lo = 1024;
  Port ephemeral_hi = 65535;

  static PatchConfig unpatched();
  static PatchConfig all_patches(std::size_t prefix_len = 12);

  std::size_t ephemeral_size() const { return static_cast<std::size_t>(ephemeral_hi) - ephemeral_lo + 1; }

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct ZoneConfig {
  DomainName apex;
  std::vector<HostId> ns_ips;
};

struct PendingQuery {
  std::uint16_t txid = 0;
  DomainName qname_as_sent;
  DomainName base_qname;
  RecordType qtype = RecordType::A;
  Port src_port = 0;
  HostId ns_ip{};
  DomainName zone_apex;
  SimTime deadline{};
};

struct CacheEntry {
  DomainName owner;
  ResourceRecord record;
  SimTime inserted_at{};
  std::chrono::seconds ttl{};

  bool live(SimTime now) const { return inserted_at + ttl > now; }
};

struct Issued {
  DnsMessage query;
  PendingQuery pending;
};
/// Birthday protection held the query back.
struct Deferred {};
/// The max-length guard refused the query.
struct Refused {};

using IssueResult = std::variant<Issued, Deferred, Refused>;

enum class RejectReason : std::uint8_t { IpMismatch, PortMismatch, TxidMismatch, NameCaseMismatch, NoPending };

std::string_view to_string(RejectReason r);

struct AcceptResult {
  bool accepted = false;
  RejectReason reason = RejectReason::NoPending;
  std::optional<PendingQuery> matched;
  std::size_t records_stored = 0;
  std::size_t records_rejected = 0;

  static AcceptResult reject(RejectReason r) { return {false, r, std::nullopt, 0, 0}; }
};

enum class CacheOutcome : std::uint8_t {
  Stored,
  /// An A record that completed a delegation; it updates the zone's name
  /// server addresses instead of entering the answer cache.
  StoredGlue,
  RejectedOutOfBailiwick,
};

struct ResolverStats {
  std::size_t issued = 0;
  std::size_t deferred = 0;
  std::size_t refused = 0;
  std::size_t prefix_skipped = 0;
  std::size_t accepted = 0;
  std::array<std::size_t, 5> rejected{};
  std::size_t timeouts = 0;
  std::size_t delegations_replaced = 0;
};

inline constexpr SimTime kDefaultQueryDeadline = std::chrono::seconds{2};
inline constexpr std::chrono::seconds kNegativeTtl{1};

/// Caching resolver with the anti-spoofing patch stack.
///
/// Outgoing queries go through prefixing, 0x20 encoding, txid/port/server
/// selection and the birthday gate. A response is accepted only if it
/// matches one pending query on source address, destination port, txid and
/// exact name case. Records from an accepted response are kept only inside
/// the bailiwick of the query: the owner must be the queried name or one of
/// its ancestors, at or below the apex of the zone that was asked. An NS
/// record plus matching glue rewrites the resolver's server list for that
/// zone, which is what a Kaminsky-style forgery targets.
class Resolver {
public:
  Resolver(HostId address, PatchConfig patches, std::vector<ZoneConfig> zones,
           SimTime query_deadline = kDefaultQueryDeadline);

  IssueResult issue_query(const DomainName& base_qname, RecordType qtype, SimTime now, Rng& rng);

  AcceptResult accept_response(const DnsMessage& response, SimTime now);

  CacheOutcome cache_insert(const DomainName& qname_queried, const DomainName& zone_apex,
                            const ResourceRecord& record, SimTime now);

  std::optional<CacheEntry> lookup(const DomainName& qname, RecordType qtype, SimTime now) const;
  bool negatively_cached(const DomainName& qname, SimTime now) const;

  /// Removes and returns pending queries whose deadline is <= now.
  std::vector<PendingQuery> handle_timeout(SimTime now);

  /// Zone with the longest apex enclosing `name`, or nullptr.
  const ZoneConfig* zone_for(const DomainName& name) const;
  const ZoneConfig* zone(const DomainName& apex) const;

  /// Forces every query for the zone to one server (the effect of an NS
  /// address derandomisation attack).
  void pin_name_server(const DomainName& apex, HostId ip);

  HostId address() const { return address_; }
  const PatchConfig& patches() const { return patches_; }
  const std::vector<PendingQuery>& pending() const { return pending_; }
  const ResolverStats& stats() const { return stats_; }
  std::vector<CacheEntry> cache_entries() const;

private:
  using CacheKey = std::pair<std::string, RecordType>;
  static CacheKey key_of(const DomainName& n, RecordType t) { return {n.folded().to_string(), t}; }

  ZoneConfig* mutable_zone(const DomainName& apex);
  std::uint16_t next_txid(Rng& rng);

  HostId address_;
  PatchConfig patches_;
  SimTime deadline_;
  std::vector<ZoneConfig> zones_;
  std::map<std::string, HostId> pinned_;
  std::vector<PendingQuery> pending_;
  std::map<CacheKey, CacheEntry> cache_;
  std::map<std::string, SimTime> negative_;
  std::uint16_t txid_counter_ = 0;
  ResolverStats stats_;
};

} // namespace derand
