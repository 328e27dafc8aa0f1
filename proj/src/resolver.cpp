#include "derand/resolver.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <stdexcept>

namespace derand {

PatchConfig PatchConfig::unpatched() {
  PatchConfig p;
  p.randomize_txid = true;
  p.randomize_port = false;
  p.randomize_ns_ip = false;
  p.use_0x20 = false;
  p.prefix_len = 0;
  return p;
}

PatchConfig PatchConfig::all_patches(std::size_t prefix_len) {
  PatchConfig p;
  p.prefix_len = prefix_len;
  return p;
}

void PatchConfig::validate() const {
  if (prefix_len > kMaxLabelLength) {
    throw std::invalid_argument(fmt::format("prefix_len {} exceeds {}", prefix_len, kMaxLabelLength));
  }
  if (ephemeral_lo > ephemeral_hi) {
    throw std::invalid_argument("ephemeral port range is inverted");
  }
}

std::string_view to_string(RejectReason r) {
  switch (r) {
  case RejectReason::IpMismatch:
    return "IpMismatch";
  case RejectReason::PortMismatch:
    return "PortMismatch";
  case RejectReason::TxidMismatch:
    return "TxidMismatch";
  case RejectReason::NameCaseMismatch:
    return "NameCaseMismatch";
  case RejectReason::NoPending:
    return "NoPending";
  }
  return "?";
}

Resolver::Resolver(HostId address, PatchConfig patches, std::vector<ZoneConfig> zones, SimTime query_deadline)
    : address_(address), patches_(patches), deadline_(query_deadline), zones_(std::move(zones)) {
  patches_.validate();
  for (const auto& z : zones_) {
    if (z.ns_ips.empty()) {
      throw std::invalid_argument(fmt::format("zone {} has no name servers", z.apex.to_string()));
    }
  }
}

const ZoneConfig* Resolver::zone_for(const DomainName& name) const {
  const ZoneConfig* best = nullptr;
  for (const auto& z : zones_) {
    if (name.is_within(z.apex) && (!best || z.apex.labels().size() > best->apex.labels().size())) {
      best = &z;
    }
  }
  return best;
}

const ZoneConfig* Resolver::zone(const DomainName& apex) const {
  for (const auto& z : zones_) {
    if (z.apex.equals_ignore_case(apex)) {
      return &z;
    }
  }
  return nullptr;
}

ZoneConfig* Resolver::mutable_zone(const DomainName& apex) {
  return const_cast<ZoneConfig*>(std::as_const(*this).zone(apex));
}

void Resolver::pin_name_server(const DomainName& apex, HostId ip) {
  pinned_[apex.folded().to_string()] = ip;
}

std::uint16_t Resolver::next_txid(Rng& rng) {
  if (patches_.randomize_txid) {
    return static_cast<std::uint16_t>(rng.uniform(1u << 16));
  }
  if (patches_.weak_txid == WeakTxid::Sequential) {
    return txid_counter_++;
  }
  return 0;
}

IssueResult Resolver::issue_query(const DomainName& base_qname, RecordType qtype, SimTime now, Rng& rng) {
  const ZoneConfig* zone = zone_for(base_qname);
  if (!zone) {
    throw std::invalid_argument(fmt::format("no zone configured for {}", base_qname.to_string()));
  }

  if (patches_.birthday_max_concurrent > 0) {
    const auto concurrent = std::count_if(pending_.begin(), pending_.end(), [&](const PendingQuery& p) {
      return p.deadline > now && p.qtype == qtype && p.base_qname.equals_ignore_case(base_qname);
    });
    if (static_cast<std::size_t>(concurrent) >= patches_.birthday_max_concurrent) {
      ++stats_.deferred;
      return Deferred{};
    }
  }

  DomainName sent = base_qname;
  if (patches_.prefix_len > 0) {
    try {
      sent = prepend_random_prefix(base_qname, patches_.prefix_len, rng);
    } catch (const MaxLengthExceeded&) {
      if (patches_.restrict_max_length_queries) {
        ++stats_.refused;
        return Refused{};
      }
      ++stats_.prefix_skipped;
    }
  }
  if (patches_.use_0x20) {
    sent = encode_0x20(sent, rng);
  }

  const std::uint16_t txid = next_txid(rng);
  const Port sport = patches_.randomize_port
                         ? static_cast<Port>(rng.uniform_between(patches_.ephemeral_lo, patches_.ephemeral_hi))
                         : patches_.fixed_port;

  HostId ns = zone->ns_ips.front();
  if (const auto pin = pinned_.find(zone->apex.folded().to_string()); pin != pinned_.end()) {
    ns = pin->second;
  } else if (patches_.randomize_ns_ip) {
    ns = zone->ns_ips[rng.uniform(zone->ns_ips.size())];
  }

  PendingQuery p{txid, sent, base_qname, qtype, sport, ns, zone->apex, now + deadline_};
  pending_.push_back(p);
  ++stats_.issued;
  return Issued{DnsMessage::query(address_, sport, ns, 53, txid, sent, qtype), std::move(p)};
}

AcceptResult Resolver::accept_response(const DnsMessage& response, SimTime now) {
  auto reject = [&](RejectReason r) {
    ++stats_.rejected[static_cast<std::size_t>(r)];
    return AcceptResult::reject(r);
  };
  if (response.kind != MessageKind::Response) {
    return reject(RejectReason::NoPending);
  }

  int best_stage = -1;
  auto match = pending_.end();
  for (auto it = pending_.begin(); it != pending_.end(); ++it) {
    if (it->deadline <= now) {
      continue;
    }
    int stage = 0;
    if (response.src_ip == it->ns_ip) {
      ++stage;
      if (response.dst_port == it->src_port) {
        ++stage;
        if (response.txid == it->txid) {
          ++stage;
          if (match_case_exact(it->qname_as_sent, response.qname)) {
            ++stage;
          }
        }
      }
    }
    if (stage == 4) {
      match = it;
      break;
    }
    best_stage = std::max(best_stage, stage);
  }

  if (match == pending_.end()) {
    return reject(best_stage < 0 ? RejectReason::NoPending : static_cast<RejectReason>(best_stage));
  }

  AcceptResult result;
  result.accepted = true;
  result.matched = *match;
  pending_.erase(match);
  ++stats_.accepted;

  const auto& q = *result.matched;
  if (response.nxdomain) {
    negative_[q.base_qname.folded().to_string()] = now + kNegativeTtl;
  }
  // NS records first so that glue can find its delegation.
  for (const RecordType pass : {RecordType::NS, RecordType::A}) {
    for (const auto& rr : response.answers) {
      if (rr.type != pass) {
        continue;
      }
      if (cache_insert(q.qname_as_sent, q.zone_apex, rr, now) == CacheOutcome::RejectedOutOfBailiwick) {
        ++result.records_rejected;
      } else {
        ++result.records_stored;
      }
    }
  }
  return result;
}

CacheOutcome Resolver::cache_insert(const DomainName& qname_queried, const DomainName& zone_apex,
                                    const ResourceRecord& record, SimTime now) {
  const bool in_chain = qname_queried.is_within(record.owner) && record.owner.is_within(zone_apex);
  if (in_chain) {
    cache_[key_of(record.owner, record.type)] = CacheEntry{record.owner, record, now, record.ttl};
    return CacheOutcome::Stored;
  }
  if (record.type != RecordType::A) {
    return CacheOutcome::RejectedOutOfBailiwick;
  }

  // Glue: the address of a name server named by a live in-bailiwick NS
  // record, itself inside the delegated zone.
  for (const auto& [key, entry] : cache_) {
    if (key.second != RecordType::NS || !entry.live(now)) {
      continue;
    }
    const auto& delegated = entry.owner;
    const auto& target = std::get<DomainName>(entry.record.value);
    if (!target.equals_ignore_case(record.owner) || !record.owner.is_within(delegated) ||
        !qname_queried.is_within(delegated) || !delegated.is_within(zone_apex)) {
      continue;
    }
    const HostId ip = std::get<HostId>(record.value);
    if (ZoneConfig* z = mutable_zone(delegated)) {
      z->ns_ips = {ip};
      pinned_.erase(delegated.folded().to_string());
    } else {
      zones_.push_back(ZoneConfig{delegated, {ip}});
    }
    ++stats_.delegations_replaced;
    return CacheOutcome::StoredGlue;
  }
  return CacheOutcome::RejectedOutOfBailiwick;
}

std::optional<CacheEntry> Resolver::lookup(const DomainName& qname, RecordType qtype, SimTime now) const {
  const auto it = cache_.find(key_of(qname, qtype));
  if (it == cache_.end() || !it->second.live(now)) {
    return std::nullopt;
  }
  return it->second;
}

bool Resolver::negatively_cached(const DomainName& qname, SimTime now) const {
  const auto it = negative_.find(qname.folded().to_string());
  return it != negative_.end() && it->second > now;
}

std::vector<PendingQuery> Resolver::handle_timeout(SimTime now) {
  std::vector<PendingQuery> expired;
  const auto split = std::stable_partition(pending_.begin(), pending_.end(),
                                           [&](const PendingQuery& p) { return p.deadline > now; });
  expired.assign(std::make_move_iterator(split), std::make_move_iterator(pending_.end()));
  pending_.erase(split, pending_.end());
  stats_.timeouts += expired.size();
  return expired;
}

std::vector<CacheEntry> Resolver::cache_entries() const {
  std::vector<CacheEntry> out;
  out.reserve(cache_.size());
  for (const auto& [k, v] : cache_) {
    out.push_back(v);
  }
  return out;
}

} // namespace derand
