#include "derand/nat.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <limits>

namespace derand {

namespace {
constexpr std::uint32_t kOccupied = std::numeric_limits<std::uint32_t>::max();
}

PortPool PortPool::make(Port lo, Port hi) {
  if (lo > hi) {
    throw std::invalid_argument(fmt::format("port pool {}-{} is inverted", lo, hi));
  }
  if (hi - lo + 1 < 2) {
    throw std::invalid_argument("port pool needs at least two ports");
  }
  return PortPool{lo, hi};
}

std::string_view to_string(PolicyKind k) {
  switch (k) {
  case PolicyKind::Preserving:
    return "preserving";
  case PolicyKind::Sequential:
    return "sequential";
  case PolicyKind::RandomUnrestricted:
    return "random";
  case PolicyKind::DefendedRestrictedRandom:
    return "defended";
  }
  return "?";
}

std::string_view to_string(AllocError e) {
  return e == AllocError::PoolExhausted ? "PoolExhausted" : "TableFull";
}

AllocationFailure::AllocationFailure(AllocError code)
    : std::runtime_error(std::string(to_string(code))), code_(code) {}

MappingTable::MappingTable(PortPool pool, AllocationPolicy policy, SimTime timeout)
    : pool_(PortPool::make(pool.lo, pool.hi)), policy_(policy), timeout_(timeout), capacity_(pool_.size()) {
  if (timeout_ <= SimTime::zero()) {
    throw std::invalid_argument("binding timeout must be positive");
  }
  if (policy_.kind == PolicyKind::DefendedRestrictedRandom) {
    const auto half = pool_.size() / 2;
    capacity_ = policy_.capacity == 0 ? half : policy_.capacity;
    if (capacity_ > half) {
      throw std::invalid_argument(
          fmt::format("defended table capacity {} exceeds half the pool ({})", capacity_, half));
    }
  }
  if (policy_.kind == PolicyKind::Sequential) {
    if (policy_.increment == 0) {
      throw std::invalid_argument("sequential increment must be positive");
    }
    const Port start = policy_.sequential_start.value_or(pool_.lo);
    if (!pool_.contains(start)) {
      throw std::invalid_argument(fmt::format("sequential start {} outside pool", start));
    }
    cursor_ = pool_.offset_of(start);
  }
  slots_.resize(pool_.size());
  flows_.reserve(capacity_);
  free_.reserve(pool_.size());
  free_pos_.resize(pool_.size());
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    free_pos_[i] = static_cast<std::uint32_t>(i);
    free_.push_back(pool_.at(i));
  }
}

bool MappingTable::is_free(Port p) const {
  return pool_.contains(p) && free_pos_[pool_.offset_of(p)] != kOccupied;
}

void MappingTable::occupy(std::size_t offset, const Binding& b) {
  // swap-remove from the free list
  const auto pos = free_pos_[offset];
  const Port last = free_.back();
  free_[pos] = last;
  free_pos_[pool_.offset_of(last)] = pos;
  free_.pop_back();
  free_pos_[offset] = kOccupied;

  slots_[offset] = b;
  flows_.emplace(flow_key(b.internal_host, b.internal_port), b.external_port);
  expiry_.emplace(b.expires_at, b.external_port);
}

void MappingTable::vacate(std::size_t offset) {
  const auto& b = *slots_[offset];
  flows_.erase(flow_key(b.internal_host, b.internal_port));
  slots_[offset].reset();
  free_pos_[offset] = static_cast<std::uint32_t>(free_.size());
  free_.push_back(pool_.at(offset));
}

std::optional<std::size_t> MappingTable::scan_up(std::size_t from) const {
  const auto n = pool_.size();
  for (std::size_t step = 0; step < n; ++step) {
    const auto off = (from + step) % n;
    if (free_pos_[off] != kOccupied) {
      return off;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> MappingTable::pick_sequential() {
  const auto n = pool_.size();
  const auto inc = policy_.increment % n;
  std::size_t off = cursor_;
  for (std::size_t step = 0; step < n; ++step) {
    if (free_pos_[off] != kOccupied) {
      cursor_ = (off + policy_.increment) % n;
      return off;
    }
    off = (off + inc) % n;
  }
  // The increment's orbit is fully occupied; any other free port will do.
  auto fallback = scan_up(cursor_);
  if (fallback) {
    cursor_ = (*fallback + policy_.increment) % n;
  }
  return fallback;
}

std::size_t MappingTable::pick_random(Rng& rng) const {
  return pool_.offset_of(free_[rng.uniform(free_.size())]);
}

Port MappingTable::allocate(HostId internal_host, Port internal_port, SimTime now, Rng& rng) {
  if (flows_.contains(flow_key(internal_host, internal_port))) {
    throw std::logic_error("allocate: flow already bound");
  }
  if (size() >= capacity_) {
    throw AllocationFailure(policy_.kind == PolicyKind::DefendedRestrictedRandom ? AllocError::TableFull
                                                                                : AllocError::PoolExhausted);
  }
  if (free_.empty()) {
    throw AllocationFailure(AllocError::PoolExhausted);
  }

  std::size_t offset = 0;
  switch (policy_.kind) {
  case PolicyKind::Preserving:
    if (is_free(internal_port)) {
      offset = pool_.offset_of(internal_port);
    } else if (policy_.fallback == PreservingFallback::Random) {
      offset = pick_random(rng);
    } else {
      const Port start = std::clamp(internal_port, pool_.lo, pool_.hi);
      offset = *scan_up(pool_.offset_of(start));
    }
    break;
  case PolicyKind::Sequential:
    offset = *pick_sequential();
    break;
  case PolicyKind::RandomUnrestricted:
  case PolicyKind::DefendedRestrictedRandom:
    offset = pick_random(rng);
    break;
  }

  const Binding b{internal_host, internal_port, pool_.at(offset), now + timeout_};
  occupy(offset, b);
  return b.external_port;
}

std::size_t MappingTable::release_expired(SimTime now) {
  std::size_t freed = 0;
  while (!expiry_.empty() && expiry_.top().first <= now) {
    const auto [at, port] = expiry_.top();
    expiry_.pop();
    const auto off = pool_.offset_of(port);
    // Stale heap entries (renewed or released bindings) are skipped.
    if (slots_[off] && slots_[off]->expires_at == at) {
      vacate(off);
      ++freed;
    }
  }
  return freed;
}

bool MappingTable::release(Port external_port) {
  if (!pool_.contains(external_port)) {
    return false;
  }
  const auto off = pool_.offset_of(external_port);
  if (!slots_[off]) {
    return false;
  }
  vacate(off);
  return true;
}

bool MappingTable::renew(HostId internal_host, Port internal_port, SimTime now) {
  const auto it = flows_.find(flow_key(internal_host, internal_port));
  if (it == flows_.end()) {
    return false;
  }
  auto& b = *slots_[pool_.offset_of(it->second)];
  b.expires_at = now + timeout_;
  expiry_.emplace(b.expires_at, b.external_port);
  return true;
}

std::optional<Binding> MappingTable::find_flow(HostId internal_host, Port internal_port) const {
  const auto it = flows_.find(flow_key(internal_host, internal_port));
  if (it == flows_.end()) {
    return std::nullopt;
  }
  return slots_[pool_.offset_of(it->second)];
}

std::optional<Binding> MappingTable::find_external(Port external_port) const {
  if (!pool_.contains(external_port)) {
    return std::nullopt;
  }
  return slots_[pool_.offset_of(external_port)];
}

std::vector<Binding> MappingTable::bindings() const {
  std::vector<Binding> out;
  out.reserve(size());
  for (const auto& s : slots_) {
    if (s) {
      out.push_back(*s);
    }
  }
  return out;
}

bool MappingTable::check_invariants() const {
  std::size_t live = 0;
  for (std::size_t off = 0; off < slots_.size(); ++off) {
    const bool occupied = free_pos_[off] == kOccupied;
    if (occupied != slots_[off].has_value()) {
      return false;
    }
    if (!occupied) {
      if (free_pos_[off] >= free_.size() || free_[free_pos_[off]] != pool_.at(off)) {
        return false;
      }
      continue;
    }
    ++live;
    const auto& b = *slots_[off];
    if (b.external_port != pool_.at(off)) {
      return false;
    }
    const auto it = flows_.find(flow_key(b.internal_host, b.internal_port));
    if (it == flows_.end() || it->second != b.external_port) {
      return false;
    }
  }
  return live == size() && flows_.size() == live && live <= capacity_;
}

DnsMessage translate_outbound(MappingTable& table, const DnsMessage& packet, HostId nat_ip, SimTime now,
                              Rng& rng) {
  table.release_expired(now);
  Port external = 0;
  if (table.renew(packet.src_ip, packet.src_port, now)) {
    external = table.find_flow(packet.src_ip, packet.src_port)->external_port;
  } else {
    external = table.allocate(packet.src_ip, packet.src_port, now, rng);
  }
  DnsMessage out = packet;
  out.src_ip = nat_ip;
  out.src_port = external;
  return out;
}

std::optional<DnsMessage> translate_inbound(const MappingTable& table, const DnsMessage& packet, SimTime now) {
  const auto b = table.find_external(packet.dst_port);
  if (!b || b->expires_at <= now) {
    return std::nullopt;
  }
  DnsMessage out = packet;
  out.dst_ip = b->internal_host;
  out.dst_port = b->internal_port;
  return out;
}

} // namespace derand
