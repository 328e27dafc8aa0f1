#include "derand/simnet.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <stdexcept>

namespace derand {

namespace {

// Min-heap order on (at, seq).
struct Later {
  template <typename E>
  bool operator()(const E& a, const E& b) const {
    return a.at != b.at ? a.at > b.at : a.seq > b.seq;
  }
};

} // namespace

std::string format_trace_line(const TraceRecord& r) {
  return fmt::format("{} {}>{} {} {}:{}>{}:{} id={} auth={} nat={}", r.at.count(), raw(r.origin), raw(r.receiver),
                     to_string(r.kind), raw(r.src_ip), r.src_port, raw(r.dst_ip), r.dst_port, r.txid,
                     r.authentic ? 1 : 0, r.nat_crossings);
}

Network::Network(HostId nat_address, MappingTable nat, std::uint64_t seed, double loss)
    : nat_address_(nat_address), nat_(std::move(nat)), nat_rng_(derive_seed(seed, Stream::Nat)),
      loss_rng_(derive_seed(seed, Stream::Network)), loss_(loss) {
  if (!(loss_ >= 0.0 && loss_ <= 1.0)) {
    throw std::invalid_argument("loss probability must lie in [0, 1]");
  }
}

void Network::add_host(HostId id, Side side, std::string name, SimTime access_latency, bool may_spoof) {
  if (id == nat_address_ || hosts_.contains(raw(id))) {
    throw std::invalid_argument(fmt::format("host address {} already in use", raw(id)));
  }
  hosts_.emplace(raw(id), Host{side, std::move(name), access_latency, may_spoof, {}});
}

void Network::set_handler(HostId id, Handler handler) {
  const auto it = hosts_.find(raw(id));
  if (it == hosts_.end()) {
    throw std::invalid_argument(fmt::format("unknown host {}", raw(id)));
  }
  it->second.handler = std::move(handler);
}

void Network::set_latency(HostId src, HostId dst, SimTime one_way) {
  latency_override_[{raw(src), raw(dst)}] = one_way;
}

const Network::Host* Network::find(HostId id) const {
  const auto it = hosts_.find(raw(id));
  return it == hosts_.end() ? nullptr : &it->second;
}

std::optional<Side> Network::side_of(HostId id) const {
  if (const Host* h = find(id)) {
    return h->side;
  }
  return std::nullopt;
}

std::string Network::name_of(HostId id) const {
  if (id == nat_address_) {
    return "nat";
  }
  const Host* h = find(id);
  return h ? h->name : fmt::format("host{}", raw(id));
}

SimTime Network::latency(HostId src, HostId dst) const {
  if (const auto it = latency_override_.find({raw(src), raw(dst)}); it != latency_override_.end()) {
    return it->second;
  }
  const auto access = [&](HostId h) {
    const Host* p = find(h);
    return p ? p->access : SimTime::zero();
  };
  return access(src) + access(dst);
}

void Network::push(SimTime at, std::variant<Delivery, Timer> payload) {
  queue_.push_back(Event{at, next_seq_++, std::move(payload)});
  std::push_heap(queue_.begin(), queue_.end(), Later{});
}

void Network::schedule(SimTime at, Timer fn) {
  if (at < now_) {
    throw std::invalid_argument("cannot schedule an event in the past");
  }
  push(at, std::move(fn));
}

void Network::send(HostId from, DnsMessage packet) {
  const Host* src = find(from);
  if (!src) {
    throw std::invalid_argument(fmt::format("send from unknown host {}", raw(from)));
  }
  if (!src->may_spoof) {
    packet.src_ip = from;
  }
  ++stats_.sent;
  if (loss_ > 0.0 && loss_rng_.uniform01() < loss_) {
    ++stats_.lost;
    return;
  }

  const Host* dst = find(packet.dst_ip);
  if (src->side == Side::Inside) {
    if (dst && dst->side == Side::Inside) {
      const HostId to = packet.dst_ip;
      push(now_ + latency(from, to), Delivery{Stage::ToHost, from, 0, std::move(packet)});
    } else {
      push(now_ + latency(from, nat_address_), Delivery{Stage::ToNatOutbound, from, 0, std::move(packet)});
    }
    return;
  }
  if (packet.dst_ip == nat_address_) {
    push(now_ + latency(from, nat_address_), Delivery{Stage::ToNatInbound, from, 0, std::move(packet)});
  } else if (dst && dst->side == Side::Outside) {
    const HostId to = packet.dst_ip;
    push(now_ + latency(from, to), Delivery{Stage::ToHost, from, 0, std::move(packet)});
  } else {
    // Inside addresses are not reachable from outside except via the NAT.
    ++stats_.unroutable;
  }
}

void Network::process(Delivery d) {
  switch (d.stage) {
  case Stage::ToNatOutbound: {
    try {
      d.packet = translate_outbound(nat_, d.packet, nat_address_, now_, nat_rng_);
    } catch (const AllocationFailure&) {
      ++stats_.nat_outbound_dropped;
      return;
    }
    ++stats_.nat_outbound;
    ++d.crossings;
    if (outbound_observer_) {
      outbound_observer_(d.origin, d.packet);
    }
    const Host* dst = find(d.packet.dst_ip);
    if (!dst || dst->side != Side::Outside) {
      ++stats_.unroutable;
      return;
    }
    d.stage = Stage::ToHost;
    push(now_ + latency(nat_address_, d.packet.dst_ip), std::move(d));
    return;
  }
  case Stage::ToNatInbound: {
    auto translated = translate_inbound(nat_, d.packet, now_);
    if (!translated) {
      ++stats_.nat_inbound_dropped;
      return;
    }
    ++stats_.nat_inbound;
    ++d.crossings;
    d.packet = std::move(*translated);
    d.stage = Stage::ToHost;
    push(now_ + latency(nat_address_, d.packet.dst_ip), std::move(d));
    return;
  }
  case Stage::ToHost:
    deliver_to_host(std::move(d));
    return;
  }
}

void Network::deliver_to_host(Delivery d) {
  const auto it = hosts_.find(raw(d.packet.dst_ip));
  if (it == hosts_.end()) {
    ++stats_.unroutable;
    return;
  }
  ++stats_.delivered;
  if (tracing_) {
    const auto& p = d.packet;
    trace_.push_back(TraceRecord{now_, d.origin, p.dst_ip, p.kind, p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.txid,
                                 p.authentic, d.crossings});
  }
  if (it->second.handler) {
    it->second.handler(d.packet);
  }
}

std::size_t Network::run_until(SimTime t) {
  std::size_t executed = 0;
  while (!queue_.empty() && queue_.front().at <= t) {
    std::pop_heap(queue_.begin(), queue_.end(), Later{});
    Event ev = std::move(queue_.back());
    queue_.pop_back();
    now_ = ev.at;
    ++executed;
    if (auto* timer = std::get_if<Timer>(&ev.payload)) {
      (*timer)();
    } else {
      process(std::move(std::get<Delivery>(ev.payload)));
    }
  }
  now_ = std::max(now_, t);
  return executed;
}

std::size_t Network::run() {
  std::size_t executed = 0;
  while (!queue_.empty()) {
    executed += run_until(queue_.front().at);
  }
  return executed;
}

} // namespace derand
