#include <algorithm>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "derand/attacker.hpp"
#include "derand/testbed.hpp"

namespace derand {

namespace {

constexpr SimTime kProbeGap = std::chrono::milliseconds{1};

/// k distinct values from [0, m) in random order.
std::vector<std::uint64_t> sample_distinct(std::uint64_t m, std::size_t k, Rng& rng) {
  k = static_cast<std::size_t>(std::min<std::uint64_t>(k, m));
  if (m <= (std::uint64_t{1} << 22) && m <= 4 * static_cast<std::uint64_t>(k)) {
    std::vector<std::uint64_t> all(m);
    std::iota(all.begin(), all.end(), std::uint64_t{0});
    for (std::size_t i = 0; i < k; ++i) {
      std::swap(all[i], all[i + rng.uniform(m - i)]);
    }
    all.resize(k);
    return all;
  }
  // Floyd's algorithm.
  std::vector<std::uint64_t> out;
  out.reserve(k);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(k * 2);
  for (std::uint64_t j = m - k; j < m; ++j) {
    const std::uint64_t t = rng.uniform(j + 1);
    const std::uint64_t pick = seen.contains(t) ? j : t;
    seen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

std::optional<std::uint64_t> checked_product(std::initializer_list<std::uint64_t> xs) {
  std::uint64_t acc = 1;
  for (auto x : xs) {
    if (x != 0 && acc > ~std::uint64_t{0} / x) {
      return std::nullopt;
    }
    acc *= x;
  }
  return acc;
}

struct GuessContext {
  const SearchSpace& space;
  const ZoneConfig& zone;
  const PatchConfig& patches;
  const NatOutcome& nat;
  const DomainName& trigger;
  std::uint16_t known_txid;
  HostId nat_address;
  bool prefix_live;
};

DnsMessage forge(const GuessContext& g, std::uint64_t txid_i, std::uint64_t port_i, std::uint64_t ip_i,
                 std::uint64_t case_i, Rng& rng) {
  DnsMessage f;
  f.kind = MessageKind::Response;
  f.txid = g.space.txid_factor > 1 ? static_cast<std::uint16_t>(txid_i) : g.known_txid;

  if (const auto* t = std::get_if<Trapped>(&g.nat.knowledge)) {
    f.dst_port = t->port;
  } else if (const auto* p = std::get_if<Predicted>(&g.nat.knowledge)) {
    f.dst_port = p->port;
  } else if (g.space.port_factor > 1) {
    const bool preserving = !g.nat.policy || g.nat.policy->kind == PolicyKind::Preserving;
    f.dst_port = preserving ? static_cast<Port>(g.patches.ephemeral_lo + port_i) : g.nat.pool.at(port_i);
  } else {
    f.dst_port = g.patches.fixed_port;
  }

  f.src_ip = g.space.ip_factor > 1 ? g.zone.ns_ips[ip_i] : g.zone.ns_ips.front();
  f.src_port = kDnsPort;
  f.dst_ip = g.nat_address;

  DomainName name = g.space.case_factor > 1 ? g.trigger.with_case_mask(case_i) : g.trigger;
  if (g.prefix_live) {
    name = prepend_random_prefix(name, g.patches.prefix_len, rng);
  }
  f.qname = std::move(name);
  f.qtype = RecordType::A;

  const DomainName server = g.zone.apex.prepend("ns");
  f.answers.push_back(ResourceRecord::ns(g.zone.apex, server, std::chrono::hours{24}));
  f.answers.push_back(ResourceRecord::a(server, hosts::kAttackerNameServer, std::chrono::hours{24}));
  return f;
}

std::size_t send_burst(const GuessContext& g, const Capabilities& caps, Testbed& bed, Rng& rng) {
  const auto& s = g.space;
  const std::size_t budget = caps.spoof_budget_per_round;
  if (budget == 0) {
    return 0;
  }
  const auto joint = checked_product({s.txid_factor, s.port_factor, s.ip_factor, s.case_factor});

  std::size_t sent = 0;
  auto emit = [&](std::uint64_t idx) {
    const auto txid_i = idx % s.txid_factor;
    idx /= s.txid_factor;
    const auto port_i = idx % s.port_factor;
    idx /= s.port_factor;
    const auto ip_i = idx % s.ip_factor;
    idx /= s.ip_factor;
    const auto case_i = idx % s.case_factor;
    bed.attacker_send(forge(g, txid_i, port_i, ip_i, case_i, rng));
    ++sent;
  };

  if (caps.distinct_guesses && joint) {
    for (const auto idx : sample_distinct(*joint, budget, rng)) {
      emit(idx);
    }
  } else if (joint) {
    for (std::size_t i = 0; i < budget; ++i) {
      emit(rng.uniform(*joint));
    }
  } else {
    for (std::size_t i = 0; i < budget; ++i) {
      bed.attacker_send(forge(g, rng.uniform(s.txid_factor), rng.uniform(s.port_factor), rng.uniform(s.ip_factor),
                              rng.uniform(s.case_factor), rng));
      ++sent;
    }
  }
  return sent;
}

bool zone_poisoned(const Resolver& r, const DomainName& apex) {
  const ZoneConfig* z = r.zone(apex);
  return z && std::find(z->ns_ips.begin(), z->ns_ips.end(), hosts::kAttackerNameServer) != z->ns_ips.end();
}

struct ZombieState {
  bool active = true;
  std::vector<Port> flows;
};

void schedule_refresh(Testbed& bed, std::shared_ptr<ZombieState> state, SimTime period) {
  bed.net().schedule_in(period, [&bed, state, period] {
    if (!state->active) {
      return;
    }
    for (const Port p : state->flows) {
      bed.zombie_probe(p, false);
    }
    schedule_refresh(bed, state, period);
  });
}

} // namespace

AttackResult kaminsky_attack(const AttackPlan& plan, const Capabilities& caps, Testbed& bed, Rng& rng) {
  plan.validate();
  if (!caps.zombie_present) {
    throw std::invalid_argument("the attack triggers queries through a zombie");
  }

  Network& net = bed.net();
  Resolver& resolver = bed.resolver();
  const ZoneConfig& zone = bed.original_zone();
  const PatchConfig& patches = resolver.patches();
  const MappingTable& table = net.nat();
  const PortPool pool = table.pool();
  const AllocationPolicy policy = table.policy();
  const SimTime echo_rtt = net.latency(hosts::kZombie, hosts::kEcho) * 2;

  if (caps.ns_ip_derandomized) {
    resolver.pin_name_server(zone.apex, zone.ns_ips.front());
  }

  AttackResult result;
  NatOutcome nat{PortUnknown{}, policy, pool};
  auto zombie = std::make_shared<ZombieState>();
  SimTime spacing = plan.round_interval;

  if (plan.port_strategy == PortStrategy::Trap) {
    // Fill every port but one; the echo host reports each mapped port.
    const bool preserving = caps.knows_nat_policy && policy.kind == PolicyKind::Preserving;
    const Port leave = preserving ? pool.at(rng.uniform(pool.size())) : 0;
    std::vector<bool> seen(pool.size(), false);
    std::size_t seen_count = 0;
    bed.on_echo([&](Port, Port ext) {
      if (pool.contains(ext) && !seen[pool.offset_of(ext)]) {
        seen[pool.offset_of(ext)] = true;
        ++seen_count;
      }
    });
    for (std::size_t off = 0; off < pool.size() && zombie->flows.size() + 1 < pool.size(); ++off) {
      const Port p = pool.at(off);
      if (preserving && p == leave) {
        continue;
      }
      bed.zombie_probe(p, true);
      zombie->flows.push_back(p);
    }
    net.run_until(net.now() + echo_rtt + std::chrono::milliseconds{1});
    bed.on_echo(nullptr);

    if (seen_count + 1 != pool.size()) {
      result.trap_infeasible = true;
      zombie->active = false;
      return result;
    }
    const auto open = static_cast<std::size_t>(std::find(seen.begin(), seen.end(), false) - seen.begin());
    nat.knowledge = Trapped{pool.at(open)};
    // The resolver's binding on the trapped port must lapse between rounds.
    spacing = std::max(spacing, table.timeout() + std::chrono::seconds{1});
    schedule_refresh(bed, zombie, table.timeout() * 3 / 4);
  }

  Port next_probe_port = 20000;
  SimTime start = net.now();
  for (std::size_t round = 1; round <= plan.rounds; ++round) {
    net.run_until(start);
    const DomainName trigger = make_trigger(plan.trigger, zone.apex, rng);

    if (plan.port_strategy == PortStrategy::Predict) {
      std::optional<Port> observed;
      bed.on_echo([&](Port, Port ext) { observed = ext; });
      bed.zombie_probe(next_probe_port++, true);
      net.run_until(start + kProbeGap);
      bed.zombie_query(trigger);
      net.run_until(start + echo_rtt + std::chrono::microseconds{1});
      bed.on_echo(nullptr);
      nat.knowledge = PortUnknown{};
      if (observed) {
        try {
          nat.knowledge = plan_predict(PredictRequest{
              *observed, policy, pool, 0.0, kProbeGap,
              patches.randomize_port ? std::nullopt : std::optional<Port>(patches.fixed_port), caps.knows_nat_policy});
        } catch (const UnpredictablePolicy&) {
        }
      }
    } else {
      bed.zombie_query(trigger);
    }

    const SearchSpace space = effective_search_space(patches, nat, zone, trigger, caps.ns_ip_derandomized);
    const auto known_txid = static_cast<std::uint16_t>(
        (!patches.randomize_txid && patches.weak_txid == WeakTxid::Sequential) ? round - 1 : 0);
    const GuessContext ctx{space, zone, patches, nat, trigger, known_txid, net.nat_address(),
                           prefix_applies(patches, trigger)};
    result.packets_sent += send_burst(ctx, caps, bed, rng);
    result.rounds_used = round;

    start += spacing;
    net.run_until(start - std::chrono::microseconds{1});
    if (zone_poisoned(resolver, zone.apex)) {
      result.success = true;
      break;
    }
  }
  result.knowledge = nat.knowledge;
  zombie->active = false;
  return result;
}

} // namespace derand
