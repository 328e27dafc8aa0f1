#include <doctest.h>

#include <array>
#include <cmath>

#include "derand/attacker.hpp"
#include "derand/testbed.hpp"

using namespace derand;
using namespace std::chrono_literals;

namespace {

DomainName N(const char* s) { return DomainName::parse(s); }

ZoneConfig zone_k(const char* apex, std::size_t k) {
  ZoneConfig z{N(apex), {}};
  for (std::size_t i = 0; i < k; ++i) {
    z.ns_ips.push_back(host(20 + static_cast<std::uint32_t>(i)));
  }
  return z;
}

NatOutcome unknown_random() { return NatOutcome{PortUnknown{}, AllocationPolicy::random_unrestricted(), PortPool{}}; }

// Smallest-entropy scene: every identifier known.
TopologyConfig preserving_topology() {
  TopologyConfig t;
  t.policy = AllocationPolicy::preserving();
  return t;
}

PatchConfig no_entropy() {
  PatchConfig p = PatchConfig::unpatched();
  p.randomize_txid = false;
  return p;
}

} // namespace

TEST_SUITE("attacker") {
  TEST_CASE("search space of an unpatched resolver is the txid") {
    const auto s = effective_search_space(PatchConfig::unpatched(), NatOutcome{PortUnknown{}, std::nullopt, PortPool{}},
                                          zone_k("com", 1), N("abc.com"), false);
    CHECK(s.n == 65536.0);
    CHECK(s.bits() == doctest::Approx(16.0));
  }

  TEST_CASE("search space with a trapped port and pinned server") {
    const auto s = effective_search_space(PatchConfig::all_patches(0),
                                          NatOutcome{Trapped{4000}, AllocationPolicy::random_unrestricted(), PortPool{}},
                                          zone_k("com", 2), N("1234567.com"), true);
    CHECK(s.txid_factor == 65536);
    CHECK(s.port_factor == 1);
    CHECK(s.ip_factor == 1);
    CHECK(s.case_factor == 8);
    CHECK(s.n == 65536.0 * 8);
  }

  TEST_CASE("search space with every patch and a random NAT") {
    const auto s = effective_search_space(PatchConfig::all_patches(0), unknown_random(), zone_k("google.com", 2),
                                          N("www.google.com"), false);
    CHECK(s.port_factor == 64512);
    CHECK(s.n == 65536.0 * 64512.0 * 2.0 * 4096.0);
  }

  TEST_CASE("a random prefix multiplies the space unless it cannot fit") {
    const auto p = PatchConfig::all_patches(12);
    const auto with = effective_search_space(p, unknown_random(), zone_k("com", 1), N("abc.com"), false);
    CHECK(with.prefix_factor == std::pow(36.0, 12));
    const auto without =
        effective_search_space(p, unknown_random(), zone_k("com", 1), max_numeric_query(N("com")), false);
    CHECK(without.prefix_factor == 1.0);
    CHECK_FALSE(prefix_applies(p, max_numeric_query(N("com"))));
  }

  TEST_CASE("disabling a patch never grows the space") {
    Rng rng(3);
    const std::vector<DomainName> triggers = {N("abc.com"), N("1234567.com"), max_numeric_query(N("com")),
                                              N("www.google.com")};
    for (int i = 0; i < 400; ++i) {
      PatchConfig p;
      p.randomize_txid = rng.coin();
      p.randomize_port = rng.coin();
      p.randomize_ns_ip = rng.coin();
      p.use_0x20 = rng.coin();
      p.prefix_len = rng.coin() ? 12 : 0;
      const auto zone = zone_k("com", 1 + rng.uniform(4));
      const auto& trig = triggers[rng.uniform(triggers.size())];
      const NatOutcome nat = rng.coin() ? unknown_random() : NatOutcome{PortUnknown{}, std::nullopt, PortPool{}};
      const bool pinned = rng.coin();
      const double base = effective_search_space(p, nat, zone, trig, pinned).n;
      for (int flag = 0; flag < 5; ++flag) {
        PatchConfig q = p;
        switch (flag) {
        case 0: q.randomize_txid = false; break;
        case 1: q.randomize_port = false; break;
        case 2: q.randomize_ns_ip = false; break;
        case 3: q.use_0x20 = false; break;
        default: q.prefix_len = 0; break;
        }
        CHECK(effective_search_space(q, nat, zone, trig, pinned).n <= base);
      }
      // Attacker steps only ever lower N.
      NatOutcome trapped = nat;
      trapped.knowledge = Trapped{1};
      CHECK(effective_search_space(p, trapped, zone, trig, pinned).n <= base);
      CHECK(effective_search_space(p, nat, zone, trig, true).n <= base);
    }
  }

  TEST_CASE("trap against a random NAT leaves exactly the chosen port") {
    MappingTable t(PortPool{}, AllocationPolicy::random_unrestricted());
    Rng rng(5);
    const auto out = plan_trap(t, TrapRequest{host(2), {40000}, std::nullopt, true}, 0us, rng);
    REQUIRE(std::holds_alternative<Trapped>(out));
    CHECK(std::get<Trapped>(out).port == 40000);
    CHECK(t.free_ports() == 1);
    CHECK(t.allocate(host(1), 5353, 1ms, rng) == 40000);
  }

  TEST_CASE("trap with no preference leaves some single port") {
    MappingTable t(PortPool::make(2000, 2999), AllocationPolicy::sequential(1));
    Rng rng(6);
    const auto out = plan_trap(t, TrapRequest{host(2), {}, std::nullopt, true}, 0us, rng);
    REQUIRE(std::holds_alternative<Trapped>(out));
    CHECK(t.allocate(host(1), 5353, 1ms, rng) == std::get<Trapped>(out).port);
  }

  TEST_CASE("trap against a defended NAT is infeasible for every capped capacity") {
    const PortPool pool = PortPool::make(3000, 3199);
    Rng rng(7);
    for (std::size_t cap = 1; cap <= pool.size() / 2; cap += 9) {
      MappingTable t(pool, AllocationPolicy::defended(cap));
      const auto out = plan_trap(t, TrapRequest{host(2), {}, std::nullopt, true}, 0us, rng);
      CHECK(std::holds_alternative<Infeasible>(out));
      CHECK(t.size() <= cap);
    }
    MappingTable full(PortPool{}, AllocationPolicy::defended());
    CHECK(std::holds_alternative<Infeasible>(plan_trap(full, TrapRequest{host(2), {40000}, std::nullopt, true}, 0us, rng)));
  }

  TEST_CASE("trap against a preserving NAT predicts the fallback") {
    MappingTable t(PortPool{}, AllocationPolicy::preserving());
    Rng rng(8);
    const auto out = plan_trap(t, TrapRequest{host(2), {}, Port{5353}, true}, 0us, rng);
    REQUIRE(std::holds_alternative<Predicted>(out));
    CHECK(std::get<Predicted>(out).port == 5354);
    CHECK(std::get<Predicted>(out).confidence == 1.0);
    CHECK(t.allocate(host(1), 5353, 1ms, rng) == 5354);

    MappingTable unknown(PortPool{}, AllocationPolicy::preserving());
    CHECK(std::holds_alternative<Infeasible>(plan_trap(unknown, TrapRequest{host(2), {}, Port{5353}, false}, 0us, rng)));
  }

  TEST_CASE("prediction from one observed port") {
    const auto seq = plan_predict(PredictRequest{3000, AllocationPolicy::sequential(1), PortPool{}});
    CHECK(seq.port == 3001);
    CHECK(seq.confidence == 1.0);
    const auto wrap = plan_predict(PredictRequest{65535, AllocationPolicy::sequential(1), PortPool{}});
    CHECK(wrap.port == 1024);
    const auto busy = plan_predict(PredictRequest{3000, AllocationPolicy::sequential(1), PortPool{}, 100.0, 10ms});
    CHECK(busy.confidence == doctest::Approx(std::exp(-1.0)));
    const auto pres = plan_predict(PredictRequest{3000, AllocationPolicy::preserving(), PortPool{}, 0.0, 1ms, Port{5353}});
    CHECK(pres.port == 5353);
    CHECK_THROWS_AS(plan_predict(PredictRequest{3000, AllocationPolicy::random_unrestricted(), PortPool{}}),
                    UnpredictablePolicy);
    CHECK_THROWS_AS(plan_predict(PredictRequest{3000, AllocationPolicy::defended(), PortPool{}}), UnpredictablePolicy);
    PredictRequest blind{3000, AllocationPolicy::sequential(1), PortPool{}};
    blind.knows_nat_policy = false;
    CHECK_THROWS_AS(plan_predict(blind), UnpredictablePolicy);
  }

  TEST_CASE("trigger names carry only the zone's letters") {
    Rng rng(9);
    const auto com = choose_target_name(N("com"), rng);
    CHECK(com.labels().size() == 2);
    CHECK(com.labels()[0].size() == 7);
    CHECK(case_entropy_factor(com) == 8);
    CHECK(case_entropy_factor(choose_target_name(N("uk"), rng)) == 4);
    CHECK(case_entropy_factor(choose_target_name(N("victim.com"), rng)) == 512);
    const auto lbl = random_label_name(N("com"), rng);
    CHECK(alpha_count(lbl) == 11);
    for (int i = 0; i < 20; ++i) {
      const auto m = fresh_max_numeric_query(N("com"), rng);
      CHECK(wire_length(m) == 255);
      CHECK(alpha_count(m) == 3);
    }
  }

  TEST_CASE("blocking query has maximal size") {
    const auto q = block_prefix(N("com"), hosts::kZombie, hosts::kResolver);
    CHECK(q.kind == MessageKind::Query);
    CHECK(wire_length(q.qname) == 255);
    CHECK(q.dst_ip == hosts::kResolver);
  }

  TEST_CASE("plan validation") {
    AttackPlan p{N("com")};
    p.rounds = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }

  TEST_CASE("with no entropy left one packet poisons in round one") {
    Testbed bed(preserving_topology(), no_entropy(), N("com"), 1, 1);
    Rng rng(1);
    Capabilities caps;
    caps.spoof_budget_per_round = 1;
    const auto r = kaminsky_attack(AttackPlan{N("com"), TriggerStrategy::RandomLabel, PortStrategy::None, 5}, caps, bed, rng);
    CHECK(r.success);
    CHECK(r.rounds_used == 1);
    CHECK(r.packets_sent == 1);
    CHECK(bed.resolver().zone(N("com"))->ns_ips == std::vector<HostId>{hosts::kAttackerNameServer});
  }

  TEST_CASE("with no packets nothing happens") {
    Testbed bed(preserving_topology(), no_entropy(), N("com"), 1, 1);
    Rng rng(1);
    Capabilities caps;
    caps.spoof_budget_per_round = 0;
    const auto r = kaminsky_attack(AttackPlan{N("com"), TriggerStrategy::RandomLabel, PortStrategy::None, 5}, caps, bed, rng);
    CHECK_FALSE(r.success);
    CHECK(r.rounds_used == 5);
    CHECK(r.packets_sent == 0);
  }

  TEST_CASE("sim trap puts the resolver on the trapped port") {
    TopologyConfig topo;
    topo.pool = PortPool::make(10000, 10999);
    Testbed bed(topo, PatchConfig::all_patches(0), N("com"), 1, 3);
    Rng rng(3);
    Capabilities caps;
    caps.spoof_budget_per_round = 0;
    const auto r = kaminsky_attack(AttackPlan{N("com"), TriggerStrategy::Numeric, PortStrategy::Trap, 2}, caps, bed, rng);
    REQUIRE(std::holds_alternative<Trapped>(r.knowledge));
    const Port trapped = std::get<Trapped>(r.knowledge).port;
    REQUIRE(bed.resolver_external_ports().size() == 2);
    CHECK(bed.resolver_external_ports()[0] == trapped);
    CHECK(bed.resolver_external_ports()[1] == trapped);
  }

  TEST_CASE("sim trap against a defended NAT aborts") {
    TopologyConfig topo;
    topo.pool = PortPool::make(10000, 10999);
    topo.policy = AllocationPolicy::defended();
    Testbed bed(topo, PatchConfig::all_patches(0), N("com"), 1, 3);
    Rng rng(3);
    const auto r = kaminsky_attack(AttackPlan{N("com"), TriggerStrategy::Numeric, PortStrategy::Trap, 2}, Capabilities{}, bed, rng);
    CHECK(r.trap_infeasible);
    CHECK_FALSE(r.success);
  }

  TEST_CASE("rounds to success follow a geometric law") {
    // 16 candidate ports, 2 distinct guesses per round: p = 1/8 per round.
    TopologyConfig topo = preserving_topology();
    PatchConfig patches = no_entropy();
    patches.randomize_port = true;
    patches.ephemeral_lo = 5000;
    patches.ephemeral_hi = 5015;
    Capabilities caps;
    caps.spoof_budget_per_round = 2;
    const AttackPlan plan{N("com"), TriggerStrategy::RandomLabel, PortStrategy::None, 40};
    const double p = 2.0 / 16.0;

    constexpr int kBins = 11;  // rounds 1..10, then 11+ or never
    std::array<int, kBins> observed{};
    const int trials = 2000;
    for (int i = 0; i < trials; ++i) {
      const auto seed = derive_seed(77, static_cast<std::uint64_t>(i));
      Testbed bed(topo, patches, N("com"), 1, seed);
      Rng rng(derive_seed(seed, Stream::Attacker));
      const auto r = kaminsky_attack(plan, caps, bed, rng);
      const std::size_t bin = r.success ? std::min<std::size_t>(r.rounds_used, kBins) - 1 : kBins - 1;
      observed[bin]++;
    }
    double chi2 = 0.0;
    for (int b = 0; b < kBins; ++b) {
      const double prob = b < kBins - 1 ? std::pow(1 - p, b) * p : std::pow(1 - p, kBins - 1);
      const double expected = trials * prob;
      chi2 += (observed[b] - expected) * (observed[b] - expected) / expected;
    }
    // chi-square, 10 degrees of freedom, alpha = 0.01.
    CHECK(chi2 < 23.209);
  }
}
