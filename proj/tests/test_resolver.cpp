#include <doctest.h>

#include <algorithm>
#include <set>

#include "derand/resolver.hpp"

using namespace derand;
using namespace std::chrono_literals;

namespace {

const HostId kSelf = host(1);
const HostId kNs1 = host(20);
const HostId kNs2 = host(21);
const HostId kEvil = host(103);

DomainName N(const char* s) { return DomainName::parse(s); }

Resolver make(PatchConfig p = PatchConfig::all_patches(0)) {
  return Resolver(kSelf, p, {ZoneConfig{N("victim.com"), {kNs1, kNs2}}, ZoneConfig{N("com"), {host(30)}}});
}

Issued issue(Resolver& r, const DomainName& name, Rng& rng, SimTime now = 0us) {
  auto res = r.issue_query(name, RecordType::A, now, rng);
  REQUIRE(std::holds_alternative<Issued>(res));
  return std::get<Issued>(res);
}

// Response a genuine server would send for the pending query.
DnsMessage valid_response(const PendingQuery& p) {
  DnsMessage m;
  m.kind = MessageKind::Response;
  m.src_ip = p.ns_ip;
  m.src_port = 53;
  m.dst_ip = kSelf;
  m.dst_port = p.src_port;
  m.txid = p.txid;
  m.qname = p.qname_as_sent;
  m.qtype = p.qtype;
  return m;
}

DnsMessage poison(const PendingQuery& p, const DomainName& apex) {
  DnsMessage m = valid_response(p);
  const DomainName server = apex.prepend("ns");
  m.answers.push_back(ResourceRecord::ns(apex, server, 86400s));
  m.answers.push_back(ResourceRecord::a(server, kEvil, 86400s));
  return m;
}

HostId other_ns(HostId ip) { return ip == kNs1 ? kNs2 : kNs1; }

} // namespace

TEST_SUITE("resolver") {
  TEST_CASE("a matching response is accepted and consumes the pending entry") {
    auto r = make();
    Rng rng(1);
    const auto q = issue(r, N("www.victim.com"), rng);
    CHECK(q.query.dst_ip == q.pending.ns_ip);
    CHECK(q.query.src_port == q.pending.src_port);
    const auto resp = valid_response(q.pending);
    const auto a = r.accept_response(resp, 10ms);
    CHECK(a.accepted);
    CHECK(r.pending().empty());
    const auto again = r.accept_response(resp, 11ms);
    CHECK_FALSE(again.accepted);
    CHECK(again.reason == RejectReason::NoPending);
  }

  TEST_CASE("flipping one identifier rejects with its reason") {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
      auto r = make();
      const auto q = issue(r, N("mail.victim.com"), rng);
      const auto good = valid_response(q.pending);

      auto bad_ip = good;
      bad_ip.src_ip = other_ns(good.src_ip);
      auto bad_port = good;
      bad_port.dst_port = static_cast<Port>(good.dst_port + 1 + rng.uniform(1000));
      auto bad_txid = good;
      bad_txid.txid = static_cast<std::uint16_t>(good.txid + 1 + rng.uniform(65535));
      auto bad_case = good;
      bad_case.qname = good.qname.with_case_mask(~std::uint64_t{0});
      if (bad_case.qname == good.qname) {
        bad_case.qname = good.qname.folded();
      }

      CHECK(r.accept_response(bad_ip, 1ms).reason == RejectReason::IpMismatch);
      CHECK(r.accept_response(bad_port, 1ms).reason == RejectReason::PortMismatch);
      CHECK(r.accept_response(bad_txid, 1ms).reason == RejectReason::TxidMismatch);
      CHECK(r.accept_response(bad_case, 1ms).reason == RejectReason::NameCaseMismatch);
      CHECK(r.accept_response(good, 1ms).accepted);
    }
  }

  TEST_CASE("a server that folds case fails the 0x20 check") {
    auto r = make();
    Rng rng(3);
    // With 12 letters the chance that 0x20 picked all lowercase is 2^-12.
    const auto q = issue(r, N("www.victim.com"), rng);
    auto resp = valid_response(q.pending);
    resp.qname = resp.qname.folded();
    if (resp.qname != q.pending.qname_as_sent) {
      CHECK(r.accept_response(resp, 1ms).reason == RejectReason::NameCaseMismatch);
    }
  }

  TEST_CASE("birthday protection defers a concurrent duplicate") {
    auto r = make();
    Rng rng(4);
    issue(r, N("a.victim.com"), rng);
    CHECK(std::holds_alternative<Deferred>(r.issue_query(N("A.VICTIM.com"), RecordType::A, 1ms, rng)));
    CHECK(std::holds_alternative<Issued>(r.issue_query(N("b.victim.com"), RecordType::A, 1ms, rng)));
    CHECK(std::holds_alternative<Issued>(r.issue_query(N("a.victim.com"), RecordType::NS, 1ms, rng)));
    CHECK(r.stats().deferred == 1);
  }

  TEST_CASE("birthday gate bound holds under random load") {
    for (std::size_t k : {1u, 2u, 3u}) {
      auto p = PatchConfig::all_patches(0);
      p.birthday_max_concurrent = k;
      auto r = make(p);
      Rng rng(k);
      SimTime now{0};
      const std::vector<DomainName> names = {N("a.victim.com"), N("b.victim.com"), N("c.com")};
      for (int i = 0; i < 2000; ++i) {
        now += std::chrono::milliseconds{rng.uniform(300)};
        (void)r.issue_query(names[rng.uniform(names.size())], RecordType::A, now, rng);
        if (rng.uniform(4) == 0) {
          r.handle_timeout(now);
        }
        for (const auto& n : names) {
          const auto live = std::count_if(r.pending().begin(), r.pending().end(), [&](const PendingQuery& q) {
            return q.deadline > now && q.base_qname.equals_ignore_case(n);
          });
          REQUIRE(static_cast<std::size_t>(live) <= k);
        }
      }
    }
  }

  TEST_CASE("all patches off gives constant identifiers and an untouched name") {
    auto p = PatchConfig::unpatched();
    p.randomize_txid = false;
    auto r = make(p);
    Rng rng(5);
    const auto q1 = issue(r, N("Www.Victim.com"), rng);
    r.handle_timeout(10s);
    const auto q2 = issue(r, N("Www.Victim.com"), rng, 11s);
    CHECK(q1.query.txid == q2.query.txid);
    CHECK(q1.query.src_port == p.fixed_port);
    CHECK(q2.query.src_port == p.fixed_port);
    CHECK(q1.query.dst_ip == kNs1);
    CHECK(q2.query.dst_ip == kNs1);
    CHECK(q1.query.qname == N("Www.Victim.com"));
  }

  TEST_CASE("weak sequential txid counts up") {
    auto p = PatchConfig::unpatched();
    p.randomize_txid = false;
    p.weak_txid = WeakTxid::Sequential;
    auto r = make(p);
    Rng rng(5);
    for (std::uint16_t i = 0; i < 5; ++i) {
      const auto q = issue(r, N("victim.com").prepend("n" + std::to_string(i)), rng);
      CHECK(q.query.txid == i);
    }
  }

  TEST_CASE("maximal numeric query skips the prefix and 0x20 changes nothing") {
    auto r = make(PatchConfig::all_patches(12));
    Rng rng(6);
    const DomainName m = max_numeric_query(N("com"));
    const auto q = issue(r, m, rng);
    CHECK(q.query.qname.folded() == m);
    CHECK(q.query.qname.labels().size() == m.labels().size());
    CHECK(r.stats().prefix_skipped == 1);

    const auto q2 = issue(r, N("victim.com").prepend("x"), rng);
    CHECK(q2.query.qname.labels().size() == 4);
    CHECK(q2.query.qname.labels()[0].size() == 12);
    CHECK(r.stats().prefix_skipped == 1);
  }

  TEST_CASE("the max-length guard refuses instead of skipping") {
    auto p = PatchConfig::all_patches(12);
    p.restrict_max_length_queries = true;
    auto r = make(p);
    Rng rng(6);
    CHECK(std::holds_alternative<Refused>(r.issue_query(max_numeric_query(N("com")), RecordType::A, 0us, rng)));
    CHECK(r.stats().refused == 1);
  }

  TEST_CASE("an accepted NS plus glue response replaces the zone's servers") {
    auto r = make();
    Rng rng(7);
    const auto q = issue(r, N("xyz.victim.com"), rng);
    const auto a = r.accept_response(poison(q.pending, N("victim.com")), 1ms);
    CHECK(a.accepted);
    CHECK(a.records_stored == 2);
    REQUIRE(r.zone(N("victim.com")) != nullptr);
    CHECK(r.zone(N("victim.com"))->ns_ips == std::vector<HostId>{kEvil});
    CHECK(r.stats().delegations_replaced == 1);
  }

  TEST_CASE("records outside the query's chain are rejected") {
    auto r = make();
    const auto outside = r.cache_insert(N("xyz.victim.com"), N("victim.com"),
                                        ResourceRecord::a(N("google.com"), kEvil, 60s), 0us);
    CHECK(outside == CacheOutcome::RejectedOutOfBailiwick);
    const auto above_apex =
        r.cache_insert(N("xyz.victim.com"), N("victim.com"), ResourceRecord::ns(N("com"), N("ns.com"), 60s), 0us);
    CHECK(above_apex == CacheOutcome::RejectedOutOfBailiwick);
    const auto exact =
        r.cache_insert(N("xyz.victim.com"), N("victim.com"), ResourceRecord::a(N("xyz.victim.com"), kEvil, 60s), 0us);
    CHECK(exact == CacheOutcome::Stored);
  }

  TEST_CASE("a glue record without a delegation is rejected") {
    auto r = make();
    CHECK(r.cache_insert(N("xyz.victim.com"), N("victim.com"), ResourceRecord::a(N("ns.victim.com"), kEvil, 60s),
                         0us) == CacheOutcome::RejectedOutOfBailiwick);
    CHECK(r.zone(N("victim.com"))->ns_ips == std::vector<HostId>{kNs1, kNs2});
  }

  TEST_CASE("poisoning another zone's servers through an unrelated query fails") {
    auto r = make();
    Rng rng(8);
    const auto q = issue(r, N("xyz.victim.com"), rng);
    const auto a = r.accept_response(poison(q.pending, N("google.com")), 1ms);
    CHECK(a.accepted);
    CHECK(a.records_stored == 0);
    CHECK(a.records_rejected == 2);
    CHECK(r.zone(N("google.com")) == nullptr);
  }

  TEST_CASE("bailiwick property over random responses") {
    Rng rng(9);
    const std::vector<DomainName> owners = {N("victim.com"),     N("a.victim.com"), N("b.a.victim.com"),
                                            N("com"),            N("google.com"),   N("ns.victim.com"),
                                            N("ns.google.com"), DomainName{}};
    for (int trial = 0; trial < 300; ++trial) {
      auto r = make(PatchConfig::unpatched());
      const DomainName qname = owners[1 + rng.uniform(2)];
      const auto q = issue(r, qname, rng);
      auto resp = valid_response(q.pending);
      for (int i = 0; i < 4; ++i) {
        const DomainName& owner = owners[rng.uniform(owners.size())];
        if (rng.coin()) {
          resp.answers.push_back(ResourceRecord::ns(owner, owners[rng.uniform(owners.size())], 60s));
        } else {
          resp.answers.push_back(ResourceRecord::a(owner, host(50), 60s));
        }
      }
      REQUIRE(r.accept_response(resp, 1ms).accepted);
      for (const auto& e : r.cache_entries()) {
        CHECK(qname.is_within(e.owner));
        CHECK(e.owner.is_within(q.pending.zone_apex));
      }
    }
  }

  TEST_CASE("cache lookups honour ttl") {
    auto r = make();
    r.cache_insert(N("a.victim.com"), N("victim.com"), ResourceRecord::a(N("a.victim.com"), host(50), 60s), 0us);
    CHECK(r.lookup(N("A.victim.com"), RecordType::A, 59s).has_value());
    CHECK_FALSE(r.lookup(N("a.victim.com"), RecordType::A, 60s).has_value());
    CHECK_FALSE(r.lookup(N("b.victim.com"), RecordType::A, 1s).has_value());
  }

  TEST_CASE("negative answers are cached briefly") {
    auto r = make();
    Rng rng(10);
    const auto q = issue(r, N("nope.victim.com"), rng);
    auto resp = valid_response(q.pending);
    resp.nxdomain = true;
    REQUIRE(r.accept_response(resp, 100ms).accepted);
    CHECK(r.negatively_cached(N("nope.victim.com"), 500ms));
    CHECK_FALSE(r.negatively_cached(N("nope.victim.com"), 1200ms));
  }

  TEST_CASE("timeouts report and drop only expired queries") {
    auto r = make();
    Rng rng(11);
    issue(r, N("a.victim.com"), rng, 0s);
    issue(r, N("b.victim.com"), rng, 1s);
    CHECK(r.handle_timeout(1s).empty());
    const auto gone = r.handle_timeout(2s);
    REQUIRE(gone.size() == 1);
    CHECK(gone[0].base_qname == N("a.victim.com"));
    CHECK(r.pending().size() == 1);
  }

  TEST_CASE("an answered query is not reported as timed out") {
    auto r = make();
    Rng rng(12);
    const auto q = issue(r, N("a.victim.com"), rng);
    REQUIRE(r.accept_response(valid_response(q.pending), 100ms).accepted);
    CHECK(r.handle_timeout(5s).empty());
  }

  TEST_CASE("late responses find no pending query") {
    auto r = make();
    Rng rng(13);
    const auto q = issue(r, N("a.victim.com"), rng);
    CHECK(r.accept_response(valid_response(q.pending), 3s).reason == RejectReason::NoPending);
  }

  TEST_CASE("honest responses are always accepted") {
    Rng rng(14);
    auto p = PatchConfig::all_patches(12);
    p.birthday_max_concurrent = 0;
    auto r = make(p);
    std::vector<PendingQuery> open;
    for (int i = 0; i < 500; ++i) {
      const DomainName name = N("victim.com").prepend("h" + std::to_string(rng.uniform(50)));
      open.push_back(issue(r, name, rng, 0us).pending);
    }
    // Answer in a shuffled order.
    for (std::size_t i = open.size(); i > 1; --i) {
      std::swap(open[i - 1], open[rng.uniform(i)]);
    }
    for (const auto& q : open) {
      CHECK(r.accept_response(valid_response(q), 50ms).accepted);
    }
    CHECK(r.pending().empty());
  }

  TEST_CASE("a pinned server receives every query") {
    auto r = make();
    r.pin_name_server(N("victim.com"), kNs2);
    Rng rng(15);
    for (int i = 0; i < 50; ++i) {
      CHECK(issue(r, N("victim.com").prepend("p" + std::to_string(i)), rng).query.dst_ip == kNs2);
    }
  }

  TEST_CASE("random server choice uses both servers") {
    auto r = make();
    Rng rng(16);
    std::set<std::uint32_t> used;
    for (int i = 0; i < 50; ++i) {
      used.insert(raw(issue(r, N("victim.com").prepend("p" + std::to_string(i)), rng).query.dst_ip));
    }
    CHECK(used.size() == 2);
  }

  TEST_CASE("invalid configuration is rejected") {
    auto p = PatchConfig::all_patches(64);
    CHECK_THROWS_AS(make(p), std::invalid_argument);
    CHECK_THROWS_AS(Resolver(kSelf, PatchConfig{}, {ZoneConfig{N("com"), {}}}), std::invalid_argument);
    auto r = make();
    Rng rng(1);
    CHECK_THROWS_AS(r.issue_query(N("example.org"), RecordType::A, 0us, rng), std::invalid_argument);
  }
}
