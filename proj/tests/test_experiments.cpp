#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "derand/experiments.hpp"

using namespace derand;

namespace {

// Oracle: direct product form, no log1p.
double distinct_oracle(double n, double w, int r) { return 1.0 - std::pow(1.0 - w / n, r); }
double independent_oracle(double n, double w, int r) { return 1.0 - std::pow(std::pow(1.0 - 1.0 / n, w), r); }

std::string report_text(const std::vector<Metrics>& rows, ReportFormat f) {
  std::ostringstream out;
  write_report(rows, f, out);
  return out.str();
}

Scenario tiny() {
  Scenario s = preset("predict-sequential");
  s.trials = 4;
  s.plan.rounds = 3;
  s.attacker.spoof_budget_per_round = 65536;
  return s;
}

} // namespace

TEST_SUITE("experiments") {
  TEST_CASE("analytic success against the closed forms") {
    CHECK(analytic_success(100, 100, 1, true) == 1.0);
    CHECK(analytic_success(100, 0, 5, true) == 0.0);
    CHECK(analytic_success(100, 0, 5, false) == 0.0);
    for (double n : {2.0, 100.0, 65536.0, 524288.0}) {
      for (double w : {1.0, 2.0, 512.0}) {
        if (w > n) {
          continue;
        }
        for (int r : {1, 3, 100}) {
          CHECK(analytic_success(n, w, r, true) == doctest::Approx(distinct_oracle(n, w, r)).epsilon(1e-9));
          CHECK(analytic_success(n, w, r, false) == doctest::Approx(independent_oracle(n, w, r)).epsilon(1e-9));
          CHECK(analytic_success(n, w, r, false) <= analytic_success(n, w, r, true) + 1e-12);
        }
      }
    }
    CHECK(analytic_success(65536, 512, 100, true) == doctest::Approx(0.5435686).epsilon(1e-6));
  }

  TEST_CASE("analytic success domain errors") {
    CHECK_THROWS_AS(analytic_success(10, 11, 1, true), std::domain_error);
    CHECK_THROWS_AS(analytic_success(10, 1, 0, true), std::domain_error);
    CHECK_THROWS_AS(analytic_success(0.5, 1, 1, false), std::domain_error);
    CHECK_THROWS_AS(analytic_success(10, -1, 1, false), std::domain_error);
    CHECK_NOTHROW(analytic_success(10, 11, 1, false));
  }

  TEST_CASE("confidence scales the per-round chance") {
    CHECK(analytic_success(8, 8, 1, true, 0.5) == doctest::Approx(0.5));
    CHECK(analytic_success(8, 4, 2, true, 0.5) == doctest::Approx(1 - 0.75 * 0.75));
  }

  TEST_CASE("min-entropy estimates") {
    std::vector<Port> same(1000, 7);
    CHECK(min_entropy_estimate(same) == 0.0);
    std::vector<Port> two;
    for (int i = 0; i < 100000; ++i) {
      two.push_back(i % 2 ? 1 : 2);
    }
    CHECK(min_entropy_estimate(two) == doctest::Approx(1.0));
    Rng rng(1);
    std::vector<Port> coin;
    for (int i = 0; i < 100000; ++i) {
      coin.push_back(rng.coin() ? 10 : 20);
    }
    CHECK(min_entropy_estimate(coin) == doctest::Approx(1.0).epsilon(0.01));
    CHECK_THROWS_AS(min_entropy_estimate(std::vector<Port>(999, 1)), InsufficientSamples);
  }

  TEST_CASE("presets report the planned search space") {
    CHECK(plan_attack(preset("unpatched-baseline")).space.n == 65536.0);
    CHECK(plan_attack(preset("ladder-4-prefix-block")).space.n == 65536.0);
    CHECK(plan_attack(preset("com-prefix-block")).space.n == 524288.0);
    CHECK(plan_attack(preset("trap-vs-defended")).trap_infeasible);
    double previous = INFINITY;
    for (const char* name : {"ladder-0-all-patches", "ladder-1-trap", "ladder-2-ip-pin", "ladder-3-numeric-trigger",
                             "ladder-4-prefix-block"}) {
      const double n = plan_attack(preset(name)).space.n;
      CHECK(n <= previous);
      previous = n;
    }
    CHECK_THROWS_AS(preset("nope"), ConfigError);
    for (const auto& name : preset_names()) {
      CHECK_NOTHROW(preset(name).validate());
      CHECK(!preset_summary(name).empty());
      CHECK(explain(preset(name)).find("N ") != std::string::npos);
    }
  }

  TEST_CASE("a guarded resolver leaves nothing to attack") {
    Scenario s = preset("com-prefix-block");
    s.resolver.restrict_max_length_queries = true;
    s.trials = 3;
    const PlannedAttack p = plan_attack(s);
    CHECK(p.refused);
    CHECK(planned_success(s, p) == 0.0);
    const Metrics m = run_scenario(s);
    CHECK(m.analytic == 0.0);
    CHECK(m.successes == 0);
    CHECK_FALSE(plan_attack(preset("com-prefix-block")).refused);
  }

  TEST_CASE("scenario validation names the field") {
    Scenario s = tiny();
    s.trials = 0;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("trials"), ConfigError);
    s = tiny();
    s.network.loss = 2;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("network.loss"), ConfigError);
    s = tiny();
    s.resolver.prefix_len = 70;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("resolver"), ConfigError);
    s = tiny();
    s.ns_count = 0;
    CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("zone.ns_count"), ConfigError);
  }

  TEST_CASE("a run is reproducible and trial-order free") {
    Scenario s = tiny();
    s.trials = 12;
    const Metrics a = run_scenario(s);
    const Metrics b = run_scenario(s);
    CHECK(report_text({a}, ReportFormat::Csv) == report_text({b}, ReportFormat::Csv));
    CHECK(a.success_rate >= 0.0);
    CHECK(a.success_rate <= 1.0);

    // Replaying the trials by hand in reverse order gives the same tally.
    std::size_t successes = 0;
    std::size_t packets = 0;
    for (std::size_t i = s.trials; i-- > 0;) {
      const std::uint64_t seed = derive_seed(s.seed, i);
      Testbed bed(s.network, s.resolver, s.zone_apex, s.ns_count, seed);
      Rng rng(derive_seed(seed, Stream::Attacker));
      const AttackResult r = kaminsky_attack(s.plan, s.attacker, bed, rng);
      if (r.success) {
        ++successes;
        packets += r.packets_sent;
      }
    }
    CHECK(successes == a.successes);
    if (successes > 0) {
      CHECK(*a.packets_mean == doctest::Approx(static_cast<double>(packets) / successes));
    }
  }

  TEST_CASE("traces are byte-identical across runs") {
    Scenario s = tiny();
    std::ostringstream t1;
    std::ostringstream t2;
    RunOptions o1;
    o1.trace = &t1;
    RunOptions o2;
    o2.trace = &t2;
    run_scenario(s, o1);
    run_scenario(s, o2);
    CHECK(!t1.str().empty());
    CHECK(t1.str() == t2.str());
  }

  TEST_CASE("audited runs find no off-path or crossing violations") {
    Scenario s = tiny();
    RunOptions o;
    o.audit = true;
    const Metrics m = run_scenario(s, o);
    CHECK(m.off_path_violations == 0);
    CHECK(m.nat_crossing_violations == 0);
  }

  TEST_CASE("small Monte Carlo agrees with the analytic value") {
    Scenario s = preset("predict-sequential");
    s.trials = 150;
    const Metrics m = run_scenario(s);
    const double sigma = std::sqrt(m.analytic * (1 - m.analytic) / s.trials);
    CHECK(std::abs(m.success_rate - m.analytic) <= 3 * sigma);
  }

  TEST_CASE("csv report layout") {
    CHECK(report_text({}, ReportFormat::Csv) == std::string(kCsvHeader) + "\n");
    CHECK(report_text({}, ReportFormat::Jsonl).empty());
    Metrics m;
    m.scenario = "a,b";
    m.space.n = 65536;
    m.success_rate = 0.5;
    m.analytic = 0.25;
    m.prefix_skipped = 3;
    const std::string csv = report_text({m}, ReportFormat::Csv);
    CHECK(csv == std::string(kCsvHeader) + "\n\"a,b\",65536,0.500000,0.000000,0.250000,,,,3\n");
    m.rounds_mean = 2.0;
    m.space.n = 1e31;
    const std::string row = report_text({m}, ReportFormat::Csv);
    CHECK(row.find(",1.000000e+31,") != std::string::npos);
    CHECK(row.find(",2.000000,") != std::string::npos);
  }

  TEST_CASE("jsonl rows share one key order") {
    Metrics a;
    a.scenario = "x";
    Metrics b = a;
    b.rounds_mean = 1.5;
    const std::string text = report_text({a, b}, ReportFormat::Jsonl);
    std::istringstream in(text);
    std::string l1;
    std::string l2;
    std::getline(in, l1);
    std::getline(in, l2);
    const std::string keys =
        "scenario N success_rate stderr analytic rounds_mean packets_mean port_minentropy_bits prefix_skipped";
    std::size_t pos1 = 0;
    std::size_t pos2 = 0;
    std::istringstream ks(keys);
    std::string k;
    while (ks >> k) {
      const auto p1 = l1.find("\"" + k + "\"");
      const auto p2 = l2.find("\"" + k + "\"");
      REQUIRE(p1 != std::string::npos);
      REQUIRE(p2 != std::string::npos);
      CHECK(p1 >= pos1);
      CHECK(p2 >= pos2);
      pos1 = p1;
      pos2 = p2;
    }
    CHECK(l1.find("\"rounds_mean\":null") != std::string::npos);
    CHECK(l2.find("\"rounds_mean\":1.5") != std::string::npos);
  }

  TEST_CASE("report files and format names") {
    const auto path = (std::filesystem::temp_directory_path() / "derand_report_test.csv").string();
    write_report(std::vector<Metrics>{}, ReportFormat::Csv, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == kCsvHeader);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(write_report(std::vector<Metrics>{}, ReportFormat::Csv, "/nonexistent-dir/x.csv"),
                    std::runtime_error);
    CHECK(parse_report_format("csv") == ReportFormat::Csv);
    CHECK(parse_report_format("jsonl") == ReportFormat::Jsonl);
    CHECK_FALSE(parse_report_format("xml").has_value());
  }
}
