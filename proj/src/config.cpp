#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <yaml-cpp/yaml.h>

#include "derand/experiments.hpp"

namespace derand {

namespace {

[[noreturn]] void fail(const std::string& path, std::string_view msg) {
  throw ConfigError(fmt::format("{}: {}", path, msg));
}

std::string scalar(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) {
    fail(path, "expected a scalar value");
  }
  return n.Scalar();
}

bool as_bool(const YAML::Node& n, const std::string& path) {
  bool v = false;
  if (!n.IsScalar() || !YAML::convert<bool>::decode(n, v)) {
    fail(path, "expected true or false");
  }
  return v;
}

std::uint64_t as_uint(const YAML::Node& n, const std::string& path,
                      std::uint64_t max = std::numeric_limits<std::uint64_t>::max()) {
  const std::string text = scalar(n, path);
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (text.empty() || text.front() == '-' || text.front() == '+') {
      throw std::invalid_argument(text);
    }
    v = std::stoull(text, &used, 0);
  } catch (const std::exception&) {
    fail(path, fmt::format("expected a non-negative integer, got '{}'", text));
  }
  if (used != text.size()) {
    fail(path, fmt::format("expected a non-negative integer, got '{}'", text));
  }
  if (v > max) {
    fail(path, fmt::format("{} exceeds the maximum {}", v, max));
  }
  return v;
}

Port as_port(const YAML::Node& n, const std::string& path) { return static_cast<Port>(as_uint(n, path, 65535)); }

double as_double(const YAML::Node& n, const std::string& path) {
  double v = 0.0;
  if (!n.IsScalar() || !YAML::convert<double>::decode(n, v)) {
    fail(path, "expected a number");
  }
  return v;
}

SimTime as_ms(const YAML::Node& n, const std::string& path) {
  return std::chrono::milliseconds{static_cast<std::int64_t>(as_uint(n, path, 1'000'000'000))};
}

SimTime as_us(const YAML::Node& n, const std::string& path) {
  return std::chrono::microseconds{static_cast<std::int64_t>(as_uint(n, path, 1'000'000'000'000))};
}

/// Calls fn(key, value, path) for every entry; rejects keys not in `known`.
template <typename Fn>
void each_key(const YAML::Node& map, const std::string& prefix, const std::set<std::string>& known, Fn&& fn) {
  if (!map.IsMap()) {
    fail(prefix, "expected a mapping");
  }
  for (const auto& kv : map) {
    const std::string key = kv.first.as<std::string>();
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!known.contains(key)) {
      fail(path, "unknown key");
    }
    fn(key, kv.second, path);
  }
}

void apply_resolver(Scenario& s, const YAML::Node& node) {
  static const std::set<std::string> keys = {"randomize_txid",
                                             "randomize_port",
                                             "randomize_ns_ip",
                                             "use_0x20",
                                             "prefix_len",
                                             "birthday_max_concurrent",
                                             "weak_txid",
                                             "restrict_max_length_queries",
                                             "fixed_port",
                                             "ephemeral_lo",
                                             "ephemeral_hi"};
  auto& r = s.resolver;
  each_key(node, "resolver", keys, [&](const std::string& k, const YAML::Node& v, const std::string& path) {
    if (k == "randomize_txid") {
      r.randomize_txid = as_bool(v, path);
    } else if (k == "randomize_port") {
      r.randomize_port = as_bool(v, path);
    } else if (k == "randomize_ns_ip") {
      r.randomize_ns_ip = as_bool(v, path);
    } else if (k == "use_0x20") {
      r.use_0x20 = as_bool(v, path);
    } else if (k == "prefix_len") {
      r.prefix_len = as_uint(v, path, kMaxLabelLength);
    } else if (k == "birthday_max_concurrent") {
      r.birthday_max_concurrent = as_uint(v, path, 1'000'000);
    } else if (k == "weak_txid") {
      const std::string w = scalar(v, path);
      if (w == "constant") {
        r.weak_txid = WeakTxid::Constant;
      } else if (w == "sequential") {
        r.weak_txid = WeakTxid::Sequential;
      } else {
        fail(path, "expected constant or sequential");
      }
    } else if (k == "restrict_max_length_queries") {
      r.restrict_max_length_queries = as_bool(v, path);
    } else if (k == "fixed_port") {
      r.fixed_port = as_port(v, path);
    } else if (k == "ephemeral_lo") {
      r.ephemeral_lo = as_port(v, path);
    } else {
      r.ephemeral_hi = as_port(v, path);
    }
  });
}

void apply_nat(Scenario& s, const YAML::Node& node) {
  static const std::set<std::string> keys = {"policy",   "increment", "sequential_start", "capacity",
                                             "preserving_fallback", "pool_lo",  "pool_hi", "timeout_ms"};
  auto& t = s.network;
  each_key(node, "nat", keys, [&](const std::string& k, const YAML::Node& v, const std::string& path) {
    if (k == "policy") {
      const std::string p = scalar(v, path);
      if (p == "preserving") {
        t.policy.kind = PolicyKind::Preserving;
      } else if (p == "sequential") {
        t.policy.kind = PolicyKind::Sequential;
      } else if (p == "random") {
        t.policy.kind = PolicyKind::RandomUnrestricted;
      } else if (p == "defended") {
        t.policy.kind = PolicyKind::DefendedRestrictedRandom;
      } else {
        fail(path, "expected preserving, sequential, random or defended");
      }
    } else if (k == "increment") {
      t.policy.increment = static_cast<std::uint32_t>(as_uint(v, path, 65535));
    } else if (k == "sequential_start") {
      t.policy.sequential_start = as_port(v, path);
    } else if (k == "capacity") {
      t.policy.capacity = as_uint(v, path, 65536);
    } else if (k == "preserving_fallback") {
      const std::string f = scalar(v, path);
      if (f == "sequential") {
        t.policy.fallback = PreservingFallback::SequentialScan;
      } else if (f == "random") {
        t.policy.fallback = PreservingFallback::Random;
      } else {
        fail(path, "expected sequential or random");
      }
    } else if (k == "pool_lo") {
      t.pool.lo = as_port(v, path);
    } else if (k == "pool_hi") {
      t.pool.hi = as_port(v, path);
    } else {
      t.nat_timeout = as_ms(v, path);
    }
  });
  try {
    (void)PortPool::make(t.pool.lo, t.pool.hi);
  } catch (const std::invalid_argument& e) {
    fail("nat.pool_lo", e.what());
  }
}

void apply_network(Scenario& s, const YAML::Node& node) {
  static const std::set<std::string> keys = {"inside_latency_us", "ns_latency_us",      "attacker_latency_us",
                                             "loss",              "cross_traffic_rate", "servers_fold_case"};
  auto& t = s.network;
  each_key(node, "network", keys, [&](const std::string& k, const YAML::Node& v, const std::string& path) {
    if (k == "inside_latency_us") {
      t.inside_latency = as_us(v, path);
    } else if (k == "ns_latency_us") {
      t.ns_latency = as_us(v, path);
    } else if (k == "attacker_latency_us") {
      t.attacker_latency = as_us(v, path);
    } else if (k == "loss") {
      t.loss = as_double(v, path);
      if (!(t.loss >= 0.0 && t.loss <= 1.0)) {
        fail(path, "must lie in [0, 1]");
      }
    } else if (k == "cross_traffic_rate") {
      t.cross_traffic_rate = as_double(v, path);
      if (!(t.cross_traffic_rate >= 0.0)) {
        fail(path, "must be non-negative");
      }
    } else {
      t.servers_fold_case = as_bool(v, path);
    }
  });
}

void apply_zone(Scenario& s, const YAML::Node& node) {
  static const std::set<std::string> keys = {"apex", "ns_count"};
  each_key(node, "zone", keys, [&](const std::string& k, const YAML::Node& v, const std::string& path) {
    if (k == "apex") {
      try {
        s.zone_apex = DomainName::parse(scalar(v, path));
      } catch (const NameError& e) {
        fail(path, e.what());
      }
      s.plan.target_zone = s.zone_apex;
    } else {
      s.ns_count = as_uint(v, path, 64);
    }
  });
}

void apply_attacker(Scenario& s, const YAML::Node& node) {
  static const std::set<std::string> keys = {
      "spoof_budget_per_round", "zombie_present", "knows_nat_policy", "ns_ip_derandomized", "distinct_guesses",
      "trigger",                "port_strategy",  "rounds",           "round_interval_ms"};
  auto& c = s.attacker;
  auto& p = s.plan;
  each_key(node, "attacker", keys, [&](const std::string& k, const YAML::Node& v, const std::string& path) {
    if (k == "spoof_budget_per_round") {
      c.spoof_budget_per_round = as_uint(v, path, 1u << 24);
    } else if (k == "zombie_present") {
      c.zombie_present = as_bool(v, path);
    } else if (k == "knows_nat_policy") {
      c.knows_nat_policy = as_bool(v, path);
    } else if (k == "ns_ip_derandomized") {
      c.ns_ip_derandomized = as_bool(v, path);
    } else if (k == "distinct_guesses") {
      c.distinct_guesses = as_bool(v, path);
    } else if (k == "trigger") {
      const std::string t = scalar(v, path);
      if (t == "random-label") {
        p.trigger = TriggerStrategy::RandomLabel;
      } else if (t == "numeric") {
        p.trigger = TriggerStrategy::Numeric;
      } else if (t == "max-numeric") {
        p.trigger = TriggerStrategy::MaxNumeric;
      } else {
        fail(path, "expected random-label, numeric or max-numeric");
      }
    } else if (k == "port_strategy") {
      const std::string t = scalar(v, path);
      if (t == "none") {
        p.port_strategy = PortStrategy::None;
      } else if (t == "trap") {
        p.port_strategy = PortStrategy::Trap;
      } else if (t == "predict") {
        p.port_strategy = PortStrategy::Predict;
      } else {
        fail(path, "expected none, trap or predict");
      }
    } else if (k == "rounds") {
      p.rounds = as_uint(v, path, 1'000'000);
    } else {
      p.round_interval = as_ms(v, path);
    }
  });
}

} // namespace

Scenario load_scenario_text(std::string_view yaml) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml));
  } catch (const YAML::Exception& e) {
    throw ConfigError(fmt::format("parse error: {}", e.what()));
  }
  if (!root.IsDefined() || root.IsNull()) {
    throw ConfigError("empty configuration");
  }
  if (!root.IsMap()) {
    throw ConfigError("top level must be a mapping");
  }

  Scenario s;
  s.zone_apex = DomainName::parse("com");
  s.plan.target_zone = s.zone_apex;
  if (const auto p = root["preset"]) {
    s = preset(scalar(p, "preset"));
  }

  static const std::set<std::string> keys = {"preset", "name",    "trials", "seed",    "resolver",
                                             "nat",    "network", "zone",   "attacker"};
  // Sections are applied in a fixed order so zone.apex lands before anything
  // that depends on it, whatever the file order.
  each_key(root, "", keys, [](const std::string&, const YAML::Node&, const std::string&) {});
  if (const auto n = root["name"]) {
    s.name = scalar(n, "name");
  }
  if (const auto n = root["trials"]) {
    s.trials = as_uint(n, "trials", 100'000'000);
  }
  if (const auto n = root["seed"]) {
    s.seed = as_uint(n, "seed");
  }
  if (const auto n = root["zone"]) {
    apply_zone(s, n);
  }
  if (const auto n = root["resolver"]) {
    apply_resolver(s, n);
  }
  if (const auto n = root["nat"]) {
    apply_nat(s, n);
  }
  if (const auto n = root["network"]) {
    apply_network(s, n);
  }
  if (const auto n = root["attacker"]) {
    apply_attacker(s, n);
  }
  s.validate();
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot read {}", path));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_scenario_text(buf.str());
}

} // namespace derand
