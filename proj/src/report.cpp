#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <ostream>

#include "derand/experiments.hpp"

namespace derand {

namespace {

/// Integers below 2^53 print exactly; anything larger in exponent form.
std::string format_n(double n) {
  if (n < 9007199254740992.0 && n == std::floor(n)) {
    return fmt::format("{:.0f}", n);
  }
  return fmt::format("{:.6e}", n);
}

std::string format_opt(const std::optional<double>& v) { return v ? fmt::format("{:.6f}", *v) : std::string{}; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  return out + "\"";
}

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

} // namespace

void write_report(std::span<const Metrics> rows, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::Csv) {
    out << kCsvHeader << '\n';
    for (const auto& m : rows) {
      out << fmt::format("{},{},{:.6f},{:.6f},{:.6f},{},{},{},{}\n", csv_field(m.scenario), format_n(m.space.n),
                         m.success_rate, m.stderr_rate, m.analytic, format_opt(m.rounds_mean),
                         format_opt(m.packets_mean), format_opt(m.port_minentropy_bits), m.prefix_skipped);
    }
  } else {
    for (const auto& m : rows) {
      nlohmann::ordered_json j;
      j["scenario"] = m.scenario;
      j["N"] = m.space.n;
      j["success_rate"] = m.success_rate;
      j["stderr"] = m.stderr_rate;
      j["analytic"] = m.analytic;
      j["rounds_mean"] = opt_json(m.rounds_mean);
      j["packets_mean"] = opt_json(m.packets_mean);
      j["port_minentropy_bits"] = opt_json(m.port_minentropy_bits);
      j["prefix_skipped"] = m.prefix_skipped;
      out << j.dump() << '\n';
    }
  }
  if (!out) {
    throw std::runtime_error("report stream failed");
  }
}

void write_report(std::span<const Metrics> rows, ReportFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot open {} for writing", path));
  }
  write_report(rows, format, out);
  out.flush();
  if (!out) {
    throw std::runtime_error(fmt::format("write to {} failed", path));
  }
}

std::optional<ReportFormat> parse_report_format(std::string_view s) {
  if (s == "csv") {
    return ReportFormat::Csv;
  }
  if (s == "jsonl") {
    return ReportFormat::Jsonl;
  }
  return std::nullopt;
}

} // namespace derand
