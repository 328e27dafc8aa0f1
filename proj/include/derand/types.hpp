#pragma once

#include <chrono>
#include <cstdint>
#include <string>

namespace derand {

/// Simulation clock. Integer microseconds; no floating point timestamps.
using SimTime = std::chrono::microseconds;

using std::chrono_literals::operator""ms;
using std::chrono_literals::operator""s;
using std::chrono_literals::operator""us;

/// Abstract host address. Only the simulated network assigns meaning to it.
enum class HostId : std::uint32_t {};

constexpr HostId host(std::uint32_t v) { return HostId{v}; }
constexpr std::uint32_t raw(HostId h) { return static_cast<std::uint32_t>(h); }

using Port = std::uint16_t;

} // namespace derand
