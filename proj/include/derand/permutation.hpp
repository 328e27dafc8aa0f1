#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "derand/nat.hpp"

namespace derand {

/// Keyed bijection between pool positions [0, pool.size()) and pool ports.
///
/// Four-round balanced Feistel network over the smallest even-width binary
/// domain covering the pool; values that land outside the pool are
/// re-encrypted (cycle walking) until they fall inside.
class PortPermutation {
public:
  PortPermutation(PortPool pool, std::uint64_t key);

  Port port_at(std::size_t index) const;
  std::size_t index_of(Port port) const;

  const PortPool& pool() const { return pool_; }

private:
  std::uint32_t encrypt(std::uint32_t x) const;
  std::uint32_t decrypt(std::uint32_t x) const;
  std::uint32_t round(std::size_t i, std::uint32_t half) const;

  PortPool pool_;
  std::array<std::uint64_t, 4> round_keys_{};
  unsigned half_bits_ = 1;
  std::uint32_t half_mask_ = 1;
};

Port keyed_port_permutation(std::uint64_t key, const PortPool& pool, std::size_t index);

} // namespace derand
