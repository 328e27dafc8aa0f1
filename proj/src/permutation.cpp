#include "derand/permutation.hpp"

#include <bit>
#include <stdexcept>

namespace derand {

PortPermutation::PortPermutation(PortPool pool, std::uint64_t key) : pool_(PortPool::make(pool.lo, pool.hi)) {
  const auto bits = std::bit_width(pool_.size() - 1);
  half_bits_ = std::max(1u, static_cast<unsigned>((bits + 1) / 2));
  half_mask_ = (std::uint32_t{1} << half_bits_) - 1;
  std::uint64_t k = key;
  for (auto& rk : round_keys_) {
    k = mix64(k);
    rk = k;
  }
}

std::uint32_t PortPermutation::round(std::size_t i, std::uint32_t half) const {
  return static_cast<std::uint32_t>(mix64(round_keys_[i] ^ half)) & half_mask_;
}

std::uint32_t PortPermutation::encrypt(std::uint32_t x) const {
  std::uint32_t left = x >> half_bits_;
  std::uint32_t right = x & half_mask_;
  for (std::size_t i = 0; i < round_keys_.size(); ++i) {
    const auto next = left ^ round(i, right);
    left = right;
    right = next;
  }
  return (left << half_bits_) | right;
}

std::uint32_t PortPermutation::decrypt(std::uint32_t x) const {
  std::uint32_t left = x >> half_bits_;
  std::uint32_t right = x & half_mask_;
  for (std::size_t i = round_keys_.size(); i-- > 0;) {
    const auto prev = right ^ round(i, left);
    right = left;
    left = prev;
  }
  return (left << half_bits_) | right;
}

Port PortPermutation::port_at(std::size_t index) const {
  if (index >= pool_.size()) {
    throw std::out_of_range("permutation index outside pool");
  }
  auto y = encrypt(static_cast<std::uint32_t>(index));
  while (y >= pool_.size()) {
    y = encrypt(y);
  }
  return pool_.at(y);
}

std::size_t PortPermutation::index_of(Port port) const {
  if (!pool_.contains(port)) {
    throw std::out_of_range("port outside pool");
  }
  auto x = decrypt(static_cast<std::uint32_t>(pool_.offset_of(port)));
  while (x >= pool_.size()) {
    x = decrypt(x);
  }
  return x;
}

Port keyed_port_permutation(std::uint64_t key, const PortPool& pool, std::size_t index) {
  return PortPermutation(pool, key).port_at(index);
}

} // namespace derand
