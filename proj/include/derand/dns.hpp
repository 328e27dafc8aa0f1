#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "derand/rng.hpp"
#include "derand/types.hpp"

namespace derand {

inline constexpr std::size_t kMaxLabelLength = 63;
inline constexpr std::size_t kMaxWireLength = 255;

class NameError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// The name would no longer fit in 255 wire bytes.
class MaxLengthExceeded : public NameError {
public:
  using NameError::NameError;
};

class CaseFactorOverflow : public std::overflow_error {
public:
  using std::overflow_error::overflow_error;
};

/// A domain name as an ordered list of labels, leftmost first.
///
/// Case is preserved byte for byte; equality is exact. Use equals_ignore_case
/// or folded() for DNS-style comparison. Every label is 1..63 bytes and the
/// wire encoding (length octets plus the root octet) never exceeds 255 bytes.
class DomainName {
public:
  /// The root name.
  DomainName() = default;

  explicit DomainName(std::vector<std::string> labels);

  /// Dot-separated presentation form. "" and "." are the root; one trailing
  /// dot is accepted.
  static DomainName parse(std::string_view text);

  const std::vector<std::string>& labels() const { return labels_; }
  bool is_root() const { return labels_.empty(); }

  /// Length octets plus label bytes plus the root octet.
  std::size_t wire_length() const;

  /// Number of ASCII letters across all labels.
  std::size_t alpha_count() const;

  /// Presentation form; the root prints as ".".
  std::string to_string() const;

  DomainName folded() const;
  bool equals_ignore_case(const DomainName& other) const;

  /// True if this name equals `ancestor` or lies below it (case-insensitive).
  bool is_within(const DomainName& ancestor) const;

  /// New name with `label` as the leftmost label.
  DomainName prepend(std::string label) const;

  /// Sets the case of the i-th letter (counting left to right) from bit i of
  /// `mask`: 1 is upper case. Requires alpha_count() <= 64.
  DomainName with_case_mask(std::uint64_t mask) const;

  friend bool operator==(const DomainName&, const DomainName&) = default;

private:
  std::vector<std::string> labels_;
};

std::size_t wire_length(const DomainName& name);
std::size_t alpha_count(const DomainName& name);

/// 2^alpha_count(name): the number of distinct 0x20 casings of the name.
/// Throws CaseFactorOverflow above 62 letters.
std::uint64_t case_entropy_factor(const DomainName& name);

/// 0x20 encoding: each letter's case decided by an independent fair coin.
DomainName encode_0x20(const DomainName& name, Rng& rng);

/// Byte-identical label sequences, case included.
bool match_case_exact(const DomainName& sent, const DomainName& received);

/// Prepends one label of `prefix_len` random lowercase alphanumerics.
/// prefix_len == 0 returns the name unchanged. Throws MaxLengthExceeded when
/// the result would not fit in 255 wire bytes.
DomainName prepend_random_prefix(const DomainName& name, std::size_t prefix_len, Rng& rng);

/// Longest all-numeric query ending in `tld`: wire length exactly 255.
///
/// Labels are filled left to right at 63 bytes with the remainder in the
/// label next to the tld. Each label is the digit string "123456789101112..."
/// cut to length, so for "com" the labels are 1..36 three times then 1..33.
DomainName max_numeric_query(const DomainName& tld);

/// "123456789101112..." truncated to `length` bytes.
std::string ascending_digits(std::size_t length);

enum class RecordType : std::uint8_t { A, NS };

struct ResourceRecord {
  DomainName owner;
  RecordType type = RecordType::A;
  /// Host address for A records, name server name for NS records.
  std::variant<HostId, DomainName> value;
  std::chrono::seconds ttl{0};

  static ResourceRecord a(DomainName owner, HostId address, std::chrono::seconds ttl);
  static ResourceRecord ns(DomainName owner, DomainName server, std::chrono::seconds ttl);

  friend bool operator==(const ResourceRecord&, const ResourceRecord&) = default;
};

enum class MessageKind : std::uint8_t {
  Query,
  Response,
  /// Plain datagram without DNS content (zombie flows, echo replies).
  Probe,
};

struct DnsMessage {
  MessageKind kind = MessageKind::Query;
  std::uint16_t txid = 0;
  HostId src_ip{};
  HostId dst_ip{};
  Port src_port = 0;
  Port dst_port = 0;
  DomainName qname;
  RecordType qtype = RecordType::A;
  std::vector<ResourceRecord> answers;
  /// Name does not exist (authoritative negative answer).
  bool nxdomain = false;
  /// Simulation bookkeeping only: set iff a legitimate server built it.
  bool authentic = false;
  /// Echo replies carry the source port the echo host observed.
  std::optional<Port> echoed_port;

  static DnsMessage query(HostId src, Port sport, HostId dst, Port dport, std::uint16_t txid,
                          DomainName qname, RecordType qtype);
  /// Response addressed back to the query's source, echoing txid and name.
  static DnsMessage response_to(const DnsMessage& query);
  static DnsMessage probe(HostId src, Port sport, HostId dst, Port dport);

  /// Throws std::invalid_argument if a query carries answers.
  void validate() const;
};

std::string_view to_string(RecordType t);
std::string_view to_string(MessageKind k);

} // namespace derand
