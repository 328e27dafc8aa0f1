#include "derand/dns.hpp"

#include <algorithm>
#include <fmt/format.h>

namespace derand {

namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

char to_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }
char to_upper(char c) { return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c; }

std::size_t wire_length_of(const std::vector<std::string>& labels) {
  std::size_t n = 1;
  for (const auto& l : labels) {
    n += 1 + l.size();
  }
  return n;
}

template <typename CoinFn>
DomainName recase(const DomainName& name, CoinFn&& upper) {
  std::vector<std::string> labels = name.labels();
  for (auto& label : labels) {
    for (auto& c : label) {
      if (is_alpha(c)) {
        c = upper() ? to_upper(c) : to_lower(c);
      }
    }
  }
  return DomainName(std::move(labels));
}

} // namespace

DomainName::DomainName(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (const auto& l : labels_) {
    if (l.empty()) {
      throw NameError("empty label");
    }
    if (l.size() > kMaxLabelLength) {
      throw NameError(fmt::format("label of {} bytes exceeds {}", l.size(), kMaxLabelLength));
    }
    if (l.find('.') != std::string::npos) {
      throw NameError("label contains '.'");
    }
  }
  if (const auto w = wire_length_of(labels_); w > kMaxWireLength) {
    throw MaxLengthExceeded(fmt::format("name needs {} wire bytes, limit is {}", w, kMaxWireLength));
  }
}

DomainName DomainName::parse(std::string_view text) {
  if (text.empty() || text == ".") {
    return DomainName{};
  }
  if (text.back() == '.') {
    text.remove_suffix(1);
  }
  std::vector<std::string> labels;
  std::size_t start = 0;
  for (;;) {
    const auto dot = text.find('.', start);
    labels.emplace_back(text.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (dot == std::string_view::npos) {
      break;
    }
    start = dot + 1;
  }
  return DomainName(std::move(labels));
}

std::size_t DomainName::wire_length() const { return wire_length_of(labels_); }

std::size_t DomainName::alpha_count() const {
  std::size_t n = 0;
  for (const auto& l : labels_) {
    n += static_cast<std::size_t>(std::count_if(l.begin(), l.end(), is_alpha));
  }
  return n;
}

std::string DomainName::to_string() const {
  if (labels_.empty()) {
    return ".";
  }
  std::string out;
  for (const auto& l : labels_) {
    if (!out.empty()) {
      out += '.';
    }
    out += l;
  }
  return out;
}

DomainName DomainName::folded() const {
  return recase(*this, [] { return false; });
}

bool DomainName::equals_ignore_case(const DomainName& other) const {
  return folded() == other.folded();
}

bool DomainName::is_within(const DomainName& ancestor) const {
  const auto& mine = labels_;
  const auto& theirs = ancestor.labels_;
  if (theirs.size() > mine.size()) {
    return false;
  }
  const auto offset = mine.size() - theirs.size();
  for (std::size_t i = 0; i < theirs.size(); ++i) {
    const auto& a = mine[offset + i];
    const auto& b = theirs[i];
    if (a.size() != b.size() ||
        !std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return to_lower(x) == to_lower(y); })) {
      return false;
    }
  }
  return true;
}

DomainName DomainName::prepend(std::string label) const {
  std::vector<std::string> labels;
  labels.reserve(labels_.size() + 1);
  labels.push_back(std::move(label));
  labels.insert(labels.end(), labels_.begin(), labels_.end());
  return DomainName(std::move(labels));
}

DomainName DomainName::with_case_mask(std::uint64_t mask) const {
  if (alpha_count() > 64) {
    throw CaseFactorOverflow("case mask covers at most 64 letters");
  }
  unsigned bit = 0;
  return recase(*this, [&] { return ((mask >> bit++) & 1u) != 0; });
}

std::size_t wire_length(const DomainName& name) { return name.wire_length(); }

std::size_t alpha_count(const DomainName& name) { return name.alpha_count(); }

std::uint64_t case_entropy_factor(const DomainName& name) {
  const auto letters = name.alpha_count();
  if (letters > 62) {
    throw CaseFactorOverflow(fmt::format("{} letters: 2^{} does not fit", letters, letters));
  }
  return std::uint64_t{1} << letters;
}

DomainName encode_0x20(const DomainName& name, Rng& rng) {
  return recase(name, [&] { return rng.coin(); });
}

bool match_case_exact(const DomainName& sent, const DomainName& received) { return sent == received; }

DomainName prepend_random_prefix(const DomainName& name, std::size_t prefix_len, Rng& rng) {
  if (prefix_len > kMaxLabelLength) {
    throw NameError(fmt::format("prefix of {} bytes exceeds a label", prefix_len));
  }
  if (prefix_len == 0) {
    return name;
  }
  if (name.wire_length() + prefix_len + 1 > kMaxWireLength) {
    throw MaxLengthExceeded(fmt::format("no room for a {}-byte prefix on {} ({} wire bytes)", prefix_len,
                                        name.to_string(), name.wire_length()));
  }
  static constexpr std::string_view alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string label(prefix_len, '\0');
  for (auto& c : label) {
    c = alphabet[rng.uniform(alphabet.size())];
  }
  return name.prepend(std::move(label));
}

std::string ascending_digits(std::size_t length) {
  std::string out;
  for (unsigned i = 1; out.size() < length; ++i) {
    out += std::to_string(i);
  }
  out.resize(length);
  return out;
}

DomainName max_numeric_query(const DomainName& tld) {
  if (tld.wire_length() > kMaxWireLength - 2) {
    throw NameError(fmt::format("{} leaves no room for a numeric label", tld.to_string()));
  }
  std::size_t budget = kMaxWireLength - tld.wire_length();
  std::vector<std::size_t> sizes;
  while (budget >= 2) {
    const auto take = std::min(kMaxLabelLength, budget - 1);
    sizes.push_back(take);
    budget -= take + 1;
  }
  // A single leftover byte cannot hold a label; borrow one from the previous
  // full label so the total still lands on 255.
  if (budget == 1) {
    sizes.back() -= 1;
    sizes.push_back(1);
  }
  std::vector<std::string> labels;
  for (auto n : sizes) {
    labels.push_back(ascending_digits(n));
  }
  labels.insert(labels.end(), tld.labels().begin(), tld.labels().end());
  return DomainName(std::move(labels));
}

ResourceRecord ResourceRecord::a(DomainName owner, HostId address, std::chrono::seconds ttl) {
  return ResourceRecord{std::move(owner), RecordType::A, address, ttl};
}

ResourceRecord ResourceRecord::ns(DomainName owner, DomainName server, std::chrono::seconds ttl) {
  return ResourceRecord{std::move(owner), RecordType::NS, std::move(server), ttl};
}

DnsMessage DnsMessage::query(HostId src, Port sport, HostId dst, Port dport, std::uint16_t txid,
                             DomainName qname, RecordType qtype) {
  DnsMessage m;
  m.kind = MessageKind::Query;
  m.txid = txid;
  m.src_ip = src;
  m.src_port = sport;
  m.dst_ip = dst;
  m.dst_port = dport;
  m.qname = std::move(qname);
  m.qtype = qtype;
  return m;
}

DnsMessage DnsMessage::response_to(const DnsMessage& q) {
  DnsMessage m;
  m.kind = MessageKind::Response;
  m.txid = q.txid;
  m.src_ip = q.dst_ip;
  m.src_port = q.dst_port;
  m.dst_ip = q.src_ip;
  m.dst_port = q.src_port;
  m.qname = q.qname;
  m.qtype = q.qtype;
  return m;
}

DnsMessage DnsMessage::probe(HostId src, Port sport, HostId dst, Port dport) {
  DnsMessage m;
  m.kind = MessageKind::Probe;
  m.src_ip = src;
  m.src_port = sport;
  m.dst_ip = dst;
  m.dst_port = dport;
  return m;
}

void DnsMessage::validate() const {
  if (kind == MessageKind::Query && !answers.empty()) {
    throw std::invalid_argument("query carries answers");
  }
}

std::string_view to_string(RecordType t) { return t == RecordType::A ? "A" : "NS"; }

std::string_view to_string(MessageKind k) {
  switch (k) {
  case MessageKind::Query:
    return "query";
  case MessageKind::Response:
    return "response";
  case MessageKind::Probe:
    return "probe";
  }
  return "?";
}

} // namespace derand
