#include "ipreuse/net.hpp"

#include <algorithm>
#include <charconv>
#include <istream>

namespace ipreuse::net {

std::optional<std::uint32_t> parse_ipv4(std::string_view s) {
  std::uint32_t ip = 0;
  for (int octet = 0; octet < 4; ++octet) {
    if (octet > 0) {
      if (s.empty() || s.front() != '.') return std::nullopt;
      s.remove_prefix(1);
    }
    std::size_t len = 0;
    while (len < s.size() && s[len] >= '0' && s[len] <= '9') ++len;
    if (len == 0 || len > 3) return std::nullopt;
    if (len > 1 && s[0] == '0') return std::nullopt;  // no leading zeros
    unsigned v = 0;
    std::from_chars(s.data(), s.data() + len, v);
    if (v > 255) return std::nullopt;
    ip = (ip << 8) | v;
    s.remove_prefix(len);
  }
  if (!s.empty()) return std::nullopt;
  return ip;
}

std::string format_ipv4(std::uint32_t ip) {
  std::string out;
  for (int shift = 24; shift >= 0; shift -= 8) {
    if (!out.empty()) out.push_back('.');
    out += std::to_string((ip >> shift) & 0xff);
  }
  return out;
}

Cidr parse_cidr(std::string_view s) {
  std::string_view addr = s;
  int prefix_len = 32;
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    addr = s.substr(0, slash);
    auto len_str = s.substr(slash + 1);
    int v = -1;
    auto [p, ec] = std::from_chars(len_str.data(),
                                   len_str.data() + len_str.size(), v);
    if (ec != std::errc() || p != len_str.data() + len_str.size() || v < 0 ||
        v > 32)
      throw MalformedCidr("bad prefix length in '" + std::string(s) + "'");
    prefix_len = v;
  }
  auto ip = parse_ipv4(addr);
  if (!ip) throw MalformedCidr("bad address in '" + std::string(s) + "'");
  Cidr c{*ip, prefix_len};
  std::uint32_t mask =
      prefix_len == 0 ? 0 : ~std::uint32_t{0} << (32 - prefix_len);
  if ((*ip & ~mask) != 0)
    throw MalformedCidr("host bits set in '" + std::string(s) + "'");
  return c;
}

void CidrSet::add(const Cidr& c) { pending_.push_back({c.first(), c.last()}); }

void CidrSet::finalize() {
  if (pending_.empty()) return;
  pending_.insert(pending_.end(), ranges_.begin(), ranges_.end());
  std::sort(pending_.begin(), pending_.end(),
            [](const Range& a, const Range& b) { return a.lo < b.lo; });
  ranges_.clear();
  for (const auto& r : pending_) {
    if (!ranges_.empty()) {
      auto& back = ranges_.back();
      // merge overlapping and adjacent; hi == UINT32_MAX covers everything
      // after it (and hi + 1 would wrap)
      if (back.hi == ~std::uint32_t{0} || r.lo <= back.hi + 1) {
        back.hi = std::max(back.hi, r.hi);
        continue;
      }
    }
    ranges_.push_back(r);
  }
  pending_.clear();
}

bool CidrSet::contains(std::uint32_t ip) const {
  const_cast<CidrSet*>(this)->finalize();
  auto it = std::upper_bound(
      ranges_.begin(), ranges_.end(), ip,
      [](std::uint32_t v, const Range& r) { return v < r.lo; });
  return it != ranges_.begin() && ip <= std::prev(it)->hi;
}

std::size_t CidrSet::interval_count() const {
  const_cast<CidrSet*>(this)->finalize();
  return ranges_.size();
}

CidrSet load_netset(std::istream& is) {
  CidrSet set;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos)
      s = s.substr(0, hash);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                          s.back() == '\r'))
      s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
      s.remove_prefix(1);
    if (s.empty()) continue;
    try {
      set.add(parse_cidr(s));
    } catch (const MalformedCidr& e) {
      throw MalformedCidr("netset line " + std::to_string(line_no) + ": " +
                          e.what());
    }
  }
  set.finalize();
  return set;
}

}  // namespace ipreuse::net
