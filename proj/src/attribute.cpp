#include "ipreuse/attribute.hpp"

#include <algorithm>
#include <charconv>
#include <istream>

namespace ipreuse::attr {

namespace {

char lower(char c) { return c >= 'A' && c <= 'Z' ? c + ('a' - 'A') : c; }

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return c >= 'a' && c <= 'z'; }

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail_line(const char* what, int line_no,
                            const std::string& msg) {
  throw std::runtime_error(std::string(what) + " line " +
                           std::to_string(line_no) + ": " + msg);
}

}  // namespace

CloudRanges CloudRanges::load(std::istream& is) {
  nlohmann::json doc = nlohmann::json::parse(is, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("prefixes") ||
      !doc["prefixes"].is_array())
    throw std::runtime_error(
        "cloud ranges: expected an object with a 'prefixes' array");
  CloudRanges out;
  for (const auto& e : doc["prefixes"]) {
    if (!e.is_object() || !e.contains("ip_prefix") ||
        !e["ip_prefix"].is_string() || !e.contains("service") ||
        !e["service"].is_string())
      throw std::runtime_error(
          "cloud ranges: each prefix needs string 'ip_prefix' and 'service'");
    auto service = e["service"].get<std::string>();
    if (service.empty())
      throw std::runtime_error("cloud ranges: empty service label");
    out.entries.emplace_back(net::parse_cidr(e["ip_prefix"].get<std::string>()),
                             std::move(service));
  }
  return out;
}

std::string CloudRanges::classify(std::uint32_t src_ip) const {
  const std::string* best = nullptr;
  int best_len = -1;
  for (const auto& [cidr, service] : entries) {
    if (cidr.prefix_len > best_len && cidr.contains(src_ip)) {
      best = &service;
      best_len = cidr.prefix_len;
    }
  }
  return best ? *best : kExternal;
}

UaTable UaTable::builtin() {
  UaTable t;
  t.prefixes = {
      {"Amazon Simple Notification Service Agent", "SNS"},
      {"Amazon-Route53-Health-Check-Service", "Route53HealthCheck"},
      {"Amazon CloudFront", "CloudFront"},
      {"AmazonAPIGateway", "ApiGateway"},
  };
  return t;
}

UaTable UaTable::load(std::istream& is) {
  UaTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size())
      fail_line("user agents", line_no, "expected prefix<TAB>service");
    t.prefixes.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return t;
}

std::optional<std::string> UaTable::lookup(std::string_view ua) const {
  for (const auto& [prefix, service] : prefixes)
    if (ua.substr(0, prefix.size()) == prefix) return service;
  return std::nullopt;
}

const char* host_kind_name(HostKind k) {
  switch (k) {
    case HostKind::kIpLiteral: return "ip_literal";
    case HostKind::kIpbn: return "ipbn";
    case HostKind::kWildcardDns: return "wildcard_dns";
    case HostKind::kDomainName: return "domain_name";
  }
  return "?";
}

std::string normalize_host(std::string_view raw) {
  if (raw.empty()) throw MalformedHost("empty host");
  // strip an explicit port
  if (auto colon = raw.rfind(':'); colon != std::string_view::npos) {
    auto tail = raw.substr(colon + 1);
    bool all_digits = !tail.empty();
    for (char c : tail) all_digits = all_digits && is_digit(c);
    if (!all_digits)
      throw MalformedHost("illegal ':' in host '" + std::string(raw) + "'");
    raw = raw.substr(0, colon);
  }
  if (!raw.empty() && raw.back() == '.') raw.remove_suffix(1);
  if (raw.empty()) throw MalformedHost("empty host");
  std::string host;
  host.reserve(raw.size());
  for (char c : raw) host.push_back(lower(c));
  for (auto label : split(host, '.')) {
    if (label.empty())
      throw MalformedHost("empty label in '" + host + "'");
    for (char c : label)
      if (!is_alpha(c) && !is_digit(c) && c != '-' && c != '_')
        throw MalformedHost(std::string("illegal character '") + c +
                            "' in '" + host + "'");
  }
  return host;
}

std::set<std::string> load_wildcard_providers(std::istream& is) {
  std::set<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    std::string_view s = line;
    if (auto hash = s.find('#'); hash != std::string_view::npos)
      s = s.substr(0, hash);
    s = trim(s);
    if (!s.empty()) out.insert(normalize_host(s));
  }
  return out;
}

namespace {

// "ec2-203-0-113-15" -> the embedded address
std::optional<std::uint32_t> ipbn_octets(std::string_view label) {
  if (label.substr(0, 4) != "ec2-") return std::nullopt;
  auto parts = split(label.substr(4), '-');
  if (parts.size() != 4) return std::nullopt;
  std::string dotted;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i) dotted.push_back('.');
    dotted += parts[i];
  }
  return net::parse_ipv4(dotted);
}

// region labels look like us-east-1 / ap-southeast-2 / us-gov-west-1
bool is_region_label(std::string_view label) {
  auto parts = split(label, '-');
  if (parts.size() < 2) return false;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (parts[i].empty()) return false;
    for (char c : parts[i])
      if (!is_alpha(c)) return false;
  }
  auto last = parts.back();
  if (last.empty()) return false;
  for (char c : last)
    if (!is_digit(c)) return false;
  return true;
}

}  // namespace

KindResult classify_host(std::string_view host,
                         const std::set<std::string>& wildcard_providers) {
  if (auto ip = net::parse_ipv4(host))
    return {HostKind::kIpLiteral, *ip};

  auto labels = split(host, '.');
  // ec2-A-B-C-D.compute-1.amazonaws.com or
  // ec2-A-B-C-D.<region>.compute.amazonaws.com
  if (labels.size() >= 4 && labels[labels.size() - 2] == "amazonaws" &&
      labels.back() == "com") {
    if (auto ip = ipbn_octets(labels[0])) {
      if (labels.size() == 4 && labels[1] == "compute-1")
        return {HostKind::kIpbn, *ip};
      if (labels.size() == 5 && labels[2] == "compute" &&
          is_region_label(labels[1]))
        return {HostKind::kIpbn, *ip};
    }
  }

  for (const auto& provider : wildcard_providers) {
    if (host == provider) return {HostKind::kWildcardDns, std::nullopt};
    if (host.size() > provider.size() + 1 &&
        host[host.size() - provider.size() - 1] == '.' &&
        host.substr(host.size() - provider.size()) == provider)
      return {HostKind::kWildcardDns, std::nullopt};
  }
  return {HostKind::kDomainName, std::nullopt};
}

int subdomain_depth(std::string_view host, std::string_view sld) {
  if (host == sld) return 0;
  if (host.size() <= sld.size() + 1 ||
      host[host.size() - sld.size() - 1] != '.' ||
      host.substr(host.size() - sld.size()) != sld)
    throw HostNotUnderSld("'" + std::string(host) + "' is not under '" +
                          std::string(sld) + "'");
  auto prefix = host.substr(0, host.size() - sld.size() - 1);
  return static_cast<int>(split(prefix, '.').size());
}

AutomationFlags automation_flags(std::string_view host, std::string_view sld,
                                 std::uint32_t dst_ip) {
  AutomationFlags flags;
  if (host == sld) return flags;
  auto prefix = host.substr(0, host.size() - sld.size() - 1);
  for (auto label : split(prefix, '.')) {
    int digits = 0;
    for (char c : label)
      if (is_digit(c)) ++digits;
    if (digits >= 2) {
      flags.two_digits = true;
      break;
    }
  }
  auto dotted = net::format_ipv4(dst_ip);
  auto dashed = dotted;
  std::replace(dashed.begin(), dashed.end(), '.', '-');
  flags.encodes_ip = prefix.find(dashed) != std::string_view::npos ||
                     prefix.find(dotted) != std::string_view::npos;
  return flags;
}

HostClassification classify(std::string_view raw, const psl::SuffixList& psl,
                            const std::set<std::string>& wildcard_providers,
                            std::uint32_t dst_ip) {
  HostClassification out;
  out.host = normalize_host(raw);
  auto kr = classify_host(out.host, wildcard_providers);
  out.kind = kr.kind;
  out.ip = kr.ip;
  if (out.kind == HostKind::kDomainName) {
    if (auto se = psl.split(out.host)) {
      out.sld = se->first;
      out.etld = se->second;
      out.depth = subdomain_depth(out.host, *out.sld);
      out.flags = automation_flags(out.host, *out.sld, dst_ip);
    }
  }
  return out;
}

const char* validation_name(Validation v) {
  switch (v) {
    case Validation::kValidated: return "validated";
    case Validation::kMismatch: return "mismatch";
    case Validation::kNotInSnapshot: return "not_in_snapshot";
  }
  return "?";
}

Snapshot Snapshot::load(std::istream& is) {
  Snapshot out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto comma = s.find(',');
    if (comma == std::string_view::npos || comma == 0)
      fail_line("snapshot", line_no, "expected host,ip");
    auto ip = net::parse_ipv4(trim(s.substr(comma + 1)));
    if (!ip) fail_line("snapshot", line_no, "bad address");
    try {
      out.entries[normalize_host(trim(s.substr(0, comma)))].push_back(*ip);
    } catch (const MalformedHost& e) {
      fail_line("snapshot", line_no, e.what());
    }
  }
  return out;
}

Validation Snapshot::validate(const std::string& host,
                              std::uint32_t dst_ip) const {
  auto it = entries.find(host);
  if (it == entries.end()) return Validation::kNotInSnapshot;
  for (auto ip : it->second)
    if (ip == dst_ip) return Validation::kValidated;
  return Validation::kMismatch;
}

RankList RankList::load(std::istream& is) {
  RankList out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto comma = s.find(',');
    if (comma == std::string_view::npos || comma == 0)
      fail_line("rank list", line_no, "expected rank,domain");
    auto rank_str = trim(s.substr(0, comma));
    std::uint32_t rank = 0;
    auto [p, ec] = std::from_chars(rank_str.data(),
                                   rank_str.data() + rank_str.size(), rank);
    if (ec != std::errc() || p != rank_str.data() + rank_str.size() ||
        rank == 0)
      fail_line("rank list", line_no,
                "bad rank '" + std::string(rank_str) + "'");
    std::string domain;
    try {
      domain = normalize_host(trim(s.substr(comma + 1)));
    } catch (const MalformedHost& e) {
      fail_line("rank list", line_no, e.what());
    }
    if (!out.ranks.emplace(std::move(domain), rank).second)
      fail_line("rank list", line_no, "duplicate domain");
  }
  return out;
}

std::optional<std::uint32_t> RankList::rank(const std::string& domain) const {
  auto it = ranks.find(domain);
  if (it == ranks.end()) return std::nullopt;
  return it->second;
}

AttributionReport attribute_report(
    const std::vector<session::SessionRecord>& sessions,
    const AttributionRefs& refs) {
  AttributionReport rep;
  rep.sessions = sessions.size();
  std::set<std::string> seen_two_digit, seen_ip_encoding;

  for (const auto& s : sessions) {
    ++rep.source_services[refs.ranges.classify(s.src_ip)];
    if (s.http && !s.http->user_agent.empty()) {
      if (auto service = refs.ua.lookup(s.http->user_agent))
        ++rep.ua_services[*service];
      else
        ++rep.ua_unmatched;
    }

    // host extraction: Host header first, then SNI; both present but
    // disagreeing means the session is excluded from domain aggregates
    std::string raw_host;
    if (s.http && !s.http->host.empty()) raw_host = s.http->host;
    std::string raw_sni = s.tls_sni ? *s.tls_sni : "";
    HostClassification hc;
    try {
      if (!raw_host.empty() && !raw_sni.empty() &&
          normalize_host(raw_host) != normalize_host(raw_sni)) {
        ++rep.inconsistent_host;
        continue;
      }
      if (raw_host.empty()) raw_host = raw_sni;
      if (raw_host.empty()) {
        ++rep.no_host;
        continue;
      }
      hc = classify(raw_host, refs.psl, refs.wildcard_providers, s.dst_ip);
    } catch (const MalformedHost&) {
      ++rep.malformed_host;
      continue;
    }
    ++rep.with_host;
    ++rep.host_kinds[host_kind_name(hc.kind)];
    if (hc.kind != HostKind::kDomainName) continue;

    ++rep.domain_sessions;
    if (!hc.sld) {
      ++rep.public_suffix_hosts;
      continue;
    }
    switch (refs.snapshot.validate(hc.host, s.dst_ip)) {
      case Validation::kMismatch:
        ++rep.mismatch_sessions;
        continue;
      case Validation::kNotInSnapshot:
        ++rep.not_in_snapshot_sessions;
        continue;
      case Validation::kValidated:
        ++rep.validated_sessions;
        break;
    }

    if (rep.unique_slds.insert(*hc.sld).second) {
      ++rep.etld_counts[*hc.etld];
      if (auto r = refs.ranks.rank(*hc.sld)) {
        if (*r <= 1000)
          ++rep.rank_top1k;
        else if (*r <= 10000)
          ++rep.rank_top10k;
        else if (*r <= 1000000)
          ++rep.rank_top1m;
        else
          ++rep.unranked;
      } else {
        ++rep.unranked;
      }
    }
    auto [it, fresh] = rep.sld_min_depth.emplace(*hc.sld, *hc.depth);
    if (!fresh) it->second = std::min(it->second, *hc.depth);
    if (hc.flags.two_digits && seen_two_digit.insert(hc.host).second)
      ++rep.two_digit_hosts;
    if (hc.flags.encodes_ip && seen_ip_encoding.insert(hc.host).second)
      ++rep.ip_encoding_hosts;
  }
  return rep;
}

nlohmann::ordered_json report_json(const AttributionReport& rep) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["sessions"] = rep.sessions;
  doc["source_services"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.source_services) doc["source_services"][k] = v;
  doc["ua_services"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.ua_services) doc["ua_services"][k] = v;
  doc["ua_unmatched"] = rep.ua_unmatched;

  nlohmann::ordered_json hosts;
  hosts["with_host"] = rep.with_host;
  hosts["no_host"] = rep.no_host;
  hosts["inconsistent"] = rep.inconsistent_host;
  hosts["malformed"] = rep.malformed_host;
  hosts["kinds"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.host_kinds) hosts["kinds"][k] = v;
  // the three-way share: address-bearing names vs everything else
  auto share = [&](std::uint64_t n) {
    return rep.with_host == 0
               ? 0.0
               : static_cast<double>(n) / static_cast<double>(rep.with_host);
  };
  auto kind_count = [&](const char* k) {
    auto it = rep.host_kinds.find(k);
    return it == rep.host_kinds.end() ? std::uint64_t{0} : it->second;
  };
  hosts["shares"] = {{"ip_literal", share(kind_count("ip_literal"))},
                     {"ipbn", share(kind_count("ipbn"))},
                     {"other", share(rep.with_host - kind_count("ip_literal") -
                                     kind_count("ipbn"))}};
  doc["hosts"] = std::move(hosts);

  nlohmann::ordered_json dom;
  dom["sessions"] = rep.domain_sessions;
  dom["public_suffix_hosts"] = rep.public_suffix_hosts;
  dom["validated_sessions"] = rep.validated_sessions;
  dom["mismatch_sessions"] = rep.mismatch_sessions;
  dom["not_in_snapshot_sessions"] = rep.not_in_snapshot_sessions;
  dom["unique_slds"] = rep.unique_slds.size();
  dom["unique_etlds"] = rep.etld_counts.size();
  dom["etld_counts"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.etld_counts) dom["etld_counts"][k] = v;
  dom["sld_min_depth"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : rep.sld_min_depth) dom["sld_min_depth"][k] = v;
  dom["rank_buckets"] = {{"top1k", rep.rank_top1k},
                         {"top10k", rep.rank_top10k},
                         {"top1m", rep.rank_top1m},
                         {"unranked", rep.unranked}};
  dom["automation"] = {{"two_digit_hosts", rep.two_digit_hosts},
                       {"ip_encoding_hosts", rep.ip_encoding_hosts}};
  doc["domains"] = std::move(dom);
  return doc;
}

}  // namespace ipreuse::attr
