#include "ipreuse/funnel.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <istream>
#include <unordered_map>
#include <unordered_set>

namespace ipreuse::funnel {

namespace {

char lower(char c) { return c >= 'A' && c <= 'Z' ? c + ('a' - 'A') : c; }

std::string lower_copy(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}

// haystack is raw bytes; needle must already be lowercase ASCII
bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty() || haystack.size() < needle.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool hit = true;
    for (std::size_t k = 0; k < needle.size() && hit; ++k)
      hit = lower(haystack[i + k]) == needle[k];
    if (hit) return true;
  }
  return false;
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

constexpr std::string_view kShellcodeMarkers[] = {"wget", "curl", "chmod",
                                                  "shell"};

// TDS packet types that can open a client conversation
constexpr std::array<unsigned char, 12> kTdsTypes = {
    0x01, 0x02, 0x03, 0x04, 0x06, 0x07, 0x08, 0x0e, 0x0f, 0x10, 0x12, 0x17};

constexpr std::string_view kBitcoinMagics[] = {
    "\xf9\xbe\xb4\xd9", "\x0b\x11\x09\x07", "\xfa\xbf\xb5\xda"};

constexpr std::string_view kBitTorrent = "\x13"
                                         "BitTorrent protocol";
constexpr std::string_view kRoute53Ua = "Amazon-Route53-Health-Check-Service";

}  // namespace

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kNetwork: return "network";
    case Stage::kTransport: return "transport";
    case Stage::kSession: return "session";
    case Stage::kApplication: return "application";
    case Stage::kKept: return "kept";
  }
  return "?";
}

std::vector<Rule> load_rules(std::istream& is) {
  std::vector<Rule> out;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw MalformedRule("rule line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos
                                      : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) fail("expected name<TAB>kind<TAB>pattern");
    Rule r;
    r.name = line.substr(0, t1);
    std::string kind = line.substr(t1 + 1, t2 - t1 - 1);
    std::string pattern = line.substr(t2 + 1);
    if (r.name.empty()) fail("empty rule name");
    if (pattern.empty()) fail("empty pattern");
    if (kind == "substring_ci") {
      r.kind = Rule::Kind::kSubstringCi;
      r.pattern = lower_copy(pattern);
    } else if (kind == "ua_prefix") {
      r.kind = Rule::Kind::kUaPrefix;
      r.pattern = pattern;
    } else if (kind == "port_eq") {
      r.kind = Rule::Kind::kPortEq;
      unsigned v = 0;
      auto [p, ec] =
          std::from_chars(pattern.data(), pattern.data() + pattern.size(), v);
      if (ec != std::errc() || p != pattern.data() + pattern.size() ||
          v > 65535)
        fail("bad port '" + pattern + "'");
      r.port = static_cast<std::uint16_t>(v);
    } else if (kind == "magic_hex") {
      r.kind = Rule::Kind::kMagicHex;
      if (pattern.size() % 2 != 0) fail("magic_hex needs an even digit count");
      for (std::size_t i = 0; i < pattern.size(); i += 2) {
        auto nib = [&](char c) -> int {
          if (c >= '0' && c <= '9') return c - '0';
          if (c >= 'a' && c <= 'f') return c - 'a' + 10;
          if (c >= 'A' && c <= 'F') return c - 'A' + 10;
          fail(std::string("bad hex digit '") + c + "'");
          return 0;
        };
        r.pattern.push_back(
            static_cast<char>((nib(pattern[i]) << 4) | nib(pattern[i + 1])));
      }
    } else {
      fail("unknown kind '" + kind + "'");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string builtin_drop_reason(const session::SessionRecord& s) {
  const std::string& p = s.payload_prefix;
  for (auto marker : kShellcodeMarkers)
    if (contains_ci(p, marker)) return "shellcode";
  if (s.dst_port == 20000 && p.size() >= 2 &&
      static_cast<unsigned char>(p[0]) == 0x05 &&
      static_cast<unsigned char>(p[1]) == 0x64)
    return "dnp3";
  if (s.dst_port == 1433 && !p.empty() &&
      std::find(kTdsTypes.begin(), kTdsTypes.end(),
                static_cast<unsigned char>(p[0])) != kTdsTypes.end())
    return "tds";
  if (starts_with(p, kBitTorrent)) return "bittorrent";
  for (auto magic : kBitcoinMagics)
    if (starts_with(p, magic)) return "bitcoin";
  if (contains_ci(p, "skype")) return "skype";  // placeholder signature
  if (p.find("/multistream/1.0.0") != std::string::npos) return "ipfs";
  if (s.http) {
    if (s.http->method == "CONNECT" || starts_with(s.http->path, "http://") ||
        starts_with(s.http->path, "https://"))
      return "proxy";
    if (starts_with(s.http->user_agent, kRoute53Ua))
      return "route53_healthcheck";
  }
  return "";
}

std::string rule_drop_reason(const session::SessionRecord& s,
                             const std::vector<Rule>& user_rules) {
  if (auto reason = builtin_drop_reason(s); !reason.empty()) return reason;
  for (const auto& r : user_rules) {
    bool hit = false;
    switch (r.kind) {
      case Rule::Kind::kSubstringCi:
        hit = contains_ci(s.payload_prefix, r.pattern);
        break;
      case Rule::Kind::kUaPrefix:
        hit = s.http && starts_with(s.http->user_agent, r.pattern);
        break;
      case Rule::Kind::kPortEq:
        hit = s.dst_port == r.port;
        break;
      case Rule::Kind::kMagicHex:
        hit = starts_with(s.payload_prefix, r.pattern);
        break;
    }
    if (hit) return r.name;
  }
  return "";
}

Partition stage_network(const std::vector<session::SessionRecord>& corpus,
                        const std::vector<std::size_t>& active,
                        const net::CidrSet& blocklist) {
  Partition out;
  for (auto i : active) {
    if (blocklist.contains(corpus[i].src_ip))
      out.dropped.emplace_back(i, "blocklist");
    else
      out.kept.push_back(i);
  }
  return out;
}

Partition stage_transport(const std::vector<session::SessionRecord>& corpus,
                          const std::vector<std::size_t>& active) {
  struct SrcInfo {
    std::uint32_t dst_ip = 0;
    std::uint16_t dst_port = 0;
    bool multi_ip = false, multi_port = false, seen = false;
  };
  std::unordered_map<std::uint32_t, SrcInfo> by_src;
  for (auto i : active) {
    const auto& s = corpus[i];
    auto& info = by_src[s.src_ip];
    if (!info.seen) {
      info = {s.dst_ip, s.dst_port, false, false, true};
    } else {
      if (info.dst_ip != s.dst_ip) info.multi_ip = true;
      if (info.dst_port != s.dst_port) info.multi_port = true;
    }
  }
  Partition out;
  for (auto i : active) {
    const auto& info = by_src[corpus[i].src_ip];
    if (info.multi_ip)
      out.dropped.emplace_back(i, "multi_dst_ip");
    else if (info.multi_port)
      out.dropped.emplace_back(i, "multi_dst_port");
    else
      out.kept.push_back(i);
  }
  return out;
}

Partition stage_session(const std::vector<session::SessionRecord>& corpus,
                        const std::vector<std::size_t>& active) {
  Partition out;
  for (auto i : active) {
    const auto& s = corpus[i];
    if (!s.handshake_complete)
      out.dropped.emplace_back(i, "incomplete_handshake");
    else if (s.client_payload_len == 0)
      out.dropped.emplace_back(i, "empty_payload");
    else
      out.kept.push_back(i);
  }
  return out;
}

Partition stage_application(const std::vector<session::SessionRecord>& corpus,
                            const std::vector<std::size_t>& active,
                            const std::vector<Rule>& user_rules) {
  Partition out;
  for (auto i : active) {
    auto reason = rule_drop_reason(corpus[i], user_rules);
    if (reason.empty())
      out.kept.push_back(i);
    else
      out.dropped.emplace_back(i, reason);
  }
  return out;
}

namespace {

StageCounts count_stage(const std::vector<session::SessionRecord>& corpus,
                        const std::vector<std::size_t>& active,
                        std::string label) {
  StageCounts c;
  c.label = std::move(label);
  c.sessions = active.size();
  std::unordered_set<std::uint32_t> sources;
  for (auto i : active) {
    sources.insert(corpus[i].src_ip);
    c.bytes += corpus[i].client_payload_len;
  }
  c.sources = sources.size();
  return c;
}

}  // namespace

FunnelReport run_funnel(const std::vector<session::SessionRecord>& corpus,
                        const FunnelConfig& config) {
  FunnelReport rep;
  rep.verdicts.resize(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    rep.verdicts[i].session_id = corpus[i].session_id;
    rep.verdicts[i].stage = Stage::kKept;
    rep.verdicts[i].reason = "kept";
  }

  std::vector<std::size_t> active(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) active[i] = i;
  rep.stages.push_back(count_stage(corpus, active, "initial"));

  auto apply = [&](Stage stage, Partition part, const char* label) {
    for (const auto& [i, reason] : part.dropped) {
      rep.verdicts[i].stage = stage;
      rep.verdicts[i].reason = reason;
    }
    active = std::move(part.kept);
    rep.stages.push_back(count_stage(corpus, active, label));
  };
  apply(Stage::kNetwork, stage_network(corpus, active, config.blocklist),
        "network");
  apply(Stage::kTransport, stage_transport(corpus, active), "transport");
  apply(Stage::kSession, stage_session(corpus, active), "session");
  apply(Stage::kApplication,
        stage_application(corpus, active, config.user_rules), "application");

  rep.survivors = active;
  for (const auto& v : rep.verdicts) ++rep.reason_counts[v.reason];
  return rep;
}

nlohmann::ordered_json report_json(const FunnelReport& report,
                                   bool include_verdicts) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  auto stages = nlohmann::ordered_json::array();
  for (const auto& s : report.stages) {
    nlohmann::ordered_json row;
    row["label"] = s.label;
    row["sources"] = s.sources;
    row["sessions"] = s.sessions;
    row["bytes"] = s.bytes;
    stages.push_back(std::move(row));
  }
  doc["stages"] = std::move(stages);
  doc["survivors"] = report.survivors.size();
  auto reasons = nlohmann::ordered_json::object();
  for (const auto& [reason, count] : report.reason_counts)
    reasons[reason] = count;
  doc["reason_counts"] = std::move(reasons);
  if (include_verdicts) {
    auto verdicts = nlohmann::ordered_json::array();
    for (const auto& v : report.verdicts) {
      nlohmann::ordered_json row;
      row["session_id"] = v.session_id;
      row["stage"] = stage_name(v.stage);
      row["reason"] = v.reason;
      verdicts.push_back(std::move(row));
    }
    doc["verdicts"] = std::move(verdicts);
  }
  return doc;
}

}  // namespace ipreuse::funnel
