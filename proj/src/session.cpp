#include "ipreuse/session.hpp"

#include <array>
#include <istream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "ipreuse/net.hpp"

namespace ipreuse::session {

namespace {

constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::array<int, 256> decode_table() {
  std::array<int, 256> t;
  t.fill(-1);
  for (int i = 0; i < 64; ++i) t[static_cast<unsigned char>(kB64[i])] = i;
  return t;
}

}  // namespace

std::string base64_encode(std::string_view raw) {
  std::string out;
  out.reserve((raw.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= raw.size(); i += 3) {
    std::uint32_t v = (static_cast<unsigned char>(raw[i]) << 16) |
                      (static_cast<unsigned char>(raw[i + 1]) << 8) |
                      static_cast<unsigned char>(raw[i + 2]);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back(kB64[v & 63]);
  }
  if (std::size_t rem = raw.size() - i; rem == 1) {
    std::uint32_t v = static_cast<unsigned char>(raw[i]) << 16;
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out += "==";
  } else if (rem == 2) {
    std::uint32_t v = (static_cast<unsigned char>(raw[i]) << 16) |
                      (static_cast<unsigned char>(raw[i + 1]) << 8);
    out.push_back(kB64[(v >> 18) & 63]);
    out.push_back(kB64[(v >> 12) & 63]);
    out.push_back(kB64[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view enc) {
  static const auto table = decode_table();
  if (enc.size() % 4 != 0)
    throw std::runtime_error("base64 length not a multiple of 4");
  std::string out;
  out.reserve(enc.size() / 4 * 3);
  for (std::size_t i = 0; i < enc.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      char c = enc[i + k];
      if (c == '=') {
        // padding only in the last two positions of the final quad
        if (i + 4 != enc.size() || k < 2)
          throw std::runtime_error("misplaced base64 padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw std::runtime_error("misplaced base64 padding");
      int d = table[static_cast<unsigned char>(c)];
      if (d < 0) throw std::runtime_error("bad base64 character");
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

namespace {

using nlohmann::json;

[[noreturn]] void fail(int line_no, const std::string& msg) {
  throw std::runtime_error("session line " + std::to_string(line_no) + ": " +
                           msg);
}

std::uint32_t get_ip(const json& j, const char* key, int line_no) {
  if (!j.contains(key) || !j[key].is_string())
    fail(line_no, std::string("missing or non-string ") + key);
  auto ip = net::parse_ipv4(j[key].get<std::string>());
  if (!ip) fail(line_no, std::string("bad address in ") + key);
  return *ip;
}

SessionRecord parse_record(const json& j, int line_no) {
  SessionRecord r;
  if (!j.is_object()) fail(line_no, "record is not an object");
  if (!j.contains("session_id") || !j["session_id"].is_string())
    fail(line_no, "missing session_id");
  r.session_id = j["session_id"].get<std::string>();
  r.src_ip = get_ip(j, "src_ip", line_no);
  r.dst_ip = get_ip(j, "dst_ip", line_no);
  if (!j.contains("dst_port") || !j["dst_port"].is_number_unsigned() ||
      j["dst_port"].get<std::uint64_t>() > 65535)
    fail(line_no, "dst_port must be an integer in [0, 65535]");
  r.dst_port = static_cast<std::uint16_t>(j["dst_port"].get<std::uint64_t>());
  if (!j.contains("start_time") || !j["start_time"].is_number_integer())
    fail(line_no, "missing start_time");
  r.start_time = j["start_time"].get<std::int64_t>();
  if (!j.contains("handshake_complete") ||
      !j["handshake_complete"].is_boolean())
    fail(line_no, "missing handshake_complete");
  r.handshake_complete = j["handshake_complete"].get<bool>();
  if (!j.contains("client_payload_len") ||
      !j["client_payload_len"].is_number_unsigned())
    fail(line_no, "client_payload_len must be a non-negative integer");
  r.client_payload_len = j["client_payload_len"].get<std::uint64_t>();
  if (j.contains("payload_prefix")) {
    if (!j["payload_prefix"].is_string())
      fail(line_no, "payload_prefix must be a base64 string");
    try {
      r.payload_prefix = base64_decode(j["payload_prefix"].get<std::string>());
    } catch (const std::runtime_error& e) {
      fail(line_no, e.what());
    }
  }
  if (r.payload_prefix.size() > kPayloadPrefixCap)
    fail(line_no, "payload_prefix exceeds 4096 bytes");
  if (r.client_payload_len < r.payload_prefix.size())
    fail(line_no, "client_payload_len smaller than payload_prefix");
  if (j.contains("http") && !j["http"].is_null()) {
    const auto& h = j["http"];
    if (!h.is_object()) fail(line_no, "http must be an object");
    HttpInfo info;
    if (h.contains("method")) info.method = h["method"].get<std::string>();
    if (h.contains("path")) info.path = h["path"].get<std::string>();
    if (h.contains("host")) info.host = h["host"].get<std::string>();
    if (h.contains("user_agent"))
      info.user_agent = h["user_agent"].get<std::string>();
    r.http = std::move(info);
  }
  if (j.contains("tls_sni") && !j["tls_sni"].is_null()) {
    if (!j["tls_sni"].is_string()) fail(line_no, "tls_sni must be a string");
    r.tls_sni = j["tls_sni"].get<std::string>();
  }
  return r;
}

}  // namespace

std::vector<SessionRecord> load_sessions(std::istream& is) {
  std::vector<SessionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) fail(line_no, "invalid record syntax");
    out.push_back(parse_record(j, line_no));
  }
  return out;
}

void write_sessions(std::ostream& os, const std::vector<SessionRecord>& recs) {
  for (const auto& r : recs) {
    nlohmann::ordered_json j;
    j["session_id"] = r.session_id;
    j["src_ip"] = net::format_ipv4(r.src_ip);
    j["dst_ip"] = net::format_ipv4(r.dst_ip);
    j["dst_port"] = r.dst_port;
    j["start_time"] = r.start_time;
    j["handshake_complete"] = r.handshake_complete;
    j["client_payload_len"] = r.client_payload_len;
    j["payload_prefix"] = base64_encode(r.payload_prefix);
    if (r.http) {
      nlohmann::ordered_json h;
      h["method"] = r.http->method;
      h["path"] = r.http->path;
      h["host"] = r.http->host;
      h["user_agent"] = r.http->user_agent;
      j["http"] = std::move(h);
    }
    if (r.tls_sni) j["tls_sni"] = *r.tls_sni;
    os << j.dump() << '\n';
  }
}

}  // namespace ipreuse::session
