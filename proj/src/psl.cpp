#include "ipreuse/psl.hpp"

#include <algorithm>
#include <istream>

namespace ipreuse::psl {

namespace {

std::vector<std::string> labels_reversed(std::string_view host) {
  std::vector<std::string> out;
  std::size_t end = host.size();
  while (true) {
    auto dot = host.rfind('.', end == 0 ? std::string_view::npos : end - 1);
    if (dot == std::string_view::npos || dot >= end) {
      out.emplace_back(host.substr(0, end));
      break;
    }
    out.emplace_back(host.substr(dot + 1, end - dot - 1));
    end = dot;
  }
  return out;
}

std::string join_last_labels(std::string_view host, std::size_t count) {
  // take the last `count` labels of host
  if (count == 0) return {};
  std::size_t pos = host.size();
  for (std::size_t i = 0; i < count; ++i) {
    auto dot = host.rfind('.', pos == 0 ? std::string_view::npos : pos - 1);
    if (dot == std::string_view::npos) return std::string(host);
    pos = dot;
  }
  return std::string(host.substr(pos + 1));
}

}  // namespace

SuffixList SuffixList::parse(std::istream& is) {
  SuffixList list;
  std::string line;
  while (std::getline(is, line)) {
    std::string_view s = line;
    if (auto c = s.find("//"); c != std::string_view::npos) s = s.substr(0, c);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                          s.back() == '\r'))
      s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
      s.remove_prefix(1);
    if (s.empty()) continue;
    // rules run to the first whitespace
    if (auto sp = s.find_first_of(" \t"); sp != std::string_view::npos)
      s = s.substr(0, sp);
    Rule r;
    if (s.front() == '!') {
      r.exception = true;
      s.remove_prefix(1);
    }
    if (s.empty()) continue;
    r.labels_rev = labels_reversed(s);
    for (auto& label : r.labels_rev)
      std::transform(label.begin(), label.end(), label.begin(), [](char c) {
        return c >= 'A' && c <= 'Z' ? static_cast<char>(c + 32) : c;
      });
    list.rules_.push_back(std::move(r));
  }
  return list;
}

std::optional<std::pair<std::string, std::string>> SuffixList::split(
    std::string_view host) const {
  auto host_rev = labels_reversed(host);

  const Rule* exception = nullptr;
  std::size_t best_len = 0;  // matched label count of the longest plain rule
  for (const auto& r : rules_) {
    if (r.labels_rev.size() > host_rev.size()) continue;
    bool match = true;
    for (std::size_t i = 0; i < r.labels_rev.size() && match; ++i)
      match = r.labels_rev[i] == "*" || r.labels_rev[i] == host_rev[i];
    if (!match) continue;
    if (r.exception)
      exception = &r;
    else
      best_len = std::max(best_len, r.labels_rev.size());
  }

  std::size_t suffix_len;
  if (exception)
    suffix_len = exception->labels_rev.size() - 1;  // drop leftmost label
  else if (best_len > 0)
    suffix_len = best_len;
  else
    suffix_len = 1;  // implicit "*" rule

  if (suffix_len >= host_rev.size()) return std::nullopt;
  return std::make_pair(join_last_labels(host, suffix_len + 1),
                        join_last_labels(host, suffix_len));
}

}  // namespace ipreuse::psl
