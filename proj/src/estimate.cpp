#include "ipreuse/estimate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <stdexcept>
#include <string_view>
#include <unordered_map>

namespace ipreuse::estimate {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::int64_t parse_i64(std::string_view s, int line_no) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::runtime_error("observation line " + std::to_string(line_no) +
                             ": bad timestamp '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::vector<Observation> load_observations(std::istream& is) {
  std::vector<Observation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto comma = s.find(',');
    if (comma == std::string_view::npos || comma == 0)
      throw std::runtime_error("observation line " + std::to_string(line_no) +
                               ": expected 'ip,timestamp'");
    Observation obs;
    obs.ip = std::string(trim(s.substr(0, comma)));
    obs.time = parse_i64(trim(s.substr(comma + 1)), line_no);
    out.push_back(std::move(obs));
  }
  if (out.empty()) throw std::runtime_error("observation log is empty");
  return out;
}

CaptureHistory build_history(const std::vector<Observation>& log,
                             std::int64_t occasion_length) {
  if (occasion_length <= 0)
    throw std::invalid_argument("occasion length must be positive");
  if (log.empty()) throw std::invalid_argument("no observations");

  std::int64_t max_occ = 0;
  for (const auto& obs : log) {
    if (obs.time < 0)
      throw std::invalid_argument("negative observation timestamp");
    max_occ = std::max(max_occ, obs.time / occasion_length);
  }

  CaptureHistory h;
  h.occasions = static_cast<std::uint32_t>(max_occ + 1);
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& obs : log) {
    auto [it, inserted] = index.emplace(obs.ip, h.individuals.size());
    if (inserted) {
      h.individuals.push_back(obs.ip);
      h.seen.emplace_back(h.occasions, false);
    }
    h.seen[it->second][static_cast<std::size_t>(obs.time / occasion_length)] =
        true;
  }
  return h;
}

std::vector<OccasionEstimate> jolly_seber(const CaptureHistory& history) {
  const std::uint32_t T = history.occasions;
  std::vector<OccasionEstimate> out(T);
  for (std::uint32_t t = 0; t < T; ++t) {
    auto& o = out[t];
    o.index = t + 1;
    for (const auto& row : history.seen) {
      bool before = false, after = false;
      for (std::uint32_t k = 0; k < t; ++k) before = before || row[k];
      for (std::uint32_t k = t + 1; k < T; ++k) after = after || row[k];
      if (row[t]) {
        ++o.n;
        if (before) ++o.m;
        if (after) ++o.r;
      } else if (before && after) {
        ++o.z;
      }
    }
    o.u = o.n - o.m;
    o.R = o.n;
    o.m_hat = static_cast<double>(o.m) +
              static_cast<double>(o.R + 1) * static_cast<double>(o.z) /
                  static_cast<double>(o.r + 1);
    if (t > 0 && t + 1 < T)
      o.n_hat = static_cast<double>(o.n + 1) * o.m_hat /
                    static_cast<double>(o.m + 1) -
                1.0;
  }
  return out;
}

double capture_rate(const CaptureHistory& history) {
  if (history.occasions < 3)
    throw std::invalid_argument(
        "capture rate needs at least 3 occasions (got " +
        std::to_string(history.occasions) + ")");
  double peak = 0.0;
  for (const auto& o : jolly_seber(history))
    if (o.n_hat) peak = std::max(peak, *o.n_hat);
  if (peak <= 0.0)
    throw std::runtime_error("abundance estimates are degenerate (all <= 0)");
  return static_cast<double>(history.individuals.size()) / peak;
}

ReuseStats reuse_stats(const std::vector<sim::TraceEvent>& trace,
                       std::int64_t bin_width, std::int64_t cooldown) {
  if (bin_width <= 0)
    throw std::invalid_argument("bin width must be positive");

  std::unordered_map<std::int64_t, std::int64_t> last_release;
  std::vector<std::int64_t> intervals;
  for (const auto& ev : trace) {
    if (ev.type == sim::EventType::kRelease) {
      last_release[ev.ip] = ev.time;
    } else if (ev.type == sim::EventType::kAllocate) {
      auto it = last_release.find(ev.ip);
      if (it != last_release.end()) intervals.push_back(ev.time - it->second);
    }
  }
  if (intervals.empty())
    throw std::runtime_error("trace contains no reuse events");

  std::sort(intervals.begin(), intervals.end());
  ReuseStats st;
  st.intervals = intervals.size();
  st.min = intervals.front();
  st.max = intervals.back();
  st.median = intervals[(intervals.size() - 1) / 2];
  st.bin_width = bin_width;

  double sum = 0.0;
  for (auto v : intervals) {
    sum += static_cast<double>(v);
    // flooring division: out-of-order traces can yield negative gaps
    std::int64_t q = v / bin_width;
    if (v % bin_width != 0 && (v < 0) != (bin_width < 0)) --q;
    ++st.histogram[q * bin_width];
    if (v < cooldown) ++st.below_cooldown;
  }
  st.mean = sum / static_cast<double>(intervals.size());
  double var = 0.0;
  for (auto v : intervals) {
    double d = static_cast<double>(v) - st.mean;
    var += d * d;
  }
  var /= static_cast<double>(intervals.size());
  st.cv = st.mean != 0.0 ? std::sqrt(var) / st.mean : 0.0;
  return st;
}

nlohmann::ordered_json estimates_json(const CaptureHistory& history,
                                      const std::vector<OccasionEstimate>& occ,
                                      double rate) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["occasions"] = history.occasions;
  doc["individuals"] = history.individuals.size();
  doc["capture_rate"] = rate;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& o : occ) {
    nlohmann::ordered_json e;
    e["index"] = o.index;
    e["n"] = o.n;
    e["m"] = o.m;
    e["u"] = o.u;
    e["R"] = o.R;
    e["r"] = o.r;
    e["z"] = o.z;
    e["m_hat"] = o.m_hat;
    if (o.n_hat)
      e["n_hat"] = *o.n_hat;
    else
      e["n_hat"] = nullptr;
    arr.push_back(std::move(e));
  }
  doc["estimates"] = std::move(arr);
  return doc;
}

nlohmann::ordered_json reuse_json(const ReuseStats& stats) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["intervals"] = stats.intervals;
  doc["min"] = stats.min;
  doc["max"] = stats.max;
  doc["median"] = stats.median;
  doc["mean"] = stats.mean;
  doc["cv"] = stats.cv;
  doc["bin_width"] = stats.bin_width;
  doc["below_cooldown"] = stats.below_cooldown;
  auto hist = nlohmann::ordered_json::object();
  for (const auto& [lo, count] : stats.histogram)
    hist[std::to_string(lo)] = count;
  doc["histogram"] = std::move(hist);
  return doc;
}

}  // namespace ipreuse::estimate
