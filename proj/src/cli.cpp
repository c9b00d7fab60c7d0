#include "ipreuse/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ipreuse/attribute.hpp"
#include "ipreuse/estimate.hpp"
#include "ipreuse/funnel.hpp"
#include "ipreuse/net.hpp"
#include "ipreuse/pool.hpp"
#include "ipreuse/psl.hpp"
#include "ipreuse/session.hpp"
#include "ipreuse/sim.hpp"

namespace ipreuse::cli {
namespace {

using nlohmann::ordered_json;

// Exit codes.  Flag/config mistakes are the operator's problem (1); broken
// input files or impossible computations are the data's problem (2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  return f;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path);
  return f;
}

// ---------------------------------------------------------------------------
// Output handling.  Reports are fully deterministic documents; the same
// invocation must produce the same bytes, so nothing here consults the clock.

struct OutputOpts {
  std::string path;            // empty = stdout
  std::string format = "json";
  // flag staging so explicit flags beat config-file values
  CLI::Option *o_path = nullptr, *o_format = nullptr;
  std::string f_path, f_format;
};

void add_output_opts(CLI::App* cmd, OutputOpts& out) {
  out.o_path = cmd->add_option("--out", out.f_path, "write the report to this file");
  out.o_format = cmd->add_option("--format", out.f_format, "report format")
                     ->check(CLI::IsMember({"json", "table"}));
}

// Applies --out/--format after any config file has been folded in.
void finish_output_opts(OutputOpts& out) {
  if (out.o_path->count()) out.path = out.f_path;
  if (out.o_format->count()) out.format = out.f_format;
  if (out.format != "json" && out.format != "table")
    throw ConfigError("unknown format \"" + out.format + "\"");
}

// The report sink is opened before any real work starts so a bad output path
// costs nothing; empty path means stdout.
std::optional<std::ofstream> open_report_sink(const OutputOpts& out) {
  if (out.path.empty()) return std::nullopt;
  return open_output(out.path);
}

void emit(std::optional<std::ofstream>& sink, const std::string& text) {
  (sink ? static_cast<std::ostream&>(*sink) : std::cout) << text;
}

std::string json_text(const ordered_json& doc) { return doc.dump(2) + "\n"; }

// Two-column key/value table.
std::string kv_table(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 0;
  for (const auto& [k, v] : rows) w = std::max(w, k.size());
  std::ostringstream os;
  for (const auto& [k, v] : rows)
    os << std::left << std::setw(static_cast<int>(w) + 2) << k << v << "\n";
  return os.str();
}

std::string fmt_double(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Config files.  A config is a flat JSON object whose keys mirror the
// subcommand's flags; unknown keys are rejected so typos cannot silently
// fall back to defaults.  Precedence: defaults < preset < config < flags.

using KeyHandler = std::function<void(const nlohmann::json&)>;
using ConfigKeys = std::map<std::string, KeyHandler>;

void apply_config_file(const std::string& path, const ConfigKeys& keys) {
  auto f = open_input(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(path + ": config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(path + ": unknown config key \"" + key + "\"");
    try {
      it->second(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(path + ": key \"" + key + "\": " + e.what());
    }
  }
}

// Typed extractors for config values.
template <typename T>
KeyHandler set_uint(T& slot) {
  return [&slot](const nlohmann::json& v) {
    if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
    slot = v.get<T>();
  };
}

KeyHandler set_int64(std::int64_t& slot) {
  return [&slot](const nlohmann::json& v) {
    if (!v.is_number_integer()) throw ConfigError("expected an integer");
    slot = v.get<std::int64_t>();
  };
}

KeyHandler set_string(std::string& slot) {
  return [&slot](const nlohmann::json& v) {
    if (!v.is_string()) throw ConfigError("expected a string");
    slot = v.get<std::string>();
  };
}

KeyHandler set_bool(bool& slot) {
  return [&slot](const nlohmann::json& v) {
    if (!v.is_boolean()) throw ConfigError("expected a boolean");
    slot = v.get<bool>();
  };
}

// ---------------------------------------------------------------------------
// simulate / compare-policies

struct SimArgs {
  sim::SimConfig cfg;             // accumulates defaults -> preset -> config
  std::string policy = "random";  // resolved into cfg.pool.policy at the end
  std::string prior = "auto";     // auto = sketch for pools beyond 100k IPs
  std::string preset, config_path, trace_out;
  OutputOpts out;

  // Flag staging; only options the user actually passed override the config.
  std::uint32_t f_pool = 0;
  std::int64_t f_cooldown = 0;
  std::uint32_t f_tenants = 0;
  std::int64_t f_tick = 0;
  std::uint32_t f_quota_max = 0;
  std::uint32_t f_adv_quota = 0;
  std::int64_t f_adv_hold = 0;
  std::uint64_t f_target = 0;
  std::int64_t f_max_duration = 0;
  std::uint64_t f_max_ticks = 0;
  std::uint64_t f_seed = 0;
  CLI::Option *o_pool = nullptr, *o_cooldown = nullptr, *o_tenants = nullptr,
              *o_tick = nullptr, *o_quota_max = nullptr, *o_adv_quota = nullptr,
              *o_adv_hold = nullptr, *o_target = nullptr, *o_max_duration = nullptr,
              *o_max_ticks = nullptr, *o_seed = nullptr, *o_policy = nullptr,
              *o_prior = nullptr;
};

void add_sim_options(CLI::App* cmd, SimArgs& a, bool with_policy) {
  cmd->add_option("--config", a.config_path, "JSON config file");
  cmd->add_option("--preset", a.preset, "named parameter set")
      ->check(CLI::IsMember({"paper-useast1a"}));
  a.o_pool = cmd->add_option("--pool", a.f_pool, "pool size in IPs");
  a.o_cooldown = cmd->add_option("--cooldown", a.f_cooldown, "release cooldown, seconds");
  a.o_tenants = cmd->add_option("--tenants", a.f_tenants, "number of regular tenants");
  a.o_tick = cmd->add_option("--tick", a.f_tick, "tick length, seconds");
  a.o_quota_max = cmd->add_option("--quota-max", a.f_quota_max,
                                  "per-tenant target quota upper bound");
  a.o_adv_quota = cmd->add_option("--adv-quota", a.f_adv_quota,
                                  "adversary allocations per round");
  a.o_adv_hold = cmd->add_option("--adv-hold", a.f_adv_hold,
                                 "adversary hold time, seconds");
  a.o_target = cmd->add_option("--target", a.f_target,
                               "stop after this many adversary allocations");
  a.o_max_duration = cmd->add_option("--max-duration", a.f_max_duration,
                                     "stop after this much simulated time, seconds");
  a.o_max_ticks = cmd->add_option("--max-ticks", a.f_max_ticks, "stop after this many ticks");
  a.o_seed = cmd->add_option("--seed", a.f_seed, "deterministic RNG seed");
  if (with_policy) {
    a.o_policy = cmd->add_option("--policy", a.policy, "allocation policy")
                     ->check(CLI::IsMember({"random", "lru", "tagging"}));
    cmd->add_option("--trace-out", a.trace_out, "write the allocation trace CSV here");
  }
  a.o_prior = cmd->add_option("--prior-tracking", a.prior,
                              "prior-tenant bookkeeping: exact, sketch, or auto")
                  ->check(CLI::IsMember({"exact", "sketch", "auto"}));
  add_output_opts(cmd, a.out);
}

void apply_preset(SimArgs& a) {
  if (a.preset.empty()) return;
  // paper-useast1a: one us-east-1a-sized zone under steady tenant churn.
  sim::SimConfig& c = a.cfg;
  c.pool.pool_size = 673000;
  c.pool.cooldown_seconds = 1800;
  c.n_tenants = 100000;
  c.tick_seconds = 600;
  c.quota_max = 2;
  c.adversary_quota = 60;
  c.adversary_hold_seconds = 600;
  c.adversary_target_allocations = 581000;
}

ConfigKeys sim_config_keys(SimArgs& a, bool with_policy) {
  ConfigKeys keys{
      {"pool_size", set_uint(a.cfg.pool.pool_size)},
      {"cooldown_seconds", set_int64(a.cfg.pool.cooldown_seconds)},
      {"prior_tracking", set_string(a.prior)},
      {"n_tenants", set_uint(a.cfg.n_tenants)},
      {"tick_seconds", set_int64(a.cfg.tick_seconds)},
      {"quota_max", set_uint(a.cfg.quota_max)},
      {"adversary_quota", set_uint(a.cfg.adversary_quota)},
      {"adversary_hold_seconds", set_int64(a.cfg.adversary_hold_seconds)},
      {"adversary_target_allocations", set_uint(a.cfg.adversary_target_allocations)},
      {"max_duration_seconds", set_int64(a.cfg.max_duration_seconds)},
      {"max_ticks", set_uint(a.cfg.max_ticks)},
      {"seed", set_uint(a.cfg.seed)},
      {"out", set_string(a.out.path)},
      {"format", set_string(a.out.format)},
  };
  if (with_policy) keys.emplace("policy", set_string(a.policy));
  return keys;
}

// Folds preset, config file, and explicit flags into a validated SimConfig.
void resolve_sim_config(SimArgs& a, bool with_policy) {
  apply_preset(a);
  if (!a.config_path.empty())
    apply_config_file(a.config_path, sim_config_keys(a, with_policy));
  finish_output_opts(a.out);
  sim::SimConfig& c = a.cfg;
  if (a.o_pool->count()) c.pool.pool_size = a.f_pool;
  if (a.o_cooldown->count()) c.pool.cooldown_seconds = a.f_cooldown;
  if (a.o_tenants->count()) c.n_tenants = a.f_tenants;
  if (a.o_tick->count()) c.tick_seconds = a.f_tick;
  if (a.o_quota_max->count()) c.quota_max = a.f_quota_max;
  if (a.o_adv_quota->count()) c.adversary_quota = a.f_adv_quota;
  if (a.o_adv_hold->count()) c.adversary_hold_seconds = a.f_adv_hold;
  if (a.o_target->count()) c.adversary_target_allocations = a.f_target;
  if (a.o_max_duration->count()) c.max_duration_seconds = a.f_max_duration;
  if (a.o_max_ticks->count()) c.max_ticks = a.f_max_ticks;
  if (a.o_seed->count()) c.seed = a.f_seed;

  if (with_policy) {
    auto pol = pool::policy_from_name(a.policy);
    if (!pol) throw ConfigError("unknown policy \"" + a.policy + "\"");
    c.pool.policy = *pol;
  }
  if (a.prior == "exact") {
    c.pool.prior_tracking = pool::PriorTracking::kExact;
  } else if (a.prior == "sketch") {
    c.pool.prior_tracking = pool::PriorTracking::kSketch;
  } else if (a.prior == "auto") {
    // Exact per-IP tenant sets get expensive on region-sized pools.
    c.pool.prior_tracking = c.pool.pool_size > 100000
                                ? pool::PriorTracking::kSketch
                                : pool::PriorTracking::kExact;
  } else {
    throw ConfigError("unknown prior_tracking \"" + a.prior + "\"");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string simulate_table(const sim::SimReport& r) {
  std::vector<std::pair<std::string, std::string>> rows;
  const ordered_json cfg = sim::config_json(r.config);
  for (const auto& [k, v] : cfg.items())
    rows.emplace_back(k, v.is_string() ? v.get<std::string>() : v.dump());
  rows.emplace_back("ticks", std::to_string(r.ticks));
  rows.emplace_back("duration_seconds", std::to_string(r.duration_seconds));
  rows.emplace_back("acquisitions", std::to_string(r.metrics.acquisitions));
  rows.emplace_back("unique_ips", std::to_string(r.summary.unique_ips));
  rows.emplace_back("mean_prev_tenants", fmt_double(r.summary.mean_prev_tenants, 3));
  rows.emplace_back("median_reuse_seconds",
                    r.summary.median_reuse_seconds
                        ? std::to_string(*r.summary.median_reuse_seconds)
                        : "-");
  rows.emplace_back("tenant_allocations", std::to_string(r.tenant_allocations));
  rows.emplace_back("tenant_releases", std::to_string(r.tenant_releases));
  rows.emplace_back("exhausted_events", std::to_string(r.exhausted_events));
  rows.emplace_back("cooldown_violations", std::to_string(r.cooldown_violations));
  rows.emplace_back("stalled", r.stalled ? "true" : "false");
  return kv_table(rows);
}

int cmd_simulate(SimArgs& a) {
  resolve_sim_config(a, /*with_policy=*/true);
  auto sink = open_report_sink(a.out);
  std::optional<std::ofstream> trace_sink;
  if (!a.trace_out.empty()) trace_sink = open_output(a.trace_out);
  a.cfg.record_trace = trace_sink.has_value();
  const sim::SimReport rep = sim::run(a.cfg);
  if (trace_sink) sim::write_trace_csv(*trace_sink, rep.trace);
  emit(sink, a.out.format == "json" ? json_text(sim::report_json(rep))
                                    : simulate_table(rep));
  return 0;
}

int cmd_compare_policies(SimArgs& a) {
  resolve_sim_config(a, /*with_policy=*/false);
  auto sink = open_report_sink(a.out);
  ordered_json doc;
  doc["schema_version"] = 1;
  doc["kind"] = "policy_comparison";
  ordered_json cfg = sim::config_json(a.cfg);
  cfg.erase("policy");  // varies per row
  doc["config"] = std::move(cfg);
  doc["rows"] = ordered_json::array();

  std::vector<std::pair<std::string, std::string>> table_rows;
  std::ostringstream tbl;
  tbl << std::left << std::setw(9) << "policy" << std::right << std::setw(11)
      << "unique_ips" << std::setw(19) << "mean_prev_tenants" << std::setw(22)
      << "median_reuse_seconds" << std::setw(14) << "acquisitions" << "\n";
  for (pool::Policy p :
       {pool::Policy::kRandom, pool::Policy::kLru, pool::Policy::kTagging}) {
    sim::SimConfig c = a.cfg;  // same seed for every policy
    c.pool.policy = p;
    const sim::SimReport rep = sim::run(c);
    ordered_json row;
    row["policy"] = pool::policy_name(p);
    row["unique_ips"] = rep.summary.unique_ips;
    row["mean_prev_tenants"] = rep.summary.mean_prev_tenants;
    if (rep.summary.median_reuse_seconds)
      row["median_reuse_seconds"] = *rep.summary.median_reuse_seconds;
    else
      row["median_reuse_seconds"] = nullptr;
    row["acquisitions"] = rep.metrics.acquisitions;
    doc["rows"].push_back(std::move(row));
    tbl << std::left << std::setw(9) << pool::policy_name(p) << std::right
        << std::setw(11) << rep.summary.unique_ips << std::setw(19)
        << fmt_double(rep.summary.mean_prev_tenants, 3) << std::setw(22)
        << (rep.summary.median_reuse_seconds
                ? std::to_string(*rep.summary.median_reuse_seconds)
                : "-")
        << std::setw(14) << rep.metrics.acquisitions << "\n";
  }
  emit(sink, a.out.format == "json" ? json_text(doc) : tbl.str());
  return 0;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
  std::string config_path, input;
  std::int64_t occasion_length = 600;
  OutputOpts out;
  CLI::Option *o_input = nullptr, *o_len = nullptr;
  std::string f_input;
  std::int64_t f_len = 0;
};

std::string estimate_table(const estimate::CaptureHistory& h,
                           const std::vector<estimate::OccasionEstimate>& occ,
                           double rate) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "occasion" << std::right << std::setw(6)
     << "n" << std::setw(6) << "m" << std::setw(6) << "u" << std::setw(6) << "R"
     << std::setw(6) << "r" << std::setw(6) << "z" << std::setw(10) << "M_hat"
     << std::setw(10) << "N_hat" << "\n";
  for (const auto& e : occ) {
    os << std::left << std::setw(10) << e.index << std::right << std::setw(6)
       << e.n << std::setw(6) << e.m << std::setw(6) << e.u << std::setw(6)
       << e.R << std::setw(6) << e.r << std::setw(6) << e.z << std::setw(10)
       << fmt_double(e.m_hat, 3)
       << std::setw(10) << (e.n_hat ? fmt_double(*e.n_hat, 3) : "-") << "\n";
  }
  os << "\n";
  os << kv_table({{"individuals", std::to_string(h.individuals.size())},
                  {"occasions", std::to_string(h.occasions)},
                  {"capture_rate", fmt_double(rate, 4)}});
  return os.str();
}

int cmd_estimate(EstimateArgs& a) {
  if (!a.config_path.empty())
    apply_config_file(a.config_path,
                      {{"input", set_string(a.input)},
                       {"occasion_length", set_int64(a.occasion_length)},
                       {"out", set_string(a.out.path)},
                       {"format", set_string(a.out.format)}});
  if (a.o_input->count()) a.input = a.f_input;
  if (a.o_len->count()) a.occasion_length = a.f_len;
  finish_output_opts(a.out);
  if (a.input.empty()) throw ConfigError("estimate: --input is required");
  if (a.occasion_length <= 0)
    throw ConfigError("estimate: occasion length must be positive");

  auto f = open_input(a.input);
  auto sink = open_report_sink(a.out);
  try {
    const auto log = estimate::load_observations(f);
    const auto hist = estimate::build_history(log, a.occasion_length);
    const auto occ = estimate::jolly_seber(hist);
    const double rate = estimate::capture_rate(hist);
    ordered_json doc = estimate::estimates_json(hist, occ, rate);
    doc["config"] = {{"input", a.input},
                     {"occasion_length", a.occasion_length}};
    emit(sink, a.out.format == "json" ? json_text(doc)
                                      : estimate_table(hist, occ, rate));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(a.input + ": " + e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// reuse

struct ReuseArgs {
  std::string config_path, trace;
  std::int64_t bin_width = 600;
  std::int64_t cooldown = 1800;
  OutputOpts out;
  CLI::Option *o_trace = nullptr, *o_bin = nullptr, *o_cooldown = nullptr;
  std::string f_trace;
  std::int64_t f_bin = 0, f_cooldown = 0;
};

std::string reuse_table(const estimate::ReuseStats& s) {
  std::ostringstream os;
  os << kv_table({{"intervals", std::to_string(s.intervals)},
                  {"min_seconds", std::to_string(s.min)},
                  {"median_seconds", std::to_string(s.median)},
                  {"max_seconds", std::to_string(s.max)},
                  {"mean_seconds", fmt_double(s.mean, 3)},
                  {"cv", fmt_double(s.cv, 4)},
                  {"below_cooldown", std::to_string(s.below_cooldown)},
                  {"bin_width", std::to_string(s.bin_width)}});
  os << "\n" << std::left << std::setw(14) << "bin_start" << std::right
     << std::setw(10) << "count" << "\n";
  for (const auto& [lo, count] : s.histogram)
    os << std::left << std::setw(14) << lo << std::right << std::setw(10)
       << count << "\n";
  return os.str();
}

int cmd_reuse(ReuseArgs& a) {
  if (!a.config_path.empty())
    apply_config_file(a.config_path,
                      {{"trace", set_string(a.trace)},
                       {"bin_width", set_int64(a.bin_width)},
                       {"cooldown", set_int64(a.cooldown)},
                       {"out", set_string(a.out.path)},
                       {"format", set_string(a.out.format)}});
  if (a.o_trace->count()) a.trace = a.f_trace;
  if (a.o_bin->count()) a.bin_width = a.f_bin;
  if (a.o_cooldown->count()) a.cooldown = a.f_cooldown;
  finish_output_opts(a.out);
  if (a.trace.empty()) throw ConfigError("reuse: --trace is required");
  if (a.bin_width <= 0) throw ConfigError("reuse: bin width must be positive");

  auto f = open_input(a.trace);
  auto sink = open_report_sink(a.out);
  try {
    const auto trace = sim::load_trace_csv(f);
    const auto stats = estimate::reuse_stats(trace, a.bin_width, a.cooldown);
    ordered_json doc = estimate::reuse_json(stats);
    doc["config"] = {{"trace", a.trace},
                     {"bin_width", a.bin_width},
                     {"cooldown", a.cooldown}};
    emit(sink, a.out.format == "json" ? json_text(doc) : reuse_table(stats));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(a.trace + ": " + e.what());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// funnel

struct FunnelArgs {
  std::string config_path, input, blocklist, rules, survivors_out;
  bool verdicts = false;
  OutputOpts out;
  CLI::Option *o_input = nullptr, *o_blocklist = nullptr, *o_rules = nullptr,
              *o_survivors = nullptr;
  std::string f_input, f_blocklist, f_rules, f_survivors;
};

std::string funnel_table(const funnel::FunnelReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "stage" << std::right << std::setw(10)
     << "sources" << std::setw(10) << "sessions" << std::setw(14) << "bytes"
     << "\n";
  for (const auto& s : r.stages)
    os << std::left << std::setw(14) << s.label << std::right << std::setw(10)
       << s.sources << std::setw(10) << s.sessions << std::setw(14) << s.bytes
       << "\n";
  os << "\n" << std::left << std::setw(24) << "drop_reason" << std::right
     << std::setw(10) << "sessions" << "\n";
  for (const auto& [reason, count] : r.reason_counts)
    os << std::left << std::setw(24) << reason << std::right << std::setw(10)
       << count << "\n";
  return os.str();
}

int cmd_funnel(FunnelArgs& a) {
  if (!a.config_path.empty())
    apply_config_file(a.config_path,
                      {{"input", set_string(a.input)},
                       {"blocklist", set_string(a.blocklist)},
                       {"rules", set_string(a.rules)},
                       {"survivors_out", set_string(a.survivors_out)},
                       {"include_verdicts", set_bool(a.verdicts)},
                       {"out", set_string(a.out.path)},
                       {"format", set_string(a.out.format)}});
  if (a.o_input->count()) a.input = a.f_input;
  if (a.o_blocklist->count()) a.blocklist = a.f_blocklist;
  if (a.o_rules->count()) a.rules = a.f_rules;
  if (a.o_survivors->count()) a.survivors_out = a.f_survivors;
  finish_output_opts(a.out);
  if (a.input.empty()) throw ConfigError("funnel: --input is required");

  // every path is opened before any parsing or filtering happens
  auto input_stream = open_input(a.input);
  std::optional<std::ifstream> blocklist_stream, rules_stream;
  if (!a.blocklist.empty()) blocklist_stream = open_input(a.blocklist);
  if (!a.rules.empty()) rules_stream = open_input(a.rules);
  std::optional<std::ofstream> survivors_sink;
  if (!a.survivors_out.empty()) survivors_sink = open_output(a.survivors_out);
  auto sink = open_report_sink(a.out);

  funnel::FunnelConfig cfg;
  if (blocklist_stream) {
    try {
      cfg.blocklist = net::load_netset(*blocklist_stream);
    } catch (const std::exception& e) {
      throw DataError(a.blocklist + ": " + e.what());
    }
  }
  if (rules_stream) {
    try {
      cfg.user_rules = funnel::load_rules(*rules_stream);
    } catch (const std::exception& e) {
      throw DataError(a.rules + ": " + e.what());
    }
  }
  std::vector<session::SessionRecord> corpus;
  try {
    corpus = session::load_sessions(input_stream);
  } catch (const std::exception& e) {
    throw DataError(a.input + ": " + e.what());
  }
  const funnel::FunnelReport rep = funnel::run_funnel(corpus, cfg);
  if (survivors_sink) {
    std::vector<session::SessionRecord> kept;
    kept.reserve(rep.survivors.size());
    for (std::size_t i : rep.survivors) kept.push_back(corpus[i]);
    session::write_sessions(*survivors_sink, kept);
  }
  ordered_json doc = funnel::report_json(rep, a.verdicts);
  auto opt_path = [](const std::string& p) {
    return p.empty() ? ordered_json(nullptr) : ordered_json(p);
  };
  doc["config"] = {{"input", a.input},
                   {"blocklist", opt_path(a.blocklist)},
                   {"rules", opt_path(a.rules)},
                   {"include_verdicts", a.verdicts}};
  emit(sink, a.out.format == "json" ? json_text(doc) : funnel_table(rep));
  return 0;
}

// ---------------------------------------------------------------------------
// attribute

struct AttributeArgs {
  std::string config_path, input, cloud_ranges, psl_path, ranks, snapshot,
      wildcard_providers, user_agents;
  OutputOpts out;
  CLI::Option *o_input = nullptr, *o_ranges = nullptr, *o_psl = nullptr,
              *o_ranks = nullptr, *o_snapshot = nullptr, *o_wildcards = nullptr,
              *o_ua = nullptr;
  std::string f_input, f_ranges, f_psl, f_ranks, f_snapshot, f_wildcards, f_ua;
};

std::string attribute_table(const ordered_json& doc) {
  std::vector<std::pair<std::string, std::string>> rows;
  rows.emplace_back("sessions", doc["sessions"].dump());
  for (const auto& [k, v] : doc["source_services"].items())
    rows.emplace_back("source_service." + k, v.dump());
  for (const auto& [k, v] : doc["ua_services"].items())
    rows.emplace_back("ua_service." + k, v.dump());
  rows.emplace_back("ua_unmatched", doc["ua_unmatched"].dump());
  const auto& hosts = doc["hosts"];
  for (const char* k : {"with_host", "no_host", "inconsistent", "malformed"})
    rows.emplace_back(std::string("hosts.") + k, hosts[k].dump());
  for (const auto& [k, v] : hosts["kinds"].items())
    rows.emplace_back("hosts.kind." + k, v.dump());
  for (const auto& [k, v] : hosts["shares"].items())
    rows.emplace_back("hosts.share." + k, fmt_double(v.get<double>(), 4));
  const auto& dom = doc["domains"];
  for (const char* k : {"sessions", "public_suffix_hosts", "validated_sessions",
                        "mismatch_sessions", "not_in_snapshot_sessions",
                        "unique_slds", "unique_etlds"})
    rows.emplace_back(std::string("domains.") + k, dom[k].dump());
  for (const auto& [k, v] : dom["rank_buckets"].items())
    rows.emplace_back("domains.rank." + k, v.dump());
  for (const auto& [k, v] : dom["automation"].items())
    rows.emplace_back("domains.automation." + k, v.dump());
  return kv_table(rows);
}

int cmd_attribute(AttributeArgs& a) {
  if (!a.config_path.empty())
    apply_config_file(a.config_path,
                      {{"input", set_string(a.input)},
                       {"cloud_ranges", set_string(a.cloud_ranges)},
                       {"psl", set_string(a.psl_path)},
                       {"ranks", set_string(a.ranks)},
                       {"snapshot", set_string(a.snapshot)},
                       {"wildcard_providers", set_string(a.wildcard_providers)},
                       {"user_agents", set_string(a.user_agents)},
                       {"out", set_string(a.out.path)},
                       {"format", set_string(a.out.format)}});
  if (a.o_input->count()) a.input = a.f_input;
  if (a.o_ranges->count()) a.cloud_ranges = a.f_ranges;
  if (a.o_psl->count()) a.psl_path = a.f_psl;
  if (a.o_ranks->count()) a.ranks = a.f_ranks;
  if (a.o_snapshot->count()) a.snapshot = a.f_snapshot;
  if (a.o_wildcards->count()) a.wildcard_providers = a.f_wildcards;
  if (a.o_ua->count()) a.user_agents = a.f_ua;
  finish_output_opts(a.out);
  if (a.input.empty()) throw ConfigError("attribute: --input is required");

  // open everything up front, then parse
  auto input_stream = open_input(a.input);
  std::map<std::string, std::ifstream> ref_streams;
  for (const std::string* p : {&a.cloud_ranges, &a.user_agents, &a.psl_path,
                               &a.wildcard_providers, &a.snapshot, &a.ranks})
    if (!p->empty() && !ref_streams.count(*p)) ref_streams.emplace(*p, open_input(*p));
  auto sink = open_report_sink(a.out);

  attr::AttributionRefs refs;
  auto load_ref = [&ref_streams](const std::string& path, auto loader) {
    std::ifstream& f = ref_streams.at(path);
    f.clear();
    f.seekg(0);  // tolerate the same file supplied for two roles
    try {
      return loader(f);
    } catch (const std::exception& e) {
      throw DataError(path + ": " + e.what());
    }
  };
  if (!a.cloud_ranges.empty())
    refs.ranges = load_ref(a.cloud_ranges,
                           [](std::istream& is) { return attr::CloudRanges::load(is); });
  if (!a.user_agents.empty())
    refs.ua = load_ref(a.user_agents,
                       [](std::istream& is) { return attr::UaTable::load(is); });
  if (!a.psl_path.empty())
    refs.psl = load_ref(a.psl_path,
                        [](std::istream& is) { return psl::SuffixList::parse(is); });
  if (!a.wildcard_providers.empty())
    refs.wildcard_providers =
        load_ref(a.wildcard_providers,
                 [](std::istream& is) { return attr::load_wildcard_providers(is); });
  if (!a.snapshot.empty())
    refs.snapshot = load_ref(a.snapshot,
                             [](std::istream& is) { return attr::Snapshot::load(is); });
  if (!a.ranks.empty())
    refs.ranks = load_ref(a.ranks,
                          [](std::istream& is) { return attr::RankList::load(is); });

  std::vector<session::SessionRecord> corpus;
  try {
    corpus = session::load_sessions(input_stream);
  } catch (const std::exception& e) {
    throw DataError(a.input + ": " + e.what());
  }
  const attr::AttributionReport rep = attr::attribute_report(corpus, refs);
  ordered_json doc = attr::report_json(rep);
  auto opt_path = [](const std::string& p) {
    return p.empty() ? ordered_json(nullptr) : ordered_json(p);
  };
  doc["config"] = {{"input", a.input},
                   {"cloud_ranges", opt_path(a.cloud_ranges)},
                   {"psl", opt_path(a.psl_path)},
                   {"ranks", opt_path(a.ranks)},
                   {"snapshot", opt_path(a.snapshot)},
                   {"wildcard_providers", opt_path(a.wildcard_providers)},
                   {"user_agents", opt_path(a.user_agents)}};
  emit(sink, a.out.format == "json" ? json_text(doc) : attribute_table(doc));
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"IP reuse toolkit: pool simulation, population estimation, "
               "traffic funnel, and latent-configuration attribution"};
  app.require_subcommand(1);

  SimArgs sim_args;
  auto* c_sim = app.add_subcommand("simulate", "run one pool simulation");
  add_sim_options(c_sim, sim_args, /*with_policy=*/true);

  SimArgs cmp_args;
  cmp_args.out.format = "table";  // its natural shape is the three-row table
  auto* c_cmp = app.add_subcommand(
      "compare-policies", "run random, lru, and tagging on one configuration");
  add_sim_options(c_cmp, cmp_args, /*with_policy=*/false);

  EstimateArgs est_args;
  auto* c_est = app.add_subcommand(
      "estimate", "open-population estimate from an observation log");
  c_est->add_option("--config", est_args.config_path, "JSON config file");
  est_args.o_input =
      c_est->add_option("--input", est_args.f_input, "observation CSV (ip,timestamp)");
  est_args.o_len = c_est->add_option("--occasion-length", est_args.f_len,
                                     "capture occasion length, seconds");
  add_output_opts(c_est, est_args.out);

  ReuseArgs reuse_args;
  auto* c_reuse =
      app.add_subcommand("reuse", "reuse-interval statistics from a trace CSV");
  c_reuse->add_option("--config", reuse_args.config_path, "JSON config file");
  reuse_args.o_trace =
      c_reuse->add_option("--trace", reuse_args.f_trace, "allocation trace CSV");
  reuse_args.o_bin =
      c_reuse->add_option("--bin-width", reuse_args.f_bin, "histogram bin width, seconds");
  reuse_args.o_cooldown = c_reuse->add_option("--cooldown", reuse_args.f_cooldown,
                                              "cooldown threshold, seconds");
  add_output_opts(c_reuse, reuse_args.out);

  FunnelArgs fun_args;
  auto* c_fun = app.add_subcommand("funnel", "filter a session corpus stage by stage");
  c_fun->add_option("--config", fun_args.config_path, "JSON config file");
  fun_args.o_input = c_fun->add_option("--input", fun_args.f_input, "session JSONL");
  fun_args.o_blocklist =
      c_fun->add_option("--blocklist", fun_args.f_blocklist, "CIDR netset file");
  fun_args.o_rules = c_fun->add_option("--rules", fun_args.f_rules, "user rule TSV");
  fun_args.o_survivors = c_fun->add_option("--survivors-out", fun_args.f_survivors,
                                           "write surviving sessions here");
  c_fun->add_flag("--verdicts", fun_args.verdicts,
                  "include the per-session verdict list in JSON output");
  add_output_opts(c_fun, fun_args.out);

  AttributeArgs at_args;
  auto* c_at = app.add_subcommand(
      "attribute", "classify session hosts against reference snapshots");
  c_at->add_option("--config", at_args.config_path, "JSON config file");
  at_args.o_input = c_at->add_option("--input", at_args.f_input, "session JSONL");
  at_args.o_ranges =
      c_at->add_option("--cloud-ranges", at_args.f_ranges, "cloud prefix JSON");
  at_args.o_psl = c_at->add_option("--psl", at_args.f_psl, "public suffix list snapshot");
  at_args.o_ranks = c_at->add_option("--ranks", at_args.f_ranks, "domain popularity CSV");
  at_args.o_snapshot =
      c_at->add_option("--snapshot", at_args.f_snapshot, "DNS resolution snapshot CSV");
  at_args.o_wildcards = c_at->add_option("--wildcard-providers", at_args.f_wildcards,
                                         "wildcard DNS provider list");
  at_args.o_ua = c_at->add_option("--user-agents", at_args.f_ua,
                                  "service user-agent table TSV");
  add_output_opts(c_at, at_args.out);

  try {
    app.parse(argc, argv);
    if (c_sim->parsed()) return cmd_simulate(sim_args);
    if (c_cmp->parsed()) return cmd_compare_policies(cmp_args);
    if (c_est->parsed()) return cmd_estimate(est_args);
    if (c_reuse->parsed()) return cmd_reuse(reuse_args);
    if (c_fun->parsed()) return cmd_funnel(fun_args);
    if (c_at->parsed()) return cmd_attribute(at_args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help or the usage error
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace ipreuse::cli
