// scenario_io.hpp -- scenario files (versioned JSON), figure presets, CSV and
// summary emission.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "parapet/engine.hpp"

namespace parapet {

inline constexpr int kScenarioSchemaVersion = 1;

namespace detail {

using nlohmann::json;

inline void check_keys(const json& obj, std::initializer_list<const char*> known,
                       const std::string& where, std::vector<std::string>& violations) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) violations.push_back(where + ": unknown key '" + it.key() + "'");
  }
}

inline std::optional<SenderKind> sender_kind_from(const std::string& s) {
  if (s == "legit_aimd") return SenderKind::LegitAimd;
  if (s == "flat") return SenderKind::FlatRate;
  if (s == "shrew") return SenderKind::OnOffShrew;
  if (s == "compliant") return SenderKind::CompliantAimd;
  if (s == "oracle") return SenderKind::Oracle;
  return std::nullopt;
}

inline const char* sender_kind_name(SenderKind k) {
  switch (k) {
    case SenderKind::LegitAimd: return "legit_aimd";
    case SenderKind::FlatRate: return "flat";
    case SenderKind::OnOffShrew: return "shrew";
    case SenderKind::CompliantAimd: return "compliant";
    case SenderKind::Oracle: return "oracle";
  }
  return "?";
}

}  // namespace detail

// Builds a ScenarioConfig from its JSON form, collecting every violation
// rather than stopping at the first. Type errors abort the parse.
inline ScenarioConfig scenario_from_json(const nlohmann::json& j) try {
  using nlohmann::json;
  std::vector<std::string> v;
  ScenarioConfig cfg;

  if (!j.is_object()) throw ScenarioError({"scenario: document must be a JSON object"});
  detail::check_keys(j,
                     {"schema_version", "seed", "duration_ticks", "tick_seconds",
                      "link_capacity_pps", "scheduler", "policer", "population", "extra_senders",
                      "allowlist_file", "extra_allowlist", "activation"},
                     "scenario", v);

  int version = j.value("schema_version", 0);
  if (version != kScenarioSchemaVersion)
    v.push_back("scenario: schema_version must be " + std::to_string(kScenarioSchemaVersion));

  cfg.seed = j.value("seed", std::uint64_t{1});
  cfg.duration = j.value("duration_ticks", Tick{0});
  cfg.tick_seconds = j.value("tick_seconds", 0.01);
  double pps = j.value("link_capacity_pps", 0.0);
  cfg.scheduler.link_capacity = pps * cfg.tick_seconds;

  if (j.contains("scheduler")) {
    const json& s = j["scheduler"];
    detail::check_keys(s, {"default_queue", "queues", "rules"}, "scheduler", v);
    cfg.scheduler.default_queue = s.value("default_queue", "");
    for (const json& q : s.value("queues", json::array())) {
      detail::check_keys(q, {"name", "weight", "capacity_pkts", "dedicated"}, "queue", v);
      QueueSpec spec;
      spec.name = q.value("name", "");
      spec.weight = q.value("weight", 0.0);
      spec.buffer_capacity = q.value("capacity_pkts", std::size_t{0});
      spec.dedicated = q.value("dedicated", false);
      cfg.scheduler.queues.push_back(spec);
    }
    for (const json& r : s.value("rules", json::array())) {
      detail::check_keys(r, {"match", "action", "target", "when"}, "rule", v);
      ClassifierRule rule;
      const json& m = r.value("match", json::object());
      detail::check_keys(m, {"kind", "port", "sources"}, "rule.match", v);
      if (m.contains("kind")) {
        std::string k = m["kind"];
        if (k == "udp_service")
          rule.kind = PacketKind::UdpService;
        else if (k == "syn")
          rule.kind = PacketKind::Syn;
        else if (k == "regular")
          rule.kind = PacketKind::Regular;
        else
          v.push_back("rule.match: unknown kind '" + k + "'");
      }
      if (m.contains("port")) rule.port = m["port"].get<std::uint16_t>();
      for (const json& src : m.value("sources", json::array()))
        rule.sources.insert(src.get<FlowId>());
      std::string action = r.value("action", "queue");
      if (action == "queue")
        rule.action = ClassifierRule::Action::Queue;
      else if (action == "block")
        rule.action = ClassifierRule::Action::Block;
      else
        v.push_back("rule: unknown action '" + action + "'");
      rule.target_queue = r.value("target", "");
      std::string when = r.value("when", "mitigation");
      if (when == "mitigation")
        rule.mitigation_only = true;
      else if (when == "always")
        rule.mitigation_only = false;
      else
        v.push_back("rule: unknown 'when' value '" + when + "'");
      cfg.scheduler.rules.push_back(rule);
    }
  } else {
    v.push_back("scenario: missing 'scheduler'");
  }

  if (j.contains("policer")) {
    const json& p = j["policer"];
    detail::check_keys(p,
                       {"detection_period_ticks", "lambda", "loss_threshold",
                        "syn_budget_fraction", "idle_evict_periods", "queue_capacity_pkts"},
                       "policer", v);
    cfg.policer.detection_period = p.value("detection_period_ticks", Tick{500});
    cfg.policer.lambda = p.value("lambda", 0.5);
    cfg.policer.loss_threshold = p.value("loss_threshold", 0.05);
    cfg.policer.syn_budget_fraction = p.value("syn_budget_fraction", 0.05);
    cfg.policer.idle_evict_periods = p.value("idle_evict_periods", 30);
    cfg.policer_queue_capacity = p.value("queue_capacity_pkts", std::size_t{0});
  }

  if (j.contains("population")) {
    const json& p = j["population"];
    detail::check_keys(p,
                       {"n_legit", "n_attack", "attack_kind", "aggressiveness",
                        "rate_distribution", "gaussian_std_ppt", "legit_demand_ppt", "rtt_ticks",
                        "on_len_ticks", "off_ratio", "phase_jitter_ticks"},
                       "population", v);
    cfg.population.n_legit = p.value("n_legit", std::size_t{0});
    cfg.population.n_attack = p.value("n_attack", std::size_t{0});
    if (p.contains("attack_kind")) {
      auto k = detail::sender_kind_from(p["attack_kind"]);
      if (k && *k != SenderKind::LegitAimd)
        cfg.population.attack_kind = *k;
      else
        v.push_back("population: unknown attack_kind '" + p["attack_kind"].get<std::string>() + "'");
    }
    cfg.population.aggressiveness = p.value("aggressiveness", 0.0);
    std::string dist = p.value("rate_distribution", "uniform");
    if (dist == "uniform")
      cfg.population.rate_distribution = RateDistribution::Uniform;
    else if (dist == "gaussian")
      cfg.population.rate_distribution = RateDistribution::Gaussian;
    else
      v.push_back("population: unknown rate_distribution '" + dist + "'");
    cfg.population.gaussian_std = p.value("gaussian_std_ppt", 1.0);
    cfg.population.legit_demand = p.value("legit_demand_ppt", 0.0);
    cfg.population.rtt = p.value("rtt_ticks", Tick{100});
    cfg.population.on_len = p.value("on_len_ticks", Tick{500});
    cfg.population.off_ratio = p.value("off_ratio", 0.0);
    cfg.population.phase_jitter = p.value("phase_jitter_ticks", Tick{0});
  }

  for (const json& e : j.value("extra_senders", nlohmann::json::array())) {
    detail::check_keys(
        e, {"id", "count", "kind", "demand_ppt", "emit", "port", "allowlisted", "rtt_ticks",
            "on_len_ticks", "off_ratio", "phase_ticks"},
        "extra_sender", v);
    SenderModel base;
    base.id = e.value("id", FlowId{0});
    auto kind = detail::sender_kind_from(e.value("kind", "flat"));
    if (!kind) {
      v.push_back("extra_sender: unknown kind '" + e.value("kind", "") + "'");
      kind = SenderKind::FlatRate;
    }
    base.kind = *kind;
    base.demand = e.value("demand_ppt", 0.0);
    base.rtt = e.value("rtt_ticks", Tick{100});
    base.on_len = e.value("on_len_ticks", Tick{500});
    base.off_ratio = e.value("off_ratio", 0.0);
    base.phase = e.value("phase_ticks", Tick{0});
    base.allowlisted = e.value("allowlisted", true);
    std::string emit = e.value("emit", "regular");
    if (emit == "regular") {
      base.emit_kind = PacketKind::Regular;
    } else if (emit == "udp") {
      base.emit_kind = PacketKind::UdpService;
      base.service_port = e.value("port", std::uint16_t{0});
    } else if (emit == "syn") {
      base.emit_kind = PacketKind::Syn;
    } else {
      v.push_back("extra_sender: unknown emit '" + emit + "'");
    }
    auto count = e.value("count", std::size_t{1});
    for (std::size_t i = 0; i < count; ++i) {
      SenderModel m = base;
      m.id = base.id + static_cast<FlowId>(i);
      cfg.extra_senders.push_back(m);
    }
  }

  for (const auto& f : j.value("extra_allowlist", nlohmann::json::array()))
    cfg.extra_allowlist.push_back(f.get<FlowId>());

  if (j.contains("allowlist_file") && j["allowlist_file"].is_string() &&
      !j["allowlist_file"].get<std::string>().empty()) {
    std::string path = j["allowlist_file"];
    std::ifstream in(path);
    if (!in) {
      v.push_back("scenario: allowlist_file '" + path + "' cannot be opened");
    } else {
      std::string line;
      int lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        std::size_t e2 = line.find_last_not_of(" \t\r");
        auto id = parse_flow_id(std::string_view(line).substr(b, e2 - b + 1));
        if (id)
          cfg.extra_allowlist.push_back(*id);
        else
          v.push_back(path + ":" + std::to_string(lineno) + ": unparseable source");
      }
    }
  }

  if (j.contains("activation")) {
    const json& a = j["activation"];
    detail::check_keys(a, {"utilization_threshold", "loss_threshold", "hold_ticks", "activate_at"},
                       "activation", v);
    cfg.activation.utilization_threshold = a.value("utilization_threshold", 0.9);
    cfg.activation.loss_threshold = a.value("loss_threshold", 0.05);
    cfg.activation.hold_ticks = a.value("hold_ticks", Tick{50});
    if (a.contains("activate_at") && !a["activate_at"].is_null())
      cfg.activation.activate_at = a["activate_at"].get<Tick>();
  }

  auto more = cfg.validate();
  v.insert(v.end(), more.begin(), more.end());
  if (!v.empty()) throw ScenarioError(std::move(v));
  return cfg;
} catch (const nlohmann::json::exception& e) {
  throw ScenarioError({std::string("scenario: malformed value: ") + e.what()});
}

inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError({"scenario: cannot open '" + path + "'"});
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError({std::string("scenario: JSON parse error: ") + e.what()});
  }
  return scenario_from_json(j);
}

// "a.b.c=value" overrides applied to the JSON form; values parse as JSON when
// possible and fall back to strings.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ScenarioError({"override '" + assignment + "' is not key=value"});
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    auto dot = path.find('.', start);
    std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Presets. Scale: 10 ms ticks, 5 s detection periods; populations and link
// capacity are scaled together so per-sender shares keep their ratios.

struct PresetPoint {
  std::string name;
  nlohmann::json config;
};

namespace detail {

inline json scenario_skeleton(double link_gbps, Tick duration) {
  double pps = link_gbps * 1e9 / (kPacketBytes * 8.0);
  return json{
      {"schema_version", kScenarioSchemaVersion},
      {"seed", 1},
      {"duration_ticks", duration},
      {"tick_seconds", 0.01},
      {"link_capacity_pps", pps},
      {"scheduler",
       {{"default_queue", "tcp"},
        {"queues",
         json::array({{{"name", "tcp"}, {"weight", 0.9}}, {{"name", "udp"}, {"weight", 0.1}}})},
        {"rules", json::array({{{"match", {{"kind", "udp_service"}}},
                                {"action", "queue"},
                                {"target", "udp"},
                                {"when", "mitigation"}}})}}},
      {"policer",
       {{"detection_period_ticks", 500},
        {"lambda", 0.5},
        {"loss_threshold", 0.05},
        {"syn_budget_fraction", 0.05},
        {"idle_evict_periods", 30}}},
      {"population", json::object()},
      {"activation",
       {{"utilization_threshold", 0.9}, {"loss_threshold", 0.05}, {"hold_ticks", 50}}},
  };
}

}  // namespace detail

// A quiet link: AIMD senders below capacity, policing never engages.
inline nlohmann::json preset_baseline() {
  auto j = detail::scenario_skeleton(1.0, 3000);
  j["population"] = {{"n_legit", 20}, {"legit_demand_ppt", 10.0}, {"rtt_ticks", 10}};
  return j;
}

// Amplification flood against the static filter + WFQ layer: six UDP floods
// at link rate each, one TCP sender at 70% of the link.
inline nlohmann::json preset_fig5a() {
  auto j = detail::scenario_skeleton(1.0, 3000);
  double link_ppt = j["link_capacity_pps"].get<double>() * 0.01;
  j["population"] = {{"n_legit", 1}, {"legit_demand_ppt", 0.7 * link_ppt}, {"rtt_ticks", 5}};
  j["extra_senders"] = nlohmann::json::array({{{"id", 1001},
                                               {"count", 6},
                                               {"kind", "flat"},
                                               {"demand_ppt", link_ppt},
                                               {"emit", "udp"},
                                               {"port", 123},
                                               {"allowlisted", false}}});
  j["activation"]["activate_at"] = 400;
  return j;
}

// In-table flat-rate senders that ignore losses vs one compliant sender.
inline nlohmann::json preset_fig5b() {
  auto j = detail::scenario_skeleton(1.0, 10000);
  double link_ppt = j["link_capacity_pps"].get<double>() * 0.01;
  j["population"] = {{"n_legit", 1},      {"legit_demand_ppt", 0.7 * link_ppt},
                     {"rtt_ticks", 5},    {"n_attack", 6},
                     {"attack_kind", "flat"}, {"aggressiveness", 6.0}};
  j["activation"]["activate_at"] = 400;
  return j;
}

// Premium clients get a dedicated queue (weight 0.2); common clients share
// the policed default queue with the attackers.
inline nlohmann::json preset_fig5c() {
  auto j = detail::scenario_skeleton(1.0, 10000);
  double link_ppt = j["link_capacity_pps"].get<double>() * 0.01;
  j["scheduler"]["default_queue"] = "common";
  j["scheduler"]["queues"] = nlohmann::json::array(
      {{{"name", "premium"}, {"weight", 0.2}, {"dedicated", true}},
       {{"name", "common"}, {"weight", 0.7}},
       {{"name", "udp"}, {"weight", 0.1}}});
  j["scheduler"]["rules"] = nlohmann::json::array(
      {{{"match", {{"sources", {7}}}}, {"action", "queue"}, {"target", "premium"}, {"when", "always"}},
       {{"match", {{"kind", "udp_service"}}}, {"action", "queue"}, {"target", "udp"}, {"when", "mitigation"}}});
  j["population"] = {{"n_legit", 1},   {"legit_demand_ppt", 0.5 * link_ppt},
                     {"rtt_ticks", 5}, {"n_attack", 5},
                     {"attack_kind", "flat"}, {"aggressiveness", 5.0}};
  j["extra_senders"] = nlohmann::json::array({{{"id", 7},
                                               {"kind", "legit_aimd"},
                                               {"demand_ppt", 0.2 * link_ppt},
                                               {"rtt_ticks", 5}}});
  j["activation"]["activate_at"] = 400;
  return j;
}

// On-off burst sweep: off/on ratio x attacker scale, bursts one detection
// period long, aggregate on-rate 2x the link. The per-attacker spread is 20%
// of the mean so the whole population actually attacks (an absolute spread
// drops part of the largest population under the fair share, where the
// policer deliberately leaves low-rate senders alone).
inline std::vector<PresetPoint> preset_fig6a() {
  std::vector<PresetPoint> points;
  for (double r : {0.0, 2.0, 6.0, 18.0}) {
    for (std::size_t na : {std::size_t{100}, std::size_t{500}, std::size_t{1000}}) {
      Tick cycle = static_cast<Tick>(std::llround(500.0 * (1.0 + r)));
      Tick duration = std::max<Tick>(12000, 6 * cycle);
      auto j = detail::scenario_skeleton(2.0, duration);
      double link_ppt = j["link_capacity_pps"].get<double>() * 0.01;
      double b_ppt = 0.9 * link_ppt;
      double mean_rate = 2.0 * link_ppt / static_cast<double>(na);
      j["population"] = {{"n_legit", 100},
                         {"legit_demand_ppt", 1.1 * b_ppt / 200.0},
                         {"rtt_ticks", 5},
                         {"n_attack", na},
                         {"attack_kind", "shrew"},
                         {"aggressiveness", 2.0},
                         {"rate_distribution", "gaussian"},
                         {"gaussian_std_ppt", mean_rate / 5.0},
                         {"on_len_ticks", 500},
                         {"off_ratio", r}};
      j["activation"]["activate_at"] = 0;
      std::ostringstream name;
      name << "fig6a_r" << static_cast<int>(r) << "_na" << na;
      points.push_back({name.str(), j});
    }
  }
  return points;
}

// Flat-rate volume sweep; policing starts on the utilization trigger.
inline std::vector<PresetPoint> preset_fig6b() {
  std::vector<PresetPoint> points;
  for (double af : {0.9, 2.0, 4.0}) {
    auto j = detail::scenario_skeleton(2.0, 12000);
    double link_ppt = j["link_capacity_pps"].get<double>() * 0.01;
    double b_ppt = 0.9 * link_ppt;
    j["population"] = {{"n_legit", 100},
                       {"legit_demand_ppt", 2.0 * b_ppt / 600.0},
                       {"rtt_ticks", 5},
                       {"n_attack", 500},
                       {"attack_kind", "flat"},
                       {"aggressiveness", af}};
    std::ostringstream name;
    name << "fig6b_af" << af;
    points.push_back({name.str(), j});
  }
  return points;
}

// Rate-limit-aware adversaries: one run with loss-reactive (compliant)
// attackers, one with window-reading oracles for the upper bound.
inline std::vector<PresetPoint> preset_fig6c() {
  std::vector<PresetPoint> points;
  for (bool oracle : {false, true}) {
    auto j = detail::scenario_skeleton(1.0, 15000);
    double link_ppt = j["link_capacity_pps"].get<double>() * 0.01;
    double fair_ppt = 0.9 * link_ppt / 600.0;
    double demand = 0.99 * fair_ppt;
    double af = oracle ? 2.0 : 500.0 * demand / link_ppt;
    j["population"] = {{"n_legit", 100},
                       {"legit_demand_ppt", demand},
                       {"rtt_ticks", 5},
                       {"n_attack", 500},
                       {"attack_kind", oracle ? "oracle" : "compliant"},
                       {"aggressiveness", af}};
    j["activation"]["activate_at"] = 0;
    points.push_back({oracle ? "fig6c_oracle" : "fig6c_compliant", j});
  }
  return points;
}

inline std::vector<PresetPoint> expand_preset(const std::string& name) {
  if (name == "baseline") return {{name, preset_baseline()}};
  if (name == "fig5a") return {{name, preset_fig5a()}};
  if (name == "fig5b") return {{name, preset_fig5b()}};
  if (name == "fig5c") return {{name, preset_fig5c()}};
  if (name == "fig6a") return preset_fig6a();
  if (name == "fig6b") return preset_fig6b();
  if (name == "fig6c") return preset_fig6c();
  throw ScenarioError({"unknown preset '" + name + "'"});
}

inline std::vector<std::string> preset_names() {
  return {"baseline", "fig5a", "fig5b", "fig5c", "fig6a", "fig6b", "fig6c"};
}

// ---------------------------------------------------------------------------
// Result summaries.

inline nlohmann::json summarize_run(const ScenarioConfig& cfg, const RunResult& res) {
  using nlohmann::json;
  const double dp = static_cast<double>(cfg.policer.detection_period);

  json per_class;
  const char* class_names[kClassCount] = {"legit", "attack", "premium", "udp"};
  for (std::size_t c = 0; c < kClassCount; ++c) {
    std::size_t senders = 0;
    for (auto sc : res.sender_class)
      if (static_cast<std::size_t>(sc) == c) ++senders;
    per_class[class_names[c]] = {
        {"senders", senders},
        {"offered_ppt", res.steady_offered_per_tick(static_cast<SenderClass>(c))},
        {"goodput_ppt", res.steady_goodput_per_tick(static_cast<SenderClass>(c))},
    };
  }

  json verdicts;
  bool cap_ok = true;
  double cap_pp = 0.0;
  if (res.n_legit + res.n_attack > 0) {
    auto bound = fair_share_bound(res.n_legit, res.n_attack, res.bandwidth_per_period,
                                  cfg.policer.loss_threshold);
    cap_pp = bound.attacker_cap;
    std::size_t first_period = 0;
    if (res.activated_at)
      first_period = static_cast<std::size_t>(*res.activated_at / cfg.policer.detection_period) + 1;
    for (std::size_t p = first_period + 1; p < res.period_goodput.size(); ++p) {
      double attack_pp =
          static_cast<double>(res.period_goodput[p][static_cast<std::size_t>(SenderClass::Attack)]);
      if (attack_pp > cap_pp + 1.0) cap_ok = false;
    }
    double fair_ppt = bound.fair / dp;
    bool floor_ok = true;
    for (std::size_t i = 0; i < res.senders.size(); ++i) {
      if (res.sender_class[i] != SenderClass::Legit) continue;
      if (res.senders[i].demand * dp < bound.fair) continue;  // demand below fair share
      if (res.sender_steady_goodput(i) < 0.98 * fair_ppt) floor_ok = false;
    }
    verdicts["legit_floor_ok"] = floor_ok;
    verdicts["attacker_cap_ok"] = cap_ok;
    json bounds = {{"fair_share_ppt", bound.fair / dp},
                   {"attacker_cap_ppt", bound.attacker_cap / dp},
                   {"legit_floor_ppt", bound.legit_floor / dp}};
    verdicts["bounds"] = bounds;
  }
  verdicts["conservation_ok"] = res.conservation_ok;

  std::uint64_t dw = 0, dq = 0, dd = 0, df = 0;
  for (const auto& r : res.rows) {
    dw += r.drop_window;
    dq += r.drop_queue;
    dd += r.drop_denied;
    df += r.drop_filter;
  }

  return json{
      {"schema_version", kScenarioSchemaVersion},
      {"seed", cfg.seed},
      {"duration_ticks", cfg.duration},
      {"steady_from_tick", res.steady_from},
      {"link_capacity_ppt", cfg.scheduler.link_capacity},
      {"congestion_layer",
       {{"bandwidth_pkts_per_period", res.bandwidth_per_period},
        {"bandwidth_ppt", res.bandwidth_per_tick},
        {"n_legit", res.n_legit},
        {"n_attack", res.n_attack},
        {"final_flows", res.final_flows},
        {"final_window_sum", res.final_window_sum},
        {"activated_at", res.activated_at ? json(*res.activated_at) : json(nullptr)}}},
      {"classes", per_class},
      {"drops", {{"window", dw}, {"queue", dq}, {"denied", dd}, {"filter", df}}},
      {"verdicts", verdicts},
  };
}

}  // namespace parapet
