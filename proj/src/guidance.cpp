#include "rflock/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "rflock/uncertainty.hpp"

namespace rflock {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kEventKindCount> kKindNames = {
    "none",        "drought",  "flood",       "storm_approaching", "contamination",
    "winter_storm", "heatwave", "maintenance", "regulatory"};

constexpr std::array<const char*, 3> kModeNames = {"strategic", "tactical", "operational"};

// Strict JSON rejects raw line breaks inside strings; provider output
// (including the documented examples) wraps long rationales that way.
std::string escape_raw_controls(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  bool escaped = false;
  for (char c : text) {
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      } else if (static_cast<unsigned char>(c) < 0x20) {
        out.push_back(' ');
        continue;
      }
    } else if (c == '"') {
      in_string = true;
    }
    out.push_back(c);
  }
  return out;
}

double number_field(const json& obj, const char* key, const char* where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw Error("missing_field", std::string("directive is missing field \"") + where + "\"");
  if (!it->is_number())
    throw Error("malformed_directive", std::string("field \"") + where + "\" is not a number");
  return it->get<double>();
}

RulebookEntry make_entry(double a, double s, double c, double gamma, const char* why) {
  return {{a, s, c}, gamma, why};
}

}  // namespace

const char* to_string(EventKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

EventKind parse_event_kind(const std::string& name) {
  for (std::size_t k = 0; k < kKindNames.size(); ++k)
    if (name == kKindNames[k]) return static_cast<EventKind>(k);
  throw Error("unknown_event_kind", "unknown event kind \"" + name + "\"");
}

const std::array<EventKind, kEventKindCount>& all_event_kinds() {
  static const std::array<EventKind, kEventKindCount> kinds = [] {
    std::array<EventKind, kEventKindCount> k{};
    for (std::size_t i = 0; i < kEventKindCount; ++i) k[i] = static_cast<EventKind>(i);
    return k;
  }();
  return kinds;
}

bool is_flood_like(EventKind kind) {
  return kind == EventKind::kFlood || kind == EventKind::kStormApproaching ||
         kind == EventKind::kWinterStorm;
}

const char* to_string(Mode mode) { return kModeNames[static_cast<std::size_t>(mode)]; }

Mode parse_mode(const std::string& name) {
  for (std::size_t m = 0; m < kModeNames.size(); ++m)
    if (name == kModeNames[m]) return static_cast<Mode>(m);
  throw Error("unknown_mode", "unknown mode \"" + name + "\"");
}

void ContextEvent::validate() const {
  if (!(severity >= 0.0 && severity <= 1.0))
    throw Error("invalid_event", "event severity must lie in [0, 1]");
  if (duration < 1) throw Error("invalid_event", "event duration must be >= 1 step");
  if (t < 0) throw Error("invalid_event", "event start must be >= 0");
}

void GuidanceDirective::validate() const {
  weights.validate();
  if (!(gamma_human_hat >= 0.0 && gamma_human_hat <= 1.0))
    throw Error("invalid_directive", "gamma_human must lie in [0, 1]");
  if (ttl_steps < 1) throw Error("invalid_directive", "ttl must be >= 1 step");
}

Rulebook::Rulebook(Table table) : table_(std::move(table)) {
  for (EventKind k : all_event_kinds())
    for (int m = 0; m < 3; ++m) {
      auto it = table_.find({k, static_cast<Mode>(m)});
      if (it == table_.end())
        throw Error("rulebook_incomplete", std::string("rulebook has no entry for ") +
                                               to_string(k) + "/" + kModeNames[m]);
      it->second.weights.validate();
      if (!(it->second.gamma_human_hat >= 0.0 && it->second.gamma_human_hat <= 1.0))
        throw Error("invalid_directive", "rulebook gamma_human outside [0, 1]");
    }
}

const Rulebook& Rulebook::builtin() {
  static const Rulebook book = [] {
    using M = Mode;
    using K = EventKind;
    Table t;
    auto all_modes = [&](K k, RulebookEntry e) {
      for (M m : {M::kStrategic, M::kTactical, M::kOperational}) t[{k, m}] = e;
    };
    all_modes(K::kNone, make_entry(0.6, 0.1, 0.3, 0.0, "baseline coordination"));

    t[{K::kDrought, M::kStrategic}] = make_entry(0.6, 0.1, 0.3, 0.1, "conserve and share flow");
    t[{K::kDrought, M::kTactical}] = make_entry(0.6, 0.1, 0.3, 0.1, "conserve and share flow");
    t[{K::kDrought, M::kOperational}] = make_entry(0.8, 0.1, 0.1, 0.15, "drought emergency");

    t[{K::kFlood, M::kStrategic}] = make_entry(0.4, 0.4, 0.2, 0.05, "diversify release timing");
    t[{K::kFlood, M::kTactical}] = make_entry(0.2, 0.6, 0.2, 0.05, "diversify release timing");
    t[{K::kFlood, M::kOperational}] = make_entry(0.1, 0.8, 0.1, 0.05, "flood emergency");

    t[{K::kStormApproaching, M::kStrategic}] = make_entry(0.4, 0.4, 0.2, 0.05, "prepare storage");
    t[{K::kStormApproaching, M::kTactical}] = make_entry(0.2, 0.6, 0.2, 0.05, "storm approaching");
    t[{K::kStormApproaching, M::kOperational}] = make_entry(0.1, 0.8, 0.1, 0.05, "storm emergency");

    all_modes(K::kContamination, make_entry(0.2, 0.7, 0.1, 0.1, "isolate contamination"));

    t[{K::kWinterStorm, M::kStrategic}] = make_entry(0.5, 0.3, 0.2, 0.1, "winter storm watch");
    t[{K::kWinterStorm, M::kTactical}] = make_entry(0.5, 0.3, 0.2, 0.1, "winter storm");
    t[{K::kWinterStorm, M::kOperational}] = make_entry(0.8, 0.1, 0.1, 0.2, "infrastructure outage");

    t[{K::kHeatwave, M::kStrategic}] = make_entry(0.5, 0.1, 0.4, 0.15, "ecological stress");
    t[{K::kHeatwave, M::kTactical}] = make_entry(0.5, 0.1, 0.4, 0.15, "ecological stress");
    t[{K::kHeatwave, M::kOperational}] = make_entry(0.8, 0.1, 0.1, 0.2, "heat emergency");

    all_modes(K::kMaintenance, make_entry(0.3, 0.5, 0.2, 0.2, "work around closures"));
    all_modes(K::kRegulatory, make_entry(0.5, 0.1, 0.4, 0.1, "meet regulated flows"));
    return Rulebook(std::move(t));
  }();
  return book;
}

Rulebook Rulebook::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("malformed_rulebook", e.what());
  }
  if (!doc.is_object()) throw Error("malformed_rulebook", "rulebook must be a JSON object");
  Table t;
  for (auto& [kind_name, modes] : doc.items()) {
    const EventKind kind = parse_event_kind(kind_name);
    for (auto& [mode_name, e] : modes.items()) {
      if (!e.contains("weights")) throw Error("missing_field", "rulebook entry needs weights");
      const auto& w = e.at("weights");
      RulebookEntry r;
      r.weights = {number_field(w, "align", "weights.align"), number_field(w, "sep", "weights.sep"),
                   number_field(w, "coh", "weights.coh")};
      r.gamma_human_hat = e.value("gamma_human", 0.0);
      r.rationale = e.value("rationale", std::string());
      t[{kind, parse_mode(mode_name)}] = r;
    }
  }
  return Rulebook(std::move(t));
}

const RulebookEntry& Rulebook::entry(EventKind kind, Mode mode) const {
  return table_.at({kind, mode});
}

int ModeTimings::steps_for(double seconds) const {
  return std::max(1, static_cast<int>(std::llround(seconds / dt_s)));
}

int ModeTimings::ttl_steps(Mode mode) const {
  switch (mode) {
    case Mode::kStrategic: return steps_for(strategic_s);
    case Mode::kTactical: return steps_for(tactical_s);
    case Mode::kOperational: return steps_for(operational_s);
  }
  return 1;
}

const ContextEvent* dominant_event(std::span<const ContextEvent> pending) {
  const ContextEvent* best = nullptr;
  for (const auto& e : pending)
    if (!best || e.severity > best->severity || (e.severity == best->severity && e.t < best->t))
      best = &e;
  return best;
}

ModeDecision select_mode(int step, std::span<const ContextEvent> pending,
                         const GuidanceDirective* current, const ModeTimings& timings) {
  for (const auto& e : pending)
    if (e.severity >= timings.emergency_threshold) return {true, Mode::kOperational};
  const int tactical = timings.steps_for(timings.tactical_s);
  const int strategic = timings.steps_for(timings.strategic_s);
  if (!pending.empty() && step % tactical == 0) return {true, Mode::kTactical};
  if (step % strategic == 0) return {true, Mode::kStrategic};
  if (!current || current->expired(step)) return {true, Mode::kStrategic};
  return {false, current->mode};
}

GuidanceDirective translate_context(std::span<const ContextEvent> pending, Mode mode,
                                    const Rulebook& rulebook, int step,
                                    const ModeTimings& timings) {
  const ContextEvent* top = dominant_event(pending);
  const EventKind kind = top ? top->kind : EventKind::kNone;
  const RulebookEntry& e = rulebook.entry(kind, mode);
  GuidanceDirective d;
  d.weights = e.weights;
  d.gamma_human_hat = e.gamma_human_hat;
  d.rationale = e.rationale;
  d.mode = mode;
  d.issued_at = step;
  d.ttl_steps = timings.ttl_steps(mode);
  d.tag = kind;
  d.severity = top ? top->severity : 0.0;
  return d;
}

GuidanceDirective parse_directive(const std::string& text, std::vector<std::string>* warnings) {
  json doc;
  try {
    doc = json::parse(escape_raw_controls(text));
  } catch (const json::exception& e) {
    throw Error("malformed_directive", std::string("directive is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error("malformed_directive", "directive must be a JSON object");
  auto wit = doc.find("weights");
  if (wit == doc.end()) throw Error("missing_field", "directive is missing field \"weights\"");
  if (!wit->is_object()) throw Error("malformed_directive", "\"weights\" must be an object");

  GuidanceDirective d;
  CoordinationWeights w{number_field(*wit, "align", "weights.align"),
                        number_field(*wit, "sep", "weights.sep"),
                        number_field(*wit, "coh", "weights.coh")};
  if (w.align < 0.0 || w.sep < 0.0 || w.coh < 0.0)
    throw Error("weights_off_simplex", "weights off simplex: negative component");
  const double sum = w.sum();
  if (std::abs(sum - 1.0) > 0.05 + 1e-12)
    throw Error("weights_off_simplex", "weights off simplex: sum " + std::to_string(sum));
  if (std::abs(sum - 1.0) > CoordinationWeights::kTolerance) {
    w = {w.align / sum, w.sep / sum, w.coh / sum};
    if (warnings) warnings->push_back("weights renormalized from sum " + std::to_string(sum));
  }
  d.weights = w;

  double g = number_field(doc, "gamma_human", "gamma_human");
  if (g < 0.0 || g > 1.0) {
    if (warnings) warnings->push_back("gamma_human clamped to [0, 1]");
    g = std::clamp(g, 0.0, 1.0);
  }
  d.gamma_human_hat = g;

  auto rit = doc.find("rationale");
  if (rit == doc.end()) throw Error("missing_field", "directive is missing field \"rationale\"");
  if (!rit->is_string()) throw Error("malformed_directive", "\"rationale\" must be a string");
  d.rationale = rit->get<std::string>();

  // Optional bookkeeping fields written by serialize_directive.
  if (auto it = doc.find("mode"); it != doc.end() && it->is_string()) d.mode = parse_mode(*it);
  if (auto it = doc.find("issued_at"); it != doc.end() && it->is_number_integer())
    d.issued_at = it->get<int>();
  if (auto it = doc.find("ttl_steps"); it != doc.end() && it->is_number_integer())
    d.ttl_steps = it->get<int>();
  if (auto it = doc.find("tag"); it != doc.end() && it->is_string()) d.tag = parse_event_kind(*it);
  if (auto it = doc.find("severity"); it != doc.end() && it->is_number())
    d.severity = std::clamp(it->get<double>(), 0.0, 1.0);
  d.weights.validate();
  return d;
}

std::string serialize_directive(const GuidanceDirective& d) {
  json doc = {
      {"weights", {{"align", d.weights.align}, {"sep", d.weights.sep}, {"coh", d.weights.coh}}},
      {"gamma_human", d.gamma_human_hat},
      {"rationale", d.rationale},
      {"mode", to_string(d.mode)},
      {"issued_at", d.issued_at},
      {"ttl_steps", d.ttl_steps},
      {"tag", to_string(d.tag)},
      {"severity", d.severity},
  };
  return doc.dump();
}

double update_efficiency_estimate(double alpha_nominal, double gamma_env,
                                  const GuidanceDirective* directive, double epsilon_floor) {
  const double g = directive ? directive->gamma_human_hat : 0.0;
  return channel_efficiency(alpha_nominal, gamma_env, g, epsilon_floor);
}

void RewardConfig::validate() const {
  if (flood_penalty_scale < 0.0 || supply_cap < 0.0 || eco_cap < 0.0 || op_cost_weight < 0.0 ||
      drawdown_margin_m <= 0.0)
    throw Error("invalid_reward", "reward scales must be nonnegative");
  for (double g : mode_gain)
    if (g < 0.0) throw Error("invalid_reward", "mode gains must be nonnegative");
}

double event_alignment_score(EventKind tag, double h, const ReservoirNode& node,
                             double margin) {
  if (is_flood_like(tag)) return std::clamp((node.h_safe - margin - h) / margin, -1.0, 1.0);
  if (tag == EventKind::kDrought || tag == EventKind::kHeatwave) {
    if (h > node.h_safe) return -1.0;
    return std::clamp((h - node.h_min) / (node.h_safe - node.h_min), 0.0, 1.0);
  }
  return 0.0;
}

RewardTerms compute_reward(const ReservoirNode& node, double h_next, double release_total,
                           double demand, double eco_share,
                           const GuidanceDirective* directive, const RewardConfig& config) {
  RewardTerms r;
  if (h_next > node.h_safe) r.safety = -config.flood_penalty_scale * node.flood_weight;
  r.supply = demand > 0.0 ? std::min(config.supply_cap, release_total / demand) : config.supply_cap;
  r.eco = eco_share > 0.0 ? std::min(config.eco_cap, release_total / eco_share) : config.eco_cap;
  r.shaped = -config.op_cost_weight * node.op_cost * release_total;
  if (directive && directive->tag != EventKind::kNone) {
    const double gain = config.mode_gain[static_cast<std::size_t>(directive->mode)];
    r.shaped += gain * directive->severity *
                event_alignment_score(directive->tag, h_next, node, config.drawdown_margin_m);
  }
  return r;
}

std::string context_summary(int step, Mode mode, std::span<const ContextEvent> pending) {
  json events = json::array();
  for (const auto& e : pending)
    events.push_back({{"t", e.t},
                      {"kind", to_string(e.kind)},
                      {"severity", e.severity},
                      {"duration", e.duration},
                      {"region", e.region},
                      {"text", e.text}});
  return json{{"step", step}, {"mode", to_string(mode)}, {"events", events}}.dump();
}

std::string RulebookProvider::request(const std::string&, Mode mode,
                                      std::span<const ContextEvent> pending, int step) {
  return serialize_directive(translate_context(pending, mode, *rulebook_, step, timings_));
}

HttpProvider::HttpProvider(std::string url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  std::string rest = url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  else if (rest.find("://") != std::string::npos)
    throw Error("invalid_provider", "only http:// provider URLs are supported: " + url);
  const auto slash = rest.find('/');
  if (slash != std::string::npos) {
    path_ = rest.substr(slash);
    rest = rest.substr(0, slash);
  }
  const auto colon = rest.rfind(':');
  if (colon != std::string::npos) {
    port_ = std::atoi(rest.c_str() + colon + 1);
    rest = rest.substr(0, colon);
  }
  host_ = rest;
  if (host_.empty() || port_ <= 0) throw Error("invalid_provider", "bad provider URL: " + url);
}

std::string HttpProvider::request(const std::string& summary, Mode, std::span<const ContextEvent>,
                                  int) {
  httplib::Client cli(host_, port_);
  const auto secs = static_cast<time_t>(timeout_.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout_.count() % 1000) * 1000);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  auto res = cli.Post(path_, summary, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
      throw Error("provider_timeout", "guidance provider timed out: " + httplib::to_string(err));
    throw Error("provider_unreachable", "guidance provider failed: " + httplib::to_string(err));
  }
  if (res->status != 200)
    throw Error("provider_unreachable", "guidance provider returned HTTP " +
                                            std::to_string(res->status));
  return res->body;
}

GuidanceClient::GuidanceClient(std::shared_ptr<GuidanceProvider> provider,
                               const Rulebook& rulebook, ModeTimings timings)
    : provider_(std::move(provider)), rulebook_(&rulebook), timings_(timings) {}

GuidanceDirective GuidanceClient::fetch(int step, Mode mode, std::span<const ContextEvent> pending) {
  const ContextEvent* top = dominant_event(pending);
  auto stamp = [&](GuidanceDirective d) {
    d.mode = mode;
    d.issued_at = step;
    d.ttl_steps = timings_.ttl_steps(mode);
    d.tag = top ? top->kind : EventKind::kNone;
    d.severity = top ? top->severity : 0.0;
    return d;
  };
  try {
    std::vector<std::string> warnings;
    GuidanceDirective d =
        parse_directive(provider_->request(context_summary(step, mode, pending), mode, pending, step),
                        &warnings);
    for (auto& w : warnings) log_.push_back("step " + std::to_string(step) + ": " + w);
    d = stamp(d);
    cached_ = d;
    return d;
  } catch (const Error& e) {
    ++fallbacks_;
    log_.push_back("step " + std::to_string(step) + ": provider failed (" + e.code() + "), fallback");
  }
  if (mode == Mode::kOperational) {
    // Pre-computed emergency response; no provider round trip.
    GuidanceDirective d = translate_context(pending, mode, *rulebook_, step, timings_);
    if (!top) d.weights = kEmergencyWeights;
    return d;
  }
  if (cached_) return stamp(*cached_);
  GuidanceDirective d = stamp(GuidanceDirective{});
  d.weights = kEmergencyWeights;
  d.rationale = "pre-computed emergency weights";
  return d;
}

std::shared_ptr<GuidanceProvider> default_provider(const Rulebook& rulebook,
                                                   const ModeTimings& timings,
                                                   std::chrono::milliseconds timeout) {
  if (const char* url = std::getenv(kGuidanceUrlEnv); url && *url)
    return std::make_shared<HttpProvider>(url, timeout);
  return std::make_shared<RulebookProvider>(rulebook, timings);
}

const GuidanceDirective& GuidanceLoop::advance(int step, std::span<const ContextEvent> pending) {
  const ModeDecision m = select_mode(step, pending, current_ ? &*current_ : nullptr, timings_);
  if (m.refresh) {
    GuidanceDirective d = client_->fetch(step, m.mode, pending);
    d.weights.validate();
    current_ = d;
    history_.push_back(d);
  }
  return *current_;
}

}  // namespace rflock
