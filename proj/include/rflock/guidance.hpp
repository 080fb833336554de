#ifndef RFLOCK_GUIDANCE_HPP
#define RFLOCK_GUIDANCE_HPP

#include <array>
#include <chrono>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rflock/murmuration.hpp"
#include "rflock/network.hpp"

namespace rflock {

enum class EventKind {
  kNone = 0,
  kDrought,
  kFlood,
  kStormApproaching,
  kContamination,
  kWinterStorm,
  kHeatwave,
  kMaintenance,
  kRegulatory,
};
constexpr std::size_t kEventKindCount = 9;

const char* to_string(EventKind kind);
/// Errors: unknown_event_kind.
EventKind parse_event_kind(const std::string& name);
const std::array<EventKind, kEventKindCount>& all_event_kinds();

/// Tags where too much water is the hazard; drought-like tags are the rest.
bool is_flood_like(EventKind kind);

enum class Mode { kStrategic = 0, kTactical = 1, kOperational = 2 };
const char* to_string(Mode mode);
Mode parse_mode(const std::string& name);

struct ContextEvent {
  int t = 0;              // first step the event is pending
  EventKind kind = EventKind::kNone;
  double severity = 0.0;  // [0, 1]
  int duration = 1;       // steps
  std::string region;     // empty = whole network
  std::string text;

  bool active_at(int step) const { return step >= t && step < t + duration; }
  void validate() const;
};

struct GuidanceDirective {
  CoordinationWeights weights;
  double gamma_human_hat = 0.0;
  std::string rationale;
  Mode mode = Mode::kStrategic;
  int issued_at = 0;
  int ttl_steps = 24;
  // Dominant event the directive was derived from (drives reward shaping).
  EventKind tag = EventKind::kNone;
  double severity = 0.0;

  bool expired(int step) const { return step >= issued_at + ttl_steps; }
  void validate() const;
};

struct RulebookEntry {
  CoordinationWeights weights;
  double gamma_human_hat = 0.0;
  std::string rationale;
};

/**
 * Event × mode → weights lookup. Every kind must be covered for every mode;
 * the check runs when a rulebook is built or loaded.
 */
class Rulebook {
 public:
  using Table = std::map<std::pair<EventKind, Mode>, RulebookEntry>;

  /// Errors: rulebook_incomplete, weights_off_simplex.
  explicit Rulebook(Table table);

  static const Rulebook& builtin();
  /// JSON: {"<kind>": {"<mode>": {"weights": {...}, "gamma_human": f}}}.
  static Rulebook from_json(const std::string& text);

  const RulebookEntry& entry(EventKind kind, Mode mode) const;
  const Table& table() const { return table_; }

 private:
  Table table_;
};

struct ModeTimings {
  double dt_s = 3600.0;
  double strategic_s = 24 * 3600.0;
  double tactical_s = 4 * 3600.0;
  double operational_s = 600.0;
  double emergency_threshold = 0.7;

  int steps_for(double seconds) const;
  int ttl_steps(Mode mode) const;
};

struct ModeDecision {
  bool refresh = false;
  Mode mode = Mode::kStrategic;
};

/// Pure function of (clock, events, current directive); see README for the
/// trigger order.
ModeDecision select_mode(int step, std::span<const ContextEvent> pending,
                         const GuidanceDirective* current, const ModeTimings& timings);

/// The event that drives the directive: maximum severity, earliest start on
/// ties. Returns nullptr when nothing is pending.
const ContextEvent* dominant_event(std::span<const ContextEvent> pending);

GuidanceDirective translate_context(std::span<const ContextEvent> pending, Mode mode,
                                    const Rulebook& rulebook, int step,
                                    const ModeTimings& timings);

/// Directive wire format; γ̂ is clamped to [0, 1] (warning appended) and
/// weights within 0.05 of the simplex are renormalized.
/// Errors: malformed_directive, missing_field, weights_off_simplex.
GuidanceDirective parse_directive(const std::string& text,
                                  std::vector<std::string>* warnings = nullptr);
std::string serialize_directive(const GuidanceDirective& directive);

/// α̂ = min(1, max(ε, α_nominal (1 − γ_env − γ̂_human))); γ̂ = 0 without a
/// directive.
double update_efficiency_estimate(double alpha_nominal, double gamma_env,
                                  const GuidanceDirective* directive,
                                  double epsilon_floor = 0.1);

struct RewardConfig {
  double flood_penalty_scale = 1.0;  // multiplies each node's flood_weight
  double supply_cap = 1.0;
  double eco_cap = 1.0;
  double op_cost_weight = 1.0;       // multiplies each node's op_cost
  std::array<double, 3> mode_gain{0.5, 1.0, 2.0};  // strategic, tactical, operational
  double drawdown_margin_m = 1.0;    // flood tags reward h ≤ h_safe − margin

  void validate() const;
};

struct RewardTerms {
  double safety = 0.0;
  double supply = 0.0;
  double eco = 0.0;
  double shaped = 0.0;
  double total() const { return safety + supply + eco + shaped; }
};

/// Event-alignment score in [−1, 1]: conservation under drought-like tags,
/// drawdown under flood-like tags, 0 for none.
double event_alignment_score(EventKind tag, double h, const ReservoirNode& node,
                             double drawdown_margin_m);

/// R = r_safety + r_supply + r_eco + R_shaped for one node after a step.
/// `eco_share` is F_eco/|P_i| [m³/s]; `directive` may be null (no shaping
/// beyond the operating cost).
RewardTerms compute_reward(const ReservoirNode& node, double h_next, double release_total,
                           double demand, double eco_share,
                           const GuidanceDirective* directive, const RewardConfig& config);

/// Context summary sent to a provider (JSON object).
std::string context_summary(int step, Mode mode, std::span<const ContextEvent> pending);

/// Turns a context summary into raw directive text.
class GuidanceProvider {
 public:
  virtual ~GuidanceProvider() = default;
  /// Throws on transport failure or timeout.
  virtual std::string request(const std::string& summary, Mode mode,
                              std::span<const ContextEvent> pending, int step) = 0;
};

class RulebookProvider : public GuidanceProvider {
 public:
  explicit RulebookProvider(const Rulebook& rulebook, ModeTimings timings = {})
      : rulebook_(&rulebook), timings_(timings) {}
  std::string request(const std::string& summary, Mode mode,
                      std::span<const ContextEvent> pending, int step) override;

 private:
  const Rulebook* rulebook_;
  ModeTimings timings_;
};

/// POSTs the context summary to `url` (http://host:port/path) and returns
/// the response body. Throws provider_unreachable / provider_timeout.
class HttpProvider : public GuidanceProvider {
 public:
  HttpProvider(std::string url, std::chrono::milliseconds timeout);
  std::string request(const std::string& summary, Mode mode,
                      std::span<const ContextEvent> pending, int step) override;

 private:
  std::string host_;
  int port_ = 80;
  std::string path_ = "/";
  std::chrono::milliseconds timeout_;
};

/// Environment variable that replaces the built-in provider with HTTP.
constexpr const char* kGuidanceUrlEnv = "RFLOCK_GUIDANCE_URL";

/// Wraps a provider with validation and the fallback chain: parse failure
/// or transport error → cached directive → pre-computed emergency weights.
/// In operational mode a failure goes straight to the rulebook's
/// pre-computed operational entry for the dominant event.
class GuidanceClient {
 public:
  GuidanceClient(std::shared_ptr<GuidanceProvider> provider, const Rulebook& rulebook,
                 ModeTimings timings = {});

  GuidanceDirective fetch(int step, Mode mode, std::span<const ContextEvent> pending);

  const std::vector<std::string>& log() const { return log_; }
  std::size_t fallbacks() const { return fallbacks_; }

  static constexpr CoordinationWeights kEmergencyWeights{0.1, 0.8, 0.1};

 private:
  std::shared_ptr<GuidanceProvider> provider_;
  const Rulebook* rulebook_;
  ModeTimings timings_;
  std::optional<GuidanceDirective> cached_;
  std::vector<std::string> log_;
  std::size_t fallbacks_ = 0;
};

/// Built-in provider unless RFLOCK_GUIDANCE_URL is set.
std::shared_ptr<GuidanceProvider> default_provider(const Rulebook& rulebook,
                                                   const ModeTimings& timings,
                                                   std::chrono::milliseconds timeout =
                                                       std::chrono::milliseconds(2000));

/// Single-writer directive state advanced once per simulation step.
class GuidanceLoop {
 public:
  GuidanceLoop() = default;
  GuidanceLoop(std::shared_ptr<GuidanceClient> client, ModeTimings timings)
      : client_(std::move(client)), timings_(timings) {}

  /// Returns the directive in force for `step`.
  const GuidanceDirective& advance(int step, std::span<const ContextEvent> pending);
  const GuidanceDirective* current() const { return current_ ? &*current_ : nullptr; }
  const std::vector<GuidanceDirective>& history() const { return history_; }
  const GuidanceClient* client() const { return client_.get(); }
  void reset() {
    current_.reset();
    history_.clear();
  }

 private:
  std::shared_ptr<GuidanceClient> client_;
  ModeTimings timings_;
  std::optional<GuidanceDirective> current_;
  std::vector<GuidanceDirective> history_;
};

}  // namespace rflock

#endif  // RFLOCK_GUIDANCE_HPP
