#pragma once

#include <array>
#include <filesystem>
#include <string_view>
#include <vector>

#include "tracklearn/geometry.hpp"
#include "tracklearn/rng.hpp"
#include "tracklearn/vehicle.hpp"

namespace tracklearn {

/// The 16-element error-frame state vector fed to the policy. Channel order
/// is a versioned contract (checkpoints refuse to load across changes).
struct Observation {
  static constexpr int kSize = 16;
  std::array<double, kSize> values{};

  static const std::array<std::string_view, kSize>& channel_names();
  /// Stable one-line fingerprint of the layout, stored in checkpoints.
  static std::string layout_id();
};

/// Prediction horizon of the single-track lateral-deviation preview.
inline constexpr int kPredictionHorizon = 10;

struct EpisodeConfig {
  ModelTier tier = ModelTier::ST;
  PathBuffer buffer;
  double init_eps_d = 0.0;      // m
  double init_eps_theta = 0.0;  // rad
  VehicleParams params;
  int max_steps = 1200;
  double eps_d_max = 2.0;          // m
  double eps_theta_max = kPi / 2;  // rad
  std::array<double, Observation::kSize> obs_noise_std{};  // raw units, pre-normalization
  PdGains pd_gains;

  void validate() const;
};

enum class DoneReason { None, PathEnd, DeviationExceeded, HeadingExceeded, MaxSteps };

const char* to_string(DoneReason r);

struct StepResult {
  Observation obs;
  double reward = 0.0;  // in [0, 1]
  bool done = false;
  DoneReason done_reason = DoneReason::None;
  ErrorState info;
};

/// Reward of Eq-style form: product of (1 - |eps_theta|/max), (1 - |eps_d|/max)
/// and (1 - |action|), each factor clamped to [0, 1].
double reward(double eps_theta, double eps_d, double action_norm, double eps_theta_max,
              double eps_d_max);

/// Roll the kinematic single-track forward `horizon` steps holding speed and
/// steering constant (whatever the env's tier is) and report the lateral
/// deviation against the buffer at each step.
std::vector<double> predict_lateral(const VehicleState& state, const PathBuffer& buffer,
                                    const VehicleParams& params,
                                    std::optional<std::size_t> hint = std::nullopt,
                                    int horizon = kPredictionHorizon, double dt = kTick);

/// One episode of the path-following MDP. Plain value type: copying the env
/// snapshots the full episode state (used for replay/resume checks).
class Env {
 public:
  /// Reset: places the vehicle at a random reference point in the first half
  /// of the path, offset laterally by init_eps_d along the reference
  /// left-normal and rotated by init_eps_theta.
  Env(EpisodeConfig cfg, Rng& rng);

  StepResult step(double action_norm);

  const Observation& last_observation() const { return last_obs_; }
  const ErrorState& last_error() const { return err_; }
  const VehicleState& vehicle() const { return state_; }
  const EpisodeConfig& config() const { return cfg_; }
  int steps() const { return step_count_; }
  double time() const { return step_count_ * kTick; }
  bool done() const { return done_; }
  DoneReason done_reason() const { return done_reason_; }

 private:
  Observation build_observation();

  EpisodeConfig cfg_;
  VehicleState state_;
  DelayQueue queue_;
  ErrorState err_;
  double d_eps_d_ = 0.0;
  double d_eps_theta_ = 0.0;
  double ddelta_prev_ = 0.0;
  double v_ref_prev_ = 0.0;
  double v_x_prev_ = 0.0;
  int step_count_ = 0;
  bool done_ = false;
  DoneReason done_reason_ = DoneReason::None;
  Rng noise_rng_;
  Observation last_obs_;
};

/// One row of the episode trace CSV
/// (`step,t,x,y,theta,v_x,delta,action,eps_d,eps_theta,reward,done_reason`).
struct TraceRow {
  int step = 0;
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v_x = 0.0;
  double delta = 0.0;
  double action = 0.0;
  double eps_d = 0.0;
  double eps_theta = 0.0;
  double reward = 0.0;
  DoneReason done_reason = DoneReason::None;
};

TraceRow make_trace_row(const Env& env, double action, const StepResult& res);
void write_trace_csv(const std::filesystem::path& file, const std::vector<TraceRow>& rows);

}  // namespace tracklearn
