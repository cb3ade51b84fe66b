#pragma once

#include <deque>
#include <vector>

#include "tracklearn/geometry.hpp"
#include "tracklearn/rng.hpp"

namespace tracklearn {

/// Both tiers carry the same parameter set; the kinematic tier just ignores
/// the inertial ones.
struct VehicleParams {
  double m = 630.0;        // kg
  double L = 2.54;         // m, wheelbase
  double L_r = 1.27;       // m, rear axle -> CoG
  double L_f = 1.27;       // m, CoG -> front axle (= L - L_r)
  double I_z = 800.0;      // kg m^2, yaw inertia
  double C_f = 40000.0;    // N/rad, front cornering stiffness
  double C_r = 40000.0;    // N/rad, rear cornering stiffness
  double susp_gain = 1.0;  // (0, 2], scales effective stiffness
  int delay_steps = 0;     // actuation delay in control periods, 0..5
  double delta_max = 0.45;   // rad, steering angle limit
  double ddelta_max = 0.18;  // rad/s, steering rate limit

  void validate() const;
};

enum class ModelTier { ST, HF };

const char* to_string(ModelTier tier);
ModelTier tier_from_string(const std::string_view s);

struct VehicleState {
  Pose2 pose;
  double v_x = 0.0;    // m/s, body longitudinal speed, >= 0
  double v_y = 0.0;    // m/s, body lateral speed (0 for the kinematic tier)
  double r_yaw = 0.0;  // rad/s
  double delta = 0.0;  // rad, current steering angle
};

/// Kinematic side-slip angle: beta = arctan((L_r/L) tan(delta)).
double beta(const VehicleParams& params, double delta);

/// Kinematic single-track step: RK4 over dt with v and delta held constant.
VehicleState step_kinematic(const VehicleState& state, const VehicleParams& params, double v_cmd,
                            double delta, double dt);

/// Dynamic single-track step (linear tires, yaw inertia): RK4 with
/// sub-stepping; the digital-twin stand-in. Lateral dynamics blend to the
/// kinematic relations below 0.5 m/s.
VehicleState step_dynamic(const VehicleState& state, const VehicleParams& params, double a_cmd,
                          double delta, double dt);

/// FIFO actuation-delay queue of steering-rate commands, value semantics so
/// snapshots of an episode copy cleanly.
using DelayQueue = std::deque<double>;

struct SteeringResult {
  double delta = 0.0;           // rad, post-integration angle
  double ddelta_applied = 0.0;  // rad/s, rate actually realized after all clipping
  DelayQueue queue;
};

/// Saturate the commanded rate to +/- ddelta_max, push it through the delay
/// queue, integrate the popped rate and clip to the angle limit. The applied
/// rate is back-computed from the realized angle change.
SteeringResult apply_steering(double prev_delta, double ddelta_cmd, const VehicleParams& params,
                              DelayQueue queue, double dt);

DelayQueue make_delay_queue(int delay_steps);

struct PdGains {
  double k_p = 1.0;
  double k_d = 0.05;
};

/// Longitudinal PD on the speed error, output clamped to +/- 3 m/s^2.
double pd_speed_controller(double v_x, double v_ref, double v_ref_prev, double v_x_prev,
                           const PdGains& gains, double dt);

/// Per-parameter std expressed as a fraction of the nominal value. Sampled
/// values are truncated to nominal * (1 +/- 3 frac).
struct RandomizationConfig {
  double frac_m = 0.0;
  double frac_L = 0.0;
  double frac_lr_ratio = 0.0;  // randomizes the CoG location L_r/L
  double frac_C_f = 0.0;
  double frac_C_r = 0.0;
  double frac_susp = 0.0;
  double frac_I_z = 0.0;
  std::vector<int> delay_choices = {0};

  void validate() const;
};

/// Draw a physical-parameter set around the nominal one. Sampling order is
/// fixed, so a given rng state always yields the same params.
VehicleParams randomize_params(const VehicleParams& nominal, const RandomizationConfig& cfg,
                               Rng& rng);

}  // namespace tracklearn
