#include "tracklearn/vehicle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace tracklearn {

void VehicleParams::validate() const {
  if (!(m > 0.0)) throw std::domain_error("VehicleParams: m must be > 0");
  if (!(L > 0.0)) throw std::domain_error("VehicleParams: L must be > 0");
  if (!(I_z > 0.0)) throw std::domain_error("VehicleParams: I_z must be > 0");
  if (!(C_f > 0.0) || !(C_r > 0.0))
    throw std::domain_error("VehicleParams: cornering stiffness must be > 0");
  if (!(L_r > 0.0 && L_r < L)) throw std::domain_error("VehicleParams: need 0 < L_r < L");
  if (std::abs(L_f + L_r - L) > 1e-9 * L)
    throw std::domain_error("VehicleParams: L_f + L_r != L");
  if (!(susp_gain > 0.0 && susp_gain <= 2.0))
    throw std::domain_error("VehicleParams: susp_gain must be in (0, 2]");
  if (delay_steps < 0 || delay_steps > 5)
    throw std::domain_error("VehicleParams: delay_steps must be in [0, 5]");
  if (!(delta_max > 0.0)) throw std::domain_error("VehicleParams: delta_max must be > 0");
  if (!(ddelta_max > 0.0)) throw std::domain_error("VehicleParams: ddelta_max must be > 0");
}

const char* to_string(ModelTier tier) { return tier == ModelTier::ST ? "st" : "hf"; }

ModelTier tier_from_string(const std::string_view s) {
  if (s == "st") return ModelTier::ST;
  if (s == "hf") return ModelTier::HF;
  throw std::domain_error("unknown model tier: " + std::string(s));
}

double beta(const VehicleParams& params, double delta) {
  if (!(std::abs(delta) < kPi / 2.0))
    throw std::domain_error("beta: |delta| must be < pi/2");
  return std::atan((params.L_r / params.L) * std::tan(delta));
}

VehicleState step_kinematic(const VehicleState& state, const VehicleParams& params, double v_cmd,
                            double delta, double dt) {
  if (!(dt > 0.0)) throw std::domain_error("step_kinematic: dt must be > 0");
  if (std::abs(delta) > params.delta_max + 1e-12)
    throw std::domain_error("step_kinematic: |delta| exceeds delta_max");

  const double b = beta(params, delta);
  // theta_dot = v / R_c with R_c = L / (tan(delta) cos(beta)); zero when delta = 0.
  const double omega = v_cmd * std::tan(delta) * std::cos(b) / params.L;
  const double course = b;  // velocity direction relative to the chassis

  auto deriv = [&](double theta, double& dx, double& dy, double& dth) {
    dx = v_cmd * std::cos(theta + course);
    dy = v_cmd * std::sin(theta + course);
    dth = omega;
  };

  double x = state.pose.x, y = state.pose.y, th = state.pose.theta;
  double k1x, k1y, k1t, k2x, k2y, k2t, k3x, k3y, k3t, k4x, k4y, k4t;
  deriv(th, k1x, k1y, k1t);
  deriv(th + 0.5 * dt * k1t, k2x, k2y, k2t);
  deriv(th + 0.5 * dt * k2t, k3x, k3y, k3t);
  deriv(th + dt * k3t, k4x, k4y, k4t);
  x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
  y += dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
  th += dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);

  VehicleState out;
  out.pose = Pose2(x, y, wrap_angle(th));
  out.v_x = v_cmd;
  out.v_y = 0.0;
  out.r_yaw = omega;
  out.delta = delta;
  return out;
}

namespace {

constexpr double kVLow = 0.5;        // m/s, low-speed blending threshold
constexpr double kLowSpeedTau = 0.1; // s, pull toward kinematic relations below kVLow

struct DynState {
  double x, y, th, vx, vy, r;
};

DynState dyn_deriv(const DynState& s, const VehicleParams& p, double a_cmd, double delta) {
  const double cf = p.susp_gain * p.C_f;
  const double cr = p.susp_gain * p.C_r;
  const double v_den = std::max(s.vx, kVLow);

  const double alpha_f = delta - std::atan2(s.vy + p.L_f * s.r, v_den);
  const double alpha_r = -std::atan2(s.vy - p.L_r * s.r, v_den);
  const double f_yf = cf * alpha_f;
  const double f_yr = cr * alpha_r;

  const double vy_dot_dyn = (f_yf * std::cos(delta) + f_yr) / p.m - s.vx * s.r;
  const double r_dot_dyn = (p.L_f * f_yf * std::cos(delta) - p.L_r * f_yr) / p.I_z;

  // Below kVLow the slip-angle model loses meaning; pull v_y and r toward
  // the kinematic relations instead and blend linearly in between.
  const double lambda = std::clamp(s.vx / kVLow, 0.0, 1.0);
  const double b = std::atan((p.L_r / p.L) * std::tan(delta));
  const double vy_kin = s.vx * std::tan(b);
  const double r_kin = s.vx * std::tan(delta) / p.L;
  const double vy_dot_kin = (vy_kin - s.vy) / kLowSpeedTau;
  const double r_dot_kin = (r_kin - s.r) / kLowSpeedTau;

  DynState d;
  d.x = s.vx * std::cos(s.th) - s.vy * std::sin(s.th);
  d.y = s.vx * std::sin(s.th) + s.vy * std::cos(s.th);
  d.th = s.r;
  d.vx = a_cmd;
  d.vy = lambda * vy_dot_dyn + (1.0 - lambda) * vy_dot_kin;
  d.r = lambda * r_dot_dyn + (1.0 - lambda) * r_dot_kin;
  return d;
}

}  // namespace

VehicleState step_dynamic(const VehicleState& state, const VehicleParams& params, double a_cmd,
                          double delta, double dt) {
  if (!(dt > 0.0)) throw std::domain_error("step_dynamic: dt must be > 0");
  if (std::abs(delta) > params.delta_max + 1e-12)
    throw std::domain_error("step_dynamic: |delta| exceeds delta_max");

  // Sub-step count: at least 5, extended when the tire dynamics get stiff
  // (explicit RK4 needs h * |lambda| < ~2.8; use 2.0 for margin). The
  // estimate only depends on (state, params, inputs), keeping steps
  // deterministic.
  const double cf = params.susp_gain * params.C_f;
  const double cr = params.susp_gain * params.C_r;
  const double v_end = state.v_x + a_cmd * dt;
  const double v_eff = std::max(kVLow, std::min(state.v_x, v_end));
  const double lam_vy = (cf + cr) / (params.m * v_eff);
  const double lam_r =
      (params.L_f * params.L_f * cf + params.L_r * params.L_r * cr) / (params.I_z * v_eff);
  const double lam = std::max({lam_vy, lam_r, 1.0 / kLowSpeedTau});
  const int n_sub = std::max(5, static_cast<int>(std::ceil(dt * lam / 2.0)));
  const double h = dt / n_sub;

  DynState s{state.pose.x, state.pose.y, state.pose.theta, state.v_x, state.v_y, state.r_yaw};
  for (int i = 0; i < n_sub; ++i) {
    const DynState k1 = dyn_deriv(s, params, a_cmd, delta);
    DynState s2{s.x + 0.5 * h * k1.x, s.y + 0.5 * h * k1.y, s.th + 0.5 * h * k1.th,
                s.vx + 0.5 * h * k1.vx, s.vy + 0.5 * h * k1.vy, s.r + 0.5 * h * k1.r};
    const DynState k2 = dyn_deriv(s2, params, a_cmd, delta);
    DynState s3{s.x + 0.5 * h * k2.x, s.y + 0.5 * h * k2.y, s.th + 0.5 * h * k2.th,
                s.vx + 0.5 * h * k2.vx, s.vy + 0.5 * h * k2.vy, s.r + 0.5 * h * k2.r};
    const DynState k3 = dyn_deriv(s3, params, a_cmd, delta);
    DynState s4{s.x + h * k3.x, s.y + h * k3.y, s.th + h * k3.th,
                s.vx + h * k3.vx, s.vy + h * k3.vy, s.r + h * k3.r};
    const DynState k4 = dyn_deriv(s4, params, a_cmd, delta);
    s.x += h / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x);
    s.y += h / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y);
    s.th += h / 6.0 * (k1.th + 2.0 * k2.th + 2.0 * k3.th + k4.th);
    s.vx += h / 6.0 * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx);
    s.vy += h / 6.0 * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy);
    s.r += h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r);
    if (s.vx < 0.0) s.vx = 0.0;
  }

  VehicleState out;
  out.pose = Pose2(s.x, s.y, wrap_angle(s.th));
  out.v_x = s.vx;
  out.v_y = s.vy;
  out.r_yaw = s.r;
  out.delta = delta;
  return out;
}

DelayQueue make_delay_queue(int delay_steps) {
  return DelayQueue(static_cast<std::size_t>(delay_steps), 0.0);
}

SteeringResult apply_steering(double prev_delta, double ddelta_cmd, const VehicleParams& params,
                              DelayQueue queue, double dt) {
  const double cmd = std::clamp(ddelta_cmd, -params.ddelta_max, params.ddelta_max);
  queue.push_back(cmd);
  const double rate = queue.front();
  queue.pop_front();

  const double delta =
      std::clamp(prev_delta + rate * dt, -params.delta_max, params.delta_max);

  SteeringResult out;
  out.delta = delta;
  out.ddelta_applied = (delta - prev_delta) / dt;  // rate after angle-limit clipping
  out.queue = std::move(queue);
  return out;
}

double pd_speed_controller(double v_x, double v_ref, double v_ref_prev, double v_x_prev,
                           const PdGains& gains, double dt) {
  if (!(dt > 0.0)) throw std::domain_error("pd_speed_controller: dt must be > 0");
  const double e = v_ref - v_x;
  const double e_prev = v_ref_prev - v_x_prev;
  const double a = gains.k_p * e + gains.k_d * (e - e_prev) / dt;
  return std::clamp(a, -3.0, 3.0);
}

void RandomizationConfig::validate() const {
  const double fr[] = {frac_m, frac_L, frac_lr_ratio, frac_C_f, frac_C_r, frac_susp, frac_I_z};
  for (double f : fr) {
    if (!(f >= 0.0 && f <= 0.3))
      throw std::domain_error("RandomizationConfig: std fractions must be in [0, 0.3]");
  }
  if (delay_choices.empty())
    throw std::domain_error("RandomizationConfig: delay_choices must be nonempty");
  for (int d : delay_choices) {
    if (d < 0 || d > 5)
      throw std::domain_error("RandomizationConfig: delay choices must be in [0, 5]");
  }
}

namespace {

double truncated_normal(double nominal, double frac, Rng& rng) {
  const double v = rng.normal(nominal, frac * nominal);
  const double lo = nominal * (1.0 - 3.0 * frac);
  const double hi = nominal * (1.0 + 3.0 * frac);
  return std::clamp(v, lo, hi);
}

}  // namespace

VehicleParams randomize_params(const VehicleParams& nominal, const RandomizationConfig& cfg,
                               Rng& rng) {
  nominal.validate();
  cfg.validate();

  VehicleParams p = nominal;
  // Fixed sampling order; every sampler consumes a fixed number of draws.
  p.m = truncated_normal(nominal.m, cfg.frac_m, rng);
  p.L = truncated_normal(nominal.L, cfg.frac_L, rng);
  const double ratio = truncated_normal(nominal.L_r / nominal.L, cfg.frac_lr_ratio, rng);
  p.C_f = truncated_normal(nominal.C_f, cfg.frac_C_f, rng);
  p.C_r = truncated_normal(nominal.C_r, cfg.frac_C_r, rng);
  p.susp_gain = truncated_normal(nominal.susp_gain, cfg.frac_susp, rng);
  p.I_z = truncated_normal(nominal.I_z, cfg.frac_I_z, rng);
  p.delay_steps = cfg.delay_choices[rng.uniform_index(cfg.delay_choices.size())];

  p.L_r = ratio * p.L;
  p.L_f = p.L - p.L_r;
  p.validate();
  return p;
}

}  // namespace tracklearn
