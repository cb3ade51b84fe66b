#include "tracklearn/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "tracklearn/trajectory_io.hpp"

namespace tracklearn {

const std::array<std::string_view, Observation::kSize>& Observation::channel_names() {
  static const std::array<std::string_view, kSize> names = {
      "v_x",        "eps_theta",  "eps_d",      "d_eps_theta", "d_eps_d",   "pred_eps_d_2",
      "pred_eps_d_3", "pred_eps_d_4", "pred_eps_d_5", "pred_eps_d_6", "pred_eps_d_7",
      "pred_eps_d_8", "pred_eps_d_9", "pred_eps_d_10", "delta",     "ddelta_prev"};
  return names;
}

std::string Observation::layout_id() {
  std::string id;
  for (const auto& n : channel_names()) {
    if (!id.empty()) id += ',';
    id += n;
  }
  return id;
}

void EpisodeConfig::validate() const {
  buffer.validate();
  params.validate();
  if (buffer.points.size() < static_cast<std::size_t>(kPredictionHorizon) + 2)
    throw std::domain_error("EpisodeConfig: path shorter than the prediction horizon");
  if (!(eps_d_max > 0.0)) throw std::domain_error("EpisodeConfig: eps_d_max must be > 0");
  if (!(eps_theta_max > 0.0 && eps_theta_max <= kPi))
    throw std::domain_error("EpisodeConfig: eps_theta_max must be in (0, pi]");
  if (max_steps <= 0) throw std::domain_error("EpisodeConfig: max_steps must be > 0");
  for (double s : obs_noise_std) {
    if (!(s >= 0.0)) throw std::domain_error("EpisodeConfig: obs noise std must be >= 0");
  }
}

const char* to_string(DoneReason r) {
  switch (r) {
    case DoneReason::None: return "none";
    case DoneReason::PathEnd: return "path_end";
    case DoneReason::DeviationExceeded: return "deviation_exceeded";
    case DoneReason::HeadingExceeded: return "heading_exceeded";
    case DoneReason::MaxSteps: return "max_steps";
  }
  return "none";
}

double reward(double eps_theta, double eps_d, double action_norm, double eps_theta_max,
              double eps_d_max) {
  const double f_theta = std::clamp(1.0 - std::abs(eps_theta) / eps_theta_max, 0.0, 1.0);
  const double f_d = std::clamp(1.0 - std::abs(eps_d) / eps_d_max, 0.0, 1.0);
  const double f_a = std::clamp(1.0 - std::abs(action_norm), 0.0, 1.0);
  return f_theta * f_d * f_a;
}

std::vector<double> predict_lateral(const VehicleState& state, const PathBuffer& buffer,
                                    const VehicleParams& params, std::optional<std::size_t> hint,
                                    int horizon, double dt) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon));
  VehicleState veh = state;
  std::size_t idx = hint ? *hint : closest_next_point(buffer, veh.pose);
  const double v = state.v_x;
  const double delta = state.delta;
  for (int k = 0; k < horizon; ++k) {
    veh = step_kinematic(veh, params, v, delta, dt);
    idx = closest_next_point(buffer, veh.pose, idx);
    out.push_back(error_state(buffer, veh.pose, idx).eps_d);
  }
  return out;
}

Env::Env(EpisodeConfig cfg, Rng& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t n = cfg_.buffer.points.size();
  const std::size_t start = rng.uniform_index(n / 2);
  const PathPoint& ref = cfg_.buffer.points[start];

  // Left-normal of the reference heading is (-sin, cos).
  const double nx = -std::sin(ref.pose.theta);
  const double ny = std::cos(ref.pose.theta);
  state_.pose = Pose2(ref.pose.x + cfg_.init_eps_d * nx, ref.pose.y + cfg_.init_eps_d * ny,
                      wrap_angle(ref.pose.theta + cfg_.init_eps_theta));
  state_.v_x = ref.speed;
  state_.v_y = 0.0;
  state_.r_yaw = 0.0;
  state_.delta = 0.0;

  queue_ = make_delay_queue(cfg_.params.delay_steps);
  err_ = error_state(cfg_.buffer, state_.pose, closest_next_point(cfg_.buffer, state_.pose, start));
  v_ref_prev_ = err_.ref_speed;
  v_x_prev_ = state_.v_x;
  noise_rng_ = rng.child();
  last_obs_ = build_observation();
}

StepResult Env::step(double action_norm) {
  if (done_) throw std::logic_error("Env::step called after episode end");
  const double action = std::clamp(action_norm, -1.0, 1.0);

  // Steering: scale to rad/s, saturate, delay, integrate.
  const SteeringResult steer =
      apply_steering(state_.delta, action * cfg_.params.ddelta_max, cfg_.params, std::move(queue_), kTick);
  queue_ = steer.queue;

  // Longitudinal: PD on the reference speed of the current closest point.
  const double v_ref = err_.ref_speed;
  const double a_cmd =
      pd_speed_controller(state_.v_x, v_ref, v_ref_prev_, v_x_prev_, cfg_.pd_gains, kTick);
  v_ref_prev_ = v_ref;
  v_x_prev_ = state_.v_x;

  if (cfg_.tier == ModelTier::ST) {
    const double v_cmd = std::max(0.0, state_.v_x + a_cmd * kTick);
    state_ = step_kinematic(state_, cfg_.params, v_cmd, steer.delta, kTick);
  } else {
    state_ = step_dynamic(state_, cfg_.params, a_cmd, steer.delta, kTick);
  }

  const double prev_eps_d = err_.eps_d;
  const double prev_eps_theta = err_.eps_theta;
  const std::size_t idx = closest_next_point(cfg_.buffer, state_.pose, err_.ref_index);
  err_ = error_state(cfg_.buffer, state_.pose, idx);
  d_eps_d_ = (err_.eps_d - prev_eps_d) / kTick;
  d_eps_theta_ = wrap_angle(err_.eps_theta - prev_eps_theta) / kTick;
  ddelta_prev_ = steer.ddelta_applied;
  ++step_count_;

  StepResult res;
  res.reward = reward(err_.eps_theta, err_.eps_d, action, cfg_.eps_theta_max, cfg_.eps_d_max);

  if (std::abs(err_.eps_d) > cfg_.eps_d_max) {
    done_ = true;
    done_reason_ = DoneReason::DeviationExceeded;
  } else if (std::abs(err_.eps_theta) > cfg_.eps_theta_max) {
    done_ = true;
    done_reason_ = DoneReason::HeadingExceeded;
  } else if (err_.ref_index + 1 == cfg_.buffer.points.size()) {
    done_ = true;
    done_reason_ = DoneReason::PathEnd;
  } else if (step_count_ >= cfg_.max_steps) {
    done_ = true;
    done_reason_ = DoneReason::MaxSteps;
  }

  last_obs_ = build_observation();
  res.obs = last_obs_;
  res.done = done_;
  res.done_reason = done_reason_;
  res.info = err_;
  return res;
}

Observation Env::build_observation() {
  std::array<double, Observation::kSize> raw{};
  raw[0] = state_.v_x;
  raw[1] = err_.eps_theta;
  raw[2] = err_.eps_d;
  raw[3] = d_eps_theta_;
  raw[4] = d_eps_d_;
  const std::vector<double> pred =
      predict_lateral(state_, cfg_.buffer, cfg_.params, err_.ref_index);
  // Prediction step 1 is dropped (nearly redundant with eps_d + d_eps_d);
  // channels carry steps 2..10.
  for (int k = 0; k < 9; ++k) raw[5 + k] = pred[static_cast<std::size_t>(k) + 1];
  raw[14] = state_.delta;
  raw[15] = ddelta_prev_;

  // Per-channel sensor noise, added in raw units before normalization. The
  // stream is always consumed so episode replay does not depend on the
  // noise configuration.
  for (int i = 0; i < Observation::kSize; ++i) raw[i] += cfg_.obs_noise_std[i] * noise_rng_.normal();

  const double norm[Observation::kSize] = {
      15.0,           cfg_.eps_theta_max, cfg_.eps_d_max, 2.0, 2.0,
      cfg_.eps_d_max, cfg_.eps_d_max,     cfg_.eps_d_max, cfg_.eps_d_max,
      cfg_.eps_d_max, cfg_.eps_d_max,     cfg_.eps_d_max, cfg_.eps_d_max,
      cfg_.eps_d_max, cfg_.params.delta_max, cfg_.params.ddelta_max};
  Observation obs;
  for (int i = 0; i < Observation::kSize; ++i) obs.values[i] = raw[i] / norm[i];
  return obs;
}

TraceRow make_trace_row(const Env& env, double action, const StepResult& res) {
  TraceRow row;
  row.step = env.steps();
  row.t = env.time();
  row.x = env.vehicle().pose.x;
  row.y = env.vehicle().pose.y;
  row.theta = env.vehicle().pose.theta;
  row.v_x = env.vehicle().v_x;
  row.delta = env.vehicle().delta;
  row.action = action;
  row.eps_d = res.info.eps_d;
  row.eps_theta = res.info.eps_theta;
  row.reward = res.reward;
  row.done_reason = res.done_reason;
  return row;
}

void write_trace_csv(const std::filesystem::path& file, const std::vector<TraceRow>& rows) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot open for writing: " + file.string());
  os << "step,t,x,y,theta,v_x,delta,action,eps_d,eps_theta,reward,done_reason\n";
  for (const TraceRow& r : rows) {
    os << r.step << ',' << format_double(r.t) << ',' << format_double(r.x) << ','
       << format_double(r.y) << ',' << format_double(r.theta) << ',' << format_double(r.v_x)
       << ',' << format_double(r.delta) << ',' << format_double(r.action) << ','
       << format_double(r.eps_d) << ',' << format_double(r.eps_theta) << ','
       << format_double(r.reward) << ',' << to_string(r.done_reason) << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + file.string());
}

}  // namespace tracklearn
