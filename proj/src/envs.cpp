#include "dsqn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dsqn/error.hpp"
#include "dsqn/rng.hpp"

namespace dsqn::envs {

std::string_view to_string(EnvKind kind) {
  return kind == EnvKind::CartPole ? "cartpole" : "acrobot";
}

EnvKind parse_env_kind(std::string_view name) {
  if (name == "cartpole") return EnvKind::CartPole;
  if (name == "acrobot") return EnvKind::Acrobot;
  throw Error(ErrorCode::InvalidConfig,
              "unknown task '" + std::string(name) + "' (expected cartpole or acrobot)");
}

int observation_size(EnvKind kind) { return kind == EnvKind::CartPole ? 4 : 6; }
int action_count(EnvKind kind) { return kind == EnvKind::CartPole ? 2 : 3; }
int max_steps(EnvKind kind) {
  return kind == EnvKind::CartPole ? cartpole::kMaxSteps : acrobot::kMaxSteps;
}
double reward_ceiling(EnvKind kind) {
  return kind == EnvKind::CartPole ? cartpole::kMaxSteps : -1.0;
}
double reward_floor(EnvKind kind) {
  return kind == EnvKind::CartPole ? 0.0 : -static_cast<double>(acrobot::kMaxSteps);
}

namespace {

using State4 = std::array<double, 4>;

double wrap_angle(double x) {
  constexpr double pi = std::numbers::pi;
  constexpr double two_pi = 2.0 * pi;
  while (x > pi) x -= two_pi;
  while (x < -pi) x += two_pi;
  return x;
}

State4 cartpole_derivative_step(const State4& s, int action) {
  using namespace cartpole;
  const auto [x, x_dot, theta, theta_dot] = s;
  const double force = action == 1 ? kForce : -kForce;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) /
      (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / kTotalMass));
  const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
  return {x + kTau * x_dot, x_dot + kTau * x_acc, theta + kTau * theta_dot,
          theta_dot + kTau * theta_acc};
}

// Two-link dynamics in the Sutton & Barto formulation.
State4 acrobot_dsdt(const State4& s, double torque) {
  using namespace acrobot;
  constexpr double m1 = kLinkMass1, m2 = kLinkMass2, l1 = kLinkLength1;
  constexpr double lc1 = kCom1, lc2 = kCom2, i1 = kMoi, i2 = kMoi, g = kGravity;
  constexpr double half_pi = std::numbers::pi / 2.0;
  const auto [theta1, theta2, dtheta1, dtheta2] = s;

  const double d1 = m1 * lc1 * lc1 +
                    m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * std::cos(theta2)) + i1 + i2;
  const double d2 = m2 * (lc2 * lc2 + l1 * lc2 * std::cos(theta2)) + i2;
  const double phi2 = m2 * lc2 * g * std::cos(theta1 + theta2 - half_pi);
  const double phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * std::sin(theta2) -
                      2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * std::sin(theta2) +
                      (m1 * lc1 + m2 * l1) * g * std::cos(theta1 - half_pi) + phi2;
  const double ddtheta2 =
      (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * std::sin(theta2) - phi2) /
      (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
  const double ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
  return {dtheta1, dtheta2, ddtheta1, ddtheta2};
}

State4 axpy(const State4& y, double h, const State4& k) {
  return {y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]};
}

State4 acrobot_rk4(const State4& s, double torque) {
  constexpr double dt = acrobot::kDt;
  const State4 k1 = acrobot_dsdt(s, torque);
  const State4 k2 = acrobot_dsdt(axpy(s, dt / 2.0, k1), torque);
  const State4 k3 = acrobot_dsdt(axpy(s, dt / 2.0, k2), torque);
  const State4 k4 = acrobot_dsdt(axpy(s, dt, k3), torque);
  State4 out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

}  // namespace

bool acrobot::goal_reached(const std::array<double, 4>& s) {
  return -std::cos(s[0]) - std::cos(s[1] + s[0]) > 1.0;
}

Observation observe(EnvKind kind, const EnvState& state) {
  const auto& s = state.s;
  if (kind == EnvKind::CartPole) return {s[0], s[1], s[2], s[3]};
  return {std::cos(s[0]), std::sin(s[0]), std::cos(s[1]), std::sin(s[1]), s[2], s[3]};
}

Reset env_reset(EnvKind kind, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = kind == EnvKind::CartPole ? 0.05 : 0.1;
  EnvState state;
  for (double& v : state.s) v = rng.uniform(-bound, bound);
  return {state, observe(kind, state)};
}

Step env_step(EnvKind kind, const EnvState& state, int action) {
  if (action < 0 || action >= action_count(kind)) {
    throw Error(ErrorCode::InvalidAction, "action " + std::to_string(action) +
                                              " out of range for " + std::string(to_string(kind)));
  }
  if (state.done()) {
    throw Error(ErrorCode::InvalidConfig, "env_step called on a finished episode");
  }

  EnvState next = state;
  next.step_count = state.step_count + 1;
  StepResult result;

  if (kind == EnvKind::CartPole) {
    next.s = cartpole_derivative_step(state.s, action);
    next.terminal = std::abs(next.s[2]) > cartpole::kAngleLimit ||
                    std::abs(next.s[0]) > cartpole::kTrackLimit;
    result.reward = next.terminal ? 0.0 : 1.0;
    next.truncated = !next.terminal && next.step_count >= cartpole::kMaxSteps;
  } else {
    State4 s = acrobot_rk4(state.s, static_cast<double>(action - 1));
    s[0] = wrap_angle(s[0]);
    s[1] = wrap_angle(s[1]);
    s[2] = std::clamp(s[2], -acrobot::kMaxVel1, acrobot::kMaxVel1);
    s[3] = std::clamp(s[3], -acrobot::kMaxVel2, acrobot::kMaxVel2);
    next.s = s;
    next.terminal = acrobot::goal_reached(s);
    result.reward = next.terminal ? 0.0 : -1.0;
    next.truncated = !next.terminal && next.step_count >= acrobot::kMaxSteps;
  }

  result.observation = observe(kind, next);
  result.terminal = next.terminal;
  result.truncated = next.truncated;
  return {next, std::move(result)};
}

Observation Environment::reset(std::uint64_t seed) {
  auto r = env_reset(kind_, seed);
  state_ = r.state;
  return std::move(r.observation);
}

StepResult Environment::step(int action) {
  auto r = env_step(kind_, state_, action);
  state_ = r.state;
  return std::move(r.result);
}

}  // namespace dsqn::envs
