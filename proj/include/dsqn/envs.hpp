#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dsqn::envs {

enum class EnvKind { CartPole, Acrobot };

std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view name);

using Observation = std::vector<double>;

// CartPole: (x, x_dot, theta, theta_dot).
// Acrobot:  (theta1, theta2, theta1_dot, theta2_dot).
struct EnvState {
  std::array<double, 4> s{};
  int step_count = 0;
  bool terminal = false;
  bool truncated = false;

  bool done() const { return terminal || truncated; }
  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

struct Reset {
  EnvState state;
  Observation observation;
};

struct Step {
  EnvState state;
  StepResult result;
};

namespace cartpole {
inline constexpr double kGravity = 9.8;
inline constexpr double kCartMass = 1.0;
inline constexpr double kPoleMass = 0.1;
inline constexpr double kTotalMass = kCartMass + kPoleMass;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kPoleMassLength = kPoleMass * kHalfLength;
inline constexpr double kForce = 10.0;
inline constexpr double kTau = 0.02;
inline constexpr double kAngleLimit = 3.14159265358979323846 / 12.0;
inline constexpr double kTrackLimit = 2.4;
inline constexpr int kMaxSteps = 200;
}  // namespace cartpole

namespace acrobot {
inline constexpr double kDt = 0.2;
inline constexpr double kLinkMass1 = 1.0;
inline constexpr double kLinkMass2 = 1.0;
inline constexpr double kLinkLength1 = 1.0;
inline constexpr double kCom1 = 0.5;
inline constexpr double kCom2 = 0.5;
inline constexpr double kMoi = 1.0;
inline constexpr double kGravity = 9.8;
inline constexpr double kMaxVel1 = 4.0 * 3.14159265358979323846;
inline constexpr double kMaxVel2 = 9.0 * 3.14159265358979323846;
inline constexpr int kMaxSteps = 500;

// Tip height test: -cos(theta1) - cos(theta1 + theta2) > 1.
bool goal_reached(const std::array<double, 4>& s);
}  // namespace acrobot

int observation_size(EnvKind kind);
int action_count(EnvKind kind);
int max_steps(EnvKind kind);
// Best and worst achievable episode returns.
double reward_ceiling(EnvKind kind);
double reward_floor(EnvKind kind);

Observation observe(EnvKind kind, const EnvState& state);

Reset env_reset(EnvKind kind, std::uint64_t seed);

// Throws Error{InvalidAction} for an out-of-range action and
// Error{InvalidConfig} when stepping an already finished episode.
Step env_step(EnvKind kind, const EnvState& state, int action);

// Owns the state of one running episode.
class Environment {
 public:
  explicit Environment(EnvKind kind) : kind_(kind) {}

  EnvKind kind() const { return kind_; }
  const EnvState& state() const { return state_; }

  Observation reset(std::uint64_t seed);
  StepResult step(int action);

 private:
  EnvKind kind_;
  EnvState state_{};
};

}  // namespace dsqn::envs
