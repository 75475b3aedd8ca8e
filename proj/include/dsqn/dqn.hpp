#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dsqn/codec.hpp"
#include "dsqn/envs.hpp"
#include "dsqn/rng.hpp"
#include "dsqn/snn.hpp"

namespace dsqn::dqn {

using FloatNetwork = snn::Network<float>;

struct Transition {
  envs::Observation s;
  int a = 0;
  double r = 0.0;
  envs::Observation s_next;
  bool terminal = false;  // true environment termination only, never truncation
};

// Fixed-capacity FIFO; once full the oldest transition is overwritten.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // Logical index: 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  // Uniform sample of n distinct transitions. Throws NotEnoughSamples.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> items_;
};

struct TrainConfig {
  double gamma = 0.999;
  double learning_rate = 0.001;
  std::size_t batch_size = 128;
  std::size_t replay_capacity = 10000;
  int target_update_every = 10;  // episodes
  double eps_start = 0.5;
  double eps_end = 0.05;
  double eps_decay_steps = 2000.0;
  int episodes = 500;
  std::uint64_t seed = 0;

  // Greedy checkpoint selection: every eval_every episodes (0 disables) the
  // online network is evaluated over eval_episodes and the best one is kept.
  int eval_every = 10;
  int eval_episodes = 10;
  // Stop as soon as a checkpoint evaluation reaches this mean reward.
  std::optional<double> early_stop_reward;

  // Throws InvalidConfig.
  void validate() const;
};

struct NetConfig {
  std::vector<int> layer_sizes;
  int sim_ticks = 10;
  snn::LifParams hidden;
  double output_beta = 0.8;
  snn::SurrogateConfig surrogate;
};

// Exponential decay from eps_start toward eps_end with time constant eps_decay_steps.
double epsilon(std::int64_t step, const TrainConfig& cfg);

// Epsilon-greedy over q; greedy ties go to the lowest index.
int select_action(std::span<const double> q, double eps, Rng& rng);

// y = r for terminal transitions, otherwise r + gamma * max_a' Q(s', a'; target).
std::vector<double> td_targets(std::span<const Transition* const> batch, const FloatNetwork& target,
                               double gamma, const codec::EncoderConfig& encoder, Rng& rng);

// Adam with bias correction.
struct Adam {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<snn::Matrix<float>> m, v;

  void step(std::vector<snn::Matrix<float>>& params, const std::vector<snn::Matrix<float>>& grads);
};

struct AgentState {
  FloatNetwork online;
  FloatNetwork target;
  Adam adam;
  std::int64_t global_step = 0;
  snn::SurrogateConfig surrogate;
  snn::ForwardTrace<float> tape;  // scratch, reused across train_step calls

  explicit AgentState(FloatNetwork net, double learning_rate = 0.001,
                      snn::SurrogateConfig surr = {});
  void sync_target() { target = online; }
};

// One gradient step on mean squared TD error; gradient flows only through the
// taken action's Q-value of the online network. Returns the batch loss.
double train_step(AgentState& agent, std::span<const Transition* const> batch,
                  const TrainConfig& cfg, const codec::EncoderConfig& encoder, Rng& rng);

// Q-values of one observation (fresh rate encoding drawn from rng).
std::vector<double> q_values(snn::Simulator<float>& sim, std::span<const double> obs,
                             const codec::EncoderConfig& encoder, Rng& rng);

struct CurvePoint {
  int episode = 0;
  double reward = 0.0;
  double epsilon = 0.0;
  double loss_mean = 0.0;  // NaN when no gradient step ran during the episode
};

struct CheckpointEval {
  int episode = 0;
  double mean_reward = 0.0;
};

struct TrainResult {
  FloatNetwork best;   // best checkpoint by greedy evaluation (final net if none ran)
  FloatNetwork final;
  std::vector<CurvePoint> curve;
  std::vector<CheckpointEval> evals;
  double best_eval = 0.0;
  int best_episode = -1;
};

using ProgressFn = std::function<void(const CurvePoint&, const CheckpointEval*)>;

TrainResult train(envs::EnvKind kind, const TrainConfig& cfg, const NetConfig& net_cfg,
                  const codec::EncoderConfig& encoder, const ProgressFn& progress = {});

// Greedy closed-loop rewards of a float network, one per episode; episode i
// uses environment/encoder seeds derived from (seed, i). Episode lengths go to
// `steps` when given.
std::vector<double> evaluate_greedy(envs::EnvKind kind, const FloatNetwork& net,
                                    const codec::EncoderConfig& encoder, int episodes,
                                    std::uint64_t seed, std::vector<int>* steps = nullptr);

// CSV `episode,reward,epsilon,loss_mean`.
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

}  // namespace dsqn::dqn
