#include "dsqn/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_set>

#include "dsqn/error.hpp"
#include "dsqn/format.hpp"

namespace dsqn::dqn {

namespace {
// Seed streams.
constexpr std::uint64_t kStreamTrainEnv = 1;
constexpr std::uint64_t kStreamAgent = 2;
constexpr std::uint64_t kStreamInit = 3;
constexpr std::uint64_t kStreamCheckpointEval = 4;
constexpr std::uint64_t kStreamEvalEnv = 5;
constexpr std::uint64_t kStreamEvalEncoder = 6;
}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorCode::InvalidConfig, "replay capacity must be positive");
  items_.reserve(capacity);
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (items_.size() < capacity_) return items_.at(i);
  return items_.at((cursor_ + i) % capacity_);
}

std::vector<const Transition*> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (items_.size() < n) {
    throw Error(ErrorCode::NotEnoughSamples, "replay buffer holds " + std::to_string(size()) +
                                                 " transitions, batch needs " + std::to_string(n));
  }
  // Floyd's algorithm: n distinct indices, deterministic given rng.
  std::vector<std::size_t> picked;
  picked.reserve(n);
  std::unordered_set<std::size_t> seen;
  const std::size_t total = items_.size();
  for (std::size_t j = total - n; j < total; ++j) {
    const std::size_t r = rng.below(j + 1);
    const std::size_t v = seen.count(r) ? j : r;
    seen.insert(v);
    picked.push_back(v);
  }
  std::vector<const Transition*> out;
  out.reserve(n);
  for (std::size_t i : picked) out.push_back(&items_[i]);
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (batch_size > replay_capacity) fail("batch_size must not exceed replay_capacity");
  if (target_update_every < 1) fail("target_update_every must be >= 1");
  if (!(eps_end >= 0.0 && eps_end <= eps_start && eps_start <= 1.0)) {
    fail("exploration must satisfy 0 <= eps_end <= eps_start <= 1");
  }
  if (!(eps_decay_steps > 0.0)) fail("eps_decay_steps must be positive");
  if (episodes < 0) fail("episodes must be >= 0");
  if (eval_every < 0 || eval_episodes < 1) fail("invalid checkpoint evaluation settings");
}

double epsilon(std::int64_t step, const TrainConfig& cfg) {
  return cfg.eps_end + (cfg.eps_start - cfg.eps_end) *
                           std::exp(-static_cast<double>(step) / cfg.eps_decay_steps);
}

int select_action(std::span<const double> q, double eps, Rng& rng) {
  if (q.empty()) throw Error(ErrorCode::EmptyVector, "select_action on empty q vector");
  if (rng.uniform() < eps) return static_cast<int>(rng.below(q.size()));
  return codec::decode_action(q);
}

namespace {

snn::SpikeBatch<float> encode_batch(std::span<const Transition* const> batch, bool next,
                                    const codec::EncoderConfig& encoder, Rng& rng) {
  std::vector<codec::SpikeTrain> trains;
  trains.reserve(batch.size());
  for (const Transition* t : batch) {
    trains.push_back(codec::encode_observation(next ? t->s_next : t->s, encoder, rng));
  }
  return snn::to_batch<float>(trains);
}

}  // namespace

std::vector<double> td_targets(std::span<const Transition* const> batch, const FloatNetwork& target,
                               double gamma, const codec::EncoderConfig& encoder, Rng& rng) {
  if (batch.empty()) throw Error(ErrorCode::EmptyVector, "td_targets on empty batch");
  const auto input = encode_batch(batch, true, encoder, rng);
  const auto q_next = snn::forward(target, input);
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    if (t.terminal) {
      y[i] = t.r;
    } else {
      const double best = q_next.col(static_cast<Eigen::Index>(i)).maxCoeff();
      y[i] = t.r + gamma * best;
    }
  }
  return y;
}

void Adam::step(std::vector<snn::Matrix<float>>& params,
                const std::vector<snn::Matrix<float>>& grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::ShapeMismatch, "Adam: parameter/gradient count mismatch");
  }
  if (m.empty()) {
    for (const auto& p : params) {
      m.push_back(snn::Matrix<float>::Zero(p.rows(), p.cols()));
      v.push_back(snn::Matrix<float>::Zero(p.rows(), p.cols()));
    }
  }
  ++t;
  const auto b1 = static_cast<float>(beta1);
  const auto b2 = static_cast<float>(beta2);
  const auto c1 = static_cast<float>(1.0 - std::pow(beta1, static_cast<double>(t)));
  const auto c2 = static_cast<float>(1.0 - std::pow(beta2, static_cast<double>(t)));
  const auto lr = static_cast<float>(learning_rate);
  const auto e = static_cast<float>(eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = b1 * m[i] + (1.0f - b1) * grads[i];
    v[i] = b2 * v[i] + (1.0f - b2) * grads[i].cwiseAbs2();
    params[i].array() -= lr * (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + e);
  }
}

AgentState::AgentState(FloatNetwork net, double learning_rate, snn::SurrogateConfig surr)
    : online(std::move(net)), target(online), surrogate(surr) {
  adam.learning_rate = learning_rate;
}

double train_step(AgentState& agent, std::span<const Transition* const> batch,
                  const TrainConfig& cfg, const codec::EncoderConfig& encoder, Rng& rng) {
  if (batch.size() != cfg.batch_size) {
    throw Error(ErrorCode::NotEnoughSamples, "train_step needs a batch of " +
                                                 std::to_string(cfg.batch_size) + ", got " +
                                                 std::to_string(batch.size()));
  }
  const auto y = td_targets(batch, agent.target, cfg.gamma, encoder, rng);
  const auto input = encode_batch(batch, false, encoder, rng);

  auto& trace = agent.tape;
  const auto q = snn::forward(agent.online, input, &trace);

  const auto n = static_cast<Eigen::Index>(batch.size());
  snn::Matrix<float> dl_dq = snn::Matrix<float>::Zero(q.rows(), n);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = batch[static_cast<std::size_t>(i)]->a;
    const double err = static_cast<double>(q(a, i)) - y[static_cast<std::size_t>(i)];
    loss += err * err;
    dl_dq(a, i) = static_cast<float>(2.0 * err / static_cast<double>(n));
  }
  loss /= static_cast<double>(n);

  auto grads = snn::backward(agent.online, trace, dl_dq, agent.surrogate);
  agent.adam.step(agent.online.weights, grads);
  return loss;
}

std::vector<double> q_values(snn::Simulator<float>& sim, std::span<const double> obs,
                             const codec::EncoderConfig& encoder, Rng& rng) {
  const auto train = codec::encode_observation(obs, encoder, rng);
  const auto q = sim.forward(snn::to_batch<float>(train));
  std::vector<double> out(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index j = 0; j < q.rows(); ++j) out[static_cast<std::size_t>(j)] = q(j, 0);
  return out;
}

std::vector<double> evaluate_greedy(envs::EnvKind kind, const FloatNetwork& net,
                                    const codec::EncoderConfig& encoder, int episodes,
                                    std::uint64_t seed, std::vector<int>* steps) {
  snn::Simulator<float> sim(net);
  if (steps) steps->clear();
  std::vector<double> rewards;
  rewards.reserve(static_cast<std::size_t>(std::max(episodes, 0)));
  for (int ep = 0; ep < episodes; ++ep) {
    envs::Environment env(kind);
    Rng rng(derive_seed(seed, kStreamEvalEncoder, static_cast<std::uint64_t>(ep)));
    auto obs = env.reset(derive_seed(seed, kStreamEvalEnv, static_cast<std::uint64_t>(ep)));
    double total = 0.0;
    int n = 0;
    while (true) {
      const auto q = q_values(sim, obs, encoder, rng);
      auto step = env.step(codec::decode_action(q));
      total += step.reward;
      ++n;
      if (step.terminal || step.truncated) break;
      obs = std::move(step.observation);
    }
    rewards.push_back(total);
    if (steps) steps->push_back(n);
  }
  return rewards;
}

namespace {
double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}
}  // namespace

TrainResult train(envs::EnvKind kind, const TrainConfig& cfg, const NetConfig& net_cfg,
                  const codec::EncoderConfig& encoder, const ProgressFn& progress) {
  cfg.validate();
  encoder.validate(static_cast<std::size_t>(envs::observation_size(kind)));
  if (net_cfg.layer_sizes.empty() ||
      net_cfg.layer_sizes.front() != 2 * envs::observation_size(kind) ||
      net_cfg.layer_sizes.back() != envs::action_count(kind)) {
    throw Error(ErrorCode::DimensionMismatch, "layer_sizes do not match the task dimensions");
  }
  if (net_cfg.sim_ticks != encoder.sim_ticks) {
    throw Error(ErrorCode::DimensionMismatch, "network and encoder disagree on sim_ticks");
  }

  Rng init_rng(derive_seed(cfg.seed, kStreamInit));
  auto net = snn::make_network<float>(net_cfg.layer_sizes, net_cfg.sim_ticks, net_cfg.hidden,
                                      net_cfg.output_beta, init_rng);
  AgentState agent(std::move(net), cfg.learning_rate, net_cfg.surrogate);
  ReplayBuffer buffer(cfg.replay_capacity);
  Rng rng(derive_seed(cfg.seed, kStreamAgent));
  snn::Simulator<float> actor(agent.online);

  TrainResult result{agent.online, agent.online, {}, {}, -std::numeric_limits<double>::infinity(),
                     -1};
  const std::uint64_t eval_seed = derive_seed(cfg.seed, kStreamCheckpointEval);

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    envs::Environment env(kind);
    auto obs = env.reset(derive_seed(cfg.seed, kStreamTrainEnv, static_cast<std::uint64_t>(ep)));
    double total = 0.0;
    double loss_sum = 0.0;
    int loss_count = 0;
    while (true) {
      const double eps = epsilon(agent.global_step, cfg);
      const auto q = q_values(actor, obs, encoder, rng);
      const int a = select_action(q, eps, rng);
      auto step = env.step(a);
      ++agent.global_step;
      total += step.reward;
      const bool finished = step.terminal || step.truncated;
      buffer.push({obs, a, step.reward, step.observation, step.terminal});
      if (buffer.size() >= cfg.batch_size) {
        const auto batch = buffer.sample(cfg.batch_size, rng);
        loss_sum += train_step(agent, batch, cfg, encoder, rng);
        ++loss_count;
      }
      if (finished) break;
      obs = std::move(step.observation);
    }
    if ((ep + 1) % cfg.target_update_every == 0) agent.sync_target();

    CurvePoint point{ep, total, epsilon(agent.global_step, cfg),
                     loss_count ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN()};
    result.curve.push_back(point);

    const CheckpointEval* check = nullptr;
    if (cfg.eval_every > 0 && (ep + 1) % cfg.eval_every == 0) {
      const double m = mean(evaluate_greedy(kind, agent.online, encoder, cfg.eval_episodes,
                                            eval_seed));
      result.evals.push_back({ep, m});
      check = &result.evals.back();
      if (m > result.best_eval) {
        result.best_eval = m;
        result.best_episode = ep;
        result.best = agent.online;
      }
    }
    if (progress) progress(point, check);
    if (check && cfg.early_stop_reward && check->mean_reward >= *cfg.early_stop_reward) break;
  }

  result.final = agent.online;
  if (result.best_episode < 0) {
    result.best = agent.online;
    result.best_eval = 0.0;
  }
  return result;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "episode,reward,epsilon,loss_mean\n";
  for (const auto& p : curve) {
    out << p.episode << ',' << fmt(p.reward) << ',' << fmt(p.epsilon) << ',' << fmt(p.loss_mean)
        << '\n';
  }
}

}  // namespace dsqn::dqn
