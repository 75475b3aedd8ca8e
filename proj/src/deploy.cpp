#include "dsqn/deploy.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <ostream>
#include <string>
#include <thread>

#include "dsqn/error.hpp"
#include "dsqn/format.hpp"
#include "dsqn/rng.hpp"

namespace dsqn::deploy {

namespace {
constexpr std::uint64_t kStreamEnv = 11;
constexpr std::uint64_t kStreamEncoder = 12;
}  // namespace

const std::vector<double>& default_threshold_grid() {
  static const std::vector<double> grid{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000};
  return grid;
}

namespace {
double grid_median(std::span<const double> grid) {
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[(sorted.size() - 1) / 2];
}
}  // namespace

DeployConfig default_deploy_config(envs::EnvKind kind, std::size_t hidden_layers) {
  DeployConfig cfg;
  cfg.sim_ticks = kind == envs::EnvKind::CartPole ? 10 : 20;
  cfg.hidden_thresholds.assign(hidden_layers, grid_median(default_threshold_grid()));
  return cfg;
}

void DeployConfig::validate(const quant::QuantNetwork& net) const {
  if (sim_ticks < 1) throw Error(ErrorCode::InvalidConfig, "sim_ticks must be >= 1");
  if (!(tick_seconds >= 0.0)) throw Error(ErrorCode::InvalidConfig, "tick_seconds must be >= 0");
  if (!(output_threshold > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "output_threshold must be positive");
  }
  if (!(output_beta >= 0.0 && output_beta <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "output_beta must lie in [0, 1]");
  }
  if (hidden_thresholds.size() != net.num_hidden()) {
    throw Error(ErrorCode::DimensionMismatch,
                "expected " + std::to_string(net.num_hidden()) + " hidden thresholds, got " +
                    std::to_string(hidden_thresholds.size()));
  }
  for (double t : hidden_thresholds) {
    if (!(t > 0.0)) throw Error(ErrorCode::InvalidConfig, "hidden thresholds must be positive");
  }
}

double pacing_delay(int sim_ticks, double tick_seconds, double t_inf) {
  const double t_ctrl = static_cast<double>(sim_ticks) * tick_seconds;
  return std::max(0.0, t_ctrl - t_inf);
}

HwState make_state(const quant::QuantNetwork& net) {
  HwState s;
  for (std::size_t l = 1; l < net.layer_sizes.size(); ++l) {
    s.u.emplace_back(static_cast<std::size_t>(net.layer_sizes[l]), 0.0f);
  }
  return s;
}

void tick(const quant::QuantNetwork& net, const DeployConfig& cfg, HwState& state,
          std::span<const std::uint8_t> input, std::vector<std::vector<std::uint8_t>>& spikes_out) {
  const std::size_t layers = net.layers.size();
  if (input.size() != static_cast<std::size_t>(net.num_inputs()) || state.u.size() != layers) {
    throw Error(ErrorCode::ShapeMismatch, "tick: input or state does not match the network");
  }
  spikes_out.resize(layers + 1);
  spikes_out[0].assign(input.begin(), input.end());

  std::vector<std::int32_t> acc;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto& w = net.layers[l].q_weights;
    const auto n_out = static_cast<std::size_t>(w.rows());
    acc.assign(n_out, 0);
    const auto& below = spikes_out[l];
    for (Eigen::Index i = 0; i < w.cols(); ++i) {
      if (!below[static_cast<std::size_t>(i)]) continue;
      const std::int8_t* col = w.data() + i * w.rows();
      for (std::size_t j = 0; j < n_out; ++j) acc[j] += col[j];
    }

    auto& u = state.u[l];
    auto& z = spikes_out[l + 1];
    z.assign(n_out, 0);
    const bool is_output = l + 1 == layers;
    if (!is_output) {
      const auto beta = static_cast<float>(net.lif[l].beta);
      const auto theta = static_cast<float>(cfg.hidden_thresholds[l]);
      const bool subtract = net.lif[l].reset == snn::ResetMode::SubtractThreshold;
      for (std::size_t j = 0; j < n_out; ++j) {
        const float v = beta * u[j] + static_cast<float>(acc[j]);
        const bool fire = v > theta;
        z[j] = fire ? 1 : 0;
        u[j] = fire && subtract ? v - theta : v;
      }
    } else {
      const auto beta = static_cast<float>(cfg.output_beta);
      const auto limit = static_cast<float>(cfg.output_threshold);
      for (std::size_t j = 0; j < n_out; ++j) {
        const float v = beta * u[j] + static_cast<float>(acc[j]);
        u[j] = v;
        if (v > limit) {
          throw Error(ErrorCode::OutputSpiked, "output neuron " + std::to_string(j) +
                                                   " reached " + fmt(v) + " > threshold " +
                                                   fmt(cfg.output_threshold));
        }
      }
    }
  }
}

Engine::Engine(const quant::QuantNetwork& net, DeployConfig cfg)
    : net_(&net), cfg_(std::move(cfg)), state_(make_state(net)) {
  cfg_.validate(net);
}

void Engine::reset() {
  state_ = make_state(*net_);
  ticks_run_ = 0;
}

std::vector<float> Engine::run_inference(const codec::SpikeList& input, Recording* rec) {
  const auto& net = *net_;
  if (input.neurons != net.num_inputs() || input.ticks > cfg_.sim_ticks) {
    throw Error(ErrorCode::ShapeMismatch, "spike list does not fit the network input window");
  }
  const std::size_t layers = net.layers.size();
  for (std::size_t l = 0; l + 1 < layers; ++l) std::fill(state_.u[l].begin(), state_.u[l].end(), 0.0f);
  if (cfg_.reset_between_steps) std::fill(state_.u.back().begin(), state_.u.back().end(), 0.0f);

  if (rec) {
    rec->sim_ticks = cfg_.sim_ticks;
    rec->layer_spikes.resize(layers + 1);
  }

  input_.assign(static_cast<std::size_t>(net.num_inputs()), 0);
  auto ev = input.events.begin();
  for (int t = 0; t < cfg_.sim_ticks; ++t) {
    std::fill(input_.begin(), input_.end(), std::uint8_t{0});
    for (; ev != input.events.end() && ev->tick == t; ++ev) {
      if (ev->neuron < 0 || ev->neuron >= net.num_inputs()) {
        throw Error(ErrorCode::ShapeMismatch, "spike event neuron out of range");
      }
      input_[static_cast<std::size_t>(ev->neuron)] = 1;
    }
    if (ev != input.events.end() && ev->tick < t) {
      throw Error(ErrorCode::ShapeMismatch, "spike list is not sorted by tick");
    }
    tick(net, cfg_, state_, input_, spikes_);
    if (rec) {
      rec->voltages.push_back(state_.u.back());
      for (std::size_t l = 0; l <= layers; ++l) {
        for (std::size_t j = 0; j < spikes_[l].size(); ++j) {
          if (spikes_[l][j]) rec->layer_spikes[l].push_back({static_cast<int>(j), ticks_run_});
        }
      }
    }
    ++ticks_run_;
  }
  if (ev != input.events.end()) {
    throw Error(ErrorCode::ShapeMismatch, "spike list has events beyond the simulation window");
  }
  return state_.u.back();
}

EpisodeMetrics run_episode(envs::EnvKind kind, const quant::QuantNetwork& net,
                           const DeployConfig& cfg, const codec::EncoderConfig& encoder,
                           std::uint64_t seed, bool record, bool paced) {
  if (net.num_inputs() != 2 * envs::observation_size(kind) ||
      net.num_outputs() != envs::action_count(kind)) {
    throw Error(ErrorCode::DimensionMismatch, "network dimensions do not match the task");
  }
  if (encoder.sim_ticks != cfg.sim_ticks) {
    throw Error(ErrorCode::DimensionMismatch, "encoder and deploy config disagree on sim_ticks");
  }
  using clock = std::chrono::steady_clock;
  Engine engine(net, cfg);
  envs::Environment env(kind);
  Rng rng(derive_seed(seed, kStreamEncoder));
  auto obs = env.reset(derive_seed(seed, kStreamEnv));

  EpisodeMetrics m;
  if (record) m.recording.emplace();
  Recording* rec = record ? &*m.recording : nullptr;
  const double t_ctrl = static_cast<double>(cfg.sim_ticks) * cfg.tick_seconds;

  while (true) {
    const auto start = clock::now();
    const auto train = codec::encode_observation(obs, encoder, rng);
    const auto list = codec::train_to_spike_list(train);
    const auto out = engine.run_inference(list, rec);
    const int action = codec::decode_action(std::span<const float>(out));
    const double t_inf = std::chrono::duration<double>(clock::now() - start).count();

    PacingRecord p{t_ctrl, t_inf, pacing_delay(cfg.sim_ticks, cfg.tick_seconds, t_inf)};
    m.pacing.push_back(p);
    if (paced && p.t_delay > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(p.t_delay));
    }
    if (rec) {
      rec->actions.push_back(action);
      rec->step_outputs.push_back(out);
    }

    auto step = env.step(action);
    m.total_reward += step.reward;
    ++m.steps;
    if (step.terminal || step.truncated) break;
    obs = std::move(step.observation);
  }
  return m;
}

std::vector<double> evaluate(envs::EnvKind kind, const quant::QuantNetwork& net,
                             const DeployConfig& cfg, const codec::EncoderConfig& encoder,
                             int episodes, std::uint64_t seed) {
  std::vector<double> rewards;
  for (int i = 0; i < episodes; ++i) {
    try {
      rewards.push_back(
          run_episode(kind, net, cfg, encoder, derive_seed(seed, static_cast<std::uint64_t>(i)))
              .total_reward);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OutputSpiked) throw;
      rewards.push_back(envs::reward_floor(kind));
    }
  }
  return rewards;
}

namespace {
// Runs fn(0..n-1) on up to hardware_concurrency threads; the first exception
// (in index order) is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Returns the winning threshold; ties resolve to the smallest value.
double best_of(const std::vector<SweepPoint>& points) {
  const SweepPoint* best = &points.front();
  for (const auto& p : points) {
    if (p.mean_reward > best->mean_reward ||
        (p.mean_reward == best->mean_reward && p.threshold < best->threshold)) {
      best = &p;
    }
  }
  return best->threshold;
}
}  // namespace

SweepResult threshold_sweep(envs::EnvKind kind, const quant::QuantNetwork& net,
                            const DeployConfig& cfg, const codec::EncoderConfig& encoder,
                            std::span<const double> grid, int episodes, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::EmptyVector, "threshold grid is empty");
  if (net.num_hidden() != 2) {
    throw Error(ErrorCode::DimensionMismatch, "threshold sweep needs exactly two hidden layers");
  }
  if (episodes < 1) throw Error(ErrorCode::InvalidConfig, "sweep needs >= 1 episode per point");

  SweepResult result;
  DeployConfig trial = cfg;
  trial.hidden_thresholds.assign(2, 0.0);
  result.stage1_fixed = grid_median(grid);

  // Grid points are independent closed loops sharing nothing but the read-only
  // network, so each stage fans out across threads and is gathered in grid order.
  auto stage = [&](std::size_t layer) {
    std::vector<SweepPoint> points(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
      DeployConfig local = trial;
      local.hidden_thresholds[layer] = grid[i];
      points[i] = {grid[i], mean(evaluate(kind, net, local, encoder, episodes, seed))};
    });
    result.evaluations += static_cast<int>(grid.size()) * episodes;
    return points;
  };

  trial.hidden_thresholds[1] = result.stage1_fixed;
  result.stage1 = stage(0);
  result.best_thresholds[0] = best_of(result.stage1);

  trial.hidden_thresholds[0] = result.best_thresholds[0];
  result.stage2 = stage(1);
  result.best_thresholds[1] = best_of(result.stage2);
  return result;
}

void write_voltages_csv(std::ostream& out, const Recording& rec) {
  out << "tick,neuron,value\n";
  for (std::size_t t = 0; t < rec.voltages.size(); ++t) {
    for (std::size_t j = 0; j < rec.voltages[t].size(); ++j) {
      out << t << ',' << j << ',' << fmt(rec.voltages[t][j]) << '\n';
    }
  }
}

void write_spikes_csv(std::ostream& out, const std::vector<codec::SpikeEvent>& events) {
  out << "tick,neuron\n";
  for (const auto& e : events) out << e.tick << ',' << e.neuron << '\n';
}

void write_pacing_csv(std::ostream& out, std::span<const PacingRecord> pacing) {
  out << "step,t_ctrl,t_inf,t_delay\n";
  for (std::size_t i = 0; i < pacing.size(); ++i) {
    out << i << ',' << fmt(pacing[i].t_ctrl) << ',' << fmt(pacing[i].t_inf) << ','
        << fmt(pacing[i].t_delay) << '\n';
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  out << "stage,threshold,mean_reward\n";
  for (const auto& p : result.stage1) out << "1," << fmt(p.threshold) << ',' << fmt(p.mean_reward) << '\n';
  for (const auto& p : result.stage2) out << "2," << fmt(p.threshold) << ',' << fmt(p.mean_reward) << '\n';
}

}  // namespace dsqn::deploy
