#pragma once

// Tick-based execution model of the quantized network: 8-bit signed synapses,
// single-precision neuron state, one tick per millisecond.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "dsqn/codec.hpp"
#include "dsqn/envs.hpp"
#include "dsqn/quant.hpp"

namespace dsqn::deploy {

struct DeployConfig {
  double tick_seconds = 1.0e-3;
  int sim_ticks = 10;
  double output_threshold = 5000.0;
  double output_beta = 1.0;
  bool reset_between_steps = true;
  std::vector<double> hidden_thresholds;  // one per hidden layer

  // Throws InvalidConfig / DimensionMismatch.
  void validate(const quant::QuantNetwork& net) const;

  bool operator==(const DeployConfig&) const = default;
};

// Per-task defaults: 10 ticks for CartPole, 20 for Acrobot; hidden thresholds
// start at the median of the default sweep grid.
DeployConfig default_deploy_config(envs::EnvKind kind, std::size_t hidden_layers = 2);

const std::vector<double>& default_threshold_grid();

struct PacingRecord {
  double t_ctrl = 0.0;
  double t_inf = 0.0;
  double t_delay = 0.0;
};

// max(0, sim_ticks * tick_seconds - t_inf).
double pacing_delay(int sim_ticks, double tick_seconds, double t_inf);

// Per-layer state of the engine; layers[0] is the first hidden layer.
struct HwState {
  std::vector<std::vector<float>> u;
};

HwState make_state(const quant::QuantNetwork& net);

// Advances every layer by one tick. spikes_out[0] echoes the input raster;
// spikes_out[l] holds the spikes of layer l (the output layer never spikes).
// Throws OutputSpiked when an output potential exceeds cfg.output_threshold.
void tick(const quant::QuantNetwork& net, const DeployConfig& cfg, HwState& state,
          std::span<const std::uint8_t> input, std::vector<std::vector<std::uint8_t>>& spikes_out);

struct Recording {
  int sim_ticks = 0;
  std::vector<std::vector<float>> voltages;                 // per global tick, per output neuron
  std::vector<std::vector<codec::SpikeEvent>> layer_spikes;  // per layer incl. input, global ticks
  std::vector<int> actions;                                  // per control step
  std::vector<std::vector<float>> step_outputs;              // final potentials per control step
};

class Engine {
 public:
  Engine(const quant::QuantNetwork& net, DeployConfig cfg);

  // Runs cfg.sim_ticks ticks. Hidden state always starts from zero; output
  // potentials start from zero when reset_between_steps, otherwise they carry
  // over from the previous call. Throws ShapeMismatch / OutputSpiked.
  std::vector<float> run_inference(const codec::SpikeList& input, Recording* rec = nullptr);

  void reset();
  const HwState& state() const { return state_; }
  const DeployConfig& config() const { return cfg_; }

 private:
  const quant::QuantNetwork* net_;
  DeployConfig cfg_;
  HwState state_;
  std::vector<std::vector<std::uint8_t>> spikes_;
  std::vector<std::uint8_t> input_;
  int ticks_run_ = 0;
};

struct EpisodeMetrics {
  double total_reward = 0.0;
  int steps = 0;
  std::vector<PacingRecord> pacing;
  std::optional<Recording> recording;
};

// Closed loop: encode -> spike list -> inference -> argmax -> env step, until
// the episode ends. When paced, sleeps pacing_delay after every inference.
EpisodeMetrics run_episode(envs::EnvKind kind, const quant::QuantNetwork& net,
                           const DeployConfig& cfg, const codec::EncoderConfig& encoder,
                           std::uint64_t seed, bool record = false, bool paced = false);

// Episode i runs with seed derive_seed(seed, i). An episode that raises
// OutputSpiked scores the task floor.
std::vector<double> evaluate(envs::EnvKind kind, const quant::QuantNetwork& net,
                             const DeployConfig& cfg, const codec::EncoderConfig& encoder,
                             int episodes, std::uint64_t seed);

struct SweepPoint {
  double threshold = 0.0;
  double mean_reward = 0.0;
};

struct SweepResult {
  double stage1_fixed = 0.0;  // hidden-2 threshold held during stage 1
  std::vector<SweepPoint> stage1;
  std::vector<SweepPoint> stage2;
  std::array<double, 2> best_thresholds{};
  int evaluations = 0;  // closed-loop episodes run
};

// Two-stage search: hidden-2 fixed at the grid median while hidden-1 is swept,
// then hidden-1 fixed at its winner while hidden-2 is swept. Ties go to the
// smaller threshold. Requires exactly two hidden layers.
SweepResult threshold_sweep(envs::EnvKind kind, const quant::QuantNetwork& net,
                            const DeployConfig& cfg, const codec::EncoderConfig& encoder,
                            std::span<const double> grid, int episodes, std::uint64_t seed);

// CSV writers.
void write_voltages_csv(std::ostream& out, const Recording& rec);
void write_spikes_csv(std::ostream& out, const std::vector<codec::SpikeEvent>& events);
void write_pacing_csv(std::ostream& out, std::span<const PacingRecord> pacing);
void write_sweep_csv(std::ostream& out, const SweepResult& result);

}  // namespace dsqn::deploy
