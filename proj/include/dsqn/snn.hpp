#pragma once

// Feed-forward leaky integrate-and-fire network.
//
// Every non-input layer l integrates, per tick t,
//
//   v_l(t) = beta_l * u_l(t-1) + W_l * z_{l-1}(t)      (pre-reset potential)
//   z_l(t) = [v_l(t) > theta_l]                        (spiking layers only)
//   u_l(t) = v_l(t) - theta_l * z_l(t)                 (subtractive reset)
//
// with z_0(t) the input raster. The network output is u_L(T) of the final,
// non-spiking layer. All layers of a tick are evaluated bottom-up before the
// next tick, so a spike reaches the next layer within the same tick.
//
// Samples are stored as columns, so a minibatch runs through the same code as
// a single observation.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "dsqn/codec.hpp"
#include "dsqn/rng.hpp"

namespace dsqn::snn {

enum class ResetMode { SubtractThreshold, None };

struct LifParams {
  double beta = 0.8;
  double threshold = 0.5;
  ResetMode reset = ResetMode::SubtractThreshold;
  bool spiking = true;

  bool operator==(const LifParams&) const = default;
};

// Fast-sigmoid surrogate: ds/dv = 1 / (1 + slope * |v - theta|)^2.
struct SurrogateConfig {
  double slope = 25.0;
};

// Heaviside is the real network. Smooth replaces every spike by the fast
// sigmoid (v - theta) / (1 + slope * |v - theta|), whose exact derivative is the
// surrogate; it exists so BPTT can be checked against finite differences.
enum class SpikeMode { Heaviside, Smooth };

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct Network {
  std::vector<int> layer_sizes;
  // weights[l] has shape layer_sizes[l + 1] x layer_sizes[l].
  std::vector<Matrix<Scalar>> weights;
  // lif[l] parameterizes layer l + 1.
  std::vector<LifParams> lif;
  int sim_ticks = 10;

  int num_inputs() const { return layer_sizes.front(); }
  int num_outputs() const { return layer_sizes.back(); }
  std::size_t num_connections() const { return weights.size(); }
  std::size_t num_weights() const;

  // Throws ShapeMismatch / InvalidConfig.
  void validate() const;

  template <typename Other>
  Network<Other> cast() const {
    Network<Other> out{layer_sizes, {}, lif, sim_ticks};
    for (const auto& w : weights) out.weights.push_back(w.template cast<Other>());
    return out;
  }

  bool operator==(const Network&) const = default;
};

// Hidden layers: LIF with `hidden`; output layer: non-spiking, no reset,
// decay `output_beta`. Weights uniform in +-1/sqrt(fan_in).
template <typename Scalar>
Network<Scalar> make_network(const std::vector<int>& layer_sizes, int sim_ticks,
                             const LifParams& hidden, double output_beta, Rng& rng);

template <typename Scalar>
struct LayerState {
  Matrix<Scalar> u;  // membrane potentials, neurons x batch
  Matrix<Scalar> z;  // last emitted spikes

  void reset() {
    u.setZero();
    z.setZero();
  }
};

// One tick of one layer, in place. `pre_reset` receives beta * u + current.
template <typename Scalar>
void lif_step(LayerState<Scalar>& state, const Matrix<Scalar>& current, const LifParams& params,
              Matrix<Scalar>& pre_reset, SpikeMode mode = SpikeMode::Heaviside,
              const SurrogateConfig& surr = {});

// Input spikes for a minibatch: one layer_sizes[0] x batch matrix per tick.
template <typename Scalar>
using SpikeBatch = std::vector<Matrix<Scalar>>;

template <typename Scalar>
SpikeBatch<Scalar> to_batch(const std::vector<codec::SpikeTrain>& trains);

template <typename Scalar>
SpikeBatch<Scalar> to_batch(const codec::SpikeTrain& train);

// BPTT tape. Indexed [layer - 1][tick] for the non-input layers.
template <typename Scalar>
struct ForwardTrace {
  SpikeBatch<Scalar> input;
  std::vector<std::vector<Matrix<Scalar>>> pre_reset;
  std::vector<std::vector<Matrix<Scalar>>> spikes;
  SpikeMode mode = SpikeMode::Heaviside;

  int ticks() const { return static_cast<int>(input.size()); }
  Eigen::Index batch() const { return input.empty() ? 0 : input.front().cols(); }
};

// Owns the per-layer membrane state of one network. Not thread-safe; use one
// simulator per thread.
template <typename Scalar>
class Simulator {
 public:
  explicit Simulator(const Network<Scalar>& net, SpikeMode mode = SpikeMode::Heaviside,
                     SurrogateConfig surr = {});

  // Resets the state, runs sim_ticks ticks and returns the output-layer
  // potentials (outputs x batch). Throws ShapeMismatch.
  Matrix<Scalar> forward(const SpikeBatch<Scalar>& input, ForwardTrace<Scalar>* trace = nullptr);

  void reset_state();
  bool state_is_zero() const;
  const std::vector<LayerState<Scalar>>& state() const { return state_; }

 private:
  void ensure_batch(Eigen::Index batch);

  const Network<Scalar>* net_;
  SpikeMode mode_;
  SurrogateConfig surr_;
  std::vector<LayerState<Scalar>> state_;
  Matrix<Scalar> current_, pre_;
};

// Convenience: fresh simulator, single forward pass.
template <typename Scalar>
Matrix<Scalar> forward(const Network<Scalar>& net, const SpikeBatch<Scalar>& input,
                       ForwardTrace<Scalar>* trace = nullptr,
                       SpikeMode mode = SpikeMode::Heaviside, const SurrogateConfig& surr = {});

// Reverse-mode gradient of a loss through the unrolled network. `dl_dq` is
// outputs x batch; the result has one matrix per weight matrix. The reset
// term is treated as a constant. Throws TraceMismatch.
template <typename Scalar>
std::vector<Matrix<Scalar>> backward(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                     const Matrix<Scalar>& dl_dq,
                                     const SurrogateConfig& surr = {});

extern template struct Network<float>;
extern template struct Network<double>;
extern template class Simulator<float>;
extern template class Simulator<double>;

}  // namespace dsqn::snn
