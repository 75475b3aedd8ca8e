#include "dsqn/snn.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "dsqn/error.hpp"

namespace dsqn::snn {

namespace {

// Below this many rows a dense product beats scanning the spike matrix.
constexpr Eigen::Index kSparseMinRows = 64;

// Indices of the nonzero entries of a column, written without branches since
// spike patterns defeat the branch predictor.
template <typename Scalar>
Eigen::Index active(const Scalar* col, Eigen::Index n, std::vector<Eigen::Index>& idx) {
  idx.resize(static_cast<std::size_t>(n));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    idx[static_cast<std::size_t>(k)] = j;
    k += col[j] != Scalar(0);
  }
  return k;
}

// out = w * x. Spike matrices are mostly zeros, so wide layers only add the
// weight columns of active inputs.
template <typename Scalar>
void mul_spikes(const Matrix<Scalar>& w, const Matrix<Scalar>& x, Matrix<Scalar>& out) {
  const Eigen::Index rows = w.rows();
  if (rows < kSparseMinRows) {
    out.noalias() = w * x;
    return;
  }
  out.setZero(rows, x.cols());
  std::vector<Eigen::Index> idx;
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    Scalar* dst = out.data() + b * rows;
    const Scalar* xb = x.data() + b * x.rows();
    const Eigen::Index n = active(xb, x.rows(), idx);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index j = idx[static_cast<std::size_t>(k)];
      const Scalar* src = w.data() + j * rows;
      const Scalar v = xb[j];
      if (v == Scalar(1)) {
        for (Eigen::Index r = 0; r < rows; ++r) dst[r] += src[r];
      } else {
        for (Eigen::Index r = 0; r < rows; ++r) dst[r] += v * src[r];
      }
    }
  }
}

// g += d * x^T, same strategy.
template <typename Scalar>
void add_outer_spikes(const Matrix<Scalar>& d, const Matrix<Scalar>& x, Matrix<Scalar>& g) {
  const Eigen::Index rows = d.rows();
  if (rows < kSparseMinRows) {
    g.noalias() += d * x.transpose();
    return;
  }
  std::vector<Eigen::Index> idx;
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    const Scalar* src = d.data() + b * rows;
    const Scalar* xb = x.data() + b * x.rows();
    const Eigen::Index n = active(xb, x.rows(), idx);
    for (Eigen::Index k = 0; k < n; ++k) {
      const Eigen::Index j = idx[static_cast<std::size_t>(k)];
      Scalar* dst = g.data() + j * rows;
      const Scalar v = xb[j];
      if (v == Scalar(1)) {
        for (Eigen::Index r = 0; r < rows; ++r) dst[r] += src[r];
      } else {
        for (Eigen::Index r = 0; r < rows; ++r) dst[r] += v * src[r];
      }
    }
  }
}

template <typename Scalar>
void resize_tape(std::vector<std::vector<Matrix<Scalar>>>& tape, std::size_t layers,
                 std::size_t ticks) {
  tape.resize(layers);
  for (auto& per_tick : tape) per_tick.resize(ticks);
}

}  // namespace

template <typename Scalar>
std::size_t Network<Scalar>::num_weights() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += static_cast<std::size_t>(w.size());
  return n;
}

template <typename Scalar>
void Network<Scalar>::validate() const {
  if (layer_sizes.size() < 2) throw Error(ErrorCode::ShapeMismatch, "network needs >= 2 layers");
  if (weights.size() != layer_sizes.size() - 1 || lif.size() != weights.size()) {
    throw Error(ErrorCode::ShapeMismatch, "weights/lif count does not match layer_sizes");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_sizes[l + 1] || weights[l].cols() != layer_sizes[l]) {
      throw Error(ErrorCode::ShapeMismatch,
                  "weight matrix " + std::to_string(l) + " has shape " +
                      std::to_string(weights[l].rows()) + "x" + std::to_string(weights[l].cols()) +
                      ", expected " + std::to_string(layer_sizes[l + 1]) + "x" +
                      std::to_string(layer_sizes[l]));
    }
    const auto& p = lif[l];
    if (!(p.beta >= 0.0 && p.beta <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "beta must lie in [0, 1]");
    }
    if (!(p.threshold > 0.0)) throw Error(ErrorCode::InvalidConfig, "threshold must be positive");
  }
  if (lif.back().spiking) {
    throw Error(ErrorCode::InvalidConfig, "output layer must be non-spiking");
  }
  if (sim_ticks < 1) throw Error(ErrorCode::InvalidConfig, "sim_ticks must be >= 1");
}

template <typename Scalar>
Network<Scalar> make_network(const std::vector<int>& layer_sizes, int sim_ticks,
                             const LifParams& hidden, double output_beta, Rng& rng) {
  Network<Scalar> net;
  net.layer_sizes = layer_sizes;
  net.sim_ticks = sim_ticks;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix<Scalar> w(layer_sizes[l + 1], fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
      }
    }
    net.weights.push_back(std::move(w));
    const bool is_output = l + 2 == layer_sizes.size();
    LifParams p = hidden;
    if (is_output) {
      p.beta = output_beta;
      p.spiking = false;
      p.reset = ResetMode::None;
    }
    net.lif.push_back(p);
  }
  net.validate();
  return net;
}

template <typename Scalar>
void lif_step(LayerState<Scalar>& state, const Matrix<Scalar>& current, const LifParams& params,
              Matrix<Scalar>& pre_reset, SpikeMode mode, const SurrogateConfig& surr) {
  const auto beta = static_cast<Scalar>(params.beta);
  const auto theta = static_cast<Scalar>(params.threshold);
  pre_reset.noalias() = beta * state.u + current;
  if (!params.spiking) {
    state.u = pre_reset;
    state.z.setZero();
    return;
  }
  if (mode == SpikeMode::Heaviside) {
    state.z = (pre_reset.array() > theta).template cast<Scalar>();
  } else {
    const auto k = static_cast<Scalar>(surr.slope);
    const auto x = (pre_reset.array() - theta);
    state.z = x / (Scalar(1) + k * x.abs());
  }
  if (params.reset == ResetMode::SubtractThreshold) {
    state.u = pre_reset - theta * state.z;
  } else {
    state.u = pre_reset;
  }
}

template <typename Scalar>
SpikeBatch<Scalar> to_batch(const std::vector<codec::SpikeTrain>& trains) {
  if (trains.empty()) return {};
  const int ticks = trains.front().ticks;
  const int neurons = trains.front().neurons;
  const auto batch = static_cast<Eigen::Index>(trains.size());
  SpikeBatch<Scalar> out(static_cast<std::size_t>(ticks), Matrix<Scalar>::Zero(neurons, batch));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& tr = trains[static_cast<std::size_t>(b)];
    if (tr.ticks != ticks || tr.neurons != neurons) {
      throw Error(ErrorCode::ShapeMismatch, "spike trains in a batch differ in shape");
    }
    for (int t = 0; t < ticks; ++t) {
      for (int n = 0; n < neurons; ++n) {
        if (tr.at(t, n)) out[static_cast<std::size_t>(t)](n, b) = Scalar(1);
      }
    }
  }
  return out;
}

template <typename Scalar>
SpikeBatch<Scalar> to_batch(const codec::SpikeTrain& train) {
  return to_batch<Scalar>(std::vector<codec::SpikeTrain>{train});
}

template <typename Scalar>
Simulator<Scalar>::Simulator(const Network<Scalar>& net, SpikeMode mode, SurrogateConfig surr)
    : net_(&net), mode_(mode), surr_(surr) {
  net.validate();
  ensure_batch(1);
}

template <typename Scalar>
void Simulator<Scalar>::ensure_batch(Eigen::Index batch) {
  const auto layers = net_->num_connections();
  if (state_.size() == layers && state_.front().u.cols() == batch) return;
  state_.assign(layers, {});
  for (std::size_t l = 0; l < layers; ++l) {
    state_[l].u = Matrix<Scalar>::Zero(net_->layer_sizes[l + 1], batch);
    state_[l].z = Matrix<Scalar>::Zero(net_->layer_sizes[l + 1], batch);
  }
}

template <typename Scalar>
void Simulator<Scalar>::reset_state() {
  for (auto& s : state_) s.reset();
}

template <typename Scalar>
bool Simulator<Scalar>::state_is_zero() const {
  for (const auto& s : state_) {
    if (!s.u.isZero(0) || !s.z.isZero(0)) return false;
  }
  return true;
}

template <typename Scalar>
Matrix<Scalar> Simulator<Scalar>::forward(const SpikeBatch<Scalar>& input,
                                          ForwardTrace<Scalar>* trace) {
  const auto& net = *net_;
  if (static_cast<int>(input.size()) != net.sim_ticks) {
    throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(input.size()) +
                                              " ticks, network expects " +
                                              std::to_string(net.sim_ticks));
  }
  const Eigen::Index batch = input.front().cols();
  for (const auto& m : input) {
    if (m.rows() != net.num_inputs() || m.cols() != batch) {
      throw Error(ErrorCode::ShapeMismatch,
                  "input width " + std::to_string(m.rows()) + " does not match layer size " +
                      std::to_string(net.num_inputs()));
    }
  }
  ensure_batch(batch);
  reset_state();

  const std::size_t layers = net.num_connections();
  const auto ticks = static_cast<std::size_t>(net.sim_ticks);
  if (trace) {
    trace->input = input;
    trace->mode = mode_;
    resize_tape(trace->pre_reset, layers, ticks);
    resize_tape(trace->spikes, layers, ticks);
  }

  for (std::size_t t = 0; t < ticks; ++t) {
    const Matrix<Scalar>* below = &input[t];
    for (std::size_t l = 0; l < layers; ++l) {
      mul_spikes(net.weights[l], *below, current_);
      lif_step(state_[l], current_, net.lif[l], pre_, mode_, surr_);
      if (trace) {
        trace->pre_reset[l][t] = pre_;
        trace->spikes[l][t] = state_[l].z;
      }
      below = &state_[l].z;
    }
  }
  return state_.back().u;
}

template <typename Scalar>
Matrix<Scalar> forward(const Network<Scalar>& net, const SpikeBatch<Scalar>& input,
                       ForwardTrace<Scalar>* trace, SpikeMode mode, const SurrogateConfig& surr) {
  Simulator<Scalar> sim(net, mode, surr);
  return sim.forward(input, trace);
}

template <typename Scalar>
std::vector<Matrix<Scalar>> backward(const Network<Scalar>& net, const ForwardTrace<Scalar>& trace,
                                     const Matrix<Scalar>& dl_dq, const SurrogateConfig& surr) {
  const std::size_t layers = net.num_connections();
  const int ticks = trace.ticks();
  const Eigen::Index batch = trace.batch();
  const bool shapes_ok = ticks == net.sim_ticks && trace.pre_reset.size() == layers &&
                         trace.spikes.size() == layers && dl_dq.rows() == net.num_outputs() &&
                         dl_dq.cols() == batch;
  if (!shapes_ok) {
    throw Error(ErrorCode::TraceMismatch, "trace does not match network or upstream gradient");
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (trace.pre_reset[l].size() != static_cast<std::size_t>(ticks) ||
        trace.pre_reset[l].front().rows() != net.layer_sizes[l + 1]) {
      throw Error(ErrorCode::TraceMismatch, "trace layer " + std::to_string(l) +
                                                " does not match network");
    }
  }

  const auto k = static_cast<Scalar>(surr.slope);
  std::vector<Matrix<Scalar>> grads;
  grads.reserve(layers);
  for (const auto& w : net.weights) grads.push_back(Matrix<Scalar>::Zero(w.rows(), w.cols()));

  // carry[l] holds dL/dv_l(t + 1) while sweeping t downward.
  std::vector<Matrix<Scalar>> carry(layers);
  for (std::size_t l = 0; l < layers; ++l) {
    carry[l] = Matrix<Scalar>::Zero(net.layer_sizes[l + 1], batch);
  }
  Matrix<Scalar> gv, gz;

  for (int t = ticks - 1; t >= 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    for (std::size_t li = layers; li-- > 0;) {
      const auto& p = net.lif[li];
      const auto beta = static_cast<Scalar>(p.beta);
      if (li + 1 == layers) {
        gv = beta * carry[li];
        if (t == ticks - 1) gv += dl_dq;
      } else {
        gv = beta * carry[li];
        if (p.spiking) {
          // Upstream gradient through this layer's spikes into layer li + 1.
          gz.noalias() = net.weights[li + 1].transpose() * carry[li + 1];
          const auto x = (trace.pre_reset[li][ut].array() - static_cast<Scalar>(p.threshold)).abs();
          const auto denom = Scalar(1) + k * x;
          gv.array() += gz.array() / (denom * denom);
        }
      }
      carry[li] = gv;
      const Matrix<Scalar>& below = li == 0 ? trace.input[ut] : trace.spikes[li - 1][ut];
      add_outer_spikes(carry[li], below, grads[li]);
    }
  }
  return grads;
}

template struct Network<float>;
template struct Network<double>;
template class Simulator<float>;
template class Simulator<double>;

#define DSQN_SNN_INSTANTIATE(S)                                                                \
  template Network<S> make_network<S>(const std::vector<int>&, int, const LifParams&, double,  \
                                      Rng&);                                                   \
  template void lif_step<S>(LayerState<S>&, const Matrix<S>&, const LifParams&, Matrix<S>&,    \
                            SpikeMode, const SurrogateConfig&);                                \
  template SpikeBatch<S> to_batch<S>(const std::vector<codec::SpikeTrain>&);                   \
  template SpikeBatch<S> to_batch<S>(const codec::SpikeTrain&);                                \
  template Matrix<S> forward<S>(const Network<S>&, const SpikeBatch<S>&, ForwardTrace<S>*,     \
                                SpikeMode, const SurrogateConfig&);                            \
  template std::vector<Matrix<S>> backward<S>(const Network<S>&, const ForwardTrace<S>&,       \
                                              const Matrix<S>&, const SurrogateConfig&);

DSQN_SNN_INSTANTIATE(float)
DSQN_SNN_INSTANTIATE(double)

}  // namespace dsqn::snn
