#include "dsqn/codec.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "dsqn/error.hpp"

namespace dsqn::codec {

std::size_t SpikeTrain::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

std::size_t SpikeTrain::count(int neuron) const {
  std::size_t n = 0;
  for (int t = 0; t < ticks; ++t) n += at(t, neuron);
  return n;
}

void EncoderConfig::validate(std::size_t features) const {
  if (sim_ticks < 1) throw Error(ErrorCode::InvalidConfig, "sim_ticks must be >= 1");
  if (!(clamp_max > 0.0) || !std::isfinite(clamp_max)) {
    throw Error(ErrorCode::InvalidConfig, "clamp_max must be positive and finite");
  }
  if (!per_feature_scale.empty() && per_feature_scale.size() != features) {
    throw Error(ErrorCode::InvalidConfig,
                "per_feature_scale has " + std::to_string(per_feature_scale.size()) +
                    " entries, expected " + std::to_string(features));
  }
  for (double s : per_feature_scale) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorCode::InvalidConfig, "per_feature_scale entries must be positive and finite");
    }
  }
}

std::vector<double> signed_split(std::span<const double> obs) {
  std::vector<double> out(obs.size() * 2, 0.0);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double x = obs[i];
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::NonFiniteInput, "observation component " + std::to_string(i) +
                                                 " is not finite");
    }
    if (x >= 0.0) {
      out[2 * i] = x;
    } else {
      out[2 * i + 1] = -x;
    }
  }
  return out;
}

SpikeTrain rate_encode(std::span<const double> values, const EncoderConfig& cfg, Rng& rng) {
  const int n = static_cast<int>(values.size());
  std::vector<double> p(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double scaled = values[i] * cfg.scale(i / 2);
    p[i] = std::min(std::max(scaled, 0.0), cfg.clamp_max);
  }
  SpikeTrain train(cfg.sim_ticks, n);
  for (int t = 0; t < cfg.sim_ticks; ++t) {
    for (int i = 0; i < n; ++i) {
      train.at(t, i) = rng.bernoulli(p[i]) ? 1 : 0;
    }
  }
  return train;
}

SpikeTrain encode_observation(std::span<const double> obs, const EncoderConfig& cfg, Rng& rng) {
  const auto split = signed_split(obs);
  return rate_encode(split, cfg, rng);
}

SpikeList train_to_spike_list(const SpikeTrain& train) {
  SpikeList list{train.ticks, train.neurons, {}};
  for (int t = 0; t < train.ticks; ++t) {
    for (int n = 0; n < train.neurons; ++n) {
      if (train.at(t, n)) list.events.push_back({n, t});
    }
  }
  return list;
}

SpikeTrain list_to_train(const SpikeList& list) {
  SpikeTrain train(list.ticks, list.neurons);
  const SpikeEvent* prev = nullptr;
  for (const auto& e : list.events) {
    if (e.neuron < 0 || e.neuron >= list.neurons || e.tick < 0 || e.tick >= list.ticks) {
      throw Error(ErrorCode::ShapeMismatch, "spike event (" + std::to_string(e.neuron) + "," +
                                                std::to_string(e.tick) + ") out of range");
    }
    if (prev && (e.tick < prev->tick || (e.tick == prev->tick && e.neuron <= prev->neuron))) {
      throw Error(ErrorCode::ShapeMismatch, "spike list is not strictly sorted by (tick, neuron)");
    }
    train.at(e.tick, e.neuron) = 1;
    prev = &e;
  }
  return train;
}

namespace {
template <typename T>
int argmax_lowest(std::span<const T> v) {
  if (v.empty()) throw Error(ErrorCode::EmptyVector, "decode_action on empty vector");
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}
}  // namespace

int decode_action(std::span<const double> potentials) { return argmax_lowest(potentials); }
int decode_action(std::span<const float> potentials) { return argmax_lowest(potentials); }

void write_spike_list_csv(std::ostream& out, const SpikeList& list) {
  out << "neuron_id,tick\n";
  for (const auto& e : list.events) out << e.neuron << ',' << e.tick << '\n';
}

}  // namespace dsqn::codec
