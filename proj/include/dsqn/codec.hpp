#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "dsqn/rng.hpp"

namespace dsqn::codec {

// Dense tick-major binary raster: data[tick * neurons + neuron].
struct SpikeTrain {
  int ticks = 0;
  int neurons = 0;
  std::vector<std::uint8_t> data;

  SpikeTrain() = default;
  SpikeTrain(int ticks, int neurons)
      : ticks(ticks), neurons(neurons),
        data(static_cast<std::size_t>(ticks) * static_cast<std::size_t>(neurons), 0) {}

  std::uint8_t at(int tick, int neuron) const {
    return data[static_cast<std::size_t>(tick) * neurons + neuron];
  }
  std::uint8_t& at(int tick, int neuron) {
    return data[static_cast<std::size_t>(tick) * neurons + neuron];
  }
  std::size_t count() const;
  std::size_t count(int neuron) const;

  bool operator==(const SpikeTrain&) const = default;
};

struct SpikeEvent {
  int neuron = 0;
  int tick = 0;

  bool operator==(const SpikeEvent&) const = default;
};

// Events sorted by (tick, neuron). The dimensions travel with the list so that
// conversion back to a raster is lossless.
struct SpikeList {
  int ticks = 0;
  int neurons = 0;
  std::vector<SpikeEvent> events;

  bool operator==(const SpikeList&) const = default;
};

struct EncoderConfig {
  int sim_ticks = 10;
  std::vector<double> per_feature_scale;  // empty means all 1.0
  double clamp_max = 1.0;

  // Throws InvalidConfig.
  void validate(std::size_t features) const;
  double scale(std::size_t feature) const {
    return per_feature_scale.empty() ? 1.0 : per_feature_scale[feature];
  }

  bool operator==(const EncoderConfig&) const = default;
};

// Feature i occupies slots (2i, 2i+1): x >= 0 -> (x, 0), x < 0 -> (0, |x|).
// Throws NonFiniteInput.
std::vector<double> signed_split(std::span<const double> obs);

// Independent Bernoulli draw per (tick, neuron), p = min(value * scale, clamp_max).
// Per-feature scales index the original feature, so both slots of a pair
// share a scale. Draw order is tick-major.
SpikeTrain rate_encode(std::span<const double> values, const EncoderConfig& cfg, Rng& rng);

// signed_split followed by rate_encode.
SpikeTrain encode_observation(std::span<const double> obs, const EncoderConfig& cfg, Rng& rng);

SpikeList train_to_spike_list(const SpikeTrain& train);
// Throws ShapeMismatch on out-of-range or unsorted/duplicate events.
SpikeTrain list_to_train(const SpikeList& list);

// Argmax with ties resolved toward the lowest index. Throws EmptyVector.
int decode_action(std::span<const double> potentials);
int decode_action(std::span<const float> potentials);

// CSV with header `neuron_id,tick`.
void write_spike_list_csv(std::ostream& out, const SpikeList& list);

}  // namespace dsqn::codec
