#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "dsqn/codec.hpp"
#include "dsqn/deploy.hpp"
#include "dsqn/envs.hpp"
#include "dsqn/quant.hpp"
#include "dsqn/snn.hpp"

namespace dsqn {

// On-disk model: a float network straight out of training or its quantized
// descendant, plus everything needed to run it closed-loop.
struct ModelFile {
  int format_version = 1;
  envs::EnvKind task = envs::EnvKind::CartPole;
  std::variant<snn::Network<float>, quant::QuantNetwork> network;
  codec::EncoderConfig encoder;
  deploy::DeployConfig deploy;  // hidden thresholds are the swept values once tuned
  bool thresholds_tuned = false;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config;  // snapshot of the run config used for training

  bool quantized() const { return std::holds_alternative<quant::QuantNetwork>(network); }
  const snn::Network<float>& float_net() const { return std::get<snn::Network<float>>(network); }
  const quant::QuantNetwork& quant_net() const { return std::get<quant::QuantNetwork>(network); }
  const std::vector<int>& layer_sizes() const;

  bool operator==(const ModelFile&) const = default;
};

nlohmann::ordered_json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::ordered_json& j);

// Throws Io / InvalidConfig.
void save_model(const ModelFile& model, const std::string& path);
ModelFile load_model(const std::string& path);

}  // namespace dsqn
