#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dsqn/codec.hpp"
#include "dsqn/deploy.hpp"
#include "dsqn/dqn.hpp"
#include "dsqn/envs.hpp"

namespace dsqn {

inline constexpr int kFormatVersion = 1;

struct RunConfig {
  envs::EnvKind task = envs::EnvKind::CartPole;
  std::uint64_t seed = 0;
  dqn::TrainConfig train;
  dqn::NetConfig network;
  codec::EncoderConfig encoder;
  deploy::DeployConfig deploy;

  // Cross-checks dimensions between the sections. Throws InvalidConfig /
  // DimensionMismatch.
  void validate() const;
};

// Task defaults: [8,64,64,2] with 10 ticks for CartPole, [12,256,256,3] with
// 20 ticks for Acrobot; beta 0.8, threshold 0.5, subtractive reset.
RunConfig task_defaults(envs::EnvKind kind);

// Strict parse: every field of the schema must be present. Errors name the
// offending field, or the line and column for syntax errors.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

nlohmann::ordered_json to_json(const RunConfig& cfg);

}  // namespace dsqn
