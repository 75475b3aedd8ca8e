#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "dsqn/deploy.hpp"
#include "dsqn/quant.hpp"

namespace dsqn::quant {

struct AblationRow {
  double lambda = 1.0;
  double mean_reward = 0.0;
  int episodes = 0;
  deploy::SweepResult sweep;
  std::vector<Histogram> histograms;  // one per connection layer
};

struct AblationOptions {
  std::vector<double> threshold_grid = deploy::default_threshold_grid();
  int sweep_episodes = 5;
};

// For every lambda: quantize, two-stage threshold sweep, then `episodes`
// closed-loop evaluations with the winning thresholds.
std::vector<AblationRow> lambda_ablation(envs::EnvKind kind, const snn::Network<float>& net,
                                         std::span<const double> lambdas, int episodes,
                                         std::uint64_t seed, const deploy::DeployConfig& base,
                                         const codec::EncoderConfig& encoder,
                                         const AblationOptions& options = {});

// `lambda,mean_reward,episodes`
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
// `bin_center,count` for the 256 integer bins.
void write_histogram_csv(std::ostream& out, const Histogram& hist);

}  // namespace dsqn::quant
