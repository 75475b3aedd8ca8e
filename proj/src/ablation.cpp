#include "dsqn/ablation.hpp"

#include <ostream>

#include "dsqn/error.hpp"
#include "dsqn/format.hpp"
#include "dsqn/rng.hpp"

namespace dsqn::quant {

namespace {
constexpr std::uint64_t kStreamSweep = 21;
constexpr std::uint64_t kStreamEval = 22;
}  // namespace

std::vector<AblationRow> lambda_ablation(envs::EnvKind kind, const snn::Network<float>& net,
                                         std::span<const double> lambdas, int episodes,
                                         std::uint64_t seed, const deploy::DeployConfig& base,
                                         const codec::EncoderConfig& encoder,
                                         const AblationOptions& options) {
  if (lambdas.empty()) throw Error(ErrorCode::EmptyVector, "lambda grid is empty");
  if (episodes < 1) throw Error(ErrorCode::InvalidConfig, "episodes must be >= 1");
  std::vector<AblationRow> rows;
  for (double lambda : lambdas) {
    AblationRow row;
    row.lambda = lambda;
    row.episodes = episodes;
    const auto qnet = quantize_network(net, lambda);
    row.histograms = weight_histograms(qnet);
    row.sweep = deploy::threshold_sweep(kind, qnet, base, encoder, options.threshold_grid,
                                        options.sweep_episodes, derive_seed(seed, kStreamSweep));
    deploy::DeployConfig tuned = base;
    tuned.hidden_thresholds.assign(row.sweep.best_thresholds.begin(),
                                   row.sweep.best_thresholds.end());
    const auto rewards =
        deploy::evaluate(kind, qnet, tuned, encoder, episodes, derive_seed(seed, kStreamEval));
    double sum = 0.0;
    for (double r : rewards) sum += r;
    row.mean_reward = sum / static_cast<double>(rewards.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "lambda,mean_reward,episodes\n";
  for (const auto& r : rows) out << fmt(r.lambda) << ',' << fmt(r.mean_reward) << ',' << r.episodes << '\n';
}

void write_histogram_csv(std::ostream& out, const Histogram& hist) {
  out << "bin_center,count\n";
  for (std::size_t i = 0; i < hist.size(); ++i) {
    out << static_cast<int>(i) + kQMin << ',' << hist[i] << '\n';
  }
}

}  // namespace dsqn::quant
