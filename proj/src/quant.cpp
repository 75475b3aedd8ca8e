#include "dsqn/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsqn/error.hpp"

namespace dsqn::quant {

namespace {

double snapped_floor(double x) {
  const double nearest = std::nearbyint(x);
  if (std::abs(x - nearest) <= 1e-12 * std::max(1.0, std::abs(x))) return nearest;
  return std::floor(x);
}

}  // namespace

QuantLayer quantize_layer(const Eigen::MatrixXd& weights, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::InvalidConfig, "lambda must be positive and finite");
  }
  if (!weights.allFinite()) {
    throw Error(ErrorCode::NonFiniteInput, "weights must be finite");
  }
  QuantLayer layer;
  layer.lambda = lambda;
  layer.q_weights = Int8Matrix::Zero(weights.rows(), weights.cols());
  layer.source_max = weights.size() ? weights.cwiseAbs().maxCoeff() : 0.0;
  if (layer.source_max == 0.0) {
    layer.lambda_s = 0.0;
    return layer;
  }
  layer.lambda_s = 127.0 / layer.source_max;
  for (Eigen::Index c = 0; c < weights.cols(); ++c) {
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
      const double v = snapped_floor(weights(r, c) * lambda * layer.lambda_s);
      const double clipped = std::clamp(v, static_cast<double>(kQMin), static_cast<double>(kQMax));
      layer.q_weights(r, c) = static_cast<std::int8_t>(clipped);
    }
  }
  return layer;
}

QuantNetwork quantize_network(const snn::Network<float>& net, double lambda) {
  net.validate();
  QuantNetwork q;
  q.layer_sizes = net.layer_sizes;
  q.lif = net.lif;
  q.sim_ticks = net.sim_ticks;
  q.lambda = lambda;
  for (const auto& w : net.weights) q.layers.push_back(quantize_layer(w.cast<double>(), lambda));
  return q;
}

std::vector<Histogram> weight_histograms(const QuantNetwork& net) {
  std::vector<Histogram> out;
  for (const auto& layer : net.layers) {
    Histogram h{};
    const auto* data = layer.q_weights.data();
    for (Eigen::Index i = 0; i < layer.q_weights.size(); ++i) {
      ++h[static_cast<std::size_t>(static_cast<int>(data[i]) - kQMin)];
    }
    out.push_back(h);
  }
  return out;
}

}  // namespace dsqn::quant
