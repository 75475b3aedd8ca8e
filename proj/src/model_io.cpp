#include "dsqn/model_io.hpp"

#include <fstream>
#include <sstream>

#include "dsqn/error.hpp"

namespace dsqn {

using nlohmann::ordered_json;
// Key order is preserved on load so the config snapshot round-trips exactly.
using json = nlohmann::ordered_json;

const std::vector<int>& ModelFile::layer_sizes() const {
  return quantized() ? quant_net().layer_sizes : float_net().layer_sizes;
}

namespace {

ordered_json lif_to_json(const snn::LifParams& p) {
  ordered_json j;
  j["beta"] = p.beta;
  j["threshold"] = p.threshold;
  j["reset"] = p.reset == snn::ResetMode::SubtractThreshold ? "subtract" : "none";
  j["spiking"] = p.spiking;
  return j;
}

snn::LifParams lif_from_json(const json& j) {
  snn::LifParams p;
  p.beta = j.at("beta").get<double>();
  p.threshold = j.at("threshold").get<double>();
  const auto reset = j.at("reset").get<std::string>();
  if (reset == "subtract") {
    p.reset = snn::ResetMode::SubtractThreshold;
  } else if (reset == "none") {
    p.reset = snn::ResetMode::None;
  } else {
    throw Error(ErrorCode::InvalidConfig, "unknown reset mode '" + reset + "'");
  }
  p.spiking = j.at("spiking").get<bool>();
  return p;
}

// Row-major nested arrays.
template <typename M>
ordered_json matrix_to_json(const M& m) {
  ordered_json rows = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered_json row = ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if constexpr (std::is_same_v<typename M::Scalar, std::int8_t>) {
        row.push_back(static_cast<int>(m(r, c)));
      } else {
        row.push_back(static_cast<double>(m(r, c)));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <typename M>
M matrix_from_json(const json& j, int rows, int cols) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw Error(ErrorCode::ShapeMismatch, "weight matrix row count mismatch");
  }
  M m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw Error(ErrorCode::ShapeMismatch, "weight matrix column count mismatch");
    }
    for (int c = 0; c < cols; ++c) {
      if constexpr (std::is_same_v<typename M::Scalar, std::int8_t>) {
        const int v = row[static_cast<std::size_t>(c)].get<int>();
        if (v < quant::kQMin || v > quant::kQMax) {
          throw Error(ErrorCode::InvalidConfig, "quantized weight out of int8 range");
        }
        m(r, c) = static_cast<std::int8_t>(v);
      } else {
        m(r, c) = static_cast<typename M::Scalar>(row[static_cast<std::size_t>(c)].get<double>());
      }
    }
  }
  return m;
}

}  // namespace

ordered_json model_to_json(const ModelFile& model) {
  ordered_json j;
  j["format_version"] = model.format_version;
  j["kind"] = model.quantized() ? "quantized" : "float";
  j["task"] = std::string(envs::to_string(model.task));
  j["seed"] = model.seed;

  const auto& sizes = model.layer_sizes();
  j["layer_sizes"] = sizes;
  ordered_json lif = ordered_json::array();
  if (model.quantized()) {
    const auto& q = model.quant_net();
    j["sim_ticks"] = q.sim_ticks;
    for (const auto& p : q.lif) lif.push_back(lif_to_json(p));
    j["lif"] = lif;
    ordered_json quant;
    quant["lambda"] = q.lambda;
    ordered_json layers = ordered_json::array();
    for (const auto& l : q.layers) {
      ordered_json lj;
      lj["lambda"] = l.lambda;
      lj["lambda_s"] = l.lambda_s;
      lj["source_max"] = l.source_max;
      lj["q_weights"] = matrix_to_json(l.q_weights);
      layers.push_back(std::move(lj));
    }
    quant["layers"] = std::move(layers);
    j["quantization"] = std::move(quant);
  } else {
    const auto& f = model.float_net();
    j["sim_ticks"] = f.sim_ticks;
    for (const auto& p : f.lif) lif.push_back(lif_to_json(p));
    j["lif"] = lif;
    ordered_json weights = ordered_json::array();
    for (const auto& w : f.weights) weights.push_back(matrix_to_json(w));
    j["weights"] = std::move(weights);
  }

  ordered_json enc;
  enc["sim_ticks"] = model.encoder.sim_ticks;
  enc["per_feature_scale"] = model.encoder.per_feature_scale;
  enc["clamp_max"] = model.encoder.clamp_max;
  j["encoder"] = std::move(enc);

  ordered_json dep;
  dep["tick_seconds"] = model.deploy.tick_seconds;
  dep["sim_ticks"] = model.deploy.sim_ticks;
  dep["output_threshold"] = model.deploy.output_threshold;
  dep["output_beta"] = model.deploy.output_beta;
  dep["reset_between_steps"] = model.deploy.reset_between_steps;
  dep["hidden_thresholds"] = model.deploy.hidden_thresholds;
  dep["thresholds_tuned"] = model.thresholds_tuned;
  j["deploy"] = std::move(dep);

  j["config"] = model.config;
  return j;
}

ModelFile model_from_json(const ordered_json& j) {
  try {
    ModelFile m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
      throw Error(ErrorCode::InvalidConfig,
                  "unsupported model format_version " + std::to_string(m.format_version));
    }
    m.task = envs::parse_env_kind(j.at("task").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const int ticks = j.at("sim_ticks").get<int>();
    std::vector<snn::LifParams> lif;
    for (const auto& p : j.at("lif")) lif.push_back(lif_from_json(p));
    if (sizes.size() < 2 || lif.size() != sizes.size() - 1) {
      throw Error(ErrorCode::ShapeMismatch, "layer_sizes and lif disagree");
    }

    const auto kind = j.at("kind").get<std::string>();
    if (kind == "float") {
      snn::Network<float> net{sizes, {}, lif, ticks};
      const auto& weights = j.at("weights");
      if (weights.size() != sizes.size() - 1) {
        throw Error(ErrorCode::ShapeMismatch, "weights count does not match layer_sizes");
      }
      for (std::size_t l = 0; l < weights.size(); ++l) {
        net.weights.push_back(
            matrix_from_json<snn::Matrix<float>>(weights[l], sizes[l + 1], sizes[l]));
      }
      net.validate();
      m.network = std::move(net);
    } else if (kind == "quantized") {
      quant::QuantNetwork q;
      q.layer_sizes = sizes;
      q.lif = lif;
      q.sim_ticks = ticks;
      const auto& qj = j.at("quantization");
      q.lambda = qj.at("lambda").get<double>();
      const auto& layers = qj.at("layers");
      if (layers.size() != sizes.size() - 1) {
        throw Error(ErrorCode::ShapeMismatch, "quantized layer count does not match layer_sizes");
      }
      for (std::size_t l = 0; l < layers.size(); ++l) {
        quant::QuantLayer ql;
        ql.lambda = layers[l].at("lambda").get<double>();
        ql.lambda_s = layers[l].at("lambda_s").get<double>();
        ql.source_max = layers[l].at("source_max").get<double>();
        ql.q_weights =
            matrix_from_json<quant::Int8Matrix>(layers[l].at("q_weights"), sizes[l + 1], sizes[l]);
        q.layers.push_back(std::move(ql));
      }
      m.network = std::move(q);
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + kind + "'");
    }

    const auto& enc = j.at("encoder");
    m.encoder.sim_ticks = enc.at("sim_ticks").get<int>();
    m.encoder.per_feature_scale = enc.at("per_feature_scale").get<std::vector<double>>();
    m.encoder.clamp_max = enc.at("clamp_max").get<double>();

    const auto& dep = j.at("deploy");
    m.deploy.tick_seconds = dep.at("tick_seconds").get<double>();
    m.deploy.sim_ticks = dep.at("sim_ticks").get<int>();
    m.deploy.output_threshold = dep.at("output_threshold").get<double>();
    m.deploy.output_beta = dep.at("output_beta").get<double>();
    m.deploy.reset_between_steps = dep.at("reset_between_steps").get<bool>();
    m.deploy.hidden_thresholds = dep.at("hidden_thresholds").get<std::vector<double>>();
    m.thresholds_tuned = dep.at("thresholds_tuned").get<bool>();

    m.config = j.at("config");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("malformed model file: ") + e.what());
  }
}

void save_model(const ModelFile& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write model '" + path + "'");
  out << model_to_json(model).dump(1) << '\n';
  if (!out) throw Error(ErrorCode::Io, "failed writing model '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, "model '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace dsqn
