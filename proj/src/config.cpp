#include "dsqn/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "dsqn/error.hpp"

namespace dsqn {

using nlohmann::json;
using nlohmann::ordered_json;

RunConfig task_defaults(envs::EnvKind kind) {
  RunConfig cfg;
  cfg.task = kind;
  const bool cartpole = kind == envs::EnvKind::CartPole;
  cfg.network.layer_sizes = cartpole ? std::vector<int>{8, 64, 64, 2}
                                     : std::vector<int>{12, 256, 256, 3};
  cfg.network.sim_ticks = cartpole ? 10 : 20;
  cfg.network.hidden = {0.8, 0.5, snn::ResetMode::SubtractThreshold, true};
  cfg.network.output_beta = 0.8;
  cfg.encoder.sim_ticks = cfg.network.sim_ticks;
  cfg.encoder.per_feature_scale.assign(static_cast<std::size_t>(envs::observation_size(kind)), 1.0);
  cfg.train.episodes = cartpole ? 1000 : 2000;
  cfg.train.seed = cfg.seed;
  cfg.deploy = deploy::default_deploy_config(kind);
  return cfg;
}

void RunConfig::validate() const {
  train.validate();
  encoder.validate(static_cast<std::size_t>(envs::observation_size(task)));
  const auto& sizes = network.layer_sizes;
  if (sizes.size() < 2) throw Error(ErrorCode::InvalidConfig, "network.layer_sizes needs >= 2 entries");
  if (std::any_of(sizes.begin(), sizes.end(), [](int n) { return n < 1; })) {
    throw Error(ErrorCode::InvalidConfig, "network.layer_sizes entries must be positive");
  }
  if (sizes.front() != 2 * envs::observation_size(task)) {
    throw Error(ErrorCode::DimensionMismatch,
                "network.layer_sizes[0] must be " + std::to_string(2 * envs::observation_size(task)) +
                    " for " + std::string(envs::to_string(task)));
  }
  if (sizes.back() != envs::action_count(task)) {
    throw Error(ErrorCode::DimensionMismatch,
                "network output size must be " + std::to_string(envs::action_count(task)));
  }
  if (network.sim_ticks != encoder.sim_ticks || network.sim_ticks != deploy.sim_ticks) {
    throw Error(ErrorCode::DimensionMismatch, "network, encoder and deploy sim_ticks differ");
  }
  if (deploy.hidden_thresholds.size() != sizes.size() - 2) {
    throw Error(ErrorCode::DimensionMismatch, "deploy.hidden_thresholds needs one entry per hidden layer");
  }
  if (!(network.hidden.beta >= 0.0 && network.hidden.beta <= 1.0) ||
      !(network.output_beta >= 0.0 && network.output_beta <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "network beta values must lie in [0, 1]");
  }
  if (!(network.hidden.threshold > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "network.threshold must be positive");
  }
  if (!(network.surrogate.slope > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "network.surrogate_slope must be positive");
  }
}

namespace {

std::string reset_name(snn::ResetMode m) {
  return m == snn::ResetMode::SubtractThreshold ? "subtract" : "none";
}

snn::ResetMode parse_reset(const std::string& s, const std::string& field) {
  if (s == "subtract") return snn::ResetMode::SubtractThreshold;
  if (s == "none") return snn::ResetMode::None;
  throw Error(ErrorCode::InvalidConfig, "field '" + field + "' must be \"subtract\" or \"none\"");
}

// Required-field accessor that reports the dotted path of what is missing.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  Reader section(const std::string& key) const {
    const auto& v = at(key);
    if (!v.is_object()) fail(key, "must be an object");
    return Reader(v, full(key));
  }

  template <typename T>
  T get(const std::string& key) const {
    const auto& v = at(key);
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const json& raw(const std::string& key) const { return at(key); }

 private:
  const json& at(const std::string& key) const {
    if (!j_.contains(key)) {
      throw Error(ErrorCode::InvalidConfig, "missing field '" + full(key) + "'");
    }
    return j_.at(key);
  }
  std::string full(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw Error(ErrorCode::InvalidConfig, "field '" + full(key) + "' " + what);
  }

  const json& j_;
  std::string path_;
};

std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, "config syntax error at " + line_col(text, e.byte) + ": " +
                                              e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  Reader root(j, "");
  const int version = root.get<int>("format_version");
  if (version != kFormatVersion) {
    throw Error(ErrorCode::InvalidConfig, "unsupported format_version " + std::to_string(version));
  }

  RunConfig cfg;
  cfg.task = envs::parse_env_kind(root.get<std::string>("task"));
  cfg.seed = root.get<std::uint64_t>("seed");
  cfg.train.seed = cfg.seed;

  const auto t = root.section("train");
  cfg.train.gamma = t.get<double>("gamma");
  cfg.train.learning_rate = t.get<double>("learning_rate");
  cfg.train.batch_size = t.get<std::size_t>("batch_size");
  cfg.train.replay_capacity = t.get<std::size_t>("replay_capacity");
  cfg.train.target_update_every = t.get<int>("target_update_every");
  cfg.train.eps_start = t.get<double>("eps_start");
  cfg.train.eps_end = t.get<double>("eps_end");
  cfg.train.eps_decay_steps = t.get<double>("eps_decay_steps");
  cfg.train.episodes = t.get<int>("episodes");
  cfg.train.eval_every = t.get<int>("eval_every");
  cfg.train.eval_episodes = t.get<int>("eval_episodes");
  if (t.raw("early_stop_reward").is_null()) {
    cfg.train.early_stop_reward.reset();
  } else {
    cfg.train.early_stop_reward = t.get<double>("early_stop_reward");
  }

  const auto n = root.section("network");
  cfg.network.layer_sizes = n.get<std::vector<int>>("layer_sizes");
  cfg.network.sim_ticks = n.get<int>("sim_ticks");
  cfg.network.hidden.beta = n.get<double>("beta");
  cfg.network.hidden.threshold = n.get<double>("threshold");
  cfg.network.hidden.reset = parse_reset(n.get<std::string>("reset"), "network.reset");
  cfg.network.hidden.spiking = true;
  cfg.network.output_beta = n.get<double>("output_beta");
  cfg.network.surrogate.slope = n.get<double>("surrogate_slope");

  const auto e = root.section("encoder");
  cfg.encoder.sim_ticks = cfg.network.sim_ticks;
  cfg.encoder.per_feature_scale = e.get<std::vector<double>>("per_feature_scale");
  cfg.encoder.clamp_max = e.get<double>("clamp_max");

  const auto d = root.section("deploy");
  cfg.deploy.sim_ticks = cfg.network.sim_ticks;
  cfg.deploy.tick_seconds = d.get<double>("tick_seconds");
  cfg.deploy.output_threshold = d.get<double>("output_threshold");
  cfg.deploy.output_beta = d.get<double>("output_beta");
  cfg.deploy.reset_between_steps = d.get<bool>("reset_between_steps");
  cfg.deploy.hidden_thresholds = d.get<std::vector<double>>("hidden_thresholds");

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

ordered_json to_json(const RunConfig& cfg) {
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["task"] = std::string(envs::to_string(cfg.task));
  j["seed"] = cfg.seed;
  auto& t = j["train"];
  t["gamma"] = cfg.train.gamma;
  t["learning_rate"] = cfg.train.learning_rate;
  t["batch_size"] = cfg.train.batch_size;
  t["replay_capacity"] = cfg.train.replay_capacity;
  t["target_update_every"] = cfg.train.target_update_every;
  t["eps_start"] = cfg.train.eps_start;
  t["eps_end"] = cfg.train.eps_end;
  t["eps_decay_steps"] = cfg.train.eps_decay_steps;
  t["episodes"] = cfg.train.episodes;
  t["eval_every"] = cfg.train.eval_every;
  t["eval_episodes"] = cfg.train.eval_episodes;
  if (cfg.train.early_stop_reward) {
    t["early_stop_reward"] = *cfg.train.early_stop_reward;
  } else {
    t["early_stop_reward"] = nullptr;
  }
  auto& n = j["network"];
  n["layer_sizes"] = cfg.network.layer_sizes;
  n["sim_ticks"] = cfg.network.sim_ticks;
  n["beta"] = cfg.network.hidden.beta;
  n["threshold"] = cfg.network.hidden.threshold;
  n["reset"] = reset_name(cfg.network.hidden.reset);
  n["output_beta"] = cfg.network.output_beta;
  n["surrogate_slope"] = cfg.network.surrogate.slope;
  auto& e = j["encoder"];
  e["per_feature_scale"] = cfg.encoder.per_feature_scale;
  e["clamp_max"] = cfg.encoder.clamp_max;
  auto& d = j["deploy"];
  d["tick_seconds"] = cfg.deploy.tick_seconds;
  d["output_threshold"] = cfg.deploy.output_threshold;
  d["output_beta"] = cfg.deploy.output_beta;
  d["reset_between_steps"] = cfg.deploy.reset_between_steps;
  d["hidden_thresholds"] = cfg.deploy.hidden_thresholds;
  return j;
}

}  // namespace dsqn
