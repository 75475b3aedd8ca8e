// Command-line front end: train -> quantize -> sweep -> eval, plus ablate and
// export-spikes. Every failure ends with one `error: <Code>: <message>` line on
// stderr and a nonzero exit status.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsqn/ablation.hpp"
#include "dsqn/codec.hpp"
#include "dsqn/config.hpp"
#include "dsqn/deploy.hpp"
#include "dsqn/dqn.hpp"
#include "dsqn/envs.hpp"
#include "dsqn/error.hpp"
#include "dsqn/format.hpp"
#include "dsqn/model_io.hpp"
#include "dsqn/quant.hpp"

namespace fs = std::filesystem;
using namespace dsqn;

namespace {

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  body(out);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path.string() + "'");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

struct TrainArgs {
  std::string config_path;
  std::string task;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::optional<double> early_stop;
  std::string out_dir = ".";
  bool quiet = false;
};

RunConfig resolve_config(const std::string& config_path, const std::string& task) {
  if (!config_path.empty()) {
    auto cfg = load_run_config(config_path);
    if (!task.empty() && envs::parse_env_kind(task) != cfg.task) {
      throw Error(ErrorCode::InvalidConfig, "--task disagrees with the config file task");
    }
    return cfg;
  }
  if (task.empty()) throw Error(ErrorCode::InvalidConfig, "one of --config or --task is required");
  return task_defaults(envs::parse_env_kind(task));
}

void cmd_train(const TrainArgs& a) {
  RunConfig cfg = resolve_config(a.config_path, a.task);
  cfg.seed = *a.seed;
  if (a.episodes) cfg.train.episodes = *a.episodes;
  if (a.early_stop) cfg.train.early_stop_reward = *a.early_stop;
  cfg.train.seed = cfg.seed;
  cfg.validate();

  dqn::ProgressFn progress;
  if (!a.quiet) {
    progress = [](const dqn::CurvePoint& p, const dqn::CheckpointEval* check) {
      if (!check) return;
      std::cerr << "episode " << p.episode + 1 << "  reward " << fmt(p.reward) << "  eps "
                << fmt(p.epsilon) << "  greedy " << fmt(check->mean_reward) << '\n';
    };
  }
  const auto result = dqn::train(cfg.task, cfg.train, cfg.network, cfg.encoder, progress);

  ModelFile model;
  model.task = cfg.task;
  model.network = result.best;
  model.encoder = cfg.encoder;
  model.deploy = cfg.deploy;
  model.seed = cfg.seed;
  model.config = to_json(cfg);

  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  save_model(model, (dir / "model.json").string());
  write_file(dir / "curve.csv", [&](std::ostream& o) { dqn::write_curve_csv(o, result.curve); });
  write_file(dir / "checkpoints.csv", [&](std::ostream& o) {
    o << "episode,mean_reward\n";
    for (const auto& e : result.evals) o << e.episode << ',' << fmt(e.mean_reward) << '\n';
  });
  std::cout << "best greedy " << fmt(result.best_eval) << " at episode " << result.best_episode + 1
            << ", model written to " << (dir / "model.json").string() << '\n';
}

void cmd_quantize(const std::string& in, double lambda, const std::string& out) {
  auto model = load_model(in);
  if (model.quantized()) throw Error(ErrorCode::AlreadyQuantized, "'" + in + "' is already quantized");
  model.network = quant::quantize_network(model.float_net(), lambda);
  model.thresholds_tuned = false;
  save_model(model, out);
  std::cout << "quantized with lambda " << fmt(lambda) << " to " << out << '\n';
}

void cmd_sweep(const std::string& in, std::vector<double> grid, int episodes,
               std::optional<std::uint64_t> seed, const std::string& out_dir,
               const std::string& out_model) {
  auto model = load_model(in);
  if (!model.quantized()) {
    throw Error(ErrorCode::FloatModelNotSweepable, "'" + in + "' holds a float model; quantize it first");
  }
  if (grid.empty()) grid = deploy::default_threshold_grid();
  const auto result = deploy::threshold_sweep(model.task, model.quant_net(), model.deploy,
                                              model.encoder, grid, episodes,
                                              seed.value_or(model.seed));
  write_file(fs::path(out_dir) / "sweep.csv", [&](std::ostream& o) { deploy::write_sweep_csv(o, result); });
  model.deploy.hidden_thresholds.assign(result.best_thresholds.begin(), result.best_thresholds.end());
  model.thresholds_tuned = true;
  save_model(model, out_model.empty() ? in : out_model);
  std::cout << "best thresholds " << fmt(result.best_thresholds[0]) << ", "
            << fmt(result.best_thresholds[1]) << '\n';
}

struct EvalArgs {
  std::string model_path;
  std::uint64_t seed = 0;
  int episodes = 10;
  bool paced = false;
  bool record = false;
  bool accumulate = false;
  std::string out_dir = ".";
};

void cmd_eval(const EvalArgs& a) {
  const auto model = load_model(a.model_path);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::vector<double> rewards;
  std::vector<int> steps;

  if (!model.quantized()) {
    if (a.paced || a.record || a.accumulate) {
      throw Error(ErrorCode::InvalidConfig,
                  "--paced, --record and --accumulate need a quantized model");
    }
    const auto& net = model.float_net();
    if (net.num_inputs() != 2 * envs::observation_size(model.task) ||
        net.num_outputs() != envs::action_count(model.task)) {
      throw Error(ErrorCode::DimensionMismatch, "network dimensions do not match the task");
    }
    rewards = dqn::evaluate_greedy(model.task, net, model.encoder, a.episodes, a.seed, &steps);
  } else {
    auto cfg = model.deploy;
    if (a.accumulate) cfg.reset_between_steps = false;
    std::vector<deploy::PacingRecord> pacing;
    for (int i = 0; i < a.episodes; ++i) {
      const bool record = a.record && i == 0;
      auto m = deploy::run_episode(model.task, model.quant_net(), cfg, model.encoder,
                                   derive_seed(a.seed, static_cast<std::uint64_t>(i)), record,
                                   a.paced);
      rewards.push_back(m.total_reward);
      steps.push_back(m.steps);
      pacing.insert(pacing.end(), m.pacing.begin(), m.pacing.end());
      if (record) {
        const auto& rec = *m.recording;
        write_file(dir / "voltages.csv", [&](std::ostream& o) { deploy::write_voltages_csv(o, rec); });
        for (std::size_t l = 0; l < rec.layer_spikes.size(); ++l) {
          write_file(dir / ("spikes_" + std::to_string(l) + ".csv"),
                     [&](std::ostream& o) { deploy::write_spikes_csv(o, rec.layer_spikes[l]); });
        }
      }
    }
    // Wall-clock measurements live apart from the deterministic outputs.
    write_file(dir / "pacing.csv", [&](std::ostream& o) { deploy::write_pacing_csv(o, pacing); });
    double total = 0.0, worst = 0.0;
    for (const auto& p : pacing) {
      total += p.t_inf;
      worst = std::max(worst, p.t_inf);
    }
    write_file(dir / "timing.csv", [&](std::ostream& o) {
      o << "steps,mean_t_inf,max_t_inf\n"
        << pacing.size() << ',' << fmt(pacing.empty() ? 0.0 : total / pacing.size()) << ','
        << fmt(worst) << '\n';
    });
  }

  write_file(dir / "metrics.csv", [&](std::ostream& o) {
    o << "episode,total_reward,steps\n";
    for (std::size_t i = 0; i < rewards.size(); ++i) {
      o << i << ',' << fmt(rewards[i]) << ',' << steps[i] << '\n';
    }
  });
  const double mean = mean_of(rewards);
  const double lo = rewards.empty() ? 0.0 : *std::min_element(rewards.begin(), rewards.end());
  const double hi = rewards.empty() ? 0.0 : *std::max_element(rewards.begin(), rewards.end());
  write_file(dir / "summary.csv", [&](std::ostream& o) {
    o << "episodes,mean_reward,min_reward,max_reward\n"
      << rewards.size() << ',' << fmt(mean) << ',' << fmt(lo) << ',' << fmt(hi) << '\n';
  });
  std::cout << "mean reward " << fmt(mean) << " over " << rewards.size() << " episodes\n";
}

void cmd_ablate(const std::string& in, const std::vector<double>& lambdas, int episodes,
                std::optional<std::uint64_t> seed, std::vector<double> grid, int sweep_episodes,
                const std::string& out_dir) {
  const auto model = load_model(in);
  if (model.quantized()) {
    throw Error(ErrorCode::AlreadyQuantized, "ablation needs the float model it quantizes itself");
  }
  quant::AblationOptions opts;
  if (!grid.empty()) opts.threshold_grid = std::move(grid);
  opts.sweep_episodes = sweep_episodes;
  const auto rows = quant::lambda_ablation(model.task, model.float_net(), lambdas, episodes,
                                           seed.value_or(model.seed), model.deploy, model.encoder, opts);
  const fs::path dir(out_dir);
  write_file(dir / "ablation.csv", [&](std::ostream& o) { quant::write_ablation_csv(o, rows); });
  for (const auto& row : rows) {
    const std::string tag = "lambda_" + fmt(row.lambda);
    write_file(dir / ("sweep_" + tag + ".csv"),
               [&](std::ostream& o) { deploy::write_sweep_csv(o, row.sweep); });
    for (std::size_t l = 0; l < row.histograms.size(); ++l) {
      write_file(dir / ("hist_" + tag + "_layer" + std::to_string(l) + ".csv"),
                 [&](std::ostream& o) { quant::write_histogram_csv(o, row.histograms[l]); });
    }
    std::cout << "lambda " << fmt(row.lambda) << "  mean reward " << fmt(row.mean_reward) << '\n';
  }
}

void cmd_export_spikes(const std::string& model_path, const std::string& config_path,
                       const std::string& task, std::uint64_t seed, std::vector<double> obs,
                       const std::string& out) {
  envs::EnvKind kind;
  codec::EncoderConfig encoder;
  if (!model_path.empty()) {
    const auto model = load_model(model_path);
    kind = model.task;
    encoder = model.encoder;
  } else {
    const auto cfg = resolve_config(config_path, task);
    kind = cfg.task;
    encoder = cfg.encoder;
  }
  if (obs.empty()) {
    obs = envs::env_reset(kind, derive_seed(seed, 1)).observation;
  } else if (static_cast<int>(obs.size()) != envs::observation_size(kind)) {
    throw Error(ErrorCode::DimensionMismatch,
                "--obs needs " + std::to_string(envs::observation_size(kind)) + " values");
  }
  Rng rng(derive_seed(seed, 2));
  const auto list = codec::train_to_spike_list(codec::encode_observation(obs, encoder, rng));
  write_file(out, [&](std::ostream& o) { codec::write_spike_list_csv(o, list); });
  std::cout << list.events.size() << " events written to " << out << '\n';
}

void cmd_config(const std::string& task, const std::string& out) {
  const auto cfg = task_defaults(envs::parse_env_kind(task));
  const std::string text = to_json(cfg).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_file(out, [&](std::ostream& o) { o << text; });
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep spiking Q-network toolkit"};
  app.require_subcommand(1);
  const std::vector<std::string> tasks{"cartpole", "acrobot"};

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a float spiking Q-network");
  train->add_option("--config", ta.config_path, "Run config (JSON)")->check(CLI::ExistingFile);
  train->add_option("--task", ta.task, "Use the task defaults")->check(CLI::IsMember(tasks));
  train->add_option("--seed", ta.seed, "Base seed")->required();
  train->add_option("--episodes", ta.episodes, "Override train.episodes");
  train->add_option("--early-stop", ta.early_stop, "Stop once a greedy checkpoint reaches this mean reward");
  train->add_option("--out-dir", ta.out_dir, "Output directory");
  train->add_flag("--quiet", ta.quiet, "No progress output");

  std::string q_in, q_out;
  double q_lambda = 1.0;
  auto* quantize = app.add_subcommand("quantize", "Quantize a float model to int8");
  quantize->add_option("--model", q_in, "Float model")->required();
  quantize->add_option("--lambda", q_lambda, "Spread factor")->required();
  quantize->add_option("--out", q_out, "Quantized model path")->required();

  std::string s_in, s_out_dir = ".", s_out_model;
  std::vector<double> s_grid;
  int s_episodes = 5;
  std::optional<std::uint64_t> s_seed;
  auto* sweep = app.add_subcommand("sweep", "Two-stage hidden threshold sweep");
  sweep->add_option("--model", s_in, "Quantized model")->required();
  sweep->add_option("--grid", s_grid, "Threshold grid")->delimiter(',');
  sweep->add_option("--episodes", s_episodes, "Episodes per grid point");
  sweep->add_option("--seed", s_seed, "Defaults to the model's training seed");
  sweep->add_option("--out-dir", s_out_dir, "Directory for sweep.csv");
  sweep->add_option("--out", s_out_model, "Write the tuned model here instead of in place");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Closed-loop evaluation");
  eval->add_option("--model", ea.model_path, "Float or quantized model")->required();
  eval->add_option("--seed", ea.seed, "Base seed; episode i uses a seed derived from it")->required();
  eval->add_option("--episodes", ea.episodes, "Episode count");
  eval->add_flag("--paced", ea.paced, "Sleep to hold the control period");
  eval->add_flag("--record", ea.record, "Record voltages and spikes of the first episode");
  eval->add_flag("--accumulate", ea.accumulate, "Carry output potentials across control steps");
  eval->add_option("--out-dir", ea.out_dir, "Output directory");

  std::string ab_in, ab_out_dir = ".";
  std::vector<double> ab_lambdas, ab_grid;
  int ab_episodes = 10, ab_sweep_episodes = 5;
  std::optional<std::uint64_t> ab_seed;
  auto* ablate = app.add_subcommand("ablate", "Quantize, sweep and evaluate over a lambda list");
  ablate->add_option("--model", ab_in, "Float model")->required();
  ablate->add_option("--lambdas", ab_lambdas, "Spread factors to compare")->delimiter(',')->required();
  ablate->add_option("--episodes", ab_episodes, "Evaluation episodes per lambda");
  ablate->add_option("--seed", ab_seed, "Defaults to the model's training seed");
  ablate->add_option("--grid", ab_grid, "Threshold grid")->delimiter(',');
  ablate->add_option("--sweep-episodes", ab_sweep_episodes, "Episodes per grid point");
  ablate->add_option("--out-dir", ab_out_dir, "Output directory");

  std::string ex_model, ex_config, ex_task, ex_out = "spike_list.csv";
  std::uint64_t ex_seed = 0;
  std::vector<double> ex_obs;
  auto* xs = app.add_subcommand("export-spikes", "Encode one observation as a spike list");
  xs->add_option("--model", ex_model, "Take task and encoder from a model");
  xs->add_option("--config", ex_config, "Take task and encoder from a run config")->check(CLI::ExistingFile);
  xs->add_option("--task", ex_task, "Use the task defaults")->check(CLI::IsMember(tasks));
  xs->add_option("--seed", ex_seed, "Encoder seed")->required();
  xs->add_option("--obs", ex_obs, "Observation (defaults to the reset state)")->delimiter(',');
  xs->add_option("--out", ex_out, "Output CSV");

  std::string c_task, c_out;
  auto* config = app.add_subcommand("config", "Print the default run config of a task");
  config->add_option("--task", c_task, "Task")->required()->check(CLI::IsMember(tasks));
  config->add_option("--out", c_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: Usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*train) {
      cmd_train(ta);
    } else if (*quantize) {
      cmd_quantize(q_in, q_lambda, q_out);
    } else if (*sweep) {
      cmd_sweep(s_in, s_grid, s_episodes, s_seed, s_out_dir, s_out_model);
    } else if (*eval) {
      cmd_eval(ea);
    } else if (*ablate) {
      cmd_ablate(ab_in, ab_lambdas, ab_episodes, ab_seed, ab_grid, ab_sweep_episodes, ab_out_dir);
    } else if (*xs) {
      cmd_export_spikes(ex_model, ex_config, ex_task, ex_seed, ex_obs, ex_out);
    } else if (*config) {
      cmd_config(c_task, c_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
