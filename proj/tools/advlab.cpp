#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include "advlab/lab/checkpoint.hpp"
#include "advlab/lab/experiments.hpp"

namespace fs = std::filesystem;
using namespace advlab;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string dataset;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value experiment config");
  cmd->add_option("--seed", c.seed, "seed for networks, training and data order");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--dataset", c.dataset, "idx:<images>,<labels> or synth:<kind>,key=value...");
  cmd->add_option("--checkpoint", c.checkpoint, "use a saved network instead of training");
}

ExperimentConfig load_config(const Common& c, std::optional<ExperimentKind> kind) {
  auto kv = c.config.empty() ? std::map<std::string, std::string>{} : read_key_values(c.config);
  if (kind) kv["kind"] = to_string(*kind);
  ExperimentConfig cfg = ExperimentConfig::from_map(kv);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.dataset.empty()) cfg.dataset = c.dataset;
  if (!c.checkpoint.empty()) {
    cfg.checkpoint = c.checkpoint;
    cfg.networks = {fs::path(c.checkpoint).stem().string()};
  }
  cfg.validate();
  return cfg;
}

void print_tables(const ExperimentOutput& out, const std::string& dir) {
  for (const auto& [file, table] : out.tables)
    std::cout << (fs::path(dir) / file).string() << ": " << table.rows.size() << " rows\n";
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = load_config(c, std::nullopt);
  const Dataset train = dataset_from_uri(cfg.dataset);
  const Dataset eval = dataset_from_uri(cfg.eval_dataset);
  fs::create_directories(cfg.out);
  CsvTable history{{"network", "epoch", "mean_loss", "clean_accuracy", "robust_accuracy"}, {}};
  for (std::size_t n = 0; n < cfg.networks.size(); ++n) {
    const std::string& name = cfg.networks[n];
    ReluNetwork net = make_network(name, train.dims(), cfg.width, train.classes, cfg.seed * 1000 + n + 1);
    const TrainConfig t = training_config(cfg);
    TrainResult r = t.adversary ? adversarial_train(std::move(net), train, t)
                                : sgd_train(std::move(net), train, t);
    for (std::size_t e = 0; e < r.history.mean_loss.size(); ++e) {
      const double robust = r.history.robust_accuracy.empty()
                                ? std::numeric_limits<double>::quiet_NaN()
                                : r.history.robust_accuracy[e];
      history.add_row({name, static_cast<std::int64_t>(e), r.history.mean_loss[e],
                       r.history.clean_accuracy[e], robust});
    }
    const std::string path = (fs::path(cfg.out) / (name + ".ckpt")).string();
    save_checkpoint(r.net, path);
    const Accuracy acc = evaluate(r.net, eval, t.adversary);
    std::cout << name << ": eval clean " << acc.clean << ", robust " << acc.robust << " -> "
              << path << '\n';
  }
  write_csv(history, (fs::path(cfg.out) / "train_history.csv").string());
  return 0;
}

int cmd_attack(const Common& c) {
  const ExperimentConfig cfg = load_config(c, std::nullopt);
  const Dataset train = dataset_from_uri(cfg.dataset);
  const Dataset eval = dataset_from_uri(cfg.eval_dataset).head(cfg.samples);
  const ReluNetwork net = prepare_network(cfg, cfg.networks.front(), train, 0);
  const AttackConfig attack = study_attack(cfg, false);
  CsvTable table{{"sample_id", "m_success", "delta_norm", "grad_norm", "a_hat", "clean_correct",
                  "attacked_correct"},
                 {}};
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const LossHead head = head_for_class(net.output_dim(), eval.labels[i]);
    AttackConfig a = attack;
    a.keep_vectors = false;
    a.record_every = std::max(1, a.steps);
    const AttackTrajectory traj = run_attack(net, head, eval.inputs[i], a);
    table.add_row({static_cast<std::int64_t>(i),
                   static_cast<std::int64_t>(traj.m_success.value_or(-1)), traj.delta.norm(),
                   traj.records.empty() ? traj.clean_grad_norm : traj.records.back().grad_norm,
                   traj.a_hat_total,
                   static_cast<std::int64_t>(head_correct(head, forward(net, eval.inputs[i]).z)),
                   static_cast<std::int64_t>(
                       head_correct(head, forward(net, eval.inputs[i] + traj.delta).z))});
  }
  fs::create_directories(cfg.out);
  const std::string path = (fs::path(cfg.out) / "attack.csv").string();
  write_csv(table, path);
  std::cout << path << ": " << table.rows.size() << " rows\n";
  return 0;
}

int cmd_experiment(const Common& c, ExperimentKind kind) {
  const ExperimentConfig cfg = load_config(c, kind);
  print_tables(run_and_write(cfg), cfg.out);
  return 0;
}

int cmd_report(const Common& c) {
  const std::string dir = c.out.empty() ? "out" : c.out;
  if (!fs::is_directory(dir)) throw Error(Errc::io, "no output directory " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    std::ifstream in(f);
    std::string header, line;
    std::getline(in, header);
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    std::cout << f.filename().string() << "  rows=" << rows << "  [" << header << "]\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial perturbation dynamics lab"};
  app.require_subcommand(1);
  Common common;

  struct Sub {
    const char* name;
    const char* help;
    std::optional<ExperimentKind> kind;
  };
  const Sub subs[] = {
      {"train", "train the configured networks and save checkpoints", std::nullopt},
      {"attack", "attack eval samples and summarize each trajectory", std::nullopt},
      {"verify-dynamics", "kappa of analytic vs. real perturbations for four baselines",
       ExperimentKind::kappa_table},
      {"effect-fit", "free-gate kappa and frozen-gate kappa' of the training effect",
       ExperimentKind::effect_fit},
      {"growth", "perturbation and gradient norms along attack trajectories", ExperimentKind::growth},
      {"impact", "A-hat against the measured training effect", ExperimentKind::impact_vs_a},
      {"cosine", "cosine with the mean gradient difference per A-hat bin", ExperimentKind::cosine_vs_a},
      {"oscillate", "gradient change under a fixed-length weight step", ExperimentKind::oscillation},
      {"report", "list the CSV tables in the output directory", std::nullopt},
  };
  std::vector<std::pair<CLI::App*, const Sub*>> cmds;
  for (const Sub& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_common(cmd, common);
    cmds.emplace_back(cmd, &s);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [cmd, sub] : cmds) {
      if (!cmd->parsed()) continue;
      const std::string name = sub->name;
      if (name == "train") return cmd_train(common);
      if (name == "attack") return cmd_attack(common);
      if (name == "report") return cmd_report(common);
      return cmd_experiment(common, *sub->kind);
    }
  } catch (const std::exception& e) {
    std::cerr << "advlab: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
