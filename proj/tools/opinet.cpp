// opinet: command-line entry point.
//
//   opinet train-fluids --config run.json --seed 3 --out runs/a --lr 0.003
//   opinet datagen --n-samples 2 --out data/tiny
//   opinet evaluate --checkpoint runs/a/model.ckpt --dataset data/ds --set evaluate.target=fluids

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "opinet/config.hpp"
#include "opinet/error.hpp"
#include "opinet/parallel.hpp"
#include "opinet/run.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> lr;
  std::optional<std::size_t> batch, epochs, max_steps, n_samples, log_every, threads;
  std::optional<std::string> dataset, images, labels, checkpoint, target;
  std::optional<bool> use_ntk, use_se;
  std::vector<std::string> sets;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON config file (strict schema)");
  sub->add_option("--seed", f.seed, "Master seed");
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--lr", f.lr, "Adam learning rate");
  sub->add_option("--batch", f.batch, "Minibatch size");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_option("--max-steps", f.max_steps, "Stop after this many steps (0: use epochs)");
  sub->add_option("--n-samples", f.n_samples, "Samples to generate");
  sub->add_option("--dataset", f.dataset, "Fluids dataset directory");
  sub->add_option("--images", f.images, "Image file (IDX or CIFAR binary)");
  sub->add_option("--labels", f.labels, "IDX label file");
  sub->add_option("--checkpoint", f.checkpoint, "Model checkpoint");
  sub->add_option("--target", f.target, "Checkpoint pipeline: fluids or images")->check(CLI::IsMember({"fluids", "images"}));
  sub->add_option("--use-ntk", f.use_ntk, "NTK learning-rate adaptation (true/false)");
  sub->add_option("--use-se", f.use_se, "Squeeze-and-excitation blocks (true/false)");
  sub->add_option("--log-every", f.log_every, "Progress line every N steps");
  sub->add_option("--threads", f.threads, "Worker threads (overrides OPINET_THREADS)");
  sub->add_option("--set", f.sets, "Any config key, e.g. --set ntk.period=50")->take_all();
}

nlohmann::json overrides(const std::string& task, const Flags& f) {
  nlohmann::json o = {{"task", task}};
  auto put = [&](const char* section, const char* key, const nlohmann::json& v) { o[section][key] = v; };
  if (f.seed) o["seed"] = *f.seed;
  if (f.out) o["out"] = *f.out;
  if (f.log_every) o["log_every"] = *f.log_every;
  if (f.lr) put("optimizer", "lr", *f.lr);
  if (f.batch) put("optimizer", "batch", *f.batch);
  if (f.epochs) put("optimizer", "epochs", *f.epochs);
  if (f.max_steps) put("optimizer", "max_steps", *f.max_steps);
  if (f.n_samples) put("dataset", "n_samples", *f.n_samples);
  if (f.dataset) put("dataset", "path", *f.dataset);
  if (f.images) put("images", "images", *f.images);
  if (f.labels) put("images", "labels", *f.labels);
  if (f.checkpoint) put("evaluate", "checkpoint", *f.checkpoint);
  if (f.target) put("evaluate", "target", *f.target);
  if (f.use_ntk) put("ablation", "use_ntk", *f.use_ntk);
  if (f.use_se) put("ablation", "use_se", *f.use_se);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw opinet::ConfigError("--set expects key=value, got '" + s + "'");
    opinet::set_override(o, s.substr(0, eq), s.substr(eq + 1));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Operator networks with NTK-guided training: data generation, training, evaluation"};
  app.set_version_flag("--version", std::string(opinet::version()));
  app.require_subcommand(1);
  Flags flags;
  const char* tasks[] = {"datagen", "train-fluids", "train-images", "evaluate", "ablation", "ntk-report"};
  const char* help[] = {"Simulate the fluids dataset", "Train source localization", "Train image reconstruction",
                        "Evaluate a checkpoint", "Run the four-way NTK/SE ablation", "Kernel spectrum at the probe"};
  for (std::size_t k = 0; k < 6; ++k) add_common(app.add_subcommand(tasks[k], help[k]), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : opinet::exit_code(opinet::ErrorCategory::config);
  }

  const std::string task = app.get_subcommands().front()->get_name();
  try {
    if (flags.threads) opinet::set_num_threads(static_cast<int>(*flags.threads));
    const nlohmann::json o = overrides(task, flags);
    const opinet::RunConfig cfg = flags.config.empty() ? opinet::parse_config(nlohmann::json::object(), o)
                                                       : opinet::load_config(flags.config, o);
    const opinet::RunResult r = opinet::run(cfg, std::cerr);
    if (r.exit_code == 0) std::printf("%s\n", (std::filesystem::path(cfg.out) / "run_manifest.json").c_str());
    return r.exit_code;
  } catch (const opinet::Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(opinet::category_name(e.category())).c_str(), e.what());
    return opinet::exit_code(e.category());
  }
}
