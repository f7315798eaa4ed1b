#include "opinet/run.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "opinet/binary_io.hpp"
#include "opinet/checkpoint.hpp"
#include "opinet/error.hpp"
#include "opinet/parallel.hpp"

#ifndef OPINET_VERSION
#define OPINET_VERSION "0.1.0"
#endif

namespace opinet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, std::string_view bytes) {
    write_file(dir_ / name, bytes);
    add(name);
  }
  template <typename F>
  void write_with(const std::string& name, F&& emit) {
    std::ostringstream os;
    emit(os);
    write(name, os.str());
  }
  void add(const std::string& name) {
    if (std::find(names_.begin(), names_.end(), name) == names_.end()) names_.push_back(name);
  }
  std::vector<std::string> sorted() const {
    auto v = names_;
    std::sort(v.begin(), v.end());
    return v;
  }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Dataset load_fluids_dataset(const RunConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("$.dataset.path: required for task " + std::string(task_name(cfg.task)));
  return load_dataset(cfg.dataset_path);
}

std::vector<std::size_t> held_out(const Split& s) { return s.test.empty() ? s.val : s.test; }

// The output directory is left out so relocating a run leaves the bytes alone.
json checkpoint_manifest(const RunConfig& cfg, std::string_view target) {
  json c = cfg.to_json();
  c.erase("out");
  return {{"target", target}, {"version", version()}, {"run_config", c}};
}

DeepONetModel load_model(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("$.evaluate.checkpoint: required for task " + std::string(task_name(cfg.task)));
  return DeepONetModel::from_checkpoint(load_checkpoint(cfg.checkpoint));
}

void write_history(Outputs& out, const TrainHistory& h) {
  out.write_with("history.csv", [&](std::ostream& os) { write_history_csv(os, h); });
  out.write_with("ntk_report.csv", [&](std::ostream& os) { write_ntk_report_csv(os, h); });
}

void write_localization(Outputs& out, const LocalizationReport& rep, json& summary) {
  out.write_with("localization.csv", [&](std::ostream& os) { write_localization_csv(os, rep); });
  out.write_with("scatter.svg", [&](std::ostream& os) { write_scatter_svg(os, rep); });
  summary["mean_location_error"] = rep.mean_location_error;
  summary["mean_strength_error"] = rep.mean_strength_error;
  summary["evaluated_sources"] = rep.rows.size();
}

json metrics_json(const MetricReport& r) {
  return {{"n", r.n},
          {"psnr", {r.psnr.mean, r.psnr.std}},
          {"ssim", {r.ssim.mean, r.ssim.std}},
          {"mse", {r.mse.mean, r.mse.std}}};
}

void write_reconstruction(Outputs& out, const ReconstructionReport& rep, json& summary) {
  out.write_with("metrics.csv", [&](std::ostream& os) { write_reconstruction_csv(os, rep); });
  summary["model"] = metrics_json(rep.model);
  summary["baseline"] = metrics_json(rep.baseline);
}

void datagen(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  const GenerationReport rep = generate_dataset(cfg.datagen, out.dir());
  for (const auto& f : rep.files) out.add(fs::path(f).filename().string());
  out.add("manifest.json");
  log << "datagen: " << rep.files.size() << " samples, " << rep.failures.size() << " failures\n";
}

void train_fluids(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  const Dataset data = load_fluids_dataset(cfg);
  const FluidsTrainConfig tc = cfg.fluids_train();
  const Split split = make_split(data.samples.size(), tc.split);
  TrainResult r = train_source_localization(data, split.train, make_fluids_model(tc, data, split.train), tc);
  write_history(out, r.history);
  save_checkpoint(out.dir() / "model.ckpt", r.model.to_checkpoint(cfg.seed, checkpoint_manifest(cfg, "fluids")));
  out.add("model.ckpt");
  json summary = {{"steps", r.history.rows.size()}, {"warnings", r.history.warnings}};
  const auto eval = held_out(split);
  if (!eval.empty()) write_localization(out, evaluate_localization(r.model, data, eval), summary);
  out.write("summary.json", summary.dump(2) + "\n");
  log << "train-fluids: " << r.history.rows.size() << " steps";
  if (summary.contains("mean_location_error")) log << ", held-out location error " << fmt(summary["mean_location_error"]);
  log << "\n";
}

void train_images(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  const ImageBatch images = load_images(cfg.images);
  const ImageTrainConfig tc = cfg.image_train();
  const Split split = make_split(images.size(), tc.split);
  TrainResult r = train_reconstruction(
      images, split.train, make_image_model(tc, images.channels(), images.height(), images.width()), tc);
  write_history(out, r.history);
  save_checkpoint(out.dir() / "model.ckpt", r.model.to_checkpoint(cfg.seed, checkpoint_manifest(cfg, "images")));
  out.add("model.ckpt");
  json summary = {{"steps", r.history.rows.size()}, {"warnings", r.history.warnings}};
  const auto eval = held_out(split);
  if (!eval.empty()) write_reconstruction(out, evaluate_reconstruction(r.model, images, eval, tc), summary);
  out.write("summary.json", summary.dump(2) + "\n");
  log << "train-images: " << r.history.rows.size() << " steps";
  if (summary.contains("model")) {
    log << ", PSNR " << fmt(summary["model"]["psnr"][0]) << " dB vs baseline " << fmt(summary["baseline"]["psnr"][0]);
  }
  log << "\n";
}

void evaluate(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  const DeepONetModel model = load_model(cfg);
  json summary = json::object();
  if (cfg.target == Target::fluids) {
    const Dataset data = load_fluids_dataset(cfg);
    const auto eval = held_out(make_split(data.samples.size(), cfg.split));
    if (eval.empty()) throw ConfigError("$.split: no held-out samples to evaluate");
    write_localization(out, evaluate_localization(model, data, eval), summary);
    log << "evaluate: location error " << fmt(summary["mean_location_error"]) << "\n";
  } else {
    const ImageBatch images = load_images(cfg.images);
    const auto eval = held_out(make_split(images.size(), cfg.split));
    if (eval.empty()) throw ConfigError("$.split: no held-out images to evaluate");
    write_reconstruction(out, evaluate_reconstruction(model, images, eval, cfg.image_train()), summary);
    log << "evaluate: PSNR " << fmt(summary["model"]["psnr"][0]) << " dB\n";
  }
  out.write("summary.json", summary.dump(2) + "\n");
}

void ablation(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  const ImageBatch images = load_images(cfg.images);
  const auto rows = run_ablation(images, cfg.image_train());
  out.write_with("ablation.csv", [&](std::ostream& os) { write_ablation_csv(os, rows); });
  log << "ablation: " << rows.size() << " rows\n";
}

// Spectrum of the training probe, for a checkpoint or (without one) the
// seeded initial model.
void ntk_report(const RunConfig& cfg, Outputs& out, std::ostream& log) {
  DeepONetModel model;
  ProbeSet probe;
  if (cfg.target == Target::fluids) {
    const Dataset data = load_fluids_dataset(cfg);
    const FluidsTrainConfig tc = cfg.fluids_train();
    const Split split = make_split(data.samples.size(), tc.split);
    if (split.train.empty()) throw ConfigError("$.split: empty training split");
    model = cfg.checkpoint.empty() ? make_fluids_model(tc, data, split.train) : load_model(cfg);
    probe = fluids_probe(data.samples[split.train.front()], tc.ntk.probe_size);
  } else {
    const ImageBatch images = load_images(cfg.images);
    const ImageTrainConfig tc = cfg.image_train();
    const Split split = make_split(images.size(), tc.split);
    if (split.train.empty()) throw ConfigError("$.split: empty training split");
    model = cfg.checkpoint.empty() ? make_image_model(tc, images.channels(), images.height(), images.width())
                                   : load_model(cfg);
    probe = image_probe(images, split.train.front(), tc);
  }
  const NtkGram gram = assemble_gram(model, probe, 0, cfg.ntk.cap);
  NtkReportRow row;
  row.lambda_max = gram.lambda_max();
  row.lambda_min_pos = gram.lambda_min_positive();
  row.condition_number = gram.condition_number();
  NtkSchedule s = cfg.ntk;
  s.lr_ceiling = std::min(s.lr_ceiling, cfg.optimizer.lr);
  s.lr_floor = std::min(s.lr_floor, s.lr_ceiling);
  row.adapted_lr = adapt_lr(gram, s);
  out.write_with("ntk_report.csv", [&](std::ostream& os) {
    write_ntk_report_header(os);
    write_ntk_report_row(os, row);
  });
  out.write_with("spectrum.csv", [&](std::ostream& os) {
    os << "index,eigenvalue\n";
    for (std::size_t k = 0; k < gram.eigenvalues.size(); ++k) os << k << "," << fmt(gram.eigenvalues[k]) << "\n";
  });
  log << "ntk-report: n=" << gram.size() << " lambda_max " << fmt(row.lambda_max) << " condition "
      << fmt(row.condition_number) << "\n";
}

}  // namespace

std::string_view version() noexcept { return OPINET_VERSION; }

ImageBatch load_images(const ImageSource& src) {
  if (src.images.empty()) throw ConfigError("$.images.images: required for the image tasks");
  ImageBatch b;
  if (src.format == "idx") {
    b = src.labels.empty() ? load_idx(src.images) : load_idx_pair(src.images, src.labels);
  } else {
    const CifarVariant v = src.format == "cifar10"         ? CifarVariant::cifar10
                           : src.format == "cifar100_fine" ? CifarVariant::cifar100_fine
                                                           : CifarVariant::cifar100_coarse;
    b = load_cifar(src.images, v);
  }
  if (src.limit != 0 && b.size() > src.limit) b = b.head(src.limit);
  return b;
}

RunResult run(const RunConfig& cfg, std::ostream& log) {
  RunResult res;
  Outputs out(cfg.out);
  json manifest = {{"version", version()},
                   {"task", task_name(cfg.task)},
                   {"config", cfg.to_json()},
                   {"seeds",
                    {{"master", cfg.seed},
                     {"model", cfg.seed},
                     {"train_state", mix_seed(cfg.seed, 1)},
                     {"split", cfg.split.seed},
                     {"mask", cfg.mask.seed}}}};
  try {
    fs::create_directories(out.dir());
    switch (cfg.task) {
      case Task::datagen: datagen(cfg, out, log); break;
      case Task::train_fluids: train_fluids(cfg, out, log); break;
      case Task::train_images: train_images(cfg, out, log); break;
      case Task::evaluate: evaluate(cfg, out, log); break;
      case Task::ablation: ablation(cfg, out, log); break;
      case Task::ntk_report: ntk_report(cfg, out, log); break;
    }
    manifest["status"] = "ok";
  } catch (const Error& e) {
    res.exit_code = exit_code(e.category());
    res.error = e.what();
    manifest["status"] = "error";
    manifest["error"] = {{"category", category_name(e.category())}, {"message", res.error}};
  } catch (const fs::filesystem_error& e) {
    res.exit_code = exit_code(ErrorCategory::resource);
    res.error = e.what();
    manifest["status"] = "error";
    manifest["error"] = {{"category", "resource"}, {"message", res.error}};
  }
  res.artifacts = out.sorted();
  json artifacts = json::array();
  for (const auto& name : res.artifacts) {
    const fs::path p = out.dir() / name;
    if (!fs::exists(p)) continue;
    const std::string bytes = read_file(p);
    artifacts.push_back({{"name", name}, {"bytes", bytes.size()}, {"checksum", hex64(fnv1a64(bytes))}});
  }
  manifest["artifacts"] = std::move(artifacts);
  try {
    write_file(out.dir() / "run_manifest.json", manifest.dump(2) + "\n");
  } catch (const Error& e) {
    if (res.exit_code == 0) {
      res.exit_code = exit_code(e.category());
      res.error = e.what();
    }
  }
  if (res.exit_code != 0) {
    const std::string cat = manifest.contains("error") ? manifest["error"]["category"].get<std::string>() : "resource";
    log << "error [" << cat << "]: " << res.error << "\n";
  }
  return res;
}

}  // namespace opinet
