#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "opinet/adam.hpp"
#include "opinet/dataio.hpp"
#include "opinet/dataset.hpp"
#include "opinet/deeponet.hpp"
#include "opinet/losses.hpp"
#include "opinet/ntk.hpp"
#include "opinet/training.hpp"

namespace opinet {

enum class Task { datagen, train_fluids, train_images, evaluate, ablation, ntk_report };

std::string_view task_name(Task t) noexcept;
/// ConfigError for anything but the six subcommand names.
Task parse_task(std::string_view name);

/// Which pipeline a checkpoint belongs to (evaluate, ntk-report).
enum class Target { fluids, images };

struct ImageSource {
  /// "idx", "cifar10", "cifar100_fine" or "cifar100_coarse".
  std::string format = "idx";
  std::string images;
  /// IDX label file; empty loads images only.
  std::string labels;
  /// Keep the first this many images; 0 keeps all.
  std::size_t limit = 1000;
};

/// Fully resolved run description. Built only through parse_config, so every
/// field has passed the schema and the per-section constraints.
struct RunConfig {
  Task task = Task::train_fluids;
  std::uint64_t seed = 0;
  std::string out = "runs/latest";

  DatasetConfig datagen;     // sections "fluid" and "dataset"
  std::string dataset_path;  // input of the fluids pipelines
  OptimizerConfig optimizer;
  std::size_t max_steps = 0;
  LossWeights loss;
  NtkSchedule ntk;
  bool observe_ntk = true;
  MaskSpec mask;
  AblationFlags ablation;
  SplitSpec split;
  PhysicsConfig physics;
  std::size_t physics_batch = 4;
  bool physics_to_head = false;
  DeepONetConfig fluids_model;
  DeepONetConfig image_model;
  ImageSource images;
  std::size_t eval_runs = 10;
  bool composite = true;
  std::string checkpoint;
  Target target = Target::fluids;
  std::size_t log_every = 0;

  /// The resolved config in the file schema (parse_config(to_json()) == *this).
  nlohmann::json to_json() const;

  /// Pipeline settings; the task drops loss terms it has no inputs for
  /// (delta for fluids, beta and gamma for images).
  FluidsTrainConfig fluids_train() const;
  ImageTrainConfig image_train() const;
};

/// Every key the schema accepts, at its default value.
nlohmann::json default_config_json();

/// defaults <- file <- overrides, each merge strict: unknown keys, type
/// mismatches and constraint violations raise ConfigError naming the JSON
/// path ("$.optimizer.lr").
RunConfig parse_config(const nlohmann::json& file, const nlohmann::json& overrides = nlohmann::json::object());
/// ConfigError when the file is missing or not JSON; an empty file is {}.
RunConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = nlohmann::json::object());

/// Sets a dotted key ("optimizer.lr") in an override object. The text is read
/// as a JSON literal when it parses as one, otherwise as a string.
void set_override(nlohmann::json& overrides, std::string_view dotted_key, std::string_view text);

}  // namespace opinet
