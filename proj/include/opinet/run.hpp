#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "opinet/config.hpp"

namespace opinet {

/// Version string baked in at configure time ("0.1.0-<git describe>").
std::string_view version() noexcept;

struct RunResult {
  int exit_code = 0;
  /// Files written under cfg.out, relative paths, sorted; excludes run_manifest.json.
  std::vector<std::string> artifacts;
  std::string error;
};

/// Dispatches cfg.task, then writes cfg.out/run_manifest.json with the
/// resolved config, seeds, version and FNV-1a checksums of every artifact.
/// Pipeline errors become exit codes (config 2, data 3, numeric 4,
/// resource 5) and are recorded in the manifest; nothing is thrown.
RunResult run(const RunConfig& cfg, std::ostream& log);

/// Inputs of the image pipelines, cut to images.limit; FormatError on bad files.
ImageBatch load_images(const ImageSource& src);

}  // namespace opinet
