#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "opinet/binary_io.hpp"
#include "opinet/config.hpp"
#include "opinet/error.hpp"
#include "opinet/run.hpp"

using namespace opinet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("opinet_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string config_error(const json& file, const json& overrides = json::object()) {
  try {
    parse_config(file, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Small but real fluids run settings.
json tiny_fluids(const fs::path& out) {
  return {{"out", out.string()},
          {"fluid", {{"nx", 16}, {"ny", 16}, {"n_steps", 20}}},
          {"dataset", {{"n_samples", 2}, {"n_receivers", 8}}}};
}

}  // namespace

TEST_CASE("empty config resolves to the published defaults") {
  const RunConfig c = parse_config(json::object());
  CHECK(c.loss.alpha == 1.0);
  CHECK(c.loss.beta == 0.5);
  CHECK(c.loss.gamma == 0.2);
  CHECK(c.loss.delta == 0.3);
  CHECK(c.optimizer.lr == 0.001);
  CHECK(c.optimizer.batch == 64);
  CHECK(c.optimizer.epochs == 100);
  CHECK(c.mask.side == 8);
  CHECK(c.ablation.use_ntk);
  CHECK(c.ablation.use_se);
  CHECK(c.datagen.n_samples == 200);
  CHECK(c.datagen.n_receivers == 64);
  CHECK(c.datagen.fluid.nx == 32);

  const fs::path f = scratch("empty.json");
  write_file(f, "");
  CHECK(load_config(f).to_json() == c.to_json());
}

TEST_CASE("resolved config round-trips through the schema") {
  json file = {{"seed", 9}, {"optimizer", {{"lr", 0.01}, {"batch", 16}}}, {"fluid", {{"boundary", "periodic"}}}};
  const RunConfig c = parse_config(file);
  CHECK(parse_config(c.to_json()).to_json() == c.to_json());
  CHECK(c.datagen.seed == 9);
  CHECK(c.datagen.fluid.boundary == Boundary::periodic);
}

TEST_CASE("flags override the file, which overrides defaults") {
  const json file = {{"optimizer", {{"lr", 0.001}, {"epochs", 7}}}};
  json flags = json::object();
  set_override(flags, "optimizer.lr", "0.01");
  const RunConfig c = parse_config(file, flags);
  CHECK(c.optimizer.lr == 0.01);
  CHECK(c.optimizer.epochs == 7);
  CHECK(c.optimizer.batch == 64);
  CHECK(c.ntk.base_lr == 0.01);

  json s = json::object();
  set_override(s, "out", "runs/x");
  set_override(s, "ablation.use_se", "false");
  CHECK(s["out"] == "runs/x");
  CHECK(s["ablation"]["use_se"] == false);
}

TEST_CASE("strict schema names the offending path") {
  CHECK(config_error({{"optimiser", {{"lr", 0.1}}}}) == "unknown key $.optimiser");
  CHECK(config_error({{"optimizer", {{"learning_rate", 0.1}}}}) == "unknown key $.optimizer.learning_rate");
  CHECK(config_error({{"optimizer", {{"batch", 1.5}}}}).find("$.optimizer.batch: expected") == 0);
  CHECK(config_error({{"optimizer", {{"batch", -3}}}}).find("$.optimizer.batch") == 0);
  CHECK(config_error({{"optimizer", {{"lr", "fast"}}}}).find("$.optimizer.lr") == 0);
  CHECK(config_error({{"ablation", {{"use_se", 1}}}}).find("$.ablation.use_se") == 0);
  CHECK(config_error({{"optimizer", 3}}).find("$.optimizer: expected an object") == 0);
  CHECK(config_error({{"dataset", {{"strength_range", {1.0}}}}}).find("$.dataset.strength_range") == 0);
  CHECK(config_error({{"task", "train"}}).find("$.task") == 0);
  CHECK(config_error({{"fluid", {{"boundary", "slip"}}}}).find("$.fluid.boundary") == 0);
  CHECK(config_error({{"images", {{"format", "png"}}}}).find("$.images.format") == 0);
  // constraint violations are reported under their section
  CHECK(config_error({{"optimizer", {{"lr", 0.0}}}}).find("$.optimizer") == 0);
  CHECK(config_error({{"split", {{"train", 0.9}, {"val", 0.2}}}}).find("$.split") == 0);
  CHECK(config_error({{"fluid", {{"nx", 1}}}}).find("$.fluid") == 0);
  // integers are accepted for float slots
  CHECK(parse_config({{"optimizer", {{"lr", 1}}}}).optimizer.lr == 1.0);
}

TEST_CASE("task pipelines drop loss terms they cannot compute") {
  const RunConfig c = parse_config(json::object());
  CHECK(c.fluids_train().weights.delta == 0.0);
  CHECK(c.fluids_train().weights.beta == 0.5);
  CHECK(c.image_train().weights.beta == 0.0);
  CHECK(c.image_train().weights.gamma == 0.0);
  CHECK(c.image_train().weights.delta == 0.3);
  CHECK_NOTHROW(c.fluids_train().validate());
  CHECK_NOTHROW(c.image_train().validate());
}

TEST_CASE("datagen writes the samples, the dataset manifest and a run manifest") {
  const fs::path out = scratch("datagen");
  json file = tiny_fluids(out);
  file["task"] = "datagen";
  std::ostringstream log;
  const RunResult r = run(parse_config(file), log);
  REQUIRE(r.exit_code == 0);
  CHECK(r.artifacts == std::vector<std::string>{"manifest.json", "sample_00000.opds", "sample_00001.opds"});
  const json m = json::parse(read_file(out / "run_manifest.json"));
  CHECK(m["status"] == "ok");
  CHECK(m["task"] == "datagen");
  CHECK(m["version"] == std::string(version()));
  CHECK(m["config"] == parse_config(file).to_json());
  REQUIRE(m["artifacts"].size() == 3);
  for (const auto& a : m["artifacts"])
    CHECK(a["checksum"] == hex64(fnv1a64(read_file(out / a["name"].get<std::string>()))));
  CHECK(load_dataset(out).samples.size() == 2);
}

TEST_CASE("identical configs give identical artifact checksums") {
  const fs::path data = scratch("det_data");
  json gen = tiny_fluids(data);
  gen["task"] = "datagen";
  std::ostringstream log;
  REQUIRE(run(parse_config(gen), log).exit_code == 0);

  auto train = [&](const std::string& name) {
    const fs::path out = scratch(name);
    json t = tiny_fluids(out);
    t["task"] = "train-fluids";
    t["dataset"]["path"] = data.string();
    t["optimizer"] = {{"max_steps", 6}, {"batch", 1}};
    t["ntk"] = {{"period", 2}, {"probe_size", 4}};
    t["split"] = {{"train", 0.5}, {"val", 0.0}};
    std::ostringstream l;
    const RunResult r = run(parse_config(t), l);
    REQUIRE(r.exit_code == 0);
    return json::parse(read_file(out / "run_manifest.json"))["artifacts"];
  };
  const json a = train("det_a"), b = train("det_b");
  CHECK(a == b);
  std::vector<std::string> names;
  for (const auto& x : a) names.push_back(x["name"]);
  CHECK(names == std::vector<std::string>{"history.csv", "localization.csv", "model.ckpt", "ntk_report.csv",
                                          "scatter.svg", "summary.json"});
}

TEST_CASE("pipeline errors map to exit codes and land in the manifest") {
  std::ostringstream log;
  const fs::path out = scratch("missing");
  json t = {{"task", "train-fluids"}, {"out", out.string()}, {"dataset", {{"path", (out / "nope").string()}}}};
  RunResult r = run(parse_config(t), log);
  CHECK(r.exit_code == 3);
  json m = json::parse(read_file(out / "run_manifest.json"));
  CHECK(m["status"] == "error");
  CHECK(m["error"]["category"] == "data");

  t["dataset"]["path"] = "";
  r = run(parse_config(t), log);
  CHECK(r.exit_code == 2);

  t = {{"task", "train-images"}, {"out", out.string()}, {"images", {{"images", (out / "none.idx").string()}}}};
  CHECK(run(parse_config(t), log).exit_code == 3);

  t = {{"task", "evaluate"}, {"out", out.string()}};
  CHECK(run(parse_config(t), log).exit_code == 2);
}

TEST_CASE("image source honours format and limit") {
  ImageSource src;
  src.images = std::string(OPINET_TEST_DATA_DIR) + "/mnist-subset-images.idx";
  src.labels = std::string(OPINET_TEST_DATA_DIR) + "/mnist-subset-labels.idx";
  src.limit = 50;
  const ImageBatch b = load_images(src);
  CHECK(b.size() == 50);
  CHECK(b.labels.size() == 50);
  src.limit = 0;
  CHECK(load_images(src).size() == 1200);
  src.images.clear();
  CHECK_THROWS_AS(load_images(src), ConfigError);
}

TEST_CASE("shipped configs pass the strict schema") {
  const fs::path dir = fs::path(OPINET_TEST_DATA_DIR).parent_path() / "configs";
  CHECK(load_config(dir / "localization.json").task == Task::train_fluids);
  const RunConfig m = load_config(dir / "mnist.json");
  CHECK(m.task == Task::train_images);
  CHECK(m.mask.side == 8);
  CHECK_FALSE(m.ablation.use_ntk);
}
