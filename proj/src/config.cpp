#include "opinet/config.hpp"

#include <array>
#include <string>

#include "opinet/binary_io.hpp"
#include "opinet/error.hpp"

namespace opinet {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Task, std::string_view>, 6> kTasks{{
    {Task::datagen, "datagen"},
    {Task::train_fluids, "train-fluids"},
    {Task::train_images, "train-images"},
    {Task::evaluate, "evaluate"},
    {Task::ablation, "ablation"},
    {Task::ntk_report, "ntk-report"},
}};

std::string type_name(const json& v) {
  if (v.is_number_integer()) return v.get<long long>() >= 0 || v.is_number_unsigned() ? "non-negative integer" : "negative integer";
  return v.type_name();
}

// A value fits a slot when it has the slot's JSON type; integer slots take
// only non-negative integers, float slots take any number.
bool fits(const json& slot, const json& v) {
  if (slot.is_number_float()) return v.is_number();
  if (slot.is_number_unsigned()) return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  if (slot.is_boolean()) return v.is_boolean();
  if (slot.is_string()) return v.is_string();
  if (slot.is_array()) {
    if (!v.is_array() || v.size() != slot.size()) return false;
    for (const auto& e : v)
      if (!e.is_number()) return false;
    return true;
  }
  return false;
}

void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError(path + ": expected an object, got " + type_name(patch));
  for (const auto& [key, v] : patch.items()) {
    const std::string p = path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown key " + p);
    json& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, v, p);
      continue;
    }
    if (!fits(slot, v)) {
      const std::string want = slot.is_number_float() ? "number" : type_name(slot);
      throw ConfigError(p + ": expected " + want + ", got " + type_name(v));
    }
    if (slot.is_number_float()) {
      slot = v.get<double>();
    } else if (slot.is_number_unsigned()) {
      slot = v.get<std::uint64_t>();
    } else if (slot.is_array()) {
      for (std::size_t k = 0; k < v.size(); ++k) slot[k] = v[k].get<double>();
    } else {
      slot = v;
    }
  }
}

// Runs a section's validate(), re-raising its complaint under the section path.
template <class F>
void check(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ParameterError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json model_json(const DeepONetConfig& m, bool with_head) {
  json j = {{"latent_dim", m.latent_dim},       {"hidden", m.hidden},         {"hidden_layers", m.hidden_layers},
            {"residual", m.residual},           {"layer_norm", m.layer_norm}, {"se_reduction", m.se_reduction}};
  if (with_head) {
    j["head_hidden"] = m.head_hidden;
    j["head_layers"] = m.head_layers;
    j["decoder_hidden_layers"] = m.decoder_hidden_layers;
    j["max_sources"] = m.max_sources;
    j["pin_imag_strength"] = m.pin_imag_strength;
  }
  return j;
}

void read_model(DeepONetConfig& m, const json& j, bool with_head) {
  m.latent_dim = j.at("latent_dim");
  m.hidden = j.at("hidden");
  m.hidden_layers = j.at("hidden_layers");
  m.residual = j.at("residual");
  m.layer_norm = j.at("layer_norm");
  m.se_reduction = j.at("se_reduction");
  if (with_head) {
    m.head_hidden = j.at("head_hidden");
    m.head_layers = j.at("head_layers");
    m.decoder_hidden_layers = j.at("decoder_hidden_layers");
    m.max_sources = j.at("max_sources");
    m.pin_imag_strength = j.at("pin_imag_strength");
  }
}

void check_model(const std::string& path, const DeepONetConfig& m) {
  if (m.latent_dim == 0) throw ConfigError(path + ".latent_dim: must be >= 1");
  if (m.hidden == 0) throw ConfigError(path + ".hidden: must be >= 1");
  if (m.se_reduction == 0) throw ConfigError(path + ".se_reduction: must be >= 1");
  if (m.inverse_head && m.max_sources == 0) throw ConfigError(path + ".max_sources: must be >= 1");
}

RunConfig from_json(const json& j) {
  RunConfig c;
  c.task = parse_task(j.at("task").get<std::string>());
  c.seed = j.at("seed");
  c.out = j.at("out");
  if (c.out.empty()) throw ConfigError("$.out: must not be empty");
  c.log_every = j.at("log_every");

  try {
    c.datagen.fluid = fluid_config_from_json(j.at("fluid"));
  } catch (const ParameterError& e) {
    throw ConfigError(std::string("$.fluid.boundary: ") + e.what());
  }
  const json& d = j.at("dataset");
  c.dataset_path = d.at("path");
  c.datagen.n_samples = d.at("n_samples");
  c.datagen.n_sources = d.at("n_sources");
  c.datagen.n_receivers = d.at("n_receivers");
  c.datagen.strength_range = {d.at("strength_range")[0].get<double>(), d.at("strength_range")[1].get<double>()};
  c.datagen.receiver_margin = d.at("receiver_margin");
  c.datagen.receiver_spacing = d.at("receiver_spacing");
  c.datagen.seed = c.seed;
  check("$.fluid", [&] { c.datagen.fluid.validate(); });
  check("$.dataset", [&] { c.datagen.validate(); });

  const json& o = j.at("optimizer");
  c.optimizer.lr = o.at("lr");
  c.optimizer.beta1 = o.at("beta1");
  c.optimizer.beta2 = o.at("beta2");
  c.optimizer.eps = o.at("eps");
  c.optimizer.batch = o.at("batch");
  c.optimizer.epochs = o.at("epochs");
  c.max_steps = o.at("max_steps");
  check("$.optimizer", [&] { c.optimizer.validate(); });

  const json& l = j.at("loss");
  c.loss.alpha = l.at("alpha");
  c.loss.beta = l.at("beta");
  c.loss.gamma = l.at("gamma");
  c.loss.delta = l.at("delta");
  c.loss.ntk = l.at("ntk");
  check("$.loss", [&] { c.loss.validate(); });

  const json& n = j.at("ntk");
  c.ntk.period = n.at("period");
  c.ntk.safety = n.at("safety");
  c.ntk.lr_floor = n.at("lr_floor");
  c.ntk.lr_ceiling = n.at("lr_ceiling");
  c.ntk.probe_size = n.at("probe_size");
  c.ntk.cap = n.at("cap");
  c.ntk.base_lr = c.optimizer.lr;
  c.observe_ntk = n.at("observe");
  check("$.ntk", [&] { c.ntk.validate(); });

  c.mask.side = j.at("mask").at("side");
  c.mask.seed = j.at("mask").at("seed");
  c.ablation.use_ntk = j.at("ablation").at("use_ntk");
  c.ablation.use_se = j.at("ablation").at("use_se");

  c.split.train = j.at("split").at("train");
  c.split.val = j.at("split").at("val");
  c.split.seed = j.at("split").at("seed");
  check("$.split", [&] { c.split.validate(); });

  const json& p = j.at("physics");
  c.physics.wavenumber = p.at("wavenumber");
  c.physics.fd_step = p.at("fd_step");
  c.physics.source_width = p.at("source_width");
  c.physics_batch = p.at("batch");
  c.physics_to_head = p.at("to_head");
  check("$.physics", [&] { c.physics.validate(); });

  c.fluids_model = FluidsTrainConfig().model;
  read_model(c.fluids_model, j.at("fluids_model"), true);
  check_model("$.fluids_model", c.fluids_model);
  c.image_model = ImageTrainConfig().model;
  read_model(c.image_model, j.at("image_model"), false);
  check_model("$.image_model", c.image_model);

  const json& im = j.at("images");
  c.images.format = im.at("format");
  if (c.images.format != "idx" && c.images.format != "cifar10" && c.images.format != "cifar100_fine" &&
      c.images.format != "cifar100_coarse") {
    throw ConfigError("$.images.format: unknown format '" + c.images.format + "'");
  }
  c.images.images = im.at("images");
  c.images.labels = im.at("labels");
  c.images.limit = im.at("limit");
  c.eval_runs = im.at("eval_runs");
  if (c.eval_runs == 0) throw ConfigError("$.images.eval_runs: must be >= 1");
  c.composite = im.at("composite");

  const json& e = j.at("evaluate");
  c.checkpoint = e.at("checkpoint");
  const std::string target = e.at("target");
  if (target == "fluids")
    c.target = Target::fluids;
  else if (target == "images")
    c.target = Target::images;
  else
    throw ConfigError("$.evaluate.target: expected 'fluids' or 'images', got '" + target + "'");
  return c;
}

}  // namespace

std::string_view task_name(Task t) noexcept {
  for (const auto& [task, name] : kTasks)
    if (task == t) return name;
  return "unknown";
}

Task parse_task(std::string_view name) {
  for (const auto& [task, n] : kTasks)
    if (n == name) return task;
  throw ConfigError("$.task: unknown task '" + std::string(name) + "'");
}

json RunConfig::to_json() const {
  json j;
  j["task"] = std::string(task_name(task));
  j["seed"] = seed;
  j["out"] = out;
  j["log_every"] = log_every;
  j["fluid"] = opinet::to_json(datagen.fluid);
  j["dataset"] = {{"path", dataset_path},
                  {"n_samples", datagen.n_samples},
                  {"n_sources", datagen.n_sources},
                  {"n_receivers", datagen.n_receivers},
                  {"strength_range", {datagen.strength_range[0], datagen.strength_range[1]}},
                  {"receiver_margin", datagen.receiver_margin},
                  {"receiver_spacing", datagen.receiver_spacing}};
  j["optimizer"] = {{"lr", optimizer.lr},       {"beta1", optimizer.beta1},   {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps},     {"batch", optimizer.batch},   {"epochs", optimizer.epochs},
                    {"max_steps", max_steps}};
  j["loss"] = {{"alpha", loss.alpha}, {"beta", loss.beta}, {"gamma", loss.gamma}, {"delta", loss.delta}, {"ntk", loss.ntk}};
  j["ntk"] = {{"period", ntk.period},         {"safety", ntk.safety}, {"lr_floor", ntk.lr_floor},
              {"lr_ceiling", ntk.lr_ceiling}, {"probe_size", ntk.probe_size}, {"cap", ntk.cap},
              {"observe", observe_ntk}};
  j["mask"] = {{"side", mask.side}, {"seed", mask.seed}};
  j["ablation"] = {{"use_ntk", ablation.use_ntk}, {"use_se", ablation.use_se}};
  j["split"] = {{"train", split.train}, {"val", split.val}, {"seed", split.seed}};
  j["physics"] = {{"wavenumber", physics.wavenumber},
                  {"fd_step", physics.fd_step},
                  {"source_width", physics.source_width},
                  {"batch", physics_batch},
                  {"to_head", physics_to_head}};
  j["fluids_model"] = model_json(fluids_model, true);
  j["image_model"] = model_json(image_model, false);
  j["images"] = {{"format", images.format}, {"images", images.images},       {"labels", images.labels},
                 {"limit", images.limit},   {"eval_runs", eval_runs},        {"composite", composite}};
  j["evaluate"] = {{"checkpoint", checkpoint}, {"target", target == Target::fluids ? "fluids" : "images"}};
  return j;
}

FluidsTrainConfig RunConfig::fluids_train() const {
  FluidsTrainConfig c;
  c.opt = optimizer;
  c.ntk = ntk;
  c.weights = loss;
  c.weights.delta = 0.0;
  c.flags = ablation;
  c.observe_ntk = observe_ntk;
  c.max_steps = max_steps;
  c.seed = seed;
  c.log_every = log_every;
  c.model = fluids_model;
  c.physics = physics;
  c.physics_batch = physics_batch;
  c.physics_to_head = physics_to_head;
  c.split = split;
  return c;
}

ImageTrainConfig RunConfig::image_train() const {
  ImageTrainConfig c;
  c.opt = optimizer;
  c.ntk = ntk;
  c.weights = loss;
  c.weights.beta = 0.0;
  c.weights.gamma = 0.0;
  c.flags = ablation;
  c.observe_ntk = observe_ntk;
  c.max_steps = max_steps;
  c.seed = seed;
  c.log_every = log_every;
  c.model = image_model;
  c.mask = mask;
  c.split = split;
  c.eval_runs = eval_runs;
  c.composite = composite;
  return c;
}

json default_config_json() {
  RunConfig c;
  c.fluids_model = FluidsTrainConfig().model;
  c.image_model = ImageTrainConfig().model;
  return c.to_json();
}

RunConfig parse_config(const json& file, const json& overrides) {
  json merged = default_config_json();
  merge_strict(merged, file.is_null() ? json::object() : file, "$");
  merge_strict(merged, overrides, "$");
  return from_json(merged);
}

RunConfig load_config(const std::filesystem::path& path, const json& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  json file = json::object();
  if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
    try {
      file = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_config(file, overrides);
}

void set_override(json& overrides, std::string_view dotted_key, std::string_view text) {
  if (dotted_key.empty()) throw ConfigError("empty override key");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = std::string(text);
  json* node = &overrides;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = dotted_key.find('.', start);
    const std::string key(dotted_key.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (key.empty()) throw ConfigError("malformed override key '" + std::string(dotted_key) + "'");
    if (dot == std::string_view::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& next = (*node)[key];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override key '" + std::string(dotted_key) + "' descends into a value");
    node = &next;
    start = dot + 1;
  }
}

}  // namespace opinet
