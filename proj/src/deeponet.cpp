#include "opinet/deeponet.hpp"

#include <cmath>

#include "opinet/binary_io.hpp"
#include "opinet/error.hpp"
#include "opinet/linalg.hpp"
#include "opinet/parallel.hpp"

namespace opinet {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

MlpArchitecture body_arch(const DeepONetConfig& cfg, std::size_t in_dim) {
  MlpArchitecture a;
  a.in_dim = in_dim;
  a.hidden = cfg.hidden;
  a.hidden_layers = cfg.hidden_layers;
  a.out_dim = cfg.latent_dim;
  a.residual = cfg.residual;
  a.se = cfg.se;
  a.se_reduction = cfg.se_reduction;
  a.layer_norm = cfg.layer_norm;
  return a;
}

std::vector<LayerSpec> encoder_specs(const DeepONetConfig& cfg) {
  std::vector<LayerSpec> specs;
  std::size_t prev = 2 + cfg.n_fields;
  for (std::size_t l = 0; l < cfg.head_layers; ++l) {
    specs.push_back(LayerSpec::linear(prev, cfg.head_hidden));
    specs.push_back(LayerSpec::relu(cfg.head_hidden));
    prev = cfg.head_hidden;
  }
  return specs;
}

std::vector<LayerSpec> decoder_specs(const DeepONetConfig& cfg) {
  std::vector<LayerSpec> specs;
  for (std::size_t l = 0; l < cfg.decoder_hidden_layers; ++l) {
    specs.push_back(LayerSpec::linear(cfg.head_hidden, cfg.head_hidden));
    specs.push_back(LayerSpec::relu(cfg.head_hidden));
  }
  specs.push_back(LayerSpec::linear(cfg.head_hidden, 4 * cfg.max_sources));
  return specs;
}

void append_prefixed(std::vector<ParamSlot>& layout, std::vector<double>& values, const std::string& prefix,
                     const Mlp& net) {
  for (const auto& s : net.params().layout()) layout.push_back({prefix + s.name, values.size() + s.offset, s.shape});
  values.insert(values.end(), net.params().storage().begin(), net.params().storage().end());
}

void require_points(const Tensor& points, std::size_t dim, const char* what) {
  if (points.rank() != 2 || points.cols() != dim) {
    throw DimensionError(std::string(what) + " must be [T x " + std::to_string(dim) + "], got " +
                         shape_string(points.shape()));
  }
}

}  // namespace

Tensor source_matrix(const std::vector<SourceSpec>& sources) {
  if (sources.empty()) throw ParameterError("source list is empty");
  Tensor m({sources.size(), 4});
  for (std::size_t j = 0; j < sources.size(); ++j) {
    m(j, 0) = sources[j].location[0];
    m(j, 1) = sources[j].location[1];
    m(j, 2) = sources[j].strength[0];
    m(j, 3) = sources[j].strength[1];
  }
  return m;
}

ReceiverSet::ReceiverSet(Tensor points) : points_(std::move(points)) {
  require_points(points_, 2, "receivers");
}

ReceiverSet::ReceiverSet(Tensor points, const Domain& domain) : ReceiverSet(std::move(points)) {
  for (std::size_t t = 0; t < size(); ++t) {
    if (!domain.contains(points_(t, 0), points_(t, 1))) {
      throw ParameterError("receiver " + std::to_string(t) + " lies outside the domain");
    }
  }
}

nlohmann::json to_json(const DeepONetConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"branch_in", c.branch_in},
          {"trunk_in", c.trunk_in},
          {"hidden", c.hidden},
          {"hidden_layers", c.hidden_layers},
          {"residual", c.residual},
          {"se", c.se},
          {"se_reduction", c.se_reduction},
          {"layer_norm", c.layer_norm},
          {"inverse_head", c.inverse_head},
          {"n_fields", c.n_fields},
          {"head_hidden", c.head_hidden},
          {"head_layers", c.head_layers},
          {"decoder_hidden_layers", c.decoder_hidden_layers},
          {"max_sources", c.max_sources},
          {"pin_imag_strength", c.pin_imag_strength},
          {"field_scale", c.field_scale},
          {"domain", {c.domain.x_lo, c.domain.x_hi, c.domain.y_lo, c.domain.y_hi}}};
}

DeepONetConfig deeponet_config_from_json(const nlohmann::json& j) {
  DeepONetConfig c;
  c.latent_dim = j.at("latent_dim");
  c.branch_in = j.at("branch_in");
  c.trunk_in = j.at("trunk_in");
  c.hidden = j.at("hidden");
  c.hidden_layers = j.at("hidden_layers");
  c.residual = j.at("residual");
  c.se = j.at("se");
  c.se_reduction = j.at("se_reduction");
  c.layer_norm = j.at("layer_norm");
  c.inverse_head = j.at("inverse_head");
  c.n_fields = j.at("n_fields");
  c.head_hidden = j.at("head_hidden");
  c.head_layers = j.at("head_layers");
  c.decoder_hidden_layers = j.at("decoder_hidden_layers");
  c.max_sources = j.at("max_sources");
  c.pin_imag_strength = j.at("pin_imag_strength");
  c.field_scale = j.at("field_scale").get<std::vector<double>>();
  const auto d = j.at("domain").get<std::vector<double>>();
  if (d.size() != 4) throw FormatError("domain must have 4 bounds");
  c.domain = {d[0], d[1], d[2], d[3]};
  return c;
}

DeepONetModel::DeepONetModel(const DeepONetConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.latent_dim == 0) throw ParameterError("latent_dim must be positive");
  branch_ = Mlp(build_specs(body_arch(cfg_, cfg_.branch_in)), rng);
  trunk_ = Mlp(build_specs(body_arch(cfg_, cfg_.trunk_in)), rng);
  if (cfg_.inverse_head) {
    if (cfg_.max_sources == 0 || cfg_.head_layers == 0 || cfg_.n_fields == 0) {
      throw ParameterError("inverse head needs max_sources, head_layers and n_fields > 0");
    }
    if (!cfg_.field_scale.empty() && cfg_.field_scale.size() != cfg_.n_fields) {
      throw ParameterError("field_scale must have one entry per field");
    }
    encoder_ = Mlp(encoder_specs(cfg_), rng);
    decoder_ = Mlp(decoder_specs(cfg_), rng);
  }
}

DeepONetModel::DeepONetModel(DeepONetConfig cfg, Mlp branch, Mlp trunk, Mlp encoder, Mlp decoder)
    : cfg_(std::move(cfg)),
      branch_(std::move(branch)),
      trunk_(std::move(trunk)),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)) {
  if (branch_.out_dim() != trunk_.out_dim()) {
    throw DimensionError("branch and trunk must share the latent width (" + std::to_string(branch_.out_dim()) +
                         " vs " + std::to_string(trunk_.out_dim()) + ")");
  }
  cfg_.latent_dim = branch_.out_dim();
  cfg_.branch_in = branch_.in_dim();
  cfg_.trunk_in = trunk_.in_dim();
}

ParamVector DeepONetModel::parameters() const {
  std::vector<ParamSlot> layout;
  std::vector<double> values;
  append_prefixed(layout, values, "branch.", branch_);
  append_prefixed(layout, values, "trunk.", trunk_);
  if (cfg_.inverse_head) {
    append_prefixed(layout, values, "encoder.", encoder_);
    append_prefixed(layout, values, "decoder.", decoder_);
  }
  return ParamVector(std::move(layout), std::move(values));
}

void DeepONetModel::assign_parameters(const ParamVector& flat) {
  std::size_t expected = field_param_count() + (cfg_.inverse_head ? encoder_.param_count() + decoder_.param_count() : 0);
  if (flat.size() != expected) {
    throw DimensionError("assign_parameters: got " + std::to_string(flat.size()) + " values, model has " +
                         std::to_string(expected));
  }
  auto src = flat.storage().begin();
  for (Mlp* net : {&branch_, &trunk_, &encoder_, &decoder_}) {
    if (!cfg_.inverse_head && (net == &encoder_ || net == &decoder_)) continue;
    auto& dst = net->params().storage();
    std::copy(src, src + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    src += static_cast<std::ptrdiff_t>(dst.size());
  }
}

ParamVector DeepONetModel::flatten(const ParamVector* branch, const ParamVector* trunk, const ParamVector* encoder,
                                   const ParamVector* decoder) const {
  ParamVector out = zero_gradients();
  std::size_t offset = 0;
  auto put = [&](const ParamVector* part, const Mlp& net) {
    if (part) {
      if (part->size() != net.param_count()) throw DimensionError("gradient block does not match its network");
      std::copy(part->storage().begin(), part->storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += net.param_count();
  };
  put(branch, branch_);
  put(trunk, trunk_);
  if (cfg_.inverse_head) {
    put(encoder, encoder_);
    put(decoder, decoder_);
  }
  return out;
}

Tensor DeepONetModel::field_from_branch_input(const Tensor& branch_input, const Tensor& points) const {
  require_points(points, trunk_.in_dim(), "points");
  const Tensor b = branch_.forward(branch_input);
  const Tensor t = trunk_.forward(points);
  const Tensor per_source = matmul_nt(b, t);  // [N x T]
  const std::size_t n = per_source.rows(), count = per_source.cols();
  Tensor u({count});
  for (std::size_t k = 0; k < count; ++k) u[k] = per_source(0, k);
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t k = 0; k < count; ++k) u[k] += per_source(j, k);
  return u;
}

FieldGradients DeepONetModel::field_backward(const Tensor& branch_input, const Tensor& points,
                                             const Tensor& out_grad) const {
  require_points(points, trunk_.in_dim(), "points");
  const std::size_t count = points.rows();
  if (out_grad.size() != count) {
    throw DimensionError("field gradient has " + std::to_string(out_grad.size()) + " entries for " +
                         std::to_string(count) + " points");
  }
  const ForwardTrace bt = branch_.trace(branch_input);
  const ForwardTrace tt = trunk_.trace(points);
  const std::size_t n = branch_input.rows(), d = cfg_.latent_dim;
  // d u_t / d b_j = t_t for every j; d u_t / d t_t = sum_j b_j.
  const Tensor g_row = out_grad.reshaped({1, count});
  const Tensor db_one = matmul(g_row, tt.output);  // [1 x d]
  Tensor db({n, d});
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) db(j, c) = db_one[c];
  Tensor bsum({d});
  for (std::size_t c = 0; c < d; ++c) bsum[c] = bt.output(0, c);
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) bsum[c] += bt.output(j, c);
  Tensor dt({count, d});
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t c = 0; c < d; ++c) dt(k, c) = out_grad[k] * bsum[c];
  Gradients gb = branch_.backward(bt, db);
  Gradients gt = trunk_.backward(tt, dt);
  return {std::move(gb.params), std::move(gt.params), std::move(gb.input), std::move(gt.input)};
}

Tensor DeepONetModel::batch_field(const Tensor& branch_input, const Tensor& points) const {
  require_points(points, trunk_.in_dim(), "points");
  return matmul_nt(branch_.forward(branch_input), trunk_.forward(points));
}

FieldGradients DeepONetModel::batch_field_backward(const Tensor& branch_input, const Tensor& points,
                                                   const Tensor& out_grad) const {
  require_points(points, trunk_.in_dim(), "points");
  const ForwardTrace bt = branch_.trace(branch_input);
  const ForwardTrace tt = trunk_.trace(points);
  if (out_grad.rank() != 2 || out_grad.rows() != branch_input.rows() || out_grad.cols() != points.rows()) {
    throw DimensionError("batch field gradient must be [" + std::to_string(branch_input.rows()) + " x " +
                         std::to_string(points.rows()) + "], got " + shape_string(out_grad.shape()));
  }
  const Tensor db = matmul(out_grad, tt.output);     // [B x d]
  const Tensor dt = matmul_tn(out_grad, bt.output);  // [T x d]
  Gradients gb = branch_.backward(bt, db);
  Gradients gt = trunk_.backward(tt, dt);
  return {std::move(gb.params), std::move(gt.params), std::move(gb.input), std::move(gt.input)};
}

Tensor DeepONetModel::predict_field(const std::vector<SourceSpec>& sources, const ReceiverSet& receivers) const {
  if (receivers.size() == 0) throw ParameterError("receiver set is empty");
  return field_from_branch_input(source_matrix(sources), receivers.points());
}

Tensor DeepONetModel::param_jacobian(const std::vector<SourceSpec>& sources, const ReceiverSet& receivers) const {
  return param_jacobian(source_matrix(sources), receivers.points());
}

Tensor DeepONetModel::param_jacobian(const Tensor& s, const Tensor& pts) const {
  require_points(pts, trunk_.in_dim(), "points");
  const std::size_t count = pts.rows(), n = s.rows(), d = cfg_.latent_dim;
  const std::size_t pb = branch_.param_count(), pt = trunk_.param_count();
  const ForwardTrace bt = branch_.trace(s);
  Tensor bsum({1, d});
  for (std::size_t c = 0; c < d; ++c) bsum[c] = bt.output(0, c);
  for (std::size_t j = 1; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) bsum[c] += bt.output(j, c);

  Tensor jac({count, pb + pt});
  // Rows are independent: each one is a single-receiver backward pass.
  parallel_for(count, [&](std::size_t k) {
    Tensor x({1, pts.cols()});
    for (std::size_t c = 0; c < pts.cols(); ++c) x[c] = pts(k, c);
    const ForwardTrace tt = trunk_.trace(x);
    Tensor db({n, d});
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) db(j, c) = tt.output[c];
    const Gradients gb = branch_.backward(bt, db);
    const Gradients gt = trunk_.backward(tt, bsum);
    double* row = jac.data() + k * (pb + pt);
    std::copy(gb.params.storage().begin(), gb.params.storage().end(), row);
    std::copy(gt.params.storage().begin(), gt.params.storage().end(), row + pb);
  });
  return jac;
}

Tensor DeepONetModel::receiver_features(const Tensor& observed, const ReceiverSet& receivers) const {
  if (!cfg_.inverse_head) throw ParameterError("model has no inverse head");
  const std::size_t count = receivers.size(), fields = cfg_.n_fields;
  if (observed.size() != count * fields) {
    throw DimensionError("observed field has shape " + shape_string(observed.shape()) + ", expected [" +
                         std::to_string(count) + " x " + std::to_string(fields) + "]");
  }
  Tensor feats({count, 2 + fields});
  for (std::size_t t = 0; t < count; ++t) {
    feats(t, 0) = receivers.points()(t, 0);
    feats(t, 1) = receivers.points()(t, 1);
    for (std::size_t f = 0; f < fields; ++f) {
      const double scale = cfg_.field_scale.empty() ? 1.0 : cfg_.field_scale[f];
      feats(t, 2 + f) = observed[t * fields + f] / scale;
    }
  }
  return feats;
}

InverseTrace DeepONetModel::inverse_trace(const Tensor& observed, const ReceiverSet& receivers,
                                          std::size_t n_sources) const {
  if (n_sources == 0) throw ParameterError("n_sources must be at least 1");
  if (n_sources > cfg_.max_sources) {
    throw ParameterError("n_sources " + std::to_string(n_sources) + " exceeds the configured maximum " +
                         std::to_string(cfg_.max_sources));
  }
  InverseTrace tr;
  tr.receivers = receivers.size();
  tr.n_sources = n_sources;
  tr.encoder = encoder_.trace(receiver_features(observed, receivers));
  const Tensor& enc = tr.encoder.output;
  const std::size_t h = enc.cols();
  Tensor pooled({1, h});
  for (std::size_t t = 0; t < enc.rows(); ++t)
    for (std::size_t c = 0; c < h; ++c) pooled[c] += enc(t, c);
  for (auto& v : pooled.values()) v /= static_cast<double>(enc.rows());
  tr.decoder = decoder_.trace(pooled);
  tr.raw = tr.decoder.output;
  return tr;
}

std::vector<SourceSpec> DeepONetModel::decode_sources(const InverseTrace& tr) const {
  const auto& d = cfg_.domain;
  std::vector<SourceSpec> out(tr.n_sources);
  for (std::size_t k = 0; k < tr.n_sources; ++k) {
    const double* r = tr.raw.data() + 4 * k;
    out[k].location = {d.x_lo + (d.x_hi - d.x_lo) * sigmoid(r[0]), d.y_lo + (d.y_hi - d.y_lo) * sigmoid(r[1])};
    out[k].strength = {r[2], cfg_.pin_imag_strength ? 0.0 : r[3]};
  }
  return out;
}

InverseGradients DeepONetModel::inverse_backward(const InverseTrace& tr, const Tensor& source_grad) const {
  if (source_grad.size() != 4 * tr.n_sources) {
    throw DimensionError("source gradient must be [" + std::to_string(tr.n_sources) + " x 4], got " +
                         shape_string(source_grad.shape()));
  }
  const auto& d = cfg_.domain;
  Tensor draw(tr.raw.shape());
  for (std::size_t k = 0; k < tr.n_sources; ++k) {
    const double* r = tr.raw.data() + 4 * k;
    const double* g = source_grad.data() + 4 * k;
    const double sx = sigmoid(r[0]), sy = sigmoid(r[1]);
    draw[4 * k] = g[0] * (d.x_hi - d.x_lo) * sx * (1.0 - sx);
    draw[4 * k + 1] = g[1] * (d.y_hi - d.y_lo) * sy * (1.0 - sy);
    draw[4 * k + 2] = g[2];
    draw[4 * k + 3] = cfg_.pin_imag_strength ? 0.0 : g[3];
  }
  Gradients gd = decoder_.backward(tr.decoder, draw);
  const std::size_t count = tr.receivers, h = gd.input.cols();
  Tensor denc({count, h});
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t t = 0; t < count; ++t)
    for (std::size_t c = 0; c < h; ++c) denc(t, c) = gd.input[c] * inv;
  Gradients ge = encoder_.backward(tr.encoder, denc);
  return {std::move(ge.params), std::move(gd.params)};
}

std::vector<SourceSpec> DeepONetModel::predict_sources(const Tensor& observed, const ReceiverSet& receivers,
                                                       std::size_t n_sources) const {
  return decode_sources(inverse_trace(observed, receivers, n_sources));
}

Checkpoint DeepONetModel::to_checkpoint(std::uint64_t seed, nlohmann::json manifest) const {
  Checkpoint ckpt;
  ckpt.seed = seed;
  ckpt.manifest = std::move(manifest);
  ckpt.manifest["deeponet"] = to_json(cfg_);
  ckpt.networks.push_back({"branch", branch_});
  ckpt.networks.push_back({"trunk", trunk_});
  if (cfg_.inverse_head) {
    ckpt.networks.push_back({"encoder", encoder_});
    ckpt.networks.push_back({"decoder", decoder_});
  }
  return ckpt;
}

DeepONetModel DeepONetModel::from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.manifest.contains("deeponet")) throw FormatError("checkpoint has no DeepONet manifest section");
  DeepONetConfig cfg;
  try {
    cfg = deeponet_config_from_json(ckpt.manifest.at("deeponet"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed DeepONet manifest: ") + e.what());
  }
  Mlp encoder, decoder;
  if (cfg.inverse_head) {
    encoder = ckpt.network("encoder");
    decoder = ckpt.network("decoder");
  }
  return DeepONetModel(cfg, ckpt.network("branch"), ckpt.network("trunk"), std::move(encoder), std::move(decoder));
}

std::string architecture_hash(const DeepONetModel& model) {
  nlohmann::json j = nlohmann::json::array();
  for (const Mlp* net : {&model.branch(), &model.trunk(), &model.encoder(), &model.decoder()}) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& s : net->specs()) layers.push_back(layer_spec_to_json(s));
    j.push_back(std::move(layers));
  }
  return hex64(fnv1a64(j.dump()));
}

}  // namespace opinet
