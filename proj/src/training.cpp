#include "opinet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "opinet/error.hpp"
#include "opinet/features.hpp"
#include "opinet/parallel.hpp"

namespace opinet {

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

void add_into(ParamVector& acc, const ParamVector& g) {
  auto& a = acc.storage();
  const auto& b = g.storage();
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
}

void scale_into(ParamVector& p, double c) {
  for (auto& v : p.storage()) v *= c;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Kernel measurement shared by both loops: assemble, remember the first
/// Gram as reference, optionally adapt lr (never above the configured lr).
std::optional<NtkReportRow> observe_kernel(const DeepONetModel& model, const ProbeSet& probe, TrainState& st,
                                           const TrainOptions& cfg, TrainHistory& history) {
  if (!cfg.observe_ntk || st.step % static_cast<long>(cfg.ntk.period) != 0) return std::nullopt;
  const NtkGram gram = assemble_gram(model, probe, st.step, cfg.ntk.cap);
  if (!st.reference) st.reference = gram;
  NtkReportRow row;
  row.step = st.step;
  row.lambda_max = gram.lambda_max();
  row.lambda_min_pos = gram.lambda_min_positive();
  row.condition_number = gram.condition_number();
  row.drift_penalty = ntk_drift_penalty(gram, *st.reference);
  if (cfg.flags.use_ntk) {
    NtkSchedule s = cfg.ntk;
    s.lr_ceiling = std::min(s.lr_ceiling, cfg.opt.lr);
    s.lr_floor = std::min(s.lr_floor, s.lr_ceiling);
    try {
      st.lr = adapt_lr(gram, s);
    } catch (const DegenerateKernelError& e) {
      const std::string msg = "step " + std::to_string(st.step) + ": " + e.what() + "; keeping lr " + fmt("%.6g", st.lr);
      history.warnings.push_back(msg);
      std::fprintf(stderr, "warning: %s\n", msg.c_str());
    }
  }
  row.adapted_lr = st.lr;
  return row;
}

/// Reference Gram for the drift term when observation is off.
void ensure_reference(const DeepONetModel& model, const ProbeSet& probe, TrainState& st, const TrainOptions& cfg) {
  if (cfg.weights.ntk > 0.0 && !st.reference) st.reference = assemble_gram(model, probe, st.step, cfg.ntk.cap);
}

void log_progress(const TrainOptions& cfg, const HistoryRow& row) {
  if (cfg.log_every == 0 || row.step % static_cast<long>(cfg.log_every) != 0) return;
  std::fprintf(stderr, "step %ld epoch %zu lr %.4g total %.6g\n", row.step, row.epoch, row.lr, row.loss.total);
}

/// Runs `body(batch, epoch)` over minibatches until the epoch or step budget is spent.
template <typename Body>
void minibatches(const std::vector<std::size_t>& train, const TrainOptions& cfg, TrainState& st, Body&& body) {
  std::vector<std::size_t> order = train;
  for (std::size_t epoch = 0;; ++epoch) {
    if (cfg.max_steps == 0 && epoch >= cfg.opt.epochs) return;
    shuffle(order, st.rng);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.opt.batch) {
      if (cfg.max_steps != 0 && static_cast<std::size_t>(st.step) >= cfg.max_steps) return;
      const std::vector<std::size_t> batch(order.begin() + static_cast<long>(b0),
                                           order.begin() + static_cast<long>(std::min(order.size(), b0 + cfg.opt.batch)));
      body(batch, epoch);
    }
  }
}

std::optional<double> enabled(double weight, double value) {
  return weight > 0.0 ? std::optional<double>(value) : std::nullopt;
}

}  // namespace

void SplitSpec::validate() const {
  if (!(train > 0.0 && val >= 0.0 && train + val <= 1.0)) {
    throw ParameterError("split fractions must satisfy train > 0, val >= 0, train + val <= 1");
  }
}

Split make_split(std::size_t n, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(spec.seed);
  shuffle(idx, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n))));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  s.val.assign(idx.begin() + static_cast<long>(n_train), idx.begin() + static_cast<long>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  return s;
}

std::vector<NtkReportRow> TrainHistory::ntk_rows() const {
  std::vector<NtkReportRow> out;
  for (const auto& r : rows)
    if (r.ntk) out.push_back(*r.ntk);
  return out;
}

void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "step,epoch,lr,L_data,L_phys,L_source,L_perceptual,L_ntk,total,lambda_max,lambda_min_pos,condition_number,"
         "drift_penalty\n";
  char buf[128];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  };
  auto opt = [&](const std::optional<double>& v) {
    if (v)
      num(*v);
    else
      out << ",disabled";
  };
  for (const auto& r : h.rows) {
    out << r.step << ',' << r.epoch;
    num(r.lr);
    const auto& c = r.loss.components;
    opt(c.data);
    opt(c.physics);
    opt(c.source);
    opt(c.perceptual);
    opt(c.ntk);
    num(r.loss.total);
    if (r.ntk) {
      num(r.ntk->lambda_max);
      num(r.ntk->lambda_min_pos);
      num(r.ntk->condition_number);
      num(r.ntk->drift_penalty);
    } else {
      out << ",,,,";
    }
    out << '\n';
  }
}

void write_ntk_report_csv(std::ostream& out, const TrainHistory& h) {
  write_ntk_report_header(out);
  for (const auto& r : h.ntk_rows()) write_ntk_report_row(out, r);
}

// --- source localization -------------------------------------------------

FluidsTrainConfig::FluidsTrainConfig() {
  weights.delta = 0.0;
  model.latent_dim = 32;
  model.hidden = 64;
  model.hidden_layers = 3;
  model.head_hidden = 64;
  model.head_layers = 2;
  model.decoder_hidden_layers = 1;
  model.pin_imag_strength = true;
}

void FluidsTrainConfig::validate() const {
  opt.validate();
  ntk.validate();
  weights.validate();
  physics.validate();
  split.validate();
  if (weights.delta != 0.0) throw ParameterError("perceptual weight delta must be 0 for the fluids task");
}

DeepONetModel make_fluids_model(const FluidsTrainConfig& cfg, const Dataset& data,
                                const std::vector<std::size_t>& train) {
  DeepONetConfig m = cfg.model;
  m.branch_in = 4;
  m.trunk_in = 2;
  m.inverse_head = true;
  m.n_fields = SampleRecord::kFields;
  m.max_sources = std::max(m.max_sources, data.config.n_sources);
  m.se = cfg.flags.use_se;
  m.field_scale.assign(SampleRecord::kFields, 0.0);
  for (std::size_t i : train)
    for (std::size_t t = 0; t < data.samples[i].fields.rows(); ++t)
      for (std::size_t f = 0; f < SampleRecord::kFields; ++f)
        m.field_scale[f] = std::max(m.field_scale[f], std::abs(data.samples[i].fields(t, f)));
  for (auto& s : m.field_scale)
    if (!(s > 0.0)) s = 1.0;
  Rng rng(cfg.seed);
  return DeepONetModel(m, rng);
}

ProbeSet fluids_probe(const SampleRecord& sample, std::size_t probe_size) {
  const std::size_t n = std::min(probe_size, sample.receivers.rows());
  return {sample.labels,
          ReceiverSet(Tensor({n, 2}, std::vector<double>(sample.receivers.data(), sample.receivers.data() + 2 * n))),
          {},
          {}};
}

TrainResult train_source_localization(const Dataset& data, const std::vector<std::size_t>& train, DeepONetModel model,
                                      const FluidsTrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ParameterError("training set is empty");
  const LossWeights& w = cfg.weights;
  TrainState st(model.parameters(), cfg.opt.lr, mix_seed(cfg.seed, 1));
  TrainHistory history;

  const ProbeSet probe = fluids_probe(data.samples[train.front()], cfg.ntk.probe_size);
  for (std::size_t i : train) {
    if (w.beta > 0.0) check_physics_receivers(data.samples[i].receiver_set(), cfg.physics);
  }

  struct PerSample {
    ParamVector grad;
    double data = 0.0, physics = 0.0, source = 0.0;
  };

  minibatches(train, cfg, st, [&](const std::vector<std::size_t>& batch, std::size_t epoch) {
    HistoryRow row;
    row.step = st.step;
    row.epoch = epoch;
    row.ntk = observe_kernel(model, probe, st, cfg, history);
    ensure_reference(model, probe, st, cfg);
    row.lr = st.lr;

    const std::size_t B = batch.size();
    const std::size_t P = w.beta > 0.0 ? (cfg.physics_batch == 0 ? B : std::min(B, cfg.physics_batch)) : 0;
    std::vector<PerSample> per(B);
    parallel_for(B, [&](std::size_t k) {
      const SampleRecord& rec = data.samples[batch[k]];
      const ReceiverSet receivers = rec.receiver_set();
      PerSample& out = per[k];

      const Tensor s = source_matrix(rec.labels);
      const Tensor target = rec.field(0);
      const Tensor u = model.field_from_branch_input(s, rec.receivers);
      out.data = data_loss(u, target);
      const Tensor gu = scale(data_loss_gradient(u, target), w.alpha / static_cast<double>(B));
      FieldGradients fg = model.field_backward(s, rec.receivers, gu);

      const InverseTrace trace = model.inverse_trace(rec.fields, receivers, rec.labels.size());
      const std::vector<SourceSpec> pred = model.decode_sources(trace);
      SourceLossResult sl = source_loss_detail(pred, rec.labels);
      out.source = sl.loss;
      Tensor head_grad = scale(sl.pred_grad, w.gamma / static_cast<double>(B));

      if (k < P) {
        const PhysicsGradients pg = physics_loss_backward(model, pred, receivers, cfg.physics);
        out.physics = pg.loss;
        const double c = w.beta / static_cast<double>(P);
        add_into(fg.branch, [&] { ParamVector g = pg.branch; scale_into(g, c); return g; }());
        add_into(fg.trunk, [&] { ParamVector g = pg.trunk; scale_into(g, c); return g; }());
        if (cfg.physics_to_head) axpy_inplace(head_grad, c, pg.source_grad);
      }
      const InverseGradients ig = model.inverse_backward(trace, head_grad);
      out.grad = model.flatten(&fg.branch, &fg.trunk, &ig.encoder, &ig.decoder);
    });

    ParamVector grad = model.zero_gradients();
    double l_data = 0.0, l_phys = 0.0, l_src = 0.0;
    for (std::size_t k = 0; k < B; ++k) {
      add_into(grad, per[k].grad);
      l_data += per[k].data;
      l_phys += per[k].physics;
      l_src += per[k].source;
    }
    LossComponents comp;
    comp.data = l_data / static_cast<double>(B);
    if (P > 0) comp.physics = l_phys / static_cast<double>(P);
    comp.source = enabled(w.gamma, l_src / static_cast<double>(B));
    if (w.ntk > 0.0) {
      comp.ntk = ntk_drift_penalty(assemble_gram(model, probe, st.step, cfg.ntk.cap), *st.reference);
      ParamVector g = ntk_drift_gradient(model, probe, *st.reference);
      scale_into(g, w.ntk);
      add_into(grad, g);
    }
    row.loss = total_loss(comp, w);

    adam_step(st, grad, cfg.opt);
    model.assign_parameters(st.params);
    log_progress(cfg, row);
    history.rows.push_back(std::move(row));
  });
  return {std::move(model), std::move(history)};
}

LocalizationReport evaluate_localization(const std::function<std::vector<SourceSpec>(const SampleRecord&)>& predict,
                                         const Dataset& data, const std::vector<std::size_t>& indices) {
  LocalizationReport rep;
  for (std::size_t i : indices) {
    const SampleRecord& rec = data.samples.at(i);
    const std::vector<SourceSpec> pred = predict(rec);
    const SourceLossResult m = source_loss_detail(pred, rec.labels);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      LocalizationRow row;
      row.sample = i;
      row.source = k;
      row.predicted = pred[k];
      row.truth = rec.labels[m.assignment[k]];
      row.location_error = std::hypot(pred[k].location[0] - row.truth.location[0],
                                      pred[k].location[1] - row.truth.location[1]);
      row.strength_error = std::hypot(pred[k].strength[0] - row.truth.strength[0],
                                      pred[k].strength[1] - row.truth.strength[1]);
      rep.mean_location_error += row.location_error;
      rep.mean_strength_error += row.strength_error;
      rep.rows.push_back(row);
    }
  }
  if (!rep.rows.empty()) {
    rep.mean_location_error /= static_cast<double>(rep.rows.size());
    rep.mean_strength_error /= static_cast<double>(rep.rows.size());
  }
  return rep;
}

LocalizationReport evaluate_localization(const DeepONetModel& model, const Dataset& data,
                                         const std::vector<std::size_t>& indices) {
  return evaluate_localization(
      [&](const SampleRecord& rec) { return model.predict_sources(rec.fields, rec.receiver_set(), rec.labels.size()); },
      data, indices);
}

void write_localization_csv(std::ostream& out, const LocalizationReport& rep) {
  out << "sample,source,true_x,true_y,pred_x,pred_y,true_re,true_im,pred_re,pred_im,location_error,strength_error\n";
  char buf[512];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.sample,
                  r.source, r.truth.location[0], r.truth.location[1], r.predicted.location[0], r.predicted.location[1],
                  r.truth.strength[0], r.truth.strength[1], r.predicted.strength[0], r.predicted.strength[1],
                  r.location_error, r.strength_error);
    out << buf;
  }
}

void write_scatter_svg(std::ostream& out, const LocalizationReport& rep) {
  constexpr double size = 420, lo = 50, hi = 390;
  auto px = [&](double v) { return lo + (hi - lo) * std::clamp(v, 0.0, 1.0); };
  auto py = [&](double v) { return hi - (hi - lo) * std::clamp(v, 0.0, 1.0); };
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n", size,
                size, size, size);
  out << buf;
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", lo, lo,
                hi - lo, hi - lo);
  out << buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n",
                px(0), py(0), px(1), py(1));
  out << buf;
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"steelblue\"/>\n",
                  px(r.truth.location[0]), py(r.predicted.location[0]));
    out << buf;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\" fill=\"darkorange\"/>\n",
                  px(r.truth.location[1]), py(r.predicted.location[1]));
    out << buf;
  }
  out << "<text x=\"220\" y=\"412\" text-anchor=\"middle\" font-size=\"13\">true coordinate</text>\n"
         "<text x=\"16\" y=\"220\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 220)\">"
         "predicted coordinate</text>\n"
         "<circle cx=\"62\" cy=\"64\" r=\"4\" fill=\"steelblue\"/><text x=\"70\" y=\"68\" font-size=\"12\">x</text>\n"
         "<circle cx=\"92\" cy=\"64\" r=\"4\" fill=\"darkorange\"/><text x=\"100\" y=\"68\" font-size=\"12\">y</text>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"220\" y=\"32\" text-anchor=\"middle\" font-size=\"13\">mean location error %.4g</text>\n",
                rep.mean_location_error);
  out << buf << "</svg>\n";
}

// --- image reconstruction ------------------------------------------------

ImageTrainConfig::ImageTrainConfig() {
  weights.beta = 0.0;
  weights.gamma = 0.0;
  model.inverse_head = false;
  model.latent_dim = 64;
  model.hidden = 128;
  model.hidden_layers = 2;
}

void ImageTrainConfig::validate() const {
  opt.validate();
  ntk.validate();
  weights.validate();
  split.validate();
  if (weights.beta != 0.0 || weights.gamma != 0.0) {
    throw ParameterError("physics and source weights must be 0 for the image task");
  }
  if (eval_runs == 0) throw ParameterError("eval_runs must be positive");
}

Tensor pixel_grid(std::size_t channels, std::size_t height, std::size_t width) {
  const std::size_t dims = channels > 1 ? 3 : 2;
  Tensor g({channels * height * width, dims});
  auto coord = [](std::size_t i, std::size_t n) { return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5; };
  std::size_t r = 0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x, ++r) {
        g(r, 0) = coord(x, width);
        g(r, 1) = coord(y, height);
        if (dims == 3) g(r, 2) = coord(c, channels);
      }
  return g;
}

DeepONetModel make_image_model(const ImageTrainConfig& cfg, std::size_t channels, std::size_t height,
                               std::size_t width) {
  DeepONetConfig m = cfg.model;
  m.branch_in = channels * height * width;
  m.trunk_in = channels > 1 ? 3 : 2;
  m.inverse_head = false;
  m.se = cfg.flags.use_se;
  Rng rng(cfg.seed);
  return DeepONetModel(m, rng);
}

Tensor reconstruct(const DeepONetModel& model, const Tensor& corrupted, const Tensor& masks, bool composite) {
  const std::size_t b = corrupted.dim(0), c = corrupted.dim(1), h = corrupted.dim(2), w = corrupted.dim(3);
  const Tensor pred = model.batch_field(corrupted.reshaped({b, c * h * w}), pixel_grid(c, h, w));
  Tensor out(corrupted.shape());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t k = 0; k < h * w; ++k) {
        const std::size_t at = (i * c + ch) * h * w + k;
        const double v = std::clamp(pred[at], 0.0, 1.0);
        out[at] = (!composite || masks[i * h * w + k] == 1.0) ? v : corrupted[at];
      }
  return out;
}

ProbeSet image_probe(const ImageBatch& images, std::size_t index, const ImageTrainConfig& cfg) {
  const std::size_t n = images.pixels();
  const Tensor grid = pixel_grid(images.channels(), images.height(), images.width());
  const CorruptedBatch cb = corrupt(images.subset({index}), {cfg.mask.side, mix_seed(cfg.seed, 2)});
  ProbeSet probe;
  probe.branch_input = cb.batch.images.reshaped({1, n});
  const std::size_t count = std::min(cfg.ntk.probe_size, n);
  probe.trunk_points = Tensor({count, grid.cols()});
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t d = 0; d < grid.cols(); ++d) probe.trunk_points(k, d) = grid(k * n / count, d);
  return probe;
}

TrainResult train_reconstruction(const ImageBatch& images, const std::vector<std::size_t>& train, DeepONetModel model,
                                 const ImageTrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw ParameterError("training set is empty");
  const std::size_t c = images.channels(), h = images.height(), wd = images.width(), n = c * h * wd;
  if (cfg.mask.side > h || cfg.mask.side > wd) throw ParameterError("mask side does not fit the images");
  const LossWeights& w = cfg.weights;
  const Tensor grid = pixel_grid(c, h, wd);
  const FeatureExtractor fx(c);
  TrainState st(model.parameters(), cfg.opt.lr, mix_seed(cfg.seed, 1));
  TrainHistory history;

  const ProbeSet probe = image_probe(images, train.front(), cfg);

  minibatches(train, cfg, st, [&](const std::vector<std::size_t>& batch, std::size_t epoch) {
    HistoryRow row;
    row.step = st.step;
    row.epoch = epoch;
    row.ntk = observe_kernel(model, probe, st, cfg, history);
    ensure_reference(model, probe, st, cfg);
    row.lr = st.lr;

    const std::size_t B = batch.size();
    const ImageBatch clean = images.subset(batch);
    const CorruptedBatch cb = corrupt(clean, cfg.mask, st.rng);
    const Tensor x = cb.batch.images.reshaped({B, n});
    const Tensor target = clean.images.reshaped({B, n});
    const Tensor pred = model.batch_field(x, grid);

    LossComponents comp;
    comp.data = mse(pred, target);
    Tensor grad = scale(sub(pred, target), 2.0 * w.alpha / static_cast<double>(B * n));
    if (w.delta > 0.0) {
      const Tensor p4 = pred.reshaped({B, c, h, wd}), t4 = clean.images;
      comp.perceptual = perceptual_loss(p4, t4, fx);
      axpy_inplace(grad, w.delta, perceptual_loss_gradient(p4, t4, fx).reshaped({B, n}));
    }
    const FieldGradients fg = model.batch_field_backward(x, grid, grad);
    ParamVector flat = model.flatten(&fg.branch, &fg.trunk, nullptr, nullptr);
    if (w.ntk > 0.0) {
      comp.ntk = ntk_drift_penalty(assemble_gram(model, probe, st.step, cfg.ntk.cap), *st.reference);
      ParamVector g = ntk_drift_gradient(model, probe, *st.reference);
      scale_into(g, w.ntk);
      add_into(flat, g);
    }
    row.loss = total_loss(comp, w);

    adam_step(st, flat, cfg.opt);
    model.assign_parameters(st.params);
    log_progress(cfg, row);
    history.rows.push_back(std::move(row));
  });
  return {std::move(model), std::move(history)};
}

ReconstructionReport evaluate_reconstruction(const DeepONetModel& model, const ImageBatch& images,
                                             const std::vector<std::size_t>& indices, const ImageTrainConfig& cfg) {
  if (indices.empty()) throw ParameterError("no evaluation images");
  const ImageBatch clean = images.subset(indices);
  ReconstructionReport rep;
  for (std::size_t r = 0; r < cfg.eval_runs; ++r) {
    const CorruptedBatch cb = corrupt(clean, {cfg.mask.side, mix_seed(cfg.mask.seed, 1000 + r)});
    const Tensor out = reconstruct(model, cb.batch.images, cb.masks, cfg.composite);
    rep.model_runs.push_back(batch_metrics(out, clean.images));
    rep.baseline_runs.push_back(batch_metrics(cb.batch.images, clean.images));
  }
  rep.model = summarize(rep.model_runs);
  rep.baseline = summarize(rep.baseline_runs);
  return rep;
}

void write_reconstruction_csv(std::ostream& out, const ReconstructionReport& rep) {
  out << "split,run,psnr,ssim,mse\n";
  char buf[160];
  auto runs = [&](const char* name, const std::vector<MetricSample>& v) {
    for (std::size_t r = 0; r < v.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.10g,%.10g,%.10g\n", name, r, v[r].psnr, v[r].ssim, v[r].mse);
      out << buf;
    }
  };
  runs("model", rep.model_runs);
  runs("baseline", rep.baseline_runs);
  auto summary = [&](const char* name, const MetricReport& m) {
    std::snprintf(buf, sizeof buf, "%s,mean,%.10g,%.10g,%.10g\n", name, m.psnr.mean, m.ssim.mean, m.mse.mean);
    out << buf;
    std::snprintf(buf, sizeof buf, "%s,std,%.10g,%.10g,%.10g\n", name, m.psnr.std, m.ssim.std, m.mse.std);
    out << buf;
  };
  summary("model", rep.model);
  summary("baseline", rep.baseline);
}

// --- ablation --------------------------------------------------------------

std::vector<AblationRow> run_ablation(const ImageBatch& images, const ImageTrainConfig& cfg) {
  const Split split = make_split(images.size(), cfg.split);
  const std::vector<std::size_t>& eval = split.test.empty() ? split.val : split.test;
  std::vector<AblationRow> rows;
  for (const AblationFlags flags : {AblationFlags{false, false}, AblationFlags{true, false}, AblationFlags{false, true},
                                    AblationFlags{true, true}}) {
    ImageTrainConfig c = cfg;
    c.flags = flags;
    const DeepONetModel model = make_image_model(c, images.channels(), images.height(), images.width());
    const TrainResult trained = train_reconstruction(images, split.train, model, c);
    rows.push_back({flags, evaluate_reconstruction(trained.model, images, eval, c).model});
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  out << "use_ntk,use_se,psnr_mean,psnr_std,ssim_mean,ssim_std,mse_mean,mse_std,n\n";
  char buf[256];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%zu\n", r.flags.use_ntk ? 1 : 0,
                  r.flags.use_se ? 1 : 0, m.psnr.mean, m.psnr.std, m.ssim.mean, m.ssim.std, m.mse.mean, m.mse.std,
                  m.n);
    out << buf;
  }
}

}  // namespace opinet
