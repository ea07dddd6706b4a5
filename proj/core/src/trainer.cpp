#include "hsnerf/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace hsnerf {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (pretrain_iters < 0 || finetune_iters < 0) throw InvalidArgument("iteration counts must be >= 0");
  if (rays_per_batch < 1) throw InvalidArgument("rays_per_batch must be >= 1");
  if (!(lr_init > 0.0) || !(lr_final > 0.0)) throw InvalidArgument("learning rates must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InvalidArgument("adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidArgument("adam eps must be > 0");
  if (log_interval < 1) throw InvalidArgument("log_interval must be >= 1");
  if (eval_interval < 0) throw InvalidArgument("eval_interval must be >= 0");
  if (!(grad_clip >= 0.0)) throw InvalidArgument("grad_clip must be >= 0");
  if (chunk_rays < 1) throw InvalidArgument("chunk_rays must be >= 1");
  pretrain_weights.validate();
  finetune_weights.validate();
  render.validate();
}

namespace {

json weights_json(const LossWeights& w) {
  return {{"hsi", w.hsi}, {"ang", w.ang}, {"prop", w.prop}, {"dist", w.dist},
          {"ori", w.ori}, {"pn", w.pn},   {"ang_eps", w.ang_eps}};
}

LossWeights weights_from(const json& j) {
  LossWeights w;
  w.hsi = j.value("hsi", w.hsi);
  w.ang = j.value("ang", w.ang);
  w.prop = j.value("prop", w.prop);
  w.dist = j.value("dist", w.dist);
  w.ori = j.value("ori", w.ori);
  w.pn = j.value("pn", w.pn);
  w.ang_eps = j.value("ang_eps", w.ang_eps);
  return w;
}

}  // namespace

std::string train_config_to_json(const TrainConfig& c) {
  json j{{"pretrain_iters", c.pretrain_iters},
         {"finetune_iters", c.finetune_iters},
         {"rays_per_batch", c.rays_per_batch},
         {"lr_init", c.lr_init},
         {"lr_final", c.lr_final},
         {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},
         {"adam_eps", c.adam_eps},
         {"pretrain_weights", weights_json(c.pretrain_weights)},
         {"finetune_weights", weights_json(c.finetune_weights)},
         {"seed", c.seed},
         {"log_interval", c.log_interval},
         {"eval_interval", c.eval_interval},
         {"grad_clip", c.grad_clip},
         {"chunk_rays", c.chunk_rays},
         {"field", json::parse(field_config_to_json(c.field))},
         {"render",
          {{"coarse_samples", c.render.coarse_samples},
           {"fine_samples", c.render.fine_samples},
           {"background", c.render.background},
           {"bounds_pad", c.render.bounds_pad}}}};
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  TrainConfig c;
  try {
    const json j = json::parse(text);
    c.pretrain_iters = j.value("pretrain_iters", c.pretrain_iters);
    c.finetune_iters = j.value("finetune_iters", c.finetune_iters);
    c.rays_per_batch = j.value("rays_per_batch", c.rays_per_batch);
    c.lr_init = j.value("lr_init", c.lr_init);
    c.lr_final = j.value("lr_final", c.lr_final);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    if (j.contains("pretrain_weights")) c.pretrain_weights = weights_from(j.at("pretrain_weights"));
    if (j.contains("finetune_weights")) c.finetune_weights = weights_from(j.at("finetune_weights"));
    c.seed = j.value("seed", c.seed);
    c.log_interval = j.value("log_interval", c.log_interval);
    c.eval_interval = j.value("eval_interval", c.eval_interval);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.chunk_rays = j.value("chunk_rays", c.chunk_rays);
    if (j.contains("field")) c.field = field_config_from_json(j.at("field").dump());
    if (j.contains("render")) {
      const auto& r = j.at("render");
      c.render.coarse_samples = r.value("coarse_samples", c.render.coarse_samples);
      c.render.fine_samples = r.value("fine_samples", c.render.fine_samples);
      c.render.background = r.value("background", c.render.background);
      c.render.bounds_pad = r.value("bounds_pad", c.render.bounds_pad);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainState init_state(const TrainConfig& cfg, const Dataset& ds) {
  FieldConfig fc = cfg.field;
  fc.n_channels = ds.bands();
  fc.bounds = ds.aabb;
  TrainState s;
  s.params = init_params<float>(fc, cfg.seed);
  s.adam_m.assign(s.params.theta.size(), 0.0f);
  s.adam_v.assign(s.params.theta.size(), 0.0f);
  return s;
}

Checkpoint to_checkpoint(const TrainState& s) { return Checkpoint{s.params, s.step, s.stage, s.adam_m, s.adam_v, s.adam_t}; }

TrainState from_checkpoint(const Checkpoint& c) {
  TrainState s;
  s.params = c.params;
  s.step = c.step;
  s.stage = c.stage;
  s.adam_m = c.adam_m;
  s.adam_v = c.adam_v;
  s.adam_t = c.adam_t;
  if (s.adam_m.empty()) {
    s.adam_t = 0;
    s.adam_m.assign(s.params.theta.size(), 0.0f);
    s.adam_v.assign(s.params.theta.size(), 0.0f);
  }
  return s;
}

RayPool::RayPool(const Dataset& ds, Stage stage) : ds_(ds) {
  if (ds.train_ids.empty()) throw InvalidArgument("ray pool: no training views");
  if (stage == Stage::Finetune && !ds.has_masks()) throw InvalidArgument("fine-tuning needs foreground masks");
  for (int v : ds.train_ids) {
    for (int y = 0; y < ds.camera.height; ++y) {
      for (int x = 0; x < ds.camera.width; ++x) {
        if (stage == Stage::Finetune && !ds.masks[v](y, x)) continue;
        pixels_.push_back({v, x, y});
      }
    }
  }
  if (pixels_.empty()) throw InvalidArgument("ray pool: the union of training masks is empty");
}

SampledBatch RayPool::draw(std::size_t n, std::mt19937_64& rng) const {
  SampledBatch out;
  const int L = ds_.bands();
  out.batch.targets.resize(L, static_cast<Eigen::Index>(n));
  out.batch.rays.reserve(n);
  out.batch.foreground.reserve(n);
  out.pixels.reserve(n);
  std::uniform_int_distribution<std::size_t> pick(0, pixels_.size() - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const PixelRef& p = pixels_[pick(rng)];
    out.pixels.push_back(p);
    out.batch.rays.push_back(pixel_ray(ds_.camera, ds_.poses[p.view], p.x + 0.5, p.y + 0.5));
    const auto s = ds_.views[p.view].spectrum(p.y, p.x);
    for (int b = 0; b < L; ++b) out.batch.targets(b, static_cast<Eigen::Index>(i)) = s[b];
    out.batch.foreground.push_back(ds_.has_masks() && ds_.masks[p.view](p.y, p.x) ? 1 : 0);
  }
  return out;
}

SampledBatch sample_ray_batch(const Dataset& ds, Stage stage, std::size_t n, std::mt19937_64& rng) {
  return RayPool(ds, stage).draw(n, rng);
}

double learning_rate(const TrainConfig& cfg, std::int64_t t, std::int64_t T) {
  if (T <= 0) return cfg.lr_init;
  return cfg.lr_init * std::pow(cfg.lr_final / cfg.lr_init, static_cast<double>(t) / static_cast<double>(T));
}

namespace {

void adam_update(TrainState& s, const std::vector<float>& grad, const TrainConfig& cfg, double lr) {
  const std::int64_t t = ++s.adam_t;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(cfg.adam_eps);
  auto& th = s.params.theta;
  for (std::size_t i = 0; i < th.size(); ++i) {
    const float g = grad[i];
    s.adam_m[i] = fb1 * s.adam_m[i] + (1.0f - fb1) * g;
    s.adam_v[i] = fb2 * s.adam_v[i] + (1.0f - fb2) * g * g;
    th[i] -= step * s.adam_m[i] / (std::sqrt(s.adam_v[i] * inv_c2) + eps);
  }
}

std::string report_text(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "L_hsi=%g L_ang=%g L_dist=%g L_ori=%g L_pn=%g total=%g", r.hsi, r.ang, r.dist, r.ori,
                r.pn, r.total);
  return buf;
}

}  // namespace

TrainState train_stage(TrainState state, const TrainConfig& cfg, const Dataset& ds, Stage stage,
                       const TrainHooks& hooks) {
  cfg.validate();
  ds.validate();
  if (state.params.config.n_channels != ds.bands()) throw InvalidArgument("train: field channels differ from dataset bands");
  if (state.stage != stage) {
    state.stage = stage;
    state.step = 0;
  }
  const std::int64_t T = cfg.iters(stage);
  if (state.step >= T) return state;
  if (state.adam_m.size() != state.params.theta.size()) {
    state.adam_m.assign(state.params.theta.size(), 0.0f);
    state.adam_v.assign(state.params.theta.size(), 0.0f);
    state.adam_t = 0;
  }

  const LossWeights& weights = cfg.weights(stage);
  if (weights.prop != 0.0 && state.step == 0) {
    std::fprintf(stderr, "note: lambda_prop=%g has no effect (no proposal network)\n", weights.prop);
  }
  const RayPool pool(ds, stage);
  std::ofstream csv;
  if (!hooks.loss_csv_dir.empty()) {
    std::filesystem::create_directories(hooks.loss_csv_dir);
    const auto path = hooks.loss_csv_dir / ("loss_" + to_string(stage) + ".csv");
    const bool fresh = state.step == 0 || !std::filesystem::exists(path);
    csv.open(path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot write " + path.string());
    if (fresh) csv << loss_csv_header() << "\n";
  }

  ObjectiveOptions opts;
  opts.render = cfg.render;
  opts.weights = weights;
  opts.jitter = true;
  opts.chunk_rays = cfg.chunk_rays;
  const auto stage_id = static_cast<std::uint64_t>(stage);
  std::vector<float> grad(state.params.theta.size());
  std::int64_t taken = 0;

  while (state.step < T && (hooks.max_steps < 0 || taken < hooks.max_steps)) {
    const auto step = static_cast<std::uint64_t>(state.step);
    std::mt19937_64 rng(derive_seed(cfg.seed, {stage_id, step, 0}));
    const SampledBatch sb = pool.draw(static_cast<std::size_t>(cfg.rays_per_batch), rng);
    opts.seed = derive_seed(cfg.seed, {stage_id, step, 1});
    std::fill(grad.begin(), grad.end(), 0.0f);
    const LossReport rep = evaluate_objective<float>(state.params, sb.batch, opts, &grad);
    if (!std::isfinite(rep.total)) {
      throw NumericError("non-finite loss at " + to_string(stage) + " step " + std::to_string(state.step) + ": " +
                         report_text(rep));
    }
    if (cfg.grad_clip > 0.0) {
      double norm = 0.0;
      for (float g : grad) norm += static_cast<double>(g) * g;
      norm = std::sqrt(norm);
      if (norm > cfg.grad_clip) {
        const float k = static_cast<float>(cfg.grad_clip / norm);
        for (float& g : grad) g *= k;
      }
    }
    adam_update(state, grad, cfg, learning_rate(cfg, state.step, T));
    ++state.step;
    ++taken;

    if (hooks.on_step) hooks.on_step(state, rep);
    if (csv.is_open() && (state.step % cfg.log_interval == 0 || state.step == T)) {
      csv << loss_csv_row(state.step, rep) << "\n";
    }
    if (hooks.on_eval && cfg.eval_interval > 0 && state.step % cfg.eval_interval == 0) hooks.on_eval(state);
  }
  return state;
}

TrainState two_stage(const TrainConfig& cfg, const Dataset& ds, const std::filesystem::path& out,
                     const TrainHooks& hooks) {
  cfg.validate();
  if (!ds.has_masks()) throw InvalidArgument("two-stage training needs foreground masks");
  TrainState s = init_state(cfg, ds);
  s = train_stage(std::move(s), cfg, ds, Stage::Pretrain, hooks);
  if (hooks.on_stage_end) hooks.on_stage_end(s);
  s = train_stage(std::move(s), cfg, ds, Stage::Finetune, hooks);
  if (hooks.on_stage_end) hooks.on_stage_end(s);
  if (!out.empty()) save_checkpoint(out, to_checkpoint(s));
  return s;
}

std::vector<WeightPair> default_grid() { return {{0.0, 1.0}, {0.25, 0.75}, {0.5, 0.5}, {0.75, 0.25}, {1.0, 0.0}}; }

std::string pair_label(const WeightPair& p) {
  if (p.ang == 0.0 && p.hsi == 1.0) return "(0,1) HSI-only";
  if (p.ang == 1.0 && p.hsi == 0.0) return "(1,0) Angular-only";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "(%g,%g)", p.ang, p.hsi);
  return buf;
}

std::vector<AblationRow> ablation_grid(const TrainConfig& cfg, const Dataset& ds, const std::vector<WeightPair>& grid,
                                       const EvalOptions& eval, const std::function<void(const AblationRow&)>& on_row) {
  if (grid.empty()) throw InvalidArgument("ablation grid is empty");
  std::vector<AblationRow> rows;
  for (const auto& pair : grid) {
    TrainConfig c = cfg;
    c.pretrain_weights.ang = c.finetune_weights.ang = pair.ang;
    c.pretrain_weights.hsi = c.finetune_weights.hsi = pair.hsi;
    c.validate();
    TrainHooks hooks;
    hooks.on_stage_end = [&](const TrainState& s) {
      AblationRow row{pair, pair_label(pair), s.stage, evaluate_heldout(s.params, ds, eval)};
      if (on_row) on_row(row);
      rows.push_back(std::move(row));
    };
    two_stage(c, ds, {}, hooks);
  }
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "config,lambda_ang,lambda_hsi,stage,SAM,RMSE,SSIM,PSNR,"
         "sam_mean,sam_sd,rmse_mean,rmse_sd,ssim_mean,ssim_sd,psnr_mean,psnr_sd\n";
  char buf[512];
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof(buf),
                  "\"%s\",%g,%g,%s,%.4f ± %.4f,%.4f ± %.4f,%.4f ± %.4f,%.2f ± %.2f,"
                  "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f\n",
                  r.label.c_str(), r.pair.ang, r.pair.hsi, r.stage == Stage::Pretrain ? "pre-train" : "fine-tune",
                  m.sam.mean, m.sam.sd, m.rmse.mean, m.rmse.sd, m.ssim.mean, m.ssim.sd, m.psnr.mean, m.psnr.sd,
                  m.sam.mean, m.sam.sd, m.rmse.mean, m.rmse.sd, m.ssim.mean, m.ssim.sd, m.psnr.mean, m.psnr.sd);
    out << buf;
  }
}

}  // namespace hsnerf
