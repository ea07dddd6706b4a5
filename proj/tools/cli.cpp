#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hsnerf/dataset.hpp"
#include "hsnerf/parallel.hpp"
#include "hsnerf/pcd_extract.hpp"
#include "hsnerf/spatial_eval.hpp"
#include "hsnerf/spectral_eval.hpp"
#include "hsnerf/trainer.hpp"
#include "hsnerf/wr_calibration.hpp"
#include "json.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;

namespace hsnerf::cli {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Errors raised before the first output is created are usage errors.
struct Context {
  bool writing = false;
  std::string effective_config;
};

void begin_output(Context& ctx, const fs::path& dir) {
  ctx.writing = true;
  if (!dir.empty()) fs::create_directories(dir);
}

fs::path manifest_for_file(const fs::path& out) {
  fs::path m = out;
  m += ".manifest.json";
  return m;
}

// ------------------------------------------------------------------ parsing

std::vector<double> parse_numbers(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad ") + what + " '" + text + "'");
    }
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what);
  return out;
}

BandTriplet parse_triplet(const std::string& text) {
  const auto v = parse_numbers(text, "band triplet");
  if (v.size() != 3) throw UsageError("band triplet needs three wavelengths, e.g. 650,540,470");
  return {v[0], v[1], v[2]};
}

HyperCube load_cube(const fs::path& header) {
  if (header.extension() != ".hdr") throw UsageError("expected an ENVI header (.hdr): " + header.string());
  fs::path data = header;
  data.replace_extension(".bil");
  return read_bil(header, data);
}

void save_cube(const HyperCube& cube, const fs::path& stem) {
  fs::path hdr = stem, bil = stem;
  hdr += ".hdr";
  bil += ".bil";
  write_bil(cube, hdr, bil);
}

// "x0,y0,x1,y1" (inclusive-exclusive pixel box), a mask PNG, or the full frame.
Mask make_roi(const std::string& box, const std::string& mask_png, int h, int w) {
  if (!box.empty() && !mask_png.empty()) throw UsageError("--roi and --roi-mask are mutually exclusive");
  if (!mask_png.empty()) {
    Mask m = Mask::from_png(mask_png);
    if (m.height() != h || m.width() != w) throw UsageError("ROI mask size differs from the cube");
    return m;
  }
  if (box.empty()) return Mask(h, w, true);
  const auto v = parse_numbers(box, "ROI box");
  if (v.size() != 4) throw UsageError("--roi expects x0,y0,x1,y1");
  const int x0 = static_cast<int>(v[0]), y0 = static_cast<int>(v[1]), x1 = static_cast<int>(v[2]),
            y1 = static_cast<int>(v[3]);
  if (x0 < 0 || y0 < 0 || x1 > w || y1 > h || x0 >= x1 || y0 >= y1) throw UsageError("--roi box outside the frame");
  Mask m(h, w, false);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.set(y, x, true);
  return m;
}

std::string default_data_dir() {
  const char* env = std::getenv("HSNERF_DATA_DIR");
  return env ? env : "";
}

fs::path require_data(const std::string& data) {
  if (data.empty()) throw UsageError("no dataset: pass --data or set HSNERF_DATA_DIR");
  return data;
}

std::vector<int> parse_view_list(const std::string& text, const Dataset& ds) {
  if (text == "eval") return ds.eval_ids;
  if (text == "train") return ds.train_ids;
  std::vector<int> ids;
  if (text == "all") {
    for (int i = 0; i < static_cast<int>(ds.views.size()); ++i) ids.push_back(i);
    return ids;
  }
  for (double v : parse_numbers(text, "view list")) {
    const int id = static_cast<int>(v);
    if (id < 0 || id >= static_cast<int>(ds.poses.size())) throw UsageError("view id out of range: " + std::to_string(id));
    ids.push_back(id);
  }
  return ids;
}

// ------------------------------------------------------------ shared options

struct RenderArgs {
  RenderConfig cfg;
  void add(CLI::App* sub) {
    sub->add_option("--coarse-samples", cfg.coarse_samples, "Stratified samples per ray")->capture_default_str();
    sub->add_option("--fine-samples", cfg.fine_samples, "Importance samples per ray (0 = single pass)")
        ->capture_default_str();
    sub->add_option("--background", cfg.background, "Background radiance in every band")->capture_default_str();
  }
};

struct TrainArgs {
  TrainConfig cfg;
  std::string data = default_data_dir();
  std::string activation = "relu";
  double lambda_ang = 0.25, lambda_hsi = 0.75;
  RenderArgs render;

  void add(CLI::App* sub) {
    sub->add_option("--data", data, "Dataset directory (default: $HSNERF_DATA_DIR)");
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--pretrain-iters", cfg.pretrain_iters)->capture_default_str();
    sub->add_option("--finetune-iters", cfg.finetune_iters)->capture_default_str();
    sub->add_option("--rays", cfg.rays_per_batch, "Rays per batch")->capture_default_str();
    sub->add_option("--lr-init", cfg.lr_init)->capture_default_str();
    sub->add_option("--lr-final", cfg.lr_final)->capture_default_str();
    sub->add_option("--lambda-ang", lambda_ang, "Angular loss weight")->capture_default_str();
    sub->add_option("--lambda-hsi", lambda_hsi, "Per-band L2 loss weight")->capture_default_str();
    sub->add_option("--lambda-dist", cfg.pretrain_weights.dist)->capture_default_str();
    sub->add_option("--grad-clip", cfg.grad_clip, "Global gradient-norm clip (0 = off)")->capture_default_str();
    sub->add_option("--log-interval", cfg.log_interval)->capture_default_str();
    sub->add_option("--trunk-layers", cfg.field.trunk_layers)->capture_default_str();
    sub->add_option("--trunk-width", cfg.field.trunk_width)->capture_default_str();
    sub->add_option("--radiance-layers", cfg.field.radiance_layers)->capture_default_str();
    sub->add_option("--radiance-width", cfg.field.radiance_width)->capture_default_str();
    sub->add_option("--pos-frequencies", cfg.field.pos_frequencies)->capture_default_str();
    sub->add_option("--dir-frequencies", cfg.field.dir_frequencies)->capture_default_str();
    sub->add_option("--activation", activation, "relu or softplus")->capture_default_str();
    sub->add_flag("--predict-normals", cfg.field.predict_normals, "Enable the predicted-normal head");
    render.add(sub);
  }

  // Applies the loss pair to both stages and the shared options to cfg.
  TrainConfig finish() {
    TrainConfig out = cfg;
    out.field.activation = activation_from_string(activation);
    out.render = render.cfg;
    const double dist = cfg.pretrain_weights.dist;
    out.pretrain_weights = spectral_weights(lambda_ang, lambda_hsi);
    out.finetune_weights = spectral_weights(lambda_ang, lambda_hsi);
    out.pretrain_weights.dist = out.finetune_weights.dist = dist;
    out.validate();
    return out;
  }
};

void print_metrics(const std::string& label, const SpectralMetrics& m) {
  std::cout << label << " SAM " << m.sam.mean << " rad, RMSE " << m.rmse.mean << ", SSIM " << m.ssim.mean
            << ", PSNR " << m.psnr.mean << " dB over " << m.n_views << " views\n";
}

TrainHooks logging_hooks(const TrainConfig& cfg) {
  TrainHooks hooks;
  hooks.on_step = [log = cfg.log_interval](const TrainState& s, const LossReport& r) {
    if (s.step % log == 0) {
      std::cout << to_string(s.stage) << " " << s.step << " total " << r.total << " hsi " << r.hsi << " ang "
                << r.ang << std::endl;
    }
  };
  return hooks;
}

// ------------------------------------------------------------------ commands

struct SynthArgs {
  int views = 20, bands = 8, size = 64;
  std::uint64_t seed = 0;
  double noise = 0.0, eval_fraction = 0.1, lambda_min = 400.0, lambda_max = 1000.0;
  double radius = 2.0, elevation = 0.15;
  std::string out;
};

void cmd_synth(const SynthArgs& a, Context& ctx) {
  if (a.size < 2) throw UsageError("--size must be >= 2");
  TurntableConfig tt = default_turntable(a.views, a.size);
  tt.radius = a.radius;
  tt.elevation = a.elevation;
  tt.validate();
  SynthOptions so;
  so.bands = a.bands;
  so.lambda_min = a.lambda_min;
  so.lambda_max = a.lambda_max;
  so.eval_fraction = a.eval_fraction;
  so.noise_std = a.noise;
  so.seed = a.seed;
  if (so.bands < 2) throw UsageError("--bands must be >= 2");
  if (!(so.lambda_max > so.lambda_min)) throw UsageError("--lambda-max must exceed --lambda-min");
  if (!(so.noise_std >= 0.0)) throw UsageError("--noise must be >= 0");
  if (!(so.eval_fraction > 0.0 && so.eval_fraction < 1.0)) throw UsageError("--eval-fraction must be in (0,1)");
  const AnalyticScene scene = default_scene();
  scene.validate();

  const fs::path out = a.out;
  begin_output(ctx, out);
  emit_dataset(scene, tt, so, out);
  // Ground truth for eval-spatial.
  PointCloud gt;
  gt.points = sample_surface(scene, 200000);
  write_ply(out / "gt_surface.ply", gt, PlyPayload::Geometry);
  RunManifest m("synth");
  m.set_config(ctx.effective_config);
  m.set_seed(a.seed);
  m.add_output(out / "dataset.json");
  m.add_output(out / "gt_surface.ply");
  m.write(out / "manifest.json");
  std::cout << "wrote " << a.views << " views (" << a.bands << " bands, " << a.size << "x" << a.size << ") to " << out
            << "\n";
}

struct CalibArgs {
  std::string raw, wr, roi, roi_mask, out;
  double percentile = 70.0;
  int window = 5;
};

void cmd_calibrate(const CalibArgs& a, Context& ctx) {
  const HyperCube raw = load_cube(a.raw);
  const HyperCube wr = load_cube(a.wr);
  if (raw.wavelengths() != wr.wavelengths()) throw UsageError("raw and white-reference cubes have different bands");
  const Mask roi = make_roi(a.roi, a.roi_mask, wr.height(), wr.width());
  WrOptions opt{a.percentile, a.window};
  if (!(opt.percentile > 0.0 && opt.percentile < 100.0)) throw UsageError("--percentile must be in (0,100)");
  if (opt.smoothing_window < 1 || opt.smoothing_window % 2 == 0)
    throw UsageError("--window must be a positive odd number");

  const WrCalibration calib = build_calibration(wr, roi, opt);
  const HyperCube refl = calibrate(raw, calib);
  const fs::path out = a.out;
  begin_output(ctx, out);
  save_cube(refl, out / "calibrated");
  calib.mask.write_png(out / "wr_mask.png");
  write_spectrum_csv(out / "wr_spectrum.csv", wr.wavelengths(), calib.smoothed_spectrum);
  RunManifest m("calibrate");
  m.set_config(ctx.effective_config);
  m.add_input(a.raw);
  m.add_input(a.wr);
  m.add_output(out / "calibrated.hdr");
  m.add_output(out / "wr_mask.png");
  m.add_output(out / "wr_spectrum.csv");
  m.add_result("wr_pixels", static_cast<double>(calib.pixel_count));
  m.write(out / "manifest.json");
  std::cout << "white reference: " << calib.pixel_count << " pixels at p=" << a.percentile << "\n";
}

struct SweepArgs {
  std::string wr, roi, roi_mask, out, percentiles = "65,70,75";
};

void cmd_sweep(const SweepArgs& a, Context& ctx) {
  const HyperCube wr = load_cube(a.wr);
  const Mask roi = make_roi(a.roi, a.roi_mask, wr.height(), wr.width());
  const auto ps = parse_numbers(a.percentiles, "percentile list");
  for (double p : ps)
    if (!(p > 0.0 && p < 100.0)) throw UsageError("percentiles must be in (0,100)");
  const auto rows = percentile_sweep(wr, roi, ps);
  const fs::path out = a.out;
  begin_output(ctx, out);
  write_sweep_report(rows, out);
  RunManifest m("sweep-wr");
  m.set_config(ctx.effective_config);
  m.add_input(a.wr);
  m.add_output(out / "sweep.csv");
  for (const auto& r : rows) {
    std::cout << "p=" << r.percentile << " pixels=" << r.pixel_count << " median_dev=" << r.median_deviation << "\n";
    m.add_result("pixels_p" + std::to_string(static_cast<int>(r.percentile)), static_cast<double>(r.pixel_count));
  }
  m.write(out / "manifest.json");
}

struct TrainCmdArgs {
  TrainArgs train;
  std::string out;
  bool eval = false;
  std::string mask_policy = "full-frame";
};

void cmd_train(TrainCmdArgs& a, Context& ctx) {
  TrainConfig cfg = a.train.finish();
  const MaskPolicy policy = mask_policy_from_string(a.mask_policy);
  const fs::path data = require_data(a.train.data);
  const Dataset ds = load_dataset(data);
  if (policy == MaskPolicy::Foreground && !ds.has_masks()) throw UsageError("dataset has no masks; pass --mask-policy full-frame");

  const fs::path out = a.out;
  begin_output(ctx, out);
  {
    std::ofstream f(out / "train_config.json");
    f << train_config_to_json(cfg) << "\n";
  }
  TrainHooks hooks = logging_hooks(cfg);
  hooks.loss_csv_dir = out;
  hooks.on_stage_end = [&](const TrainState& s) {
    if (s.stage == Stage::Pretrain) save_checkpoint(out / "pretrain.ckpt", to_checkpoint(s));
  };
  const TrainState final_state = two_stage(cfg, ds, out / "final.ckpt", hooks);

  RunManifest m("train");
  m.set_config(ctx.effective_config);
  m.set_seed(cfg.seed);
  m.add_input(data);
  for (const char* f : {"train_config.json", "pretrain.ckpt", "final.ckpt", "loss_pretrain.csv", "loss_finetune.csv"})
    m.add_output(out / f);
  if (a.eval) {
    EvalOptions eo;
    eo.policy = policy;
    eo.render = cfg.render;
    eo.out_dir = out / "eval";
    fs::create_directories(eo.out_dir);
    const auto metrics = evaluate_heldout(final_state.params, ds, eo);
    print_metrics("held-out", metrics);
    m.add_output(eo.out_dir / "metrics.csv");
    m.add_result("sam", metrics.sam.mean);
    m.add_result("psnr", metrics.psnr.mean);
    m.add_result("ssim", metrics.ssim.mean);
  }
  m.write(out / "manifest.json");
}

struct AblateArgs {
  TrainArgs train;
  std::string out, grid = "default", mask_policy = "full-frame";
};

std::vector<WeightPair> parse_grid(const std::string& text) {
  if (text == "default") return default_grid();
  // "ang:hsi,ang:hsi,..."
  std::vector<WeightPair> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("--grid expects 'default' or ang:hsi pairs");
    const auto ang = parse_numbers(item.substr(0, colon), "grid weight");
    const auto hsi = parse_numbers(item.substr(colon + 1), "grid weight");
    if (ang[0] < 0.0 || hsi[0] < 0.0 || ang[0] + hsi[0] <= 0.0) throw UsageError("grid weights must be >= 0, not both 0");
    grid.push_back({ang[0], hsi[0]});
  }
  if (grid.empty()) throw UsageError("empty --grid");
  return grid;
}

void cmd_ablate(AblateArgs& a, Context& ctx) {
  TrainConfig cfg = a.train.finish();
  const auto grid = parse_grid(a.grid);
  EvalOptions eo;
  eo.policy = mask_policy_from_string(a.mask_policy);
  eo.render = cfg.render;
  const fs::path data = require_data(a.train.data);
  const Dataset ds = load_dataset(data);
  if (eo.policy == MaskPolicy::Foreground && !ds.has_masks()) throw UsageError("dataset has no masks; pass --mask-policy full-frame");

  const fs::path out = a.out;
  begin_output(ctx, out);
  const auto rows = ablation_grid(cfg, ds, grid, eo, [](const AblationRow& r) {
    print_metrics(r.label + " " + (r.stage == Stage::Pretrain ? "pre-train" : "fine-tune"), r.metrics);
  });
  write_ablation_csv(out / "ablation.csv", rows);
  RunManifest m("ablate");
  m.set_config(ctx.effective_config);
  m.set_seed(cfg.seed);
  m.add_input(data);
  m.add_output(out / "ablation.csv");
  m.write(out / "manifest.json");
}

struct RenderCmdArgs {
  std::string ckpt, data = default_data_dir(), out, views = "eval", triplet = "650,540,470";
  RenderArgs render;
};

void cmd_render(RenderCmdArgs& a, Context& ctx) {
  a.render.cfg.validate();
  const BandTriplet triplet = parse_triplet(a.triplet);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const fs::path data = require_data(a.data);
  const Dataset ds = load_dataset(data);
  if (ck.params.config.n_channels != ds.bands()) throw UsageError("checkpoint channels differ from dataset bands");
  const auto ids = parse_view_list(a.views, ds);
  for (double nm : {triplet.r_nm, triplet.g_nm, triplet.b_nm}) nearest_band(ds.wavelengths, nm);

  const fs::path out = a.out;
  begin_output(ctx, out);
  RunManifest m("render");
  m.set_config(ctx.effective_config);
  m.add_input(a.ckpt);
  m.add_input(data);
  for (int id : ids) {
    const auto view = render_view(ck.params, ds.camera, ds.poses[static_cast<std::size_t>(id)], ds.wavelengths,
                                  a.render.cfg);
    char stem[32];
    std::snprintf(stem, sizeof stem, "view_%03d", id);
    save_cube(view.cube, out / stem);
    write_png(out / (std::string(stem) + ".png"), composite(view.cube, triplet));
    m.add_output(out / (std::string(stem) + ".hdr"));
    m.add_output(out / (std::string(stem) + ".png"));
  }
  m.write(out / "manifest.json");
  std::cout << "rendered " << ids.size() << " views to " << out << "\n";
}

struct EvalSpectralArgs {
  std::string ckpt, data = default_data_dir(), out, mask_policy = "full-frame", name = "synthetic",
                    triplet = "650,540,470";
  RenderArgs render;
};

void cmd_eval_spectral(EvalSpectralArgs& a, Context& ctx) {
  a.render.cfg.validate();
  EvalOptions eo;
  eo.policy = mask_policy_from_string(a.mask_policy);
  eo.render = a.render.cfg;
  eo.dataset_name = a.name;
  eo.triplet = parse_triplet(a.triplet);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const fs::path data = require_data(a.data);
  const Dataset ds = load_dataset(data);
  if (ck.params.config.n_channels != ds.bands()) throw UsageError("checkpoint channels differ from dataset bands");
  if (eo.policy == MaskPolicy::Foreground && !ds.has_masks()) throw UsageError("dataset has no masks; pass --mask-policy full-frame");
  if (ds.eval_ids.empty()) throw UsageError("dataset has no held-out views");

  const fs::path out = a.out;
  begin_output(ctx, out);
  eo.out_dir = out;
  const auto metrics = evaluate_heldout(ck.params, ds, eo);
  print_metrics("held-out", metrics);
  RunManifest m("eval-spectral");
  m.set_config(ctx.effective_config);
  m.add_input(a.ckpt);
  m.add_input(data);
  m.add_output(out / "metrics.csv");
  m.add_result("sam", metrics.sam.mean);
  m.add_result("rmse", metrics.rmse.mean);
  m.add_result("ssim", metrics.ssim.mean);
  m.add_result("psnr", metrics.psnr.mean);
  m.write(out / "manifest.json");
}

struct EvalSpatialArgs {
  std::string pred, gt, out, eps_grid = "0.001:0.01:0.001";
  bool no_align = false;
  std::size_t max_points = 50000;
  int icp_iters = 50;
  double icp_tol = 1e-8;
};

void cmd_eval_spatial(const EvalSpatialArgs& a, Context& ctx) {
  std::vector<double> grid;
  try {
    grid = parse_eps_grid(a.eps_grid);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const PointCloud pred = read_ply(a.pred);
  const PointCloud gt = read_ply(a.gt);
  if (pred.size() == 0 || gt.size() == 0) throw UsageError("point clouds must be non-empty");
  SweepOptions so;
  so.align = !a.no_align;
  so.icp.max_points = a.max_points;
  so.icp.max_iters = a.icp_iters;
  so.icp.tol = a.icp_tol;
  if (so.icp.max_iters < 1 || !(so.icp.tol >= 0.0)) throw UsageError("bad ICP settings");

  const fs::path out = a.out;
  const PrCurve curve = pr_sweep(pred.points, gt.points, grid, so);
  begin_output(ctx, out);
  write_pr_csv(out / "pr_curve.csv", curve);
  write_pr_plot(out / "pr_curve.png", curve);
  RunManifest m("eval-spatial");
  m.set_config(ctx.effective_config);
  m.add_input(a.pred);
  m.add_input(a.gt);
  m.add_output(out / "pr_curve.csv");
  m.add_output(out / "pr_curve.png");
  m.add_result("best_epsilon_m", curve.best_eps);
  m.add_result("best_fscore", 100.0 * curve.best_fscore);
  if (so.align) m.add_result("icp_rms_m", curve.alignment.rms);
  m.write(out / "manifest.json");
  std::cout << "best F " << 100.0 * curve.best_fscore << " at eps " << curve.best_eps << " m";
  if (so.align) std::cout << " (ICP rms " << curve.alignment.rms << " m)";
  std::cout << "\n";
}

struct ExtractArgs {
  std::string ckpt, out, data = default_data_dir(), probe = "six-axis", format = "spectra", triplet = "650,540,470";
  ExtractConfig cfg;
  bool refine = false;
  int k = 16;
  double std_ratio = 2.0;
};

std::vector<double> dataset_wavelengths(const fs::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw UsageError("cannot read " + (dir / "dataset.json").string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("wavelengths")) throw UsageError("dataset.json lacks wavelengths");
  return j["wavelengths"].get<std::vector<double>>();
}

void cmd_extract(ExtractArgs& a, Context& ctx) {
  a.cfg.probe = probe_policy_from_string(a.probe);
  a.cfg.validate();
  if (a.format != "spectra" && a.format != "colors") throw UsageError("--format must be spectra or colors");
  if (a.refine && (a.k < 1 || !(a.std_ratio >= 0.0))) throw UsageError("bad refinement settings");
  const BandTriplet triplet = parse_triplet(a.triplet);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  std::vector<double> wl;
  if (!a.data.empty()) {
    wl = dataset_wavelengths(a.data);
    if (static_cast<int>(wl.size()) != ck.params.config.n_channels)
      throw UsageError("dataset bands differ from checkpoint channels");
  }
  if (a.format == "colors") {
    if (wl.empty()) throw UsageError("--format colors needs --data for wavelengths");
    for (double nm : {triplet.r_nm, triplet.g_nm, triplet.b_nm}) nearest_band(wl, nm);
  }

  PointCloud pc = extract_pointcloud(ck.params, a.cfg, wl);
  const std::size_t raw_count = pc.size();
  if (a.refine) pc = refine_pointcloud(pc, a.k, a.std_ratio).cloud;
  if (a.format == "colors") color_by_triplet(pc, triplet);
  const fs::path out = a.out;
  begin_output(ctx, out.parent_path());
  write_ply(out, pc, a.format == "colors" ? PlyPayload::Colors : PlyPayload::Spectra);
  RunManifest m("extract");
  m.set_config(ctx.effective_config);
  m.add_input(a.ckpt);
  m.add_output(out);
  m.add_result("points_extracted", static_cast<double>(raw_count));
  m.add_result("points_written", static_cast<double>(pc.size()));
  m.write(manifest_for_file(out));
  std::cout << "extracted " << raw_count << " points, wrote " << pc.size() << " to " << out << "\n";
}

struct CompositeArgs {
  std::string cube, ply, out, triplet = "650,540,470";
};

void cmd_composite(const CompositeArgs& a, Context& ctx) {
  const BandTriplet triplet = parse_triplet(a.triplet);
  if (a.cube.empty() == a.ply.empty()) throw UsageError("pass exactly one of --cube or --ply");
  const fs::path out = a.out;
  RunManifest m("composite");
  m.set_config(ctx.effective_config);
  if (!a.cube.empty()) {
    if (out.extension() != ".png") throw UsageError("--out must be a .png for cube composites");
    const HyperCube cube = load_cube(a.cube);
    const Image8 img = composite(cube, triplet);
    begin_output(ctx, out.parent_path());
    write_png(out, img);
    m.add_input(a.cube);
  } else {
    if (out.extension() != ".ply") throw UsageError("--out must be a .ply for point-cloud composites");
    PointCloud pc = read_ply(a.ply);
    color_by_triplet(pc, triplet);
    begin_output(ctx, out.parent_path());
    write_ply(out, pc, PlyPayload::Colors);
    m.add_input(a.ply);
  }
  m.add_output(out);
  m.write(manifest_for_file(out));
}

}  // namespace

int run(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Hyperspectral radiance-field reconstruction toolkit", "hsnerf"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: available parallelism)");
  app.set_version_flag("--version", HSNERF_VERSION);

  std::function<void(Context&)> action;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Render a synthetic multi-view hyperspectral dataset");
  s->add_option("--views", synth.views)->capture_default_str();
  s->add_option("--bands", synth.bands)->capture_default_str();
  s->add_option("--size", synth.size, "Image width and height in pixels")->capture_default_str();
  s->add_option("--seed", synth.seed)->capture_default_str();
  s->add_option("--noise", synth.noise, "Gaussian noise sigma on reflectance")->capture_default_str();
  s->add_option("--eval-fraction", synth.eval_fraction)->capture_default_str();
  s->add_option("--lambda-min", synth.lambda_min)->capture_default_str();
  s->add_option("--lambda-max", synth.lambda_max)->capture_default_str();
  s->add_option("--radius", synth.radius, "Camera ring radius (m)")->capture_default_str();
  s->add_option("--elevation", synth.elevation, "Camera elevation (rad)")->capture_default_str();
  s->add_option("--out", synth.out)->required();
  s->callback([&] { action = [&](Context& c) { cmd_synth(synth, c); }; });

  CalibArgs calib;
  auto* c = app.add_subcommand("calibrate", "White-reference calibration of a raw cube");
  c->add_option("--raw", calib.raw, "Raw cube header (.hdr)")->required();
  c->add_option("--wr", calib.wr, "White-reference cube header (.hdr)")->required();
  c->add_option("--roi", calib.roi, "Coarse ROI box x0,y0,x1,y1");
  c->add_option("--roi-mask", calib.roi_mask, "Coarse ROI mask PNG");
  c->add_option("--percentile", calib.percentile)->capture_default_str();
  c->add_option("--window", calib.window, "Spectral smoothing window (odd)")->capture_default_str();
  c->add_option("--out", calib.out)->required();
  c->callback([&] { action = [&](Context& ctx) { cmd_calibrate(calib, ctx); }; });

  SweepArgs sweep;
  auto* sw = app.add_subcommand("sweep-wr", "White-reference mask percentile sweep");
  sw->add_option("--wr", sweep.wr)->required();
  sw->add_option("--roi", sweep.roi);
  sw->add_option("--roi-mask", sweep.roi_mask);
  sw->add_option("--percentiles", sweep.percentiles)->capture_default_str();
  sw->add_option("--out", sweep.out)->required();
  sw->callback([&] { action = [&](Context& ctx) { cmd_sweep(sweep, ctx); }; });

  TrainCmdArgs train;
  auto* t = app.add_subcommand("train", "Two-stage training (pre-train, then masked fine-tune)");
  train.train.add(t);
  t->add_option("--out", train.out)->required();
  t->add_flag("--eval", train.eval, "Evaluate held-out views after training");
  t->add_option("--mask-policy", train.mask_policy, "full-frame or foreground")->capture_default_str();
  t->callback([&] { action = [&](Context& ctx) { cmd_train(train, ctx); }; });

  AblateArgs ablate;
  auto* ab = app.add_subcommand("ablate", "Loss-weight ablation over (lambda_ang, lambda_hsi) pairs");
  ablate.train.add(ab);
  ab->add_option("--grid", ablate.grid, "'default' or ang:hsi pairs, comma separated")->capture_default_str();
  ab->add_option("--mask-policy", ablate.mask_policy)->capture_default_str();
  ab->add_option("--out", ablate.out)->required();
  ab->callback([&] { action = [&](Context& ctx) { cmd_ablate(ablate, ctx); }; });

  RenderCmdArgs render;
  auto* r = app.add_subcommand("render", "Render views from a checkpoint");
  r->add_option("--ckpt", render.ckpt)->required();
  r->add_option("--data", render.data);
  r->add_option("--views", render.views, "eval, train, all, or a comma list of ids")->capture_default_str();
  r->add_option("--triplet", render.triplet)->capture_default_str();
  r->add_option("--out", render.out)->required();
  render.render.add(r);
  r->callback([&] { action = [&](Context& ctx) { cmd_render(render, ctx); }; });

  EvalSpectralArgs es;
  auto* e = app.add_subcommand("eval-spectral", "Held-out SAM, RMSE, SSIM and PSNR");
  e->add_option("--ckpt", es.ckpt)->required();
  e->add_option("--data", es.data);
  e->add_option("--mask-policy", es.mask_policy)->capture_default_str();
  e->add_option("--name", es.name, "Dataset label in the CSV")->capture_default_str();
  e->add_option("--triplet", es.triplet)->capture_default_str();
  e->add_option("--out", es.out)->required();
  es.render.add(e);
  e->callback([&] { action = [&](Context& ctx) { cmd_eval_spectral(es, ctx); }; });

  EvalSpatialArgs sp;
  auto* p = app.add_subcommand("eval-spatial", "ICP alignment and precision/recall sweep");
  p->add_option("--pred", sp.pred)->required();
  p->add_option("--gt", sp.gt)->required();
  p->add_option("--eps-grid", sp.eps_grid, "lo:hi:step in meters")->capture_default_str();
  p->add_flag("--no-align", sp.no_align, "Skip ICP");
  p->add_option("--max-points", sp.max_points, "ICP subsample limit (0 = all)")->capture_default_str();
  p->add_option("--icp-iters", sp.icp_iters)->capture_default_str();
  p->add_option("--icp-tol", sp.icp_tol)->capture_default_str();
  p->add_option("--out", sp.out)->required();
  p->callback([&] { action = [&](Context& ctx) { cmd_eval_spatial(sp, ctx); }; });

  ExtractArgs ex;
  auto* x = app.add_subcommand("extract", "Hyperspectral point cloud from a checkpoint");
  x->add_option("--ckpt", ex.ckpt)->required();
  x->add_option("--data", ex.data, "Dataset directory for wavelength labels");
  x->add_option("--resolution", ex.cfg.resolution)->capture_default_str();
  x->add_option("--sigma-min", ex.cfg.sigma_min)->capture_default_str();
  x->add_option("--probe", ex.probe, "six-axis or single")->capture_default_str();
  x->add_flag("--surface-only", ex.cfg.surface_only, "Keep only the outer shell of occupied voxels");
  x->add_flag("--refine", ex.refine, "Statistical outlier removal");
  x->add_option("--k", ex.k)->capture_default_str();
  x->add_option("--std-ratio", ex.std_ratio)->capture_default_str();
  x->add_option("--format", ex.format, "spectra or colors")->capture_default_str();
  x->add_option("--triplet", ex.triplet)->capture_default_str();
  x->add_option("--out", ex.out, "Output .ply")->required();
  x->callback([&] { action = [&](Context& ctx) { cmd_extract(ex, ctx); }; });

  CompositeArgs comp;
  auto* cp = app.add_subcommand("composite", "Band-triplet composite of a cube (PNG) or cloud (PLY)");
  cp->add_option("--cube", comp.cube);
  cp->add_option("--ply", comp.ply);
  cp->add_option("--triplet", comp.triplet)->capture_default_str();
  cp->add_option("--out", comp.out)->required();
  cp->callback([&] { action = [&](Context& ctx) { cmd_composite(comp, ctx); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsageError;
  }
  if (threads > 0) set_thread_count(threads);

  Context ctx;
  for (const auto* sub : app.get_subcommands()) ctx.effective_config = sub->config_to_str(true, false);
  try {
    action(ctx);
    return kOk;
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsageError;
  } catch (const InvalidArgument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return ctx.writing ? kDomainError : kUsageError;
  } catch (const IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return ctx.writing ? kDomainError : kUsageError;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kDomainError;
  }
}

}  // namespace hsnerf::cli
