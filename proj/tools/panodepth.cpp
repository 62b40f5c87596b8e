// panodepth: command-line entry point for data generation, training,
// inference, SGM, fusion, evaluation and gradient checks.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
// Results go to stdout, diagnostics to stderr.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "panodepth/errors.hpp"
#include "panodepth/fusion.hpp"
#include "panodepth/geometry.hpp"
#include "panodepth/gradsuite.hpp"
#include "panodepth/io.hpp"
#include "panodepth/metrics.hpp"
#include "panodepth/padenet.hpp"
#include "panodepth/scenegen.hpp"
#include "panodepth/sgm.hpp"
#include "panodepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace pano;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenDataArgs {
  std::uint64_t seed = 0;
  int count = 1;
  int width = 128, height = 64;
  double baseline = 0.26;
  int supersample = 3;
  std::string out;
};

int gen_data(const GenDataArgs& a) {
  if (a.count < 1) throw UsageError("--count must be at least 1");
  RigConfig rig;
  rig.width = a.width;
  rig.height = a.height;
  rig.baseline = a.baseline;
  try {
    rig.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  SceneParams params;
  params.baseline = a.baseline;
  RenderOptions render;
  render.supersample = a.supersample;
  make_dataset(a.seed, a.count, rig, params, a.out, render);
  std::cout << (fs::path(a.out) / "manifest.txt").string() << "\n";
  return kOk;
}

struct TrainArgs {
  std::string regimen, data, config, out, val;
};

int train_cmd(const TrainArgs& a) {
  Regimen regimen;
  try {
    regimen = regimen_from_string(a.regimen);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const RunConfig config = a.config.empty() ? RunConfig{} : parse_config(a.config);
  const Dataset data = Dataset::load(a.data);
  if (regimen != Regimen::unsupervised && !data.has_gt())
    throw DataError("train: regimen '" + a.regimen + "' needs ground-truth disparity in '" +
                    a.data + "'");
  std::optional<Dataset> val;
  if (!a.val.empty()) {
    val = Dataset::load(a.val);
    if (!val->has_gt()) throw DataError("train: validation set has no ground truth");
  }
  fs::create_directories(a.out);
  PadeNet<float> model = PadeNet<float>::build(network_config(config, data.rig()), config.seed);
  TrainOptions options;
  options.validation = val ? &*val : nullptr;
  options.out_dir = a.out;
  options.progress = &std::cerr;
  const TrainRun run = train(regimen, model, data, config, options);
  const fs::path best = fs::path(a.out) / "best.ckpt";
  save_checkpoint(run.best, best);
  std::cout << run.log();
  std::cout << "best " << best.string() << "\n";
  return kOk;
}

struct InferArgs {
  std::string checkpoint, rgb, out;
  bool vis = false;
  double baseline = -1.0;
};

int infer_cmd(const InferArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const PadeNet<float> model = PadeNet<float>::from_checkpoint(ckpt);
  const Panorama rgb = read_ppm(a.rgb);
  const auto& cfg = model.config();
  if (rgb.width() != cfg.input_width || rgb.height() != cfg.input_height)
    throw DataError("infer: image is " + std::to_string(rgb.width()) + "x" +
                    std::to_string(rgb.height()) + " but the checkpoint expects " +
                    std::to_string(cfg.input_width) + "x" + std::to_string(cfg.input_height));
  RigConfig rig;
  rig.width = rgb.width();
  rig.height = rgb.height();
  if (a.baseline > 0) {
    rig.baseline = a.baseline;
  } else if (const std::string* b = ckpt.find_meta("baseline")) {
    rig.baseline = std::stod(*b);
  }
  const Image disparity = predict_disparity(model, to_tensor(rgb));
  const Image depth = disparity_map_to_depth(disparity, angle_matrix(rig), rig);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  write_pfm(Panorama::from_image(PanoramaKind::disparity, disparity), out / "disparity.pfm");
  const Panorama depth_pano = Panorama::from_image(PanoramaKind::depth, depth);
  write_pfm(depth_pano, out / "depth.pfm");
  if (a.vis) write_depth_pgm(depth_pano, out / "depth.pgm", 20.0);
  std::printf("disparity %s\ndepth %s\n", (out / "disparity.pfm").c_str(),
              (out / "depth.pfm").c_str());
  if (a.vis) std::printf("vis %s\n", (out / "depth.pgm").c_str());
  std::printf("disparity_min %.9g\ndisparity_max %.9g\n", disparity.minCoeff(),
              disparity.maxCoeff());
  return kOk;
}

struct SgmArgs {
  std::string top, bottom, out, cost = "census";
  double baseline = 0.26;
  SgmParams params;
};

int sgm_cmd(SgmArgs a) {
  const Panorama top = read_ppm(a.top), bottom = read_ppm(a.bottom);
  if (!top.same_shape(bottom))
    throw DataError("sgm: top and bottom panoramas differ in size");
  if (a.cost == "census") a.params.cost = CostKind::census;
  else if (a.cost == "sad") a.params.cost = CostKind::sad;
  else throw UsageError("--cost must be census or sad");
  RigConfig rig;
  rig.width = top.width();
  rig.height = top.height();
  rig.baseline = a.baseline;
  try {
    rig.validate();
    a.params.validate(rig);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const SgmResult result = sgm_depth(top, bottom, rig, a.params);
  fs::create_directories(a.out);
  const fs::path out(a.out);
  write_pfm(result.disparity, out / "disparity.pfm");
  write_pfm(result.depth, out / "depth.pfm");
  const long valid = (result.disparity.plane() > 0).count();
  std::printf("disparity %s\ndepth %s\nvalid_pixels %ld\n", (out / "disparity.pfm").c_str(),
              (out / "depth.pfm").c_str(), valid);
  return kOk;
}

struct FuseArgs {
  std::string network, sgm, mode = "anchor", out;
  double cap = 20.0;
};

int fuse_cmd(const FuseArgs& a) {
  FusionMode mode;
  try {
    mode = fusion_mode_from_string(a.mode);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const Panorama net = read_pfm(a.network, PanoramaKind::depth);
  const Panorama sgm = read_pfm(a.sgm, PanoramaKind::depth);
  const auto [fused, report] = fuse(net, sgm, a.cap, mode);
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_pfm(fused, out);
  const std::string text = report.to_text();
  std::ofstream(fs::path(out).replace_extension(".txt")) << text;
  std::cout << text;
  return kOk;
}

struct EvalArgs {
  std::string pred, gt;
  double cap = 20.0;
};

int eval_cmd(const EvalArgs& a) {
  const Panorama pred = read_pfm(a.pred, PanoramaKind::depth);
  const Panorama gt = read_pfm(a.gt, PanoramaKind::depth);
  const MetricsReport report = compute_metrics(pred, gt, a.cap);
  std::cout << report.table();
  return kOk;
}

struct GradArgs {
  std::string op;
  bool all = false;
  bool inject_fault = false;
  bool double_precision = false;
  std::uint64_t seed = 1234;
  double tolerance = 1e-3;
};

int gradcheck_cmd(const GradArgs& a) {
  if (a.op.empty() && !a.all) throw UsageError("gradcheck: pass --op NAME or --all");
  std::vector<std::string> ops;
  if (a.all) {
    ops = gradcheck_op_names();
  } else {
    const auto& names = gradcheck_op_names();
    if (std::find(names.begin(), names.end(), a.op) == names.end())
      throw UsageError("gradcheck: unknown op '" + a.op + "'");
    ops.push_back(a.op);
  }
  GradSuiteOptions options;
  options.inject_fault = a.inject_fault;
  options.double_precision = a.double_precision;
  options.seed = a.seed;
  options.tolerance = a.tolerance;
  bool ok = true;
  for (const auto& op : ops) {
    const OpCheckResult r = run_gradcheck(op, options);
    std::printf("%-22s max_rel_err %.3e  %s\n", op.c_str(), r.report.max_relative_error,
                r.passed ? "PASS" : "FAIL");
    std::fflush(stdout);
    ok &= r.passed;
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panoramic depth from a vertical equirectangular stereo rig"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic stereo dataset");
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--count", gen.count, "Number of samples");
  gen_cmd->add_option("--width", gen.width, "Panorama width");
  gen_cmd->add_option("--height", gen.height, "Panorama height");
  gen_cmd->add_option("--baseline", gen.baseline, "Vertical baseline in meters");
  gen_cmd->add_option("--supersample", gen.supersample, "Color supersampling per axis");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train the network");
  train_sub->add_option("--regimen", tr.regimen, "supervised | unsupervised | fused")->required();
  train_sub->add_option("--data", tr.data, "Dataset directory")->required();
  train_sub->add_option("--config", tr.config, "Run config file");
  train_sub->add_option("--val", tr.val, "Validation dataset directory");
  train_sub->add_option("--out", tr.out, "Output directory")->required();

  InferArgs inf;
  auto* infer_sub = app.add_subcommand("infer", "Predict disparity and depth");
  infer_sub->add_option("--checkpoint", inf.checkpoint, "Checkpoint file")->required();
  infer_sub->add_option("--rgb", inf.rgb, "Top panorama (PPM)")->required();
  infer_sub->add_option("--out", inf.out, "Output directory")->required();
  infer_sub->add_flag("--vis", inf.vis, "Also write a tone-mapped depth PGM");
  infer_sub->add_option("--baseline", inf.baseline, "Override the rig baseline");

  SgmArgs sg;
  auto* sgm_sub = app.add_subcommand("sgm", "Semi-global matching");
  sgm_sub->add_option("--top", sg.top, "Top panorama (PPM)")->required();
  sgm_sub->add_option("--bottom", sg.bottom, "Bottom panorama (PPM)")->required();
  sgm_sub->add_option("--baseline", sg.baseline, "Vertical baseline in meters");
  sgm_sub->add_option("--out", sg.out, "Output directory")->required();
  sgm_sub->add_option("--cost", sg.cost, "census | sad");
  sgm_sub->add_option("--p1", sg.params.p1, "Small-jump penalty");
  sgm_sub->add_option("--p2", sg.params.p2, "Large-jump penalty");
  sgm_sub->add_option("--paths", sg.params.num_paths, "Aggregation paths (4 or 8)");
  sgm_sub->add_option("--num-disp", sg.params.num_disp, "Disparity levels");
  sgm_sub->add_option("--max-disparity", sg.params.max_disparity, "Largest disparity (radians)");
  sgm_sub->add_option("--uniqueness", sg.params.uniqueness, "Uniqueness ratio");
  sgm_sub->add_option("--median", sg.params.median_window, "Median filter window");

  FuseArgs fu;
  auto* fuse_sub = app.add_subcommand("fuse", "Anchor network depth to SGM depth");
  fuse_sub->add_option("--network", fu.network, "Network depth (PFM)")->required();
  fuse_sub->add_option("--sgm", fu.sgm, "SGM depth (PFM)")->required();
  fuse_sub->add_option("--mode", fu.mode, "anchor | ratio");
  fuse_sub->add_option("--cap", fu.cap, "Depth cap in meters");
  fuse_sub->add_option("--out", fu.out, "Fused depth (PFM)")->required();

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Depth metrics");
  eval_sub->add_option("--pred", ev.pred, "Predicted depth (PFM)")->required();
  eval_sub->add_option("--gt", ev.gt, "Ground-truth depth (PFM)")->required();
  eval_sub->add_option("--cap", ev.cap, "Depth cap in meters");

  GradArgs gc;
  auto* grad_sub = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad_sub->add_option("--op", gc.op, "Op name");
  grad_sub->add_flag("--all", gc.all, "Check every op");
  grad_sub->add_flag("--inject-fault", gc.inject_fault, "Negate analytic gradients");
  grad_sub->add_flag("--double", gc.double_precision, "Run in double precision");
  grad_sub->add_option("--seed", gc.seed, "Problem seed");
  grad_sub->add_option("--tolerance", gc.tolerance, "Max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen_cmd) return gen_data(gen);
    if (*train_sub) return train_cmd(tr);
    if (*infer_sub) return infer_cmd(inf);
    if (*sgm_sub) return sgm_cmd(sg);
    if (*fuse_sub) return fuse_cmd(fu);
    if (*eval_sub) return eval_cmd(ev);
    if (*grad_sub) return gradcheck_cmd(gc);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const DomainError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    // Parse, data, I/O and generation failures.
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
