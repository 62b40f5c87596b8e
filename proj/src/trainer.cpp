#include "panodepth/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "panodepth/adam.hpp"
#include "panodepth/errors.hpp"
#include "panodepth/losses.hpp"
#include "panodepth/random.hpp"

namespace pano {

std::string to_string(Regimen r) {
  switch (r) {
    case Regimen::supervised: return "supervised";
    case Regimen::unsupervised: return "unsupervised";
    case Regimen::fused: return "fused";
  }
  return "?";
}

Regimen regimen_from_string(const std::string& s) {
  if (s == "supervised") return Regimen::supervised;
  if (s == "unsupervised") return Regimen::unsupervised;
  if (s == "fused") return Regimen::fused;
  throw std::invalid_argument("unknown regimen '" + s + "'");
}

Tensorf to_tensor(const Panorama& pano) {
  Tensorf t({1, pano.channels(), pano.height(), pano.width()});
  for (int c = 0; c < pano.channels(); ++c)
    std::copy(pano.plane(c).data(), pano.plane(c).data() + pano.plane(c).size(), t.plane(0, c));
  return t;
}

Image plane_of(const Tensorf& t, int n, int c) {
  Image img(t.h(), t.w());
  std::copy(t.plane(n, c), t.plane(n, c) + t.plane_size(), img.data());
  return img;
}

Dataset::Dataset(RigConfig rig, std::vector<TrainSample> samples)
    : rig_(rig), samples_(std::move(samples)) {
  for (const auto& s : samples_) {
    if (s.top.h() != rig_.height || s.top.w() != rig_.width || !s.top.same_shape(s.bottom) ||
        s.top.c() != 3)
      throw DataError("dataset: sample '" + s.id + "' does not match the rig raster");
  }
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  const auto entries = read_manifest(dir);
  if (entries.empty()) throw DataError("dataset: manifest in '" + dir.string() + "' is empty");
  std::vector<TrainSample> samples;
  const RigConfig rig = entries.front().rig;
  bool any_gt = false, all_gt = true;
  for (const auto& e : entries) {
    if (e.rig.width != rig.width || e.rig.height != rig.height || e.rig.baseline != rig.baseline ||
        e.rig.fov_w != rig.fov_w || e.rig.fov_h != rig.fov_h)
      throw DataError("dataset: sample '" + e.id + "' uses a different rig");
    TrainSample s;
    s.id = e.id;
    s.top = to_tensor(read_ppm(dir / e.top));
    s.bottom = to_tensor(read_ppm(dir / e.bottom));
    const bool has = !e.disparity.empty() && !e.depth.empty() &&
                     std::filesystem::exists(dir / e.disparity) &&
                     std::filesystem::exists(dir / e.depth);
    if (has) {
      s.gt_disparity = to_tensor(read_pfm(dir / e.disparity, PanoramaKind::disparity));
      s.gt_depth = read_pfm(dir / e.depth, PanoramaKind::depth).plane();
    }
    any_gt |= has;
    all_gt &= has;
    samples.push_back(std::move(s));
  }
  if (any_gt && !all_gt) throw DataError("dataset: ground truth present for only some samples");
  return Dataset(rig, std::move(samples));
}

Dataset Dataset::from_stereo(const std::vector<StereoSample>& stereo) {
  if (stereo.empty()) throw DataError("dataset: no samples");
  std::vector<TrainSample> samples;
  for (std::size_t i = 0; i < stereo.size(); ++i) {
    TrainSample s;
    char id[16];
    std::snprintf(id, sizeof id, "%04zu", i);
    s.id = id;
    s.top = to_tensor(stereo[i].top_rgb);
    s.bottom = to_tensor(stereo[i].bottom_rgb);
    s.gt_disparity = to_tensor(stereo[i].gt_disparity);
    s.gt_depth = stereo[i].top_depth.plane();
    samples.push_back(std::move(s));
  }
  return Dataset(stereo.front().rig, std::move(samples));
}

bool Dataset::has_gt() const {
  return !samples_.empty() && samples_.front().gt_disparity.size() > 0;
}

const Tensorf& Dataset::gt_disparity(std::size_t i) const {
  if (!has_gt()) throw DataError("dataset: no ground truth available");
  gt_accessed_ = true;
  return samples_.at(i).gt_disparity;
}

const Image& Dataset::gt_depth(std::size_t i) const {
  if (!has_gt()) throw DataError("dataset: no ground truth available");
  gt_accessed_ = true;
  return samples_.at(i).gt_depth;
}

Dataset Dataset::subset(std::size_t begin, std::size_t end) const {
  if (begin > end || end > samples_.size()) throw std::out_of_range("dataset: bad subset range");
  return Dataset(rig_, {samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                        samples_.begin() + static_cast<std::ptrdiff_t>(end)});
}

Dataset Dataset::without_gt() const {
  Dataset d = *this;
  for (auto& s : d.samples_) {
    s.gt_disparity = Tensorf();
    s.gt_depth = Image();
  }
  d.gt_accessed_ = false;
  return d;
}

std::string TrainRun::log() const {
  std::string out;
  char buf[64];
  for (const auto& r : history) {
    out += std::to_string(r.epoch) + " " + to_string(r.phase) + " ";
    std::snprintf(buf, sizeof buf, "%.9g ", r.loss);
    out += buf;
    if (r.val_abs_rel) {
      std::snprintf(buf, sizeof buf, "%.9g ", *r.val_abs_rel);
      out += buf;
    } else {
      out += "- ";
    }
    // File name only, so logs of identical runs in different directories match.
    out += (r.checkpoint.empty() ? "-" : std::filesystem::path(r.checkpoint).filename().string()) + "\n";
  }
  return out;
}

PadeNetConfig network_config(const RunConfig& config, const RigConfig& rig) {
  PadeNetConfig c;
  c.input_height = rig.height;
  c.input_width = rig.width;
  c.encoder_channels = config.encoder_channels;
  c.su_channels = config.su_channels;
  c.d_max = config.d_max;
  return c;
}

Image predict_disparity(const PadeNet<float>& model, const Tensorf& rgb) {
  return plane_of(model.forward(rgb)[3]);
}

Image predict_depth(const PadeNet<float>& model, const Tensorf& rgb, const RigConfig& rig) {
  return disparity_map_to_depth(predict_disparity(model, rgb), angle_matrix(rig), rig);
}

MetricsReport evaluate(const PadeNet<float>& model, const Dataset& data, double cap) {
  if (data.empty()) throw DataError("evaluate: empty dataset");
  const int h = data.rig().height, w = data.rig().width;
  const AngleMatrix angles = angle_matrix(data.rig());
  Image pred(h * static_cast<int>(data.size()), w), gt(pred.rows(), w);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Image disparity = predict_disparity(model, data.top(i));
    pred.middleRows(static_cast<Eigen::Index>(i) * h, h) =
        disparity_map_to_depth(disparity, angles, data.rig());
    gt.middleRows(static_cast<Eigen::Index>(i) * h, h) = data.gt_depth(i);
  }
  return compute_metrics(pred, gt, cap);
}

namespace {

Tensorf stack(const std::vector<const Tensorf*>& items) {
  const auto& f = *items.front();
  Tensorf out({static_cast<int>(items.size()), f.c(), f.h(), f.w()});
  const Eigen::Index block = f.size();
  for (std::size_t i = 0; i < items.size(); ++i)
    out.data().segment(static_cast<Eigen::Index>(i) * block, block) = items[i]->data();
  return out;
}

enum class Objective { supervised, unsupervised };

struct PhaseSpec {
  TrainingPhase tag;
  Objective objective;
  int epochs;
  bool stop_when_steady;
  std::uint64_t stream;  // shuffle stream id
};

// Relative improvement below tolerance for `patience` consecutive epochs.
bool plateaued(const std::vector<double>& losses, double tolerance, int patience) {
  if (static_cast<int>(losses.size()) <= patience) return false;
  for (int k = 0; k < patience; ++k) {
    const double prev = losses[losses.size() - 2 - k], cur = losses[losses.size() - 1 - k];
    const double rel = prev > 0 ? (prev - cur) / prev : 0.0;
    if (rel >= tolerance) return false;
  }
  return true;
}

struct PhaseResult {
  bool steady = false;
  std::vector<Checkpoint> checkpoints;  // one per epoch
};

PhaseResult run_phase(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                      const TrainOptions& options, const PhaseSpec& spec, TrainRun& run) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (spec.objective == Objective::supervised && !data.has_gt())
    throw DataError("train: supervised training needs ground-truth disparity");
  Rng rng(mix_seed(config.seed * 0x9e3779b97f4a7c15ull + spec.stream));
  Adam<float> adam;
  PhaseResult result;
  std::vector<double> epoch_losses;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= spec.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, int(i) - 1))]);
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const Tensorf*> tops;
      for (std::size_t k = start; k < end; ++k) tops.push_back(&data.top(order[k]));
      const Tensorf top = stack(tops);
      PadeNet<float>::Cache cache;
      const auto preds = model.forward(top, &cache);
      PyramidLoss<float> loss;
      if (spec.objective == Objective::supervised) {
        std::vector<const Tensorf*> gts;
        for (std::size_t k = start; k < end; ++k) gts.push_back(&data.gt_disparity(order[k]));
        loss = multiscale_supervised(preds, stack(gts));
      } else {
        std::vector<const Tensorf*> bottoms;
        for (std::size_t k = start; k < end; ++k) bottoms.push_back(&data.bottom(order[k]));
        loss = unsupervised_loss(preds, top, stack(bottoms), data.rig(), config.lambda_smooth);
      }
      if (!std::isfinite(loss.breakdown.total)) throw NumericError("train: loss is not finite");
      model.zero_grad();
      model.backward(cache, loss.grads);
      adam.step(model.parameters(), config.learning_rate);
      loss_sum += loss.breakdown.total;
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = spec.tag;
    rec.loss = loss_sum / batches;
    if (options.validation) rec.val_abs_rel = evaluate(model, *options.validation, config.depth_cap).abs_rel;
    Checkpoint ckpt = model.to_checkpoint(spec.tag);
    ckpt.meta.emplace_back("epoch", std::to_string(epoch));
    ckpt.meta.emplace_back("regimen", to_string(run.regimen));
    char num[40];
    std::snprintf(num, sizeof num, "%.17g", data.rig().baseline);
    ckpt.meta.emplace_back("baseline", num);
    if (!options.out_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_epoch%02d.ckpt", to_string(spec.tag).c_str(), epoch);
      const auto path = options.out_dir / name;
      save_checkpoint(ckpt, path);
      rec.checkpoint = path.string();
    }
    result.checkpoints.push_back(std::move(ckpt));
    run.history.push_back(rec);
    epoch_losses.push_back(rec.loss);
    if (options.progress) {
      *options.progress << to_string(run.regimen) << ": " << to_string(spec.tag) << " epoch "
                        << epoch << " loss " << rec.loss;
      if (rec.val_abs_rel) *options.progress << " val_abs_rel " << *rec.val_abs_rel;
      *options.progress << "\n";
    }
    if (plateaued(epoch_losses, config.plateau_tolerance, config.plateau_patience)) {
      result.steady = true;
      if (spec.stop_when_steady) break;
    }
  }
  return result;
}

// Picks the checkpoint with the lowest validation Abs Rel among history
// entries [first, end) (ties: earliest), or the last one without validation.
void select_best(PadeNet<float>& model, TrainRun& run, std::size_t first,
                 const std::vector<Checkpoint>& checkpoints) {
  std::size_t best = checkpoints.size() - 1;
  if (run.history[first].val_abs_rel) {
    best = 0;
    for (std::size_t k = 1; k < checkpoints.size(); ++k)
      if (*run.history[first + k].val_abs_rel < *run.history[first + best].val_abs_rel) best = k;
  }
  run.best = checkpoints[best];
  run.best_index = static_cast<int>(first + best);
  model.load_parameters(run.best);
}

void prepare_out_dir(const TrainOptions& options) {
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);
}

void write_log(const TrainOptions& options, const TrainRun& run) {
  if (options.out_dir.empty()) return;
  const std::string text = run.log();
  write_bytes({text.begin(), text.end()}, options.out_dir / "train.log");
}

TrainRun single_phase(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                      const TrainOptions& options, Regimen regimen) {
  prepare_out_dir(options);
  TrainRun run;
  run.config = config;
  run.regimen = regimen;
  const bool sup = regimen == Regimen::supervised;
  const PhaseSpec spec{sup ? TrainingPhase::supervised : TrainingPhase::unsupervised,
                       sup ? Objective::supervised : Objective::unsupervised, config.epochs,
                       false, sup ? 1u : 2u};
  const PhaseResult r = run_phase(model, data, config, options, spec, run);
  run.steady = !sup && r.steady;
  select_best(model, run, 0, r.checkpoints);
  write_log(options, run);
  return run;
}

}  // namespace

TrainRun train_supervised(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                          const TrainOptions& options) {
  return single_phase(model, data, config, options, Regimen::supervised);
}

TrainRun train_unsupervised(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                            const TrainOptions& options) {
  return single_phase(model, data, config, options, Regimen::unsupervised);
}

TrainRun train_fused(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                     const TrainOptions& options) {
  prepare_out_dir(options);
  if (!data.has_gt()) throw DataError("train: fused training needs ground-truth disparity");
  TrainRun run;
  run.config = config;
  run.regimen = Regimen::fused;
  // Phase 1 never touches ground truth.
  const Dataset pairs = data.without_gt();
  const PhaseSpec unsup{TrainingPhase::unsupervised, Objective::unsupervised, config.epochs, true,
                        2u};
  const PhaseResult p1 = run_phase(model, pairs, config, options, unsup, run);
  run.steady = p1.steady;
  run.phase1_final = p1.checkpoints.back();
  const std::size_t first = run.history.size();
  const PhaseSpec sup{TrainingPhase::fused, Objective::supervised, config.epochs, false, 3u};
  const PhaseResult p2 = run_phase(model, data, config, options, sup, run);
  select_best(model, run, first, p2.checkpoints);
  write_log(options, run);
  return run;
}

TrainRun train(Regimen regimen, PadeNet<float>& model, const Dataset& data,
               const RunConfig& config, const TrainOptions& options) {
  switch (regimen) {
    case Regimen::supervised: return train_supervised(model, data, config, options);
    case Regimen::unsupervised: return train_unsupervised(model, data, config, options);
    case Regimen::fused: return train_fused(model, data, config, options);
  }
  throw std::invalid_argument("train: unknown regimen");
}

}  // namespace pano
