#pragma once

// Training loops for the supervised, unsupervised and fused regimens, and
// held-out evaluation.

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "panodepth/geometry.hpp"
#include "panodepth/image.hpp"
#include "panodepth/io.hpp"
#include "panodepth/metrics.hpp"
#include "panodepth/padenet.hpp"
#include "panodepth/scenegen.hpp"

namespace pano {

enum class Regimen { supervised, unsupervised, fused };

std::string to_string(Regimen r);
Regimen regimen_from_string(const std::string& s);

struct TrainSample {
  std::string id;
  Tensorf top, bottom;  // (1, 3, H, W)
  Tensorf gt_disparity;  // (1, 1, H, W); empty without ground truth
  Image gt_depth;
};

// Stereo pairs with optional ground truth. Every ground-truth read sets an
// access flag so callers can assert that a run never looked at it.
class Dataset {
 public:
  Dataset() = default;
  Dataset(RigConfig rig, std::vector<TrainSample> samples);

  // Reads manifest.txt from `dir`. Ground-truth files are loaded when
  // present; a dataset without them reports has_gt() == false.
  static Dataset load(const std::filesystem::path& dir);
  static Dataset from_stereo(const std::vector<StereoSample>& samples);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const RigConfig& rig() const { return rig_; }
  const std::string& id(std::size_t i) const { return samples_.at(i).id; }
  const Tensorf& top(std::size_t i) const { return samples_.at(i).top; }
  const Tensorf& bottom(std::size_t i) const { return samples_.at(i).bottom; }

  bool has_gt() const;
  // Throw DataError when the dataset carries no ground truth.
  const Tensorf& gt_disparity(std::size_t i) const;
  const Image& gt_depth(std::size_t i) const;

  bool gt_accessed() const { return gt_accessed_; }
  void reset_gt_access() const { gt_accessed_ = false; }

  Dataset subset(std::size_t begin, std::size_t end) const;
  // Copy with the ground truth removed.
  Dataset without_gt() const;

 private:
  RigConfig rig_;
  std::vector<TrainSample> samples_;
  mutable bool gt_accessed_ = false;
};

struct EpochRecord {
  int epoch = 0;  // 1-based within its phase
  TrainingPhase phase = TrainingPhase::supervised;
  double loss = 0.0;  // mean training loss of the epoch
  std::optional<double> val_abs_rel;
  std::string checkpoint;  // empty when checkpoints are not written
};

struct TrainRun {
  RunConfig config;
  Regimen regimen = Regimen::supervised;
  std::vector<EpochRecord> history;
  // Selected model: best validation Abs Rel, or the last epoch without a
  // validation set.
  Checkpoint best;
  int best_index = -1;  // into history
  bool steady = false;  // plateau reached in the (first) unsupervised phase
  std::optional<Checkpoint> phase1_final;  // fused regimen only

  // One line per epoch: `epoch phase loss val_abs_rel checkpoint_file`.
  std::string log() const;
};

struct TrainOptions {
  const Dataset* validation = nullptr;
  std::filesystem::path out_dir;  // empty: keep checkpoints in memory only
  std::ostream* progress = nullptr;
};

// Builds the network described by `config` for a rig's raster size.
PadeNetConfig network_config(const RunConfig& config, const RigConfig& rig);

// Each loop leaves `model` holding the selected (best) parameters.
TrainRun train_supervised(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                          const TrainOptions& options = {});
TrainRun train_unsupervised(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                            const TrainOptions& options = {});
TrainRun train_fused(PadeNet<float>& model, const Dataset& data, const RunConfig& config,
                     const TrainOptions& options = {});
TrainRun train(Regimen regimen, PadeNet<float>& model, const Dataset& data,
               const RunConfig& config, const TrainOptions& options = {});

// Full-resolution disparity (radians) for one sample.
Image predict_disparity(const PadeNet<float>& model, const Tensorf& rgb);
// Depth via the rig's angle matrix; disparities near 0 become invalid.
Image predict_depth(const PadeNet<float>& model, const Tensorf& rgb, const RigConfig& rig);

// Metrics over the pooled valid pixels of every sample.
MetricsReport evaluate(const PadeNet<float>& model, const Dataset& data, double cap = 20.0);

// (1, C, H, W) tensor from a panorama and back.
Tensorf to_tensor(const Panorama& pano);
Image plane_of(const Tensorf& t, int n = 0, int c = 0);

}  // namespace pano
