#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>

#include "h4vdm/checkpoint.hpp"
#include "h4vdm/gop_record.hpp"
#include "h4vdm/metrics.hpp"
#include "h4vdm/model.hpp"
#include "h4vdm/pairs.hpp"

namespace h4vdm {

struct TrainConfig {
  int batch_size = 72;
  int max_epochs = 30;
  int warmup_epochs = 5;
  double base_lr = 8e-6;
  double lr_decay = 0.97;
  int patience = 5;  // consecutive non-improving epochs tolerated; 0 stops at the first
  uint64_t seed = 0;
};

// Maps a GOP reference to an assembled model input. Throws DataUnavailable
// when the GOP cannot be served.
using InputProvider = std::function<const ModelInput<float>&(const GopRef&)>;

// Provider backed by a record store directory: indexes every record under
// root by (device, video, gop) at construction, loads and assembles lazily,
// caches assembled inputs.
class RecordStoreProvider {
 public:
  RecordStoreProvider(const std::filesystem::path& root, int l, int h, int w);

  const ModelInput<float>& operator()(const GopRef& ref) const;

  size_t indexed() const { return index_.size(); }

  // Every indexed GOP reference, grouped by device (for pair generation).
  std::map<std::string, std::vector<GopRef>> refs_by_device() const;

 private:
  struct Entry {
    GopRef ref;
    std::filesystem::path dir;
  };
  int l_, h_, w_;
  std::map<std::string, Entry> index_;  // keyed by ref_key
  mutable std::map<std::string, ModelInput<float>> cache_;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_auc = 0;
  double elapsed_s = 0;
};

struct TrainResult {
  int best_epoch = -1;
  double best_val_auc = 0;
  std::filesystem::path best_checkpoint;
  std::vector<EpochStats> history;
};

// Runs the training loop: per-epoch seeded shuffles, the warmup/decay
// schedule, batched Adam updates, per-epoch validation AUC, epoch_<n>.ckpt +
// best.ckpt checkpoints and a history.jsonl log under out_dir. On return the
// model holds the best epoch's weights and best.ckpt carries the validation
// threshold. Throws DataUnavailable, NonFiniteLoss (after dumping the
// offending batch), SingleClass (degenerate validation set), IoError.
TrainResult train_model(FeatureExtractor<float>& model,
                        const std::vector<PairSample>& train_pairs,
                        const std::vector<PairSample>& val_pairs, const InputProvider& inputs,
                        const TrainConfig& cfg, const std::filesystem::path& out_dir,
                        std::ostream* log = nullptr);

// Similarity score per pair, in order.
std::vector<double> score_pairs(FeatureExtractor<float>& model,
                                const std::vector<PairSample>& pairs,
                                const InputProvider& inputs);

// Scores the pairs and assembles the full metrics report. The threshold is
// chosen on these scores unless fixed_threshold is given.
EvalReport evaluate(FeatureExtractor<float>& model, const std::vector<PairSample>& pairs,
                    const InputProvider& inputs, const std::string& dataset_name = "",
                    std::optional<double> fixed_threshold = {});

}  // namespace h4vdm
