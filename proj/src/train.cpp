#include "h4vdm/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "h4vdm/adam.hpp"
#include "h4vdm/rng.hpp"

namespace h4vdm {

namespace {

using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

RecordStoreProvider::RecordStoreProvider(const std::filesystem::path& root, int l, int h, int w)
    : l_(l), h_(h), w_(w) {
  for (const auto& dir : scan_store(root)) {
    std::ifstream in(dir / "manifest.json");
    if (!in) continue;
    json m;
    try {
      in >> m;
    } catch (const json::exception&) {
      continue;  // validation of broken manifests happens on load
    }
    if (!m.contains("device_id") || !m.contains("video_id") || !m.contains("gop_index")) continue;
    GopRef ref{m["device_id"].get<std::string>(), m["video_id"].get<std::string>(),
               m["gop_index"].get<int>()};
    index_[ref_key(ref)] = Entry{ref, dir};
  }
}

const ModelInput<float>& RecordStoreProvider::operator()(const GopRef& ref) const {
  std::string key = ref_key(ref);
  auto hit = cache_.find(key);
  if (hit != cache_.end()) return hit->second;
  auto it = index_.find(key);
  if (it == index_.end()) throw DataUnavailable("no record in store for GOP " + key);
  GopRecord rec = load_record(it->second.dir, RecordRequirements{l_, h_, w_});
  return cache_.emplace(key, assemble_model_input<float>(rec, l_, h_, w_)).first->second;
}

std::map<std::string, std::vector<GopRef>> RecordStoreProvider::refs_by_device() const {
  std::map<std::string, std::vector<GopRef>> by_dev;
  for (const auto& [key, entry] : index_) by_dev[entry.ref.device_id].push_back(entry.ref);
  return by_dev;
}

std::vector<double> score_pairs(FeatureExtractor<float>& model,
                                const std::vector<PairSample>& pairs,
                                const InputProvider& inputs) {
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    std::vector<float> ra = model.extract(inputs(p.a));
    std::vector<float> rb = model.extract(inputs(p.b));
    scores.push_back(similarity<float>(ra, rb));
  }
  return scores;
}

namespace {

json pair_to_json(const PairSample& p) {
  return {{"a", {{"device", p.a.device_id}, {"video", p.a.video_id}, {"gop", p.a.gop_index}}},
          {"b", {{"device", p.b.device_id}, {"video", p.b.video_id}, {"gop", p.b.gop_index}}},
          {"label", p.label}};
}

}  // namespace

TrainResult train_model(FeatureExtractor<float>& model,
                        const std::vector<PairSample>& train_pairs,
                        const std::vector<PairSample>& val_pairs, const InputProvider& inputs,
                        const TrainConfig& cfg, const std::filesystem::path& out_dir,
                        std::ostream* log) {
  if (train_pairs.empty()) throw DataUnavailable("no training pairs");
  if (val_pairs.empty()) throw DataUnavailable("no validation pairs");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::ofstream history(out_dir / "history.jsonl", std::ios::trunc);
  if (!history) throw IoError("cannot write history.jsonl in " + out_dir.string());

  nn::Adam<float> adam(cfg.base_lr);
  adam.attach([&](const nn::ParamVisitor<float>& v) { model.visit_params(v); });

  std::vector<int> val_labels;
  for (const auto& p : val_pairs) val_labels.push_back(p.label);

  TrainResult result;
  int non_improving = 0;
  std::vector<PairSample> order = train_pairs;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = nn::lr_at(epoch, cfg.base_lr, cfg.warmup_epochs, cfg.lr_decay);
    adam.lr = lr;

    Rng rng(mix_seed(cfg.seed, uint64_t(epoch)));
    rng.shuffle(order.begin(), order.end());

    double loss_sum = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
      double inv_n = 1.0 / double(end - start);
      model.zero_grad();
      double batch_loss = 0;
      for (size_t i = start; i < end; ++i) {
        const PairSample& p = order[i];
        std::vector<float> ra = model.extract(inputs(p.a));
        std::vector<float> rb = model.extract(inputs(p.b));
        std::vector<float> dra, drb;
        batch_loss += pair_loss_grad<float>(ra, rb, p.label, dra, drb);
        for (auto& x : dra) x *= float(inv_n);
        for (auto& x : drb) x *= float(inv_n);
        model.backward(inputs(p.a), dra);
        model.backward(inputs(p.b), drb);
      }
      batch_loss *= inv_n;
      if (!std::isfinite(batch_loss)) {
        json dump = json::array();
        for (size_t i = start; i < end; ++i) dump.push_back(pair_to_json(order[i]));
        std::ofstream d(out_dir / "nonfinite_batch.json");
        d << dump.dump(2) << "\n";
        if (log)
          *log << "non-finite loss in epoch " << epoch << "; batch dumped to "
               << (out_dir / "nonfinite_batch.json").string() << "\n";
        throw NonFiniteLoss("training loss became non-finite in epoch " +
                            std::to_string(epoch));
      }
      adam.step();
      loss_sum += batch_loss * double(end - start);
    }
    double train_loss = loss_sum / double(order.size());

    std::vector<double> val_scores = score_pairs(model, val_pairs, inputs);
    double val_auc = auc(val_scores, val_labels);

    EpochStats stats{epoch, lr, train_loss, val_auc, seconds_since(t0)};
    result.history.push_back(stats);
    history << json{{"epoch", stats.epoch},
                    {"lr", stats.lr},
                    {"train_loss", stats.train_loss},
                    {"val_auc", stats.val_auc},
                    {"elapsed_s", stats.elapsed_s}}
                   .dump()
            << "\n";
    history.flush();
    if (log)
      *log << "[epoch " << epoch << "] lr=" << lr << " train_loss=" << train_loss
           << " val_auc=" << val_auc << " elapsed=" << stats.elapsed_s << "s\n";

    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.val_auc = val_auc;
    save_checkpoint(out_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), model, meta);

    if (result.best_epoch < 0 || val_auc > result.best_val_auc) {
      result.best_epoch = epoch;
      result.best_val_auc = val_auc;
      save_checkpoint(out_dir / "best.ckpt", model, meta);
      non_improving = 0;
    } else if (++non_improving > cfg.patience) {
      if (log) *log << "early stop: " << non_improving << " non-improving epochs\n";
      break;
    }
  }

  // Restore the best weights and stamp the validation threshold into best.ckpt
  // so downstream comparison gets a decision boundary for free.
  result.best_checkpoint = out_dir / "best.ckpt";
  {
    FeatureExtractor<float> best = load_checkpoint(result.best_checkpoint);
    std::vector<nn::Param<float>*> src, dst;
    best.visit_params([&](nn::Param<float>& p) { src.push_back(&p); });
    model.visit_params([&](nn::Param<float>& p) { dst.push_back(&p); });
    for (size_t i = 0; i < src.size(); ++i) dst[i]->w.v = src[i]->w.v;
  }
  std::vector<double> val_scores = score_pairs(model, val_pairs, inputs);
  CheckpointMeta meta;
  meta.seed = cfg.seed;
  meta.val_auc = result.best_val_auc;
  meta.threshold = choose_threshold(val_scores, val_labels);
  save_checkpoint(result.best_checkpoint, model, meta);
  return result;
}

EvalReport evaluate(FeatureExtractor<float>& model, const std::vector<PairSample>& pairs,
                    const InputProvider& inputs, const std::string& dataset_name,
                    std::optional<double> fixed_threshold) {
  std::vector<double> scores = score_pairs(model, pairs, inputs);
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.label);

  EvalReport r;
  r.dataset_name = dataset_name;
  r.n_pairs = pairs.size();
  for (int l : labels) (l ? r.n_label1 : r.n_label0)++;
  r.auc_value = auc(scores, labels);
  r.threshold = fixed_threshold ? *fixed_threshold : choose_threshold(scores, labels);

  std::vector<int> preds;
  preds.reserve(scores.size());
  size_t correct = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    preds.push_back(scores[i] >= r.threshold ? 1 : 0);
    if (preds.back() == labels[i]) ++correct;
  }
  r.accuracy = double(correct) / double(scores.size());
  r.prf_report = prf(labels, preds);
  r.matrix = accuracy_matrix(pairs, preds);
  return r;
}

}  // namespace h4vdm
