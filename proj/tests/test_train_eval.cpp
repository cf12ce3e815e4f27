#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "h4vdm/adam.hpp"
#include "h4vdm/synth.hpp"
#include "h4vdm/train.hpp"
#include "record_fixtures.hpp"

using namespace h4vdm;
using testutil::TempDir;
using nlohmann::json;

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

TEST_CASE("auc ranks") {
  std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  std::vector<int> y{0, 0, 1, 1};
  CHECK(auc(s, y) == 0.75);

  SUBCASE("separable and anti-separable") {
    std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
    std::vector<int> l{0, 0, 1, 1};
    CHECK(auc(sep, l) == 1.0);
    std::vector<int> flip{1, 1, 0, 0};
    CHECK(auc(sep, flip) == 0.0);
  }
  SUBCASE("ties count half") {
    std::vector<double> eq{0.5, 0.5};
    std::vector<int> l{0, 1};
    CHECK(auc(eq, l) == 0.5);
    std::vector<double> alleq{0.3, 0.3, 0.3, 0.3};
    std::vector<int> l2{0, 1, 0, 1};
    CHECK(auc(alleq, l2) == 0.5);
  }
  SUBCASE("invariant under strictly increasing transforms") {
    std::vector<double> s2 = s;
    for (auto& x : s2) x = std::exp(3 * x) - 7;
    CHECK(auc(s2, y) == 0.75);
  }
  SUBCASE("errors") {
    std::vector<double> one{0.5};
    std::vector<int> y1{1};
    CHECK_THROWS_AS(auc(one, y1), SingleClass);
    std::vector<double> two{0.5, 0.6};
    std::vector<int> y00{0, 0};
    CHECK_THROWS_AS(auc(two, y00), SingleClass);
    std::vector<int> bad{0, 2};
    CHECK_THROWS_AS(auc(two, bad), DimensionMismatch);
    std::vector<int> shorter{0};
    CHECK_THROWS_AS(auc(two, shorter), DimensionMismatch);
  }
}

TEST_CASE("threshold choice") {
  std::vector<double> s{0.2, 0.4, 0.6, 0.8};
  std::vector<int> y{0, 1, 0, 1};
  // 0.3 and 0.7 both reach TPR+TNR = 1.5; the smallest wins
  CHECK(choose_threshold(s, y) == 0.5 * (0.2 + 0.4));

  SUBCASE("separable data gets the gap midpoint") {
    std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
    std::vector<int> l{0, 0, 1, 1};
    CHECK(choose_threshold(sep, l) == 0.5);
  }
  SUBCASE("single distinct score returns that score") {
    std::vector<double> eq{0.4, 0.4, 0.4};
    std::vector<int> l{0, 1, 0};
    CHECK(choose_threshold(eq, l) == 0.4);
  }
  SUBCASE("invariant under sample duplication") {
    std::vector<double> s2 = s;
    std::vector<int> y2 = y;
    s2.insert(s2.end(), s.begin(), s.end());
    y2.insert(y2.end(), y.begin(), y.end());
    CHECK(choose_threshold(s2, y2) == 0.5 * (0.2 + 0.4));
  }
  SUBCASE("errors") {
    std::vector<double> two{0.5, 0.6};
    std::vector<int> y11{1, 1};
    CHECK_THROWS_AS(choose_threshold(two, y11), SingleClass);
  }
}

TEST_CASE("precision recall f1") {
  SUBCASE("perfect predictions") {
    std::vector<int> y{0, 1, 0, 1}, p{0, 1, 0, 1};
    PrfReport r = prf(y, p);
    CHECK(r.class0.precision == 1.0);
    CHECK(r.class0.recall == 1.0);
    CHECK(r.class0.f1 == 1.0);
    CHECK(r.class1.f1 == 1.0);
    CHECK(r.macro.f1 == 1.0);
    CHECK(r.class0.support == 2u);
    CHECK(r.class1.support == 2u);
    CHECK(r.macro.support == 4u);
  }
  SUBCASE("all predicted positive, half true") {
    std::vector<int> y{0, 0, 1, 1}, p{1, 1, 1, 1};
    PrfReport r = prf(y, p);
    CHECK(r.class1.precision == 0.5);
    CHECK(r.class1.recall == 1.0);
    CHECK(r.class1.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    // class 0 never predicted: all zero by the zero-denominator convention
    CHECK(r.class0.precision == 0.0);
    CHECK(r.class0.recall == 0.0);
    CHECK(r.class0.f1 == 0.0);
    CHECK(r.macro.precision == 0.25);
    CHECK(r.macro.recall == 0.5);
    CHECK(r.macro.f1 == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("class-0-as-positive view") {
    std::vector<int> y{0, 0, 0, 1}, p{0, 1, 0, 1};
    PrfReport r = prf(y, p);
    CHECK(r.class0.precision == 1.0);  // both 0-predictions correct
    CHECK(r.class0.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("length mismatch") {
    std::vector<int> y{0, 1}, p{0};
    CHECK_THROWS_AS(prf(y, p), DimensionMismatch);
  }
}

TEST_CASE("accuracy matrix") {
  std::vector<PairSample> pairs{
      {{"a", "v", 0}, {"a", "v", 1}, 1},  // diagonal a
      {{"a", "v", 0}, {"a", "v", 2}, 1},
      {{"b", "v", 0}, {"a", "v", 1}, 0},  // off-diagonal, reversed order on purpose
      {{"a", "v", 0}, {"b", "v", 1}, 0},
      {{"b", "v", 0}, {"b", "v", 1}, 1},
  };
  std::vector<int> preds{1, 0, 0, 1, 1};

  AccuracyMatrix m = accuracy_matrix(pairs, preds);
  REQUIRE(m.size() == 3u);
  CHECK(m.at({"a", "a"}).total == 2u);
  CHECK(m.at({"a", "a"}).correct == 1u);
  CHECK(m.at({"a", "a"}).accuracy() == 0.5);
  // both orientations land in the same unordered cell
  CHECK(m.at({"a", "b"}).total == 2u);
  CHECK(m.at({"a", "b"}).correct == 1u);
  CHECK(m.at({"b", "b"}).total == 1u);
  CHECK(m.at({"b", "b"}).correct == 1u);
  CHECK(m.count({"b", "a"}) == 0u);  // keys are normalized
  CHECK_THROWS_AS(accuracy_matrix(pairs, std::vector<int>{1}), DimensionMismatch);
}

TEST_CASE("report serialization and emission") {
  EvalReport r;
  r.dataset_name = "demo";
  r.n_pairs = 5;
  r.n_label0 = 2;
  r.n_label1 = 3;
  r.auc_value = 0.8437923456789012;
  r.threshold = 0.3141592653589793;
  r.accuracy = 0.6;
  std::vector<int> y{0, 0, 1, 1, 1}, p{0, 1, 1, 1, 0};
  r.prf_report = prf(y, p);
  r.matrix[{"cam1", "cam1"}] = {3, 4};
  r.matrix[{"cam1", "cam2"}] = {1, 3};
  r.matrix[{"cam2", "cam2"}] = {2, 2};

  SUBCASE("json roundtrip is exact") {
    EvalReport back = report_from_json(report_to_json(r));
    CHECK(back.dataset_name == r.dataset_name);
    CHECK(back.n_pairs == r.n_pairs);
    CHECK(back.auc_value == r.auc_value);  // bitwise: shortest-roundtrip doubles
    CHECK(back.threshold == r.threshold);
    CHECK(back.accuracy == r.accuracy);
    CHECK(back.prf_report.class1.f1 == r.prf_report.class1.f1);
    CHECK(back.prf_report.macro.support == r.prf_report.macro.support);
    REQUIRE(back.matrix.size() == 3u);
    CHECK(back.matrix.at({"cam1", "cam2"}).correct == 1u);
    CHECK(back.matrix.at({"cam1", "cam2"}).total == 3u);
  }
  SUBCASE("emitted files") {
    TempDir tmp("report");
    emit_report(tmp.path, r);
    for (const char* f : {"report.json", "matrix.csv", "matrix_heatmap.dat", "summary.txt"})
      CHECK(std::filesystem::exists(tmp.path / f));

    std::ifstream jf(tmp.path / "report.json");
    json parsed = json::parse(jf);
    EvalReport back = report_from_json(parsed);
    CHECK(back.auc_value == r.auc_value);

    std::ifstream cf(tmp.path / "matrix.csv");
    std::string header, row1;
    std::getline(cf, header);
    std::getline(cf, row1);
    CHECK(header == "device,cam1,cam2");
    CHECK(row1 == "cam1,0.7500,0.3333");

    std::ifstream sf(tmp.path / "summary.txt");
    std::string summary((std::istreambuf_iterator<char>(sf)), std::istreambuf_iterator<char>());
    CHECK(summary.find("Pre.") != std::string::npos);
    CHECK(summary.find("AUC") != std::string::npos);
    CHECK(summary.find("All") != std::string::npos);
  }
  SUBCASE("from_json rejects other documents") {
    CHECK_THROWS_AS(report_from_json(json{{"kind", "other"}}), FormatError);
    json half = report_to_json(r);
    half.erase("prf");
    CHECK_THROWS_AS(report_from_json(half), FormatError);
  }
}

// ---------------------------------------------------------------------------
// training fixture: a small synthetic store shared across the cases below
// ---------------------------------------------------------------------------

namespace {

struct TrainFixture {
  TempDir tmp{"trainstore"};
  ModelConfig cfg = preset_config("tiny");
  std::unique_ptr<RecordStoreProvider> provider;
  std::vector<PairSample> train_pairs, val_pairs;

  TrainFixture() {
    auto profiles = default_profiles(6, 2026);
    auto records = synth_generate(profiles, 1, 4, 8, 64, 64);
    for (const auto& r : records)
      write_record(tmp.path / r.device_id / (r.video_id + "_" + std::to_string(r.gop_index)), r);
    provider = std::make_unique<RecordStoreProvider>(tmp.path, cfg.l, cfg.h, cfg.w);
    auto pairs = build_pairs(provider->refs_by_device(), 2, 3, 11);
    auto [val, rest] = carve_validation(pairs, 1.0 / 8.0, 12);
    val_pairs = val;
    train_pairs = rest;
  }
};

TrainFixture& fixture() {
  static TrainFixture f;
  return f;
}

// The expensive end-to-end training run, executed once and inspected by
// several cases below.
struct TrainedFixture {
  TrainConfig tc;
  TempDir out{"trainout"};
  FeatureExtractor<float> model;
  TrainResult res;

  explicit TrainedFixture(TrainFixture& f) : model(f.cfg) {
    tc.batch_size = 16;
    tc.max_epochs = 8;
    tc.warmup_epochs = 2;
    tc.base_lr = 3e-4;
    tc.patience = 8;
    tc.seed = 5;
    model.init(31);
    res = train_model(model, f.train_pairs, f.val_pairs, *f.provider, tc, out.path);
  }
};

TrainedFixture& trained() {
  static TrainedFixture t(fixture());
  return t;
}

}  // namespace

TEST_CASE("record store provider") {
  TrainFixture& f = fixture();
  CHECK(f.provider->indexed() == 24u);  // 6 devices x 1 video x 4 gops

  auto by_dev = f.provider->refs_by_device();
  CHECK(by_dev.size() == 6u);
  for (const auto& [dev, refs] : by_dev) CHECK(refs.size() == 4u);

  const GopRef& ref = by_dev.begin()->second.front();
  const ModelInput<float>& in = (*f.provider)(ref);
  CHECK(in.l == f.cfg.l);
  CHECK(in.h == f.cfg.h);
  CHECK(in.i_frame.size() == size_t(f.cfg.h) * f.cfg.w * 3);
  // cached: the second lookup returns the same object
  CHECK(&(*f.provider)(ref) == &in);

  CHECK_THROWS_AS((*f.provider)({"ghost", "v0", 0}), DataUnavailable);

  // fixture pair arithmetic: 6 devices, n0=2, n1=3 -> 60 + 18, eighth carved
  CHECK(f.train_pairs.size() + f.val_pairs.size() == 78u);
  CHECK(f.val_pairs.size() == 10u);  // 60/8 -> 8, 18/8 -> 2
}

TEST_CASE("training learns to separate synthetic devices") {
  TrainFixture& f = fixture();
  TrainedFixture& t = trained();
  const TrainConfig& tc = t.tc;
  FeatureExtractor<float>& model = t.model;
  const TrainResult& res = t.res;
  const std::filesystem::path& out_path = t.out.path;

  REQUIRE(res.history.size() > 0u);
  CHECK(res.best_epoch >= 0);
  double best_seen = 0;
  for (const auto& e : res.history) best_seen = std::max(best_seen, e.val_auc);
  CHECK(res.best_val_auc == best_seen);
  CHECK(best_seen > 0.5);  // better than chance on held-out pairs

  SUBCASE("history file matches the schedule and the in-memory history") {
    std::ifstream hf(out_path / "history.jsonl");
    REQUIRE(bool(hf));
    std::string line;
    size_t n = 0;
    while (std::getline(hf, line)) {
      json j = json::parse(line);
      REQUIRE(n < res.history.size());
      CHECK(j["epoch"] == res.history[n].epoch);
      CHECK(j["lr"].get<double>() ==
            nn::lr_at(int(n), tc.base_lr, tc.warmup_epochs, tc.lr_decay));
      CHECK(j["train_loss"].get<double>() == res.history[n].train_loss);
      CHECK(j["val_auc"].get<double>() == res.history[n].val_auc);
      CHECK(j["elapsed_s"].get<double>() >= 0.0);
      ++n;
    }
    CHECK(n == res.history.size());
  }

  SUBCASE("checkpoints exist and best carries threshold metadata") {
    for (const auto& e : res.history)
      CHECK(std::filesystem::exists(out_path / ("epoch_" + std::to_string(e.epoch) + ".ckpt")));
    REQUIRE(std::filesystem::exists(res.best_checkpoint));

    CheckpointMeta meta;
    FeatureExtractor<float> best = load_checkpoint(res.best_checkpoint, &meta);
    REQUIRE(meta.threshold.has_value());
    REQUIRE(meta.val_auc.has_value());
    CHECK(*meta.val_auc == res.best_val_auc);
    REQUIRE(meta.seed.has_value());
    CHECK(*meta.seed == tc.seed);

    // the returned model carries the best weights: identical val scores
    auto s_model = score_pairs(model, f.val_pairs, *f.provider);
    auto s_best = score_pairs(best, f.val_pairs, *f.provider);
    CHECK(s_model == s_best);
  }

  SUBCASE("evaluation report on the validation split") {
    EvalReport r = evaluate(model, f.val_pairs, *f.provider, "val");
    CHECK(r.n_pairs == f.val_pairs.size());
    CHECK(r.n_label0 + r.n_label1 == r.n_pairs);
    CHECK(r.auc_value >= 0.0);
    CHECK(r.auc_value <= 1.0);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    size_t total = 0;
    for (const auto& [k, c] : r.matrix) total += c.total;
    CHECK(total == r.n_pairs);

    EvalReport fixed = evaluate(model, f.val_pairs, *f.provider, "val", 0.25);
    CHECK(fixed.threshold == 0.25);

    TempDir rep("evalrep");
    emit_report(rep.path, r);
    std::ifstream jf(rep.path / "report.json");
    EvalReport back = report_from_json(json::parse(jf));
    CHECK(back.auc_value == r.auc_value);
    CHECK(back.threshold == r.threshold);
  }
}

TEST_CASE("training is reproducible bit-for-bit") {
  TrainFixture& f = fixture();
  std::vector<PairSample> small_train(f.train_pairs.begin(), f.train_pairs.begin() + 8);
  std::vector<PairSample> small_val;  // need both classes
  for (const auto& p : f.val_pairs)
    if (small_val.empty() || small_val.back().label != p.label) small_val.push_back(p);
  REQUIRE(small_val.size() >= 2u);

  TrainConfig tc;
  tc.batch_size = 4;
  tc.max_epochs = 2;
  tc.base_lr = 1e-4;
  tc.seed = 9;

  auto run = [&](const std::filesystem::path& dir) {
    FeatureExtractor<float> model(f.cfg);
    model.init(17);
    return train_model(model, small_train, small_val, *f.provider, tc, dir);
  };
  TempDir d1("repro1"), d2("repro2");
  TrainResult r1 = run(d1.path);
  TrainResult r2 = run(d2.path);

  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.best_val_auc == r2.best_val_auc);

  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  CHECK(bytes(d1.path / "best.ckpt") == bytes(d2.path / "best.ckpt"));
  CHECK(bytes(d1.path / "epoch_0.ckpt") == bytes(d2.path / "epoch_0.ckpt"));
  CHECK(bytes(d1.path / "epoch_1.ckpt") == bytes(d2.path / "epoch_1.ckpt"));

  // history differs only in wall-clock fields
  auto scrub = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string line, all;
    while (std::getline(in, line)) {
      json j = json::parse(line);
      j["elapsed_s"] = 0;
      all += j.dump() + "\n";
    }
    return all;
  };
  CHECK(scrub(d1.path / "history.jsonl") == scrub(d2.path / "history.jsonl"));
}

TEST_CASE("patience semantics with a frozen learning rate") {
  TrainFixture& f = fixture();
  std::vector<PairSample> small_train(f.train_pairs.begin(), f.train_pairs.begin() + 6);
  std::vector<PairSample> small_val;
  for (const auto& p : f.val_pairs)
    if (small_val.empty() || small_val.back().label != p.label) small_val.push_back(p);

  TrainConfig tc;
  tc.batch_size = 6;
  tc.max_epochs = 10;
  tc.base_lr = 0.0;  // weights never move -> every epoch after the first is non-improving
  tc.seed = 1;

  SUBCASE("patience zero stops at the first non-improving epoch") {
    tc.patience = 0;
    FeatureExtractor<float> model(f.cfg);
    model.init(3);
    TempDir out("pat0");
    TrainResult r = train_model(model, small_train, small_val, *f.provider, tc, out.path);
    CHECK(r.history.size() == 2u);
    CHECK(r.best_epoch == 0);
  }
  SUBCASE("patience two tolerates two non-improving epochs") {
    tc.patience = 2;
    FeatureExtractor<float> model(f.cfg);
    model.init(3);
    TempDir out("pat2");
    TrainResult r = train_model(model, small_train, small_val, *f.provider, tc, out.path);
    CHECK(r.history.size() == 4u);
    CHECK(r.best_epoch == 0);
  }
}

TEST_CASE("training error paths") {
  TrainFixture& f = fixture();

  SUBCASE("missing GOP data") {
    std::vector<PairSample> pairs{{{"ghost", "v0", 0}, {"ghost", "v0", 1}, 1}};
    FeatureExtractor<float> model(f.cfg);
    model.init(3);
    TempDir out("missgop");
    TrainConfig tc;
    tc.max_epochs = 1;
    CHECK_THROWS_AS(
        train_model(model, pairs, f.val_pairs, *f.provider, tc, out.path),
        DataUnavailable);
  }
  SUBCASE("empty pair lists") {
    FeatureExtractor<float> model(f.cfg);
    TempDir out("empty");
    TrainConfig tc;
    CHECK_THROWS_AS(train_model(model, {}, f.val_pairs, *f.provider, tc, out.path),
                    DataUnavailable);
    CHECK_THROWS_AS(train_model(model, f.train_pairs, {}, *f.provider, tc, out.path),
                    DataUnavailable);
  }
  SUBCASE("non-finite loss dumps the batch and throws") {
    FeatureExtractor<float> model(f.cfg);
    model.init(3);
    bool poisoned = false;
    model.visit_params([&](nn::Param<float>& p) {
      if (!poisoned) {
        p.w.v[0] = std::numeric_limits<float>::quiet_NaN();
        poisoned = true;
      }
    });
    std::vector<PairSample> two(f.train_pairs.begin(), f.train_pairs.begin() + 2);
    TempDir out("nanloss");
    TrainConfig tc;
    tc.max_epochs = 1;
    std::ostringstream log;
    CHECK_THROWS_AS(
        train_model(model, two, f.val_pairs, *f.provider, tc, out.path, &log),
        NonFiniteLoss);
    CHECK(std::filesystem::exists(out.path / "nonfinite_batch.json"));
    std::ifstream df(out.path / "nonfinite_batch.json");
    json dump = json::parse(df);
    CHECK(dump.is_array());
    CHECK(dump.size() == 2u);
    CHECK(log.str().find("non-finite") != std::string::npos);
  }
  SUBCASE("single-class validation set") {
    std::vector<PairSample> one_class;
    for (const auto& p : f.val_pairs)
      if (p.label == 1) one_class.push_back(p);
    REQUIRE(one_class.size() >= 1u);
    FeatureExtractor<float> model(f.cfg);
    model.init(3);
    std::vector<PairSample> small_train(f.train_pairs.begin(), f.train_pairs.begin() + 2);
    TempDir out("oneclass");
    TrainConfig tc;
    tc.max_epochs = 1;
    CHECK_THROWS_AS(
        train_model(model, small_train, one_class, *f.provider, tc, out.path),
        SingleClass);
  }
}
