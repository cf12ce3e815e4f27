// h4vdm command-line tool: parse H.264 bitstreams, validate GOP record
// stores, generate synthetic devices, build pair datasets, and train,
// evaluate, and apply device-matching models.
//
// Exit codes: 0 success, 2 usage or bitstream parse error, 3 model/record
// mismatch, 4 configuration error, 5 data error, 1 anything else.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "h4vdm/checkpoint.hpp"
#include "h4vdm/errors.hpp"
#include "h4vdm/gop_record.hpp"
#include "h4vdm/h264_parser.hpp"
#include "h4vdm/metrics.hpp"
#include "h4vdm/model.hpp"
#include "h4vdm/pairs.hpp"
#include "h4vdm/synth.hpp"
#include "h4vdm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw h4vdm::IoError("cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  if (in.bad()) throw h4vdm::IoError("read failed for " + path.string());
  return bytes;
}

// Echo the effective option values to stderr so every run records the
// configuration it actually used.
void print_config_line(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ostringstream os;
  os << "[config]";
  for (const auto& [k, v] : kv) os << ' ' << k << '=' << v;
  std::cerr << os.str() << '\n';
}

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

// Applies config-file values to options the command line left untouched:
// explicit flags beat the file, the file beats built-in defaults.
class ConfigBinder {
 public:
  template <typename T>
  void bind(const CLI::Option* opt, const std::string& key, T& var) {
    known_.insert(key);
    appliers_.push_back([opt, key, &var](const json& cfg) {
      if (opt->count() > 0 || !cfg.contains(key)) return;
      try {
        var = cfg.at(key).get<T>();
      } catch (const json::exception&) {
        throw h4vdm::ConfigError("config key '" + key + "' has the wrong type");
      }
    });
  }

  void allow(const std::string& key) { known_.insert(key); }

  void apply(const json& cfg) const {
    for (const auto& item : cfg.items()) {
      if (!known_.count(item.key()))
        throw h4vdm::ConfigError("unknown config key '" + item.key() + "'");
    }
    for (const auto& f : appliers_) f(cfg);
  }

 private:
  std::set<std::string> known_;
  std::vector<std::function<void(const json&)>> appliers_;
};

json load_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw h4vdm::ConfigError("cannot read config file " + path.string());
  json cfg;
  try {
    in >> cfg;
  } catch (const json::exception& e) {
    throw h4vdm::ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!cfg.is_object()) throw h4vdm::ConfigError("config file must hold a JSON object");
  return cfg;
}

// Optional "model" block in the config file: partial overrides applied on
// top of the preset.
void apply_model_overrides(h4vdm::ModelConfig& c, const json& m) {
  if (!m.is_object()) throw h4vdm::ConfigError("'model' config block must be an object");
  for (const auto& item : m.items()) {
    const std::string& key = item.key();
    const json& v = item.value();
    try {
      if (key == "preset") c.preset = v.get<std::string>();
      else if (key == "l") c.l = v.get<int>();
      else if (key == "h") c.h = v.get<int>();
      else if (key == "w") c.w = v.get<int>();
      else if (key == "p") c.p = v.get<int>();
      else if (key == "d_vit1") c.d_vit1 = v.get<int>();
      else if (key == "vit1_depth") c.vit1_depth = v.get<int>();
      else if (key == "vit1_heads") c.vit1_heads = v.get<int>();
      else if (key == "d_vit2") c.d_vit2 = v.get<int>();
      else if (key == "vit2_depth") c.vit2_depth = v.get<int>();
      else if (key == "vit2_heads") c.vit2_heads = v.get<int>();
      else if (key == "d_t") c.d_t = v.get<int>();
      else if (key == "d_r") c.d_r = v.get<int>();
      else if (key == "joint_depth") c.joint_depth = v.get<int>();
      else if (key == "joint_heads") c.joint_heads = v.get<int>();
      else if (key == "ft_vocab") c.ft_vocab = v.get<int>();
      else if (key == "mb_vocab") c.mb_vocab = v.get<int>();
      else if (key == "mb_dim") c.mb_dim = v.get<int>();
      else if (key == "per_frame_branch_weights") c.per_frame_branch_weights = v.get<bool>();
      else throw h4vdm::ConfigError("unknown model config field '" + key + "'");
    } catch (const json::exception&) {
      throw h4vdm::ConfigError("model config field '" + key + "' has the wrong type");
    }
  }
}

void check_model_config(const h4vdm::ModelConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw h4vdm::ConfigError(std::string("model config: ") + name + " must be >= 1");
  };
  positive(c.l, "l");
  positive(c.h, "h");
  positive(c.w, "w");
  positive(c.p, "p");
  positive(c.d_vit1, "d_vit1");
  positive(c.vit1_depth, "vit1_depth");
  positive(c.vit1_heads, "vit1_heads");
  positive(c.d_vit2, "d_vit2");
  positive(c.vit2_depth, "vit2_depth");
  positive(c.vit2_heads, "vit2_heads");
  positive(c.d_t, "d_t");
  positive(c.d_r, "d_r");
  positive(c.joint_depth, "joint_depth");
  positive(c.joint_heads, "joint_heads");
  positive(c.ft_vocab, "ft_vocab");
  positive(c.mb_vocab, "mb_vocab");
  positive(c.mb_dim, "mb_dim");
  if (c.h % c.p != 0 || c.w % c.p != 0)
    throw h4vdm::ConfigError("model config: h and w must be multiples of the patch size p");
  if (c.d_vit1 % c.vit1_heads != 0)
    throw h4vdm::ConfigError("model config: d_vit1 must be divisible by vit1_heads");
  if (c.d_vit2 % c.vit2_heads != 0)
    throw h4vdm::ConfigError("model config: d_vit2 must be divisible by vit2_heads");
  if (c.d_t % c.joint_heads != 0)
    throw h4vdm::ConfigError("model config: d_t must be divisible by joint_heads");
  if (c.ft_vocab < 3)
    throw h4vdm::ConfigError("model config: ft_vocab must cover the I/P/B alphabet (>= 3)");
}

h4vdm::ModelConfig resolve_model_config(const std::string& preset, const json& cfgfile) {
  h4vdm::ModelConfig cfg = h4vdm::preset_config(preset);
  if (cfgfile.contains("model")) apply_model_overrides(cfg, cfgfile.at("model"));
  check_model_config(cfg);
  return cfg;
}

// ------------------------------------------------------------------- parse

struct ParseArgs {
  std::string file;
  bool open_gop = false;
};

int run_parse(const ParseArgs& a, bool json_out) {
  std::vector<uint8_t> bytes = read_file_bytes(a.file);
  h4vdm::h264::StreamInfo info = h4vdm::h264::parse_stream(bytes, a.open_gop);
  if (json_out) {
    std::cout << h4vdm::h264::stream_info_to_json(info) << '\n';
    return 0;
  }
  int ni = 0, np = 0, nb = 0;
  for (const auto& f : info.frames) {
    switch (f.frame_type) {
      case h4vdm::h264::FrameType::I: ++ni; break;
      case h4vdm::h264::FrameType::P: ++np; break;
      case h4vdm::h264::FrameType::B: ++nb; break;
    }
  }
  std::cout << "file: " << a.file << '\n'
            << "nal_units: " << info.nals.size() << '\n'
            << "sps: " << info.sps.size() << "  pps: " << info.pps.size() << '\n'
            << "frames: " << info.frames.size() << " (I=" << ni << " P=" << np << " B=" << nb
            << ")\n"
            << "leading_unassigned_frames: " << info.leading_unassigned_frames << '\n'
            << "gops: " << info.gops.size() << '\n';
  for (size_t g = 0; g < info.gops.size(); ++g) {
    const auto& gop = info.gops[g];
    std::cout << "  gop " << g << ": start " << gop.start_frame_index << " length " << gop.length
              << " types ";
    for (auto t : gop.frame_types) std::cout << h4vdm::h264::frame_type_char(t);
    std::cout << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- validate

struct ValidateArgs {
  std::vector<std::string> paths;
  int min_frames = 0, min_height = 0, min_width = 0;
};

int run_validate(const ValidateArgs& a, bool json_out) {
  h4vdm::RecordRequirements req{a.min_frames, a.min_height, a.min_width};
  std::vector<fs::path> dirs;
  for (const auto& p : a.paths) {
    fs::path fp(p);
    if (fs::is_directory(fp) && !fs::exists(fp / "manifest.json")) {
      std::vector<fs::path> found = h4vdm::scan_store(fp);
      if (found.empty()) throw h4vdm::DataUnavailable("no records under " + fp.string());
      dirs.insert(dirs.end(), found.begin(), found.end());
    } else {
      dirs.push_back(fp);
    }
  }
  json out = json::array();
  for (const auto& dir : dirs) {
    h4vdm::GopRecord rec;
    try {
      rec = h4vdm::load_record(dir, req);
    } catch (const std::exception& e) {
      std::cerr << "FAIL " << dir.string() << ": " << e.what() << '\n';
      throw;
    }
    if (json_out) {
      out.push_back({{"dir", dir.string()},
                     {"device", rec.device_id},
                     {"video", rec.video_id},
                     {"gop", rec.gop_index},
                     {"frames", rec.frame_count},
                     {"height", rec.height},
                     {"width", rec.width},
                     {"qp_source", rec.qp_source}});
    } else {
      std::cout << "OK " << dir.string() << "  device=" << rec.device_id
                << " video=" << rec.video_id << " gop=" << rec.gop_index
                << " frames=" << rec.frame_count << " size=" << rec.height << "x" << rec.width
                << " qp=" << rec.qp_source << '\n';
    }
  }
  if (json_out)
    std::cout << out.dump(2) << '\n';
  else
    std::cout << dirs.size() << " record(s) OK\n";
  return 0;
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  int devices = 4, videos = 1, gops = 4, frames = 8, height = 64, width = 64;
};

int run_synth(const SynthArgs& a, uint64_t seed, bool json_out) {
  if (a.devices < 1 || a.videos < 1 || a.gops < 1)
    throw h4vdm::ConfigError("synth: --devices, --videos and --gops must be >= 1");
  if (a.frames < 1 || a.height < 1 || a.width < 1)
    throw h4vdm::ConfigError("synth: --frames, --height and --width must be >= 1");
  std::vector<h4vdm::SyntheticDeviceProfile> profiles = h4vdm::default_profiles(a.devices, seed);
  std::vector<h4vdm::GopRecord> records =
      h4vdm::synth_generate(profiles, a.videos, a.gops, a.frames, a.height, a.width);
  for (const auto& rec : records) {
    fs::path dir = fs::path(a.out) / rec.device_id /
                   (rec.video_id + "_g" + std::to_string(rec.gop_index));
    h4vdm::write_record(dir, rec);
  }
  if (json_out) {
    json j{{"out", a.out}, {"devices", a.devices}, {"records", records.size()}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "wrote " << records.size() << " record(s) for " << a.devices
              << " device(s) under " << a.out << '\n';
  }
  return 0;
}

// ------------------------------------------------------------------- pairs

struct PairsArgs {
  std::string store, out, split, side = "train";
  int n0 = 15, n1 = 120;
  double subsample = 0.0;
};

int run_pairs(const PairsArgs& a, uint64_t seed, bool json_out) {
  if (a.side != "train" && a.side != "test")
    throw h4vdm::ConfigError("--side must be 'train' or 'test'");
  if (a.subsample < 0.0 || a.subsample > 1.0)
    throw h4vdm::ConfigError("--subsample must be in [0, 1]");
  if (a.n0 < 0 || a.n1 < 0) throw h4vdm::ConfigError("--n0 and --n1 must be >= 0");

  h4vdm::RecordStoreProvider provider(a.store, 1, 1, 1);
  std::map<std::string, std::vector<h4vdm::GopRef>> by_device = provider.refs_by_device();
  std::string split_desc;
  if (!a.split.empty()) {
    h4vdm::DeviceSplit sp =
        fs::exists(a.split) ? h4vdm::load_split(a.split) : h4vdm::split_preset(a.split);
    const std::vector<std::string>& keep = a.side == "train" ? sp.s1 : sp.s2;
    std::map<std::string, std::vector<h4vdm::GopRef>> filtered;
    for (const auto& id : keep) {
      auto it = by_device.find(id);
      if (it != by_device.end()) filtered.insert(*it);
    }
    by_device = std::move(filtered);
    split_desc = sp.name.empty() ? a.split : sp.name;
  }
  if (by_device.empty())
    throw h4vdm::DataUnavailable("no devices selected from store " + a.store);

  std::vector<h4vdm::PairSample> pairs = h4vdm::build_pairs(by_device, a.n0, a.n1, seed);
  if (a.subsample > 0.0 && a.subsample < 1.0) pairs = h4vdm::subsample(pairs, a.subsample, seed);

  json header{{"store", a.store}, {"n0", a.n0},     {"n1", a.n1},
              {"seed", seed},     {"split", split_desc}, {"side", a.side},
              {"subsample", a.subsample}};
  h4vdm::write_pair_manifest(a.out, pairs, header);

  size_t label1 = 0;
  for (const auto& p : pairs) label1 += size_t(p.label);
  size_t label0 = pairs.size() - label1;
  if (json_out) {
    json j{{"out", a.out},
           {"pairs", pairs.size()},
           {"label0", label0},
           {"label1", label1},
           {"devices", by_device.size()}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "wrote " << pairs.size() << " pair(s) (" << label0 << " cross-device, " << label1
              << " same-device) from " << by_device.size() << " device(s) to " << a.out << '\n';
  }
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string store, pairs, out;
  double val_fraction = 0.125;
  int batch_size = 72, epochs = 30, warmup = 5, patience = 5;
  double lr = 8e-6, decay = 0.97;
};

int run_train(const TrainArgs& a, const std::string& preset, const json& cfgfile, uint64_t seed,
              bool json_out) {
  if (!(a.val_fraction > 0.0 && a.val_fraction < 1.0))
    throw h4vdm::ConfigError("--val-fraction must be in (0, 1)");
  if (a.batch_size < 1) throw h4vdm::ConfigError("--batch-size must be >= 1");
  if (a.epochs < 1) throw h4vdm::ConfigError("--epochs must be >= 1");
  if (a.warmup < 0 || a.patience < 0)
    throw h4vdm::ConfigError("--warmup and --patience must be >= 0");
  if (a.lr < 0.0 || a.decay <= 0.0)
    throw h4vdm::ConfigError("--lr must be >= 0 and --decay > 0");

  h4vdm::ModelConfig mc = resolve_model_config(preset, cfgfile);
  if (!fs::is_directory(a.store)) throw h4vdm::IoError("store not found: " + a.store);
  h4vdm::RecordStoreProvider provider(a.store, mc.l, mc.h, mc.w);
  h4vdm::PairManifest pm = h4vdm::load_pair_manifest(a.pairs);
  auto [val_pairs, train_pairs] = h4vdm::carve_validation(pm.pairs, a.val_fraction, seed);

  h4vdm::FeatureExtractor<float> model(mc);
  model.init(seed);
  std::cerr << "[model] preset=" << mc.preset << " params=" << model.param_count()
            << " tokens=" << mc.tokens() << '\n';

  h4vdm::TrainConfig tc;
  tc.batch_size = a.batch_size;
  tc.max_epochs = a.epochs;
  tc.warmup_epochs = a.warmup;
  tc.base_lr = a.lr;
  tc.lr_decay = a.decay;
  tc.patience = a.patience;
  tc.seed = seed;

  h4vdm::TrainResult res =
      h4vdm::train_model(model, train_pairs, val_pairs, provider, tc, a.out, &std::cerr);
  if (json_out) {
    json j{{"best_epoch", res.best_epoch},
           {"best_val_auc", res.best_val_auc},
           {"best_checkpoint", res.best_checkpoint.string()},
           {"epochs_run", res.history.size()},
           {"train_pairs", train_pairs.size()},
           {"val_pairs", val_pairs.size()}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "trained " << res.history.size() << " epoch(s) on " << train_pairs.size()
              << " pair(s), validated on " << val_pairs.size() << '\n'
              << "best epoch: " << res.best_epoch << "  val_auc: " << res.best_val_auc << '\n'
              << "checkpoint: " << res.best_checkpoint.string() << '\n';
  }
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string store, pairs, checkpoint, out, name;
  double threshold = 0.0;
  bool thr_set = false;
};

int run_eval(const EvalArgs& a, bool json_out) {
  h4vdm::CheckpointMeta meta;
  h4vdm::FeatureExtractor<float> model = h4vdm::load_checkpoint(a.checkpoint, &meta);
  if (!fs::is_directory(a.store)) throw h4vdm::IoError("store not found: " + a.store);
  h4vdm::RecordStoreProvider provider(a.store, model.cfg.l, model.cfg.h, model.cfg.w);
  h4vdm::PairManifest pm = h4vdm::load_pair_manifest(a.pairs);

  std::optional<double> fixed;
  std::string thr_source = "chosen on scores";
  if (a.thr_set) {
    fixed = a.threshold;
    thr_source = "flag";
  } else if (meta.threshold) {
    fixed = meta.threshold;
    thr_source = "checkpoint";
  }
  std::string name = a.name.empty() ? fs::path(a.pairs).stem().string() : a.name;

  h4vdm::EvalReport report = h4vdm::evaluate(model, pm.pairs, provider, name, fixed);
  h4vdm::emit_report(a.out, report);
  if (json_out) {
    std::cout << h4vdm::report_to_json(report).dump(2) << '\n';
  } else {
    std::cout << "dataset: " << report.dataset_name << '\n'
              << "pairs: " << report.n_pairs << " (cross-device=" << report.n_label0
              << " same-device=" << report.n_label1 << ")\n"
              << "auc: " << report.auc_value << '\n'
              << "threshold: " << report.threshold << " (" << thr_source << ")\n"
              << "accuracy: " << report.accuracy << '\n'
              << "report: " << (fs::path(a.out) / "report.json").string() << '\n';
  }
  return 0;
}

// ----------------------------------------------------------------- compare

struct CompareArgs {
  std::string checkpoint, rec_a, rec_b;
  double threshold = 0.0;
  bool thr_set = false;
};

int run_compare(const CompareArgs& a, bool json_out) {
  h4vdm::CheckpointMeta meta;
  h4vdm::FeatureExtractor<float> model = h4vdm::load_checkpoint(a.checkpoint, &meta);
  const h4vdm::ModelConfig& mc = model.cfg;

  auto check_dims = [&mc](const h4vdm::GopRecord& rec, const std::string& path) {
    if (rec.frame_count < mc.l)
      throw h4vdm::ShapeMismatch("record " + path + " has " + std::to_string(rec.frame_count) +
                                 " frame(s) but the model needs " + std::to_string(mc.l));
    if (rec.height < mc.h || rec.width < mc.w)
      throw h4vdm::ShapeMismatch("record " + path + " frames are " + std::to_string(rec.height) +
                                 "x" + std::to_string(rec.width) + " but the model needs " +
                                 std::to_string(mc.h) + "x" + std::to_string(mc.w));
  };

  h4vdm::GopRecord rec1 = h4vdm::load_record(a.rec_a, h4vdm::RecordRequirements{0, 0, 0});
  h4vdm::GopRecord rec2 = h4vdm::load_record(a.rec_b, h4vdm::RecordRequirements{0, 0, 0});
  check_dims(rec1, a.rec_a);
  check_dims(rec2, a.rec_b);

  h4vdm::ModelInput<float> in1 = h4vdm::assemble_model_input<float>(rec1, mc.l, mc.h, mc.w);
  h4vdm::ModelInput<float> in2 = h4vdm::assemble_model_input<float>(rec2, mc.l, mc.h, mc.w);
  std::vector<float> r1 = model.extract(in1);
  std::vector<float> r2 = model.extract(in2);
  double s = h4vdm::similarity(r1, r2);

  std::optional<double> thr;
  std::string thr_source;
  if (a.thr_set) {
    thr = a.threshold;
    thr_source = "flag";
  } else if (meta.threshold) {
    thr = meta.threshold;
    thr_source = "checkpoint";
  }

  auto rec_json = [](const h4vdm::GopRecord& r) {
    return json{{"device", r.device_id}, {"video", r.video_id}, {"gop", r.gop_index}};
  };
  if (json_out) {
    json j{{"similarity", s},
           {"record_a", rec_json(rec1)},
           {"record_b", rec_json(rec2)},
           {"threshold", thr ? json(*thr) : json(nullptr)},
           {"same_device", thr ? json(s >= *thr) : json(nullptr)}};
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << "record_a: device=" << rec1.device_id << " video=" << rec1.video_id
              << " gop=" << rec1.gop_index << '\n'
              << "record_b: device=" << rec2.device_id << " video=" << rec2.video_id
              << " gop=" << rec2.gop_index << '\n'
              << "similarity: " << s << '\n';
    if (thr) {
      std::cout << "threshold: " << *thr << " (" << thr_source << ")\n"
                << "decision: " << (s >= *thr ? "same_device" : "different_device") << '\n';
    } else {
      std::cout << "decision: unknown (no threshold on the checkpoint; pass --threshold)\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"h4vdm: H.264 video device-matching toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "h4vdm 1.0.0");

  bool json_out = false;
  std::string preset = "B";
  uint64_t seed = 0;
  int threads = 1;
  bool deterministic = false;
  std::string config_path;

  const CLI::Option* opt_json = app.add_flag("--json", json_out, "emit JSON on stdout");
  const CLI::Option* opt_preset =
      app.add_option("--preset", preset, "model preset: S, B, L or tiny")->capture_default_str();
  const CLI::Option* opt_seed =
      app.add_option("--seed", seed, "global RNG seed")->capture_default_str();
  const CLI::Option* opt_threads =
      app.add_option("--threads", threads, "worker threads (must be >= 1; compute is currently single-threaded)")
          ->capture_default_str();
  const CLI::Option* opt_det =
      app.add_flag("--deterministic", deterministic, "force single-threaded deterministic execution");
  app.add_option("--config", config_path, "JSON config file; explicit flags take precedence");

  ConfigBinder binder;
  binder.bind(opt_json, "json", json_out);
  binder.bind(opt_preset, "preset", preset);
  binder.bind(opt_seed, "seed", seed);
  binder.bind(opt_threads, "threads", threads);
  binder.bind(opt_det, "deterministic", deterministic);
  binder.allow("model");

  ParseArgs pa;
  CLI::App* sc_parse =
      app.add_subcommand("parse", "Parse an H.264 Annex-B bitstream and report frames and GOPs");
  sc_parse->fallthrough();
  sc_parse->add_option("file", pa.file, "bitstream file")->required();
  const CLI::Option* opt_open_gop =
      sc_parse->add_flag("--open-gop", pa.open_gop, "start GOPs at any I frame, not only IDR");
  binder.bind(opt_open_gop, "open_gop", pa.open_gop);

  ValidateArgs va;
  CLI::App* sc_validate =
      app.add_subcommand("validate", "Validate GOP record directories or whole stores");
  sc_validate->fallthrough();
  sc_validate->add_option("paths", va.paths, "record directories or store roots")->required();
  binder.bind(sc_validate->add_option("--min-frames", va.min_frames,
                                      "minimum frame count (0 disables)")
                  ->capture_default_str(),
              "min_frames", va.min_frames);
  binder.bind(sc_validate->add_option("--min-height", va.min_height,
                                      "minimum frame height (0 disables)")
                  ->capture_default_str(),
              "min_height", va.min_height);
  binder.bind(sc_validate->add_option("--min-width", va.min_width,
                                      "minimum frame width (0 disables)")
                  ->capture_default_str(),
              "min_width", va.min_width);

  SynthArgs sa;
  CLI::App* sc_synth =
      app.add_subcommand("synth", "Generate a synthetic multi-device GOP record store");
  sc_synth->fallthrough();
  sc_synth->add_option("--out", sa.out, "output store directory")->required();
  binder.bind(sc_synth->add_option("--devices", sa.devices, "device count")->capture_default_str(),
              "devices", sa.devices);
  binder.bind(sc_synth->add_option("--videos", sa.videos, "videos per device")->capture_default_str(),
              "videos", sa.videos);
  binder.bind(sc_synth->add_option("--gops", sa.gops, "GOPs per video")->capture_default_str(),
              "gops", sa.gops);
  binder.bind(sc_synth->add_option("--frames", sa.frames, "frames per GOP")->capture_default_str(),
              "frames", sa.frames);
  binder.bind(sc_synth->add_option("--height", sa.height, "frame height")->capture_default_str(),
              "height", sa.height);
  binder.bind(sc_synth->add_option("--width", sa.width, "frame width")->capture_default_str(),
              "width", sa.width);

  PairsArgs ga;
  CLI::App* sc_pairs =
      app.add_subcommand("pairs", "Build a labelled pair dataset from a record store");
  sc_pairs->fallthrough();
  sc_pairs->add_option("--store", ga.store, "record store root")->required();
  sc_pairs->add_option("--out", ga.out, "output pair manifest (JSON lines)")->required();
  binder.bind(sc_pairs->add_option("--n0", ga.n0, "cross-device pairs per device pair")
                  ->capture_default_str(),
              "n0", ga.n0);
  binder.bind(sc_pairs->add_option("--n1", ga.n1, "same-device pairs per device")
                  ->capture_default_str(),
              "n1", ga.n1);
  binder.bind(sc_pairs->add_option("--split", ga.split,
                                   "device split: preset name (D1..D7) or split file"),
              "split", ga.split);
  binder.bind(sc_pairs->add_option("--side", ga.side, "split side to keep: train or test")
                  ->check(CLI::IsMember({"train", "test"}))
                  ->capture_default_str(),
              "side", ga.side);
  binder.bind(sc_pairs->add_option("--subsample", ga.subsample,
                                   "stratified keep fraction (0 or 1 keeps everything)")
                  ->capture_default_str(),
              "subsample", ga.subsample);

  TrainArgs ta;
  CLI::App* sc_train = app.add_subcommand("train", "Train a device-matching model on a pair set");
  sc_train->fallthrough();
  sc_train->add_option("--store", ta.store, "record store root")->required();
  sc_train->add_option("--pairs", ta.pairs, "training pair manifest")->required();
  sc_train->add_option("--out", ta.out, "output directory for checkpoints and history")
      ->required();
  binder.bind(sc_train->add_option("--val-fraction", ta.val_fraction,
                                   "fraction of pairs carved off for validation")
                  ->capture_default_str(),
              "val_fraction", ta.val_fraction);
  binder.bind(sc_train->add_option("--batch-size", ta.batch_size, "pairs per batch")
                  ->capture_default_str(),
              "batch_size", ta.batch_size);
  binder.bind(sc_train->add_option("--epochs", ta.epochs, "maximum epochs")->capture_default_str(),
              "epochs", ta.epochs);
  binder.bind(sc_train->add_option("--warmup", ta.warmup, "linear warmup epochs")
                  ->capture_default_str(),
              "warmup", ta.warmup);
  binder.bind(sc_train->add_option("--lr", ta.lr, "base learning rate")->capture_default_str(),
              "lr", ta.lr);
  binder.bind(sc_train->add_option("--decay", ta.decay, "per-epoch LR decay after warmup")
                  ->capture_default_str(),
              "decay", ta.decay);
  binder.bind(sc_train->add_option("--patience", ta.patience,
                                   "consecutive non-improving epochs tolerated")
                  ->capture_default_str(),
              "patience", ta.patience);

  EvalArgs ea;
  CLI::App* sc_eval =
      app.add_subcommand("eval", "Evaluate a checkpoint on a pair set and emit a report");
  sc_eval->fallthrough();
  sc_eval->add_option("--store", ea.store, "record store root")->required();
  sc_eval->add_option("--pairs", ea.pairs, "evaluation pair manifest")->required();
  sc_eval->add_option("--checkpoint", ea.checkpoint, "model checkpoint")->required();
  sc_eval->add_option("--out", ea.out, "output directory for the report files")->required();
  const CLI::Option* opt_eval_thr = sc_eval->add_option(
      "--threshold", ea.threshold, "decision threshold (overrides the checkpoint)");
  binder.bind(opt_eval_thr, "threshold", ea.threshold);
  binder.bind(sc_eval->add_option("--name", ea.name, "dataset name recorded in the report"),
              "name", ea.name);

  CompareArgs ca;
  CLI::App* sc_compare =
      app.add_subcommand("compare", "Score two GOP records with a trained checkpoint");
  sc_compare->fallthrough();
  sc_compare->add_option("--checkpoint", ca.checkpoint, "model checkpoint")->required();
  sc_compare->add_option("record_a", ca.rec_a, "first record directory")->required();
  sc_compare->add_option("record_b", ca.rec_b, "second record directory")->required();
  const CLI::Option* opt_cmp_thr = sc_compare->add_option(
      "--threshold", ca.threshold, "decision threshold (overrides the checkpoint)");
  binder.bind(opt_cmp_thr, "threshold", ca.threshold);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    json cfgfile = json::object();
    if (!config_path.empty()) cfgfile = load_config_file(config_path);
    binder.apply(cfgfile);
    if (deterministic) threads = 1;
    if (threads < 1) throw h4vdm::ConfigError("--threads must be >= 1");
    ea.thr_set = opt_eval_thr->count() > 0 || cfgfile.contains("threshold");
    ca.thr_set = opt_cmp_thr->count() > 0 || cfgfile.contains("threshold");

    std::vector<std::pair<std::string, std::string>> kv{
        {"json", json_out ? "1" : "0"},     {"preset", preset},
        {"seed", std::to_string(seed)},     {"threads", std::to_string(threads)},
        {"deterministic", deterministic ? "1" : "0"}};

    if (app.got_subcommand(sc_parse)) {
      kv.insert(kv.begin(), {"cmd", "parse"});
      kv.push_back({"file", pa.file});
      kv.push_back({"open_gop", pa.open_gop ? "1" : "0"});
      print_config_line(kv);
      return run_parse(pa, json_out);
    }
    if (app.got_subcommand(sc_validate)) {
      kv.insert(kv.begin(), {"cmd", "validate"});
      kv.push_back({"min_frames", std::to_string(va.min_frames)});
      kv.push_back({"min_height", std::to_string(va.min_height)});
      kv.push_back({"min_width", std::to_string(va.min_width)});
      print_config_line(kv);
      return run_validate(va, json_out);
    }
    if (app.got_subcommand(sc_synth)) {
      kv.insert(kv.begin(), {"cmd", "synth"});
      kv.push_back({"out", sa.out});
      kv.push_back({"devices", std::to_string(sa.devices)});
      kv.push_back({"videos", std::to_string(sa.videos)});
      kv.push_back({"gops", std::to_string(sa.gops)});
      kv.push_back({"frames", std::to_string(sa.frames)});
      kv.push_back({"height", std::to_string(sa.height)});
      kv.push_back({"width", std::to_string(sa.width)});
      print_config_line(kv);
      return run_synth(sa, seed, json_out);
    }
    if (app.got_subcommand(sc_pairs)) {
      kv.insert(kv.begin(), {"cmd", "pairs"});
      kv.push_back({"store", ga.store});
      kv.push_back({"out", ga.out});
      kv.push_back({"n0", std::to_string(ga.n0)});
      kv.push_back({"n1", std::to_string(ga.n1)});
      kv.push_back({"split", ga.split});
      kv.push_back({"side", ga.side});
      kv.push_back({"subsample", fmt(ga.subsample)});
      print_config_line(kv);
      return run_pairs(ga, seed, json_out);
    }
    if (app.got_subcommand(sc_train)) {
      kv.insert(kv.begin(), {"cmd", "train"});
      kv.push_back({"store", ta.store});
      kv.push_back({"pairs", ta.pairs});
      kv.push_back({"out", ta.out});
      kv.push_back({"val_fraction", fmt(ta.val_fraction)});
      kv.push_back({"batch_size", std::to_string(ta.batch_size)});
      kv.push_back({"epochs", std::to_string(ta.epochs)});
      kv.push_back({"warmup", std::to_string(ta.warmup)});
      kv.push_back({"lr", fmt(ta.lr)});
      kv.push_back({"decay", fmt(ta.decay)});
      kv.push_back({"patience", std::to_string(ta.patience)});
      print_config_line(kv);
      return run_train(ta, preset, cfgfile, seed, json_out);
    }
    if (app.got_subcommand(sc_eval)) {
      kv.insert(kv.begin(), {"cmd", "eval"});
      kv.push_back({"store", ea.store});
      kv.push_back({"pairs", ea.pairs});
      kv.push_back({"checkpoint", ea.checkpoint});
      kv.push_back({"out", ea.out});
      kv.push_back({"threshold", ea.thr_set ? fmt(ea.threshold) : "auto"});
      print_config_line(kv);
      return run_eval(ea, json_out);
    }
    if (app.got_subcommand(sc_compare)) {
      kv.insert(kv.begin(), {"cmd", "compare"});
      kv.push_back({"checkpoint", ca.checkpoint});
      kv.push_back({"record_a", ca.rec_a});
      kv.push_back({"record_b", ca.rec_b});
      kv.push_back({"threshold", ca.thr_set ? fmt(ca.threshold) : "auto"});
      print_config_line(kv);
      return run_compare(ca, json_out);
    }
    return 0;
  } catch (const h4vdm::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const h4vdm::MismatchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const h4vdm::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const h4vdm::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
