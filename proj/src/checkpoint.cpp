#include "h4vdm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "h4vdm/crc32.hpp"

namespace h4vdm {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointKind = "h4vdm_checkpoint";

json scaling_block() {
  return {{"pixel", "x/127.5-1"}, {"diff", "(fk-f0)/255"}, {"qp", "q/25.5-1"}};
}

struct CrcWriter {
  std::ofstream out;
  uint32_t crc = 0;

  explicit CrcWriter(const std::filesystem::path& path)
      : out(path, std::ios::binary | std::ios::trunc) {
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  }
  void write(const void* data, size_t len) {
    out.write(static_cast<const char*>(data), std::streamsize(len));
    crc = crc32(static_cast<const uint8_t*>(data), len, crc);
  }
  void write_u32(uint32_t v) {
    uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
    write(b, 4);
  }
};

uint32_t read_u32(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 | uint32_t(p[3]) << 24;
}

json require(const json& j, const char* key, const char* where) {
  auto it = j.find(key);
  if (it == j.end())
    throw ConfigError(std::string("missing field '") + key + "' in " + where);
  return *it;
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  return {{"preset", cfg.preset},
          {"l", cfg.l},
          {"h", cfg.h},
          {"w", cfg.w},
          {"p", cfg.p},
          {"d_vit1", cfg.d_vit1},
          {"vit1_depth", cfg.vit1_depth},
          {"vit1_heads", cfg.vit1_heads},
          {"d_vit2", cfg.d_vit2},
          {"vit2_depth", cfg.vit2_depth},
          {"vit2_heads", cfg.vit2_heads},
          {"d_t", cfg.d_t},
          {"d_r", cfg.d_r},
          {"joint_depth", cfg.joint_depth},
          {"joint_heads", cfg.joint_heads},
          {"ft_vocab", cfg.ft_vocab},
          {"mb_vocab", cfg.mb_vocab},
          {"mb_dim", cfg.mb_dim},
          {"per_frame_branch_weights", cfg.per_frame_branch_weights}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig cfg;
  try {
    cfg.preset = require(j, "preset", "model config").get<std::string>();
    cfg.l = require(j, "l", "model config").get<int>();
    cfg.h = require(j, "h", "model config").get<int>();
    cfg.w = require(j, "w", "model config").get<int>();
    cfg.p = require(j, "p", "model config").get<int>();
    cfg.d_vit1 = require(j, "d_vit1", "model config").get<int>();
    cfg.vit1_depth = require(j, "vit1_depth", "model config").get<int>();
    cfg.vit1_heads = require(j, "vit1_heads", "model config").get<int>();
    cfg.d_vit2 = require(j, "d_vit2", "model config").get<int>();
    cfg.vit2_depth = require(j, "vit2_depth", "model config").get<int>();
    cfg.vit2_heads = require(j, "vit2_heads", "model config").get<int>();
    cfg.d_t = require(j, "d_t", "model config").get<int>();
    cfg.d_r = require(j, "d_r", "model config").get<int>();
    cfg.joint_depth = require(j, "joint_depth", "model config").get<int>();
    cfg.joint_heads = require(j, "joint_heads", "model config").get<int>();
    cfg.ft_vocab = require(j, "ft_vocab", "model config").get<int>();
    cfg.mb_vocab = require(j, "mb_vocab", "model config").get<int>();
    cfg.mb_dim = require(j, "mb_dim", "model config").get<int>();
    cfg.per_frame_branch_weights =
        require(j, "per_frame_branch_weights", "model config").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  if (cfg.l <= 0 || cfg.h <= 0 || cfg.w <= 0 || cfg.p <= 0 || cfg.d_t <= 0 || cfg.d_r <= 0)
    throw ConfigError("model config dimensions must be positive");
  return cfg;
}

void save_checkpoint(const std::filesystem::path& path, FeatureExtractor<float>& model,
                     const CheckpointMeta& meta) {
  json params = json::array();
  model.visit_params([&](nn::Param<float>& p) {
    params.push_back({{"name", p.name}, {"rows", p.w.rows}, {"cols", p.w.cols}});
  });

  json header = {{"format_version", kCheckpointVersion},
                 {"kind", kCheckpointKind},
                 {"config", model_config_to_json(model.cfg)},
                 {"scaling", scaling_block()},
                 {"pooling", "flatten_project"},
                 {"params", std::move(params)}};
  if (meta.threshold) header["threshold"] = *meta.threshold;
  if (meta.seed) header["seed"] = *meta.seed;
  if (meta.val_auc) header["val_auc"] = *meta.val_auc;

  std::string hs = header.dump();
  CrcWriter w(path);
  w.write_u32(uint32_t(hs.size()));
  w.write(hs.data(), hs.size());
  model.visit_params([&](nn::Param<float>& p) {
    w.write(p.w.v.data(), p.w.v.size() * sizeof(float));
  });
  uint32_t crc = w.crc;  // trailer is excluded from its own CRC
  w.write_u32(crc);
  w.out.flush();
  if (!w.out) throw IoError("write failure on checkpoint: " + path.string());
}

namespace {

std::vector<uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in && !in.eof()) throw IoError("read failure on checkpoint: " + path.string());
  return buf;
}

json parse_header(const std::vector<uint8_t>& buf, const std::filesystem::path& path,
                  size_t* header_end) {
  if (buf.size() < 8) throw FormatError("checkpoint too small: " + path.string());
  uint32_t hlen = read_u32(buf.data());
  if (size_t(4) + hlen + 4 > buf.size())
    throw FormatError("checkpoint header exceeds file size: " + path.string());
  json header;
  try {
    header = json::parse(buf.begin() + 4, buf.begin() + 4 + hlen);
  } catch (const json::exception& e) {
    throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (!header.is_object() || header.value("kind", "") != kCheckpointKind)
    throw FormatError("not a model checkpoint: " + path.string());
  if (header.value("format_version", -1) != kCheckpointVersion)
    throw FormatError("unsupported checkpoint format_version");
  *header_end = 4 + hlen;
  return header;
}

}  // namespace

json read_checkpoint_header(const std::filesystem::path& path) {
  auto buf = slurp(path);
  size_t header_end = 0;
  return parse_header(buf, path, &header_end);
}

FeatureExtractor<float> load_checkpoint(const std::filesystem::path& path,
                                        CheckpointMeta* meta_out) {
  auto buf = slurp(path);
  size_t header_end = 0;
  json header = parse_header(buf, path, &header_end);

  ModelConfig cfg;
  try {
    cfg = model_config_from_json(header.at("config"));
  } catch (const json::exception&) {
    throw FormatError("checkpoint header lacks a config block");
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  if (!header.contains("params") || !header["params"].is_array())
    throw FormatError("checkpoint header lacks a parameter list");
  const json& plist = header["params"];

  // The header's parameter list must match this build's enumeration exactly.
  size_t idx = 0, payload = 0;
  for_each_param_shape(cfg, [&](const std::string& name, int rows, int cols) {
    if (idx >= plist.size())
      throw FormatError("checkpoint parameter list is shorter than the model's");
    const json& e = plist[idx];
    std::string ename = e.value("name", "");
    int erows = e.value("rows", -1), ecols = e.value("cols", -1);
    if (ename != name)
      throw FormatError("checkpoint parameter order drift at '" + ename + "', expected '" +
                        name + "'");
    if (erows != rows || ecols != cols)
      throw ShapeMismatch("checkpoint parameter '" + name + "' has shape " +
                          std::to_string(erows) + "x" + std::to_string(ecols) + ", model needs " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    payload += size_t(rows) * size_t(cols) * sizeof(float);
    ++idx;
  });
  if (idx != plist.size())
    throw FormatError("checkpoint parameter list is longer than the model's");

  if (header_end + payload + 4 != buf.size())
    throw FormatError("checkpoint payload truncated or oversized: " + path.string());

  uint32_t stored = read_u32(buf.data() + buf.size() - 4);
  uint32_t actual = crc32(buf.data(), buf.size() - 4);
  if (stored != actual) throw ChecksumMismatch("checkpoint CRC mismatch: " + path.string());

  FeatureExtractor<float> model(cfg);
  const uint8_t* p = buf.data() + header_end;
  model.visit_params([&](nn::Param<float>& prm) {
    size_t bytes = prm.w.v.size() * sizeof(float);
    std::memcpy(prm.w.v.data(), p, bytes);
    p += bytes;
  });

  if (meta_out) {
    *meta_out = {};
    if (header.contains("threshold")) meta_out->threshold = header["threshold"].get<double>();
    if (header.contains("seed")) meta_out->seed = header["seed"].get<uint64_t>();
    if (header.contains("val_auc")) meta_out->val_auc = header["val_auc"].get<double>();
  }
  return model;
}

}  // namespace h4vdm
