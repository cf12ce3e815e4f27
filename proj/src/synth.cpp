#include "h4vdm/synth.hpp"

#include <algorithm>
#include <cmath>

#include "h4vdm/rng.hpp"

namespace h4vdm {

namespace {

uint8_t clamp_u8(double x) {
  return uint8_t(std::clamp(x, 0.0, 255.0));
}

FrameType pattern_type(const std::string& pattern, int k) {
  if (k == 0) return FrameType::I;
  char c = pattern[size_t(k) % pattern.size()];
  switch (c) {
    case 'I': return FrameType::I;
    case 'P': return FrameType::P;
    case 'B': return FrameType::B;
    default: throw ConfigError(std::string("gop_pattern char '") + c + "' is not I/P/B");
  }
}

uint8_t sample_mb_type(const SyntheticDeviceProfile& p, Rng& rng) {
  if (p.mb_weights.empty()) return p.mb_types[rng.uniform_int(p.mb_types.size())];
  double total = 0;
  for (double w : p.mb_weights) total += w;
  double u = rng.uniform() * total;
  for (size_t i = 0; i < p.mb_types.size(); ++i) {
    u -= p.mb_weights[i];
    if (u <= 0) return p.mb_types[i];
  }
  return p.mb_types.back();
}

}  // namespace

GopRecord synth_record(const SyntheticDeviceProfile& profile, int video_index, int gop_index,
                       int frame_count, int height, int width) {
  if (profile.mb_types.empty()) throw ConfigError("profile has no mb types");
  if (!profile.mb_weights.empty() && profile.mb_weights.size() != profile.mb_types.size())
    throw ConfigError("mb_weights length must match mb_types");
  if (profile.gop_pattern.empty()) throw ConfigError("empty gop_pattern");

  Rng rng(mix_seed(profile.seed, mix_seed(uint64_t(video_index), uint64_t(gop_index))));

  GopRecord rec;
  rec.device_id = profile.device_id;
  rec.video_id = "v" + std::to_string(video_index);
  rec.gop_index = gop_index;
  rec.frame_count = frame_count;
  rec.height = height;
  rec.width = width;
  rec.qp_source = "macroblock";

  rec.frame_types.resize(size_t(frame_count));
  for (int k = 0; k < frame_count; ++k) rec.frame_types[size_t(k)] = pattern_type(profile.gop_pattern, k);

  // Scene parameters for this GOP: device-characteristic texture with a
  // per-GOP random phase, drifting over frames so differences are nonzero.
  double fx = profile.spatial_freq * (0.9 + 0.2 * rng.uniform());
  double fy = profile.spatial_freq * (0.9 + 0.2 * rng.uniform());
  double phase[3], shift[3];
  for (int c = 0; c < 3; ++c) {
    phase[c] = rng.uniform() * 2.0 * M_PI;
    shift[c] = rng.uniform() * 2.0 * M_PI;
  }

  rec.frames.resize(size_t(frame_count) * height * width * 3);
  const double tau = 2.0 * M_PI;
  for (int k = 0; k < frame_count; ++k) {
    double dx = profile.motion * k;
    uint8_t* f = rec.frames.data() + size_t(k) * height * width * 3;
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) {
        double sx = tau * fx * (double(c) + dx) / double(width);
        double sy = tau * fy * double(r) / double(height);
        for (int ch = 0; ch < 3; ++ch) {
          double v = 128.0 + 90.0 * std::sin(sx + phase[ch]) * std::cos(sy + shift[ch]) +
                     profile.noise_level * rng.normal();
          f[(size_t(r) * width + c) * 3 + ch] = clamp_u8(v);
        }
      }
  }

  int grid_rows = rec.mb_rows(), grid_cols = rec.mb_cols();
  rec.mb_types.resize(size_t(frame_count) * grid_rows * grid_cols);
  rec.luma_qp.resize(rec.mb_types.size());
  int jit = std::max(0, profile.qp_jitter);
  for (size_t i = 0; i < rec.mb_types.size(); ++i) {
    rec.mb_types[i] = sample_mb_type(profile, rng);
    int qp = profile.base_qp + int(rng.uniform_int(uint64_t(2 * jit + 1))) - jit;
    rec.luma_qp[i] = uint8_t(std::clamp(qp, 0, 51));
  }

  validate_record(rec);
  return rec;
}

std::vector<GopRecord> synth_generate(const std::vector<SyntheticDeviceProfile>& profiles,
                                      int videos_per_device, int gops_per_video, int frame_count,
                                      int height, int width) {
  std::vector<GopRecord> out;
  for (const auto& p : profiles)
    for (int v = 0; v < videos_per_device; ++v)
      for (int g = 0; g < gops_per_video; ++g)
        out.push_back(synth_record(p, v, g, frame_count, height, width));
  return out;
}

std::vector<SyntheticDeviceProfile> default_profiles(int count, uint64_t seed) {
  static const char* kPatterns[] = {"IPPPPPPP", "IPPBPPBP", "IBBPBBPB", "IPBPBPBP"};
  static const std::vector<std::vector<uint8_t>> kMbSets{
      {0, 1, 2, 3}, {0, 2, 5, 7, 9}, {1, 3, 7, 21}, {0, 1, 9, 25, 30}};
  std::vector<SyntheticDeviceProfile> out;
  for (int i = 0; i < count; ++i) {
    SyntheticDeviceProfile p;
    p.device_id = std::to_string(i + 1);
    p.seed = mix_seed(seed, uint64_t(i));
    p.base_qp = 18 + (i * 5) % 30;
    p.qp_jitter = 1 + i % 3;
    p.gop_pattern = kPatterns[i % 4];
    p.mb_types = kMbSets[size_t(i) % kMbSets.size()];
    p.spatial_freq = 2.0 + double(i % 5);
    p.noise_level = 5.0 + double(i % 4) * 2.5;
    p.motion = 1.0 + 0.5 * double(i % 3);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace h4vdm
