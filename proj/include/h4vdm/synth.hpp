#pragma once

#include <string>
#include <vector>

#include "h4vdm/gop_record.hpp"

namespace h4vdm {

// A fake capture device: every knob leaves a device-specific statistical
// fingerprint in the records it emits.
struct SyntheticDeviceProfile {
  std::string device_id;
  uint64_t seed = 0;
  int base_qp = 26;
  int qp_jitter = 2;                         // grid values in base_qp +- jitter
  std::string gop_pattern = "IPPBPPBP";      // cycled; position 0 is always I
  std::vector<uint8_t> mb_types{0, 1, 2, 3, 7, 9};
  std::vector<double> mb_weights;            // empty -> uniform over mb_types
  double spatial_freq = 3.0;                 // texture cycles across the frame
  double noise_level = 8.0;                  // grey-level sensor noise sigma
  double motion = 1.5;                       // pixels of drift per frame
};

// One deterministic record: same (profile, video_index, gop_index, dims)
// always yields identical bytes.  The result passes validate_record.
GopRecord synth_record(const SyntheticDeviceProfile& profile, int video_index, int gop_index,
                       int frame_count, int height, int width);

std::vector<GopRecord> synth_generate(const std::vector<SyntheticDeviceProfile>& profiles,
                                      int videos_per_device, int gops_per_video, int frame_count,
                                      int height, int width);

// `count` distinct profiles with varied QP levels, GOP patterns, textures,
// and macroblock statistics; device ids "1".."count".
std::vector<SyntheticDeviceProfile> default_profiles(int count, uint64_t seed);

}  // namespace h4vdm
