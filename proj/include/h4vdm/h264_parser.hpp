#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "h4vdm/bitreader.hpp"
#include "h4vdm/errors.hpp"

namespace h4vdm::h264 {

enum class FrameType : uint8_t { I, P, B };

char frame_type_char(FrameType t);
FrameType frame_type_from_char(char c);

struct NalUnit {
  size_t offset = 0;  // byte index of the NAL header (first byte after the start code)
  int nal_ref_idc = 0;
  int nal_unit_type = 0;  // 0..31
  std::vector<uint8_t> rbsp;
};

enum class EntropyMode : uint8_t { CAVLC, CABAC };

struct SpsInfo {
  int profile_idc = 0;
  int level_idc = 0;
  int sps_id = 0;
  int chroma_format_idc = 1;
  bool separate_colour_plane = false;
  int log2_max_frame_num = 4;
  int pic_order_cnt_type = 0;
  int log2_max_pic_order_cnt_lsb = 4;
  bool delta_pic_order_always_zero = false;
  int pic_width_mbs = 1;        // pic_width_in_mbs_minus1 + 1
  int pic_height_map_units = 1; // pic_height_in_map_units_minus1 + 1
  bool frame_mbs_only = true;
  bool frame_cropping = false;
  int crop_left = 0, crop_right = 0, crop_top = 0, crop_bottom = 0;

  int luma_width() const { return 16 * pic_width_mbs; }
  int luma_height() const { return 16 * pic_height_map_units * (2 - (frame_mbs_only ? 1 : 0)); }
  // Display size after cropping (4:2:0 crop units: 2px horizontal, 2px vertical
  // for frame-coded content).
  int display_width() const;
  int display_height() const;
};

struct PpsInfo {
  int pps_id = 0;
  int sps_id = 0;
  EntropyMode entropy_mode = EntropyMode::CAVLC;
  bool bottom_field_pic_order_in_frame_present = false;
  int num_ref_idx_l0_default = 1;
  int num_ref_idx_l1_default = 1;
  bool weighted_pred = false;
  int weighted_bipred_idc = 0;
  int pic_init_qp = 26;  // 26 + pic_init_qp_minus26
  bool redundant_pic_cnt_present = false;
};

struct SliceHeaderInfo {
  int first_mb_in_slice = 0;
  FrameType frame_type = FrameType::I;
  int slice_type_raw = 0;
  int frame_num = 0;
  int slice_qp = 26;
  int pps_id = 0;
  bool is_idr = false;
};

struct GopBoundary {
  int start_frame_index = 0;
  int length = 0;
  std::vector<FrameType> frame_types;
};

// [stream scan]

// Splits an Annex-B byte stream on 3-/4-byte start codes. Bytes before the
// first start code are ignored. Throws NoStartCode if none exists.
std::vector<NalUnit> find_nal_units(std::span<const uint8_t> stream);

// Removes emulation-prevention bytes: each 00 00 03 with a following byte
// <= 03 drops the 03. Malformed trailing patterns pass through verbatim.
std::vector<uint8_t> unescape_rbsp(std::span<const uint8_t> ebsp);

// [header parsing]

SpsInfo parse_sps(const NalUnit& nal);
PpsInfo parse_pps(const NalUnit& nal);

// Reads the pps_id field of a slice NAL without consuming the rest.
int peek_slice_pps_id(const NalUnit& nal);

SliceHeaderInfo parse_slice_header(const NalUnit& nal, const SpsInfo& sps, const PpsInfo& pps);

// [GOP segmentation]

// Groups per-frame headers into GOPs. A GOP starts at each IDR frame, or at
// each I frame when open_gop is set. Frames before the first anchor are not
// assigned to any GOP. Throws NoIFrame if no anchor exists.
std::vector<GopBoundary> segment_gops(const std::vector<SliceHeaderInfo>& frames,
                                      bool open_gop = false);

// [whole-stream convenience]

struct StreamInfo {
  std::vector<NalUnit> nals;
  std::map<int, SpsInfo> sps;
  std::map<int, PpsInfo> pps;
  std::vector<SliceHeaderInfo> frames;  // one entry per frame, slices merged
  std::vector<GopBoundary> gops;
  int leading_unassigned_frames = 0;
};

StreamInfo parse_stream(std::span<const uint8_t> stream, bool open_gop = false);

// JSON document with NAL inventory, SPS/PPS fields, per-frame records and
// GOP boundaries (serialized string; schema documented in the README).
std::string stream_info_to_json(const StreamInfo& info);

}  // namespace h4vdm::h264
