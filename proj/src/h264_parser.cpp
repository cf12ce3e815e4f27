#include "h4vdm/h264_parser.hpp"

#include <json.hpp>

namespace h4vdm::h264 {

using nlohmann::json;

char frame_type_char(FrameType t) {
  switch (t) {
    case FrameType::I: return 'I';
    case FrameType::P: return 'P';
    case FrameType::B: return 'B';
  }
  return '?';
}

FrameType frame_type_from_char(char c) {
  switch (c) {
    case 'I': return FrameType::I;
    case 'P': return FrameType::P;
    case 'B': return FrameType::B;
  }
  throw FormatError(std::string("unknown frame type '") + c + "'");
}

int SpsInfo::display_width() const {
  int crop_unit_x = (chroma_format_idc == 1 || chroma_format_idc == 2) ? 2 : 1;
  return luma_width() - crop_unit_x * (crop_left + crop_right);
}

int SpsInfo::display_height() const {
  int crop_unit_y = (chroma_format_idc == 1 ? 2 : 1) * (frame_mbs_only ? 1 : 2);
  return luma_height() - crop_unit_y * (crop_top + crop_bottom);
}

std::vector<uint8_t> unescape_rbsp(std::span<const uint8_t> ebsp) {
  std::vector<uint8_t> out;
  out.reserve(ebsp.size());
  int zeros = 0;
  for (size_t i = 0; i < ebsp.size(); ++i) {
    if (zeros >= 2 && ebsp[i] == 0x03 && i + 1 < ebsp.size() && ebsp[i + 1] <= 0x03) {
      zeros = 0;
      continue;
    }
    out.push_back(ebsp[i]);
    zeros = (ebsp[i] == 0) ? zeros + 1 : 0;
  }
  return out;
}

std::vector<NalUnit> find_nal_units(std::span<const uint8_t> stream) {
  // Positions of the byte following each "00 00 01" sequence, and the begin
  // of the start code itself (one extra leading zero absorbed for 4-byte codes).
  struct Sc {
    size_t begin;
    size_t payload;
  };
  std::vector<Sc> codes;
  for (size_t i = 0; i + 2 < stream.size(); ++i) {
    if (stream[i] == 0 && stream[i + 1] == 0 && stream[i + 2] == 1) {
      size_t begin = (i > 0 && stream[i - 1] == 0) ? i - 1 : i;
      codes.push_back({begin, i + 3});
      i += 2;
    }
  }
  if (codes.empty()) throw NoStartCode("no Annex-B start code in stream");

  std::vector<NalUnit> nals;
  for (size_t k = 0; k < codes.size(); ++k) {
    size_t begin = codes[k].payload;
    size_t end = (k + 1 < codes.size()) ? codes[k + 1].begin : stream.size();
    while (end > begin && stream[end - 1] == 0) --end;  // trailing_zero_8bits
    if (end <= begin) continue;
    NalUnit nal;
    nal.offset = begin;
    uint8_t hdr = stream[begin];
    nal.nal_ref_idc = (hdr >> 5) & 0x3;
    nal.nal_unit_type = hdr & 0x1f;
    nal.rbsp = unescape_rbsp(stream.subspan(begin + 1, end - begin - 1));
    nals.push_back(std::move(nal));
  }
  return nals;
}

namespace {

void skip_scaling_list(BitReader& b, int size) {
  int last = 8, next = 8;
  for (int j = 0; j < size; ++j) {
    if (next != 0) next = (last + b.read_se() + 256) % 256;
    last = (next == 0) ? last : next;
  }
}

bool high_profile(int profile_idc) {
  switch (profile_idc) {
    case 100: case 110: case 122: case 244: case 44:
    case 83: case 86: case 118: case 128:
    case 138: case 139: case 134: case 135:
      return true;
    default:
      return false;
  }
}

}  // namespace

SpsInfo parse_sps(const NalUnit& nal) {
  if (nal.nal_unit_type != 7) throw MalformedSps("NAL is not an SPS");
  try {
    BitReader b(nal.rbsp);
    SpsInfo s;
    s.profile_idc = static_cast<int>(b.read_bits(8));
    b.skip_bits(8);  // constraint_set flags + reserved
    s.level_idc = static_cast<int>(b.read_bits(8));
    s.sps_id = static_cast<int>(b.read_ue());
    if (s.sps_id > 31) throw MalformedSps("sps_id out of range");

    if (high_profile(s.profile_idc)) {
      s.chroma_format_idc = static_cast<int>(b.read_ue());
      if (s.chroma_format_idc > 3) throw MalformedSps("chroma_format_idc out of range");
      if (s.chroma_format_idc == 3) s.separate_colour_plane = b.read_bit() != 0;
      b.read_ue();  // bit_depth_luma_minus8
      b.read_ue();  // bit_depth_chroma_minus8
      b.read_bit(); // qpprime_y_zero_transform_bypass
      if (b.read_bit()) {
        int lists = (s.chroma_format_idc != 3) ? 8 : 12;
        for (int i = 0; i < lists; ++i) {
          if (b.read_bit()) skip_scaling_list(b, i < 6 ? 16 : 64);
        }
      }
    }

    uint32_t log2mfn_m4 = b.read_ue();
    if (log2mfn_m4 > 12) throw MalformedSps("log2_max_frame_num_minus4 out of range");
    s.log2_max_frame_num = static_cast<int>(log2mfn_m4) + 4;

    s.pic_order_cnt_type = static_cast<int>(b.read_ue());
    if (s.pic_order_cnt_type > 2) throw MalformedSps("pic_order_cnt_type out of range");
    if (s.pic_order_cnt_type == 0) {
      uint32_t lsb_m4 = b.read_ue();
      if (lsb_m4 > 12) throw MalformedSps("log2_max_pic_order_cnt_lsb_minus4 out of range");
      s.log2_max_pic_order_cnt_lsb = static_cast<int>(lsb_m4) + 4;
    } else if (s.pic_order_cnt_type == 1) {
      s.delta_pic_order_always_zero = b.read_bit() != 0;
      b.read_se();  // offset_for_non_ref_pic
      b.read_se();  // offset_for_top_to_bottom_field
      uint32_t cycle = b.read_ue();
      if (cycle > 255) throw MalformedSps("num_ref_frames_in_pic_order_cnt_cycle out of range");
      for (uint32_t i = 0; i < cycle; ++i) b.read_se();
    }

    b.read_ue();  // max_num_ref_frames
    b.read_bit(); // gaps_in_frame_num_value_allowed
    uint32_t w_m1 = b.read_ue();
    uint32_t h_m1 = b.read_ue();
    if (w_m1 >= 1024 || h_m1 >= 1024) throw MalformedSps("frame size in mbs out of range");
    s.pic_width_mbs = static_cast<int>(w_m1) + 1;
    s.pic_height_map_units = static_cast<int>(h_m1) + 1;
    s.frame_mbs_only = b.read_bit() != 0;
    if (!s.frame_mbs_only) b.read_bit();  // mb_adaptive_frame_field
    b.read_bit();                         // direct_8x8_inference
    s.frame_cropping = b.read_bit() != 0;
    if (s.frame_cropping) {
      s.crop_left = static_cast<int>(b.read_ue());
      s.crop_right = static_cast<int>(b.read_ue());
      s.crop_top = static_cast<int>(b.read_ue());
      s.crop_bottom = static_cast<int>(b.read_ue());
    }
    b.read_bit();  // vui_parameters_present; VUI carries nothing we need
    return s;
  } catch (const BitstreamExhausted&) {
    throw MalformedSps("SPS truncated");
  }
}

PpsInfo parse_pps(const NalUnit& nal) {
  if (nal.nal_unit_type != 8) throw MalformedPps("NAL is not a PPS");
  try {
    BitReader b(nal.rbsp);
    PpsInfo p;
    p.pps_id = static_cast<int>(b.read_ue());
    p.sps_id = static_cast<int>(b.read_ue());
    if (p.pps_id > 255 || p.sps_id > 31) throw MalformedPps("parameter set id out of range");
    p.entropy_mode = b.read_bit() ? EntropyMode::CABAC : EntropyMode::CAVLC;
    p.bottom_field_pic_order_in_frame_present = b.read_bit() != 0;

    uint32_t groups_m1 = b.read_ue();
    if (groups_m1 > 7) throw MalformedPps("num_slice_groups out of range");
    if (groups_m1 > 0) {
      uint32_t map_type = b.read_ue();
      switch (map_type) {
        case 0:
          for (uint32_t i = 0; i <= groups_m1; ++i) b.read_ue();
          break;
        case 2:
          for (uint32_t i = 0; i < groups_m1; ++i) {
            b.read_ue();
            b.read_ue();
          }
          break;
        case 3: case 4: case 5:
          b.read_bit();
          b.read_ue();
          break;
        case 6: {
          uint32_t units_m1 = b.read_ue();
          int bits = 0;
          while ((1u << bits) < groups_m1 + 1) ++bits;
          for (uint32_t i = 0; i <= units_m1; ++i) b.read_bits(bits);
          break;
        }
        case 1:
          break;
        default:
          throw MalformedPps("slice_group_map_type out of range");
      }
    }

    p.num_ref_idx_l0_default = static_cast<int>(b.read_ue()) + 1;
    p.num_ref_idx_l1_default = static_cast<int>(b.read_ue()) + 1;
    p.weighted_pred = b.read_bit() != 0;
    p.weighted_bipred_idc = static_cast<int>(b.read_bits(2));
    p.pic_init_qp = 26 + b.read_se();
    if (p.pic_init_qp < 0 || p.pic_init_qp > 51) throw MalformedPps("pic_init_qp out of range");
    b.read_se();  // pic_init_qs_minus26
    b.read_se();  // chroma_qp_index_offset
    b.read_bit(); // deblocking_filter_control_present
    b.read_bit(); // constrained_intra_pred
    p.redundant_pic_cnt_present = b.read_bit() != 0;
    return p;
  } catch (const BitstreamExhausted&) {
    throw MalformedPps("PPS truncated");
  }
}

int peek_slice_pps_id(const NalUnit& nal) {
  try {
    BitReader b(nal.rbsp);
    b.read_ue();  // first_mb_in_slice
    b.read_ue();  // slice_type
    return static_cast<int>(b.read_ue());
  } catch (const BitstreamExhausted&) {
    throw MalformedSliceHeader("slice header truncated");
  }
}

namespace {

void skip_ref_pic_list_modification(BitReader& b) {
  if (b.read_bit()) {
    for (;;) {
      uint32_t idc = b.read_ue();
      if (idc == 3) break;
      if (idc > 3) throw MalformedSliceHeader("modification_of_pic_nums_idc out of range");
      b.read_ue();  // abs_diff_pic_num_minus1 / long_term_pic_num
    }
  }
}

void skip_pred_weight_table(BitReader& b, int chroma_array_type, int l0_active, int l1_active,
                            bool is_b) {
  b.read_ue();  // luma_log2_weight_denom
  if (chroma_array_type != 0) b.read_ue();
  auto one_list = [&](int active) {
    for (int i = 0; i < active; ++i) {
      if (b.read_bit()) {
        b.read_se();
        b.read_se();
      }
      if (chroma_array_type != 0 && b.read_bit()) {
        for (int j = 0; j < 2; ++j) {
          b.read_se();
          b.read_se();
        }
      }
    }
  };
  one_list(l0_active);
  if (is_b) one_list(l1_active);
}

void skip_dec_ref_pic_marking(BitReader& b, bool is_idr) {
  if (is_idr) {
    b.read_bit();  // no_output_of_prior_pics
    b.read_bit();  // long_term_reference
    return;
  }
  if (b.read_bit()) {
    for (;;) {
      uint32_t op = b.read_ue();
      if (op == 0) break;
      if (op > 6) throw MalformedSliceHeader("memory_management_control_operation out of range");
      if (op == 1 || op == 3) b.read_ue();
      if (op == 2) b.read_ue();
      if (op == 3 || op == 6) b.read_ue();
      if (op == 4) b.read_ue();
    }
  }
}

}  // namespace

SliceHeaderInfo parse_slice_header(const NalUnit& nal, const SpsInfo& sps, const PpsInfo& pps) {
  if (nal.nal_unit_type != 1 && nal.nal_unit_type != 5)
    throw MalformedSliceHeader("NAL is not a coded slice");
  bool is_idr = nal.nal_unit_type == 5;
  try {
    BitReader b(nal.rbsp);
    SliceHeaderInfo h;
    h.is_idr = is_idr;
    h.first_mb_in_slice = static_cast<int>(b.read_ue());
    uint32_t slice_type = b.read_ue();
    if (slice_type > 9) throw MalformedSliceHeader("slice_type out of range");
    h.slice_type_raw = static_cast<int>(slice_type);
    switch (slice_type % 5) {
      case 0: h.frame_type = FrameType::P; break;
      case 1: h.frame_type = FrameType::B; break;
      case 2: h.frame_type = FrameType::I; break;
      default:
        throw UnsupportedSliceType("SP/SI slices are not supported");
    }
    h.pps_id = static_cast<int>(b.read_ue());
    if (h.pps_id != pps.pps_id) throw MalformedSliceHeader("slice references a different PPS");

    if (sps.separate_colour_plane) b.read_bits(2);
    h.frame_num = static_cast<int>(b.read_bits(sps.log2_max_frame_num));

    bool field_pic = false;
    if (!sps.frame_mbs_only) {
      field_pic = b.read_bit() != 0;
      if (field_pic) b.read_bit();  // bottom_field_flag
    }
    if (is_idr) b.read_ue();  // idr_pic_id

    if (sps.pic_order_cnt_type == 0) {
      b.read_bits(sps.log2_max_pic_order_cnt_lsb);
      if (pps.bottom_field_pic_order_in_frame_present && !field_pic) b.read_se();
    } else if (sps.pic_order_cnt_type == 1 && !sps.delta_pic_order_always_zero) {
      b.read_se();
      if (pps.bottom_field_pic_order_in_frame_present && !field_pic) b.read_se();
    }

    if (pps.redundant_pic_cnt_present) b.read_ue();

    bool is_p = h.frame_type == FrameType::P;
    bool is_b_slice = h.frame_type == FrameType::B;
    if (is_b_slice) b.read_bit();  // direct_spatial_mv_pred

    int l0_active = pps.num_ref_idx_l0_default;
    int l1_active = pps.num_ref_idx_l1_default;
    if (is_p || is_b_slice) {
      if (b.read_bit()) {  // num_ref_idx_active_override
        l0_active = static_cast<int>(b.read_ue()) + 1;
        if (is_b_slice) l1_active = static_cast<int>(b.read_ue()) + 1;
      }
    }
    if (l0_active > 32 || l1_active > 32)
      throw MalformedSliceHeader("num_ref_idx_active out of range");

    if (is_p || is_b_slice) skip_ref_pic_list_modification(b);
    if (is_b_slice) skip_ref_pic_list_modification(b);

    int chroma_array_type = sps.separate_colour_plane ? 0 : sps.chroma_format_idc;
    if ((pps.weighted_pred && is_p) || (pps.weighted_bipred_idc == 1 && is_b_slice))
      skip_pred_weight_table(b, chroma_array_type, l0_active, l1_active, is_b_slice);

    if (nal.nal_ref_idc != 0) skip_dec_ref_pic_marking(b, is_idr);

    if (pps.entropy_mode == EntropyMode::CABAC && h.frame_type != FrameType::I) {
      uint32_t cabac_init = b.read_ue();
      if (cabac_init > 2) throw MalformedSliceHeader("cabac_init_idc out of range");
    }

    h.slice_qp = pps.pic_init_qp + b.read_se();
    if (h.slice_qp < 0 || h.slice_qp > 51) throw MalformedSliceHeader("slice_qp out of range");
    return h;
  } catch (const BitstreamExhausted&) {
    throw MalformedSliceHeader("slice header truncated");
  }
}

std::vector<GopBoundary> segment_gops(const std::vector<SliceHeaderInfo>& frames, bool open_gop) {
  auto is_anchor = [&](const SliceHeaderInfo& f) {
    return open_gop ? f.frame_type == FrameType::I : f.is_idr;
  };
  std::vector<GopBoundary> gops;
  for (size_t i = 0; i < frames.size(); ++i) {
    if (is_anchor(frames[i])) {
      gops.push_back({static_cast<int>(i), 0, {}});
    }
    if (!gops.empty()) {
      gops.back().length += 1;
      gops.back().frame_types.push_back(frames[i].frame_type);
    }
  }
  if (gops.empty()) throw NoIFrame("stream contains no anchor I frame");
  return gops;
}

StreamInfo parse_stream(std::span<const uint8_t> stream, bool open_gop) {
  StreamInfo info;
  info.nals = find_nal_units(stream);
  for (const NalUnit& nal : info.nals) {
    try {
      switch (nal.nal_unit_type) {
        case 7: {
          SpsInfo s = parse_sps(nal);
          info.sps[s.sps_id] = s;
          break;
        }
        case 8: {
          PpsInfo p = parse_pps(nal);
          info.pps[p.pps_id] = p;
          break;
        }
        case 1:
        case 5: {
          int pps_id = peek_slice_pps_id(nal);
          auto pit = info.pps.find(pps_id);
          if (pit == info.pps.end())
            throw MalformedSliceHeader("slice references unknown PPS " + std::to_string(pps_id));
          auto sit = info.sps.find(pit->second.sps_id);
          if (sit == info.sps.end())
            throw MalformedSliceHeader("PPS references unknown SPS " +
                                       std::to_string(pit->second.sps_id));
          SliceHeaderInfo h = parse_slice_header(nal, sit->second, pit->second);
          if (h.first_mb_in_slice == 0) {
            info.frames.push_back(h);
          } else {
            if (info.frames.empty())
              throw MalformedSliceHeader("slice continuation before any frame start");
            if (info.frames.back().frame_num != h.frame_num)
              throw MalformedSliceHeader("slice continuation with mismatched frame_num");
            // merged: the first_mb==0 slice defines the frame
          }
          break;
        }
        default:
          break;  // SEI/AUD/filler: inventoried only
      }
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (NAL at byte offset " +
                       std::to_string(nal.offset) + ")");
    }
  }
  std::vector<GopBoundary> gops = segment_gops(info.frames, open_gop);
  info.gops = gops;
  info.leading_unassigned_frames = gops.empty() ? 0 : gops.front().start_frame_index;
  return info;
}

std::string stream_info_to_json(const StreamInfo& info) {
  json doc;
  doc["nal_units"] = json::array();
  for (const auto& n : info.nals) {
    doc["nal_units"].push_back({{"offset", n.offset},
                                {"nal_ref_idc", n.nal_ref_idc},
                                {"nal_unit_type", n.nal_unit_type},
                                {"rbsp_size", n.rbsp.size()}});
  }
  doc["sps"] = json::array();
  for (const auto& [id, s] : info.sps) {
    doc["sps"].push_back({{"sps_id", id},
                          {"profile_idc", s.profile_idc},
                          {"level_idc", s.level_idc},
                          {"log2_max_frame_num", s.log2_max_frame_num},
                          {"pic_width_mbs", s.pic_width_mbs},
                          {"pic_height_map_units", s.pic_height_map_units},
                          {"frame_mbs_only", s.frame_mbs_only},
                          {"luma_width", s.luma_width()},
                          {"luma_height", s.luma_height()},
                          {"display_width", s.display_width()},
                          {"display_height", s.display_height()}});
  }
  doc["pps"] = json::array();
  for (const auto& [id, p] : info.pps) {
    doc["pps"].push_back({{"pps_id", id},
                          {"sps_id", p.sps_id},
                          {"pic_init_qp", p.pic_init_qp},
                          {"entropy_mode", p.entropy_mode == EntropyMode::CABAC ? "CABAC" : "CAVLC"}});
  }
  doc["frames"] = json::array();
  for (size_t i = 0; i < info.frames.size(); ++i) {
    const auto& f = info.frames[i];
    doc["frames"].push_back({{"index", i},
                             {"frame_type", std::string(1, frame_type_char(f.frame_type))},
                             {"slice_qp", f.slice_qp},
                             {"is_idr", f.is_idr}});
  }
  doc["gops"] = json::array();
  for (size_t g = 0; g < info.gops.size(); ++g) {
    const auto& gop = info.gops[g];
    json types = json::array();
    for (FrameType t : gop.frame_types) types.push_back(std::string(1, frame_type_char(t)));
    doc["gops"].push_back({{"gop_index", g},
                           {"start_frame_index", gop.start_frame_index},
                           {"length", gop.length},
                           {"frame_types", types}});
  }
  return doc.dump(2);
}

}  // namespace h4vdm::h264
