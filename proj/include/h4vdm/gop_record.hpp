#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "h4vdm/errors.hpp"
#include "h4vdm/h264_parser.hpp"

namespace h4vdm {

using h264::FrameType;

// One decoded GOP as exported by an instrumented decoder or the synthetic
// generator. Pixel/grid streams are flat, frame-major, row-major buffers.
struct GopRecord {
  std::string device_id;
  std::string video_id;
  int gop_index = 0;
  int frame_count = 0;
  int height = 0;  // H_f
  int width = 0;   // W_f
  std::string qp_source = "macroblock";  // or "slice" when grids are constant
  std::vector<FrameType> frame_types;    // frame_count entries, [0] == I
  std::vector<uint8_t> frames;           // frame_count * H_f * W_f * 3, RGB
  std::vector<uint8_t> mb_types;         // frame_count * mb_rows * mb_cols
  std::vector<uint8_t> luma_qp;          // same dims as mb_types, 0..51

  int mb_rows() const { return (height + 15) / 16; }
  int mb_cols() const { return (width + 15) / 16; }

  const uint8_t* frame_ptr(int k) const { return frames.data() + size_t(k) * height * width * 3; }
  const uint8_t* mb_ptr(int k) const { return mb_types.data() + size_t(k) * mb_rows() * mb_cols(); }
  const uint8_t* qp_ptr(int k) const { return luma_qp.data() + size_t(k) * mb_rows() * mb_cols(); }
};

// Usability thresholds applied on load; zeros disable a check.
struct RecordRequirements {
  int min_frames = 8;   // L
  int min_height = 224; // H
  int min_width = 224;  // W
};

// Validates internal consistency without usability checks: stream lengths,
// frame-type alphabet and leading I frame, QP range. Throws FormatError.
void validate_record(const GopRecord& record);

// Writes manifest.json + frames.u8 + mb_types.u8 + luma_qp.u8 into dir
// (created if missing). The record is validated first.
void write_record(const std::filesystem::path& dir, const GopRecord& record);

// Loads and fully validates a record directory. Throws FormatError,
// ChecksumMismatch, ShortGop, SmallFrame, IoError.
GopRecord load_record(const std::filesystem::path& dir, const RecordRequirements& req = {});

// Recursively finds record directories (those containing manifest.json)
// under root, sorted lexicographically.
std::vector<std::filesystem::path> scan_store(const std::filesystem::path& root);

// Central crop of an interleaved row-major image: rows floor((hf-h)/2) ..
// +h, same for columns. Throws SmallFrame.
template <typename U>
std::vector<U> crop_center(const U* data, int hf, int wf, int channels, int h, int w) {
  if (hf < h || wf < w) throw SmallFrame("crop target exceeds frame size");
  int r0 = (hf - h) / 2;
  int c0 = (wf - w) / 2;
  std::vector<U> out(size_t(h) * w * channels);
  for (int r = 0; r < h; ++r) {
    const U* src = data + (size_t(r0 + r) * wf + c0) * channels;
    std::copy(src, src + size_t(w) * channels, out.begin() + size_t(r) * w * channels);
  }
  return out;
}

// Expands a macroblock grid to pixel resolution: pixel (r,c) takes
// grid[r/16][c/16]. Grid dims must be ceil(hf/16) x ceil(wf/16).
std::vector<uint8_t> unpack_mb_grid(std::span<const uint8_t> grid, int grid_rows, int grid_cols,
                                    int hf, int wf);

// The five per-GOP model input streams, cropped and scaled.
template <typename T>
struct ModelInput {
  int l = 0, h = 0, w = 0;
  std::vector<T> i_frame;                          // h*w*3 in [-1,1]
  std::vector<std::vector<T>> frame_diffs;         // l buffers, h*w*3 in [-1,1]
  std::vector<int> frame_type_ids;                 // l values in {0,1,2}
  std::vector<std::vector<uint8_t>> mb_type_maps;  // l maps, h*w
  std::vector<std::vector<T>> luma_qp_maps;        // l maps, h*w in [-1,1]
};

int frame_type_id(FrameType t);

template <typename T>
ModelInput<T> assemble_model_input(const GopRecord& rec, int l, int h, int w) {
  if (rec.frame_count < l) throw ShortGop("record has fewer frames than L");
  if (rec.height < h || rec.width < w) throw SmallFrame("record frames smaller than H x W");

  ModelInput<T> in;
  in.l = l;
  in.h = h;
  in.w = w;
  std::vector<uint8_t> f0 = crop_center(rec.frame_ptr(0), rec.height, rec.width, 3, h, w);
  in.i_frame.resize(f0.size());
  for (size_t i = 0; i < f0.size(); ++i) in.i_frame[i] = T(f0[i]) / T(127.5) - T(1);

  in.frame_diffs.resize(l);
  in.frame_type_ids.resize(l);
  in.mb_type_maps.resize(l);
  in.luma_qp_maps.resize(l);
  for (int k = 0; k < l; ++k) {
    std::vector<uint8_t> fk = crop_center(rec.frame_ptr(k), rec.height, rec.width, 3, h, w);
    auto& diff = in.frame_diffs[k];
    diff.resize(fk.size());
    for (size_t i = 0; i < fk.size(); ++i) diff[i] = T(int(fk[i]) - int(f0[i])) / T(255);

    in.frame_type_ids[k] = frame_type_id(rec.frame_types[k]);

    std::span<const uint8_t> mb(rec.mb_ptr(k), size_t(rec.mb_rows()) * rec.mb_cols());
    std::vector<uint8_t> mb_full =
        unpack_mb_grid(mb, rec.mb_rows(), rec.mb_cols(), rec.height, rec.width);
    in.mb_type_maps[k] = crop_center(mb_full.data(), rec.height, rec.width, 1, h, w);

    std::span<const uint8_t> qp(rec.qp_ptr(k), size_t(rec.mb_rows()) * rec.mb_cols());
    std::vector<uint8_t> qp_full =
        unpack_mb_grid(qp, rec.mb_rows(), rec.mb_cols(), rec.height, rec.width);
    std::vector<uint8_t> qp_crop = crop_center(qp_full.data(), rec.height, rec.width, 1, h, w);
    auto& qpm = in.luma_qp_maps[k];
    qpm.resize(qp_crop.size());
    for (size_t i = 0; i < qp_crop.size(); ++i) qpm[i] = T(qp_crop[i]) / T(25.5) - T(1);
  }
  return in;
}

// Uniform sample without replacement of min(k, |eligible|) records, where
// eligible means frame_count >= min_frames. Deterministic for a given seed.
std::vector<GopRecord> sample_gops(const std::vector<GopRecord>& records, int k, int min_frames,
                                   uint64_t seed);
std::vector<size_t> sample_gop_indices(size_t count, std::span<const int> frame_counts, int k,
                                       int min_frames, uint64_t seed);

// Hard ingestion check: the record's frame types must equal the types parsed
// from the matching bitstream GOP. Throws FormatError on any difference.
void cross_validate_frame_types(const GopRecord& record, const std::vector<FrameType>& parsed);

}  // namespace h4vdm
