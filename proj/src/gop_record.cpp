#include "h4vdm/gop_record.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include <json.hpp>

#include "h4vdm/crc32.hpp"

namespace h4vdm {

namespace fs = std::filesystem;
using nlohmann::json;

int frame_type_id(FrameType t) {
  switch (t) {
    case FrameType::I: return 0;
    case FrameType::P: return 1;
    case FrameType::B: return 2;
  }
  return -1;
}

void validate_record(const GopRecord& rec) {
  if (rec.frame_count < 1) throw FormatError("frame_count must be positive");
  if (rec.height < 1 || rec.width < 1) throw FormatError("frame dims must be positive");
  if (rec.frame_types.size() != size_t(rec.frame_count))
    throw FormatError("frame_types length != frame_count");
  if (rec.frame_types[0] != FrameType::I) throw FormatError("first frame of a GOP must be I");
  size_t px = size_t(rec.frame_count) * rec.height * rec.width * 3;
  if (rec.frames.size() != px) throw FormatError("frames buffer has wrong size");
  size_t mb = size_t(rec.frame_count) * rec.mb_rows() * rec.mb_cols();
  if (rec.mb_types.size() != mb) throw FormatError("mb_types buffer has wrong size");
  if (rec.luma_qp.size() != mb) throw FormatError("luma_qp buffer has wrong size");
  for (uint8_t q : rec.luma_qp)
    if (q > 51) throw FormatError("luma_qp value out of 0..51");
  if (rec.qp_source != "macroblock" && rec.qp_source != "slice")
    throw FormatError("qp_source must be 'macroblock' or 'slice'");
}

namespace {

void write_binary(const fs::path& p, const std::vector<uint8_t>& data) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + p.string() + " for writing");
  f.write(reinterpret_cast<const char*>(data.data()),
          static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("short write to " + p.string());
}

std::vector<uint8_t> read_binary(const fs::path& p) {
  std::ifstream f(p, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + p.string());
  auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> data(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(data.data()), size);
  if (!f) throw IoError("short read from " + p.string());
  return data;
}

std::string buffer_crc(const std::vector<uint8_t>& data) {
  return crc32_hex(data.data(), data.size());
}

}  // namespace

void write_record(const fs::path& dir, const GopRecord& rec) {
  validate_record(rec);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  json manifest;
  manifest["format_version"] = 1;
  manifest["device_id"] = rec.device_id;
  manifest["video_id"] = rec.video_id;
  manifest["gop_index"] = rec.gop_index;
  manifest["frame_count"] = rec.frame_count;
  manifest["height"] = rec.height;
  manifest["width"] = rec.width;
  manifest["qp_source"] = rec.qp_source;
  json types = json::array();
  for (FrameType t : rec.frame_types) types.push_back(std::string(1, h264::frame_type_char(t)));
  manifest["frame_types"] = types;
  manifest["checksums"] = {{"frames.u8", buffer_crc(rec.frames)},
                           {"mb_types.u8", buffer_crc(rec.mb_types)},
                           {"luma_qp.u8", buffer_crc(rec.luma_qp)}};

  write_binary(dir / "frames.u8", rec.frames);
  write_binary(dir / "mb_types.u8", rec.mb_types);
  write_binary(dir / "luma_qp.u8", rec.luma_qp);
  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  if (!mf) throw IoError("cannot write manifest in " + dir.string());
  mf << manifest.dump(2) << "\n";
}

GopRecord load_record(const fs::path& dir, const RecordRequirements& req) {
  fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw FormatError("missing manifest.json in " + dir.string());
  std::ifstream mf(mpath);
  if (!mf) throw IoError("cannot open " + mpath.string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("invalid manifest JSON in " + dir.string() + ": " + e.what());
  }

  GopRecord rec;
  try {
    if (manifest.at("format_version").get<int>() != 1)
      throw FormatError("unsupported format_version in " + dir.string());
    rec.device_id = manifest.at("device_id").get<std::string>();
    rec.video_id = manifest.at("video_id").get<std::string>();
    rec.gop_index = manifest.at("gop_index").get<int>();
    rec.frame_count = manifest.at("frame_count").get<int>();
    rec.height = manifest.at("height").get<int>();
    rec.width = manifest.at("width").get<int>();
    rec.qp_source = manifest.value("qp_source", "macroblock");
    for (const auto& t : manifest.at("frame_types")) {
      std::string s = t.get<std::string>();
      if (s.size() != 1) throw FormatError("bad frame type entry");
      rec.frame_types.push_back(h264::frame_type_from_char(s[0]));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest schema violation in " + dir.string() + ": " + e.what());
  }

  rec.frames = read_binary(dir / "frames.u8");
  rec.mb_types = read_binary(dir / "mb_types.u8");
  rec.luma_qp = read_binary(dir / "luma_qp.u8");
  validate_record(rec);

  try {
    const json& sums = manifest.at("checksums");
    if (sums.at("frames.u8").get<std::string>() != buffer_crc(rec.frames))
      throw ChecksumMismatch("frames.u8 checksum mismatch in " + dir.string());
    if (sums.at("mb_types.u8").get<std::string>() != buffer_crc(rec.mb_types))
      throw ChecksumMismatch("mb_types.u8 checksum mismatch in " + dir.string());
    if (sums.at("luma_qp.u8").get<std::string>() != buffer_crc(rec.luma_qp))
      throw ChecksumMismatch("luma_qp.u8 checksum mismatch in " + dir.string());
  } catch (const json::exception& e) {
    throw FormatError("checksums missing in " + dir.string() + ": " + e.what());
  }

  if (req.min_frames > 0 && rec.frame_count < req.min_frames)
    throw ShortGop(dir.string() + ": " + std::to_string(rec.frame_count) + " frames < L=" +
                   std::to_string(req.min_frames));
  if ((req.min_height > 0 && rec.height < req.min_height) ||
      (req.min_width > 0 && rec.width < req.min_width))
    throw SmallFrame(dir.string() + ": " + std::to_string(rec.height) + "x" +
                     std::to_string(rec.width) + " smaller than required crop");
  return rec;
}

std::vector<fs::path> scan_store(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().filename() == "manifest.json")
      out.push_back(e.path().parent_path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<uint8_t> unpack_mb_grid(std::span<const uint8_t> grid, int grid_rows, int grid_cols,
                                    int hf, int wf) {
  if (grid_rows != (hf + 15) / 16 || grid_cols != (wf + 15) / 16)
    throw DimensionMismatch("mb grid dims do not match frame dims");
  if (grid.size() != size_t(grid_rows) * grid_cols)
    throw DimensionMismatch("mb grid buffer has wrong size");
  std::vector<uint8_t> out(size_t(hf) * wf);
  for (int r = 0; r < hf; ++r) {
    const uint8_t* grow = grid.data() + size_t(r / 16) * grid_cols;
    uint8_t* orow = out.data() + size_t(r) * wf;
    for (int c = 0; c < wf; ++c) orow[c] = grow[c / 16];
  }
  return out;
}

std::vector<size_t> sample_gop_indices(size_t count, std::span<const int> frame_counts, int k,
                                       int min_frames, uint64_t seed) {
  std::vector<size_t> eligible;
  for (size_t i = 0; i < count; ++i)
    if (frame_counts[i] >= min_frames) eligible.push_back(i);
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates: the first k slots become the sample
  size_t take = std::min(size_t(std::max(k, 0)), eligible.size());
  for (size_t i = 0; i < take; ++i) {
    size_t j = i + rng() % (eligible.size() - i);
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(take);
  return eligible;
}

std::vector<GopRecord> sample_gops(const std::vector<GopRecord>& records, int k, int min_frames,
                                   uint64_t seed) {
  std::vector<int> counts(records.size());
  for (size_t i = 0; i < records.size(); ++i) counts[i] = records[i].frame_count;
  std::vector<GopRecord> out;
  for (size_t i : sample_gop_indices(records.size(), counts, k, min_frames, seed))
    out.push_back(records[i]);
  return out;
}

void cross_validate_frame_types(const GopRecord& rec, const std::vector<FrameType>& parsed) {
  if (rec.frame_types.size() != parsed.size())
    throw FormatError("record/bitstream frame count mismatch: " +
                      std::to_string(rec.frame_types.size()) + " vs " +
                      std::to_string(parsed.size()));
  for (size_t i = 0; i < parsed.size(); ++i) {
    if (rec.frame_types[i] != parsed[i])
      throw FormatError("frame type mismatch at frame " + std::to_string(i) + ": record " +
                        std::string(1, h264::frame_type_char(rec.frame_types[i])) +
                        " vs bitstream " + std::string(1, h264::frame_type_char(parsed[i])));
  }
}

}  // namespace h4vdm
