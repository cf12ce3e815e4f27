#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "h4vdm/errors.hpp"

namespace h4vdm {

struct GopRef {
  std::string device_id, video_id;
  int gop_index = 0;

  bool operator==(const GopRef& o) const = default;
};

// Canonical "device/video/index" key.
std::string ref_key(const GopRef& r);

struct PairSample {
  GopRef a, b;
  int label = 0;  // 1 = same device
};

struct DeviceSplit {
  std::string name;
  std::vector<std::string> s1;  // training devices
  std::vector<std::string> s2;  // testing devices
};

// Pairing procedure: iterate ordered device pairs (i, j) over the sorted
// device set; for i != j sample n0 unordered-unique cross-device (label-0)
// pairs, for i == j sample n1 within-device (label-1) pairs with distinct
// GOPs.  Uniqueness is global over unordered pair identity.  Deterministic
// for a given seed.  Throws InsufficientPairs when a quota cannot be met.
std::vector<PairSample> build_pairs(const std::map<std::string, std::vector<GopRef>>& gops_by_device,
                                    int n0, int n1, uint64_t seed);

// Uniform per-label subsample without replacement; per-label target counts
// round half-up.  Preserves input order of the kept pairs.
std::vector<PairSample> subsample(const std::vector<PairSample>& pairs, double fraction,
                                  uint64_t seed);

// Stratified removal of `fraction` of the pairs for validation; returns
// (validation, remainder) whose disjoint union is the input.
std::pair<std::vector<PairSample>, std::vector<PairSample>> carve_validation(
    const std::vector<PairSample>& pairs, double fraction, uint64_t seed);

// S1 = all_devices \ s2 (input order preserved).  Throws UnknownDevice if
// s2 contains an id not in all_devices.
DeviceSplit make_split(const std::vector<std::string>& all_devices,
                       const std::vector<std::string>& s2, const std::string& name = "");

// The seven published splits (S2 verbatim; device ids "1".."35").
DeviceSplit split_preset(const std::string& name);

// ------------------------------------------------------------- file formats

// JSON-lines: a header object recording the generation parameters followed
// by one {a:{device,video,gop}, b:{...}, label} object per pair.
void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairSample>& pairs,
                         const nlohmann::json& header_extra);

struct PairManifest {
  nlohmann::json header;
  std::vector<PairSample> pairs;
};
PairManifest load_pair_manifest(const std::filesystem::path& path);

void write_split(const std::filesystem::path& path, const DeviceSplit& split);
DeviceSplit load_split(const std::filesystem::path& path);

}  // namespace h4vdm
