#include "h4vdm/pairs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "h4vdm/rng.hpp"

namespace h4vdm {

std::string ref_key(const GopRef& r) {
  return r.device_id + "/" + r.video_id + "/" + std::to_string(r.gop_index);
}

namespace {

std::string pair_key(const GopRef& a, const GopRef& b) {
  std::string ka = ref_key(a), kb = ref_key(b);
  if (kb < ka) std::swap(ka, kb);
  return ka + "|" + kb;
}

int round_half_up(double x) { return int(std::floor(x + 0.5)); }

// Stratified uniform pick of round_half_up(fraction * count) indices per
// label; returned flags align with the input order.
std::vector<bool> pick_stratified(const std::vector<PairSample>& pairs, double fraction,
                                  uint64_t seed) {
  std::vector<bool> picked(pairs.size(), false);
  for (int label = 0; label <= 1; ++label) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < pairs.size(); ++i)
      if (pairs[i].label == label) idx.push_back(i);
    Rng rng(mix_seed(seed, uint64_t(label)));
    rng.shuffle(idx.begin(), idx.end());
    size_t take = size_t(round_half_up(fraction * double(idx.size())));
    take = std::min(take, idx.size());
    for (size_t i = 0; i < take; ++i) picked[idx[i]] = true;
  }
  return picked;
}

}  // namespace

std::vector<PairSample> build_pairs(const std::map<std::string, std::vector<GopRef>>& gops_by_device,
                                    int n0, int n1, uint64_t seed) {
  std::vector<PairSample> out;
  std::unordered_set<std::string> used;
  Rng rng(seed);

  std::vector<const std::string*> devices;
  for (const auto& [dev, refs] : gops_by_device) {
    (void)refs;
    devices.push_back(&dev);
  }

  for (const auto* di : devices) {
    const auto& gi = gops_by_device.at(*di);
    for (const auto* dj : devices) {
      const auto& gj = gops_by_device.at(*dj);
      bool same = (*di == *dj);
      int quota = same ? n1 : n0;
      if (quota <= 0) continue;

      std::vector<std::pair<size_t, size_t>> candidates;
      if (same) {
        for (size_t u = 0; u < gi.size(); ++u)
          for (size_t v = u + 1; v < gi.size(); ++v) candidates.emplace_back(u, v);
      } else {
        for (size_t u = 0; u < gi.size(); ++u)
          for (size_t v = 0; v < gj.size(); ++v) {
            if (used.count(pair_key(gi[u], gj[v]))) continue;
            candidates.emplace_back(u, v);
          }
      }
      if (candidates.size() < size_t(quota))
        throw InsufficientPairs("devices (" + *di + ", " + *dj + "): need " +
                                std::to_string(quota) + " pairs, only " +
                                std::to_string(candidates.size()) + " available");
      rng.shuffle(candidates.begin(), candidates.end());
      for (int taken = 0; taken < quota; ++taken) {
        const auto& [u, v] = candidates[size_t(taken)];
        PairSample p{gi[u], gj[v], same ? 1 : 0};
        used.insert(pair_key(p.a, p.b));
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<PairSample> subsample(const std::vector<PairSample>& pairs, double fraction,
                                  uint64_t seed) {
  std::vector<bool> picked = pick_stratified(pairs, fraction, seed);
  std::vector<PairSample> out;
  for (size_t i = 0; i < pairs.size(); ++i)
    if (picked[i]) out.push_back(pairs[i]);
  return out;
}

std::pair<std::vector<PairSample>, std::vector<PairSample>> carve_validation(
    const std::vector<PairSample>& pairs, double fraction, uint64_t seed) {
  std::vector<bool> picked = pick_stratified(pairs, fraction, seed);
  std::pair<std::vector<PairSample>, std::vector<PairSample>> res;
  for (size_t i = 0; i < pairs.size(); ++i)
    (picked[i] ? res.first : res.second).push_back(pairs[i]);
  return res;
}

DeviceSplit make_split(const std::vector<std::string>& all_devices,
                       const std::vector<std::string>& s2, const std::string& name) {
  DeviceSplit split;
  split.name = name;
  for (const auto& d : s2)
    if (std::find(all_devices.begin(), all_devices.end(), d) == all_devices.end())
      throw UnknownDevice("split device '" + d + "' is not in the device set");
  split.s2 = s2;
  for (const auto& d : all_devices)
    if (std::find(s2.begin(), s2.end(), d) == s2.end()) split.s1.push_back(d);
  return split;
}

DeviceSplit split_preset(const std::string& name) {
  static const std::map<std::string, std::vector<int>> kS2{
      {"D1", {1, 2, 4, 5, 6, 14, 17, 18, 19, 21, 22, 23, 27, 28, 30, 32, 35}},
      {"D2", {1, 2, 4, 11, 14, 15, 17, 18, 19, 20, 21, 23, 26, 30, 32, 33, 35}},
      {"D3", {4, 5, 6, 10, 11, 13, 14, 16, 17, 19, 21, 22, 23, 30, 31, 32, 35}},
      {"D4", {3, 4, 6, 8, 13, 17, 19, 20, 21, 22, 23, 26, 29, 30, 31, 32, 34}},
      {"D5", {1, 4, 7, 10, 13, 16, 19, 22, 25, 28, 31, 34}},
      {"D6", {2, 5, 8, 11, 14, 17, 20, 23, 26, 29, 32, 35}},
      {"D7", {3, 6, 9, 12, 15, 18, 21, 24, 27, 30, 33}},
  };
  auto it = kS2.find(name);
  if (it == kS2.end()) throw ConfigError("unknown split preset: " + name);
  std::vector<std::string> all, s2;
  for (int i = 1; i <= 35; ++i) all.push_back(std::to_string(i));
  for (int i : it->second) s2.push_back(std::to_string(i));
  return make_split(all, s2, name);
}

namespace {

nlohmann::json ref_to_json(const GopRef& r) {
  return {{"device", r.device_id}, {"video", r.video_id}, {"gop", r.gop_index}};
}

GopRef ref_from_json(const nlohmann::json& j) {
  GopRef r;
  r.device_id = j.at("device").get<std::string>();
  r.video_id = j.at("video").get<std::string>();
  r.gop_index = j.at("gop").get<int>();
  return r;
}

}  // namespace

void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairSample>& pairs,
                         const nlohmann::json& header_extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  nlohmann::json header{{"type", "pair_manifest"}, {"format_version", 1}};
  for (auto& [k, v] : header_extra.items()) header[k] = v;
  out << header.dump() << "\n";
  for (const auto& p : pairs) {
    nlohmann::json j{{"a", ref_to_json(p.a)}, {"b", ref_to_json(p.b)}, {"label", p.label}};
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

PairManifest load_pair_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  PairManifest m;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      if (lineno == 1) {
        if (j.value("type", "") != "pair_manifest")
          throw FormatError(path.string() + ": missing pair_manifest header");
        m.header = j;
        continue;
      }
      PairSample p;
      p.a = ref_from_json(j.at("a"));
      p.b = ref_from_json(j.at("b"));
      p.label = j.at("label").get<int>();
      if (p.label != 0 && p.label != 1)
        throw FormatError(path.string() + ":" + std::to_string(lineno) + ": label must be 0 or 1");
      m.pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (m.header.is_null()) throw FormatError(path.string() + ": empty manifest");
  return m;
}

void write_split(const std::filesystem::path& path, const DeviceSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  nlohmann::json j{{"dataset_name", split.name}, {"s1", split.s1}, {"s2", split.s2}};
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

DeviceSplit load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DeviceSplit s;
    s.name = j.value("dataset_name", "");
    s.s1 = j.at("s1").get<std::vector<std::string>>();
    s.s2 = j.at("s2").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace h4vdm
