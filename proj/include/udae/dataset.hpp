#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "udae/degrade.hpp"
#include "udae/image_io.hpp"
#include "udae/resize.hpp"
#include "udae/tensor.hpp"

namespace udae {

struct ImagePair {
  Tensor clean;
  Tensor distorted;
  DegradationParams params;
  std::string id;
};

struct ManifestEntry {
  std::string id;
  std::string split; // train|val|test
  DegradationParams params;
};

struct DatasetManifest {
  int version = 1;
  std::uint64_t seed = 0;
  std::string preset;
  std::int64_t image_size = 0;
  std::vector<ManifestEntry> entries;
  std::vector<std::string> skipped_sources;
};

// FNV-1a over the id string; the split is a pure function of the id, so
// regeneration never reshuffles membership.
inline std::uint64_t fnv1a64(const std::string &s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// train/val/test = 80/10/10
inline std::string split_of(const std::string &id) {
  const std::uint64_t bucket = fnv1a64(id) % 10;
  if (bucket < 8)
    return "train";
  return bucket == 8 ? "val" : "test";
}

namespace dataset_detail {

inline nlohmann::ordered_json params_to_json(const DegradationParams &p) {
  nlohmann::ordered_json j;
  j["beta"] = {p.beta[0], p.beta[1], p.beta[2]};
  j["ambient"] = {p.ambient[0], p.ambient[1], p.ambient[2]};
  j["depth_scale"] = p.depth_scale;
  j["contrast_loss"] = p.contrast_loss;
  j["noise_sigma"] = p.noise_sigma;
  j["seed"] = p.seed;
  return j;
}

inline DegradationParams params_from_json(const nlohmann::json &j) {
  DegradationParams p;
  for (std::size_t c = 0; c < 3; ++c) {
    p.beta[c] = j.at("beta").at(c).get<double>();
    p.ambient[c] = j.at("ambient").at(c).get<double>();
  }
  p.depth_scale = j.at("depth_scale").get<double>();
  p.contrast_loss = j.at("contrast_loss").get<double>();
  p.noise_sigma = j.at("noise_sigma").get<double>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

} // namespace dataset_detail

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest &m) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["preset"] = m.preset;
  j["image_size"] = m.image_size;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto &e : m.entries) {
    nlohmann::ordered_json je;
    je["id"] = e.id;
    je["split"] = e.split;
    je["params"] = dataset_detail::params_to_json(e.params);
    j["entries"].push_back(std::move(je));
  }
  j["skipped_sources"] = m.skipped_sources;
  return j;
}

inline void save_manifest(const DatasetManifest &m, const std::filesystem::path &path) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::trunc);
  if (!f)
    throw std::runtime_error("save_manifest: cannot write " + path.string());
  f << manifest_to_json(m).dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f)
    throw std::runtime_error("load_manifest: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(f);
  DatasetManifest m;
  m.version = j.at("version").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.preset = j.at("preset").get<std::string>();
  m.image_size = j.value("image_size", std::int64_t{0});
  for (const auto &je : j.at("entries")) {
    ManifestEntry e;
    e.id = je.at("id").get<std::string>();
    e.split = je.at("split").get<std::string>();
    e.params = dataset_detail::params_from_json(je.at("params"));
    m.entries.push_back(std::move(e));
  }
  if (j.contains("skipped_sources"))
    m.skipped_sources = j.at("skipped_sources").get<std::vector<std::string>>();
  return m;
}

inline std::vector<std::filesystem::path> list_pngs(const std::filesystem::path &dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir))
    throw std::runtime_error("list_pngs: not a directory: " + dir.string());
  for (const auto &entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file())
      continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Writes `count` pairs as <id>_clean.png / <id>_distorted.png at size x size
// (area interpolation on downscale) plus a manifest.json describing params
// and split membership. Sources cycle when count exceeds the input set;
// unreadable sources are recorded and skipped.
inline DatasetManifest build_dataset(const std::filesystem::path &clean_dir,
                                     const std::filesystem::path &out_dir,
                                     std::int64_t count, std::int64_t size,
                                     Preset preset, std::uint64_t seed) {
  if (count < 1)
    throw std::invalid_argument("build_dataset: count must be >= 1");
  if (size < 1)
    throw std::invalid_argument("build_dataset: size must be >= 1");

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.preset = preset_name(preset);
  manifest.image_size = size;

  std::vector<Tensor> sources;
  for (const auto &path : list_pngs(clean_dir)) {
    try {
      sources.push_back(resize_area(to_tensor(load_png(path)), size, size));
    } catch (const std::exception &e) {
      std::fprintf(stderr, "warning: skipping unreadable image %s: %s\n",
                   path.string().c_str(), e.what());
      manifest.skipped_sources.push_back(path.filename().string());
    }
  }
  if (sources.empty())
    throw std::runtime_error("build_dataset: no decodable images in " + clean_dir.string());

  std::filesystem::create_directories(out_dir);
  for (std::int64_t i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "pair_%05lld", static_cast<long long>(i));
    const Tensor &clean = sources[static_cast<std::size_t>(i) % sources.size()];
    DegradationParams params = sample_params(mix_seed(seed, static_cast<std::uint64_t>(i)), preset);
    Tensor distorted = degrade(clean, params);
    save_png(from_tensor(clean), out_dir / (std::string(id) + "_clean.png"));
    save_png(from_tensor(distorted), out_dir / (std::string(id) + "_distorted.png"));
    manifest.entries.push_back({id, split_of(id), params});
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

// Loads the stored pairs for one split ("" loads everything).
inline std::vector<ImagePair> load_pairs(const std::filesystem::path &dataset_dir,
                                         const DatasetManifest &manifest,
                                         const std::string &split = "") {
  std::vector<ImagePair> pairs;
  for (const auto &e : manifest.entries) {
    if (!split.empty() && e.split != split)
      continue;
    ImagePair p;
    p.id = e.id;
    p.params = e.params;
    p.clean = to_tensor(load_png(dataset_dir / (e.id + "_clean.png")));
    p.distorted = to_tensor(load_png(dataset_dir / (e.id + "_distorted.png")));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

} // namespace udae
