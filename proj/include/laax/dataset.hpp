#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "laax/io.hpp"
#include "laax/supervision.hpp"

namespace laax {

/// One labelled image as stored on disk. `original` is the unmanipulated
/// source of a pseudo-fake and is empty when no pairing exists.
struct LabeledImage {
  Tensor image;
  Tensor mask;      // M, [D, D]
  Tensor boundary;  // B, [D, D]
  Tensor original;
  int label = 0;
  std::uint64_t identity = 0;
};

inline LabeledImage to_labeled(const PseudoFake& pf, std::uint64_t identity) {
  return {pf.image, pf.mask.M, pf.mask.B, pf.original, static_cast<int>(pf.label), identity};
}

/// Sample file: arrays image, M, B, label (and original when paired).
inline void save_sample(const LabeledImage& s, const fs::path& path) {
  ArrayBundle b;
  b.meta = {{"kind", "sample"}, {"identity", s.identity}};
  b.arrays["image"] = s.image;
  b.arrays["M"] = s.mask;
  b.arrays["B"] = s.boundary;
  b.arrays["label"] = Tensor::scalar(static_cast<double>(s.label));
  if (!s.original.empty()) b.arrays["original"] = s.original;
  save_bundle(b, path);
}

inline LabeledImage load_sample(const fs::path& path) {
  const ArrayBundle b = load_bundle(path);
  LabeledImage s;
  s.image = b.at("image");
  s.mask = b.at("M");
  s.boundary = b.at("B");
  s.label = static_cast<int>(b.at("label").item());
  require(s.label == 0 || s.label == 1, Errc::io, "bad label in " + path.string());
  if (b.has("original")) s.original = b.at("original");
  if (b.meta.contains("identity")) s.identity = b.meta["identity"].get<std::uint64_t>();
  return s;
}

/// manifest.json: {"samples": [{"path", "label", "identity"}], "size", "channels"}.
inline void write_manifest(const fs::path& dir, const std::vector<std::pair<std::string, LabeledImage>>& entries) {
  json j;
  j["samples"] = json::array();
  for (const auto& [path, s] : entries)
    j["samples"].push_back({{"path", path}, {"label", s.label}, {"identity", s.identity}});
  if (!entries.empty()) {
    j["channels"] = entries.front().second.image.size(0);
    j["size"] = entries.front().second.image.size(1);
  }
  std::ofstream os(dir / "manifest.json");
  require(static_cast<bool>(os), Errc::io, "cannot write manifest in " + dir.string());
  os << j.dump(2) << "\n";
}

inline std::vector<LabeledImage> load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  require(fs::exists(mpath), Errc::io, "no manifest.json in '" + dir.string() + "'");
  std::ifstream is(mpath);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(Errc::io, "bad manifest " + mpath.string() + ": " + e.what());
  }
  std::vector<LabeledImage> out;
  for (const auto& e : j.at("samples")) out.push_back(load_sample(dir / e.at("path").get<std::string>()));
  require(!out.empty(), Errc::io, "empty dataset in '" + dir.string() + "'");
  return out;
}

struct SynthesizeRequest {
  std::size_t n = 16;
  SynthesisMode mode = SynthesisMode::sbi;
  std::uint64_t seed = 0;
  std::size_t size = 64;
  std::size_t channels = 3;
  /// For sbi/bi: emit the real source of every fake too (n/2 pairs).
  bool paired = true;
  SynthesisParams params;
};

/// Writes `n` samples plus manifest.json into `dir`. File names are
/// sample_XXXXX.laax.
inline std::vector<LabeledImage> synthesize_dataset(const fs::path& dir, SynthesizeRequest req) {
  require(req.n > 0, Errc::configuration, "n must be positive");
  fs::create_directories(dir);
  req.params.mode = req.mode;
  const bool pairs = req.mode != SynthesisMode::real && req.paired;
  const std::size_t faces = pairs ? (req.n + 1) / 2 : req.n;
  const std::size_t pool_n = req.mode == SynthesisMode::bi ? std::max<std::size_t>(faces, 2) : faces;
  std::vector<FaceSample> pool;
  for (std::size_t i = 0; i < pool_n; ++i) pool.push_back(generate_toy_face(derive_seed(req.seed, 0xFACE, i), {req.channels, req.size}));
  std::vector<std::pair<std::string, LabeledImage>> entries;
  std::vector<LabeledImage> out;
  auto emit = [&](LabeledImage s) {
    std::ostringstream name;
    name << "sample_" << std::setw(5) << std::setfill('0') << entries.size() << ".laax";
    save_sample(s, dir / name.str());
    entries.emplace_back(name.str(), s);
    out.push_back(std::move(s));
  };
  for (std::size_t i = 0; i < faces && out.size() < req.n; ++i) {
    Rng rng(derive_seed(req.seed, 0x5A, i));
    if (pairs) emit(to_labeled(synthesize_pseudo_fake(pool[i], SynthesisParams{SynthesisMode::real, {}, {}}, rng), pool[i].identity_seed));
    if (out.size() < req.n)
      emit(to_labeled(synthesize_pseudo_fake(pool[i], req.params, rng, pool), pool[i].identity_seed));
  }
  write_manifest(dir, entries);
  return out;
}

/// Supervision bundle: H, C, S, p_s (row, col or empty), label.
inline ArrayBundle supervision_bundle(const HeatmapGT& h, const ConsistencyGT& c, const PatchAttentionGT& s, int label) {
  ArrayBundle b;
  b.meta = {{"kind", "supervision"}};
  b.arrays["H"] = h.H;
  b.arrays["C"] = c.C;
  b.arrays["S"] = s.S;
  b.arrays["p_s"] = c.anchor ? Tensor({2}, {static_cast<double>(c.anchor->row), static_cast<double>(c.anchor->col)})
                             : Tensor({0});
  b.arrays["label"] = Tensor::scalar(static_cast<double>(label));
  return b;
}

}  // namespace laax
