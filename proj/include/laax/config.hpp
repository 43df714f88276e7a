#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "laax/efpn.hpp"
#include "laax/laa_former.hpp"
#include "laax/losses.hpp"
#include "laax/supervision.hpp"
#include "laax/synthesis.hpp"

namespace laax {

enum class ModelFamily { laa_net, laa_former };

inline std::string to_string(ModelFamily f) { return f == ModelFamily::laa_net ? "laa_net" : "laa_former"; }

/// Everything a training run depends on. Loaded from a flat `key = value`
/// file; `#` starts a comment. See `RunConfig::keys()` for the accepted keys.
struct RunConfig {
  ModelFamily family = ModelFamily::laa_net;
  std::string preset = "tiny";
  SynthesisMode synthesis = SynthesisMode::sbi;
  std::size_t image_size = 64;
  std::size_t train_identities = 256;  // each yields one real + one pseudo-fake per epoch
  std::size_t val_identities = 128;
  std::size_t epochs = 20;
  std::size_t pretrain_epochs = 8;  // leading classification-only epochs
  std::size_t freeze_epochs = 6;    // then backbone frozen, heads trained on the full loss
  std::size_t batch_size = 8;
  double lr_start = 1e-4;
  double lr_peak = 5e-4;
  double lr_end = 1e-5;
  double warmup_fraction = 0.25;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  LossConfig loss;
  HeatmapParams heatmap;
  double patch_sigma = 1.0;
  EfpnConfig efpn;
  bool use_heatmap = true;
  bool use_consistency = true;
  bool use_l2att = true;
  std::string dataset;  // empty -> procedural toy faces
  std::string out_dir = "run";
  AugmentParams augment;
  DeformParams deform;

  static const std::map<std::string, std::string>& keys() {
    static const std::map<std::string, std::string> k = {
        {"model_family", "laa_net | laa_former"},
        {"preset", "architecture preset: tiny (both), small | base (laa_former)"},
        {"synthesis", "pseudo-fake mode: sbi | bi"},
        {"image_size", "input side D"},
        {"train_identities", "training faces; each gives a real and a pseudo-fake sample per epoch"},
        {"val_identities", "held-out faces for per-epoch validation AUC"},
        {"epochs", "number of epochs (0 writes the initial checkpoint only)"},
        {"pretrain_epochs", "leading epochs trained on the classification loss alone (backbone pretraining)"},
        {"freeze_epochs", "epochs after pretraining with the backbone frozen"},
        {"batch_size", "samples per optimizer step"},
        {"lr_start", "learning rate at step 0"},
        {"lr_peak", "learning rate at the end of the warm ramp"},
        {"lr_end", "learning rate at the final step"},
        {"warmup_fraction", "fraction of steps spent ramping lr_start -> lr_peak"},
        {"weight_decay", "decoupled weight decay"},
        {"seed", "master seed"},
        {"gamma", "focal exponent"},
        {"lambda1", "heatmap loss weight"},
        {"lambda2", "consistency loss weight"},
        {"lambda_att", "L2-Att loss weight"},
        {"label_smoothing", "classification label smoothing in [0, 0.5)"},
        {"iou_threshold", "heatmap radius IoU threshold t"},
        {"sigma_ratio", "heatmap sigma = ratio * radius"},
        {"patch_sigma", "patch attention target sigma (patch units)"},
        {"gamma_w", "E-FPN gating exponent"},
        {"efpn_mode", "enhanced | plain"},
        {"use_heatmap", "train the heatmap head (true | false)"},
        {"use_consistency", "train the consistency head (true | false)"},
        {"use_l2att", "train the L2-Att head (true | false)"},
        {"dataset", "directory of real faces (*.ppm + *.txt landmarks); empty for toy faces"},
        {"out_dir", "output directory for checkpoint.laax and metrics.jsonl"},
        {"augment_brightness_min", "SBI brightness shift lower magnitude"},
        {"augment_brightness_max", "SBI brightness shift upper magnitude"},
        {"augment_channel_shift", "SBI per-channel shift bound"},
        {"augment_contrast", "SBI contrast jitter bound"},
        {"augment_translate", "SBI translation bound (pixels)"},
        {"augment_scale", "SBI scale jitter bound"},
        {"deform_magnitude", "hull vertex jitter relative to hull diameter"},
        {"mask_blur", "hull mask Gaussian blur width (odd)"},
        {"mask_levels", "quantization levels of the blending mask M (0 = full precision)"},
    };
    return k;
  }

  void set(const std::string& key, const std::string& value);

  /// Defaults tuned per family. The transformer trains at batch 32 with a
  /// shorter warm ramp and a higher peak rate.
  static RunConfig for_family(ModelFamily f) {
    RunConfig rc;
    rc.family = f;
    if (f == ModelFamily::laa_former) {
      rc.batch_size = 32;
      rc.lr_peak = 1e-3;
      rc.lr_end = 1e-4;
      rc.warmup_fraction = 0.1;
    }
    return rc;
  }

  void validate() const {
    require(pretrain_epochs + freeze_epochs <= epochs, Errc::configuration,
            "pretrain_epochs + freeze_epochs must not exceed epochs");
    require(image_size > 0 && batch_size > 0, Errc::configuration, "image_size and batch_size must be positive");
    require(train_identities > 0 && val_identities > 0, Errc::configuration, "identity counts must be positive");
    require(synthesis != SynthesisMode::real, Errc::configuration, "training synthesis must be sbi or bi");
    require(lr_start >= 0 && lr_peak > 0 && lr_end >= 0, Errc::configuration, "learning rates must be non-negative");
    require(warmup_fraction >= 0 && warmup_fraction <= 1, Errc::configuration, "warmup_fraction must lie in [0, 1]");
    require(heatmap.iou_threshold > 0 && heatmap.iou_threshold <= 1, Errc::configuration, "iou_threshold in (0, 1]");
    require(patch_sigma > 0, Errc::configuration, "patch_sigma must be positive");
    loss.validate();
    if (family == ModelFamily::laa_net)
      require(preset == "tiny", Errc::configuration, "laa_net supports the 'tiny' preset only");
    else
      LaaFormerConfig::from_preset(preset);
  }

  json to_json() const;
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  require(ec == std::errc() && p == end, Errc::configuration, "bad value for '" + key + "': '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw Error(Errc::configuration, "bad boolean for '" + key + "': '" + v + "'");
}

}  // namespace detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  using detail::parse_bool;
  auto num = [&](auto& field) { field = detail::parse_number<std::remove_reference_t<decltype(field)>>(key, value); };
  if (key == "model_family") {
    if (value == "laa_net") family = ModelFamily::laa_net;
    else if (value == "laa_former") family = ModelFamily::laa_former;
    else throw Error(Errc::configuration, "unknown model_family '" + value + "'");
  } else if (key == "preset") preset = value;
  else if (key == "synthesis") {
    if (value == "sbi") synthesis = SynthesisMode::sbi;
    else if (value == "bi") synthesis = SynthesisMode::bi;
    else throw Error(Errc::configuration, "synthesis must be sbi or bi, got '" + value + "'");
  } else if (key == "image_size") num(image_size);
  else if (key == "train_identities") num(train_identities);
  else if (key == "val_identities") num(val_identities);
  else if (key == "epochs") num(epochs);
  else if (key == "pretrain_epochs") num(pretrain_epochs);
  else if (key == "freeze_epochs") num(freeze_epochs);
  else if (key == "batch_size") num(batch_size);
  else if (key == "lr_start") num(lr_start);
  else if (key == "lr_peak") num(lr_peak);
  else if (key == "lr_end") num(lr_end);
  else if (key == "warmup_fraction") num(warmup_fraction);
  else if (key == "weight_decay") num(weight_decay);
  else if (key == "seed") num(seed);
  else if (key == "gamma") num(loss.gamma);
  else if (key == "lambda1") num(loss.lambda1);
  else if (key == "lambda2") num(loss.lambda2);
  else if (key == "lambda_att") num(loss.lambda_att);
  else if (key == "label_smoothing") num(loss.label_smoothing);
  else if (key == "iou_threshold") num(heatmap.iou_threshold);
  else if (key == "sigma_ratio") num(heatmap.sigma_ratio);
  else if (key == "patch_sigma") num(patch_sigma);
  else if (key == "gamma_w") num(efpn.gamma_w);
  else if (key == "efpn_mode") {
    if (value == "enhanced") efpn.mode = FusionMode::enhanced;
    else if (value == "plain") efpn.mode = FusionMode::plain;
    else throw Error(Errc::configuration, "efpn_mode must be enhanced or plain");
  } else if (key == "use_heatmap") use_heatmap = parse_bool(key, value);
  else if (key == "use_consistency") use_consistency = parse_bool(key, value);
  else if (key == "use_l2att") use_l2att = parse_bool(key, value);
  else if (key == "dataset") dataset = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "augment_brightness_min") num(augment.brightness_min);
  else if (key == "augment_brightness_max") num(augment.brightness_max);
  else if (key == "augment_channel_shift") num(augment.channel_shift);
  else if (key == "augment_contrast") num(augment.contrast);
  else if (key == "augment_translate") num(augment.translate_px);
  else if (key == "augment_scale") num(augment.scale);
  else if (key == "deform_magnitude") num(deform.magnitude);
  else if (key == "mask_blur") num(deform.blur_width);
  else if (key == "mask_levels") num(deform.levels);
  else throw Error(Errc::configuration, "unknown config key '" + key + "'");
}

inline json RunConfig::to_json() const {
  json j;
  j["model_family"] = to_string(family);
  j["preset"] = preset;
  j["synthesis"] = synthesis == SynthesisMode::bi ? "bi" : "sbi";
  j["image_size"] = image_size;
  j["train_identities"] = train_identities;
  j["val_identities"] = val_identities;
  j["epochs"] = epochs;
  j["pretrain_epochs"] = pretrain_epochs;
  j["freeze_epochs"] = freeze_epochs;
  j["batch_size"] = batch_size;
  j["lr_start"] = lr_start;
  j["lr_peak"] = lr_peak;
  j["lr_end"] = lr_end;
  j["warmup_fraction"] = warmup_fraction;
  j["weight_decay"] = weight_decay;
  j["seed"] = seed;
  j["gamma"] = loss.gamma;
  j["lambda1"] = loss.lambda1;
  j["lambda2"] = loss.lambda2;
  j["lambda_att"] = loss.lambda_att;
  j["label_smoothing"] = loss.label_smoothing;
  j["iou_threshold"] = heatmap.iou_threshold;
  j["sigma_ratio"] = heatmap.sigma_ratio;
  j["patch_sigma"] = patch_sigma;
  j["gamma_w"] = efpn.gamma_w;
  j["efpn_mode"] = efpn.mode == FusionMode::plain ? "plain" : "enhanced";
  j["use_heatmap"] = use_heatmap;
  j["use_consistency"] = use_consistency;
  j["use_l2att"] = use_l2att;
  j["dataset"] = dataset;
  j["out_dir"] = out_dir;
  j["augment_brightness_min"] = augment.brightness_min;
  j["augment_brightness_max"] = augment.brightness_max;
  j["augment_channel_shift"] = augment.channel_shift;
  j["augment_contrast"] = augment.contrast;
  j["augment_translate"] = augment.translate_px;
  j["augment_scale"] = augment.scale;
  j["deform_magnitude"] = deform.magnitude;
  j["mask_blur"] = deform.blur_width;
  j["mask_levels"] = deform.levels;
  return j;
}

/// Applies `key = value` lines from a stream on top of `base`.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, Errc::configuration, "line " + std::to_string(lineno) + ": expected key = value");
    base.set(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), Errc::configuration, "cannot read config '" + path.string() + "'");
  return parse_config(in);
}

/// Rebuilds a config from its `to_json()` form.
inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    if (v.is_string()) c.set(k, v.get<std::string>());
    else if (v.is_boolean()) c.set(k, v.get<bool>() ? "true" : "false");
    else if (v.is_number_unsigned()) c.set(k, std::to_string(v.get<std::uint64_t>()));
    else if (v.is_number_integer()) c.set(k, std::to_string(v.get<std::int64_t>()));
    else {
      std::ostringstream os;
      os.precision(17);
      os << v.get<double>();
      c.set(k, os.str());
    }
  }
  return c;
}

}  // namespace laax
