#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "laax/config.hpp"
#include "laax/dataset.hpp"
#include "laax/laa_former.hpp"
#include "laax/laa_net.hpp"
#include "laax/losses.hpp"
#include "laax/metrics.hpp"
#include "laax/optim.hpp"

namespace laax {

inline LaaNetConfig laa_net_config(const RunConfig& rc) {
  LaaNetConfig c;
  c.image_size = rc.image_size;
  c.efpn = rc.efpn;
  return c;
}

inline LaaFormerConfig laa_former_config(const RunConfig& rc) {
  LaaFormerConfig c = LaaFormerConfig::from_preset(rc.preset);
  c.image_size = rc.image_size;
  return c;
}

/// Either model family behind one interface.
class Detector {
 public:
  Detector(const RunConfig& rc, std::uint64_t init_seed) : family_(rc.family) {
    if (family_ == ModelFamily::laa_net) net_ = std::make_unique<LaaNet>(laa_net_config(rc), init_seed);
    else former_ = std::make_unique<LaaFormer>(laa_former_config(rc), init_seed);
  }

  ModelFamily family() const noexcept { return family_; }
  LaaNet& net() { return *net_; }
  const LaaNet& net() const { return *net_; }
  LaaFormer& former() { return *former_; }
  const LaaFormer& former() const { return *former_; }

  std::size_t image_size() const { return net_ ? net_->config().image_size : former_->config().image_size; }
  std::size_t channels() const { return net_ ? net_->config().in_channels : former_->config().in_channels; }

  nn::ParamList parameters() const { return net_ ? net_->parameters() : former_->parameters(); }

  /// Feature extractor parameters: the CNN stages, or the ViT without its
  /// classification and L2-Att heads.
  static bool is_backbone(const std::string& name) {
    return name.starts_with("backbone.") || name.starts_with("embed.") || name.starts_with("encoder.") ||
           name.starts_with("norm.");
  }

  /// Classification logits with every auxiliary branch disabled.
  Var logits(const Var& images) const {
    return net_ ? net_->classify(images).logit : former_->forward(images, false).logit;
  }

  /// sigmoid(logit) per image, computed in chunks without recording a graph.
  std::vector<double> scores(const std::vector<Tensor>& images, std::size_t chunk = 64) const {
    ag::NoGradGuard guard;
    std::vector<double> out;
    for (std::size_t i = 0; i < images.size(); i += chunk) {
      const std::size_t n = std::min(chunk, images.size() - i);
      const Tensor batch = stack(std::span<const Tensor>(images.data() + i, n));
      const Var z = logits(Var(batch));
      for (std::size_t k = 0; k < n; ++k) out.push_back(ag::detail::sigmoid(z.value()[k]));
    }
    return out;
  }

 private:
  ModelFamily family_;
  std::unique_ptr<LaaNet> net_;
  std::unique_ptr<LaaFormer> former_;
};

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr const char* kCheckpointFormat = "laax-checkpoint/1";

/// Parameters as named arrays; the manifest (format, family, architecture
/// config, seed, epoch) lives in the bundle metadata.
inline void save_checkpoint(const Detector& model, const RunConfig& rc, std::size_t epoch, const fs::path& path) {
  ArrayBundle b;
  b.meta = {{"format", kCheckpointFormat},
            {"family", to_string(model.family())},
            {"seed", rc.seed},
            {"epoch", epoch},
            {"config", rc.to_json()}};
  for (const auto& p : model.parameters()) b.arrays[p.name] = p.var.value();
  save_bundle(b, path);
}

struct LoadedCheckpoint {
  RunConfig config;
  std::size_t epoch = 0;
  std::unique_ptr<Detector> model;
};

inline LoadedCheckpoint load_checkpoint(const fs::path& path) {
  const ArrayBundle b = load_bundle(path);
  require(b.meta.value("format", "") == kCheckpointFormat, Errc::io, "not a checkpoint: " + path.string());
  LoadedCheckpoint out;
  out.config = config_from_json(b.meta.at("config"));
  out.epoch = b.meta.at("epoch").get<std::size_t>();
  out.model = std::make_unique<Detector>(out.config, 0);
  require(to_string(out.model->family()) == b.meta.at("family").get<std::string>(), Errc::io,
          "checkpoint family tag disagrees with its config");
  const auto params = out.model->parameters();
  require(params.size() == b.arrays.size(), Errc::io, "checkpoint parameter count mismatch in " + path.string());
  for (const auto& p : params) {
    const Tensor& t = b.at(p.name);
    require(t.shape() == p.var.shape(), Errc::io, "shape mismatch for parameter '" + p.name + "'");
    ag::Var v = p.var;
    v.mutable_value() = t;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Data and targets

struct TrainSample {
  Tensor image;
  Tensor boundary;
  int label = 0;
};

/// Training and validation faces: procedural unless `dataset` names a
/// directory of real faces, in which case its last `val_identities` entries
/// are held out.
struct FaceSplit {
  std::vector<FaceSample> train;
  std::vector<FaceSample> val;
};

inline FaceSplit load_faces(const RunConfig& rc) {
  FaceSplit s;
  if (!rc.dataset.empty()) {
    std::vector<FaceSample> all = load_face_directory(rc.dataset, rc.image_size);
    require(all.size() > rc.val_identities, Errc::io,
            "dataset has " + std::to_string(all.size()) + " faces, need more than val_identities");
    const auto split = static_cast<std::ptrdiff_t>(all.size() - rc.val_identities);
    s.train.assign(all.begin(), all.begin() + split);
    s.val.assign(all.begin() + split, all.end());
    return s;
  }
  for (std::size_t i = 0; i < rc.train_identities; ++i)
    s.train.push_back(generate_toy_face(derive_seed(rc.seed, 0xFACE, i), {3, rc.image_size}));
  for (std::size_t i = 0; i < rc.val_identities; ++i)
    s.val.push_back(generate_toy_face(derive_seed(rc.seed, 0x7A1, i), {3, rc.image_size}));
  return s;
}

/// One real (the randomly flipped original) and one freshly synthesized
/// pseudo-fake per face.
inline std::vector<TrainSample> make_samples(const std::vector<FaceSample>& faces, const RunConfig& rc,
                                             std::uint64_t stream) {
  SynthesisParams sp{rc.synthesis, rc.augment, rc.deform};
  std::vector<TrainSample> out;
  out.reserve(2 * faces.size());
  for (std::size_t i = 0; i < faces.size(); ++i) {
    Rng rng(derive_seed(stream, i));
    const FaceSample face = rng.bernoulli(0.5) ? flip_horizontal(faces[i]) : faces[i];
    const std::size_t d = face.size();
    out.push_back({face.image, Tensor({d, d}), 0});
    const PseudoFake pf = synthesize_pseudo_fake(face, sp, rng, faces);
    out.push_back({pf.image, pf.mask.B, static_cast<int>(pf.label)});
  }
  return out;
}

struct BatchTargets {
  Tensor images;
  std::vector<double> labels;
  Tensor heatmaps;     // [n, 1, D_H, D_H]
  Tensor consistency;  // [n, 1, D_H, D_H]
  std::vector<GridPoint> anchors;
  Tensor attention;  // [n, 1, g, g]
};

inline BatchTargets build_targets(const std::vector<TrainSample>& samples, std::span<const std::size_t> idx,
                                  const Detector& model, const RunConfig& rc, Rng& rng) {
  BatchTargets t;
  std::vector<Tensor> imgs, hs, cs, ss;
  for (std::size_t k : idx) {
    const TrainSample& s = samples[k];
    imgs.push_back(s.image);
    t.labels.push_back(static_cast<double>(s.label));
    if (model.family() == ModelFamily::laa_net) {
      const std::size_t dh = model.net().config().heatmap_size();
      const std::size_t stride = rc.image_size / dh;
      hs.push_back(heatmap_gt(s.boundary, dh, rc.heatmap).H.reshaped({1, dh, dh}));
      const Tensor pooled = patch_aggregate(s.boundary, stride, Aggregation::max);
      ConsistencyGT c = consistency_gt(pooled, rng);
      t.anchors.push_back(c.anchor ? *c.anchor : GridPoint{rng.index(dh), rng.index(dh)});
      cs.push_back(c.C.reshaped({1, dh, dh}));
    } else {
      const std::size_t p = model.former().config().patch, g = rc.image_size / p;
      ss.push_back(patch_attention_gt(s.boundary, p, rc.patch_sigma).S.reshaped({1, g, g}));
    }
  }
  t.images = stack(imgs);
  if (!hs.empty()) {
    t.heatmaps = stack(hs);
    t.consistency = stack(cs);
  }
  if (!ss.empty()) t.attention = stack(ss);
  return t;
}

struct StepLosses {
  Var total;
  double cls = 0, h = 0, aux = 0;
};

inline StepLosses compute_losses(const Detector& model, const BatchTargets& t, const RunConfig& rc) {
  StepLosses out;
  const Var x(t.images);
  if (model.family() == ModelFamily::laa_net) {
    const LaaNetOutputs o = model.net().forward(x, &t.anchors, {rc.use_heatmap, rc.use_consistency});
    const Var l_cls = ag::classification_loss(o.logit, t.labels, rc.loss.label_smoothing);
    Var l_h, l_c;
    if (rc.use_heatmap) l_h = ag::focal_heatmap_loss(o.heatmap, t.heatmaps, rc.loss.gamma);
    if (rc.use_consistency) l_c = ag::consistency_loss(o.consistency, t.consistency);
    out.total = ag::laa_net_total(l_cls, l_h, l_c, rc.loss);
    out.cls = l_cls.value().item();
    out.h = l_h.defined() ? l_h.value().item() : 0.0;
    out.aux = l_c.defined() ? l_c.value().item() : 0.0;
  } else {
    const LaaFormerOutputs o = model.former().forward(x, rc.use_l2att);
    const Var l_cls = ag::classification_loss(o.logit, t.labels, rc.loss.label_smoothing);
    Var l_att;
    if (rc.use_l2att) l_att = ag::focal_heatmap_loss(o.attention, t.attention, rc.loss.gamma);
    out.total = ag::laa_former_total(l_cls, l_att, rc.loss);
    out.cls = l_cls.value().item();
    out.aux = l_att.defined() ? l_att.value().item() : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
  std::size_t epoch = 0;
  double loss_total = 0, loss_cls = 0, loss_h = 0, loss_c_or_att = 0, val_auc = 0;
  bool has_loss_h = true;

  json to_json() const {
    json j;
    j["epoch"] = epoch;
    j["loss_total"] = loss_total;
    j["loss_cls"] = loss_cls;
    j["loss_h"] = has_loss_h ? json(loss_h) : json(nullptr);
    j["loss_c_or_att"] = loss_c_or_att;
    j["val_auc"] = val_auc;
    return j;
  }
};

struct TrainResult {
  std::vector<EpochRecord> log;
  fs::path checkpoint;
  fs::path metrics;
  double seconds = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from scratch. Writes `<out_dir>/checkpoint.laax` and appends one
/// JSON record per epoch to `<out_dir>/metrics.jsonl`.
inline TrainResult train(const RunConfig& rc, const EpochCallback& on_epoch = {}) {
  rc.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  const fs::path out(rc.out_dir);
  fs::create_directories(out);
  result.checkpoint = out / "checkpoint.laax";
  result.metrics = out / "metrics.jsonl";
  std::ofstream log(result.metrics, std::ios::trunc);
  require(static_cast<bool>(log), Errc::io, "cannot write " + result.metrics.string());

  Detector model(rc, derive_seed(rc.seed, 0x30DE1));
  if (rc.epochs == 0) {
    save_checkpoint(model, rc, 0, result.checkpoint);
    return result;
  }

  const FaceSplit faces = load_faces(rc);
  std::vector<Tensor> val_images;
  std::vector<int> val_labels;
  for (const auto& s : make_samples(faces.val, rc, derive_seed(rc.seed, 0x7A1, 1))) {
    val_images.push_back(s.image);
    val_labels.push_back(s.label);
  }

  AdamW opt(model.parameters(), rc.weight_decay);
  const std::size_t per_epoch = 2 * faces.train.size();
  const std::size_t steps_per_epoch = (per_epoch + rc.batch_size - 1) / rc.batch_size;
  const LrSchedule sched{rc.lr_start, rc.lr_peak, rc.lr_end, rc.warmup_fraction, steps_per_epoch * rc.epochs};

  RunConfig cls_only = rc;
  cls_only.use_heatmap = cls_only.use_consistency = cls_only.use_l2att = false;

  for (std::size_t epoch = 1; epoch <= rc.epochs; ++epoch) {
    const bool pretraining = epoch <= rc.pretrain_epochs;
    const bool frozen = !pretraining && epoch <= rc.pretrain_epochs + rc.freeze_epochs;
    for (std::size_t k = 0; k < opt.params().size(); ++k)
      opt.set_frozen(k, frozen && Detector::is_backbone(opt.params()[k].name));
    const RunConfig& phase = pretraining ? cls_only : rc;
    if (rc.pretrain_epochs > 0 && epoch == rc.pretrain_epochs + 1) opt.reset_state();
    const std::vector<TrainSample> samples = make_samples(faces.train, rc, derive_seed(rc.seed, 0xE90C, epoch));
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(rc.seed, 0x5EED, epoch));
    std::shuffle(order.begin(), order.end(), rng.engine());

    EpochRecord rec;
    rec.epoch = epoch;
    rec.has_loss_h = model.family() == ModelFamily::laa_net;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t lo = b * rc.batch_size, n = std::min(rc.batch_size, samples.size() - lo);
      const BatchTargets t = build_targets(samples, std::span<const std::size_t>(order.data() + lo, n), model, rc, rng);
      opt.zero_grad();
      const StepLosses l = compute_losses(model, t, phase);
      const double total = l.total.value().item();
      require(std::isfinite(total), Errc::numerical,
              "non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(b) +
                  " (cls=" + std::to_string(l.cls) + ", h=" + std::to_string(l.h) + ", aux=" + std::to_string(l.aux) +
                  ")");
      l.total.backward();
      opt.step(sched.at(opt.steps()));
      const double w = static_cast<double>(n) / static_cast<double>(samples.size());
      rec.loss_total += w * total;
      rec.loss_cls += w * l.cls;
      rec.loss_h += w * l.h;
      rec.loss_c_or_att += w * l.aux;
    }
    rec.val_auc = auc(model.scores(val_images), val_labels);
    log << rec.to_json().dump() << "\n" << std::flush;
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  save_checkpoint(model, rc, rc.epochs, result.checkpoint);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  double auc = 0;
  double ap = 0;
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<double> quality;  // Mask-SSIM of each fake against its original, NaN otherwise
  std::vector<QualityBucket> buckets;
  std::string warning;

  json to_json() const {
    json j;
    j["auc"] = auc;
    j["ap"] = ap;
    j["scores"] = scores;
    j["labels"] = labels;
    if (!buckets.empty()) {
      j["buckets"] = json::array();
      for (const auto& b : buckets)
        j["buckets"].push_back({{"ssim_lo", b.ssim_lo}, {"ssim_hi", b.ssim_hi}, {"fakes", b.fakes},
                                {"auc", std::isnan(b.auc) ? json(nullptr) : json(b.auc)}});
    }
    if (!warning.empty()) j["warning"] = warning;
    return j;
  }
};

/// Recomputes AUC and AP from persisted scores.
inline EvalReport report_from_scores(std::vector<double> scores, std::vector<int> labels) {
  EvalReport r;
  r.auc = auc(scores, labels);
  r.ap = average_precision(scores, labels);
  r.scores = std::move(scores);
  r.labels = std::move(labels);
  return r;
}

/// Mask-SSIM tercile edges over the fakes' quality values.
inline std::vector<double> tercile_edges(std::vector<double> q) {
  std::sort(q.begin(), q.end());
  return {q.front(), q[q.size() / 3], q[2 * q.size() / 3], q.back()};
}

inline EvalReport evaluate(const Detector& model, const std::vector<LabeledImage>& data, bool buckets) {
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (const auto& s : data) {
    require(s.image.dim() == 3 && s.image.size(0) == model.channels() && s.image.size(1) == model.image_size() &&
                s.image.size(2) == model.image_size(),
            Errc::shape_mismatch,
            "dataset image " + shape_str(s.image.shape()) + " does not match the checkpoint input size " +
                std::to_string(model.image_size()));
    images.push_back(s.image);
    labels.push_back(s.label);
  }
  EvalReport r = report_from_scores(model.scores(images), labels);
  if (!buckets) return r;
  r.quality.assign(data.size(), std::nan(""));
  std::vector<double> fake_q;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label != 1) continue;
    if (data[i].original.empty()) {
      r.warning = "Mask-SSIM bucketing unavailable: real and fake images are not paired";
      r.quality.clear();
      return r;
    }
    Tensor head(data[i].mask.shape());
    for (std::size_t k = 0; k < head.numel(); ++k) head[k] = data[i].mask[k] > 0.0 ? 1.0 : 0.0;
    r.quality[i] = mask_ssim(data[i].image, data[i].original, head);
    fake_q.push_back(r.quality[i]);
  }
  if (fake_q.empty()) {
    r.warning = "Mask-SSIM bucketing unavailable: no fakes in dataset";
    return r;
  }
  std::vector<double> q = r.quality;
  for (auto& v : q)
    if (std::isnan(v)) v = 0.0;
  r.buckets = bucketed_auc(r.scores, r.labels, q, tercile_edges(fake_q));
  return r;
}

}  // namespace laax
