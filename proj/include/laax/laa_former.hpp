#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "laax/nn.hpp"

namespace laax {

using ag::Var;

struct LaaFormerConfig {
  std::string preset = "tiny";
  std::size_t in_channels = 3;
  std::size_t image_size = 64;
  std::size_t patch = 8;
  std::size_t embed_dim = 96;
  std::size_t depth = 4;
  std::size_t heads = 3;
  std::size_t mlp_dim = 384;
  std::size_t att_hidden = 48;
  std::size_t norm_groups = 4;
  double init_std = 0.02;

  static LaaFormerConfig tiny() { return {}; }
  /// LAA-Former-S: H=W=112, P=8, L=12, D=384, MLP 1536, 6 heads.
  static LaaFormerConfig small() { return {"small", 3, 112, 8, 384, 12, 6, 1536, 192, 4, 0.02}; }
  /// LAA-Former-B: H=W=224, P=16, L=12, D=768, MLP 3072, 12 heads.
  static LaaFormerConfig base() { return {"base", 3, 224, 16, 768, 12, 12, 3072, 384, 4, 0.02}; }
  static LaaFormerConfig from_preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "small" || name == "S") return small();
    if (name == "base" || name == "B") return base();
    throw Error(Errc::configuration, "unknown LAA-Former preset '" + name + "'");
  }

  std::size_t grid() const { return image_size / patch; }
  std::size_t num_patches() const { return grid() * grid(); }

  void validate() const {
    require(patch > 0 && image_size % patch == 0, Errc::tiling,
            "image size " + std::to_string(image_size) + " not divisible by patch " + std::to_string(patch));
    require(heads > 0 && embed_dim % heads == 0, Errc::configuration,
            std::to_string(heads) + " heads do not divide embedding width " + std::to_string(embed_dim));
    require(depth >= 1, Errc::configuration, "encoder needs at least one block");
    require(att_hidden % norm_groups == 0, Errc::configuration, "att_hidden not divisible by norm_groups");
  }
};

/// Token sequence z of shape [N_batch, patches + 1, D_emb]; index 0 is the
/// class token.
struct TokenSequence {
  Var tokens;
  std::size_t num_patches = 0;
};

/// Non-overlapping patch extraction: [N, C, H, W] -> [N, (H/P)(W/P), C P P],
/// patches in row-major grid order, each flattened channel-major.
inline Var extract_patches(const Var& images, std::size_t patch) {
  require(images.dim() == 4, Errc::shape_mismatch, "patch extraction expects [N, C, H, W]");
  const std::size_t n = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
  require(patch > 0 && h % patch == 0 && w % patch == 0, Errc::tiling,
          "image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by patch " + std::to_string(patch));
  const std::size_t gh = h / patch, gw = w / patch;
  Var x = ag::reshape(images, {n, c, gh, patch, gw, patch});
  x = ag::permute(x, {0, 2, 4, 1, 3, 5});
  return ag::reshape(x, {n, gh * gw, c * patch * patch});
}

class PatchEmbed : public nn::Module {
 public:
  PatchEmbed() = default;
  PatchEmbed(const LaaFormerConfig& cfg, Rng& rng)
      : proj(cfg.in_channels * cfg.patch * cfg.patch, cfg.embed_dim, cfg.init_std, rng),
        cls_token(Var::parameter(nn::trunc_normal({1, cfg.embed_dim}, cfg.init_std, rng))),
        pos_embed(Var::parameter(nn::trunc_normal({cfg.num_patches() + 1, cfg.embed_dim}, cfg.init_std, rng))),
        patch_(cfg.patch) {}

  /// z0 = [x_cls; x_1 E; ...; x_N E] + E_pos.
  TokenSequence operator()(const Var& images) const {
    Var patches = proj(extract_patches(images, patch_));
    const std::size_t n = images.size(0), np = patches.size(1);
    require(np + 1 == pos_embed.size(0), Errc::shape_mismatch,
            "patch count " + std::to_string(np) + " does not match positional embedding");
    Var cls = ag::expand_leading(cls_token, n);
    Var z = ag::concat({cls, patches}, 1);
    return {ag::add_broadcast(z, pos_embed), np};
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    proj.collect(out, nn::join_name(prefix, "proj"));
    nn::add_param(out, prefix, "cls_token", cls_token);
    nn::add_param(out, prefix, "pos_embed", pos_embed);
  }

  nn::Linear proj;
  Var cls_token;
  Var pos_embed;

 private:
  std::size_t patch_ = 8;
};

class MultiHeadSelfAttention : public nn::Module {
 public:
  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(std::size_t dim, std::size_t heads, double std, Rng& rng)
      : qkv(dim, 3 * dim, std, rng), proj(dim, dim, std, rng), heads_(heads) {}

  /// When `probs` is non-null it receives the attention weights
  /// [N * heads, T, T].
  Var operator()(const Var& x, Tensor* probs = nullptr) const {
    const std::size_t n = x.size(0), t = x.size(1), d = x.size(2), dh = d / heads_;
    Var q3 = ag::permute(ag::reshape(qkv(x), {n, t, 3, heads_, dh}), {2, 0, 3, 1, 4});
    auto part = [&](std::size_t i) { return ag::reshape(ag::slice(q3, 0, i, 1), {n * heads_, t, dh}); };
    Var q = part(0), k = part(1), v = part(2);
    Var attn = ag::softmax(ag::scale(ag::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh))));
    if (probs) *probs = attn.value();
    Var ctx = ag::permute(ag::reshape(ag::bmm(attn, v), {n, heads_, t, dh}), {0, 2, 1, 3});
    return proj(ag::reshape(ctx, {n, t, d}));
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    qkv.collect(out, nn::join_name(prefix, "qkv"));
    proj.collect(out, nn::join_name(prefix, "proj"));
  }

  nn::Linear qkv;
  nn::Linear proj;

 private:
  std::size_t heads_ = 1;
};

/// Pre-norm block: z = MHSA(LN(z)) + z; z = MLP(LN(z)) + z.
class EncoderBlock : public nn::Module {
 public:
  EncoderBlock() = default;
  EncoderBlock(const LaaFormerConfig& cfg, Rng& rng)
      : ln1(cfg.embed_dim),
        attn(cfg.embed_dim, cfg.heads, cfg.init_std, rng),
        ln2(cfg.embed_dim),
        fc1(cfg.embed_dim, cfg.mlp_dim, cfg.init_std, rng),
        fc2(cfg.mlp_dim, cfg.embed_dim, cfg.init_std, rng) {}

  Var operator()(const Var& z, Tensor* probs = nullptr) const {
    Var h = ag::add(attn(ln1(z), probs), z);
    return ag::add(fc2(ag::gelu(fc1(ln2(h)))), h);
  }

  /// Zero the last projection of both residual branches so the block is the
  /// identity map.
  void zero_residual_branches() {
    nn::zero_(attn.proj.weight);
    nn::zero_(attn.proj.bias);
    nn::zero_(fc2.weight);
    nn::zero_(fc2.bias);
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    ln1.collect(out, nn::join_name(prefix, "ln1"));
    attn.collect(out, nn::join_name(prefix, "attn"));
    ln2.collect(out, nn::join_name(prefix, "ln2"));
    fc1.collect(out, nn::join_name(prefix, "fc1"));
    fc2.collect(out, nn::join_name(prefix, "fc2"));
  }

  nn::LayerNorm ln1;
  MultiHeadSelfAttention attn;
  nn::LayerNorm ln2;
  nn::Linear fc1;
  nn::Linear fc2;
};

class Encoder : public nn::Module {
 public:
  Encoder() = default;
  Encoder(const LaaFormerConfig& cfg, Rng& rng) {
    for (std::size_t i = 0; i < cfg.depth; ++i) blocks.emplace_back(cfg, rng);
  }

  /// `probs`, when given, receives one attention tensor per block.
  TokenSequence operator()(const TokenSequence& in, std::vector<Tensor>* probs = nullptr) const {
    Var z = in.tokens;
    if (probs) probs->resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) z = blocks[i](z, probs ? &(*probs)[i] : nullptr);
    return {z, in.num_patches};
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, nn::join_name(prefix, "block" + std::to_string(i)));
  }

  std::vector<EncoderBlock> blocks;
};

/// L2-Att: patch tokens -> D x sqrt(N) x sqrt(N) map -> 3x3 ConvBlock ->
/// pointwise conv -> sigmoid.
class L2AttHead : public nn::Module {
 public:
  L2AttHead() = default;
  L2AttHead(std::size_t dim, std::size_t hidden, std::size_t groups, Rng& rng)
      : conv(dim, hidden, 3, 1, 1, true, rng), norm(groups, hidden), pointwise(hidden, 1, 1, 1, 0, true, rng) {
    nn::zero_(pointwise.bias);
  }

  /// Spatial map of the patch tokens, [N, D, sqrt(N), sqrt(N)].
  static Var to_grid(const Var& patch_tokens) {
    require(patch_tokens.dim() == 3, Errc::shape_mismatch, "patch tokens must be [N, patches, D]");
    const std::size_t n = patch_tokens.size(0), np = patch_tokens.size(1), d = patch_tokens.size(2);
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(np))));
    require(side * side == np, Errc::shape_mismatch, "patch count " + std::to_string(np) + " is not a perfect square");
    return ag::reshape(ag::permute(patch_tokens, {0, 2, 1}), {n, d, side, side});
  }

  Var operator()(const Var& patch_tokens) const {
    return ag::sigmoid(pointwise(ag::silu(norm(conv(to_grid(patch_tokens))))));
  }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    conv.collect(out, nn::join_name(prefix, "conv"));
    norm.collect(out, nn::join_name(prefix, "norm"));
    pointwise.collect(out, nn::join_name(prefix, "pointwise"));
  }

  nn::Conv2d conv;
  nn::GroupNorm norm;
  nn::Conv2d pointwise;
};

struct LaaFormerOutputs {
  Var logit;         // [N]
  Var attention;     // [N, 1, sqrt(N), sqrt(N)], undefined when L2-Att is off
  Var patch_tokens;  // normalized final patch tokens [N, patches, D]
};

/// ViT encoder with a class-token head and the L2-Att branch on patch tokens.
class LaaFormer : public nn::Module {
 public:
  LaaFormer(const LaaFormerConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0xF0F));
    embed_ = PatchEmbed(cfg_, rng);
    encoder_ = Encoder(cfg_, rng);
    norm_ = nn::LayerNorm(cfg_.embed_dim);
    head_ = nn::Linear(cfg_.embed_dim, 1, cfg_.init_std, rng);
    att_ = L2AttHead(cfg_.embed_dim, cfg_.att_hidden, cfg_.norm_groups, rng);
  }
  LaaFormer(const LaaFormer&) = delete;
  LaaFormer& operator=(const LaaFormer&) = delete;

  const LaaFormerConfig& config() const noexcept { return cfg_; }

  TokenSequence patch_embed(const Var& images) const { return embed_(images); }
  TokenSequence encode(const TokenSequence& z, std::vector<Tensor>* probs = nullptr) const { return encoder_(z, probs); }
  Var l2_att(const Var& patch_tokens) const { return att_(patch_tokens); }

  LaaFormerOutputs forward(const Var& images, bool with_attention_head = true) const {
    require(images.dim() == 4 && images.size(1) == cfg_.in_channels && images.size(2) == cfg_.image_size &&
                images.size(3) == cfg_.image_size,
            Errc::shape_mismatch, "LAA-Former expects [N, C, H, W] matching its config, got " + shape_str(images.shape()));
    const TokenSequence z = encode(patch_embed(images));
    Var normed = norm_(z.tokens);
    LaaFormerOutputs out;
    out.logit = logit_from_normed(normed);
    out.patch_tokens = ag::slice(normed, 1, 1, normed.size(1) - 1);
    if (with_attention_head) out.attention = att_(out.patch_tokens);
    return out;
  }

  /// Class-token logit from final encoder tokens [N, T, D].
  Var classify_tokens(const Var& tokens) const { return logit_from_normed(norm_(tokens)); }

  Encoder& encoder() noexcept { return encoder_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  const L2AttHead& attention_head() const noexcept { return att_; }

  void collect(nn::ParamList& out, const std::string& prefix) const override {
    embed_.collect(out, nn::join_name(prefix, "embed"));
    encoder_.collect(out, nn::join_name(prefix, "encoder"));
    norm_.collect(out, nn::join_name(prefix, "norm"));
    head_.collect(out, nn::join_name(prefix, "head"));
    att_.collect(out, nn::join_name(prefix, "l2att"));
  }

 private:
  Var logit_from_normed(const Var& normed) const {
    const std::size_t n = normed.size(0), d = normed.size(2);
    return ag::reshape(head_(ag::reshape(ag::slice(normed, 1, 0, 1), {n, d})), {n});
  }

  LaaFormerConfig cfg_;
  PatchEmbed embed_;
  Encoder encoder_;
  nn::LayerNorm norm_;
  nn::Linear head_;
  L2AttHead att_;
};

}  // namespace laax
