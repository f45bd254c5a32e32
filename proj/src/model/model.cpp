// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/model/model.hpp"

#include <cmath>
#include <random>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/numcore/ops.hpp"
#include "cczsl/numcore/tape.hpp"

namespace cczsl::model {
namespace nc = numcore;
using nc::Tensor;

std::string to_string(CompFusion mode) {
  switch (mode) {
    case CompFusion::TailOnly: return "tail_only";
    case CompFusion::UpdateBoth: return "update_both";
    case CompFusion::FreezeHead: return "freeze_head";
    case CompFusion::Off: return "off";
  }
  return "tail_only";
}

CompFusion comp_fusion_from_string(const std::string& name) {
  if (name == "tail_only") return CompFusion::TailOnly;
  if (name == "update_both") return CompFusion::UpdateBoth;
  if (name == "freeze_head") return CompFusion::FreezeHead;
  if (name == "off") return CompFusion::Off;
  throw ConfigError("unknown composition fusion mode \"" + name +
                    "\" (expected tail_only, update_both, freeze_head or off)");
}

namespace {

Tensor gaussian_param(nc::Shape shape, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> v(nc::element_count(shape));
  for (double& x : v) x = normal(rng);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor constant_param(nc::Shape shape, double value) {
  const std::size_t n = nc::element_count(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(n, value));
}

DecompositionHead make_head(std::size_t d, double dropout, std::mt19937_64& rng) {
  DecompositionHead h;
  h.w = gaussian_param({d, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  h.b = constant_param({d}, 0.0);
  h.gamma = constant_param({d}, 1.0);
  h.beta = constant_param({d}, 0.0);
  h.running_mean.assign(d, 0.0);
  h.running_var.assign(d, 1.0);
  h.dropout = dropout;
  return h;
}

FusionBlock make_block(std::size_t d, std::mt19937_64& rng) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  FusionBlock b;
  b.wq = gaussian_param({d, d}, sd, rng);
  b.wk = gaussian_param({d, d}, sd, rng);
  b.wv = gaussian_param({d, d}, sd, rng);
  b.mlp.w1 = gaussian_param({d, d}, std::sqrt(2.0) * sd, rng);
  b.mlp.b1 = constant_param({d}, 0.0);
  b.mlp.w2 = gaussian_param({d, d}, sd, rng);
  b.mlp.b2 = constant_param({d}, 0.0);
  return b;
}

DecompositionHead clone_head(const DecompositionHead& h) {
  DecompositionHead c = h;
  c.w = h.w.clone();
  c.b = h.b.clone();
  c.gamma = h.gamma.clone();
  c.beta = h.beta.clone();
  return c;
}

FusionBlock clone_block(const FusionBlock& b) {
  return {b.wq.clone(), b.wk.clone(), b.wv.clone(), {b.mlp.w1.clone(), b.mlp.b1.clone(), b.mlp.w2.clone(), b.mlp.b2.clone()}};
}

void add_block(std::vector<NamedTensor>& out, const std::string& prefix, const FusionBlock& b) {
  out.push_back({prefix + ".wq", b.wq});
  out.push_back({prefix + ".wk", b.wk});
  out.push_back({prefix + ".wv", b.wv});
  out.push_back({prefix + ".mlp.w1", b.mlp.w1});
  out.push_back({prefix + ".mlp.b1", b.mlp.b1});
  out.push_back({prefix + ".mlp.w2", b.mlp.w2});
  out.push_back({prefix + ".mlp.b2", b.mlp.b2});
}

void add_head(std::vector<NamedTensor>& out, const std::string& prefix, const DecompositionHead& h) {
  out.push_back({prefix + ".w", h.w});
  out.push_back({prefix + ".b", h.b});
  out.push_back({prefix + ".gamma", h.gamma});
  out.push_back({prefix + ".beta", h.beta});
}

// tokens: [B*L x d] -> [B x d]
Tensor decompose_tokens(const Tensor& tokens, std::size_t batch, std::size_t L, DecompositionHead& h, Mode mode,
                        std::uint64_t dropout_seed) {
  Tensor x = nc::affine(tokens, h.w, h.b);
  Tensor y;
  if (mode == Mode::Train && batch > 1) {
    nc::BatchStatistics stats;
    y = nc::batch_norm_train(x, h.gamma, h.beta, h.eps, &stats);
    for (std::size_t j = 0; j < h.running_mean.size(); ++j) {
      h.running_mean[j] = (1.0 - h.momentum) * h.running_mean[j] + h.momentum * stats.mean[j];
      h.running_var[j] = (1.0 - h.momentum) * h.running_var[j] + h.momentum * stats.unbiased_var[j];
    }
  } else {
    y = nc::batch_norm_eval(x, h.running_mean, h.running_var, h.gamma, h.beta, h.eps);
  }
  y = nc::relu(y);
  if (mode == Mode::Train && h.dropout > 0.0) {
    std::mt19937_64 rng(dropout_seed);
    std::bernoulli_distribution keep(1.0 - h.dropout);
    const double scale = 1.0 / (1.0 - h.dropout);
    std::vector<double> mask(y.size());
    for (double& m : mask) m = keep(rng) ? scale : 0.0;
    y = nc::mul(y, Tensor::from(y.shape(), std::move(mask)));
  }
  return nc::pool_groups(y, L);
}

Tensor stack_cls(std::span<const world::Sample> batch) {
  const std::size_t d = batch[0].cls.size();
  std::vector<double> v;
  v.reserve(batch.size() * d);
  for (const auto& s : batch) v.insert(v.end(), s.cls.values().begin(), s.cls.values().end());
  return Tensor::matrix(batch.size(), d, std::move(v));
}

Tensor stack_patches(std::span<const world::Sample> batch) {
  const std::size_t L = batch[0].patches.rows(), d = batch[0].patches.cols();
  std::vector<double> v;
  v.reserve(batch.size() * L * d);
  for (const auto& s : batch) {
    if (s.patches.rows() != L) throw DimensionError("batch mixes samples with different patch counts");
    v.insert(v.end(), s.patches.values().begin(), s.patches.values().end());
  }
  return Tensor::matrix(batch.size() * L, d, std::move(v));
}

// MLP(e + CA(e, tokens)) for every sample: [n x d] -> [B*n x d].
Tensor refine_with_image(const Tensor& e, const Tensor& keys, const Tensor& values, std::size_t batch, std::size_t L,
                         const FusionBlock& block) {
  Tensor attended = nc::cross_attention(nc::matmul(e, block.wq), keys, values, L);
  return apply_mlp(nc::add(nc::tile_rows(e, batch), attended), block.mlp);
}

}  // namespace

ModelParams init_params(std::size_t d, std::uint64_t seed, double dropout) {
  if (d == 0) throw ConfigError("model dimension must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0,1)");
  std::mt19937_64 rng(derive_seed(seed, "model-params"));
  ModelParams p;
  p.heads.attr = make_head(d, dropout, rng);
  p.heads.obj = make_head(d, dropout, rng);
  p.fusion.agnostic = make_block(d, rng);
  p.fusion.aware = make_block(d, rng);
  p.log_scale = Tensor::parameter({1}, {std::log(1.0 / 0.07)});
  return p;
}

ModelState clone_state(const ModelState& state) {
  ModelState c;
  c.bank = state.bank.clone();
  c.partition = state.partition;
  c.params.heads.attr = clone_head(state.params.heads.attr);
  c.params.heads.obj = clone_head(state.params.heads.obj);
  c.params.fusion.agnostic = clone_block(state.params.fusion.agnostic);
  c.params.fusion.aware = clone_block(state.params.fusion.aware);
  c.params.log_scale = state.params.log_scale.clone();
  return c;
}

std::vector<NamedTensor> learnable(const ModelState& state) {
  std::vector<NamedTensor> out;
  out.push_back({"bank.attr_rows", state.bank.attr_rows});
  out.push_back({"bank.obj_rows", state.bank.obj_rows});
  out.push_back({"bank.prefix_a", state.bank.prefix_a});
  out.push_back({"bank.prefix_o", state.bank.prefix_o});
  out.push_back({"bank.prefix_c", state.bank.prefix_c});
  add_head(out, "heads.attr", state.params.heads.attr);
  add_head(out, "heads.obj", state.params.heads.obj);
  add_block(out, "fusion.agnostic", state.params.fusion.agnostic);
  add_block(out, "fusion.aware", state.params.fusion.aware);
  out.push_back({"log_scale", state.params.log_scale});
  return out;
}

Tensor apply_mlp(const Tensor& x, const Mlp& mlp) {
  return nc::affine(nc::relu(nc::affine(x, mlp.w1, mlp.b1)), mlp.w2, mlp.b2);
}

Tensor cross_attend(const Tensor& queries, const Tensor& patches, const FusionBlock& block) {
  return nc::cross_attention(nc::matmul(queries, block.wq), nc::matmul(patches, block.wk),
                             nc::matmul(patches, block.wv), patches.rows());
}

std::pair<Tensor, Tensor> sagm2f(const Tensor& e_attrs, const Tensor& e_objs, const Tensor& patches,
                                 const FusionBlock& block) {
  Tensor a = apply_mlp(nc::add(e_attrs, cross_attend(e_attrs, patches, block)), block.mlp);
  Tensor o = apply_mlp(nc::add(e_objs, cross_attend(e_objs, patches, block)), block.mlp);
  return {a, o};
}

Tensor sawm2f(const std::optional<Tensor>& e_head, const std::optional<Tensor>& e_tail, const Tensor& patches,
              const FusionBlock& block) {
  if (!e_head && !e_tail) throw ConsistencyError("sawm2f needs head or tail compositions");
  std::vector<Tensor> parts;
  if (e_head) parts.push_back(apply_mlp(*e_head, block.mlp));
  if (e_tail) parts.push_back(apply_mlp(nc::add(*e_tail, cross_attend(*e_tail, patches, block)), block.mlp));
  if (parts.size() == 1) return parts[0];
  return nc::concat_rows(parts);
}

Tensor logits(const Tensor& v, const Tensor& e, const Tensor& beta) {
  if (v.rank() != 1 || e.rank() != 2 || v.size() != e.cols()) {
    throw DimensionError("logits: v " + nc::shape_string(v.shape()) + " vs E " + nc::shape_string(e.shape()));
  }
  Tensor vn = nc::l2_normalize_rows(nc::reshape(v, {1, v.size()}));
  Tensor cos = nc::matmul_nt(vn, nc::l2_normalize_rows(e));
  return nc::reshape(nc::mul_scalar(cos, nc::exp(beta)), {e.rows()});
}

VisualFactors decompose(const world::Sample& sample, DecompositionHeads& heads, Mode mode,
                        std::uint64_t dropout_seed) {
  const std::size_t L = sample.patches.rows(), d = sample.patches.cols();
  Tensor va = decompose_tokens(sample.patches, 1, L, heads.attr, mode, derive_seed(dropout_seed, "dropout-attr"));
  Tensor vo = decompose_tokens(sample.patches, 1, L, heads.obj, mode, derive_seed(dropout_seed, "dropout-obj"));
  return {nc::reshape(va, {d}), nc::reshape(vo, {d}), sample.cls};
}

TextEmbeddings text_embeddings(const prompts::PromptBank& bank, const world::WorldLatents& latents) {
  return {world::frozen_text_encode_pooled(prompts::pooled_attr_prompts(bank), latents),
          world::frozen_text_encode_pooled(prompts::pooled_obj_prompts(bank), latents),
          world::frozen_text_encode_pooled(prompts::pooled_comp_prompts(bank), latents)};
}

LogitsBundle forward(ModelState& state, std::span<const world::Sample> batch, const world::WorldLatents& latents,
                     Mode mode, const ModelOptions& options, std::uint64_t dropout_seed) {
  const auto& part = state.partition;
  const auto& bank = state.bank;
  if (part.comp_total != bank.comp_index.size() || part.attr_total != bank.attr_ids.size() ||
      part.obj_total != bank.obj_ids.size() || part.comp_head > part.comp_total) {
    throw ConsistencyError("head/tail partition does not match the prompt bank");
  }
  if (batch.empty()) throw DimensionError("forward on an empty batch");
  const std::size_t B = batch.size(), L = batch[0].patches.rows();
  auto& P = state.params;

  Tensor tokens = stack_patches(batch);
  Tensor v_a = decompose_tokens(tokens, B, L, P.heads.attr, mode, derive_seed(dropout_seed, "dropout-attr"));
  Tensor v_o = decompose_tokens(tokens, B, L, P.heads.obj, mode, derive_seed(dropout_seed, "dropout-obj"));
  Tensor v_c = nc::l2_normalize_rows(stack_cls(batch));

  TextEmbeddings te = text_embeddings(bank, latents);
  Tensor scale = nc::exp(P.log_scale);

  const FusionBlock& ag = P.fusion.agnostic;
  Tensor keys = nc::matmul(tokens, ag.wk), values = nc::matmul(tokens, ag.wv);
  Tensor ea = nc::l2_normalize_rows(refine_with_image(te.e_a, keys, values, B, L, ag));
  Tensor eo = nc::l2_normalize_rows(refine_with_image(te.e_o, keys, values, B, L, ag));

  LogitsBundle out;
  out.z_a = nc::mul_scalar(nc::group_dot(nc::l2_normalize_rows(v_a), ea), scale);
  out.z_o = nc::mul_scalar(nc::group_dot(nc::l2_normalize_rows(v_o), eo), scale);

  const FusionBlock& aw = P.fusion.aware;
  Tensor cos_c;
  if (options.comp_fusion == CompFusion::Off) {
    cos_c = nc::matmul_nt(v_c, nc::l2_normalize_rows(te.e_c));
  } else {
    const std::size_t head = options.comp_fusion == CompFusion::UpdateBoth ? 0 : part.comp_head;
    const std::size_t total = part.comp_total;
    std::vector<Tensor> parts;
    if (head > 0) {
      auto head_rows = [&] {
        return nc::l2_normalize_rows(apply_mlp(nc::slice_rows(te.e_c, 0, head), aw.mlp));
      };
      Tensor e_head;
      if (options.comp_fusion == CompFusion::FreezeHead) {
        nc::NoGradScope off;
        e_head = head_rows();
      } else {
        e_head = head_rows();
      }
      parts.push_back(nc::matmul_nt(v_c, e_head));
    }
    if (head < total) {
      Tensor e_tail = nc::slice_rows(te.e_c, head, total);
      Tensor k2 = nc::matmul(tokens, aw.wk), v2 = nc::matmul(tokens, aw.wv);
      parts.push_back(nc::group_dot(v_c, nc::l2_normalize_rows(refine_with_image(e_tail, k2, v2, B, L, aw))));
    }
    cos_c = parts.size() == 1 ? parts[0] : nc::concat_cols(parts);
  }
  out.z_c = nc::mul_scalar(cos_c, scale);

  out.p_a = nc::softmax_rows(out.z_a, options.tau);
  out.p_o = nc::softmax_rows(out.z_o, options.tau);
  out.p_c = nc::softmax_rows(out.z_c, options.tau);
  out.beta = P.log_scale[0];
  out.tau = options.tau;
  return out;
}

}  // namespace cczsl::model
