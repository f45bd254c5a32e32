// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cczsl/numcore/tensor.hpp"
#include "cczsl/prompts/bank.hpp"
#include "cczsl/world/latents.hpp"

namespace cczsl::model {

// Dense -> batch norm -> ReLU -> dropout, mean-pooled over patch tokens.
struct DecompositionHead {
  numcore::Tensor w;      // d x d
  numcore::Tensor b;      // d
  numcore::Tensor gamma;  // d
  numcore::Tensor beta;   // d
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double dropout = 0.1;
  double momentum = 0.1;
  double eps = 1e-5;
};

struct DecompositionHeads {
  DecompositionHead attr;
  DecompositionHead obj;
};

// dense(d->d) -> ReLU -> dense(d->d)
struct Mlp {
  numcore::Tensor w1, b1, w2, b2;
};

// One single-head cross-attention block followed by an MLP.
struct FusionBlock {
  numcore::Tensor wq, wk, wv;
  Mlp mlp;
};

struct FusionParams {
  FusionBlock agnostic;  // attribute and object prompts
  FusionBlock aware;     // composition prompts
};

// How composition prompts are refined against the image.
enum class CompFusion {
  TailOnly,    // tail: cross-attention + MLP; head: MLP only
  UpdateBoth,  // every composition takes the cross-attention path
  FreezeHead,  // as TailOnly, but head rows are constants
  Off,         // composition embeddings are used unrefined
};

std::string to_string(CompFusion mode);
CompFusion comp_fusion_from_string(const std::string& name);

struct ModelParams {
  DecompositionHeads heads;
  FusionParams fusion;
  numcore::Tensor log_scale;  // beta, logits are scaled by exp(beta)
};

struct ModelState {
  prompts::PromptBank bank;
  prompts::HeadTailPartition partition;
  ModelParams params;
};

struct ModelOptions {
  double tau = 1.0;
  CompFusion comp_fusion = CompFusion::TailOnly;
};

ModelParams init_params(std::size_t d, std::uint64_t seed, double dropout = 0.1);

// Deep copy with independent parameter storage.
ModelState clone_state(const ModelState& state);

struct NamedTensor {
  std::string name;
  numcore::Tensor tensor;
};

// Every learnable tensor in a fixed order, with stable names.
std::vector<NamedTensor> learnable(const ModelState& state);

enum class Mode { Train, Eval };

struct LogitsBundle {
  numcore::Tensor z_a, z_o, z_c;  // B x |A_known|, B x |O_known|, B x |comp_index|
  numcore::Tensor p_a, p_o, p_c;  // softmax(z / tau) per row
  double beta = 0.0;
  double tau = 1.0;
};

// Batched forward over samples. Train mode uses batch statistics (more than
// one sample) and updates the running statistics, and applies dropout drawn
// from dropout_seed. ConsistencyError when the partition does not match the
// bank.
LogitsBundle forward(ModelState& state, std::span<const world::Sample> batch, const world::WorldLatents& latents,
                     Mode mode, const ModelOptions& options, std::uint64_t dropout_seed = 0);

// Single-sample building blocks; forward() computes the same quantities in
// batched form.
struct VisualFactors {
  numcore::Tensor v_a, v_o, v_c;
};
VisualFactors decompose(const world::Sample& sample, DecompositionHeads& heads, Mode mode,
                        std::uint64_t dropout_seed = 0);
numcore::Tensor cross_attend(const numcore::Tensor& queries, const numcore::Tensor& patches,
                             const FusionBlock& block);
numcore::Tensor apply_mlp(const numcore::Tensor& x, const Mlp& mlp);
std::pair<numcore::Tensor, numcore::Tensor> sagm2f(const numcore::Tensor& e_attrs, const numcore::Tensor& e_objs,
                                                   const numcore::Tensor& patches, const FusionBlock& block);
// Head rows then tail rows. At least one side must be present.
numcore::Tensor sawm2f(const std::optional<numcore::Tensor>& e_head, const std::optional<numcore::Tensor>& e_tail,
                       const numcore::Tensor& patches, const FusionBlock& block);
// z[i] = exp(beta) * cos(v, E[i]).
numcore::Tensor logits(const numcore::Tensor& v, const numcore::Tensor& e, const numcore::Tensor& beta);

// Text-side embeddings of every known concept: [n x d] per branch.
struct TextEmbeddings {
  numcore::Tensor e_a, e_o, e_c;
};
TextEmbeddings text_embeddings(const prompts::PromptBank& bank, const world::WorldLatents& latents);

}  // namespace cczsl::model
