// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "cczsl/numcore/tensor.hpp"
#include "cczsl/world/space.hpp"

namespace cczsl::world {

// Frozen synthetic backbone: one unit direction per attribute and object,
// and the weights of the stand-in text encoder. Immutable after creation.
struct WorldLatents {
  numcore::Tensor attr_dirs;  // |A| x d
  numcore::Tensor obj_dirs;   // |O| x d
  numcore::Tensor text_w1;    // d x d
  numcore::Tensor text_w2;    // d x d
  double noise_sigma = 0.0;
  std::size_t patches = 0;    // L
  std::uint64_t seed = 0;

  std::size_t dim() const { return attr_dirs.cols(); }
};

// Directions are seeded standard normals, L2-normalised; the text weights
// use an independent stream with entries N(0, 1/d). ConfigError when d < 4
// or L < 2.
WorldLatents spawn_world(std::size_t n_attrs, std::size_t n_objs, std::size_t d, std::size_t L,
                         double noise_sigma, std::uint64_t seed);

struct Sample {
  numcore::Tensor patches;  // L x d
  numcore::Tensor cls;      // d
  Composition label;
};

// cls = normalize(u_a + w_o + sigma*eps) and patch l =
// normalize(alpha_l*u_a + (1-alpha_l)*w_o + sigma*eps_l) with alpha_l ~ U[0,1].
// Noise entries are N(0, 1/d), so sigma is the noise norm relative to a unit
// direction. IndexError for an out-of-range composition.
Sample render_sample(const WorldLatents& latents, const Composition& comp, std::uint64_t sample_seed);

// e = normalize(tanh(mean(prompt rows) W1) W2). Differentiable in the prompt
// sequence; the encoder weights never take gradients.
numcore::Tensor frozen_text_encode(const numcore::Tensor& prompt_sequence, const WorldLatents& latents);

// Batched form over already mean-pooled prompt rows: [n x d] -> [n x d].
numcore::Tensor frozen_text_encode_pooled(const numcore::Tensor& pooled, const WorldLatents& latents);

}  // namespace cczsl::world
