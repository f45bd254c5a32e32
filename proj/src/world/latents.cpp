// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/world/latents.hpp"

#include <cmath>
#include <random>
#include <string>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/seeding.hpp"
#include "cczsl/numcore/ops.hpp"

namespace cczsl::world {
namespace nc = numcore;

namespace {

std::vector<double> unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      v[i * d + j] = normal(rng);
      s += v[i * d + j] * v[i * d + j];
    }
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] *= inv;
  }
  return v;
}

void normalize(double* x, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += x[j] * x[j];
  const double inv = 1.0 / std::sqrt(s);
  for (std::size_t j = 0; j < d; ++j) x[j] *= inv;
}

}  // namespace

WorldLatents spawn_world(std::size_t n_attrs, std::size_t n_objs, std::size_t d, std::size_t L,
                         double noise_sigma, std::uint64_t seed) {
  if (d < 4) throw ConfigError("world dimension must be at least 4, got " + std::to_string(d));
  if (L < 2) throw ConfigError("samples need at least 2 patches, got " + std::to_string(L));
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise sigma must be non-negative");
  if (n_attrs == 0 || n_objs == 0) throw ConfigError("world needs at least one attribute and one object");
  WorldLatents w;
  std::mt19937_64 dirs(derive_seed(seed, "world-directions"));
  w.attr_dirs = nc::Tensor::matrix(n_attrs, d, unit_rows(n_attrs, d, dirs));
  w.obj_dirs = nc::Tensor::matrix(n_objs, d, unit_rows(n_objs, d, dirs));
  std::mt19937_64 text(derive_seed(seed, "world-text-encoder"));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> w1(d * d), w2(d * d);
  for (double& x : w1) x = normal(text);
  for (double& x : w2) x = normal(text);
  w.text_w1 = nc::Tensor::matrix(d, d, std::move(w1));
  w.text_w2 = nc::Tensor::matrix(d, d, std::move(w2));
  w.noise_sigma = noise_sigma;
  w.patches = L;
  w.seed = seed;
  return w;
}

Sample render_sample(const WorldLatents& latents, const Composition& comp, std::uint64_t sample_seed) {
  if (comp.attr >= latents.attr_dirs.rows() || comp.obj >= latents.obj_dirs.rows()) {
    throw IndexError("render_sample: composition (" + std::to_string(comp.attr) + "," + std::to_string(comp.obj) +
                     ") outside the world");
  }
  const std::size_t d = latents.dim(), L = latents.patches;
  const double* u = latents.attr_dirs.values().data() + comp.attr * d;
  const double* w = latents.obj_dirs.values().data() + comp.obj * d;
  std::mt19937_64 rng(sample_seed);
  std::normal_distribution<double> noise(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  std::uniform_real_distribution<double> mix(0.0, 1.0);
  const double sigma = latents.noise_sigma;

  std::vector<double> cls(d);
  for (std::size_t j = 0; j < d; ++j) cls[j] = u[j] + w[j];
  if (sigma > 0.0)
    for (std::size_t j = 0; j < d; ++j) cls[j] += sigma * noise(rng);
  normalize(cls.data(), d);

  std::vector<double> patches(L * d);
  for (std::size_t l = 0; l < L; ++l) {
    const double alpha = mix(rng);
    double* row = patches.data() + l * d;
    for (std::size_t j = 0; j < d; ++j) row[j] = alpha * u[j] + (1.0 - alpha) * w[j];
    if (sigma > 0.0)
      for (std::size_t j = 0; j < d; ++j) row[j] += sigma * noise(rng);
    normalize(row, d);
  }
  return {nc::Tensor::matrix(L, d, std::move(patches)), nc::Tensor::vector(std::move(cls)), comp};
}

nc::Tensor frozen_text_encode_pooled(const nc::Tensor& pooled, const WorldLatents& latents) {
  nc::Tensor hidden = nc::tanh(nc::matmul(pooled, latents.text_w1));
  return nc::l2_normalize_rows(nc::matmul(hidden, latents.text_w2));
}

nc::Tensor frozen_text_encode(const nc::Tensor& prompt_sequence, const WorldLatents& latents) {
  if (prompt_sequence.rank() != 2) {
    throw RankError("frozen_text_encode expects an m x d prompt sequence, got " +
                    nc::shape_string(prompt_sequence.shape()));
  }
  nc::Tensor pooled = nc::reshape(nc::mean_rows(prompt_sequence), {1, prompt_sequence.cols()});
  return nc::reshape(frozen_text_encode_pooled(pooled, latents), {prompt_sequence.cols()});
}

}  // namespace cczsl::world
