// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cczsl/model/model.hpp"
#include "cczsl/numcore/tensor.hpp"
#include "cczsl/prompts/bank.hpp"

namespace cczsl::losses {

struct LossWeights {
  double alpha_a = 1.0, alpha_o = 1.0, alpha_c = 1.0;
  double lambda_ce = 0.35;
  double lambda_kd = 0.65;
  double lambda_cal = 0.05;
  double lambda_opl = 0.05;
  double lambda_idl = 0.005;
  double branch_a = 1.0, branch_o = 1.0, branch_c = 1.0;
  double tau_kd = 2.0;
  double recency_gamma = 0.5;

  // ConfigError for negative weights, tau_kd <= 0 or gamma outside (0,1].
  void validate() const;
};

// Ground-truth positions of each sample in the three branch outputs.
struct Targets {
  std::vector<std::size_t> attr, obj, comp;
};

// alpha-weighted per-branch -log p at the label, log clamped at 1e-12,
// averaged over the batch.
numcore::Tensor ce_total(const model::LogitsBundle& bundle, const Targets& targets, const LossWeights& w);

// Paired positions of labels known to both a teacher and the student.
struct Overlap {
  std::vector<std::size_t> teacher;
  std::vector<std::size_t> student;
  bool empty() const { return teacher.empty(); }
};

struct BranchOverlaps {
  Overlap attr, obj, comp;
};

// Overlap by identity: the same primitive or (attr, obj) pair.
BranchOverlaps label_overlap(const prompts::PromptBank& teacher, const prompts::PromptBank& student);

// tau^2 * KL(softmax(t/tau) || softmax(s/tau)) on the overlapping columns,
// averaged over rows. Teacher logits [B x Kt] are constants; student logits
// [B x Ks]. An empty overlap gives 0 and a logged notice.
numcore::Tensor cskd_branch(const numcore::Tensor& teacher_logits, const numcore::Tensor& student_logits,
                            const Overlap& overlap, double tau);

// Logits of one frozen teacher on the current batch plus its overlap with
// the student.
struct TeacherLogits {
  numcore::Tensor z_a, z_o, z_c;
  BranchOverlaps overlap;
};

// sum_t pi_t * (l_a * KD_a + l_o * KD_o + l_c * KD_c). ConfigError when pi
// and the teacher list differ in length.
numcore::Tensor cskd_total(std::span<const TeacherLogits> teachers, const model::LogitsBundle& student,
                           std::span<const double> pi, const LossWeights& w);

// sum over paired rows of (1 - cos(student row, teacher row)) for both
// primitive branches; teacher rows are constants.
numcore::Tensor cal(const prompts::PromptBank& student, const prompts::PromptBank& teacher,
                    const Overlap& attr_overlap, const Overlap& obj_overlap);

// Mean |cos| over all (head row, tail row) pairs, per primitive branch,
// summed over branches. A branch with an empty side contributes 0.
numcore::Tensor opl(const prompts::PromptBank& bank, const prompts::HeadTailPartition& partition);

// Mean |cos| over ordered pairs of distinct tail rows, per branch, summed.
// Branches with fewer than two tail rows contribute 0.
numcore::Tensor idl(const prompts::PromptBank& bank, const prompts::HeadTailPartition& partition);

struct LossComponents {
  numcore::Tensor ce, kd, cal, opl, idl;
};

// lambda-weighted sum. NumericError naming the first non-finite component.
numcore::Tensor total(const LossComponents& c, const LossWeights& w);

// pi_t proportional to gamma^(n-1-t), normalised; most recent teacher last
// and largest. Empty for n = 0.
std::vector<double> recency_weights(std::size_t n, double gamma);

}  // namespace cczsl::losses
