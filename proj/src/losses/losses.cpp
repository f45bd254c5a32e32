// Copyright 2026 The cczsl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cczsl/losses/losses.hpp"

#include <cmath>

#include "cczsl/common/errors.hpp"
#include "cczsl/common/log.hpp"
#include "cczsl/numcore/ops.hpp"
#include "cczsl/numcore/tape.hpp"

namespace cczsl::losses {
namespace nc = numcore;
using nc::Tensor;

void LossWeights::validate() const {
  const std::pair<const char*, double> fields[] = {
      {"alpha_a", alpha_a},       {"alpha_o", alpha_o},       {"alpha_c", alpha_c},       {"lambda_ce", lambda_ce},
      {"lambda_kd", lambda_kd},   {"lambda_cal", lambda_cal}, {"lambda_opl", lambda_opl}, {"lambda_idl", lambda_idl},
      {"branch_a", branch_a},     {"branch_o", branch_o},     {"branch_c", branch_c}};
  for (const auto& [name, v] : fields) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be a finite non-negative weight");
  }
  if (!(tau_kd > 0.0) || !std::isfinite(tau_kd)) throw ConfigError("tau_kd must be positive");
  if (!(recency_gamma > 0.0 && recency_gamma <= 1.0)) throw ConfigError("recency_gamma must lie in (0,1]");
}

namespace {

Tensor zero() { return Tensor::scalar(0.0); }

Tensor branch_nll(const Tensor& probs, const std::vector<std::size_t>& labels) {
  Tensor picked = nc::pick(probs, labels);
  return nc::scale(nc::mean(nc::log_clamped(picked, 1e-12)), -1.0);
}

Tensor weighted(Tensor acc, double w, const Tensor& term) {
  if (w == 0.0) return acc;
  return nc::add(acc, nc::scale(term, w));
}

// Sum over rows of cos(a_i, b_i) for a, b [n x d].
Tensor row_cosine_sum(const Tensor& a, const Tensor& b) {
  return nc::sum(nc::mul(nc::l2_normalize_rows(a), nc::l2_normalize_rows(b)));
}

Tensor mean_abs_cross(const Tensor& rows, std::size_t head, std::size_t total) {
  if (head == 0 || head >= total) return zero();
  Tensor h = nc::l2_normalize_rows(nc::slice_rows(rows, 0, head));
  Tensor t = nc::l2_normalize_rows(nc::slice_rows(rows, head, total));
  return nc::mean(nc::abs(nc::matmul_nt(h, t)));
}

Tensor mean_abs_within(const Tensor& rows, std::size_t head, std::size_t total) {
  const std::size_t n = total - head;
  if (n < 2) return zero();
  Tensor t = nc::l2_normalize_rows(nc::slice_rows(rows, head, total));
  std::vector<double> mask(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0.0;
  Tensor g = nc::mul(nc::abs(nc::matmul_nt(t, t)), Tensor::matrix(n, n, std::move(mask)));
  return nc::scale(nc::sum(g), 1.0 / static_cast<double>(n * n - n));
}

}  // namespace

Tensor ce_total(const model::LogitsBundle& b, const Targets& t, const LossWeights& w) {
  Tensor acc = zero();
  if (w.alpha_a != 0.0) acc = weighted(acc, w.alpha_a, branch_nll(b.p_a, t.attr));
  if (w.alpha_o != 0.0) acc = weighted(acc, w.alpha_o, branch_nll(b.p_o, t.obj));
  if (w.alpha_c != 0.0) acc = weighted(acc, w.alpha_c, branch_nll(b.p_c, t.comp));
  return acc;
}

BranchOverlaps label_overlap(const prompts::PromptBank& teacher, const prompts::PromptBank& student) {
  BranchOverlaps o;
  for (std::size_t i = 0; i < teacher.attr_ids.size(); ++i) {
    if (auto s = student.attr_row(teacher.attr_ids[i])) {
      o.attr.teacher.push_back(i);
      o.attr.student.push_back(*s);
    }
  }
  for (std::size_t i = 0; i < teacher.obj_ids.size(); ++i) {
    if (auto s = student.obj_row(teacher.obj_ids[i])) {
      o.obj.teacher.push_back(i);
      o.obj.student.push_back(*s);
    }
  }
  for (std::size_t i = 0; i < teacher.comp_index.size(); ++i) {
    if (auto s = student.comp_position(teacher.comp_index[i])) {
      o.comp.teacher.push_back(i);
      o.comp.student.push_back(*s);
    }
  }
  return o;
}

Tensor cskd_branch(const Tensor& teacher_logits, const Tensor& student_logits, const Overlap& overlap, double tau) {
  if (!(tau > 0.0)) throw DomainError("distillation temperature must be positive");
  if (overlap.empty()) {
    log::notice("distillation branch has no overlapping labels; contributing 0");
    return zero();
  }
  if (overlap.teacher.size() != overlap.student.size()) throw DimensionError("overlap index lists differ in length");
  if (teacher_logits.rows() != student_logits.rows()) {
    throw DimensionError("teacher and student logits cover different batches: " +
                         nc::shape_string(teacher_logits.shape()) + " vs " + nc::shape_string(student_logits.shape()));
  }
  Tensor p_t, log_p_t;
  {
    nc::NoGradScope off;
    Tensor t = nc::gather_cols(teacher_logits, overlap.teacher).detached();
    p_t = nc::softmax_rows(t, tau);
    log_p_t = nc::log_softmax_rows(t, tau);
  }
  Tensor log_p_s = nc::log_softmax_rows(nc::gather_cols(student_logits, overlap.student), tau);
  Tensor kl = nc::sum(nc::mul(p_t, nc::sub(log_p_t, log_p_s)));
  return nc::scale(kl, tau * tau / static_cast<double>(student_logits.rows()));
}

Tensor cskd_total(std::span<const TeacherLogits> teachers, const model::LogitsBundle& student,
                  std::span<const double> pi, const LossWeights& w) {
  if (pi.size() != teachers.size()) {
    throw ConfigError("recency weights cover " + std::to_string(pi.size()) + " teachers, but " +
                      std::to_string(teachers.size()) + " are present");
  }
  Tensor acc = zero();
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    const TeacherLogits& tl = teachers[t];
    Tensor branch = zero();
    if (w.branch_a != 0.0) branch = weighted(branch, w.branch_a, cskd_branch(tl.z_a, student.z_a, tl.overlap.attr, w.tau_kd));
    if (w.branch_o != 0.0) branch = weighted(branch, w.branch_o, cskd_branch(tl.z_o, student.z_o, tl.overlap.obj, w.tau_kd));
    if (w.branch_c != 0.0) branch = weighted(branch, w.branch_c, cskd_branch(tl.z_c, student.z_c, tl.overlap.comp, w.tau_kd));
    acc = weighted(acc, pi[t], branch);
  }
  return acc;
}

Tensor cal(const prompts::PromptBank& student, const prompts::PromptBank& teacher, const Overlap& attr_overlap,
           const Overlap& obj_overlap) {
  Tensor acc = zero();
  auto term = [&](const Tensor& s_rows, const Tensor& t_rows, const Overlap& ov) {
    if (ov.empty()) return;
    Tensor anchor;
    {
      nc::NoGradScope off;
      anchor = nc::gather_rows(t_rows, ov.teacher).detached();
    }
    Tensor cos_sum = row_cosine_sum(nc::gather_rows(s_rows, ov.student), anchor);
    acc = nc::add(acc, nc::sub(Tensor::scalar(static_cast<double>(ov.student.size())), cos_sum));
  };
  term(student.attr_rows, teacher.attr_rows, attr_overlap);
  term(student.obj_rows, teacher.obj_rows, obj_overlap);
  return acc;
}

Tensor opl(const prompts::PromptBank& bank, const prompts::HeadTailPartition& p) {
  return nc::add(mean_abs_cross(bank.attr_rows, p.attr_head, p.attr_total),
                 mean_abs_cross(bank.obj_rows, p.obj_head, p.obj_total));
}

Tensor idl(const prompts::PromptBank& bank, const prompts::HeadTailPartition& p) {
  return nc::add(mean_abs_within(bank.attr_rows, p.attr_head, p.attr_total),
                 mean_abs_within(bank.obj_rows, p.obj_head, p.obj_total));
}

Tensor total(const LossComponents& c, const LossWeights& w) {
  const std::pair<const char*, const Tensor*> parts[] = {
      {"ce", &c.ce}, {"kd", &c.kd}, {"cal", &c.cal}, {"opl", &c.opl}, {"idl", &c.idl}};
  for (const auto& [name, t] : parts) {
    if (t->size() != 1) throw DimensionError(std::string("loss component ") + name + " is not a scalar");
    if (!std::isfinite(t->item())) throw NumericError(std::string("loss component ") + name + " is not finite");
  }
  Tensor acc = zero();
  acc = weighted(acc, w.lambda_ce, c.ce);
  acc = weighted(acc, w.lambda_kd, c.kd);
  acc = weighted(acc, w.lambda_cal, c.cal);
  acc = weighted(acc, w.lambda_opl, c.opl);
  acc = weighted(acc, w.lambda_idl, c.idl);
  return acc;
}

std::vector<double> recency_weights(std::size_t n, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("recency gamma must lie in (0,1]");
  std::vector<double> pi(n);
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    pi[t] = std::pow(gamma, static_cast<double>(n - 1 - t));
    s += pi[t];
  }
  for (double& v : pi) v /= s;
  return pi;
}

}  // namespace cczsl::losses
