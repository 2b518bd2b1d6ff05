// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xkd/autograd/tensor.hpp"

namespace xkd {

// ---- Reconstruction ----

/// Per-row standardization (mean 0, variance 1, epsilon 1e-6). No gradient.
Tensor standardize_patches(const Tensor& patches);

struct ReconLoss {
    Tensor value;        // shape [1]
    bool empty = false;  // no masked tokens; value is 0
};

/// Mean squared error over all entries of an N_m x D_patch pair.
ReconLoss recon_loss(const Tensor& pred, const Tensor& target);
/// Video loss plus audio loss.
Tensor joint_recon_loss(const Tensor& pred_v, const Tensor& target_v, const Tensor& pred_a, const Tensor& target_a);

// ---- Cross-modal attention and refinement ----

enum class CrossAttentionVariant { Scale, Softmax };

std::string to_string(CrossAttentionVariant v);
std::optional<CrossAttentionVariant> parse_cross_attention(const std::string& s);

struct CrossModalWeights {
    Tensor video;        // H x N_v
    Tensor audio;        // H x N_a
    Tensor scale_video;  // H x 1, mean of each A_v row
    Tensor scale_audio;  // H x 1
};

/// Mean-pools each head's outer product A_v[h] (x) A_a[h] over the other
/// modality's positions, then divides by the head's own mean attention
/// (Scale) or applies a softmax over positions (Softmax).
CrossModalWeights cross_modal_attention(const Tensor& attn_video, const Tensor& attn_audio,
                                        CrossAttentionVariant variant = CrossAttentionVariant::Scale);

struct RefineResult {
    Tensor features;
    bool skipped = false;  // weighted features had zero energy; input returned
};

/// Rows scaled by the head-mean weight, then rescaled by
/// ||x||^2 / ||scaled||^2.
RefineResult refine(const Tensor& features, const Tensor& cross_weights);

// ---- Kernels and domain alignment ----

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma);

struct KernelConfig {
    std::optional<double> sigma;  // unset: median heuristic
};

/// Median pairwise Euclidean distance over the rows of X and Y pooled;
/// 1 when every distance is zero.
double median_heuristic_sigma(const Tensor& x, const Tensor& y);

/// n x m Gaussian kernel matrix.
Tensor kernel_matrix(const Tensor& x, const Tensor& y, double sigma);

/// Biased V-statistic of squared MMD. A median-heuristic sigma is treated as
/// a constant.
Tensor mmd(const Tensor& x, const Tensor& y, const KernelConfig& cfg = {});

enum class AlignmentVariant { Da, Da1, Da2 };

std::string to_string(AlignmentVariant v);
std::optional<AlignmentVariant> parse_alignment(const std::string& s);

/// Da: mmd(s_v, s_a) + mmd(t_v, t_a). Da1: mmd(t_a, s_v) + mmd(t_v, s_a). Da2: both.
Tensor domain_alignment_loss(const Tensor& student_v, const Tensor& student_a, const Tensor& teacher_v,
                             const Tensor& teacher_a, AlignmentVariant variant = AlignmentVariant::Da,
                             const KernelConfig& cfg = {});

// ---- Distillation ----

/// Row-wise softmax(f / tau).
Tensor sharpen(const Tensor& logits, double tau);

struct CenterState {
    std::vector<double> center;  // empty until first use, then J zeros
    double momentum = 0.9;
};

/// Returns f - c with the current center, then moves c toward the batch
/// column mean. The result carries no gradient.
Tensor center_apply_update(const Tensor& teacher_logits, CenterState& state);

inline constexpr double kLogFloor = 1e-12;

/// Cross-entropy from each teacher to the other modality's student views,
/// averaged over views and batch rows. Teacher terms are detached.
Tensor kd_loss(const Tensor& teacher_v, const Tensor& teacher_a, const std::vector<Tensor>& student_a_views,
               const std::vector<Tensor>& student_v_views);

/// Mean over views and rows of KL(teacher || student).
double mean_kl(const Tensor& teacher, const std::vector<Tensor>& student_views);

struct LossWeights {
    double ae = 5.0;
    double da = 1.0;
    double kd = 1.0;
};

Tensor total_loss(const Tensor& l_ae, const Tensor& l_da, const Tensor& l_kd, const LossWeights& w);

}  // namespace xkd
