// SPDX-License-Identifier: Apache-2.0
#include "xkd/objectives/losses.hpp"

#include <algorithm>
#include <cmath>

#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"

namespace xkd {

Tensor standardize_patches(const Tensor& patches) {
    require(patches.rank() == 2, "standardize_patches: expected a matrix");
    const std::size_t rows = patches.size(0), cols = patches.size(1);
    const auto v = patches.values();
    std::vector<double> out(v.size());
    for (std::size_t r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += v[r * cols + c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (v[r * cols + c] - mean) * (v[r * cols + c] - mean);
        var /= static_cast<double>(cols);
        const double inv = 1.0 / std::sqrt(var + ops::kNormEps);
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = (v[r * cols + c] - mean) * inv;
    }
    return Tensor(patches.shape(), std::move(out));
}

ReconLoss recon_loss(const Tensor& pred, const Tensor& target) {
    require(pred.shape() == target.shape(), "recon_loss: prediction " + shape_string(pred.shape()) +
                                                " and target " + shape_string(target.shape()) + " differ");
    if (pred.numel() == 0) return {Tensor::scalar(0.0), true};
    return {ops::mean(ops::square(ops::sub(pred, target.detach()))), false};
}

Tensor joint_recon_loss(const Tensor& pred_v, const Tensor& target_v, const Tensor& pred_a, const Tensor& target_a) {
    return ops::add(recon_loss(pred_v, target_v).value, recon_loss(pred_a, target_a).value);
}

std::string to_string(CrossAttentionVariant v) { return v == CrossAttentionVariant::Scale ? "scale" : "softmax"; }

std::optional<CrossAttentionVariant> parse_cross_attention(const std::string& s) {
    if (s == "scale") return CrossAttentionVariant::Scale;
    if (s == "softmax") return CrossAttentionVariant::Softmax;
    return std::nullopt;
}

CrossModalWeights cross_modal_attention(const Tensor& attn_video, const Tensor& attn_audio,
                                        CrossAttentionVariant variant) {
    require(attn_video.rank() == 2 && attn_audio.rank() == 2, "cross_modal_attention: expected H x N maps");
    require(attn_video.size(0) == attn_audio.size(0),
            "cross_modal_attention: head counts " + std::to_string(attn_video.size(0)) + " and " +
                std::to_string(attn_audio.size(0)) + " differ");
    CrossModalWeights w;
    w.scale_video = ops::mean(attn_video, 1, true);
    w.scale_audio = ops::mean(attn_audio, 1, true);
    // mean_j A_v[h,i] A_a[h,j] factors as A_v[h,i] * mean_j A_a[h,j].
    const Tensor pooled_v = ops::mul(attn_video, w.scale_audio);
    const Tensor pooled_a = ops::mul(attn_audio, w.scale_video);
    if (variant == CrossAttentionVariant::Scale) {
        w.video = ops::div(pooled_v, w.scale_video);
        w.audio = ops::div(pooled_a, w.scale_audio);
    } else {
        w.video = ops::softmax(pooled_v);
        w.audio = ops::softmax(pooled_a);
    }
    return w;
}

RefineResult refine(const Tensor& features, const Tensor& cross_weights) {
    require(features.rank() == 2 && cross_weights.rank() == 2 && features.size(0) == cross_weights.size(1),
            "refine: " + shape_string(features.shape()) + " features do not match weights " +
                shape_string(cross_weights.shape()));
    const std::size_t n = features.size(0);
    const Tensor w = ops::reshape(ops::mean(cross_weights, 0), {n, 1});
    const Tensor scaled = ops::mul(features, w);
    const Tensor scaled_energy = ops::sum(ops::square(scaled));
    if (scaled_energy.item() == 0.0) return {features, true};
    const Tensor omega = ops::div(ops::sum(ops::square(features)), scaled_energy);
    return {ops::mul(scaled, omega), false};
}

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
    require(x.size() == y.size(), "gaussian_kernel: dimension mismatch");
    require(sigma > 0.0, "gaussian_kernel: sigma must be positive");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

double median_heuristic_sigma(const Tensor& x, const Tensor& y) {
    require(x.rank() == 2 && y.rank() == 2 && x.size(1) == y.size(1), "median_heuristic_sigma: sample widths differ");
    const std::size_t d = x.size(1);
    std::vector<std::span<const double>> rows;
    for (const Tensor* t : {&x, &y})
        for (std::size_t r = 0; r < t->size(0); ++r) rows.push_back(t->values().subspan(r * d, d));
    std::vector<double> dist;
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += (rows[i][k] - rows[j][k]) * (rows[i][k] - rows[j][k]);
            dist.push_back(std::sqrt(s));
        }
    if (dist.empty()) return 1.0;
    const std::size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + static_cast<long>(mid), dist.end());
    double med = dist[mid];
    if (dist.size() % 2 == 0) med = 0.5 * (med + *std::max_element(dist.begin(), dist.begin() + static_cast<long>(mid)));
    return med > 0.0 ? med : 1.0;
}

Tensor kernel_matrix(const Tensor& x, const Tensor& y, double sigma) {
    require(sigma > 0.0, "kernel_matrix: sigma must be positive");
    require(x.rank() == 2 && y.rank() == 2 && x.size(1) == y.size(1), "kernel_matrix: sample widths differ");
    const Tensor sx = ops::sum(ops::square(x), 1, true);                   // n x 1
    const Tensor sy = ops::transpose(ops::sum(ops::square(y), 1, true));  // 1 x m
    const Tensor d2 = ops::sub(ops::add(sx, sy), ops::scale(ops::matmul(x, ops::transpose(y)), 2.0));
    return ops::exp(ops::scale(d2, -1.0 / (2.0 * sigma * sigma)));
}

Tensor mmd(const Tensor& x, const Tensor& y, const KernelConfig& cfg) {
    require(x.rank() == 2 && y.rank() == 2 && x.size(0) >= 1 && y.size(0) >= 1, "mmd: empty sample set");
    const double sigma = cfg.sigma ? *cfg.sigma : median_heuristic_sigma(x, y);
    const Tensor kxx = ops::mean(kernel_matrix(x, x, sigma));
    const Tensor kyy = ops::mean(kernel_matrix(y, y, sigma));
    const Tensor kxy = ops::mean(kernel_matrix(x, y, sigma));
    return ops::sub(ops::add(kxx, kyy), ops::scale(kxy, 2.0));
}

std::string to_string(AlignmentVariant v) {
    switch (v) {
        case AlignmentVariant::Da: return "da";
        case AlignmentVariant::Da1: return "da1";
        case AlignmentVariant::Da2: return "da2";
    }
    return "unknown";
}

std::optional<AlignmentVariant> parse_alignment(const std::string& s) {
    for (auto v : {AlignmentVariant::Da, AlignmentVariant::Da1, AlignmentVariant::Da2})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

Tensor domain_alignment_loss(const Tensor& student_v, const Tensor& student_a, const Tensor& teacher_v,
                             const Tensor& teacher_a, AlignmentVariant variant, const KernelConfig& cfg) {
    const Tensor tv = teacher_v.detach(), ta = teacher_a.detach();
    auto da = [&] { return ops::add(mmd(student_v, student_a, cfg), mmd(tv, ta, cfg)); };
    auto da1 = [&] { return ops::add(mmd(ta, student_v, cfg), mmd(tv, student_a, cfg)); };
    switch (variant) {
        case AlignmentVariant::Da: return da();
        case AlignmentVariant::Da1: return da1();
        case AlignmentVariant::Da2: return ops::add(da(), da1());
    }
    throw ContractError("domain_alignment_loss: unknown variant");
}

Tensor sharpen(const Tensor& logits, double tau) {
    require(tau > 0.0, "sharpen: temperature must be positive");
    return ops::softmax(ops::scale(logits, 1.0 / tau));
}

Tensor center_apply_update(const Tensor& teacher_logits, CenterState& state) {
    require(teacher_logits.rank() == 2 && teacher_logits.size(0) >= 1, "center_apply_update: empty batch");
    const std::size_t b = teacher_logits.size(0), j = teacher_logits.size(1);
    if (state.center.empty()) state.center.assign(j, 0.0);
    require(state.center.size() == j, "center_apply_update: center width does not match the logits");
    const auto v = teacher_logits.values();
    std::vector<double> out(v.size()), colmean(j, 0.0);
    for (std::size_t r = 0; r < b; ++r)
        for (std::size_t c = 0; c < j; ++c) {
            out[r * j + c] = v[r * j + c] - state.center[c];
            colmean[c] += v[r * j + c];
        }
    for (std::size_t c = 0; c < j; ++c)
        state.center[c] = state.momentum * state.center[c] + (1.0 - state.momentum) * (colmean[c] / static_cast<double>(b));
    return Tensor(teacher_logits.shape(), std::move(out));
}

namespace {

void require_distribution(const Tensor& p, const char* what) {
    require(p.rank() == 2, std::string("kd_loss: ") + what + " must be a matrix of distributions");
    const std::size_t j = p.size(1);
    const auto v = p.values();
    for (std::size_t r = 0; r < p.size(0); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < j; ++c) s += v[r * j + c];
        require(std::abs(s - 1.0) <= 1e-6, std::string("kd_loss: ") + what + " row " + std::to_string(r) +
                                               " sums to " + std::to_string(s));
    }
}

// -mean_rows sum_j t * log(s), averaged over views.
Tensor cross_entropy(const Tensor& teacher, const std::vector<Tensor>& views) {
    require(!views.empty(), "kd_loss: no student views");
    require_distribution(teacher, "teacher");
    std::vector<Tensor> terms;
    for (const auto& s : views) {
        require_distribution(s, "student");
        require(s.shape() == teacher.shape(), "kd_loss: student view " + shape_string(s.shape()) +
                                                  " does not match teacher " + shape_string(teacher.shape()));
        terms.push_back(ops::mean(ops::sum(ops::mul(teacher, ops::log(s, kLogFloor)), 1)));
    }
    Tensor total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
    return ops::scale(total, -1.0 / static_cast<double>(terms.size()));
}

}  // namespace

Tensor kd_loss(const Tensor& teacher_v, const Tensor& teacher_a, const std::vector<Tensor>& student_a_views,
               const std::vector<Tensor>& student_v_views) {
    return ops::add(cross_entropy(teacher_v.detach(), student_a_views), cross_entropy(teacher_a.detach(), student_v_views));
}

double mean_kl(const Tensor& teacher, const std::vector<Tensor>& student_views) {
    require(!student_views.empty(), "mean_kl: no student views");
    const std::size_t b = teacher.size(0), j = teacher.size(1);
    const auto t = teacher.values();
    double total = 0.0;
    for (const auto& s : student_views) {
        require(s.shape() == teacher.shape(), "mean_kl: shape mismatch");
        const auto sv = s.values();
        for (std::size_t i = 0; i < b * j; ++i)
            if (t[i] > 0.0) total += t[i] * (std::log(std::max(t[i], kLogFloor)) - std::log(std::max(sv[i], kLogFloor)));
    }
    return total / static_cast<double>(b * student_views.size());
}

Tensor total_loss(const Tensor& l_ae, const Tensor& l_da, const Tensor& l_kd, const LossWeights& w) {
    require(w.ae >= 0.0 && w.da >= 0.0 && w.kd >= 0.0, "total_loss: weights must be non-negative");
    return ops::add(ops::add(ops::scale(l_ae, w.ae), ops::scale(l_da, w.da)), ops::scale(l_kd, w.kd));
}

}  // namespace xkd
