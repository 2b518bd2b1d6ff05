// SPDX-License-Identifier: Apache-2.0
#include "xkd/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"
#include "xkd/core/rng.hpp"
#include "xkd/views/embed.hpp"

namespace xkd {

namespace {

std::vector<Tensor> tensors(const NamedParams& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& [_, t] : named) out.push_back(t);
    return out;
}

double norm_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void check_finite(double value, const char* term, std::uint64_t step) {
    if (!std::isfinite(value))
        throw NonFiniteError(std::string("non-finite ") + term + " at step " + std::to_string(step));
}

/// Student features of one view for the whole batch: B x J.
Tensor project_rows(const Network& net, const std::vector<Tensor>& token_sets) {
    std::vector<Tensor> pooled;
    pooled.reserve(token_sets.size());
    for (const auto& t : token_sets) pooled.push_back(mean_pool(t));
    return project(net.head, ops::concat(pooled, 0));
}

Tensor encode_full(const Network& net, const TokenBatch& tokens) {
    return encode(*net.backbone, embed(tokens, net.embed, false)).tokens;
}

/// Teacher distribution input: refined, pooled, projected. No gradient.
struct TeacherPass {
    Tensor video;  // B x J
    Tensor audio;
};

TeacherPass teacher_forward(const ModelSet& m, const std::vector<TokenBatch>& gv, const std::vector<TokenBatch>& ga,
                            const TrainConfig& cfg) {
    NoGradGuard no_grad;
    std::vector<Tensor> rows_v, rows_a;
    for (std::size_t b = 0; b < gv.size(); ++b) {
        const EncoderOutput ov = encode(*m.teacher_video.backbone, embed(gv[b], m.teacher_video.embed, false));
        const EncoderOutput oa = encode(*m.teacher_audio.backbone, embed(ga[b], m.teacher_audio.embed, false));
        const CrossModalWeights cw = cross_modal_attention(ov.attn, oa.attn, cfg.cross_attention);
        rows_v.push_back(mean_pool(refine(ov.tokens, cw.video).features));
        rows_a.push_back(mean_pool(refine(oa.tokens, cw.audio).features));
    }
    return {project(m.teacher_video.head, ops::concat(rows_v, 0)), project(m.teacher_audio.head, ops::concat(rows_a, 0))};
}

}  // namespace

void TrainConfig::validate() const {
    require(batch_size >= 1, "batch_size must be at least 1");
    require(mask_ratio_video >= 0.0 && mask_ratio_video < 1.0, "mask_ratio_video must lie in [0, 1)");
    require(mask_ratio_audio >= 0.0 && mask_ratio_audio < 1.0, "mask_ratio_audio must lie in [0, 1)");
    for (const Schedule* s : {&ema_video, &ema_audio})
        require(s->base >= 0.0 && s->base <= 1.0 && s->final >= 0.0 && s->final <= 1.0,
                "EMA coefficients must lie in [0, 1]");
    require(sharpen.tau_student > 0.0, "tau_student must be positive");
    for (const Schedule* s : {&sharpen.tau_teacher_video, &sharpen.tau_teacher_audio})
        require(s->base > 0.0 && s->final > 0.0, "teacher temperatures must be positive");
    require(center_momentum >= 0.0 && center_momentum <= 1.0, "center_momentum must lie in [0, 1]");
    require(collapse_window >= 1, "collapse_window must be at least 1");
    require(views.n_local >= 1, "views.n_local must be at least 1");
    require(weights.ae >= 0.0 && weights.da >= 0.0 && weights.kd >= 0.0, "loss weights must be non-negative");
}

Schedule resolve_schedule(Schedule s, std::uint64_t run_steps) {
    if (s.total_steps == 0) s.total_steps = std::max<std::uint64_t>(run_steps, 1);
    return s;
}

std::string to_string(CollapseStatus s) {
    switch (s) {
        case CollapseStatus::Healthy: return "healthy";
        case CollapseStatus::KdCollapse: return "kd-collapse";
        case CollapseStatus::KldCollapse: return "kld-collapse";
    }
    return "unknown";
}

CollapseVerdict collapse_monitor(std::span<const LossRecord> history, double eps, std::size_t window) {
    require(window >= 1, "collapse_monitor: window must be at least 1");
    CollapseVerdict v;
    if (history.size() < window) return v;
    const auto tail = history.last(window);
    for (const auto& r : tail) {
        v.window_kd += r.l_kd;
        v.window_kl += 0.5 * (r.kl_v2a + r.kl_a2v);
    }
    v.window_kd /= static_cast<double>(window);
    v.window_kl /= static_cast<double>(window);
    v.step = tail.back().step;
    if (v.window_kd < eps)
        v.status = CollapseStatus::KdCollapse;
    else if (v.window_kl < eps)
        v.status = CollapseStatus::KldCollapse;
    return v;
}

TrainState TrainState::init(const ModelSet& models, const TrainConfig& cfg) {
    TrainState s;
    const Schedule lr = Schedule::warmup_cosine(cfg.optim.lr, cfg.optim.final_lr,
                                                std::min(cfg.optim.warmup_steps, cfg.steps),
                                                std::max<std::uint64_t>(cfg.steps, 1));
    s.optimizer = OptimizerState::for_params(tensors(models.trainable_parameters()), cfg.optim.betas,
                                             cfg.optim.weight_decay, lr);
    s.center_video.momentum = cfg.center_momentum;
    s.center_audio.momentum = cfg.center_momentum;
    return s;
}

void ema_update(Tensor& teacher, const Tensor& student, double lambda) {
    if (teacher.shape() != student.shape())
        throw ShapeError("ema_update: teacher " + shape_string(teacher.shape()) + " vs student " +
                         shape_string(student.shape()));
    require(lambda >= 0.0 && lambda <= 1.0, "ema_update: lambda must lie in [0, 1]");
    auto t = teacher.mutable_values();
    const auto s = student.values();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = lambda * t[i] + (1.0 - lambda) * s[i];
}

LossRecord train_step(ModelSet& models, std::span<const ClipPair> batch, const TrainConfig& cfg, TrainState& state) {
    require(!batch.empty(), "train_step: batch is empty");
    const std::uint64_t k = state.step;
    const std::size_t n_local = cfg.views.n_local;
    Rng view_rng = Rng::stream(cfg.seed, "views", k);
    Rng mask_rng = Rng::stream(cfg.seed, "masks", k);

    std::vector<ViewSet> views;
    views.reserve(batch.size());
    for (const auto& clip : batch) views.push_back(make_views(clip, cfg.views, view_rng));

    std::vector<TokenBatch> gv, ga, mv, ma;
    for (const auto& v : views) {
        gv.push_back(patchify(v.global_video, cfg.video_patch));
        ga.push_back(patchify(v.global_audio, cfg.audio_patch));
        mv.push_back(mask_tokens(gv.back(), cfg.mask_ratio_video, mask_rng));
        ma.push_back(mask_tokens(ga.back(), cfg.mask_ratio_audio, mask_rng));
    }

    // Masked reconstruction with the student encoders.
    const Network& sv = models.student_video;
    const Network& sa = models.student_audio;
    std::vector<Tensor> kept_v, kept_a, pred_v, pred_a, target_v, target_a;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const EncoderOutput ev = encode(*sv.backbone, embed(mv[b], sv.embed, true));
        pred_v.push_back(decode(models.decoder_video, ev, mv[b]));
        const EncoderOutput ea = encode(*sa.backbone, embed(ma[b], sa.embed, true));
        pred_a.push_back(decode(models.decoder_audio, ea, ma[b]));
        kept_v.push_back(ev.tokens);
        kept_a.push_back(ea.tokens);
        const auto iv = mv[b].masked_indices();
        const auto ia = ma[b].masked_indices();
        target_v.push_back(standardize_patches(ops::gather_rows(gv[b].tokens, iv)));
        target_a.push_back(standardize_patches(ops::gather_rows(ga[b].tokens, ia)));
    }
    const Tensor l_ae = joint_recon_loss(ops::concat(pred_v, 0), ops::concat(target_v, 0), ops::concat(pred_a, 0),
                                         ops::concat(target_a, 0));

    const TeacherPass teacher = teacher_forward(models, gv, ga, cfg);

    // Student features: masked global first, then every local view.
    std::vector<Tensor> fs_v{project_rows(sv, kept_v)};
    std::vector<Tensor> fs_a{project_rows(sa, kept_a)};
    for (std::size_t l = 0; l < n_local; ++l) {
        std::vector<Tensor> lv, la;
        for (const auto& v : views) {
            lv.push_back(encode_full(sv, patchify(v.local_videos[l], cfg.video_patch)));
            la.push_back(encode_full(sa, patchify(v.local_audios[l], cfg.audio_patch)));
        }
        fs_v.push_back(project_rows(sv, lv));
        fs_a.push_back(project_rows(sa, la));
    }

    const Tensor l_da = domain_alignment_loss(ops::concat(fs_v, 0), ops::concat(fs_a, 0), teacher.video,
                                              teacher.audio, cfg.alignment, cfg.kernel);

    const double tau_tv = schedule_value(resolve_schedule(cfg.sharpen.tau_teacher_video, cfg.steps), k);
    const double tau_ta = schedule_value(resolve_schedule(cfg.sharpen.tau_teacher_audio, cfg.steps), k);
    const Tensor centered_v = cfg.centering ? center_apply_update(teacher.video, state.center_video) : teacher.video;
    const Tensor centered_a = cfg.centering ? center_apply_update(teacher.audio, state.center_audio) : teacher.audio;
    const Tensor pt_v = sharpen(centered_v, tau_tv);
    const Tensor pt_a = sharpen(centered_a, tau_ta);
    std::vector<Tensor> ps_v, ps_a;
    for (const auto& f : fs_v) ps_v.push_back(sharpen(f, cfg.sharpen.tau_student));
    for (const auto& f : fs_a) ps_a.push_back(sharpen(f, cfg.sharpen.tau_student));
    const Tensor l_kd = kd_loss(pt_v, pt_a, ps_a, ps_v);

    const Tensor total = total_loss(l_ae, l_da, l_kd, cfg.weights);

    LossRecord rec;
    rec.step = k + 1;
    rec.l_ae = l_ae.item();
    rec.l_da = l_da.item();
    rec.l_kd = l_kd.item();
    rec.l_xkd = total.item();
    check_finite(rec.l_ae, "L_ae", rec.step);
    check_finite(rec.l_da, "L_da", rec.step);
    check_finite(rec.l_kd, "L_kd", rec.step);
    check_finite(rec.l_xkd, "L_xkd", rec.step);
    rec.kl_v2a = mean_kl(pt_v, ps_a);
    rec.kl_a2v = mean_kl(pt_a, ps_v);
    rec.tau_tv = tau_tv;
    rec.tau_ta = tau_ta;

    const std::vector<Tensor> params = tensors(models.trainable_parameters());
    zero_grads(params);
    total.backward();
    // Parameters outside this step's graph (the mask token under a zero mask) take a zero gradient.
    for (const auto& p : params) p.node().ensure_grad();
    optimizer_step(params, state.optimizer);

    const double lambda_v = schedule_value(resolve_schedule(cfg.ema_video, cfg.steps), k);
    const double lambda_a = schedule_value(resolve_schedule(cfg.ema_audio, cfg.steps), k);
    for (auto& pair : ema_pairs(models, lambda_v, lambda_a)) ema_update(pair.teacher, pair.student, pair.lambda);
    rec.ema = lambda_v;
    rec.center_norm_video = norm_of(state.center_video.center);
    rec.center_norm_audio = norm_of(state.center_audio.center);

    state.step = k + 1;
    return rec;
}

std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::uint64_t step, std::size_t dataset_size) {
    require(dataset_size > 0, "batch_indices: dataset is empty");
    Rng rng = Rng::stream(cfg.seed, "data", step);
    if (dataset_size >= cfg.batch_size) return rng.sample_without_replacement(dataset_size, cfg.batch_size);
    std::vector<std::size_t> out(cfg.batch_size);
    for (auto& i : out) i = static_cast<std::size_t>(rng.below(dataset_size));
    return out;
}

void write_metrics_row(std::ostream& out, const LossRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.step), r.l_ae, r.l_da, r.l_kd, r.l_xkd, r.kl_v2a, r.kl_a2v,
                  r.ema, r.tau_tv, r.tau_ta);
    out << buf;
}

PretrainResult run_pretraining(ModelSet& models, TrainState& state, const TrainConfig& cfg,
                               const std::vector<ClipPair>& data, std::ostream* metrics,
                               const PretrainCallbacks& callbacks) {
    cfg.validate();
    PretrainResult result;
    if (metrics && state.step == 0) *metrics << kMetricsHeader << '\n';
    if (state.step >= cfg.steps) return result;
    require(!data.empty(), "run_pretraining: dataset is empty");
    std::vector<ClipPair> batch;
    while (state.step < cfg.steps) {
        batch.clear();
        for (std::size_t i : batch_indices(cfg, state.step, data.size())) batch.push_back(data[i]);
        const LossRecord rec = train_step(models, batch, cfg, state);
        result.history.push_back(rec);
        if (metrics) {
            write_metrics_row(*metrics, rec);
            metrics->flush();
        }
        if (callbacks.on_step) callbacks.on_step(rec, models, state);
        const CollapseVerdict v = collapse_monitor(result.history, cfg.collapse_eps, cfg.collapse_window);
        if (result.verdict.status == CollapseStatus::Healthy) result.verdict = v;
        if (v.status != CollapseStatus::Healthy && cfg.stop_on_collapse) {
            result.stopped_early = true;
            break;
        }
    }
    return result;
}

}  // namespace xkd
