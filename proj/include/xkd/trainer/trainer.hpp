// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "xkd/autograd/optim.hpp"
#include "xkd/autograd/schedule.hpp"
#include "xkd/backbone/model_set.hpp"
#include "xkd/objectives/losses.hpp"
#include "xkd/views/views.hpp"

namespace xkd {

// Schedules below with total_steps == 0 span the whole run (TrainConfig::steps).

struct SharpenConfig {
    double tau_student = 0.1;
    Schedule tau_teacher_video = Schedule::cosine(0.04, 0.06, 0);
    Schedule tau_teacher_audio = Schedule::cosine(0.04, 0.06, 0);
};

struct OptimConfig {
    double lr = 1e-3;
    double final_lr = 0.0;
    std::uint64_t warmup_steps = 10;
    std::pair<double, double> betas{0.9, 0.95};
    double weight_decay = 0.3;
};

struct TrainConfig {
    std::uint64_t steps = 200;
    std::size_t batch_size = 8;
    LossWeights weights;
    SharpenConfig sharpen;
    double mask_ratio_video = 0.85;
    double mask_ratio_audio = 0.80;
    Schedule ema_video = Schedule::cosine(0.997, 1.0, 0);
    Schedule ema_audio = Schedule::cosine(0.997, 1.0, 0);
    OptimConfig optim;
    Variant variant = Variant::MS;
    ViewConfig views;
    VideoPatch video_patch;
    AudioPatch audio_patch;
    bool centering = true;
    double center_momentum = 0.9;
    AlignmentVariant alignment = AlignmentVariant::Da;
    CrossAttentionVariant cross_attention = CrossAttentionVariant::Scale;
    KernelConfig kernel;
    std::size_t collapse_window = 50;
    double collapse_eps = 1e-3;
    bool stop_on_collapse = false;
    std::uint64_t seed = 0;

    /// Throws ContractError naming the first out-of-range field.
    void validate() const;
};

/// `s` with total_steps resolved against the run length.
Schedule resolve_schedule(Schedule s, std::uint64_t run_steps);

struct LossRecord {
    std::uint64_t step = 0;  // 1-based index of the completed step
    double l_ae = 0, l_da = 0, l_kd = 0, l_xkd = 0;
    double kl_v2a = 0;  // KL(video teacher || audio students)
    double kl_a2v = 0;
    double center_norm_video = 0, center_norm_audio = 0;
    double ema = 0;  // video coefficient applied this step
    double tau_tv = 0, tau_ta = 0;
};

enum class CollapseStatus { Healthy, KdCollapse, KldCollapse };

std::string to_string(CollapseStatus s);

struct CollapseVerdict {
    CollapseStatus status = CollapseStatus::Healthy;
    double window_kd = 0.0;  // trailing means; 0 until a full window exists
    double window_kl = 0.0;
    std::uint64_t step = 0;  // record step at which the verdict was reached
};

/// Healthy until `window` records exist, then judged on the trailing window.
CollapseVerdict collapse_monitor(std::span<const LossRecord> history, double eps, std::size_t window);

/// Mutable training state besides the parameters themselves.
struct TrainState {
    OptimizerState optimizer;
    CenterState center_video;  // applied to the video teacher's outputs
    CenterState center_audio;
    std::uint64_t step = 0;

    static TrainState init(const ModelSet& models, const TrainConfig& cfg);
};

/// theta_t <- lambda * theta_t + (1 - lambda) * theta_s.
void ema_update(Tensor& teacher, const Tensor& student, double lambda);

/// One iteration of the training algorithm on `batch`. Leaves the gradients
/// of the trainable parameters in place.
LossRecord train_step(ModelSet& models, std::span<const ClipPair> batch, const TrainConfig& cfg, TrainState& state);

/// Clip indices for a step, drawn from the "data" stream without replacement
/// when the dataset is large enough.
std::vector<std::size_t> batch_indices(const TrainConfig& cfg, std::uint64_t step, std::size_t dataset_size);

inline constexpr const char* kMetricsHeader = "step,L_ae,L_da,L_kd,L_xkd,kl_v2a,kl_a2v,ema,tau_tv,tau_ta";
void write_metrics_row(std::ostream& out, const LossRecord& r);

struct PretrainCallbacks {
    std::function<void(const LossRecord&, const ModelSet&, const TrainState&)> on_step;
};

struct PretrainResult {
    std::vector<LossRecord> history;
    CollapseVerdict verdict;  // first non-healthy verdict, else the last one
    bool stopped_early = false;
};

/// Runs steps state.step .. cfg.steps - 1. Writes the metrics header when
/// starting from step 0, then one row per step.
PretrainResult run_pretraining(ModelSet& models, TrainState& state, const TrainConfig& cfg,
                               const std::vector<ClipPair>& data, std::ostream* metrics = nullptr,
                               const PretrainCallbacks& callbacks = {});

}  // namespace xkd
