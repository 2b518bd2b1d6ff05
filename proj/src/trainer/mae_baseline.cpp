// SPDX-License-Identifier: Apache-2.0
#include "xkd/trainer/mae_baseline.hpp"

#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"
#include "xkd/core/rng.hpp"
#include "xkd/views/embed.hpp"

namespace xkd {

namespace {

std::vector<Tensor> tensors(const NamedParams& named) {
    std::vector<Tensor> out;
    for (const auto& [_, t] : named) out.push_back(t);
    return out;
}

/// Masked reconstruction loss of one modality's clip.
struct Recon {
    Tensor pred, target;
};

Recon reconstruct(const Network& net, const Decoder& dec, const TokenBatch& full, const TokenBatch& masked) {
    const EncoderOutput enc = encode(*net.backbone, embed(masked, net.embed, true));
    return {decode(dec, enc, masked), standardize_patches(ops::gather_rows(full.tokens, masked.masked_indices()))};
}

}  // namespace

MaeBaseline::MaeBaseline(ModelSet m, const TrainConfig& cfg) : models(std::move(m)) {
    const Schedule lr = Schedule::warmup_cosine(cfg.optim.lr, cfg.optim.final_lr,
                                                std::min(cfg.optim.warmup_steps, cfg.steps),
                                                std::max<std::uint64_t>(cfg.steps, 1));
    optimizer = OptimizerState::for_params(tensors(parameters()), cfg.optim.betas, cfg.optim.weight_decay, lr);
}

NamedParams MaeBaseline::parameters() const {
    NamedParams out;
    for (const auto& [name, t] : models.trainable_parameters())
        if (name.find(".head.") == std::string::npos) out.emplace_back(name, t);
    return out;
}

double MaeBaseline::step_on(std::span<const ClipPair> batch, const TrainConfig& cfg) {
    require(!batch.empty(), "MaeBaseline: batch is empty");
    Rng view_rng = Rng::stream(cfg.seed, "views", step);
    Rng mask_rng = Rng::stream(cfg.seed, "masks", step);

    std::vector<TokenBatch> gv, ga, mv, ma;
    for (const auto& clip : batch) {
        // Local views are drawn and discarded to stay on the shared stream layout.
        const ViewSet v = make_views(clip, cfg.views, view_rng);
        gv.push_back(patchify(v.global_video, cfg.video_patch));
        ga.push_back(patchify(v.global_audio, cfg.audio_patch));
    }
    for (std::size_t b = 0; b < batch.size(); ++b) {
        mv.push_back(mask_tokens(gv[b], cfg.mask_ratio_video, mask_rng));
        ma.push_back(mask_tokens(ga[b], cfg.mask_ratio_audio, mask_rng));
    }

    std::vector<Tensor> pv, tv, pa, ta;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Recon v = reconstruct(models.student_video, models.decoder_video, gv[b], mv[b]);
        Recon a = reconstruct(models.student_audio, models.decoder_audio, ga[b], ma[b]);
        pv.push_back(v.pred);
        tv.push_back(v.target);
        pa.push_back(a.pred);
        ta.push_back(a.target);
    }
    const Tensor l_ae = joint_recon_loss(ops::concat(pv, 0), ops::concat(tv, 0), ops::concat(pa, 0), ops::concat(ta, 0));
    const Tensor loss = ops::scale(l_ae, cfg.weights.ae);

    const std::vector<Tensor> params = tensors(parameters());
    zero_grads(params);
    loss.backward();
    for (const auto& p : params) p.node().ensure_grad();
    optimizer_step(params, optimizer);
    ++step;
    return loss.item();
}

}  // namespace xkd
