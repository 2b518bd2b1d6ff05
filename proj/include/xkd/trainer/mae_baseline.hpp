// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "xkd/autograd/optim.hpp"
#include "xkd/backbone/model_set.hpp"
#include "xkd/trainer/trainer.hpp"

namespace xkd {

/// Joint masked autoencoder on the student encoders and decoders, with no
/// teachers or heads. Consumes the same named rng streams as train_step.
struct MaeBaseline {
    ModelSet models;
    OptimizerState optimizer;
    std::uint64_t step = 0;

    explicit MaeBaseline(ModelSet models, const TrainConfig& cfg);
    /// Decoders, student embeddings and student backbones.
    NamedParams parameters() const;
    /// Returns lambda_ae * L_ae.
    double step_on(std::span<const ClipPair> batch, const TrainConfig& cfg);
};

}  // namespace xkd
