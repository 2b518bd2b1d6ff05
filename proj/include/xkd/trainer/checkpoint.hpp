// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xkd/backbone/model_set.hpp"
#include "xkd/trainer/trainer.hpp"

namespace xkd {

struct Blob {
    std::string name;
    Shape shape;
    std::vector<double> values;

    bool operator==(const Blob&) const = default;
};

/// Contents of a checkpoint file: parameter blobs, then metadata blobs
/// (optimizer moments "opt.m.<param>" / "opt.v.<param>", "opt.step",
/// "center.video", "center.audio", "train.step", "model.variant").
struct Checkpoint {
    std::vector<Blob> params;
    std::vector<Blob> meta;

    const Blob* find_meta(const std::string& name) const;
};

Checkpoint make_checkpoint(const ModelSet& models, const TrainState& state);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every blob into `models` and `state`. Names and shapes must match
/// the model layout exactly.
void apply_checkpoint(const Checkpoint& ckpt, ModelSet& models, TrainState& state);

void save_checkpoint(const std::filesystem::path& path, const ModelSet& models, const TrainState& state);
void load_checkpoint(const std::filesystem::path& path, ModelSet& models, TrainState& state);

}  // namespace xkd
