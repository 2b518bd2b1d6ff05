// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xkd/backbone/networks.hpp"

namespace xkd {

/// MS shares nothing, MAS shares the student backbones, MATS shares the
/// student backbones and the teacher backbones.
enum class Variant { MS, MAS, MATS };

std::string to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& s);

struct ModelConfig {
    EncoderConfig encoder;
    DecoderConfig decoder;
    HeadConfig head;
    std::size_t video_patch_dim = 128;
    std::size_t audio_patch_dim = 32;
    /// Token grids of every view geometry; the first entry is the global view.
    std::vector<Grid> video_grids{{4, 2, 2}, {2, 2, 2}};
    std::vector<Grid> audio_grids{{4, 4}, {4, 2}};

    /// ViT-B encoder, 384-wide 4-deep decoder, 2048/256/8192 head; 112^2 RGB video and 80-bin audio.
    static ModelConfig paper_scale();
};

/// Input embedding, backbone and head for one modality.
struct Network {
    EmbedParams embed;
    std::shared_ptr<Backbone> backbone;
    ProjectorHead head;
};

struct ModelSet {
    Variant variant = Variant::MS;
    ModelConfig config;
    Network student_video, student_audio;
    Network teacher_video, teacher_audio;
    Decoder decoder_video, decoder_audio;

    /// Unique tensors, each listed once under its first name.
    NamedParams named_parameters() const;
    /// Decoders and students: everything the optimizer updates.
    NamedParams trainable_parameters() const;
    NamedParams teacher_parameters() const;

    /// Deep copy with no aliasing to this set, sharing structure preserved.
    ModelSet clone() const;
};

/// Teachers start as copies of their students and never require gradients.
ModelSet build_model_set(const ModelConfig& cfg, Variant variant, Rng& rng);

struct EmaPair {
    Tensor teacher;
    Tensor student;
    double lambda;
};

/// One entry per distinct teacher tensor. A shared teacher backbone pairs
/// with the shared student backbone under the video coefficient.
std::vector<EmaPair> ema_pairs(const ModelSet& m, double lambda_video, double lambda_audio);

}  // namespace xkd
