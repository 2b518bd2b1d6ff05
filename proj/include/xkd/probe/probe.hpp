// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xkd/backbone/model_set.hpp"
#include "xkd/views/clip.hpp"
#include "xkd/views/tokens.hpp"

namespace xkd {

enum class FeatureSource { StudentVideo, TeacherVideo, StudentAudio, TeacherAudio, Fused };

std::string to_string(FeatureSource s);
std::optional<FeatureSource> parse_feature_source(const std::string& s);

/// Row-major clip x feature matrix with aligned labels.
struct FeatureMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;
    std::vector<std::uint32_t> labels;
    std::vector<std::uint64_t> clip_ids;
    FeatureSource source = FeatureSource::StudentVideo;

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    /// Contract error on any non-finite entry or misaligned labels.
    void validate() const;
};

/// Mean of the final-layer patch tokens (CLS excluded) of each clip's full,
/// unmasked input. Clip ids are the positions in `clips`.
FeatureMatrix extract_features(const Network& net, const std::vector<ClipPair>& clips, Modality modality,
                               FeatureSource source, const VideoPatch& vp = {}, const AudioPatch& ap = {});

/// Network of `models` that a source reads from. Fused has no single network.
const Network& network_for(const ModelSet& models, FeatureSource source);

struct ProbeConfig {
    std::size_t iterations = 300;
    double lr = 0.5;
    double weight_decay = 1e-4;
};

/// Multinomial logistic regression on train-standardized features.
struct LinearProbe {
    std::vector<double> mean, inv_std;  // per feature; inv_std 0 for constant columns
    std::vector<double> weight;         // cols x classes, row-major
    std::vector<double> bias;           // classes
    std::size_t classes = 0;

    std::uint32_t predict(const FeatureMatrix& m, std::size_t row) const;
};

/// Full-batch gradient descent from zero weights; deterministic.
LinearProbe train_linear_probe(const FeatureMatrix& train, std::size_t classes, const ProbeConfig& cfg = {});

/// Top-1 test accuracy in [0, 1]. The class count spans train and test labels.
double linear_probe(const FeatureMatrix& train, const FeatureMatrix& test, const ProbeConfig& cfg = {});

/// Columnwise concatenation of row-aligned matrices.
FeatureMatrix late_fusion(const FeatureMatrix& video, const FeatureMatrix& audio);

/// Header clip_id,label,f0..f{D-1}; values at 17 significant digits.
void write_features_csv(std::ostream& out, const FeatureMatrix& m);

}  // namespace xkd
