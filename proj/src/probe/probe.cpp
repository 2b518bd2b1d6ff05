// SPDX-License-Identifier: Apache-2.0
#include "xkd/probe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "xkd/autograd/ops.hpp"
#include "xkd/core/error.hpp"
#include "xkd/views/embed.hpp"

namespace xkd {

std::string to_string(FeatureSource s) {
    switch (s) {
        case FeatureSource::StudentVideo: return "student-video";
        case FeatureSource::TeacherVideo: return "teacher-video";
        case FeatureSource::StudentAudio: return "student-audio";
        case FeatureSource::TeacherAudio: return "teacher-audio";
        case FeatureSource::Fused: return "fused";
    }
    return "unknown";
}

std::optional<FeatureSource> parse_feature_source(const std::string& s) {
    for (auto v : {FeatureSource::StudentVideo, FeatureSource::TeacherVideo, FeatureSource::StudentAudio,
                   FeatureSource::TeacherAudio, FeatureSource::Fused})
        if (to_string(v) == s) return v;
    return std::nullopt;
}

void FeatureMatrix::validate() const {
    require(values.size() == rows * cols, "FeatureMatrix: value count does not match the shape");
    require(labels.size() == rows && clip_ids.size() == rows, "FeatureMatrix: labels are not row-aligned");
    for (double v : values) require(std::isfinite(v), "FeatureMatrix: non-finite entry");
}

FeatureMatrix extract_features(const Network& net, const std::vector<ClipPair>& clips, Modality modality,
                               FeatureSource source, const VideoPatch& vp, const AudioPatch& ap) {
    NoGradGuard no_grad;
    FeatureMatrix m;
    m.source = source;
    m.rows = clips.size();
    m.cols = net.backbone->width();
    m.values.reserve(m.rows * m.cols);
    for (std::size_t i = 0; i < clips.size(); ++i) {
        const TokenBatch tokens =
            modality == Modality::Video ? patchify(clips[i].video, vp) : patchify(clips[i].audio, ap);
        const EncoderOutput out = encode(*net.backbone, embed(tokens, net.embed, false));
        const Tensor pooled = mean_pool(out.tokens);
        const auto v = pooled.values();
        m.values.insert(m.values.end(), v.begin(), v.end());
        m.labels.push_back(clips[i].label);
        m.clip_ids.push_back(i);
    }
    m.validate();
    return m;
}

const Network& network_for(const ModelSet& models, FeatureSource source) {
    switch (source) {
        case FeatureSource::StudentVideo: return models.student_video;
        case FeatureSource::TeacherVideo: return models.teacher_video;
        case FeatureSource::StudentAudio: return models.student_audio;
        case FeatureSource::TeacherAudio: return models.teacher_audio;
        case FeatureSource::Fused: break;
    }
    throw ContractError("network_for: fused features come from two networks");
}

std::uint32_t LinearProbe::predict(const FeatureMatrix& m, std::size_t row) const {
    require(m.cols == mean.size(), "LinearProbe: feature width differs from training");
    std::vector<double> logits(bias);
    for (std::size_t d = 0; d < m.cols; ++d) {
        const double x = (m.at(row, d) - mean[d]) * inv_std[d];
        for (std::size_t k = 0; k < classes; ++k) logits[k] += x * weight[d * classes + k];
    }
    return static_cast<std::uint32_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

LinearProbe train_linear_probe(const FeatureMatrix& train, std::size_t classes, const ProbeConfig& cfg) {
    train.validate();
    require(train.rows > 0, "linear_probe: empty training set");
    require(std::any_of(train.labels.begin(), train.labels.end(),
                        [&](std::uint32_t l) { return l != train.labels.front(); }),
            "linear_probe: training set has a single class");
    for (auto l : train.labels) require(l < classes, "linear_probe: label outside the class range");

    const std::size_t n = train.rows, dim = train.cols;
    LinearProbe p;
    p.classes = classes;
    p.mean.assign(dim, 0.0);
    p.inv_std.assign(dim, 0.0);
    for (std::size_t d = 0; d < dim; ++d) {
        double s = 0.0, ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += train.at(r, d);
        p.mean[d] = s / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) ss += (train.at(r, d) - p.mean[d]) * (train.at(r, d) - p.mean[d]);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        p.inv_std[d] = sd > 1e-12 ? 1.0 / sd : 0.0;
    }
    std::vector<double> x(n * dim);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t d = 0; d < dim; ++d) x[r * dim + d] = (train.at(r, d) - p.mean[d]) * p.inv_std[d];

    p.weight.assign(dim * classes, 0.0);
    p.bias.assign(classes, 0.0);
    std::vector<double> gw(dim * classes), gb(classes), prob(classes);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        std::fill(gw.begin(), gw.end(), 0.0);
        std::fill(gb.begin(), gb.end(), 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double* xr = &x[r * dim];
            for (std::size_t k = 0; k < classes; ++k) prob[k] = p.bias[k];
            for (std::size_t d = 0; d < dim; ++d)
                for (std::size_t k = 0; k < classes; ++k) prob[k] += xr[d] * p.weight[d * classes + k];
            const double mx = *std::max_element(prob.begin(), prob.end());
            double z = 0.0;
            for (auto& v : prob) z += (v = std::exp(v - mx));
            for (std::size_t k = 0; k < classes; ++k) {
                const double g = (prob[k] / z - (k == train.labels[r] ? 1.0 : 0.0)) * inv_n;
                gb[k] += g;
                for (std::size_t d = 0; d < dim; ++d) gw[d * classes + k] += g * xr[d];
            }
        }
        for (std::size_t i = 0; i < gw.size(); ++i)
            p.weight[i] -= cfg.lr * (gw[i] + cfg.weight_decay * p.weight[i]);
        for (std::size_t k = 0; k < classes; ++k) p.bias[k] -= cfg.lr * gb[k];
    }
    return p;
}

double linear_probe(const FeatureMatrix& train, const FeatureMatrix& test, const ProbeConfig& cfg) {
    test.validate();
    require(train.cols == test.cols, "linear_probe: train and test widths differ");
    require(test.rows > 0, "linear_probe: empty test set");
    std::uint32_t max_label = 0;
    for (auto l : train.labels) max_label = std::max(max_label, l);
    for (auto l : test.labels) max_label = std::max(max_label, l);
    const LinearProbe p = train_linear_probe(train, max_label + 1, cfg);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test.rows; ++r) correct += p.predict(test, r) == test.labels[r];
    return static_cast<double>(correct) / static_cast<double>(test.rows);
}

FeatureMatrix late_fusion(const FeatureMatrix& video, const FeatureMatrix& audio) {
    video.validate();
    audio.validate();
    require(video.rows == audio.rows, "late_fusion: row counts differ (" + std::to_string(video.rows) + " vs " +
                                          std::to_string(audio.rows) + ")");
    require(video.labels == audio.labels, "late_fusion: labels are not row-aligned");
    FeatureMatrix f;
    f.source = FeatureSource::Fused;
    f.rows = video.rows;
    f.cols = video.cols + audio.cols;
    f.labels = video.labels;
    f.clip_ids = video.clip_ids;
    f.values.reserve(f.rows * f.cols);
    for (std::size_t r = 0; r < f.rows; ++r) {
        f.values.insert(f.values.end(), video.values.begin() + r * video.cols, video.values.begin() + (r + 1) * video.cols);
        f.values.insert(f.values.end(), audio.values.begin() + r * audio.cols, audio.values.begin() + (r + 1) * audio.cols);
    }
    return f;
}

void write_features_csv(std::ostream& out, const FeatureMatrix& m) {
    out << "clip_id,label";
    for (std::size_t d = 0; d < m.cols; ++d) out << ",f" << d;
    out << '\n';
    char buf[32];
    for (std::size_t r = 0; r < m.rows; ++r) {
        out << m.clip_ids[r] << ',' << m.labels[r];
        for (std::size_t d = 0; d < m.cols; ++d) {
            std::snprintf(buf, sizeof buf, ",%.17g", m.at(r, d));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace xkd
