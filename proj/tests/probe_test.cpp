// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "test_util.hpp"
#include "xkd/core/error.hpp"
#include "xkd/probe/probe.hpp"
#include "xkd/synthdata/synthdata.hpp"

using namespace xkd;

namespace {

FeatureMatrix gaussian_features(Rng& rng, std::size_t n, std::size_t d, std::uint32_t classes, double separation) {
    FeatureMatrix m;
    m.rows = n;
    m.cols = d;
    for (std::size_t r = 0; r < n; ++r) {
        const auto label = static_cast<std::uint32_t>(r % classes);
        for (std::size_t c = 0; c < d; ++c) m.values.push_back(rng.normal() + (c == label ? separation : 0.0));
        m.labels.push_back(label);
        m.clip_ids.push_back(r);
    }
    return m;
}

FeatureMatrix permuted(const FeatureMatrix& m, const std::vector<std::size_t>& perm) {
    FeatureMatrix out = m;
    out.values.clear();
    out.labels.clear();
    out.clip_ids.clear();
    for (std::size_t r : perm) {
        out.values.insert(out.values.end(), m.values.begin() + r * m.cols, m.values.begin() + (r + 1) * m.cols);
        out.labels.push_back(m.labels[r]);
        out.clip_ids.push_back(m.clip_ids[r]);
    }
    return out;
}

FeatureMatrix zeros_like(const FeatureMatrix& m) {
    FeatureMatrix z = m;
    std::fill(z.values.begin(), z.values.end(), 0.0);
    return z;
}

ModelSet tiny_models(std::uint64_t seed = 1) {
    Rng rng(seed);
    return build_model_set(ModelConfig{}, Variant::MS, rng);
}

}  // namespace

TEST(Features, ZeroEncoderGivesZeroFeatures) {
    ModelSet m = tiny_models();
    Network& net = m.student_video;
    for (Tensor t : net.embed.parameters()) std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
    const auto clips = generate_dataset(GeneratorSpec{}, 1, 3);
    const FeatureMatrix f = extract_features(net, clips, Modality::Video, FeatureSource::StudentVideo);
    for (double v : f.values) EXPECT_EQ(v, 0.0);
}

TEST(Features, WidthIsModelWidthAndRowsFollowClips) {
    const ModelSet m = tiny_models();
    const auto clips = generate_dataset(GeneratorSpec{}, 2, 4);
    const FeatureMatrix f = extract_features(m.teacher_audio, clips, Modality::Audio, FeatureSource::TeacherAudio);
    EXPECT_EQ(f.cols, 64u);
    EXPECT_EQ(f.rows, clips.size());
    EXPECT_EQ(f.source, FeatureSource::TeacherAudio);
    for (std::size_t i = 0; i < clips.size(); ++i) EXPECT_EQ(f.labels[i], clips[i].label);

    std::vector<ClipPair> reversed(clips.rbegin(), clips.rend());
    const FeatureMatrix g = extract_features(m.teacher_audio, reversed, Modality::Audio, FeatureSource::TeacherAudio);
    for (std::size_t r = 0; r < f.rows; ++r)
        for (std::size_t c = 0; c < f.cols; ++c) EXPECT_EQ(g.at(f.rows - 1 - r, c), f.at(r, c));
}

TEST(Features, NetworkForMapsSources) {
    const ModelSet m = tiny_models();
    EXPECT_EQ(&network_for(m, FeatureSource::TeacherVideo), &m.teacher_video);
    EXPECT_EQ(&network_for(m, FeatureSource::StudentAudio), &m.student_audio);
    EXPECT_THROW(network_for(m, FeatureSource::Fused), ContractError);
    EXPECT_EQ(parse_feature_source("teacher-video"), FeatureSource::TeacherVideo);
    EXPECT_EQ(parse_feature_source("student-video"), FeatureSource::StudentVideo);
    EXPECT_FALSE(parse_feature_source("teacher").has_value());
}

TEST(Probe, SeparableClassesAreLearnedPerfectly) {
    Rng rng(2);
    const FeatureMatrix train = gaussian_features(rng, 200, 2, 2, 8.0);
    const FeatureMatrix test = gaussian_features(rng, 200, 2, 2, 8.0);
    EXPECT_EQ(linear_probe(train, test), 1.0);
}

TEST(Probe, ShuffledLabelsScoreAtChance) {
    Rng rng(3);
    FeatureMatrix train = gaussian_features(rng, 4000, 8, 4, 0.0);
    FeatureMatrix test = gaussian_features(rng, 4000, 8, 4, 0.0);
    for (auto* m : {&train, &test})
        for (auto& l : m->labels) l = static_cast<std::uint32_t>(rng.below(4));
    EXPECT_NEAR(linear_probe(train, test), 0.25, 0.05);
}

TEST(Probe, DuplicatedTrainingSetGivesSameWeights) {
    Rng rng(4);
    const FeatureMatrix train = gaussian_features(rng, 60, 5, 3, 1.0);
    FeatureMatrix doubled = train;
    doubled.rows *= 2;
    doubled.values.insert(doubled.values.end(), train.values.begin(), train.values.end());
    doubled.labels.insert(doubled.labels.end(), train.labels.begin(), train.labels.end());
    doubled.clip_ids.insert(doubled.clip_ids.end(), train.clip_ids.begin(), train.clip_ids.end());
    const LinearProbe a = train_linear_probe(train, 3);
    const LinearProbe b = train_linear_probe(doubled, 3);
    ASSERT_EQ(a.weight.size(), b.weight.size());
    for (std::size_t i = 0; i < a.weight.size(); ++i) EXPECT_NEAR(a.weight[i], b.weight[i], 1e-12);
    const LinearProbe c = train_linear_probe(train, 3);
    EXPECT_EQ(a.weight, c.weight);
}

TEST(Probe, SingleClassTrainingIsRejected) {
    Rng rng(5);
    FeatureMatrix train = gaussian_features(rng, 10, 3, 2, 1.0);
    std::fill(train.labels.begin(), train.labels.end(), 1u);
    EXPECT_THROW(linear_probe(train, train), ContractError);
}

TEST(Probe, WidthMismatchIsRejected) {
    Rng rng(5);
    EXPECT_THROW(linear_probe(gaussian_features(rng, 10, 3, 2, 1.0), gaussian_features(rng, 10, 4, 2, 1.0)),
                 ContractError);
}

TEST(Probe, AccuracyIsInvariantToAffineRescaling) {
    for (std::uint64_t seed : {6u, 7u, 8u}) {
        Rng rng(seed);
        const FeatureMatrix train = gaussian_features(rng, 300, 6, 3, 1.2);
        const FeatureMatrix test = gaussian_features(rng, 300, 6, 3, 1.2);
        std::vector<double> scale(6), shift(6);
        for (std::size_t c = 0; c < 6; ++c) scale[c] = rng.uniform(0.1, 50.0), shift[c] = rng.uniform(-10, 10);
        auto transform = [&](FeatureMatrix m) {
            for (std::size_t r = 0; r < m.rows; ++r)
                for (std::size_t c = 0; c < m.cols; ++c) m.values[r * m.cols + c] = m.at(r, c) * scale[c] + shift[c];
            return m;
        };
        EXPECT_NEAR(linear_probe(train, test), linear_probe(transform(train), transform(test)), 0.01);
    }
}

TEST(Fusion, ConcatenatesColumns) {
    Rng rng(9);
    const FeatureMatrix v = gaussian_features(rng, 12, 64, 4, 1.0);
    const FeatureMatrix a = gaussian_features(rng, 12, 64, 4, 1.0);
    const FeatureMatrix f = late_fusion(v, a);
    EXPECT_EQ(f.cols, 128u);
    EXPECT_EQ(f.source, FeatureSource::Fused);
    EXPECT_EQ(f.at(3, 5), v.at(3, 5));
    EXPECT_EQ(f.at(3, 64 + 7), a.at(3, 7));
}

TEST(Fusion, RowMismatchIsRejected) {
    Rng rng(9);
    EXPECT_THROW(late_fusion(gaussian_features(rng, 12, 4, 4, 1.0), gaussian_features(rng, 8, 4, 4, 1.0)),
                 ContractError);
}

TEST(Fusion, ZeroHalfPreservesAccuracy) {
    Rng rng(10);
    const FeatureMatrix train = gaussian_features(rng, 200, 4, 4, 1.0);
    const FeatureMatrix test = gaussian_features(rng, 200, 4, 4, 1.0);
    const double alone = linear_probe(train, test);
    EXPECT_EQ(linear_probe(late_fusion(train, zeros_like(train)), late_fusion(test, zeros_like(test))), alone);
    EXPECT_EQ(linear_probe(late_fusion(zeros_like(train), train), late_fusion(zeros_like(test), test)), alone);
}

TEST(Fusion, SharedPermutationLeavesAccuracyUnchanged) {
    Rng rng(11);
    const FeatureMatrix tv = gaussian_features(rng, 120, 3, 4, 1.0), ta = gaussian_features(rng, 120, 3, 4, 1.0);
    const FeatureMatrix sv = gaussian_features(rng, 120, 3, 4, 1.0), sa = gaussian_features(rng, 120, 3, 4, 1.0);
    std::vector<std::size_t> perm(120);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 37, perm.end());
    const double base = linear_probe(late_fusion(tv, ta), late_fusion(sv, sa));
    const double after = linear_probe(late_fusion(permuted(tv, perm), permuted(ta, perm)),
                                      late_fusion(permuted(sv, perm), permuted(sa, perm)));
    EXPECT_EQ(base, after);
}

TEST(FeaturesCsv, HeaderAndRows) {
    FeatureMatrix m;
    m.rows = 2;
    m.cols = 3;
    m.values = {0.5, 1.0, -2.0, 0.1, 0.0, 3.0};
    m.labels = {1, 0};
    m.clip_ids = {7, 8};
    std::ostringstream out;
    write_features_csv(out, m);
    EXPECT_EQ(out.str(), "clip_id,label,f0,f1,f2\n7,1,0.5,1,-2\n8,0,0.10000000000000001,0,3\n");
}
