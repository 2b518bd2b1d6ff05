// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "test_util.hpp"
#include "xkd/autograd/ops.hpp"
#include "xkd/autograd/gradcheck.hpp"
#include "xkd/autograd/op_kind.hpp"
#include "xkd/cli/commands.hpp"
#include "xkd/cli/config.hpp"
#include "xkd/core/error.hpp"
#include "xkd/trainer/checkpoint.hpp"

using namespace xkd;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args, const GradcheckRegistry* registry = nullptr) {
    std::ostringstream out, err;
    CliRun r;
    r.code = run_cli(args, {out, err}, registry);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

/// Fresh output directory per test.
std::string out_dir(const std::string& name) {
    const fs::path p = xkd::testing::temp_path(name);
    fs::remove_all(p);
    return p.string();
}

// Small probe sets keep the probe tests fast.
const std::vector<std::string> kSmallProbe{"--set", "data.probe_train_per_class=4", "--set",
                                           "data.probe_test_per_class=4"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

}  // namespace

// ---- configuration ----

TEST(Config, DefaultDumpRoundTrips) {
    const RunConfig defaults;
    const std::string dumped = dump_config(defaults);
    RunConfig parsed;
    set_config_value(parsed, "train.steps", "1");
    apply_config_text(parsed, dumped);
    EXPECT_EQ(dump_config(parsed), dumped);
    EXPECT_EQ(parsed.train.steps, defaults.train.steps);
}

TEST(Config, NonDefaultValuesRoundTrip) {
    RunConfig c;
    set_config_value(c, "train.kernel_sigma", "0.1");
    set_config_value(c, "train.variant", "mats");
    set_config_value(c, "optim.lr", "0.00012345678901234567");
    set_config_value(c, "ema.video.kind", "constant");
    set_config_value(c, "head.activation", "identity");
    set_config_value(c, "data.path", "some/file.xkdd");
    RunConfig back;
    apply_config_text(back, dump_config(c));
    EXPECT_EQ(dump_config(back), dump_config(c));
    EXPECT_EQ(back.train.kernel.sigma, 0.1);
    EXPECT_EQ(back.train.variant, Variant::MATS);
    EXPECT_EQ(back.train.optim.lr, c.train.optim.lr);
    EXPECT_EQ(back.model.head.activation, HeadActivation::Identity);
    set_config_value(back, "train.kernel_sigma", "median");
    EXPECT_FALSE(back.train.kernel.sigma.has_value());
}

TEST(Config, EveryKeyReadsBackWhatWasDumped) {
    const RunConfig c;
    for (const auto& key : config_keys()) {
        RunConfig d;
        set_config_value(d, key, get_config_value(c, key));
        EXPECT_EQ(get_config_value(d, key), get_config_value(c, key)) << key;
    }
}

TEST(Config, DefaultsMatchModuleDefaults) {
    const RunConfig c;
    EXPECT_EQ(get_config_value(c, "loss.ae"), "5");
    EXPECT_EQ(get_config_value(c, "train.mask_ratio_video"), "0.84999999999999998");
    EXPECT_EQ(get_config_value(c, "ema.video.base"), "0.997");
    EXPECT_EQ(get_config_value(c, "ema.video.final"), "1");
    EXPECT_EQ(get_config_value(c, "sharpen.teacher_audio.base"), "0.040000000000000001");
    EXPECT_EQ(get_config_value(c, "reconstruct.video_ratio"), "0.80000000000000004");
    EXPECT_EQ(get_config_value(c, "reconstruct.audio_ratio"), "0.69999999999999996");
    EXPECT_EQ(get_config_value(c, "train.kernel_sigma"), "median");
    EXPECT_EQ(get_config_value(c, "model.d_model"), "64");
    EXPECT_EQ(get_config_value(c, "head.out_dim"), "128");
}

TEST(Config, SectionsCommentsAndWhitespace) {
    RunConfig c;
    apply_config_text(c, "# header\n[train]\n  steps = 3   # inline\nbatch_size=2\n\n[]\noptim.lr = 0.5\n");
    EXPECT_EQ(c.train.steps, 3u);
    EXPECT_EQ(c.train.batch_size, 2u);
    EXPECT_EQ(c.train.optim.lr, 0.5);
}

TEST(Config, UnknownKeyIsNamedWithLine) {
    RunConfig c;
    try {
        apply_config_text(c, "[train]\nsteps = 2\nstepz = 3\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("train.stepz"), std::string::npos) << msg;
        EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
    }
}

TEST(Config, BadValuesNameTheKey) {
    const std::vector<std::pair<std::string, std::string>> bad{
        {"train.steps", "-1"},          {"train.steps", "3.5"},         {"train.batch_size", "0"},
        {"train.centering", "yes"},     {"optim.lr", "fast"},           {"optim.lr", "nan"},
        {"train.variant", "xl"},        {"train.mask_ratio_audio", "1"}, {"sharpen.tau_student", "0"},
        {"train.kernel_sigma", "-2"},   {"data.n_classes", "1"},        {"ema.video.base", "1.5"},
        {"data.n_classes", "9999999999"}};
    for (const auto& [key, value] : bad) {
        RunConfig c;
        try {
            set_config_value(c, key, value);
            ADD_FAILURE() << key << "=" << value << " accepted";
        } catch (const ConfigError& e) {
            EXPECT_NE(std::string(e.what()).find(key), std::string::npos) << e.what();
        }
    }
}

TEST(Config, MalformedLinesRejected) {
    RunConfig c;
    EXPECT_THROW(apply_config_text(c, "steps\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "[train\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, " = 3\n"), ConfigError);
    EXPECT_THROW(apply_config_file(c, "/nonexistent/xkd.cfg"), ConfigError);
}

TEST(Config, DerivedModelMatchesTinyDefaults) {
    const ModelConfig derived = derive_model_config(RunConfig{});
    const ModelConfig tiny;
    EXPECT_EQ(derived.video_patch_dim, tiny.video_patch_dim);
    EXPECT_EQ(derived.audio_patch_dim, tiny.audio_patch_dim);
    EXPECT_EQ(derived.video_grids, tiny.video_grids);
    EXPECT_EQ(derived.audio_grids, tiny.audio_grids);
}

TEST(Config, DerivedModelFollowsGeometry) {
    RunConfig c;
    set_config_value(c, "data.channels", "3");
    set_config_value(c, "data.audio_time", "64");
    const ModelConfig m = derive_model_config(c);
    EXPECT_EQ(m.video_patch_dim, 2u * 8 * 8 * 3);
    EXPECT_EQ(m.audio_grids[0], (Grid{4, 8}));
    set_config_value(c, "data.height", "12");
    EXPECT_THROW(derive_model_config(c), ConfigError);
}

TEST(Config, CrossFieldValidation) {
    EXPECT_NO_THROW(validate_run_config(RunConfig{}));
    RunConfig heads;
    set_config_value(heads, "model.heads", "3");
    EXPECT_THROW(validate_run_config(heads), ConfigError);
    RunConfig local;
    set_config_value(local, "views.local_seconds", "8");
    EXPECT_THROW(validate_run_config(local), ConfigError);
    RunConfig crop;
    set_config_value(crop, "views.local_video.crop_scale_lo", "0.9");
    EXPECT_THROW(validate_run_config(crop), ConfigError);
}

TEST(Config, ThreadsFromEnvironment) {
    EXPECT_EQ(threads_from_env(nullptr), 1u);
    EXPECT_EQ(threads_from_env("4"), 4u);
    for (const char* bad : {"0", "-1", "two", "", "3x"}) EXPECT_THROW(threads_from_env(bad), ConfigError) << bad;
}

// ---- gradcheck ----

TEST(Gradcheck, FilterMatching) {
    EXPECT_TRUE(gradcheck_matches("loss.mmd", "mmd"));
    EXPECT_TRUE(gradcheck_matches("loss.mmd", "loss"));
    EXPECT_TRUE(gradcheck_matches("loss.mmd", "loss.mmd"));
    EXPECT_TRUE(gradcheck_matches("loss.cross_attention.scale", "cross_attention.scale"));
    EXPECT_FALSE(gradcheck_matches("loss.mmd", "md"));
    EXPECT_FALSE(gradcheck_matches("loss.da1", "da"));
    EXPECT_FALSE(gradcheck_matches("loss.mmd", ""));
}

TEST(Gradcheck, StandardRegistryCoversEveryOpAndLoss) {
    const auto reg = GradcheckRegistry::standard();
    for (auto kind : all_op_kinds()) {
        const std::string name = "op." + to_string(kind);
        EXPECT_TRUE(std::any_of(reg.items().begin(), reg.items().end(),
                                [&](const GradcheckItem& i) { return i.name == name; }))
            << name;
    }
    for (const char* name : {"loss.recon", "loss.joint_recon", "loss.cross_attention.scale",
                             "loss.cross_attention.softmax", "loss.refine", "loss.mmd", "loss.da", "loss.da1",
                             "loss.da2", "loss.sharpen", "loss.kd", "loss.total", "net.encoder", "net.decoder",
                             "net.projector"})
        EXPECT_TRUE(std::any_of(reg.items().begin(), reg.items().end(),
                                [&](const GradcheckItem& i) { return i.name == name; }))
            << name;
}

TEST(Gradcheck, DuplicateNamesRejected) {
    GradcheckRegistry reg;
    reg.add({"x", [](std::uint64_t) { return 0.0; }});
    EXPECT_THROW(reg.add({"x", [](std::uint64_t) { return 0.0; }}), ContractError);
}

TEST(Gradcheck, DefaultRunPasses) {
    const CliRun r = cli({"gradcheck"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines_of(r.out).size(), GradcheckRegistry::standard().items().size());
    EXPECT_TRUE(r.err.empty());
}

TEST(Gradcheck, OnlySelectsTheNamedPath) {
    const CliRun r = cli({"gradcheck", "--only", "mmd"});
    EXPECT_EQ(r.code, 0);
    ASSERT_EQ(lines_of(r.out).size(), 1u);
    EXPECT_EQ(r.out.rfind("loss.mmd", 0), 0u);
    EXPECT_EQ(cli({"gradcheck", "--only", "no-such-check"}).code, 2);
}

TEST(Gradcheck, CorruptedOpFailsAndIsNamed) {
    GradcheckRegistry reg = GradcheckRegistry::standard();
    // Square whose backward is off by a factor of two.
    reg.add({"op.bad-square", [](std::uint64_t seed) {
                 Rng rng(seed);
                 auto f = [](const std::vector<Tensor>& in) {
                     const double v = in[0].item();
                     return Tensor::make_result({1}, {v * v}, {in[0]}, "bad-square", [](detail::Node& self) {
                         auto& p = *self.parents[0];
                         p.ensure_grad()[0] += self.grad[0] * 4.0 * p.values[0];
                     });
                 };
                 return grad_check(f, {Tensor::scalar(rng.uniform(1.0, 2.0))});
             }});
    const CliRun r = cli({"gradcheck", "--only", "op"}, &reg);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("op.bad-square"), std::string::npos) << r.err;
    EXPECT_EQ(r.err.find("op.add"), std::string::npos);
    EXPECT_NE(r.out.find("op.bad-square"), std::string::npos);
}

TEST(Gradcheck, ThrowingOrNanCheckFails) {
    GradcheckRegistry reg;
    reg.add({"throws", [](std::uint64_t) -> double { throw ContractError("boom"); }});
    reg.add({"nan", [](std::uint64_t) { return std::nan(""); }});
    const auto outcomes = run_gradcheck(reg, 2);
    ASSERT_EQ(outcomes.size(), 2u);
    for (const auto& o : outcomes) EXPECT_FALSE(o.max_error < kGradcheckTolerance) << o.name;
}

// ---- pretrain ----

TEST(Pretrain, ZeroStepsWritesHeaderOnly) {
    const std::string dir = out_dir("zero");
    const CliRun r = cli({"pretrain", "--steps", "0", "--out", dir});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_bytes(fs::path(dir) / "metrics.csv"), std::string(kMetricsHeader) + "\n");
    EXPECT_TRUE(fs::exists(fs::path(dir) / "checkpoint.xkd"));
    EXPECT_TRUE(fs::exists(fs::path(dir) / "config.txt"));
}

TEST(Pretrain, SameSeedGivesIdenticalMetrics) {
    const std::string a = out_dir("det_a"), b = out_dir("det_b");
    ASSERT_EQ(cli({"pretrain", "--steps", "3", "--seed", "5", "--out", a}).code, 0);
    ASSERT_EQ(cli({"--seed", "5", "pretrain", "--steps", "3", "--out", b}).code, 0);
    const std::string ma = read_bytes(fs::path(a) / "metrics.csv");
    EXPECT_EQ(ma, read_bytes(fs::path(b) / "metrics.csv"));
    EXPECT_EQ(lines_of(ma).size(), 4u);
    const std::string c = out_dir("det_c");
    ASSERT_EQ(cli({"pretrain", "--steps", "3", "--seed", "6", "--out", c}).code, 0);
    EXPECT_NE(ma, read_bytes(fs::path(c) / "metrics.csv"));
}

TEST(Pretrain, DumpedConfigRerunsIdentically) {
    const std::string a = out_dir("rt_a"), b = out_dir("rt_b");
    ASSERT_EQ(cli({"pretrain", "--steps", "2", "--set", "train.batch_size=3", "--out", a}).code, 0);
    const CliRun r = cli({"--config", (fs::path(a) / "config.txt").string(), "pretrain", "--out", b});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_bytes(fs::path(a) / "metrics.csv"), read_bytes(fs::path(b) / "metrics.csv"));
}

TEST(Pretrain, PrintConfigMatchesDump) {
    const CliRun r = cli({"--print-config", "--steps", "7", "pretrain"});
    EXPECT_EQ(r.code, 0);
    RunConfig c;
    c.train.steps = 7;
    EXPECT_EQ(r.out, dump_config(c));
}

TEST(Pretrain, CheckpointsEveryKAndResumeMatches) {
    const std::string a = out_dir("ck_a"), b = out_dir("ck_b");
    ASSERT_EQ(cli({"pretrain", "--steps", "4", "--set", "run.checkpoint_every=2", "--out", a}).code, 0);
    EXPECT_TRUE(fs::exists(fs::path(a) / "checkpoint_000002.xkd"));
    EXPECT_TRUE(fs::exists(fs::path(a) / "checkpoint_000004.xkd"));
    EXPECT_FALSE(fs::exists(fs::path(a) / "checkpoint_000001.xkd"));
    const CliRun r = cli({"pretrain", "--steps", "4", "--out", b, "--resume", (fs::path(a) / "checkpoint_000002.xkd").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto full = lines_of(read_bytes(fs::path(a) / "metrics.csv"));
    const auto resumed = lines_of(read_bytes(fs::path(b) / "metrics.csv"));
    ASSERT_EQ(resumed.size(), 2u);
    EXPECT_EQ(resumed[0], full[3]);
    EXPECT_EQ(resumed[1], full[4]);
}

TEST(Pretrain, MatsCheckpointStoresSharedBackbonesOnce) {
    const std::string dir = out_dir("mats");
    ASSERT_EQ(cli({"pretrain", "--steps", "1", "--variant", "mats", "--out", dir}).code, 0);
    const Checkpoint c = read_checkpoint(fs::path(dir) / "checkpoint.xkd");
    std::size_t teacher = 0, student = 0;
    for (const auto& b : c.params) {
        teacher += b.name == "teacher.backbone.norm.gain";
        student += b.name == "student.backbone.norm.gain";
        EXPECT_EQ(b.name.find(".video.backbone"), std::string::npos) << b.name;
        EXPECT_EQ(b.name.find(".audio.backbone"), std::string::npos) << b.name;
    }
    EXPECT_EQ(teacher, 1u);
    EXPECT_EQ(student, 1u);
}

TEST(Pretrain, CollapseExitCodeOnlyWhenRequested) {
    // A threshold above any KD value forces a verdict after the window fills.
    const std::vector<std::string> forced{"pretrain", "--steps", "3", "--set", "train.collapse_window=2",
                                          "--set", "train.collapse_eps=1000"};
    const CliRun lenient = cli(with(forced, {"--out", out_dir("col_a")}));
    EXPECT_EQ(lenient.code, 0);
    EXPECT_NE(lenient.err.find("kd-collapse"), std::string::npos);
    const CliRun strict = cli(with(forced, {"--out", out_dir("col_b"), "--set", "run.fail_on_collapse=true"}));
    EXPECT_EQ(strict.code, 3);
}

TEST(Pretrain, BadConfigIsUsageErrorNamingKey) {
    const CliRun r = cli({"pretrain", "--set", "train.stepz=3", "--out", out_dir("bad")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("train.stepz"), std::string::npos);
    EXPECT_TRUE(r.out.empty());
    const fs::path cfg = xkd::testing::temp_path("bad.cfg");
    std::ofstream(cfg) << "[optim]\nlr = quick\n";
    const CliRun f = cli({"--config", cfg.string(), "pretrain"});
    EXPECT_EQ(f.code, 2);
    EXPECT_NE(f.err.find("optim.lr"), std::string::npos);
    EXPECT_EQ(cli({"pretrain", "--set", "novalue"}).code, 2);
    EXPECT_EQ(cli({"pretrain", "--resume", "/nonexistent.xkd", "--out", out_dir("bad2")}).code, 2);
}

TEST(Pretrain, DatasetFileMatchesGeneratedData) {
    const std::string g = out_dir("gen"), a = out_dir("ds_a"), b = out_dir("ds_b");
    const std::string path = (fs::path(g) / "d.xkdd").string();
    const CliRun gen = cli({"gen-data", "--output", path});
    ASSERT_EQ(gen.code, 0) << gen.err;
    EXPECT_EQ(read_dataset(path).clips.size(), 128u);
    EXPECT_EQ(gen.out, "clips,path\n128," + path + "\n");
    ASSERT_EQ(cli({"pretrain", "--steps", "2", "--out", a}).code, 0);
    ASSERT_EQ(cli({"pretrain", "--steps", "2", "--out", b, "--set", "data.path=" + path}).code, 0);
    EXPECT_EQ(read_bytes(fs::path(a) / "metrics.csv"), read_bytes(fs::path(b) / "metrics.csv"));
    EXPECT_EQ(cli({"pretrain", "--steps", "1", "--out", b, "--set", "data.path=" + path, "--set", "data.height=8",
                   "--set", "views.local_video_height=8"})
                  .code,
              2);
}

// ---- probe and reconstruct ----

class Trained : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = out_dir("trained");
        ASSERT_EQ(cli({"pretrain", "--steps", "2", "--out", dir_}).code, 0);
    }
    static std::string checkpoint() { return (fs::path(dir_) / "checkpoint.xkd").string(); }
    static std::string dir_;
};
std::string Trained::dir_;

TEST_F(Trained, ProbeTableFormat) {
    const CliRun r = cli(with({"probe", "--checkpoint", checkpoint(), "--source", "teacher-video", "--source",
                            "student-video", "--fused"},
                           kSmallProbe));
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = lines_of(r.out);
    ASSERT_EQ(lines.size(), 4u);
    const std::regex row(R"(^(\S+)\s+([01]\.\d{4})$)");
    std::vector<std::string> names;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        std::smatch m;
        ASSERT_TRUE(std::regex_match(lines[i], m, row)) << lines[i];
        names.push_back(m[1]);
        const double acc = std::stod(m[2]);
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
    }
    EXPECT_EQ(names, (std::vector<std::string>{"teacher-video", "student-video", "fused"}));
}

TEST_F(Trained, ProbeDefaultsAndFeatureCsv) {
    const std::string feats = out_dir("feats");
    const CliRun r = cli(with({"probe", "--checkpoint", checkpoint(), "--features-csv", feats}, kSmallProbe));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(lines_of(r.out).size(), 5u);
    const auto csv = lines_of(read_bytes(fs::path(feats) / "teacher-audio_test.csv"));
    ASSERT_EQ(csv.size(), 17u);
    EXPECT_EQ(csv[0].rfind("clip_id,label,f0,", 0), 0u);
    EXPECT_NE(csv[0].find(",f63"), std::string::npos);
}

TEST_F(Trained, ProbeErrors) {
    EXPECT_EQ(cli({"probe", "--checkpoint", "/nonexistent/ck.xkd"}).code, 2);
    EXPECT_EQ(cli({"probe"}).code, 2);
    EXPECT_EQ(cli({"probe", "--checkpoint", checkpoint(), "--source", "teacher-smell"}).code, 2);
    const fs::path junk = xkd::testing::temp_path("junk.xkd");
    std::ofstream(junk) << "not a checkpoint";
    EXPECT_EQ(cli({"probe", "--checkpoint", junk.string()}).code, 2);
    // Model width must match the checkpoint.
    EXPECT_EQ(cli({"probe", "--checkpoint", checkpoint(), "--set", "model.d_model=32"}).code, 2);
}

TEST_F(Trained, ReconstructWritesImagesAndIsDeterministic) {
    const std::string a = out_dir("rec_a"), b = out_dir("rec_b");
    const CliRun ra = cli({"reconstruct", "--checkpoint", checkpoint(), "--out", a, "--clip", "3"});
    ASSERT_EQ(ra.code, 0) << ra.err;
    const CliRun rb = cli({"reconstruct", "--checkpoint", checkpoint(), "--out", b, "--clip", "3"});
    EXPECT_EQ(ra.out, rb.out);
    const auto lines = lines_of(ra.out);
    ASSERT_EQ(lines.size(), 3u);
    // 16 tokens per modality: floor(0.8 * 16) video and floor(0.7 * 16) audio masked.
    EXPECT_EQ(lines[1].rfind("video,12,16,", 0), 0u);
    EXPECT_EQ(lines[2].rfind("audio,11,16,", 0), 0u);
    const fs::path da = fs::path(a) / "reconstruct" / "clip3", db = fs::path(b) / "reconstruct" / "clip3";
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(da)) {
        ++files;
        EXPECT_EQ(read_bytes(e.path()), read_bytes(db / e.path().filename())) << e.path();
    }
    EXPECT_EQ(files, 3u * 8 + 3 + 3 * 2 + 1);
    const std::string frame = read_bytes(da / "video_reconstructed_f00.pgm");
    EXPECT_EQ(frame.rfind("P5\n16 16\n255\n", 0), 0u);
    EXPECT_EQ(frame.size(), std::string("P5\n16 16\n255\n").size() + 256);
    const std::string spec = read_bytes(da / "audio_original.pgm");
    EXPECT_EQ(spec.rfind("P5\n32 16\n255\n", 0), 0u);
}

TEST_F(Trained, ReconstructKeepsVisiblePatches) {
    const std::string dir = out_dir("rec_keep");
    ASSERT_EQ(cli({"reconstruct", "--checkpoint", checkpoint(), "--out", dir}).code, 0);
    const fs::path d = fs::path(dir) / "reconstruct" / "clip0";
    const auto orig = lines_of(read_bytes(d / "audio_original.csv"));
    const auto recon = lines_of(read_bytes(d / "audio_reconstructed.csv"));
    const auto mask = lines_of(read_bytes(d / "mask.csv"));
    ASSERT_EQ(orig.size(), recon.size());
    // Audio patches are 4 x 8 on a 4 x 4 grid; row f, column t lies in patch (f/4)*4 + t/8.
    std::vector<bool> masked;
    for (const auto& l : mask)
        if (l.rfind("audio,", 0) == 0) masked.push_back(l.back() == '1');
    ASSERT_EQ(masked.size(), 16u);
    std::size_t same = 0, differ = 0;
    for (std::size_t i = 1; i < orig.size(); ++i) {
        const std::size_t f = (i - 1) / 32, t = (i - 1) % 32;
        if (masked[(f / 4) * 4 + t / 8])
            differ += orig[i] != recon[i];
        else
            same += orig[i] == recon[i];
    }
    EXPECT_EQ(same, 5u * 32);
    EXPECT_GT(differ, 0u);
}

TEST_F(Trained, ReconstructRatioEdges) {
    const std::string dir = out_dir("rec_zero");
    const CliRun z = cli({"reconstruct", "--checkpoint", checkpoint(), "--out", dir, "--video-ratio", "0",
                       "--audio-ratio", "0"});
    ASSERT_EQ(z.code, 0) << z.err;
    EXPECT_NE(z.err.find("notice"), std::string::npos);
    const fs::path d = fs::path(dir) / "reconstruct" / "clip0";
    EXPECT_TRUE(fs::exists(d / "video_original_f00.pgm"));
    EXPECT_FALSE(fs::exists(d / "video_reconstructed_f00.pgm"));
    EXPECT_FALSE(fs::exists(d / "audio_masked.pgm"));
    EXPECT_EQ(cli({"reconstruct", "--checkpoint", checkpoint(), "--video-ratio", "1"}).code, 2);
    EXPECT_EQ(cli({"reconstruct", "--checkpoint", checkpoint(), "--audio-ratio", "1.5"}).code, 2);
    EXPECT_EQ(cli({"reconstruct", "--checkpoint", checkpoint(), "--clip", "100000"}).code, 2);
    EXPECT_EQ(cli({"reconstruct", "--checkpoint", "/nonexistent.xkd"}).code, 2);
}

// ---- command line surface ----

TEST(CommandLine, UsageErrorsAndHelp) {
    EXPECT_EQ(cli({}).code, 2);
    EXPECT_EQ(cli({"frobnicate"}).code, 2);
    EXPECT_EQ(cli({"pretrain", "--steps", "many"}).code, 2);
    EXPECT_EQ(cli({"gradcheck", "--seeds", "0"}).code, 2);
    const CliRun help = cli({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("pretrain"), std::string::npos);
}

TEST(CommandLine, InvalidThreadCountIsUsageError) {
    ::setenv("XKD_THREADS", "zero", 1);
    const CliRun r = cli({"gradcheck", "--only", "op.add"});
    ::unsetenv("XKD_THREADS");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("XKD_THREADS"), std::string::npos);
    ::setenv("XKD_THREADS", "3", 1);
    EXPECT_EQ(cli({"gradcheck", "--only", "op.add"}).code, 0);
    ::unsetenv("XKD_THREADS");
}
