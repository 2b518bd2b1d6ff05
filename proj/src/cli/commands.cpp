// SPDX-License-Identifier: Apache-2.0
#include "xkd/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>

#include "xkd/autograd/ops.hpp"
#include "xkd/autograd/tensor.hpp"
#include "xkd/core/error.hpp"
#include "xkd/objectives/losses.hpp"
#include "xkd/trainer/checkpoint.hpp"
#include "xkd/views/embed.hpp"

namespace xkd {

namespace fs = std::filesystem;

namespace {

std::ofstream open_output(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
    std::ofstream out(path, std::ios::binary | mode);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    return out;
}

bool same_geometry(const GeneratorSpec& a, const GeneratorSpec& b) {
    return a.n_classes == b.n_classes && a.video_frames == b.video_frames && a.height == b.height &&
           a.width == b.width && a.channels == b.channels && a.audio_freq == b.audio_freq &&
           a.audio_time == b.audio_time;
}

ModelSet fresh_models(const RunConfig& cfg, Variant variant) {
    Rng init = Rng::stream(cfg.train.seed, "init");
    return build_model_set(derive_model_config(cfg), variant, init);
}

struct Loaded {
    ModelSet models;
    TrainState state;
};

Loaded load_model(const RunConfig& cfg, const fs::path& path) {
    if (!fs::is_regular_file(path)) throw ConfigError("checkpoint not found: " + path.string());
    const Checkpoint ckpt = read_checkpoint(path);
    const Blob* vb = ckpt.find_meta("model.variant");
    if (!vb || vb->values.size() != 1) throw FormatError("checkpoint: missing metadata model.variant");
    const double code = vb->values[0];
    if (!(code == 0.0 || code == 1.0 || code == 2.0)) throw FormatError("checkpoint: unknown model variant");
    TrainConfig tc = cfg.train;
    tc.variant = static_cast<Variant>(static_cast<int>(code));
    Loaded l{fresh_models(cfg, tc.variant), {}};
    l.state = TrainState::init(l.models, tc);
    apply_checkpoint(ckpt, l.models, l.state);
    return l;
}

std::string checkpoint_name(std::uint64_t step) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "checkpoint_%06llu.xkd", static_cast<unsigned long long>(step));
    return buf;
}

// ---- image and array export ----

std::uint8_t to_byte(double v, double lo, double hi) {
    const double t = hi > lo ? (v - lo) / (hi - lo) : 0.0;
    return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t, 0.0, 1.0)));
}

/// One frame as binary PGM (1 channel) or PPM (3 channels), values clamped to [0, 1].
void write_frame(const fs::path& path, const Video& v, std::size_t t) {
    require(v.channels == 1 || v.channels == 3, "image export supports 1 or 3 channels");
    auto out = open_output(path);
    out << (v.channels == 1 ? "P5\n" : "P6\n") << v.width << ' ' << v.height << "\n255\n";
    for (std::size_t y = 0; y < v.height; ++y)
        for (std::size_t x = 0; x < v.width; ++x)
            for (std::size_t c = 0; c < v.channels; ++c) out.put(static_cast<char>(to_byte(v.at(t, y, x, c), 0.0, 1.0)));
}

/// Spectrogram as PGM with the highest bin on the top row, scaled to [lo, hi].
void write_spectrogram(const fs::path& path, const Spectrogram& s, double lo, double hi) {
    auto out = open_output(path);
    out << "P5\n" << s.time << ' ' << s.freq << "\n255\n";
    for (std::size_t r = 0; r < s.freq; ++r)
        for (std::size_t t = 0; t < s.time; ++t) out.put(static_cast<char>(to_byte(s.at(s.freq - 1 - r, t), lo, hi)));
}

void write_video_csv(const fs::path& path, const Video& v) {
    auto out = open_output(path);
    out << "t,y,x,c,value\n";
    char buf[40];
    for (std::size_t t = 0; t < v.frames; ++t)
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width; ++x)
                for (std::size_t c = 0; c < v.channels; ++c) {
                    std::snprintf(buf, sizeof buf, "%.17g", v.at(t, y, x, c));
                    out << t << ',' << y << ',' << x << ',' << c << ',' << buf << '\n';
                }
}

void write_audio_csv(const fs::path& path, const Spectrogram& s) {
    auto out = open_output(path);
    out << "f,t,value\n";
    char buf[40];
    for (std::size_t f = 0; f < s.freq; ++f)
        for (std::size_t t = 0; t < s.time; ++t) {
            std::snprintf(buf, sizeof buf, "%.17g", s.at(f, t));
            out << f << ',' << t << ',' << buf << '\n';
        }
}

struct Reconstruction {
    std::vector<double> masked;         // masked rows zeroed
    std::vector<double> reconstructed;  // masked rows predicted
    std::size_t n_masked = 0, n_total = 0;
    double mse = 0.0;  // over masked entries, original scale
};

/// Predictions live in per-patch standardized space; they are mapped back
/// with the statistics of the original patch.
Reconstruction reconstruct_tokens(const Network& student, const Decoder& decoder, const TokenBatch& batch) {
    Reconstruction r;
    const auto tokens = batch.tokens.values();
    const std::size_t d = batch.patch_dim();
    r.n_total = batch.count();
    r.masked.assign(tokens.begin(), tokens.end());
    r.reconstructed = r.masked;
    const auto masked_rows = batch.masked_indices();
    r.n_masked = masked_rows.size();
    if (masked_rows.empty()) return r;
    NoGradGuard no_grad;
    const EncoderOutput enc = encode(*student.backbone, embed(batch, student.embed, true));
    const Tensor pred = decode(decoder, enc, batch);
    for (std::size_t k = 0; k < masked_rows.size(); ++k) {
        const std::size_t row = masked_rows[k];
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < d; ++c) mean += tokens[row * d + c];
        mean /= static_cast<double>(d);
        for (std::size_t c = 0; c < d; ++c) var += (tokens[row * d + c] - mean) * (tokens[row * d + c] - mean);
        const double scale = std::sqrt(var / static_cast<double>(d) + ops::kNormEps);
        for (std::size_t c = 0; c < d; ++c) {
            const double v = mean + scale * pred.at(k, c);
            r.masked[row * d + c] = 0.0;
            r.reconstructed[row * d + c] = v;
            r.mse += (v - tokens[row * d + c]) * (v - tokens[row * d + c]);
        }
    }
    r.mse /= static_cast<double>(masked_rows.size() * d);
    return r;
}

std::vector<FeatureSource> single_sources() {
    return {FeatureSource::TeacherVideo, FeatureSource::TeacherAudio, FeatureSource::StudentVideo,
            FeatureSource::StudentAudio};
}

Modality modality_of(FeatureSource s) {
    return s == FeatureSource::StudentVideo || s == FeatureSource::TeacherVideo ? Modality::Video : Modality::Audio;
}

void write_features(const fs::path& path, const FeatureMatrix& m) {
    auto out = open_output(path);
    write_features_csv(out, m);
}

}  // namespace

std::vector<ClipPair> load_training_data(const RunConfig& cfg) {
    if (cfg.data.path.empty()) return generate_dataset(cfg.data.spec, cfg.data.train_per_class, cfg.data.seed);
    Dataset ds = read_dataset(cfg.data.path);
    if (!same_geometry(ds.spec, cfg.data.spec))
        throw ConfigError("dataset " + cfg.data.path + " geometry differs from the data.* keys");
    return std::move(ds.clips);
}

int cmd_pretrain(const RunConfig& cfg, const PretrainOptions& opts, Streams io) {
    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    {
        auto out = open_output(dir / "config.txt");
        out << dump_config(cfg);
    }
    const std::vector<ClipPair> data = load_training_data(cfg);
    ModelSet models = fresh_models(cfg, cfg.train.variant);
    TrainState state = TrainState::init(models, cfg.train);
    if (opts.resume) {
        if (!fs::is_regular_file(*opts.resume)) throw ConfigError("checkpoint not found: " + opts.resume->string());
        load_checkpoint(*opts.resume, models, state);
        io.err << "resuming at step " << state.step << '\n';
    }
    auto metrics = open_output(dir / "metrics.csv", state.step == 0 ? std::ios::trunc : std::ios::app);

    PretrainCallbacks callbacks;
    if (cfg.checkpoint_every > 0)
        callbacks.on_step = [&](const LossRecord& rec, const ModelSet& m, const TrainState& s) {
            if (rec.step % cfg.checkpoint_every == 0) save_checkpoint(dir / checkpoint_name(rec.step), m, s);
        };
    PretrainResult result;
    try {
        result = run_pretraining(models, state, cfg.train, data, &metrics, callbacks);
    } catch (const NonFiniteError& e) {
        io.err << "pretrain: " << e.what() << '\n';
        return kExitCheckFailed;
    }
    save_checkpoint(dir / "checkpoint.xkd", models, state);

    const CollapseVerdict& v = result.verdict;
    io.out << "steps " << state.step << " verdict " << to_string(v.status) << '\n';
    if (v.status == CollapseStatus::Healthy) return kExitOk;
    io.err << "pretrain: " << to_string(v.status) << " at step " << v.step << " (trailing L_kd " << v.window_kd
           << ", KL " << v.window_kl << ")\n";
    return cfg.fail_on_collapse ? kExitCollapse : kExitOk;
}

int cmd_gradcheck(const GradcheckRegistry& registry, std::uint64_t seeds, const std::vector<std::string>& only,
                  Streams io) {
    for (const auto& f : only) {
        const bool known = std::any_of(registry.items().begin(), registry.items().end(),
                                       [&](const GradcheckItem& i) { return gradcheck_matches(i.name, f); });
        if (!known) {
            io.err << "gradcheck: no check matches '" << f << "'\n";
            return kExitUsage;
        }
    }
    const auto outcomes = run_gradcheck(registry, seeds, only);
    bool ok = true;
    char buf[96];
    for (const auto& o : outcomes) {
        const bool pass = o.max_error < kGradcheckTolerance;
        std::snprintf(buf, sizeof buf, "%-28s %.3e  %s", o.name.c_str(), o.max_error, pass ? "ok" : "FAIL");
        io.out << buf << '\n';
        if (!pass) {
            ok = false;
            io.err << "gradcheck failed: " << o.name << " max relative error " << o.max_error << " (seed "
                   << o.worst_seed << ")\n";
        }
    }
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_probe(const RunConfig& cfg, const ProbeOptions& opts, Streams io) {
    const Loaded loaded = load_model(cfg, opts.checkpoint);
    std::vector<FeatureSource> sources;
    bool fused = opts.fused;
    for (auto s : opts.sources) {
        if (s == FeatureSource::Fused)
            fused = true;
        else if (std::find(sources.begin(), sources.end(), s) == sources.end())
            sources.push_back(s);
    }
    if (sources.empty()) sources = single_sources();

    const auto train = generate_dataset(cfg.data.spec, cfg.data.probe_train_per_class, cfg.data.probe_train_seed);
    const auto test = generate_dataset(cfg.data.spec, cfg.data.probe_test_per_class, cfg.data.probe_test_seed);
    const VideoPatch& vp = cfg.train.video_patch;
    const AudioPatch& ap = cfg.train.audio_patch;
    auto features = [&](FeatureSource s, const std::vector<ClipPair>& clips) {
        return extract_features(network_for(loaded.models, s), clips, modality_of(s), s, vp, ap);
    };
    if (opts.features_dir) fs::create_directories(*opts.features_dir);
    auto run = [&](const std::string& name, const FeatureMatrix& tr, const FeatureMatrix& te) {
        if (opts.features_dir) {
            write_features(*opts.features_dir / (name + "_train.csv"), tr);
            write_features(*opts.features_dir / (name + "_test.csv"), te);
        }
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-16s %.4f", name.c_str(), linear_probe(tr, te, cfg.probe));
        io.out << buf << '\n';
    };

    io.out << "source           accuracy\n";
    for (auto s : sources) run(to_string(s), features(s, train), features(s, test));
    if (fused) {
        auto first = [&](Modality m, FeatureSource fallback) {
            const auto it = std::find_if(sources.begin(), sources.end(), [&](FeatureSource s) { return modality_of(s) == m; });
            return it == sources.end() ? fallback : *it;
        };
        const FeatureSource v = first(Modality::Video, FeatureSource::TeacherVideo);
        const FeatureSource a = first(Modality::Audio, FeatureSource::TeacherAudio);
        run(to_string(FeatureSource::Fused), late_fusion(features(v, train), features(a, train)),
            late_fusion(features(v, test), features(a, test)));
    }
    return kExitOk;
}

int cmd_reconstruct(const RunConfig& cfg, const ReconstructOptions& opts, Streams io) {
    const Loaded loaded = load_model(cfg, opts.checkpoint);
    const std::vector<ClipPair> data = load_training_data(cfg);
    const std::size_t index = cfg.reconstruct.clip;
    if (index >= data.size())
        throw ConfigError("reconstruct.clip " + std::to_string(index) + " is out of range (dataset has " +
                          std::to_string(data.size()) + " clips)");
    const ClipPair& clip = data[index];
    const fs::path dir = fs::path(cfg.out_dir) / "reconstruct" / ("clip" + std::to_string(index));
    fs::create_directories(dir);
    const VideoPatch& vp = cfg.train.video_patch;
    const AudioPatch& ap = cfg.train.audio_patch;
    const ModelSet& m = loaded.models;

    io.out << "modality,masked,total,mse_masked\n";
    auto report = [&](const char* name, const Reconstruction& r) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6g", name, r.n_masked, r.n_total, r.mse);
        io.out << buf << '\n';
        if (r.n_masked == 0) io.err << "notice: " << name << " mask is empty; writing originals only\n";
    };

    Rng video_rng = Rng::stream(cfg.train.seed, "reconstruct", 0);
    const TokenBatch vb = mask_tokens(patchify(clip.video, vp), cfg.reconstruct.video_ratio, video_rng);
    const Reconstruction vr = reconstruct_tokens(m.student_video, m.decoder_video, vb);
    report("video", vr);
    std::vector<std::pair<std::string, Video>> videos{{"original", clip.video}};
    if (vr.n_masked > 0) {
        videos.emplace_back("masked", unpatchify_video(vr.masked, vb.grid, vp, clip.video.channels));
        videos.emplace_back("reconstructed", unpatchify_video(vr.reconstructed, vb.grid, vp, clip.video.channels));
    }
    const char* ext = clip.video.channels == 1 ? ".pgm" : ".ppm";
    for (const auto& [kind, v] : videos) {
        write_video_csv(dir / ("video_" + kind + ".csv"), v);
        for (std::size_t t = 0; t < v.frames; ++t) {
            char name[64];
            std::snprintf(name, sizeof name, "video_%s_f%02zu%s", kind.c_str(), t, ext);
            write_frame(dir / name, v, t);
        }
    }

    Rng audio_rng = Rng::stream(cfg.train.seed, "reconstruct", 1);
    const TokenBatch ab = mask_tokens(patchify(clip.audio, ap), cfg.reconstruct.audio_ratio, audio_rng);
    const Reconstruction ar = reconstruct_tokens(m.student_audio, m.decoder_audio, ab);
    report("audio", ar);
    std::vector<std::pair<std::string, Spectrogram>> audios{{"original", clip.audio}};
    if (ar.n_masked > 0) {
        audios.emplace_back("masked", unpatchify_audio(ar.masked, ab.grid, ap));
        audios.emplace_back("reconstructed", unpatchify_audio(ar.reconstructed, ab.grid, ap));
    }
    // One intensity scale for all audio images, taken from the original.
    const auto [lo, hi] = std::minmax_element(clip.audio.data.begin(), clip.audio.data.end());
    for (const auto& [kind, s] : audios) {
        write_audio_csv(dir / ("audio_" + kind + ".csv"), s);
        write_spectrogram(dir / ("audio_" + kind + ".pgm"), s, *lo, *hi);
    }

    auto mask_out = open_output(dir / "mask.csv");
    mask_out << "modality,index,masked\n";
    for (std::size_t i = 0; i < vb.count(); ++i) mask_out << "video," << i << ',' << (vb.mask[i] ? 1 : 0) << '\n';
    for (std::size_t i = 0; i < ab.count(); ++i) mask_out << "audio," << i << ',' << (ab.mask[i] ? 1 : 0) << '\n';
    return kExitOk;
}

int cmd_gen_data(const RunConfig& cfg, const fs::path& output, Streams io) {
    if (output.has_parent_path()) fs::create_directories(output.parent_path());
    const auto clips = generate_dataset(cfg.data.spec, cfg.data.train_per_class, cfg.data.seed);
    write_dataset(output, cfg.data.spec, clips);
    io.out << "clips,path\n" << clips.size() << ',' << output.string() << '\n';
    return kExitOk;
}

int run_cli(const std::vector<std::string>& args, Streams io, const GradcheckRegistry* gradchecks) {
    CLI::App app{"xkd: cross-modal knowledge distillation on synthetic audio-video clips", "xkd"};
    app.require_subcommand(1);
    std::string config_path, out_dir, variant;
    std::optional<std::uint64_t> seed, steps;
    std::vector<std::string> sets;
    bool print_config = false;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--seed", seed, "train.seed");
    app.add_option("--out", out_dir, "run.out");
    app.add_option("--steps", steps, "train.steps");
    app.add_option("--variant", variant, "train.variant (ms, mas, mats)");
    app.add_option("--set", sets, "KEY=VALUE override, repeatable")->expected(1)->take_all();
    app.add_flag("--print-config", print_config, "print the effective configuration and exit");

    auto* pretrain = app.add_subcommand("pretrain", "run pretraining");
    std::string resume;
    pretrain->add_option("--resume", resume, "checkpoint to continue from");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    std::vector<std::string> only;
    std::uint64_t seeds = 20;
    gradcheck->add_option("--only", only, "check name or group, repeatable")->expected(1)->take_all();
    gradcheck->add_option("--seeds", seeds, "random instances per check")->check(CLI::PositiveNumber);

    auto* probe = app.add_subcommand("probe", "linear probe on frozen features");
    std::string probe_ckpt, features_dir;
    std::vector<std::string> source_names;
    bool fused = false;
    probe->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
    probe->add_option("--source", source_names, "feature source, repeatable")->expected(1)->take_all();
    probe->add_flag("--fused", fused, "add a late-fusion row");
    probe->add_option("--features-csv", features_dir, "directory for feature CSVs");

    auto* reconstruct = app.add_subcommand("reconstruct", "export masked reconstructions of one clip");
    std::string recon_ckpt;
    std::optional<std::size_t> clip;
    std::optional<std::string> video_ratio, audio_ratio;
    reconstruct->add_option("--checkpoint", recon_ckpt, "checkpoint file")->required();
    reconstruct->add_option("--clip", clip, "reconstruct.clip");
    reconstruct->add_option("--video-ratio", video_ratio, "reconstruct.video_ratio");
    reconstruct->add_option("--audio-ratio", audio_ratio, "reconstruct.audio_ratio");

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset file");
    std::string gen_output;
    gen->add_option("--output", gen_output, "dataset path (default <out>/dataset.xkdd)");

    for (auto* sub : {pretrain, gradcheck, probe, reconstruct, gen}) sub->fallthrough();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, io.out, io.err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        threads_from_env(std::getenv("XKD_THREADS"));
        RunConfig cfg;
        if (!config_path.empty()) apply_config_file(cfg, config_path);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
            set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) cfg.train.seed = *seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (steps) cfg.train.steps = *steps;
        if (!variant.empty()) set_config_value(cfg, "train.variant", variant);
        if (clip) cfg.reconstruct.clip = *clip;
        if (video_ratio) set_config_value(cfg, "reconstruct.video_ratio", *video_ratio);
        if (audio_ratio) set_config_value(cfg, "reconstruct.audio_ratio", *audio_ratio);
        validate_run_config(cfg);
        if (print_config) {
            io.out << dump_config(cfg);
            return kExitOk;
        }

        if (pretrain->parsed()) {
            PretrainOptions o;
            if (!resume.empty()) o.resume = resume;
            return cmd_pretrain(cfg, o, io);
        }
        if (gradcheck->parsed()) {
            if (gradchecks) return cmd_gradcheck(*gradchecks, seeds, only, io);
            return cmd_gradcheck(GradcheckRegistry::standard(), seeds, only, io);
        }
        if (probe->parsed()) {
            ProbeOptions o;
            o.checkpoint = probe_ckpt;
            o.fused = fused;
            for (const auto& n : source_names) {
                const auto s = parse_feature_source(n);
                if (!s) throw ConfigError("unknown --source '" + n + "'");
                o.sources.push_back(*s);
            }
            if (!features_dir.empty()) o.features_dir = features_dir;
            return cmd_probe(cfg, o, io);
        }
        if (reconstruct->parsed()) return cmd_reconstruct(cfg, {recon_ckpt}, io);
        if (gen->parsed())
            return cmd_gen_data(cfg, gen_output.empty() ? fs::path(cfg.out_dir) / "dataset.xkdd" : fs::path(gen_output),
                                io);
    } catch (const ConfigError& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ContractError& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        io.err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace xkd
