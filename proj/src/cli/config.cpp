// SPDX-License-Identifier: Apache-2.0
#include "xkd/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "xkd/core/error.hpp"

namespace xkd {

namespace {

struct Entry {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("invalid value '" + value + "' for key " + key + ": expected " + expected);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v))
        bad_value(key, s, "a finite number");
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size()) bad_value(key, s, "a non-negative integer");
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    bad_value(key, s, "true or false");
}

/// Interval; each end is closed unless marked open.
struct Range {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool hi_open = false;
    bool lo_open = false;

    void check(const std::string& key, double v, const std::string& text) const {
        const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
        if (ok) return;
        std::string expect = std::string(lo_open ? "(" : "[") + format_double(lo) + ", " + format_double(hi) +
                             (hi_open ? ")" : "]");
        bad_value(key, text, "a value in " + expect);
    }
};

constexpr double kInf = std::numeric_limits<double>::infinity();
const Range kAny{};
const Range kNonNegative{0.0, kInf};
const Range kPositive{0.0, kInf, false, true};
const Range kUnit{0.0, 1.0};
const Range kUnitOpen{0.0, 1.0, true};

class Registry {
public:
    template <class Access>
    void real(const std::string& key, Access access, Range range = kAny) {
        entries_.push_back({key,
                            [=](RunConfig& c, const std::string& s) {
                                const double v = parse_double(key, s);
                                range.check(key, v, s);
                                access(c) = v;
                            },
                            [=](const RunConfig& c) { return format_double(access(c)); }});
    }

    template <class Access>
    void count(const std::string& key, Access access, std::uint64_t min = 0) {
        entries_.push_back({key,
                            [=](RunConfig& c, const std::string& s) {
                                const std::uint64_t v = parse_uint(key, s);
                                if (v < min) bad_value(key, s, "an integer >= " + std::to_string(min));
                                using T = std::remove_reference_t<decltype(access(c))>;
                                if constexpr (sizeof(T) < sizeof(std::uint64_t))
                                    if (v > std::numeric_limits<T>::max()) bad_value(key, s, "a smaller integer");
                                access(c) = static_cast<T>(v);
                            },
                            [=](const RunConfig& c) { return std::to_string(access(c)); }});
    }

    template <class Access>
    void flag(const std::string& key, Access access) {
        entries_.push_back({key, [=](RunConfig& c, const std::string& s) { access(c) = parse_bool(key, s); },
                            [=](const RunConfig& c) { return std::string(access(c) ? "true" : "false"); }});
    }

    template <class Access>
    void text(const std::string& key, Access access) {
        entries_.push_back({key, [=](RunConfig& c, const std::string& s) { access(c) = s; },
                            [=](const RunConfig& c) { return std::string(access(c)); }});
    }

    /// Enum keyed by its to_string spelling over `values`.
    template <class E, class Access>
    void choice(const std::string& key, Access access, std::vector<E> values) {
        entries_.push_back({key,
                            [=](RunConfig& c, const std::string& s) {
                                for (E v : values)
                                    if (to_string(v) == s) {
                                        access(c) = v;
                                        return;
                                    }
                                std::string expect;
                                for (E v : values) expect += (expect.empty() ? "" : "|") + to_string(v);
                                bad_value(key, s, "one of " + expect);
                            },
                            [=](const RunConfig& c) { return to_string(access(c)); }});
    }

    template <class Access>
    void schedule(const std::string& key, Access access, Range range) {
        choice<ScheduleKind>(key + ".kind", [=](auto& c) -> auto& { return access(c).kind; },
                             {ScheduleKind::WarmupCosine, ScheduleKind::Cosine, ScheduleKind::Constant});
        real(key + ".base", [=](auto& c) -> auto& { return access(c).base; }, range);
        real(key + ".final", [=](auto& c) -> auto& { return access(c).final; }, range);
        count(key + ".warmup_steps", [=](auto& c) -> auto& { return access(c).warmup_steps; });
        count(key + ".total_steps", [=](auto& c) -> auto& { return access(c).total_steps; });
    }

    template <class Access>
    void video_augment(const std::string& key, Access access) {
        real(key + ".crop_scale_lo", [=](auto& c) -> auto& { return access(c).crop_scale_lo; }, {0.0, 1.0, false, true});
        real(key + ".crop_scale_hi", [=](auto& c) -> auto& { return access(c).crop_scale_hi; }, {0.0, 1.0, false, true});
        real(key + ".flip_p", [=](auto& c) -> auto& { return access(c).flip_p; }, kUnit);
        real(key + ".brightness", [=](auto& c) -> auto& { return access(c).brightness; }, kUnit);
        real(key + ".contrast", [=](auto& c) -> auto& { return access(c).contrast; }, kUnit);
        real(key + ".grayscale_p", [=](auto& c) -> auto& { return access(c).grayscale_p; }, kUnit);
        real(key + ".blur_p", [=](auto& c) -> auto& { return access(c).blur_p; }, kUnit);
    }

    template <class Access>
    void audio_augment(const std::string& key, Access access) {
        real(key + ".volume", [=](auto& c) -> auto& { return access(c).volume; }, kUnit);
        real(key + ".crop_range_lo", [=](auto& c) -> auto& { return access(c).crop_range_lo; }, kPositive);
        real(key + ".crop_range_hi", [=](auto& c) -> auto& { return access(c).crop_range_hi; }, kPositive);
    }

    void raw(Entry e) { entries_.push_back(std::move(e)); }

    const Entry* find(const std::string& key) const {
        const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
        return it == entries_.end() ? nullptr : &*it;
    }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

#define XKD_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

Registry build_registry() {
    Registry r;
    r.count("train.steps", XKD_FIELD(train.steps));
    r.count("train.batch_size", XKD_FIELD(train.batch_size), 1);
    r.count("train.seed", XKD_FIELD(train.seed));
    r.choice<Variant>("train.variant", XKD_FIELD(train.variant), {Variant::MS, Variant::MAS, Variant::MATS});
    r.real("train.mask_ratio_video", XKD_FIELD(train.mask_ratio_video), kUnitOpen);
    r.real("train.mask_ratio_audio", XKD_FIELD(train.mask_ratio_audio), kUnitOpen);
    r.flag("train.centering", XKD_FIELD(train.centering));
    r.real("train.center_momentum", XKD_FIELD(train.center_momentum), kUnit);
    r.choice<AlignmentVariant>("train.alignment", XKD_FIELD(train.alignment),
                               {AlignmentVariant::Da, AlignmentVariant::Da1, AlignmentVariant::Da2});
    r.choice<CrossAttentionVariant>("train.cross_attention", XKD_FIELD(train.cross_attention),
                                    {CrossAttentionVariant::Scale, CrossAttentionVariant::Softmax});
    // Optional number: "median" selects the median heuristic.
    r.raw({"train.kernel_sigma",
                    [](RunConfig& c, const std::string& s) {
                        if (s == "median") {
                            c.train.kernel.sigma.reset();
                            return;
                        }
                        const double v = parse_double("train.kernel_sigma", s);
                        if (!(v > 0.0)) bad_value("train.kernel_sigma", s, "median or a positive number");
                        c.train.kernel.sigma = v;
                    },
                    [](const RunConfig& c) {
                        return c.train.kernel.sigma ? format_double(*c.train.kernel.sigma) : std::string("median");
                    }});
    r.count("train.collapse_window", XKD_FIELD(train.collapse_window), 1);
    r.real("train.collapse_eps", XKD_FIELD(train.collapse_eps), kNonNegative);
    r.flag("train.stop_on_collapse", XKD_FIELD(train.stop_on_collapse));

    r.real("loss.ae", XKD_FIELD(train.weights.ae), kNonNegative);
    r.real("loss.da", XKD_FIELD(train.weights.da), kNonNegative);
    r.real("loss.kd", XKD_FIELD(train.weights.kd), kNonNegative);

    r.real("sharpen.tau_student", XKD_FIELD(train.sharpen.tau_student), kPositive);
    r.schedule("sharpen.teacher_video", XKD_FIELD(train.sharpen.tau_teacher_video), kPositive);
    r.schedule("sharpen.teacher_audio", XKD_FIELD(train.sharpen.tau_teacher_audio), kPositive);

    r.schedule("ema.video", XKD_FIELD(train.ema_video), kUnit);
    r.schedule("ema.audio", XKD_FIELD(train.ema_audio), kUnit);

    r.real("optim.lr", XKD_FIELD(train.optim.lr), kNonNegative);
    r.real("optim.final_lr", XKD_FIELD(train.optim.final_lr), kNonNegative);
    r.count("optim.warmup_steps", XKD_FIELD(train.optim.warmup_steps));
    r.real("optim.beta1", XKD_FIELD(train.optim.betas.first), kUnitOpen);
    r.real("optim.beta2", XKD_FIELD(train.optim.betas.second), kUnitOpen);
    r.real("optim.weight_decay", XKD_FIELD(train.optim.weight_decay), kNonNegative);

    r.real("views.video_fps", XKD_FIELD(train.views.video_fps), kPositive);
    r.real("views.audio_frame_rate", XKD_FIELD(train.views.audio_frame_rate), kPositive);
    r.real("views.local_seconds", XKD_FIELD(train.views.local_seconds), kPositive);
    r.count("views.local_video_height", XKD_FIELD(train.views.local_video_height), 1);
    r.count("views.local_video_width", XKD_FIELD(train.views.local_video_width), 1);
    r.count("views.n_local", XKD_FIELD(train.views.n_local), 1);
    r.video_augment("views.global_video", XKD_FIELD(train.views.global_video));
    r.video_augment("views.local_video", XKD_FIELD(train.views.local_video));
    r.audio_augment("views.global_audio", XKD_FIELD(train.views.global_audio));
    r.audio_augment("views.local_audio", XKD_FIELD(train.views.local_audio));

    r.count("patch.video_time", XKD_FIELD(train.video_patch.time), 1);
    r.count("patch.video_height", XKD_FIELD(train.video_patch.height), 1);
    r.count("patch.video_width", XKD_FIELD(train.video_patch.width), 1);
    r.count("patch.audio_freq", XKD_FIELD(train.audio_patch.freq), 1);
    r.count("patch.audio_time", XKD_FIELD(train.audio_patch.time), 1);

    r.count("model.d_model", XKD_FIELD(model.encoder.d_model), 1);
    r.count("model.depth", XKD_FIELD(model.encoder.depth), 1);
    r.count("model.heads", XKD_FIELD(model.encoder.heads), 1);
    r.count("model.mlp_ratio", XKD_FIELD(model.encoder.mlp_ratio), 1);
    r.count("decoder.width", XKD_FIELD(model.decoder.width), 1);
    r.count("decoder.depth", XKD_FIELD(model.decoder.depth), 1);
    r.count("decoder.heads", XKD_FIELD(model.decoder.heads), 1);
    r.count("decoder.mlp_ratio", XKD_FIELD(model.decoder.mlp_ratio), 1);
    r.count("head.hidden", XKD_FIELD(model.head.hidden), 1);
    r.count("head.bottleneck", XKD_FIELD(model.head.bottleneck), 1);
    r.count("head.out_dim", XKD_FIELD(model.head.out_dim), 1);
    r.choice<HeadActivation>("head.activation", XKD_FIELD(model.head.activation),
                             {HeadActivation::Gelu, HeadActivation::Identity});
    r.flag("head.normalize_hidden", XKD_FIELD(model.head.normalize_hidden));

    r.count("data.n_classes", XKD_FIELD(data.spec.n_classes), 2);
    r.count("data.video_frames", XKD_FIELD(data.spec.video_frames), 1);
    r.count("data.height", XKD_FIELD(data.spec.height), 1);
    r.count("data.width", XKD_FIELD(data.spec.width), 1);
    r.count("data.channels", XKD_FIELD(data.spec.channels), 1);
    r.count("data.audio_freq", XKD_FIELD(data.spec.audio_freq), 1);
    r.count("data.audio_time", XKD_FIELD(data.spec.audio_time), 1);
    r.real("data.cross_modal_strength", XKD_FIELD(data.spec.cross_modal_strength));
    r.real("data.noise_std", XKD_FIELD(data.spec.noise_std), kNonNegative);
    r.text("data.path", XKD_FIELD(data.path));
    r.count("data.train_per_class", XKD_FIELD(data.train_per_class), 1);
    r.count("data.seed", XKD_FIELD(data.seed));
    r.count("data.probe_train_per_class", XKD_FIELD(data.probe_train_per_class), 1);
    r.count("data.probe_train_seed", XKD_FIELD(data.probe_train_seed));
    r.count("data.probe_test_per_class", XKD_FIELD(data.probe_test_per_class), 1);
    r.count("data.probe_test_seed", XKD_FIELD(data.probe_test_seed));

    r.count("probe.iterations", XKD_FIELD(probe.iterations), 1);
    r.real("probe.lr", XKD_FIELD(probe.lr), kPositive);
    r.real("probe.weight_decay", XKD_FIELD(probe.weight_decay), kNonNegative);

    r.real("reconstruct.video_ratio", XKD_FIELD(reconstruct.video_ratio), kUnitOpen);
    r.real("reconstruct.audio_ratio", XKD_FIELD(reconstruct.audio_ratio), kUnitOpen);
    r.count("reconstruct.clip", XKD_FIELD(reconstruct.clip));

    r.text("run.out", XKD_FIELD(out_dir));
    r.count("run.checkpoint_every", XKD_FIELD(checkpoint_every));
    r.flag("run.fail_on_collapse", XKD_FIELD(fail_on_collapse));
    return r;
}

#undef XKD_FIELD

const Registry& registry() {
    static const Registry r = build_registry();
    return r;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string section_of(const std::string& key) { return key.substr(0, key.find('.')); }

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& e : registry().entries()) keys.push_back(e.key);
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const Entry* e = registry().find(key);
    if (!e) throw ConfigError("unknown configuration key " + key);
    e->set(cfg, value);
}

std::string get_config_value(const RunConfig& cfg, const std::string& key) {
    const Entry* e = registry().find(key);
    if (!e) throw ConfigError("unknown configuration key " + key);
    return e->get(cfg);
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where + "missing key");
        const std::string full = section.empty() ? key : section + "." + key;
        try {
            set_config_value(cfg, full, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        apply_config_text(cfg, buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string dump_config(const RunConfig& cfg) {
    std::string out, section;
    for (const auto& e : registry().entries()) {
        const std::string s = section_of(e.key);
        if (s != section) {
            out += (out.empty() ? "[" : "\n[") + s + "]\n";
            section = s;
        }
        out += e.key.substr(s.size() + 1) + " = " + e.get(cfg) + "\n";
    }
    return out;
}

namespace {

std::size_t tiles(std::size_t extent, std::size_t patch, const std::string& what) {
    if (extent == 0 || extent % patch != 0)
        throw ConfigError(what + " (" + std::to_string(extent) + ") is not a positive multiple of its patch extent (" +
                          std::to_string(patch) + ")");
    return extent / patch;
}

}  // namespace

ModelConfig derive_model_config(const RunConfig& cfg) {
    const GeneratorSpec& s = cfg.data.spec;
    const VideoPatch& vp = cfg.train.video_patch;
    const AudioPatch& ap = cfg.train.audio_patch;
    const ViewConfig& v = cfg.train.views;
    ModelConfig m = cfg.model;
    m.video_patch_dim = vp.time * vp.height * vp.width * s.channels;
    m.audio_patch_dim = ap.freq * ap.time;
    const Grid global_video{tiles(s.video_frames, vp.time, "data.video_frames"),
                            tiles(s.height, vp.height, "data.height"), tiles(s.width, vp.width, "data.width")};
    const Grid local_video{tiles(v.local_video_frames(), vp.time, "local video frames from views.local_seconds"),
                           tiles(v.local_video_height, vp.height, "views.local_video_height"),
                           tiles(v.local_video_width, vp.width, "views.local_video_width")};
    const std::size_t bands = tiles(s.audio_freq, ap.freq, "data.audio_freq");
    const Grid global_audio{bands, tiles(s.audio_time, ap.time, "data.audio_time")};
    const Grid local_audio{bands, tiles(v.local_audio_frames(), ap.time, "local audio frames from views.local_seconds")};
    m.video_grids = {global_video, local_video};
    m.audio_grids = {global_audio, local_audio};
    return m;
}

void validate_run_config(const RunConfig& cfg) {
    const auto& e = cfg.model.encoder;
    if (e.d_model % e.heads != 0) throw ConfigError("model.heads must divide model.d_model");
    const auto& d = cfg.model.decoder;
    if (d.width % d.heads != 0) throw ConfigError("decoder.heads must divide decoder.width");
    const auto& v = cfg.train.views;
    const auto& s = cfg.data.spec;
    if (v.local_video_frames() > s.video_frames || v.local_audio_frames() > s.audio_time)
        throw ConfigError("views.local_seconds yields local views longer than the clip");
    if (v.local_video_height > s.height || v.local_video_width > s.width)
        throw ConfigError("views.local_video_height/width exceed data.height/width");
    for (const auto* a : {&v.global_video, &v.local_video})
        if (a->crop_scale_lo > a->crop_scale_hi)
            throw ConfigError("views.*_video.crop_scale_lo exceeds crop_scale_hi");
    for (const auto* a : {&v.global_audio, &v.local_audio})
        if (a->crop_range_lo > a->crop_range_hi)
            throw ConfigError("views.*_audio.crop_range_lo exceeds crop_range_hi");
    derive_model_config(cfg);
    try {
        cfg.train.validate();
        s.validate(cfg.train.video_patch, cfg.train.audio_patch);
    } catch (const ContractError& err) {
        throw ConfigError(std::string("invalid configuration: ") + err.what());
    }
}

std::size_t threads_from_env(const char* value) {
    if (!value) return 1;
    const std::string s(value);
    std::size_t n = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (s.empty() || ec != std::errc() || end != s.data() + s.size() || n == 0)
        throw ConfigError("XKD_THREADS must be a positive integer, got '" + s + "'");
    return n;
}

}  // namespace xkd
