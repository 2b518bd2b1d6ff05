// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xkd/cli/config.hpp"
#include "xkd/cli/gradcheck_suite.hpp"
#include "xkd/probe/probe.hpp"

namespace xkd {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2, kExitCollapse = 3 };

/// Tables and data go to `out`, diagnostics to `err`.
struct Streams {
    std::ostream& out;
    std::ostream& err;
};

struct PretrainOptions {
    std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};

/// Writes config.txt, metrics.csv, checkpoint_<step>.xkd every
/// checkpoint_every steps and checkpoint.xkd at the end, all under out_dir.
int cmd_pretrain(const RunConfig& cfg, const PretrainOptions& opts, Streams io);

int cmd_gradcheck(const GradcheckRegistry& registry, std::uint64_t seeds, const std::vector<std::string>& only,
                  Streams io);

struct ProbeOptions {
    std::filesystem::path checkpoint;
    std::vector<FeatureSource> sources;  // empty = all four single-modality sources
    bool fused = false;
    std::optional<std::filesystem::path> features_dir;
};

/// Fused rows pair the first requested video and audio sources, teachers
/// when a modality was not requested.
int cmd_probe(const RunConfig& cfg, const ProbeOptions& opts, Streams io);

struct ReconstructOptions {
    std::filesystem::path checkpoint;
};

/// Masks the selected clip, reconstructs it with the students and decoders,
/// and writes PGM/PPM images plus CSV arrays under out_dir/reconstruct.
int cmd_reconstruct(const RunConfig& cfg, const ReconstructOptions& opts, Streams io);

int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& output, Streams io);

/// Full command-line entry point; `args` excludes the program name.
/// `gradchecks` replaces the standard registry when given.
int run_cli(const std::vector<std::string>& args, Streams io, const GradcheckRegistry* gradchecks = nullptr);

/// Training clips: the dataset file when data.path is set, else generated.
std::vector<ClipPair> load_training_data(const RunConfig& cfg);

}  // namespace xkd
