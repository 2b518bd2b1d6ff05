// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "xkd/backbone/model_set.hpp"
#include "xkd/probe/probe.hpp"
#include "xkd/synthdata/synthdata.hpp"
#include "xkd/trainer/trainer.hpp"

namespace xkd {

/// Unusable configuration or command line; the message names the key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    GeneratorSpec spec;
    std::string path;  // dataset file; empty = generate from the seeds below
    std::size_t train_per_class = 32;
    std::uint64_t seed = 11;
    std::size_t probe_train_per_class = 64;
    std::uint64_t probe_train_seed = 101;
    std::size_t probe_test_per_class = 64;
    std::uint64_t probe_test_seed = 202;
};

struct ReconstructConfig {
    double video_ratio = 0.8;
    double audio_ratio = 0.7;
    std::size_t clip = 0;  // index into the training data
};

/// Everything one CLI invocation can configure. Patch dimensions and token
/// grids of `model` are derived, not configured.
struct RunConfig {
    TrainConfig train;
    ModelConfig model;
    DataConfig data;
    ProbeConfig probe;
    ReconstructConfig reconstruct;
    std::string out_dir = "xkd_out";
    std::uint64_t checkpoint_every = 0;  // 0 = final checkpoint only
    bool fail_on_collapse = false;
};

/// Every accepted dotted key, in dump order.
std::vector<std::string> config_keys();

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& key);

/// `key = value` lines, `# comments`, and `[section]` headers that prefix
/// the keys below them. Applied on top of `cfg`.
void apply_config_text(RunConfig& cfg, const std::string& text);
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Every key with its effective value; parsing it back reproduces `cfg`.
std::string dump_config(const RunConfig& cfg);

/// Model config with patch dimensions and grids from the data and view geometry.
ModelConfig derive_model_config(const RunConfig& cfg);

/// Cross-field checks that single-key parsing cannot see.
void validate_run_config(const RunConfig& cfg);

/// XKD_THREADS: unset means 1; anything but a positive integer is a ConfigError.
std::size_t threads_from_env(const char* value);

}  // namespace xkd
