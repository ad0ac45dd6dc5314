#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dinf/net.hpp"
#include "dinf/train.hpp"

namespace dinf {

struct DatasetSpec {
    std::string kind = "gmm2";
    int n = 256;
    int data_dim = 2;
    std::uint64_t seed = 1;
};

struct ScheduleSpec {
    int T = 100;
    double beta_min = 1e-4;
    double beta_max = 0.05;
};

struct ArchLayerSpec {
    std::string kind = "dense";
    int out_dim = 0;
    int in_channels = 0;
    int out_channels = 0;
    int kernel_width = 0;
    std::string activation = "silu";
};

struct ArchSpec {
    int time_embed_dim = 8;
    std::vector<ArchLayerSpec> layers;  // empty: dense(32, silu) -> dense(data_dim, identity)
};

struct TrainingSpec {
    std::string optimizer = "adam";
    double lr = 1e-3;
    double momentum = 0.9;
    long steps = 3000;
    int batch = 32;
    std::uint64_t seed = 1234;
    std::string sampling = "support";  // "support" or "uniform"
    std::string lr_schedule = "constant";  // "constant" or "cosine"
    int log_interval = 100;
};

struct AttributionSpec {
    std::string backend = "ekfac";  // kfac | ekfac | dense | projected_ef
    std::string ggn_kind = "model";
    std::string sharing = "expand";
    int samples = 250;
    std::vector<double> damping = {1e-8, 1e-6, 1e-4, 1e-2};
    bool compress = true;
    int d_proj = 256;
    std::uint64_t proj_seed = 7;
};

struct EvaluationSpec {
    int subsets = 20;  // M
    int seeds = 3;     // K
    double fraction = 0.5;
    int queries = 16;  // Q
    std::vector<double> percents = {10.0};
    int measure_samples = 250;
    std::string measurement = "simple_loss";
    int measurement_t = 1;
    double subset_step_factor = 0.5;  // retrained subset models train this fraction of steps
    std::vector<int> proxy_timesteps = {1, 25, 50, 100};
    std::vector<int> target_timesteps = {1, 25, 50, 100};
    int remove_top_queries = 5;
};

struct RunConfig {
    DatasetSpec dataset;
    ScheduleSpec schedule;
    ArchSpec arch;
    TrainingSpec training;
    AttributionSpec attribution;
    EvaluationSpec evaluation;
};

// Parses and fully validates; throws ConfigError listing every violation with
// a path into the document. Unknown keys are rejected.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);

// Canonical serialization (sorted keys); parse(serialize(cfg)) == cfg.
std::string serialize_config(const RunConfig& cfg);

std::uint64_t config_hash(const RunConfig& cfg);

// Derived objects.
ArchConfig arch_from_config(const RunConfig& cfg);
OptimizerConfig optimizer_from_config(const RunConfig& cfg);

bool operator==(const RunConfig& a, const RunConfig& b);

}  // namespace dinf
