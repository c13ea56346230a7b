#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "uskel/encoder.hpp"
#include "uskel/gradcheck.hpp"
#include "uskel/infer.hpp"
#include "uskel/labelspace.hpp"
#include "uskel/loss.hpp"
#include "uskel/motiongen.hpp"
#include "uskel/skeleton.hpp"
#include "uskel/textbank.hpp"

namespace uskel::harness {

// Configuration problems exit with status 2, runtime failures with 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OptimConfig {
    double lr_peak = 1e-4;
    double warmup_epochs = 16;
    size_t total_epochs = 400;
    size_t batch_size = 256;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct RunConfig {
    std::string registry_path;
    std::string adjacency_path; // optional; built-in table otherwise
    std::string bank_path;
    std::string cluster_map_path; // optional
    std::string split_path;       // optional; everything trains without it
    std::vector<std::string> corpus_paths;
    skel::Padding padding = skel::Padding::zero;
    enc::EncoderConfig encoder;
    std::vector<std::vector<std::string>> part_groups; // optional override
    loss::LossWeights weights;
    OptimConfig optim;
    uint64_t seed = 1;
    double eval_gamma = 0.0;
    std::string out_dir = "run-out";
    size_t eval_every = 5;
    double early_stop_acc = -1.0; // disabled when negative
};

RunConfig read_run_config(const std::string& path);

// Warmup ramps linearly to the peak, then cosine annealing down to zero.
double lr_schedule(double epoch, const OptimConfig& cfg);

struct PreparedSample {
    std::string sample_id;
    std::string format_id;
    skel::ModalityTriple mods; // resampled to t_max
    std::vector<uint8_t> mask; // [K x M]
    std::vector<int> labels;   // cluster-mapped class ids
};

struct LoadedData {
    skel::FormatRegistry registry;
    skel::UnifiedSpace space;
    skel::Adjacency adjacency;
    text::LabelBank bank; // clustered bank when a cluster map is configured
    std::optional<labels::ClusteredLabelSpace> clusters;
    labels::SplitSpec split;
    std::vector<PreparedSample> samples;
    std::vector<size_t> train_idx; // excludes samples touching unseen classes
    std::vector<size_t> test_idx;
    enc::EncoderConfig encoder; // resolved (d_semantic, part map)
    skel::Padding padding = skel::Padding::zero;
};

LoadedData load_data(const RunConfig& cfg, const std::vector<std::string>* corpus_override = nullptr);

struct TrainResult {
    std::string checkpoint_path;
    std::string best_checkpoint_path;
    std::string metrics_path;
    size_t epochs_run = 0;
    double best_val_acc = -1.0;
    double final_loss = 0.0;
};

// `max_epochs_this_run` caps the epochs one invocation executes (0 = no cap);
// a capped run leaves resumable state behind, like an interrupted run.
TrainResult train(const RunConfig& cfg, bool resume = false, size_t max_epochs_this_run = 0);

// Forward features for the given samples under one or more parameter stores;
// ensemble scoring averages cosine scores downstream.
std::vector<evals::EvalSample> extract_features(const LoadedData& data,
                                                num::ParamStore& store,
                                                const std::vector<size_t>& idx);

struct EvalOptions {
    std::vector<std::string> checkpoints; // >1 means score-level ensemble
    double gamma = -1.0;                  // negative: take cfg.eval_gamma
    std::vector<std::string> corpus_override;
    bool eval_on_train = false;
};

evals::EvalReport evaluate_model(const RunConfig& cfg, const EvalOptions& opts,
                                 std::string* table_out = nullptr,
                                 const text::LabelBank** bank_out = nullptr,
                                 LoadedData* data_out = nullptr);

std::vector<evals::GammaRow> sweep_gamma_model(const RunConfig& cfg, const EvalOptions& opts,
                                               double from, double to, double step);

struct GradCheckConfig {
    size_t d_hidden = 8, layers = 1, heads = 2, frames = 6, k_unified = 5, batch = 4,
           d_semantic = 16, n_seg = 2, n_part = 2;
    uint64_t seed = 7;
    double step = 1e-4, tol = 1e-4;
    std::string fusion = "learnable";
    std::string padding = "zero";
};

GradCheckConfig read_gradcheck_config(const std::string& path);
num::GradCheckReport run_gradcheck(const GradCheckConfig& gc);

} // namespace uskel::harness
