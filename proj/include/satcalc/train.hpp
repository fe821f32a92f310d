#pragma once

#include "satcalc/dataset.hpp"
#include "satcalc/model.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace satcalc {

// Per-task weights of the multi-task L1 objective, indexed by TaskId ordinal.
struct LossWeights {
    std::array<double, kTaskCount> lambda{0.0386, 0.0440, 0.0501, 0.1700, 0.0418, 0.2052, 0.2121, 0.2381};

    double operator[](TaskId t) const { return lambda[ordinal(t)]; }
    double sum() const;
    void validate() const;
};

struct LossResult {
    double total = 0.0;
    std::map<TaskId, double> per_task;
};

// Mean absolute error per task over `mask`, combined with the task weights.
// Only tasks present in `preds` contribute.
LossResult weighted_loss(const std::map<TaskId, Grid2D>& preds, const TargetMaps& targets, const MaskGrid& mask,
                         const LossWeights& w = {});

struct BackwardResult {
    double loss = 0.0;
    std::array<double, kTaskCount> per_task{}; // batch-mean MAE, zero for absent tasks
    GradientSet grads;
};

// Exact gradients of the batch-mean weighted loss. |x|' at 0 is taken as 0.
// Tasks run concurrently when threads > 1; results do not depend on it.
BackwardResult backward(const ModelParams& m, std::span<const Sample> batch, const std::vector<TaskId>& tasks,
                        const LossWeights& w = {}, int threads = 1);

// Loss only, same definition as backward(); backbone features are reused.
double batch_loss(const ModelParams& m, std::span<const Matrix> features, std::span<const Sample> batch,
                  const std::vector<TaskId>& tasks, const LossWeights& w, std::array<double, kTaskCount>* per_task = nullptr);

std::vector<Matrix> backbone_features(const ModelParams& m, std::span<const Sample> batch, int threads = 1);

struct AdamState {
    TrainableParams m;
    TrainableParams v;
    std::int64_t step = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const TrainableParams& p, double lr = 1e-4);
};

void adam_step(AdamState& s, TrainableParams& params, const GradientSet& g);

struct PlateauState {
    double best = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    int patience = 1;
    double factor = 0.5;
    double min_delta = 0.0;
};

// Returns the learning rate to use from now on.
double plateau_step(PlateauState& s, double val_loss, double lr);

struct EarlyStopState {
    double best = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;
    int patience = 3;
};

// True once more than `patience` consecutive epochs failed to improve.
bool early_stop_step(EarlyStopState& s, double val_loss);

struct TrainConfig {
    ModelConfig model;
    int max_epochs = 100;
    int batch_size = 8;
    double lr = 1e-4;
    LossWeights weights;
    AugmentSpec augment;
    std::vector<TaskId> tasks{kAllTasks.begin(), kAllTasks.end()};
    bool early_stopping = true;
    int threads = 1;
    TargetRecipe recipe;

    void validate() const;
    // Model keys plus training keys, one key=value per line.
    std::string to_text() const;
    static TrainConfig from_text(const std::string& text);
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    std::array<double, kTaskCount> train_per_task{};
    std::array<double, kTaskCount> val_per_task{};
};

struct TrainResult {
    ModelParams model;
    std::vector<EpochRecord> history;
    bool stopped_early = false;
    std::uint64_t backbone_hash_before = 0;
    std::uint64_t backbone_hash_after = 0;
};

TrainResult train_loop(const TrainConfig& cfg, std::span<const Sample> train, std::span<const Sample> val,
                       std::uint64_t seed);
TrainResult train_loop(const TrainConfig& cfg, const Manifest& manifest, const std::filesystem::path& manifest_dir,
                       std::uint64_t seed);

// Tab-separated history with a header row.
std::string history_tsv(const std::vector<EpochRecord>& history);

struct GradCheckOptions {
    ModelConfig model;
    std::vector<TaskId> tasks{TaskId::NDVI, TaskId::H};
    int batch = 2;
    double step = 1e-5;
    // Denominator floor for the relative error of near-zero gradients.
    double floor = 1e-6;
    bool zero_inputs = false;
    // Fault injection: scale the analytic gradient of this group.
    std::string corrupt_group;
    double corrupt_factor = 1.0;

    static GradCheckOptions tiny();
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coordinates = 0;
    std::string worst_group;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool all_finite = true;
};

GradCheckReport grad_check(const GradCheckOptions& opt, std::uint64_t seed);

} // namespace satcalc
