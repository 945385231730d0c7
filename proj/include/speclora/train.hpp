#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "speclora/adapter.hpp"
#include "speclora/linalg.hpp"

namespace speclora {

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double warmup_ratio = 0.1;
    double weight_decay = 0.0;
    std::pair<double, double> betas{0.9, 0.999};
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Synthetic regression task whose teacher is the base weight with a planted
/// top-k rescale and a low-rank perturbation.
struct TaskSpec {
    std::size_t n = 32;
    std::size_t m = 48;
    std::size_t k_true = 2;
    std::vector<double> d_true{2.0, 1.5};
    std::size_t rank_true = 2;
    double noise_sigma = 0.0;
    std::size_t num_samples = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

// Rows are samples: x is N × m, y is N × n.
struct Dataset {
    DenseMatrix x;
    DenseMatrix y;

    std::size_t size() const noexcept { return x.rows(); }
};

struct PlantedTask {
    DenseMatrix w_base;
    DenseMatrix w_teacher;
    Dataset train;
    Dataset eval;
};

struct ConfigEcho {
    AdapterConfig adapter;
    TrainConfig train;
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t num_train = 0;
    std::size_t num_eval = 0;
};

struct RunResult {
    double initial_train_loss = 0.0;
    double final_train_loss = 0.0;
    double final_eval_loss = 0.0;
    std::vector<double> loss_curve;  // full train-set MSE after each epoch
    std::size_t trainable_params = 0;
    double wall_time_s = 0.0;
    ConfigEcho config_echo;
};

/// Per-tensor AdamW moments.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

/// One AdamW update in place: decoupled decay p ← p(1 − lr·wd), then the
/// bias-corrected Adam step. t is 1-based. Throws DimensionError on size mismatch.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::size_t t, double lr,
                const TrainConfig& cfg);

/// Linear warmup from 0 to base_lr over ⌊warmup_ratio·total⌋ steps, then linear decay to 0 at total.
double linear_schedule(std::size_t step, std::size_t total, double warmup_ratio, double base_lr);

/// Mean squared error over every output entry.
double mse_loss(const DenseMatrix& prediction, const DenseMatrix& target);

/// Rotates a Gaussian draw so its top-k left singular vectors are the first k
/// coordinate axes, rescales them with the exact op, adds a rank_true
/// perturbation of Frobenius norm 5% of ‖w_base‖, and samples X ~ N(0, 1),
/// Y = X·W*ᵀ + noise. The eval split holds ⌈num_samples / 4⌉ fresh samples.
PlantedTask gen_planted_task(const TaskSpec& spec);

/// Trains (d, A, B) on MSE with AdamW and the linear schedule. An empty eval set
/// falls back to the training set. Throws NumericError carrying the step on divergence.
std::pair<SpecLoraAdapter, RunResult> train_adapter(const DenseMatrix& w_base, const Dataset& train,
                                                    const Dataset& eval, const AdapterConfig& acfg,
                                                    const TrainConfig& tcfg);

enum class AblationKind { k_sweep, rank_sweep, direction };

std::string_view to_string(AblationKind kind) noexcept;
// Accepts "k"/"k_sweep", "rank"/"rank_sweep", "direction".
AblationKind parse_ablation_kind(std::string_view s);

struct AblationRow {
    AblationKind kind = AblationKind::k_sweep;
    std::string grid_value;
    std::uint64_t seed = 0;
    RunResult result;
};

struct AblationPlan {
    AblationKind kind = AblationKind::k_sweep;
    std::vector<std::string> grid;
    std::size_t seeds = 5;
    TaskSpec task;
    AdapterConfig adapter;
    TrainConfig train;
    std::size_t jobs = 1;
};

/// One run per (grid value, repeat). Repeat s offsets the task, adapter and
/// train seeds by s; the reported seed is train.seed + s. Rows are ordered by
/// grid value then repeat regardless of jobs.
std::vector<AblationRow> run_ablation(const AblationPlan& plan);

}  // namespace speclora
