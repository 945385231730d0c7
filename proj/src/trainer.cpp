#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>
#include <thread>

#include "speclora/errors.hpp"
#include "speclora/random.hpp"
#include "speclora/train.hpp"

namespace speclora {

double mse_loss(const DenseMatrix& prediction, const DenseMatrix& target) {
    if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
        throw DimensionError("mse_loss: prediction and target shapes differ");
    }
    if (prediction.empty()) return 0.0;
    double s = 0.0;
    auto p = prediction.flat();
    auto t = target.flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - t[i];
        s += r * r;
    }
    return s / static_cast<double>(p.size());
}

namespace {

void check_dataset(const Dataset& ds, const DenseMatrix& w, const char* which) {
    if (ds.x.rows() != ds.y.rows() || ds.x.cols() != w.cols() || ds.y.cols() != w.rows()) {
        throw DimensionError(std::string(which) + " dataset shapes (" + std::to_string(ds.x.rows()) + "x" +
                             std::to_string(ds.x.cols()) + ", " + std::to_string(ds.y.rows()) + "x" +
                             std::to_string(ds.y.cols()) + ") inconsistent with weight " + std::to_string(w.rows()) +
                             "x" + std::to_string(w.cols()));
    }
}

double dataset_loss(const SpecLoraAdapter& adapter, const Dataset& ds) {
    return mse_loss(forward(adapter, ds.x, Mode::eval), ds.y);
}

DenseMatrix gather_rows(const DenseMatrix& src, std::span<const std::size_t> idx) {
    DenseMatrix out(idx.size(), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        auto from = src.row(idx[i]);
        std::copy(from.begin(), from.end(), out.row(i).begin());
    }
    return out;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.below(i)]);
    }
}

}  // namespace

std::pair<SpecLoraAdapter, RunResult> train_adapter(const DenseMatrix& w_base, const Dataset& train,
                                                    const Dataset& eval, const AdapterConfig& acfg,
                                                    const TrainConfig& tcfg) {
    tcfg.validate();
    check_dataset(train, w_base, "train");
    const Dataset& eval_set = eval.size() == 0 ? train : eval;
    check_dataset(eval_set, w_base, "eval");
    if (train.size() == 0) throw ConfigError("train: empty training set");

    const auto started = std::chrono::steady_clock::now();
    auto adapter = SpecLoraAdapter::init(w_base, acfg);
    auto& params = adapter.params();

    RunResult result;
    result.trainable_params = adapter.trainable_count();
    result.config_echo = {acfg, tcfg, w_base.rows(), w_base.cols(), train.size(), eval.size()};
    result.initial_train_loss = dataset_loss(adapter, train);

    const std::size_t n_out = w_base.rows();
    const std::size_t steps_per_epoch = (train.size() + tcfg.batch_size - 1) / tcfg.batch_size;
    const std::size_t total_steps = tcfg.epochs * steps_per_epoch;

    AdamState st_d(params.d.size());
    AdamState st_a(params.a.size());
    AdamState st_b(params.b.size());
    Rng rng(tcfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        shuffle(order, rng);
        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            ++t;
            const std::size_t stop = std::min(order.size(), start + tcfg.batch_size);
            const std::span<const std::size_t> idx(order.data() + start, stop - start);
            const DenseMatrix xb = gather_rows(train.x, idx);
            const DenseMatrix yb = gather_rows(train.y, idx);

            DenseMatrix g_y = forward(adapter, xb, Mode::train, t);
            const double loss = mse_loss(g_y, yb);
            if (!std::isfinite(loss)) {
                throw NumericError("training diverged at step " + std::to_string(t), loss, static_cast<std::int64_t>(t));
            }
            const double coeff = 2.0 / static_cast<double>(idx.size() * n_out);
            auto gf = g_y.flat();
            auto yf = yb.flat();
            for (std::size_t i = 0; i < gf.size(); ++i) gf[i] = coeff * (gf[i] - yf[i]);

            const AdapterGradients grads = backward(adapter, xb, g_y, Mode::train, t);
            const double lr = linear_schedule(t - 1, total_steps, tcfg.warmup_ratio, tcfg.learning_rate);
            adamw_step(params.d, grads.grad_d, st_d, t, lr, tcfg);
            adamw_step(params.a.flat(), grads.grad_a.flat(), st_a, t, lr, tcfg);
            adamw_step(params.b.flat(), grads.grad_b.flat(), st_b, t, lr, tcfg);
        }
        const double epoch_loss = dataset_loss(adapter, train);
        if (!std::isfinite(epoch_loss)) {
            throw NumericError("training diverged by end of epoch " + std::to_string(epoch + 1), epoch_loss,
                               static_cast<std::int64_t>(t));
        }
        result.loss_curve.push_back(epoch_loss);
    }
    result.final_train_loss = result.loss_curve.empty() ? result.initial_train_loss : result.loss_curve.back();
    result.final_eval_loss = dataset_loss(adapter, eval_set);
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return {std::move(adapter), std::move(result)};
}

std::string_view to_string(AblationKind kind) noexcept {
    switch (kind) {
        case AblationKind::k_sweep: return "k_sweep";
        case AblationKind::rank_sweep: return "rank_sweep";
        case AblationKind::direction: return "direction";
    }
    return "?";
}

AblationKind parse_ablation_kind(std::string_view s) {
    if (s == "k" || s == "k_sweep") return AblationKind::k_sweep;
    if (s == "rank" || s == "rank_sweep") return AblationKind::rank_sweep;
    if (s == "direction") return AblationKind::direction;
    throw ConfigError("unknown ablation kind '" + std::string(s) + "' (expected k|rank|direction)");
}

namespace {

std::size_t parse_count(const std::string& s) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size() || s.front() == '-') {
        throw ConfigError("grid value '" + s + "' is not a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

AdapterConfig apply_grid_value(AdapterConfig cfg, AblationKind kind, const std::string& value) {
    switch (kind) {
        case AblationKind::k_sweep: cfg.k = parse_count(value); break;
        case AblationKind::rank_sweep: cfg.rank = parse_count(value); break;
        case AblationKind::direction: cfg.direction = parse_direction(value); break;
    }
    return cfg;
}

}  // namespace

std::vector<AblationRow> run_ablation(const AblationPlan& plan) {
    if (plan.grid.empty()) throw ConfigError("ablation: grid is empty");
    if (plan.seeds == 0) throw ConfigError("ablation: seeds must be positive");
    // Validate every grid value up front so a bad entry fails before any training.
    for (const auto& g : plan.grid) apply_grid_value(plan.adapter, plan.kind, g);

    std::vector<PlantedTask> tasks;
    tasks.reserve(plan.seeds);
    for (std::size_t s = 0; s < plan.seeds; ++s) {
        TaskSpec spec = plan.task;
        spec.seed += s;
        tasks.push_back(gen_planted_task(spec));
    }

    const std::size_t total = plan.grid.size() * plan.seeds;
    std::vector<AblationRow> rows(total);
    std::vector<std::exception_ptr> errors(total);
    auto run_one = [&](std::size_t idx) {
        const std::size_t gi = idx / plan.seeds;
        const std::size_t s = idx % plan.seeds;
        try {
            AdapterConfig acfg = apply_grid_value(plan.adapter, plan.kind, plan.grid[gi]);
            acfg.seed += s;
            TrainConfig tcfg = plan.train;
            tcfg.seed += s;
            const auto& task = tasks[s];
            auto [adapter, result] = train_adapter(task.w_base, task.train, task.eval, acfg, tcfg);
            rows[idx] = AblationRow{plan.kind, plan.grid[gi], tcfg.seed, std::move(result)};
        } catch (...) {
            errors[idx] = std::current_exception();
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(plan.jobs, 1, total);
    if (jobs == 1) {
        for (std::size_t i = 0; i < total; ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t j = 0; j < jobs; ++j) {
            workers.emplace_back([&] {
                for (std::size_t i = next++; i < total; i = next++) run_one(i);
            });
        }
        for (auto& w : workers) w.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return rows;
}

}  // namespace speclora
