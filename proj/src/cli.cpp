#include "speclora/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "speclora/errors.hpp"
#include "speclora/gradcheck.hpp"
#include "speclora/io.hpp"
#include "speclora/spectral.hpp"
#include "speclora/train.hpp"

namespace speclora::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Name under which generated tasks store their single weight.
constexpr const char* kTaskTensor = "layer.0.q";

struct AnalyzeArgs {
    std::string pre, ft, out, format = "json", match = "*";
};
struct GenTaskArgs {
    std::string spec, out;
};
struct TrainArgs {
    std::string task, adapter, train, out;
    bool timing = false;
};
struct SweepArgs {
    std::string kind, task, adapter, train, out, json_out;
    std::vector<std::string> grid;
    std::size_t seeds = 5;
    std::size_t jobs = 1;
    bool timing = false;
};
struct GradcheckArgs {
    std::uint64_t seed = 0;
    std::size_t cases = 80;
    bool corrupt = false;
};

void echo(std::ostream& out, const std::string& command, const json& config) {
    out << "config " << command << " " << config.dump() << "\n";
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    echo(out, "analyze",
         {{"pre", a.pre}, {"ft", a.ft}, {"out", a.out}, {"format", a.format}, {"match", a.match}});
    const auto pre = io::load_container(a.pre);
    const auto ft = io::load_container(a.ft);
    std::vector<SpectralReport> reports;
    for (const auto& [name, entry] : pre.tensors) {
        if (!io::glob_match(a.match, name)) continue;
        auto it = ft.tensors.find(name);
        if (it == ft.tensors.end()) continue;
        reports.push_back(compare_spectra(entry.data, it->second.data, name));
    }
    if (reports.empty()) {
        throw ConfigError("no tensor present in both containers matches '" + a.match + "'");
    }
    if (a.format == "csv") {
        io::write_text_file(a.out, io::reports_to_csv(reports));
    } else {
        json arr = json::array();
        for (const auto& r : reports) arr.push_back(io::to_json(r));
        io::write_text_file(a.out, arr.dump(2) + "\n");
    }
    for (const auto& r : reports) {
        out << r.matrix_name << ": sigma_1 " << io::format_real(r.sigma_pre.empty() ? 0.0 : r.sigma_pre[0]) << " -> "
            << io::format_real(r.sigma_ft.empty() ? 0.0 : r.sigma_ft[0]) << ", effective rank "
            << io::format_real(r.effective_rank_pre) << " -> " << io::format_real(r.effective_rank_ft) << "\n";
    }
    out << reports.size() << " report(s) written to " << a.out << "\n";
    return kOk;
}

int cmd_gen_task(const GenTaskArgs& a, std::ostream& out) {
    const TaskSpec spec = io::task_spec_from_json(io::read_json_file(a.spec));
    echo(out, "gen-task", {{"spec", io::to_json(spec)}, {"out", a.out}});
    const PlantedTask task = gen_planted_task(spec);
    const fs::path dir = a.out;
    io::WeightContainer base, teacher, data;
    base.add(kTaskTensor, task.w_base);
    teacher.add(kTaskTensor, task.w_teacher);
    const std::string prefix = kTaskTensor;
    data.add(prefix + ".x_train", task.train.x);
    data.add(prefix + ".y_train", task.train.y);
    data.add(prefix + ".x_eval", task.eval.x);
    data.add(prefix + ".y_eval", task.eval.y);
    io::save_container(dir / "base", base);
    io::save_container(dir / "teacher", teacher);
    io::save_container(dir / "data", data);
    io::write_text_file(dir / "task.json", io::to_json(spec).dump(2) + "\n");
    out << "task " << spec.n << "x" << spec.m << " with " << spec.num_samples << " training samples written to "
        << a.out << "\n";
    return kOk;
}

AdapterConfig load_adapter_config(const std::string& path) {
    return path.empty() ? AdapterConfig{} : io::adapter_config_from_json(io::read_json_file(path));
}

TrainConfig load_train_config(const std::string& path) {
    return path.empty() ? TrainConfig{} : io::train_config_from_json(io::read_json_file(path));
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    const AdapterConfig acfg = load_adapter_config(a.adapter);
    const TrainConfig tcfg = load_train_config(a.train);
    echo(out, "train",
         {{"task", a.task}, {"adapter", io::to_json(acfg)}, {"train", io::to_json(tcfg)}, {"out", a.out}});
    const fs::path task_dir = a.task;
    const auto base = io::load_container(task_dir / "base");
    const auto data = io::load_container(task_dir / "data");
    const std::string prefix = kTaskTensor;
    const Dataset train{data.at(prefix + ".x_train"), data.at(prefix + ".y_train")};
    const Dataset eval{data.at(prefix + ".x_eval"), data.at(prefix + ".y_eval")};

    auto [adapter, result] = train_adapter(base.at(kTaskTensor), train, eval, acfg, tcfg);
    if (!a.timing) result.wall_time_s = 0.0;

    const fs::path out_dir = a.out;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    io::WeightContainer ckpt;
    io::store_adapter(ckpt, kTaskTensor, adapter);
    io::save_container(out_dir / "checkpoint", ckpt);
    io::write_text_file(out_dir / "run_result.json", io::to_json(result).dump(2) + "\n");
    io::write_text_file(out_dir / "loss_curve.csv", io::loss_curve_csv(result));
    out << "trainable params " << result.trainable_params << ", loss " << io::format_real(result.initial_train_loss)
        << " -> " << io::format_real(result.final_train_loss) << " (eval " << io::format_real(result.final_eval_loss)
        << ")\n";
    return kOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out) {
    AblationPlan plan;
    plan.kind = parse_ablation_kind(a.kind);
    plan.grid = a.grid;
    plan.seeds = a.seeds;
    plan.jobs = a.jobs;
    plan.task = a.task.empty() ? TaskSpec{} : io::task_spec_from_json(io::read_json_file(a.task));
    plan.adapter = load_adapter_config(a.adapter);
    plan.train = load_train_config(a.train);
    echo(out, "sweep",
         {{"kind", std::string(to_string(plan.kind))},
          {"grid", plan.grid},
          {"seeds", plan.seeds},
          {"jobs", plan.jobs},
          {"task", io::to_json(plan.task)},
          {"adapter", io::to_json(plan.adapter)},
          {"train", io::to_json(plan.train)},
          {"out", a.out}});
    auto rows = run_ablation(plan);
    if (!a.timing) {
        for (auto& row : rows) row.result.wall_time_s = 0.0;
    }
    io::write_text_file(a.out, io::ablation_to_csv(rows));
    if (!a.json_out.empty()) io::write_text_file(a.json_out, io::to_json(rows).dump(2) + "\n");
    for (const auto& row : rows) {
        out << to_string(row.kind) << " " << row.grid_value << " seed " << row.seed << ": train "
            << io::format_real(row.result.final_train_loss) << ", eval " << io::format_real(row.result.final_eval_loss)
            << "\n";
    }
    return kOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
    echo(out, "gradcheck", {{"seed", a.seed}, {"cases", a.cases}, {"corrupt_gradient", a.corrupt}});
    GradcheckOptions opts;
    opts.seed = a.seed;
    opts.cases = a.cases;
    opts.corrupt_gradient = a.corrupt;
    const auto res = run_gradcheck(opts);
    constexpr double kThreshold = 1e-5;
    out << "checked " << res.components << " components over " << res.cases << " cases; max relative error "
        << io::format_real(res.max_rel_error);
    if (!res.worst.empty()) out << " at " << res.worst;
    out << "\n";
    return res.max_rel_error < kThreshold ? kOk : kVerificationFailed;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spectral rescaling low-rank adapters: analysis, training and ablations"};
    app.require_subcommand(1);

    AnalyzeArgs analyze;
    auto* sa = app.add_subcommand("analyze", "Compare singular spectra of matching tensors in two containers");
    sa->add_option("--pre", analyze.pre, "Pre-trained weight container")->required();
    sa->add_option("--ft", analyze.ft, "Fine-tuned weight container")->required();
    sa->add_option("--out", analyze.out, "Report path")->required();
    sa->add_option("--format", analyze.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sa->add_option("--match", analyze.match, "Glob over tensor names");

    GenTaskArgs gen;
    auto* sg = app.add_subcommand("gen-task", "Generate a planted spectral-recovery task");
    sg->add_option("--spec", gen.spec, "Task spec JSON")->required();
    sg->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs train;
    auto* st = app.add_subcommand("train", "Train an adapter on a generated task");
    st->add_option("--task", train.task, "Task directory from gen-task")->required();
    st->add_option("--adapter", train.adapter, "Adapter config JSON");
    st->add_option("--train", train.train, "Train config JSON");
    st->add_option("--out", train.out, "Output directory")->required();
    st->add_flag("--timing", train.timing, "Record wall-clock time in results");

    SweepArgs sweep;
    auto* ss = app.add_subcommand("sweep", "Run an ablation sweep");
    ss->add_option("--kind", sweep.kind, "k, rank or direction")->required()->check(
        CLI::IsMember({"k", "rank", "direction", "k_sweep", "rank_sweep"}));
    ss->add_option("--grid", sweep.grid, "Comma-separated grid values")->required()->delimiter(',');
    ss->add_option("--seeds", sweep.seeds, "Repeats per grid value")->check(CLI::PositiveNumber);
    ss->add_option("--task", sweep.task, "Task spec JSON");
    ss->add_option("--adapter", sweep.adapter, "Adapter config JSON");
    ss->add_option("--train", sweep.train, "Train config JSON");
    ss->add_option("--out", sweep.out, "Results CSV")->required();
    ss->add_option("--json", sweep.json_out, "Optional results JSON");
    ss->add_option("--jobs", sweep.jobs, "Parallel runs")->check(CLI::PositiveNumber);
    ss->add_flag("--timing", sweep.timing, "Record wall-clock time in results");

    GradcheckArgs grad;
    auto* sc = app.add_subcommand("gradcheck", "Verify analytic gradients against finite differences");
    sc->add_option("--seed", grad.seed, "Base seed");
    sc->add_option("--cases", grad.cases, "Number of random instances");
    sc->add_flag("--corrupt-gradient", grad.corrupt, "Test hook: perturb one analytic gradient")->group("");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*sa) return cmd_analyze(analyze, out);
        if (*sg) return cmd_gen_task(gen, out);
        if (*st) return cmd_train(train, out);
        if (*ss) return cmd_sweep(sweep, out);
        if (*sc) {
            if (grad.cases == 0) throw ConfigError("--cases must be positive");
            return cmd_gradcheck(grad, out);
        }
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return kShapeMismatch;
    } catch (const NumericError& e) {
        err << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv{"speclora"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace speclora::cli
