#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>
#include <vector>

#include "speclora/errors.hpp"
#include "speclora/io.hpp"

namespace speclora::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Parses JSON text, rejecting duplicate keys inside any object.
json parse_strict(const std::string& text, const std::string& origin) {
    std::vector<std::set<std::string>> seen;
    std::string duplicate;
    auto cb = [&](int, json::parse_event_t event, json& parsed) {
        switch (event) {
            case json::parse_event_t::object_start: seen.emplace_back(); break;
            case json::parse_event_t::object_end:
                if (!seen.empty()) seen.pop_back();
                break;
            case json::parse_event_t::key:
                if (!seen.empty() && !seen.back().insert(parsed.get<std::string>()).second && duplicate.empty()) {
                    duplicate = parsed.get<std::string>();
                }
                break;
            default: break;
        }
        return true;
    };
    json j;
    try {
        j = json::parse(text, cb);
    } catch (const json::parse_error& e) {
        throw FormatError(origin + ": " + e.what(), e.byte);
    }
    if (!duplicate.empty()) {
        throw FormatError(origin + ": duplicate name '" + duplicate + "'", 0);
    }
    return j;
}

template <typename T>
T field(const json& j, const char* key, const char* ctx) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string(ctx) + ": field '" + key + "': " + e.what(), 0);
    }
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const char* ctx) {
    if (!j.is_object()) throw ConfigError(std::string(ctx) + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError(std::string(ctx) + ": unknown field '" + key + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst, const char* ctx) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string(ctx) + ": field '" + key + "': " + e.what());
    }
}

// Accepts non-negative integers only.
void read_count(const json& j, const char* key, std::size_t& dst, const char* ctx) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
        throw ConfigError(std::string(ctx) + ": field '" + key + "' must be a non-negative integer");
    }
    dst = v.get<std::size_t>();
}

void read_seed(const json& j, const char* key, std::uint64_t& dst, const char* ctx) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
        throw ConfigError(std::string(ctx) + ": field '" + key + "' must be a non-negative integer");
    }
    dst = v.get<std::uint64_t>();
}

json real_or_text(double x) {
    if (std::isfinite(x)) return x;
    return format_real(x);
}

json reals(std::span<const double> xs) {
    json arr = json::array();
    for (double x : xs) arr.push_back(real_or_text(x));
    return arr;
}

}  // namespace

// ---------------------------------------------------------------------------
// Container

void WeightContainer::add(const std::string& name, DenseMatrix data, Dtype dtype) {
    if (!valid_tensor_name(name)) {
        throw FormatError("tensor name '" + name + "' does not match layer.<index>.<q|k|v|up|down>[.<suffix>]", 0);
    }
    if (!tensors.emplace(name, TensorEntry{std::move(data), dtype}).second) {
        throw ConfigError("duplicate tensor name '" + name + "'");
    }
}

const DenseMatrix& WeightContainer::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("container has no tensor '" + name + "'");
    return it->second.data;
}

namespace {

json adapter_entry_json(const AdapterEntry& e) {
    return {{"name", e.name},
            {"variant", std::string(to_string(e.config.variant))},
            {"direction", std::string(to_string(e.config.direction))},
            {"n", e.n},
            {"m", e.m},
            {"r", e.config.rank},
            {"k", e.config.k},
            {"alpha", e.config.alpha},
            {"dropout_p", e.config.dropout_p},
            {"seed", e.config.seed}};
}

AdapterEntry adapter_entry_from_json(const json& j, const std::string& key) {
    const std::string ctx = "adapter '" + key + "'";
    AdapterEntry e;
    e.name = field<std::string>(j, "name", ctx.c_str());
    if (e.name != key) throw FormatError(ctx + ": name field '" + e.name + "' disagrees with key", 0);
    e.config.variant = parse_variant(field<std::string>(j, "variant", ctx.c_str()));
    e.config.direction = parse_direction(field<std::string>(j, "direction", ctx.c_str()));
    e.n = field<std::size_t>(j, "n", ctx.c_str());
    e.m = field<std::size_t>(j, "m", ctx.c_str());
    e.config.rank = field<std::size_t>(j, "r", ctx.c_str());
    e.config.k = field<std::size_t>(j, "k", ctx.c_str());
    e.config.alpha = field<double>(j, "alpha", ctx.c_str());
    e.config.dropout_p = field<double>(j, "dropout_p", ctx.c_str());
    e.config.seed = field<std::uint64_t>(j, "seed", ctx.c_str());
    return e;
}

}  // namespace

WeightContainer load_container(const fs::path& dir) {
    const fs::path manifest_path = dir / kManifestName;
    const json manifest = parse_strict(read_text_file(manifest_path), manifest_path.string());
    if (!manifest.is_object()) throw FormatError(manifest_path.string() + ": manifest must be an object", 0);

    WeightContainer out;
    if (manifest.contains("tensors")) {
        const auto& tensors = manifest.at("tensors");
        if (!tensors.is_object()) throw FormatError(manifest_path.string() + ": 'tensors' must be an object", 0);
        for (const auto& [name, entry] : tensors.items()) {
            const std::string ctx = "tensor '" + name + "'";
            if (!valid_tensor_name(name)) {
                throw FormatError(ctx + ": name does not match layer.<index>.<q|k|v|up|down>[.<suffix>]", 0);
            }
            const auto file = field<std::string>(entry, "file", ctx.c_str());
            const Dtype dtype = parse_dtype(field<std::string>(entry, "dtype", ctx.c_str()));
            const auto rows = field<std::size_t>(entry, "rows", ctx.c_str());
            const auto cols = field<std::size_t>(entry, "cols", ctx.c_str());
            const fs::path path = dir / file;
            std::error_code ec;
            if (!fs::is_regular_file(path, ec)) {
                throw IoError(ctx + ": missing file " + path.string());
            }
            Dtype actual = Dtype::f64;
            DenseMatrix data;
            try {
                data = read_tensor(path, &actual);
            } catch (const FormatError& e) {
                throw FormatError(ctx + ": " + e.what(), e.offset());
            } catch (const LengthError& e) {
                throw LengthError(ctx + ": " + e.what(), e.expected(), e.actual());
            } catch (const DataError& e) {
                throw DataError(ctx + ": " + e.what(), e.index());
            }
            if (actual != dtype) {
                throw FormatError(ctx + ": manifest dtype " + std::string(to_string(dtype)) + " but file holds " +
                                      std::string(to_string(actual)),
                                  8);
            }
            if (data.rows() != rows || data.cols() != cols) {
                throw DimensionError(ctx + ": manifest shape " + std::to_string(rows) + "x" + std::to_string(cols) +
                                     " but file holds " + std::to_string(data.rows()) + "x" +
                                     std::to_string(data.cols()));
            }
            out.tensors.emplace(name, TensorEntry{std::move(data), dtype});
        }
    }
    if (manifest.contains("adapters")) {
        const auto& adapters = manifest.at("adapters");
        if (!adapters.is_object()) throw FormatError(manifest_path.string() + ": 'adapters' must be an object", 0);
        for (const auto& [name, entry] : adapters.items()) {
            out.adapters.emplace(name, adapter_entry_from_json(entry, name));
        }
    }
    return out;
}

void save_container(const fs::path& dir, const WeightContainer& container) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    json tensors = json::object();
    for (const auto& [name, entry] : container.tensors) {
        if (!valid_tensor_name(name)) {
            throw FormatError("tensor name '" + name + "' does not match the naming grammar", 0);
        }
        const std::string file = name + ".splw";
        write_tensor(dir / file, entry.data, entry.dtype);
        tensors[name] = {{"file", file},
                         {"dtype", std::string(to_string(entry.dtype))},
                         {"rows", entry.data.rows()},
                         {"cols", entry.data.cols()}};
    }
    json manifest = {{"tensors", tensors}};
    if (!container.adapters.empty()) {
        json adapters = json::object();
        for (const auto& [name, entry] : container.adapters) adapters[name] = adapter_entry_json(entry);
        manifest["adapters"] = adapters;
    }
    write_text_file(dir / kManifestName, manifest.dump(2) + "\n");
}

void store_adapter(WeightContainer& container, const std::string& name, const SpecLoraAdapter& adapter) {
    const auto& cfg = adapter.config();
    const auto& p = adapter.params();
    container.add(name + ".lora_d", DenseMatrix(1, p.d.size(), p.d));
    container.add(name + ".lora_a", p.a);
    container.add(name + ".lora_b", p.b);
    if (cfg.variant == Variant::svd_exact) container.add(name + ".spec_m", adapter.m_cached());
    container.adapters[name] = AdapterEntry{name, cfg, adapter.rows(), adapter.cols()};
}

SpecLoraAdapter load_adapter(const WeightContainer& container, const std::string& name, DenseMatrix w_frozen) {
    auto it = container.adapters.find(name);
    if (it == container.adapters.end()) throw ConfigError("container has no adapter '" + name + "'");
    const AdapterEntry& entry = it->second;
    if (entry.n != w_frozen.rows() || entry.m != w_frozen.cols()) {
        throw DimensionError("adapter '" + name + "' was trained on " + std::to_string(entry.n) + "x" +
                             std::to_string(entry.m) + " weights");
    }
    AdapterParams params;
    const DenseMatrix& d = container.at(name + ".lora_d");
    if (d.rows() != 1) throw DimensionError("adapter '" + name + "': lora_d must be a single row");
    params.d = d.data();
    params.a = container.at(name + ".lora_a");
    params.b = container.at(name + ".lora_b");
    std::optional<DenseMatrix> m_cached;
    if (entry.config.variant == Variant::svd_exact) {
        auto mt = container.tensors.find(name + ".spec_m");
        if (mt != container.tensors.end()) m_cached = mt->second.data;
    }
    return SpecLoraAdapter::restore(std::move(w_frozen), entry.config, std::move(params), std::move(m_cached));
}

// ---------------------------------------------------------------------------
// Configs

json to_json(const AdapterConfig& cfg) {
    return {{"rank", cfg.rank},
            {"alpha", cfg.alpha},
            {"k", cfg.k},
            {"dropout_p", cfg.dropout_p},
            {"variant", std::string(to_string(cfg.variant))},
            {"direction", std::string(to_string(cfg.direction))},
            {"seed", cfg.seed}};
}

json to_json(const TrainConfig& cfg) {
    return {{"learning_rate", cfg.learning_rate},
            {"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"warmup_ratio", cfg.warmup_ratio},
            {"weight_decay", cfg.weight_decay},
            {"betas", {cfg.betas.first, cfg.betas.second}},
            {"eps", cfg.eps},
            {"seed", cfg.seed}};
}

json to_json(const TaskSpec& spec) {
    return {{"n", spec.n},
            {"m", spec.m},
            {"k_true", spec.k_true},
            {"d_true", spec.d_true},
            {"rank_true", spec.rank_true},
            {"noise_sigma", spec.noise_sigma},
            {"num_samples", spec.num_samples},
            {"seed", spec.seed}};
}

AdapterConfig adapter_config_from_json(const json& j) {
    constexpr const char* ctx = "adapter config";
    reject_unknown_keys(j, {"rank", "alpha", "k", "dropout_p", "variant", "direction", "seed"}, ctx);
    AdapterConfig cfg;
    read_count(j, "rank", cfg.rank, ctx);
    read_opt(j, "alpha", cfg.alpha, ctx);
    read_count(j, "k", cfg.k, ctx);
    read_opt(j, "dropout_p", cfg.dropout_p, ctx);
    std::string s;
    if (j.contains("variant")) {
        read_opt(j, "variant", s, ctx);
        cfg.variant = parse_variant(s);
    }
    if (j.contains("direction")) {
        read_opt(j, "direction", s, ctx);
        cfg.direction = parse_direction(s);
    }
    read_seed(j, "seed", cfg.seed, ctx);
    return cfg;
}

TrainConfig train_config_from_json(const json& j) {
    constexpr const char* ctx = "train config";
    reject_unknown_keys(
        j, {"learning_rate", "epochs", "batch_size", "warmup_ratio", "weight_decay", "betas", "eps", "seed"}, ctx);
    TrainConfig cfg;
    read_opt(j, "learning_rate", cfg.learning_rate, ctx);
    read_count(j, "epochs", cfg.epochs, ctx);
    read_count(j, "batch_size", cfg.batch_size, ctx);
    read_opt(j, "warmup_ratio", cfg.warmup_ratio, ctx);
    read_opt(j, "weight_decay", cfg.weight_decay, ctx);
    if (j.contains("betas")) {
        std::vector<double> b;
        read_opt(j, "betas", b, ctx);
        if (b.size() != 2) throw ConfigError("train config: betas must have two entries");
        cfg.betas = {b[0], b[1]};
    }
    read_opt(j, "eps", cfg.eps, ctx);
    read_seed(j, "seed", cfg.seed, ctx);
    cfg.validate();
    return cfg;
}

TaskSpec task_spec_from_json(const json& j) {
    constexpr const char* ctx = "task spec";
    reject_unknown_keys(j, {"n", "m", "k_true", "d_true", "rank_true", "noise_sigma", "num_samples", "seed"}, ctx);
    TaskSpec spec;
    read_count(j, "n", spec.n, ctx);
    read_count(j, "m", spec.m, ctx);
    read_count(j, "k_true", spec.k_true, ctx);
    read_opt(j, "d_true", spec.d_true, ctx);
    read_count(j, "rank_true", spec.rank_true, ctx);
    read_opt(j, "noise_sigma", spec.noise_sigma, ctx);
    read_count(j, "num_samples", spec.num_samples, ctx);
    read_seed(j, "seed", spec.seed, ctx);
    spec.validate();
    return spec;
}

json read_json_file(const fs::path& path) { return parse_strict(read_text_file(path), path.string()); }

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing: " + std::strerror(errno));
    out << text;
    if (!out) throw IoError("write failed for " + path.string() + ": " + std::strerror(errno));
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Reports

std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

json to_json(const SpectralReport& r) {
    return {{"matrix_name", r.matrix_name},
            {"sigma_pre", reals(r.sigma_pre)},
            {"sigma_ft", reals(r.sigma_ft)},
            {"sigma_ratio", reals(r.sigma_ratio)},
            {"left_alignment", reals(r.left_alignment)},
            {"right_alignment", reals(r.right_alignment)},
            {"effective_rank_pre", r.effective_rank_pre},
            {"effective_rank_ft", r.effective_rank_ft},
            {"spectral_entropy_pre", r.spectral_entropy_pre},
            {"spectral_entropy_ft", r.spectral_entropy_ft},
            {"degenerate_indices", r.degenerate_indices}};
}

std::string reports_to_csv(std::span<const SpectralReport> reports) {
    std::string out = "matrix_name,index,sigma_pre,sigma_ft,ratio,left_align,right_align\n";
    for (const auto& r : reports) {
        for (std::size_t i = 0; i < r.sigma_pre.size(); ++i) {
            out += r.matrix_name + "," + std::to_string(i) + "," + format_real(r.sigma_pre[i]) + "," +
                   format_real(r.sigma_ft[i]) + "," + format_real(r.sigma_ratio[i]) + "," +
                   format_real(r.left_alignment[i]) + "," + format_real(r.right_alignment[i]) + "\n";
        }
    }
    return out;
}

json to_json(const RunResult& r) {
    const auto& e = r.config_echo;
    return {{"initial_train_loss", real_or_text(r.initial_train_loss)},
            {"final_train_loss", real_or_text(r.final_train_loss)},
            {"final_eval_loss", real_or_text(r.final_eval_loss)},
            {"loss_curve", reals(r.loss_curve)},
            {"trainable_params", r.trainable_params},
            {"wall_time_s", r.wall_time_s},
            {"config_echo",
             {{"adapter", to_json(e.adapter)},
              {"train", to_json(e.train)},
              {"n", e.n},
              {"m", e.m},
              {"num_train", e.num_train},
              {"num_eval", e.num_eval}}}};
}

std::string loss_curve_csv(const RunResult& r) {
    std::string out = "epoch,train_loss\n";
    for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
        out += std::to_string(i + 1) + "," + format_real(r.loss_curve[i]) + "\n";
    }
    return out;
}

json to_json(std::span<const AblationRow> rows) {
    json arr = json::array();
    for (const auto& row : rows) {
        arr.push_back({{"kind", std::string(to_string(row.kind))},
                       {"grid_value", row.grid_value},
                       {"seed", row.seed},
                       {"trainable_params", row.result.trainable_params},
                       {"final_train_loss", real_or_text(row.result.final_train_loss)},
                       {"final_eval_loss", real_or_text(row.result.final_eval_loss)},
                       {"wall_time_s", row.result.wall_time_s},
                       {"result", to_json(row.result)}});
    }
    return arr;
}

std::string ablation_to_csv(std::span<const AblationRow> rows) {
    std::string out = "kind,grid_value,seed,trainable_params,final_train_loss,final_eval_loss,wall_time_s\n";
    for (const auto& row : rows) {
        out += std::string(to_string(row.kind)) + "," + row.grid_value + "," + std::to_string(row.seed) + "," +
               std::to_string(row.result.trainable_params) + "," + format_real(row.result.final_train_loss) + "," +
               format_real(row.result.final_eval_loss) + "," + format_real(row.result.wall_time_s) + "\n";
    }
    return out;
}

}  // namespace speclora::io
