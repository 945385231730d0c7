// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "speclora/adapter.hpp"
#include "speclora/cli.hpp"
#include "speclora/errors.hpp"
#include "speclora/gradcheck.hpp"
#include "speclora/io.hpp"
#include "speclora/spectral.hpp"
#include "speclora/train.hpp"
#include "test_support.hpp"

using namespace speclora;
namespace fs = std::filesystem;
namespace ts = testing_support;

namespace {

// Pinned tolerances and budgets.
constexpr double kSvdTol = 1e-10;
constexpr double kSvdBudgetS = 60.0;
constexpr double kIdentityExactTol = 1e-10;
constexpr double kGradTol = 1e-5;
constexpr double kGradBudgetS = 30.0;
constexpr double kMergeTol = 1e-10;
constexpr double kOracleTol = 1e-9;
constexpr double kRatioTol = 5e-2;
constexpr double kAlignFloor = 0.999;
constexpr double kOrderingBudgetS = 300.0;
constexpr int kOrderingMinWins = 4;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& body) {
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail << std::endl;
}

std::string fmt(double x) {
    std::ostringstream s;
    s.precision(3);
    s << std::scientific << x;
    return s.str();
}

double orthonormality_error(const DenseMatrix& q) {
    const auto g = ts::naive_matmul(ts::naive_transpose(q), q);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

bool bitwise_equal(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(double)) == 0;
}

Verdict svd_suite() {
    std::mt19937_64 gen(2024);
    const auto t0 = Clock::now();
    double worst_rec = 0.0, worst_orth = 0.0;
    bool deterministic = true;
    for (int i = 0; i < 200; ++i) {
        const std::size_t n = 1 + gen() % 128, m = 1 + gen() % 128;
        const auto w = ts::random_matrix(n, m, gen());
        const auto f = thin_svd(w);
        const auto g = thin_svd(w);
        deterministic = deterministic && bitwise_equal(f.u, g.u) && bitwise_equal(f.v, g.v) && f.sigma == g.sigma;
        const auto rec = ts::compose(f.u, f.sigma, f.v);
        worst_rec = std::max(worst_rec, ts::frob_diff(rec, w) / ts::frob(w));
        worst_orth = std::max({worst_orth, orthonormality_error(f.u), orthonormality_error(f.v)});
    }
    const double t = seconds_since(t0);
    return {worst_rec <= kSvdTol && worst_orth <= kSvdTol && deterministic && t < kSvdBudgetS,
            "reconstruction " + fmt(worst_rec) + ", orthonormality " + fmt(worst_orth) +
                (deterministic ? ", bitwise reruns" : ", reruns differ") + ", " + fmt(t) + " s"};
}

Verdict identity_at_init() {
    std::mt19937_64 gen(7);
    double worst_exact = 0.0;
    bool hadamard_exact = true;
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = 2 + gen() % 30, m = 2 + gen() % 30;
        const std::size_t p = std::min(n, m);
        const std::size_t ks[] = {0, 1, p / 2, p};
        AdapterConfig cfg;
        cfg.rank = 1 + gen() % std::min<std::size_t>(4, p);
        cfg.alpha = 2.0 * static_cast<double>(cfg.rank);
        cfg.k = ks[i % 4];
        cfg.variant = (i / 4) % 2 == 0 ? Variant::hadamard : Variant::svd_exact;
        cfg.direction = (i / 8) % 2 == 0 ? Direction::top : Direction::bottom;
        cfg.seed = gen();
        const auto w = ts::random_matrix(n, m, gen());
        const auto eff = effective_weight(SpecLoraAdapter::init(w, cfg));
        if (cfg.variant == Variant::hadamard) {
            hadamard_exact = hadamard_exact && bitwise_equal(eff, w);
        } else {
            worst_exact = std::max(worst_exact, ts::frob_diff(eff, w) / ts::frob(w));
        }
    }
    return {hadamard_exact && worst_exact <= kIdentityExactTol,
            std::string(hadamard_exact ? "hadamard bitwise" : "hadamard differs") + ", svd_exact " + fmt(worst_exact)};
}

Verdict gradient_oracle() {
    const auto t0 = Clock::now();
    GradcheckOptions opts;
    opts.seed = 99;
    opts.cases = 80;  // 20 per (variant, direction)
    opts.step = 1e-6;
    const auto res = run_gradcheck(opts);
    const double t = seconds_since(t0);
    return {res.max_rel_error < kGradTol && t < kGradBudgetS,
            std::to_string(res.cases) + " cases, " + std::to_string(res.components) + " components, max rel " +
                fmt(res.max_rel_error) + ", " + fmt(t) + " s"};
}

SpecLoraAdapter random_trained_adapter(std::mt19937_64& gen, Variant variant, Direction direction) {
    const std::size_t n = 3 + gen() % 20, m = 3 + gen() % 20;
    AdapterConfig cfg;
    cfg.rank = 1 + gen() % 3;
    cfg.alpha = 3.0;
    cfg.k = 1 + gen() % std::min(n, m);
    cfg.variant = variant;
    cfg.direction = direction;
    cfg.dropout_p = 0.1;
    cfg.seed = gen();
    auto ad = SpecLoraAdapter::init(ts::random_matrix(n, m, gen()), cfg);
    std::uniform_real_distribution<double> dd(0.5, 3.0);
    for (double& x : ad.params().d) x = dd(gen);
    ad.params().b = ts::random_matrix(cfg.rank, m, gen());
    return ad;
}

Verdict merge_equivalence() {
    std::mt19937_64 gen(11);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto ad = random_trained_adapter(gen, i % 2 ? Variant::svd_exact : Variant::hadamard,
                                               (i / 2) % 2 ? Direction::bottom : Direction::top);
        const auto merged = merge(ad);
        for (int probe = 0; probe < 20; ++probe) {
            const auto x = ts::random_matrix(1 + gen() % 4, ad.cols(), gen());
            const auto y = forward(ad, x, Mode::eval);
            const auto y_ref = ts::naive_matmul(x, ts::naive_transpose(merged));
            worst = std::max(worst, ts::frob_diff(y, y_ref) / std::max(ts::frob(y_ref), 1e-300));
        }
    }
    return {worst <= kMergeTol, "20 instances x 20 probes, max rel " + fmt(worst)};
}

// Ũ equals U with the selected k rows scaled by d over the selected k triplets.
DenseMatrix u_tilde_reconstruction(const SpecLoraAdapter& ad) {
    const auto f = thin_svd(ad.w_frozen());
    const std::size_t k = ad.config().k, p = f.sigma.size();
    const bool top = ad.config().direction == Direction::top;
    const std::size_t row0 = top ? 0 : ad.rows() - k, col0 = top ? 0 : p - k;
    DenseMatrix u = f.u;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) u(row0 + i, col0 + j) *= ad.params().d[i];
    return ts::compose(u, f.sigma, f.v);
}

Verdict exact_faithfulness() {
    std::mt19937_64 gen(13);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        auto ad = random_trained_adapter(gen, Variant::svd_exact, i % 2 ? Direction::bottom : Direction::top);
        ad.params().b = DenseMatrix(ad.config().rank, ad.cols());
        const auto oracle = u_tilde_reconstruction(ad);
        worst = std::max(worst, ts::frob_diff(effective_weight(ad), oracle) / ts::frob(oracle));
    }
    return {worst <= kOracleTol, "20 instances, max rel " + fmt(worst)};
}

// Planted family: top-k left singular vectors on coordinate axes, draws kept when
// the rescaled spectrum stays in index order with the required gaps.
Verdict analyzer_recovery() {
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> dd(0.5, 3.0);
    double worst_ratio = 0.0, worst_align = 1.0;
    int accepted = 0;
    while (accepted < 50) {
        const std::size_t p = 3 + gen() % 7;
        const std::size_t n = p + gen() % 6, m = p + gen() % 6;
        const std::size_t k = 1 + gen() % (p - 1);
        std::vector<double> sigma(p), d(k);
        for (std::size_t i = 0; i < p; ++i) sigma[i] = 1.0 - 0.1 * static_cast<double>(i) - 0.02 * (gen() % 3);
        for (double& x : d) x = dd(gen);
        std::vector<double> post = sigma;
        for (std::size_t i = 0; i < k; ++i) post[i] *= d[i];
        bool ordered = true;
        for (std::size_t i = 0; i + 1 < p; ++i) ordered = ordered && post[i] - post[i + 1] >= 0.1 * post[0];
        if (!ordered) continue;
        ++accepted;
        const auto w = ts::compose(ts::coordinate_aligned_orthogonal(n, k, gen()), sigma, ts::random_orthogonal(m, gen()));
        const auto rep = compare_spectra(w, exact_rescale(w, d), "layer.0.q");
        for (std::size_t i = 0; i < k; ++i) worst_ratio = std::max(worst_ratio, std::abs(rep.sigma_ratio[i] - d[i]));
        for (std::size_t i = k; i < p; ++i) {
            worst_align = std::min({worst_align, rep.left_alignment[i], rep.right_alignment[i]});
        }
    }
    return {worst_ratio <= kRatioTol && worst_align >= kAlignFloor,
            "50 planted instances, max |ratio - d| " + fmt(worst_ratio) + ", min trailing alignment " +
                std::to_string(worst_align)};
}

Verdict ordering() {
    const auto t0 = Clock::now();
    int top_vs_bottom = 0, top_vs_lora = 0;
    std::ostringstream losses;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        TaskSpec spec;  // 32x48, d_true {2, 1.5} on the top two directions, rank-2 perturbation
        spec.seed = seed;
        const auto task = gen_planted_task(spec);
        TrainConfig tcfg;
        tcfg.learning_rate = 0.1;
        tcfg.epochs = 300;
        tcfg.batch_size = 32;
        tcfg.seed = seed;
        auto run = [&](std::size_t k, Direction dir) {
            AdapterConfig a;
            a.rank = 2;
            a.alpha = 4.0;
            a.k = k;
            a.direction = dir;
            a.dropout_p = 0.0;
            a.variant = Variant::svd_exact;
            a.seed = seed;
            return train_adapter(task.w_base, task.train, task.eval, a, tcfg).second.final_eval_loss;
        };
        const double top = run(2, Direction::top), bottom = run(2, Direction::bottom), lora = run(0, Direction::top);
        top_vs_bottom += top <= bottom;
        top_vs_lora += top <= lora;
        losses << " (" << fmt(top) << "," << fmt(bottom) << "," << fmt(lora) << ")";
    }
    const double t = seconds_since(t0);
    return {top_vs_bottom >= kOrderingMinWins && top_vs_lora >= kOrderingMinWins && t < kOrderingBudgetS,
            "top<=bottom " + std::to_string(top_vs_bottom) + "/5, top<=lora " + std::to_string(top_vs_lora) +
                "/5, eval losses (top,bottom,lora):" + losses.str() + ", " + fmt(t) + " s"};
}

Verdict parameter_accounting() {
    bool ok = true;
    std::mt19937_64 gen(19);
    for (int i = 0; i < 30; ++i) {
        const std::size_t n = 1 + gen() % 40, m = 1 + gen() % 40;
        AdapterConfig cfg;
        cfg.rank = 1 + gen() % std::min<std::size_t>(5, std::min(n, m));
        cfg.k = gen() % (std::min(n, m) + 1);
        cfg.variant = i % 2 ? Variant::svd_exact : Variant::hadamard;
        const auto ad = SpecLoraAdapter::init(ts::random_matrix(n, m, gen()), cfg);
        const std::size_t expect = cfg.rank * (n + m) + cfg.k;
        const std::size_t stored = ad.params().d.size() + ad.params().a.size() + ad.params().b.size();
        ok = ok && ad.trainable_count() == expect && stored == expect;
    }
    AdapterConfig big = AdapterConfig::nlu();
    const std::size_t count = trainable_parameter_count(768, 768, big);
    return {ok && count == 3272, "30 random configs agree; 768x768 r=2 k=200 -> " + std::to_string(count)};
}

Verdict io_contract() {
    const auto good = io::encode_tensor(ts::random_matrix(5, 3, 23), io::Dtype::f64);
    std::size_t mutations = 0, detected = 0;
    for (std::size_t pos = 0; pos < io::kHeaderSize; ++pos) {
        for (int v = 0; v < 256; ++v) {
            if (v == good[pos]) continue;
            auto b = good;
            b[pos] = static_cast<std::uint8_t>(v);
            ++mutations;
            try {
                io::decode_tensor(b);
            } catch (const Error&) {
                ++detected;
            }
        }
    }
    std::mt19937_64 gen(29);
    bool round_trip = true;
    for (int i = 0; i < 30; ++i) {
        const auto m = ts::random_matrix(gen() % 70, gen() % 70, gen());
        round_trip = round_trip && bitwise_equal(io::decode_tensor(io::encode_tensor(m, io::Dtype::f64)), m);
    }
    round_trip = round_trip && bitwise_equal(io::decode_tensor(io::encode_tensor(ts::random_matrix(1, 4096, 1),
                                                                                 io::Dtype::f64)),
                                             ts::random_matrix(1, 4096, 1));
    return {detected == mutations && round_trip,
            std::to_string(detected) + "/" + std::to_string(mutations) + " header mutations rejected, round trips " +
                (round_trip ? "bitwise" : "differ")};
}

bool same_tree(const fs::path& a, const fs::path& b) {
    std::size_t na = 0, nb = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++na;
        const auto twin = b / fs::relative(e.path(), a);
        if (!fs::exists(twin) || io::read_text_file(e.path()) != io::read_text_file(twin)) return false;
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) nb += e.is_regular_file() ? 1 : 0;
    return na == nb;
}

Verdict cli_determinism() {
    const auto dir = ts::temp_dir("acceptance_cli");
    io::write_text_file(dir / "spec.json", R"({"n": 16, "m": 20, "num_samples": 64, "seed": 3})");
    io::write_text_file(dir / "adapter.json", R"({"rank": 2, "alpha": 4, "k": 2, "dropout_p": 0.05})");
    io::write_text_file(dir / "train.json", R"({"epochs": 5, "batch_size": 16, "learning_rate": 0.01})");
    std::ostringstream sink;
    auto call = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
    const auto s = [&](const char* rel) { return (dir / rel).string(); };
    int codes = 0;
    codes |= call({"gen-task", "--spec", s("spec.json"), "--out", s("task")});
    for (const char* out : {"run_a", "run_b"}) {
        codes |= call({"train", "--task", s("task"), "--adapter", s("adapter.json"), "--train", s("train.json"),
                       "--out", (dir / out).string()});
    }
    for (const char* out : {"sweep_a", "sweep_b"}) {
        fs::create_directories(dir / out);
        codes |= call({"sweep", "--kind", "rank", "--grid", "1,2", "--seeds", "2", "--jobs", "2", "--task",
                       s("spec.json"), "--adapter", s("adapter.json"), "--train", s("train.json"), "--out",
                       (dir / out / "results.csv").string(), "--json", (dir / out / "results.json").string()});
    }
    const bool train_same = codes == 0 && same_tree(dir / "run_a", dir / "run_b");
    const bool sweep_same = codes == 0 && same_tree(dir / "sweep_a", dir / "sweep_b");
    fs::remove_all(dir);
    return {codes == 0 && train_same && sweep_same,
            std::string("exit codes ") + (codes == 0 ? "0" : "nonzero") + ", train results " +
                (train_same ? "identical" : "differ") + ", sweep results " + (sweep_same ? "identical" : "differ")};
}

}  // namespace

int main() {
    report(1, "SVD suite", svd_suite);
    report(2, "identity at init", identity_at_init);
    report(3, "gradient oracle", gradient_oracle);
    report(4, "merge equivalence", merge_equivalence);
    report(5, "exact-variant faithfulness", exact_faithfulness);
    report(6, "spectral analyzer recovery", analyzer_recovery);
    report(7, "planted-recovery ordering", ordering);
    report(8, "parameter accounting", parameter_accounting);
    report(9, "IO byte contract", io_contract);
    report(10, "run determinism", cli_determinism);
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
