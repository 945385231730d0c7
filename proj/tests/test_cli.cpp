#include <doctest.h>

#include <fstream>
#include <sstream>

#include "speclora/adapter.hpp"
#include "speclora/cli.hpp"
#include "speclora/io.hpp"
#include "test_support.hpp"

using namespace speclora;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string file_text(const fs::path& p) { return io::read_text_file(p); }

// Every regular file under `a` has a byte-identical twin under `b`, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b) {
    std::size_t count_a = 0, count_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++count_a;
        const auto twin = b / fs::relative(e.path(), a);
        if (!fs::exists(twin) || file_text(e.path()) != file_text(twin)) return false;
    }
    for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file() ? 1 : 0;
    return count_a == count_b;
}

void write_json(const fs::path& p, const nlohmann::json& j) { io::write_text_file(p, j.dump()); }

const nlohmann::json kSmallSpec = {{"n", 10}, {"m", 12}, {"k_true", 2}, {"d_true", {2.0, 1.5}},
                                   {"rank_true", 1}, {"num_samples", 48}, {"seed", 5}};

}  // namespace

TEST_CASE("cli analyze") {
    const auto dir = testing_support::temp_dir("cli_analyze");
    io::WeightContainer pre;
    for (int layer = 0; layer < 2; ++layer) {
        for (const char* mod : {"q", "k", "v", "up", "down"}) {
            pre.add("layer." + std::to_string(layer) + "." + mod,
                    testing_support::random_matrix(5, 6, static_cast<std::uint64_t>(layer * 10 + mod[0])));
        }
    }
    io::save_container(dir / "pre", pre);

    SUBCASE("identical containers") {
        const auto r = invoke({"analyze", "--pre", (dir / "pre").string(), "--ft", (dir / "pre").string(), "--out",
                               (dir / "rep.json").string()});
        REQUIRE(r.code == 0);
        CHECK(r.out.rfind("config analyze {", 0) == 0);
        const auto j = io::read_json_file(dir / "rep.json");
        CHECK(j.size() == 10);
        for (const auto& rep : j) {
            for (const auto& x : rep.at("sigma_ratio")) CHECK(x.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
            for (const auto& x : rep.at("left_alignment")) CHECK(x.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
            for (const auto& x : rep.at("right_alignment")) CHECK(x.get<double>() == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    SUBCASE("match glob") {
        const auto r = invoke({"analyze", "--pre", (dir / "pre").string(), "--ft", (dir / "pre").string(), "--out",
                               (dir / "rep.csv").string(), "--format", "csv", "--match", "layer.0.*"});
        REQUIRE(r.code == 0);
        const auto csv = file_text(dir / "rep.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 5);
        CHECK(csv.find("layer.1.") == std::string::npos);
        CHECK(invoke({"analyze", "--pre", (dir / "pre").string(), "--ft", (dir / "pre").string(), "--out",
                      (dir / "x.json").string(), "--match", "layer.9.*"})
                  .code == 2);
    }
    SUBCASE("planted rescale on one tensor") {
        const auto w = testing_support::compose(testing_support::coordinate_aligned_orthogonal(5, 2, 1),
                                                {4.0, 3.0, 2.0, 1.0, 0.5}, testing_support::random_orthogonal(6, 2));
        io::WeightContainer a, b;
        a.add("layer.0.q", w);
        b.add("layer.0.q", exact_rescale(w, std::vector<double>{2.0, 1.5}));
        io::save_container(dir / "a", a);
        io::save_container(dir / "b", b);
        REQUIRE(invoke({"analyze", "--pre", (dir / "a").string(), "--ft", (dir / "b").string(), "--out",
                        (dir / "p.json").string()})
                    .code == 0);
        const auto ratio = io::read_json_file(dir / "p.json")[0].at("sigma_ratio");
        CHECK(ratio[0].get<double>() == doctest::Approx(2.0).epsilon(1e-9));
        CHECK(ratio[1].get<double>() == doctest::Approx(1.5).epsilon(1e-9));
        CHECK(ratio[2].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("shape mismatch names the tensor") {
        io::WeightContainer other;
        other.add("layer.0.k", DenseMatrix(6, 5));
        io::save_container(dir / "other", other);
        const auto r = invoke({"analyze", "--pre", (dir / "pre").string(), "--ft", (dir / "other").string(), "--out",
                               (dir / "m.json").string()});
        CHECK(r.code == 3);
        CHECK(r.err.find("layer.0.k") != std::string::npos);
    }
    SUBCASE("missing container") {
        CHECK(invoke({"analyze", "--pre", (dir / "nope").string(), "--ft", (dir / "pre").string(), "--out",
                      (dir / "m.json").string()})
                  .code == 2);
    }
    fs::remove_all(dir);
}

TEST_CASE("cli gen-task") {
    const auto dir = testing_support::temp_dir("cli_gen");
    write_json(dir / "spec.json", kSmallSpec);
    REQUIRE(invoke({"gen-task", "--spec", (dir / "spec.json").string(), "--out", (dir / "t1").string()}).code == 0);
    REQUIRE(invoke({"gen-task", "--spec", (dir / "spec.json").string(), "--out", (dir / "t2").string()}).code == 0);
    CHECK(same_tree(dir / "t1", dir / "t2"));

    SUBCASE("analyze sees the planted ratios") {
        REQUIRE(invoke({"analyze", "--pre", (dir / "t1/base").string(), "--ft", (dir / "t1/teacher").string(),
                        "--out", (dir / "r.json").string()})
                    .code == 0);
        const auto ratio = io::read_json_file(dir / "r.json")[0].at("sigma_ratio");
        CHECK(std::abs(ratio[0].get<double>() - 2.0) <= 0.2);
        CHECK(std::abs(ratio[1].get<double>() - 1.5) <= 0.15);
    }
    SUBCASE("no planted change") {
        auto spec = kSmallSpec;
        spec["k_true"] = 0;
        spec["d_true"] = nlohmann::json::array();
        spec["rank_true"] = 0;
        write_json(dir / "flat.json", spec);
        REQUIRE(invoke({"gen-task", "--spec", (dir / "flat.json").string(), "--out", (dir / "t3").string()}).code == 0);
        CHECK(file_text(dir / "t3/base/layer.0.q.splw") == file_text(dir / "t3/teacher/layer.0.q.splw"));
    }
    SUBCASE("invalid spec") {
        auto spec = kSmallSpec;
        spec["d_true"] = {2.0};
        write_json(dir / "bad.json", spec);
        CHECK(invoke({"gen-task", "--spec", (dir / "bad.json").string(), "--out", (dir / "t4").string()}).code == 2);
        write_json(dir / "bad2.json", {{"n", 4}, {"colour", "red"}});
        CHECK(invoke({"gen-task", "--spec", (dir / "bad2.json").string(), "--out", (dir / "t4").string()}).code == 2);
    }
    fs::remove_all(dir);
}

TEST_CASE("cli train and sweep") {
    const auto dir = testing_support::temp_dir("cli_train");
    write_json(dir / "spec.json", kSmallSpec);
    write_json(dir / "adapter.json", {{"rank", 2}, {"alpha", 4.0}, {"k", 2}, {"dropout_p", 0.05}});
    write_json(dir / "train.json", {{"epochs", 4}, {"batch_size", 8}, {"learning_rate", 0.01}});
    REQUIRE(invoke({"gen-task", "--spec", (dir / "spec.json").string(), "--out", (dir / "task").string()}).code == 0);

    SUBCASE("zero epochs leaves the adapter at init") {
        write_json(dir / "zero.json", {{"epochs", 0}});
        const auto r = invoke({"train", "--task", (dir / "task").string(), "--adapter", (dir / "adapter.json").string(),
                               "--train", (dir / "zero.json").string(), "--out", (dir / "run0").string()});
        REQUIRE(r.code == 0);
        const auto res = io::read_json_file(dir / "run0/run_result.json");
        CHECK(res.at("final_train_loss") == res.at("initial_train_loss"));
        const auto ckpt = io::load_container(dir / "run0/checkpoint");
        CHECK(ckpt.at("layer.0.q.lora_d") == DenseMatrix(1, 2, 1.0));
        CHECK(ckpt.at("layer.0.q.lora_b") == DenseMatrix(2, 12));
    }
    SUBCASE("reruns are identical") {
        const std::vector<std::string> base{"train", "--task", (dir / "task").string(), "--adapter",
                                            (dir / "adapter.json").string(), "--train", (dir / "train.json").string(),
                                            "--out"};
        auto a1 = base, a2 = base;
        a1.push_back((dir / "run1").string());
        a2.push_back((dir / "run2").string());
        const auto r1 = invoke(a1);
        REQUIRE(r1.code == 0);
        CHECK(r1.out.rfind("config train {", 0) == 0);
        REQUIRE(invoke(a2).code == 0);
        CHECK(same_tree(dir / "run1", dir / "run2"));
        const auto curve = file_text(dir / "run1/loss_curve.csv");
        CHECK(curve.rfind("epoch,train_loss\n", 0) == 0);
        CHECK(std::count(curve.begin(), curve.end(), '\n') == 5);
    }
    SUBCASE("divergence exits 4") {
        write_json(dir / "wild.json", {{"epochs", 3}, {"learning_rate", 1e200}, {"warmup_ratio", 0.0}});
        CHECK(invoke({"train", "--task", (dir / "task").string(), "--train", (dir / "wild.json").string(), "--adapter",
                      (dir / "adapter.json").string(), "--out", (dir / "wild").string()})
                  .code == 4);
    }
    SUBCASE("adapter larger than the task") {
        write_json(dir / "huge.json", {{"k", 50}});
        CHECK(invoke({"train", "--task", (dir / "task").string(), "--adapter", (dir / "huge.json").string(), "--out",
                      (dir / "huge").string()})
                  .code != 0);
    }
    SUBCASE("sweep over a single value matches train") {
        const auto r = invoke({"sweep", "--kind", "k", "--grid", "2", "--seeds", "1", "--task",
                               (dir / "spec.json").string(), "--adapter", (dir / "adapter.json").string(), "--train",
                               (dir / "train.json").string(), "--out", (dir / "sweep.csv").string(), "--json",
                               (dir / "sweep.json").string()});
        REQUIRE(r.code == 0);
        CHECK(r.out.rfind("config sweep {", 0) == 0);
        REQUIRE(invoke({"train", "--task", (dir / "task").string(), "--adapter", (dir / "adapter.json").string(),
                        "--train", (dir / "train.json").string(), "--out", (dir / "run3").string()})
                    .code == 0);
        const auto row = io::read_json_file(dir / "sweep.json")[0];
        const auto single = io::read_json_file(dir / "run3/run_result.json");
        CHECK(row.at("result").at("final_train_loss") == single.at("final_train_loss"));
        CHECK(row.at("result").at("loss_curve") == single.at("loss_curve"));
    }
    SUBCASE("direction sweep") {
        REQUIRE(invoke({"sweep", "--kind", "direction", "--grid", "top,bottom", "--seeds", "2", "--task",
                        (dir / "spec.json").string(), "--adapter", (dir / "adapter.json").string(), "--train",
                        (dir / "train.json").string(), "--out", (dir / "dir.csv").string(), "--jobs", "2"})
                    .code == 0);
        const auto csv = file_text(dir / "dir.csv");
        CHECK(csv.rfind("kind,grid_value,seed,trainable_params,final_train_loss,final_eval_loss,wall_time_s\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
        CHECK(csv.find("direction,bottom,1,") != std::string::npos);
        CHECK(invoke({"sweep", "--kind", "direction", "--grid", "left", "--seeds", "1", "--out",
                      (dir / "bad.csv").string()})
                  .code == 2);
    }
    fs::remove_all(dir);
}

TEST_CASE("cli gradcheck and usage") {
    const auto ok = invoke({"gradcheck", "--cases", "8"});
    CHECK(ok.code == 0);
    CHECK(ok.out.rfind("config gradcheck {", 0) == 0);
    CHECK(invoke({"gradcheck", "--cases", "8", "--corrupt-gradient"}).code == 5);
    CHECK(invoke({"gradcheck", "--cases", "0"}).code == 2);
    CHECK(invoke({"gradcheck", "--no-such-flag"}).code == 2);
    CHECK(invoke({}).code == 2);
    CHECK(invoke({"frobnicate"}).code == 2);
    CHECK(invoke({"--help"}).code == 0);
}
