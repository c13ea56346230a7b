#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "uskel.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path dir;
    explicit TempDir(const std::string& name) : dir("capi_" + name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~TempDir() { fs::remove_all(dir); }
    std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

void write_file(const std::string& path, const std::string& body) {
    std::ofstream out(path);
    out << body;
}

} // namespace

TEST_CASE("version and error strings are stable") {
    CHECK(std::strlen(uskel_version()) > 0);
    CHECK(uskel_last_error() != nullptr);
}

TEST_CASE("config errors come back as USKEL_ERR_CONFIG with a message") {
    CHECK(uskel_generate("missing_spec.json", "out", -1) == USKEL_ERR_CONFIG);
    CHECK(std::strlen(uskel_last_error()) > 0);
    CHECK(uskel_train("missing_config.json", -1, 0) == USKEL_ERR_CONFIG);
    CHECK(uskel_generate(nullptr, "out", -1) == USKEL_ERR_CONFIG);
    double err = 0.0;
    CHECK(uskel_grad_check("missing.json", &err) == USKEL_ERR_CONFIG);
    uskel_model* model = nullptr;
    CHECK(uskel_model_open("missing.json", "missing.ckpt", &model) == USKEL_ERR_CONFIG);
}

TEST_CASE("whole pipeline through the C API") {
    TempDir td("pipeline");

    write_file(td / "genspec.json", R"({
        "classes": [
            {"name": "wave arm", "primitive": "wave"},
            {"name": "squat low", "primitive": "squat"},
            {"name": "walk ahead", "primitive": "walk"},
            {"name": "clap hands", "primitive": "clap"}
        ],
        "formats": ["kinect-v1"],
        "samples_per_class": [6, 6, 6, 6],
        "frames": 10,
        "noise_sigma": 0.01,
        "seed": 9
    })");
    REQUIRE(uskel_generate((td / "genspec.json").c_str(), td.dir.string().c_str(), -1) == USKEL_OK);
    CHECK(fs::exists(td.dir / "corpus_kinect-v1.jsonl"));
    CHECK(fs::exists(td.dir / "samples.jsonl"));
    CHECK(fs::exists(td.dir / "registry.json"));

    // bank from the generator manifest, last class unseen
    int32_t unseen[] = {3};
    REQUIRE(uskel_synth_bank((td / "manifest.json").c_str(), 16, 4, unseen, 1,
                             (td / "bank.json").c_str()) == USKEL_OK);

    REQUIRE(uskel_cluster_labels((td / "bank.json").c_str(), 4, 2, 30,
                                 (td / "clusters.json").c_str()) == USKEL_OK);

    REQUIRE(uskel_split_corpus((td / "samples.jsonl").c_str(), (td / "clusters.json").c_str(), 0.7,
                               3, (td / "split.json").c_str()) == USKEL_OK);
    {
        std::ifstream in(td / "split.json");
        auto split = nlohmann::json::parse(in);
        CHECK(split["train_ids"].size() + split["test_ids"].size() == 24);
        CHECK(split.contains("strata"));
    }

    nlohmann::json cfg;
    cfg["registry"] = td / "registry.json";
    cfg["adjacency"] = td / "adjacency.json";
    cfg["bank"] = td / "bank.json";
    cfg["cluster_map"] = td / "clusters.json";
    cfg["split"] = td / "split.json";
    cfg["corpus"] = {td / "corpus_kinect-v1.jsonl"};
    cfg["padding"] = "zero";
    cfg["encoder"] = {{"d_hidden", 8}, {"layers", 1}, {"heads", 2}, {"ffn_mult", 2},
                      {"t_max", 10},  {"n_seg", 2},   {"n_part", 2}};
    cfg["optimizer"] = {{"lr_peak", 1e-3}, {"warmup_epochs", 1}, {"total_epochs", 2},
                        {"batch_size", 8}};
    cfg["seed"] = 77;
    cfg["eval_gamma"] = 0.2;
    cfg["out_dir"] = td / "run";
    write_file(td / "run.json", cfg.dump(2));

    REQUIRE(uskel_train((td / "run.json").c_str(), -1, 0) == USKEL_OK);
    CHECK(fs::exists(td.dir / "run" / "model.ckpt"));
    CHECK(fs::exists(td.dir / "run" / "metrics.jsonl"));

    uskel_model* model = nullptr;
    REQUIRE(uskel_model_open((td / "run.json").c_str(), (td / "run/model.ckpt").c_str(), &model) ==
            USKEL_OK);
    char* report = nullptr;
    REQUIRE(uskel_model_evaluate(model, -1.0, nullptr, &report) == USKEL_OK);
    REQUIRE(report != nullptr);
    {
        auto rep = nlohmann::json::parse(report);
        CHECK(rep.contains("overall"));
        CHECK(rep.contains("gzsl")); // one cluster is unseen
    }
    uskel_string_free(report);

    char* sweep = nullptr;
    REQUIRE(uskel_model_sweep_gamma(model, 0.0, 0.3, 0.1, &sweep) == USKEL_OK);
    {
        auto rows = nlohmann::json::parse(sweep);
        REQUIRE(rows.size() == 4);
        for (size_t i = 1; i < rows.size(); ++i)
            CHECK(rows[i]["seen_predicted"].get<int>() <= rows[i - 1]["seen_predicted"].get<int>());
    }
    uskel_string_free(sweep);
    uskel_model_close(model);

    // gradcheck through the C surface
    write_file(td / "gc.json", R"({"d_hidden":4,"layers":1,"heads":2,"frames":4,
        "k_unified":3,"batch":2,"d_semantic":6,"n_seg":2,"n_part":2,"seed":7,
        "step":1e-4,"tol":1e-4})");
    double err = 1.0;
    REQUIRE(uskel_grad_check((td / "gc.json").c_str(), &err) == USKEL_OK);
    CHECK(err < 1e-4);

    // ensemble open over the same checkpoint twice still evaluates
    std::string run_cfg = td / "run.json";
    std::string ckpt = td / "run/model.ckpt";
    const char* pair[] = {ckpt.c_str(), ckpt.c_str()};
    uskel_model* ensemble = nullptr;
    REQUIRE(uskel_model_open_ensemble(run_cfg.c_str(), pair, 2, &ensemble) == USKEL_OK);
    char* rep2 = nullptr;
    REQUIRE(uskel_model_evaluate(ensemble, 0.0, nullptr, &rep2) == USKEL_OK);
    uskel_string_free(rep2);
    uskel_model_close(ensemble);
}
