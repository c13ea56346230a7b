// Command-line driver for the uskel pipeline. All heavy lifting goes through
// the C API in uskel.h; this file only parses flags and formats output.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uskel.h"

namespace {

int report_status(uskel_status st) {
    if (st != USKEL_OK) std::cerr << "error: " << uskel_last_error() << "\n";
    return static_cast<int>(st);
}

std::string table_from_report(const nlohmann::json& rep) {
    std::ostringstream os;
    auto cell = [&](const nlohmann::json& v) {
        return v.is_null() ? std::string("n/a") : std::to_string(v.get<double>());
    };
    os << "accuracy (top-1, multi-label)\n";
    os << "  overall:     " << rep.value("overall", 0.0) << "  (" << rep.value("correct", 0) << "/"
       << rep.value("total", 0) << ")\n";
    os << "  many-shot:   " << cell(rep.value("many", nlohmann::json())) << "\n";
    os << "  medium-shot: " << cell(rep.value("medium", nlohmann::json())) << "\n";
    os << "  few-shot:    " << cell(rep.value("few", nlohmann::json())) << "\n";
    if (rep.contains("gzsl")) {
        const auto& z = rep["gzsl"];
        os << "  zsl acc:     " << cell(z.value("zsl_acc", nlohmann::json())) << "\n";
        os << "  gzsl S/U/H:  " << cell(z.value("S", nlohmann::json())) << " / "
           << cell(z.value("U", nlohmann::json())) << " / " << cell(z.value("H", nlohmann::json()))
           << "\n";
    }
    return os.str();
}

void write_per_class_csv(const nlohmann::json& rep, const std::string& path) {
    std::ofstream out(path);
    out << "class_id,name,correct,total,accuracy\n";
    if (!rep.contains("per_class")) return;
    for (auto it = rep["per_class"].begin(); it != rep["per_class"].end(); ++it) {
        const auto& row = it.value();
        double total = row.value("total", 0.0);
        out << it.key() << "," << row.value("name", std::string()) << "," << row.value("correct", 0)
            << "," << row.value("total", 0) << "," << (total > 0 ? row.value("correct", 0.0) / total : 0.0)
            << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"uskel: heterogeneous skeleton action recognition with open vocabularies"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic multi-format corpus");
    std::string gen_config, gen_out;
    int64_t gen_seed = -1;
    gen->add_option("--config", gen_config, "generation spec JSON")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "override the spec seed");

    // embed-synth
    auto* synth = app.add_subcommand("embed-synth", "synthesize a deterministic label bank");
    std::string synth_config, synth_labels, synth_out;
    int synth_dim = 64;
    uint64_t synth_seed = 1;
    std::vector<int> synth_unseen;
    synth->add_option("--config", synth_config, "JSON with the same keys as the flags");
    synth->add_option("--labels", synth_labels, "labels JSON (or generator manifest.json)");
    synth->add_option("--dim", synth_dim, "embedding dimension (>= 8)");
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--unseen", synth_unseen, "label ids to flag as unseen")->delimiter(',');
    synth->add_option("--out", synth_out, "output bank JSON");

    // cluster
    auto* cluster = app.add_subcommand("cluster", "balanced k-means over a label bank");
    std::string cluster_config, cluster_bank, cluster_out;
    int cluster_k = 400, cluster_iters = 50;
    uint64_t cluster_seed = 1;
    cluster->add_option("--config", cluster_config, "JSON with the same keys as the flags");
    cluster->add_option("--bank", cluster_bank, "label bank JSON");
    cluster->add_option("--k", cluster_k, "number of clusters");
    cluster->add_option("--seed", cluster_seed, "seed");
    cluster->add_option("--max-iter", cluster_iters, "iteration cap");
    cluster->add_option("--out", cluster_out, "output cluster map JSON");

    // split
    auto* split = app.add_subcommand("split", "stratified train/test split plus strata");
    std::string split_config, split_manifest, split_clusters, split_out;
    double split_frac = 0.70;
    uint64_t split_seed = 1;
    split->add_option("--config", split_config, "JSON with the same keys as the flags");
    split->add_option("--manifest", split_manifest, "sample manifest JSONL");
    split->add_option("--clusters", split_clusters, "cluster map JSON (optional)");
    split->add_option("--frac", split_frac, "train fraction");
    split->add_option("--seed", split_seed, "seed");
    split->add_option("--out", split_out, "output split JSON");

    // train
    auto* train = app.add_subcommand("train", "train a model from a run config");
    std::string train_config;
    int64_t train_seed = -1;
    bool train_resume = false;
    train->add_option("--config", train_config, "run config JSON")->required();
    train->add_option("--seed", train_seed, "override the config seed");
    train->add_flag("--resume", train_resume, "resume from the run's output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_config, eval_corpus, eval_out, eval_csv;
    std::vector<std::string> eval_ckpts;
    double eval_gamma = -1.0;
    eval->add_option("--config", eval_config, "run config JSON")->required();
    eval->add_option("--checkpoint", eval_ckpts, "checkpoint(s); several form a score ensemble")
        ->required();
    eval->add_option("--gamma", eval_gamma, "calibration factor (default: config eval_gamma)");
    eval->add_option("--corpus", eval_corpus, "evaluate this corpus JSONL instead");
    eval->add_option("--out", eval_out, "write the report JSON here");
    eval->add_option("--per-class-csv", eval_csv, "write per-class accuracy CSV here");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the objective");
    std::string gc_config;
    gradcheck->add_option("--config", gc_config, "gradcheck config JSON")->required();

    // sweep-gamma
    auto* sweep = app.add_subcommand("sweep-gamma", "seen/unseen calibration sweep");
    std::string sweep_config;
    std::vector<std::string> sweep_ckpts;
    double sweep_from = 0.0, sweep_to = 0.5, sweep_step = 0.1;
    sweep->add_option("--config", sweep_config, "run config JSON")->required();
    sweep->add_option("--checkpoint", sweep_ckpts, "checkpoint")->required();
    sweep->add_option("--from", sweep_from, "first gamma");
    sweep->add_option("--to", sweep_to, "last gamma");
    sweep->add_option("--step", sweep_step, "gamma increment");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    // flags win over values from an optional --config JSON
    auto fill = [](const std::string& config_path, const CLI::App* cmd, const char* flag,
                   auto& value) {
        if (config_path.empty() || cmd->count(flag) > 0) return true;
        std::ifstream in(config_path);
        if (!in) return false;
        auto doc = nlohmann::json::parse(in, nullptr, false);
        if (doc.is_discarded()) return false;
        std::string key(flag + 2); // strip the leading dashes
        std::replace(key.begin(), key.end(), '-', '_');
        if (doc.contains(key)) value = doc[key].template get<std::decay_t<decltype(value)>>();
        return true;
    };

    if (gen->parsed()) return report_status(uskel_generate(gen_config.c_str(), gen_out.c_str(), gen_seed));

    if (synth->parsed()) {
        bool ok = fill(synth_config, synth, "--labels", synth_labels) &&
                  fill(synth_config, synth, "--dim", synth_dim) &&
                  fill(synth_config, synth, "--seed", synth_seed) &&
                  fill(synth_config, synth, "--unseen", synth_unseen) &&
                  fill(synth_config, synth, "--out", synth_out);
        if (!ok || synth_labels.empty() || synth_out.empty()) {
            std::cerr << "embed-synth: --labels and --out are required (flags or --config)\n";
            return 2;
        }
        std::vector<int32_t> unseen(synth_unseen.begin(), synth_unseen.end());
        return report_status(uskel_synth_bank(synth_labels.c_str(), synth_dim, synth_seed,
                                              unseen.empty() ? nullptr : unseen.data(),
                                              unseen.size(), synth_out.c_str()));
    }

    if (cluster->parsed()) {
        bool ok = fill(cluster_config, cluster, "--bank", cluster_bank) &&
                  fill(cluster_config, cluster, "--k", cluster_k) &&
                  fill(cluster_config, cluster, "--seed", cluster_seed) &&
                  fill(cluster_config, cluster, "--max-iter", cluster_iters) &&
                  fill(cluster_config, cluster, "--out", cluster_out);
        if (!ok || cluster_bank.empty() || cluster_out.empty()) {
            std::cerr << "cluster: --bank and --out are required (flags or --config)\n";
            return 2;
        }
        return report_status(uskel_cluster_labels(cluster_bank.c_str(), cluster_k, cluster_seed,
                                                  cluster_iters, cluster_out.c_str()));
    }

    if (split->parsed()) {
        bool ok = fill(split_config, split, "--manifest", split_manifest) &&
                  fill(split_config, split, "--clusters", split_clusters) &&
                  fill(split_config, split, "--frac", split_frac) &&
                  fill(split_config, split, "--seed", split_seed) &&
                  fill(split_config, split, "--out", split_out);
        if (!ok || split_manifest.empty() || split_out.empty()) {
            std::cerr << "split: --manifest and --out are required (flags or --config)\n";
            return 2;
        }
        return report_status(uskel_split_corpus(split_manifest.c_str(),
                                                split_clusters.empty() ? nullptr : split_clusters.c_str(),
                                                split_frac, split_seed, split_out.c_str()));
    }

    if (train->parsed())
        return report_status(uskel_train(train_config.c_str(), train_seed, train_resume ? 1 : 0));

    if (eval->parsed()) {
        uskel_model* model = nullptr;
        std::vector<const char*> ptrs;
        for (const auto& c : eval_ckpts) ptrs.push_back(c.c_str());
        uskel_status st = uskel_model_open_ensemble(eval_config.c_str(), ptrs.data(), ptrs.size(), &model);
        if (st != USKEL_OK) return report_status(st);
        char* json_out = nullptr;
        st = uskel_model_evaluate(model, eval_gamma,
                                  eval_corpus.empty() ? nullptr : eval_corpus.c_str(), &json_out);
        uskel_model_close(model);
        if (st != USKEL_OK) return report_status(st);
        nlohmann::json rep = nlohmann::json::parse(json_out);
        uskel_string_free(json_out);
        std::cout << rep.dump() << "\n" << table_from_report(rep);
        if (!eval_out.empty()) {
            std::ofstream out(eval_out);
            out << rep.dump() << "\n";
        }
        if (!eval_csv.empty()) write_per_class_csv(rep, eval_csv);
        return 0;
    }

    if (gradcheck->parsed()) {
        double err = 0.0;
        uskel_status st = uskel_grad_check(gc_config.c_str(), &err);
        if (st != USKEL_OK) return report_status(st);
        double tol = 1e-4;
        {
            std::ifstream in(gc_config);
            auto doc = nlohmann::json::parse(in, nullptr, false);
            if (!doc.is_discarded()) tol = doc.value("tol", tol);
        }
        std::printf("max relative gradient error: %.3e (tolerance %.1e)\n", err, tol);
        return err < tol ? 0 : 1;
    }

    if (sweep->parsed()) {
        uskel_model* model = nullptr;
        std::vector<const char*> ptrs;
        for (const auto& c : sweep_ckpts) ptrs.push_back(c.c_str());
        uskel_status st = uskel_model_open_ensemble(sweep_config.c_str(), ptrs.data(), ptrs.size(), &model);
        if (st != USKEL_OK) return report_status(st);
        char* json_out = nullptr;
        st = uskel_model_sweep_gamma(model, sweep_from, sweep_to, sweep_step, &json_out);
        uskel_model_close(model);
        if (st != USKEL_OK) return report_status(st);
        std::cout << json_out << "\n";
        uskel_string_free(json_out);
        return 0;
    }

    std::cerr << app.help() << "\n";
    return 2;
}
