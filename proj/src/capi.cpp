#include "uskel.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <set>
#include <string>

#include "json.hpp"
#include "uskel/harness.hpp"

namespace {

thread_local std::string t_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
uskel_status guarded(Fn&& fn) {
    try {
        t_last_error.clear();
        fn();
        return USKEL_OK;
    } catch (const uskel::harness::ConfigError& e) {
        t_last_error = e.what();
        return USKEL_ERR_CONFIG;
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return USKEL_ERR_RUNTIME;
    } catch (...) {
        t_last_error = "unknown error";
        return USKEL_ERR_RUNTIME;
    }
}

uskel_status config_error(const std::string& msg) {
    t_last_error = msg;
    return USKEL_ERR_CONFIG;
}

} // namespace

struct uskel_model {
    uskel::harness::RunConfig config;
    std::vector<std::string> checkpoints;
};

extern "C" {

const char* uskel_version(void) { return "uskel 1.0.0"; }

const char* uskel_last_error(void) { return t_last_error.c_str(); }

void uskel_string_free(char* s) { std::free(s); }

uskel_status uskel_generate(const char* genspec_path, const char* out_dir, int64_t seed_override) {
    if (!genspec_path || !out_dir) return config_error("uskel_generate: null argument");
    return guarded([&] {
        uskel::gen::GenSpec spec;
        try {
            spec = uskel::gen::read_genspec(genspec_path);
            if (seed_override >= 0) spec.seed = static_cast<uint64_t>(seed_override);
        } catch (const std::exception& e) {
            throw uskel::harness::ConfigError(e.what());
        }
        uskel::skel::FormatRegistry registry;
        for (auto& f : uskel::skel::builtin_formats()) registry.add(std::move(f));
        try {
            spec.validate(registry);
        } catch (const std::exception& e) {
            throw uskel::harness::ConfigError(e.what());
        }
        auto corpus = uskel::gen::generate(spec, registry);
        uskel::gen::write_outputs(corpus, spec, registry, out_dir);
    });
}

uskel_status uskel_synth_bank(const char* labels_path, int32_t dim, uint64_t seed,
                              const int32_t* unseen_ids, size_t n_unseen, const char* out_path) {
    if (!labels_path || !out_path) return config_error("uskel_synth_bank: null argument");
    return guarded([&] {
        nlohmann::json doc;
        {
            std::ifstream in(labels_path);
            if (!in) throw uskel::harness::ConfigError(std::string("cannot open ") + labels_path);
            doc = nlohmann::json::parse(in, nullptr, false);
            if (doc.is_discarded())
                throw uskel::harness::ConfigError(std::string("not valid JSON: ") + labels_path);
        }
        std::vector<std::pair<int, std::string>> names;
        const nlohmann::json& list = doc.contains("labels") ? doc["labels"] : doc.at("classes");
        for (const auto& l : list)
            names.emplace_back(l.at("id").get<int>(), l.at("name").get<std::string>());
        uskel::text::LabelBank bank;
        try {
            bank = uskel::text::synth_bank(names, static_cast<size_t>(dim), seed);
        } catch (const std::exception& e) {
            throw uskel::harness::ConfigError(e.what());
        }
        for (size_t i = 0; i < n_unseen; ++i) {
            int id = unseen_ids[i];
            if (!bank.has(id))
                throw uskel::harness::ConfigError("unseen id " + std::to_string(id) +
                                                  " is not in the bank");
            bank.seen.erase(id);
            bank.unseen.insert(id);
        }
        uskel::text::save_bank(bank, out_path);
    });
}

uskel_status uskel_cluster_labels(const char* bank_path, int32_t k, uint64_t seed,
                                  int32_t max_iter, const char* out_path) {
    if (!bank_path || !out_path) return config_error("uskel_cluster_labels: null argument");
    if (k <= 0 || max_iter <= 0) return config_error("uskel_cluster_labels: k and max_iter must be positive");
    return guarded([&] {
        uskel::text::LabelBank bank;
        uskel::labels::ClusteredLabelSpace space;
        try {
            bank = uskel::text::load_bank(bank_path);
            space = uskel::labels::cluster_bank(bank, static_cast<size_t>(k), seed,
                                                static_cast<size_t>(max_iter));
        } catch (const std::exception& e) {
            throw uskel::harness::ConfigError(e.what());
        }
        uskel::text::LabelBank clustered = uskel::labels::clustered_bank(space, bank);
        uskel::labels::write_cluster_map(out_path, space, clustered);
    });
}

uskel_status uskel_split_corpus(const char* manifest_path, const char* cluster_map_path,
                                double train_frac, uint64_t seed, const char* out_path) {
    if (!manifest_path || !out_path) return config_error("uskel_split_corpus: null argument");
    return guarded([&] {
        std::vector<uskel::labels::SampleRef> samples;
        try {
            samples = uskel::labels::read_sample_manifest(manifest_path);
            if (cluster_map_path && *cluster_map_path) {
                auto space = uskel::labels::read_cluster_map(cluster_map_path, nullptr);
                for (auto& s : samples) {
                    std::set<int> mapped;
                    for (int raw : s.cluster_ids) mapped.insert(space.assignment.at(raw));
                    s.cluster_ids.assign(mapped.begin(), mapped.end());
                }
            }
        } catch (const std::exception& e) {
            throw uskel::harness::ConfigError(e.what());
        }
        uskel::labels::SplitSpec split = uskel::labels::stratified_split(samples, train_frac, seed);
        std::set<std::string> train_ids(split.train_ids.begin(), split.train_ids.end());
        std::map<int, size_t> counts;
        for (const auto& s : samples) {
            int primary = *std::min_element(s.cluster_ids.begin(), s.cluster_ids.end());
            if (!counts.count(primary)) counts[primary] = 0;
            if (train_ids.count(s.sample_id)) ++counts[primary];
        }
        split.strata = uskel::labels::stratify_frequency(counts);
        uskel::labels::write_split(out_path, split);
    });
}

uskel_status uskel_train(const char* config_path, int64_t seed_override, int32_t resume) {
    if (!config_path) return config_error("uskel_train: null argument");
    return guarded([&] {
        uskel::harness::RunConfig cfg = uskel::harness::read_run_config(config_path);
        if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
        uskel::harness::train(cfg, resume != 0);
    });
}

uskel_status uskel_grad_check(const char* config_path, double* out_max_rel_err) {
    if (!config_path || !out_max_rel_err) return config_error("uskel_grad_check: null argument");
    return guarded([&] {
        auto gc = uskel::harness::read_gradcheck_config(config_path);
        *out_max_rel_err = uskel::harness::run_gradcheck(gc).max_rel_err;
    });
}

uskel_status uskel_model_open(const char* config_path, const char* checkpoint_path,
                              uskel_model** out_model) {
    if (!config_path || !checkpoint_path || !out_model)
        return config_error("uskel_model_open: null argument");
    return uskel_model_open_ensemble(config_path, &checkpoint_path, 1, out_model);
}

uskel_status uskel_model_open_ensemble(const char* config_path,
                                       const char* const* checkpoint_paths, size_t n,
                                       uskel_model** out_model) {
    if (!config_path || !checkpoint_paths || n == 0 || !out_model)
        return config_error("uskel_model_open_ensemble: null argument");
    return guarded([&] {
        auto model = std::make_unique<uskel_model>();
        model->config = uskel::harness::read_run_config(config_path);
        for (size_t i = 0; i < n; ++i) {
            std::ifstream probe(checkpoint_paths[i]);
            if (!probe)
                throw uskel::harness::ConfigError(std::string("cannot open checkpoint: ") +
                                                  checkpoint_paths[i]);
            model->checkpoints.emplace_back(checkpoint_paths[i]);
        }
        *out_model = model.release();
    });
}

void uskel_model_close(uskel_model* model) { delete model; }

uskel_status uskel_model_evaluate(uskel_model* model, double gamma, const char* corpus_path,
                                  char** out_report_json) {
    if (!model || !out_report_json) return config_error("uskel_model_evaluate: null argument");
    return guarded([&] {
        uskel::harness::EvalOptions opts;
        opts.checkpoints = model->checkpoints;
        opts.gamma = gamma;
        if (corpus_path && *corpus_path) opts.corpus_override = {corpus_path};
        uskel::evals::EvalReport rep = uskel::harness::evaluate_model(model->config, opts);
        *out_report_json = dup_string(rep.to_json());
    });
}

uskel_status uskel_model_sweep_gamma(uskel_model* model, double from, double to, double step,
                                     char** out_json) {
    if (!model || !out_json) return config_error("uskel_model_sweep_gamma: null argument");
    return guarded([&] {
        uskel::harness::EvalOptions opts;
        opts.checkpoints = model->checkpoints;
        auto rows = uskel::harness::sweep_gamma_model(model->config, opts, from, to, step);
        nlohmann::json doc = nlohmann::json::array();
        for (const auto& r : rows)
            doc.push_back({{"gamma", r.gamma},
                           {"S", r.seen_s},
                           {"U", r.unseen_u},
                           {"H", r.harmonic_h},
                           {"seen_predicted", r.seen_predicted}});
        *out_json = dup_string(doc.dump());
    });
}

} // extern "C"
