#include "uskel/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "json.hpp"
#include "uskel/rng.hpp"

namespace uskel::harness {

using nlohmann::json;
namespace fs = std::filesystem;
using num::Array;
using num::Node;

namespace {

json parse_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open ") + what + ": " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError(std::string(what) + " is not valid JSON: " + path);
    return doc;
}

} // namespace

RunConfig read_run_config(const std::string& path) {
    json doc = parse_file(path, "run config");
    RunConfig cfg;
    try {
        cfg.registry_path = doc.at("registry").get<std::string>();
        cfg.bank_path = doc.at("bank").get<std::string>();
        cfg.corpus_paths = doc.at("corpus").get<std::vector<std::string>>();
        cfg.adjacency_path = doc.value("adjacency", std::string());
        cfg.cluster_map_path = doc.value("cluster_map", std::string());
        cfg.split_path = doc.value("split", std::string());
        cfg.padding = skel::padding_from_string(doc.value("padding", std::string("zero")));
        if (doc.contains("encoder")) {
            const json& e = doc["encoder"];
            cfg.encoder.d_hidden = e.value("d_hidden", cfg.encoder.d_hidden);
            cfg.encoder.layers = e.value("layers", cfg.encoder.layers);
            cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
            cfg.encoder.ffn_mult = e.value("ffn_mult", cfg.encoder.ffn_mult);
            cfg.encoder.t_max = e.value("t_max", cfg.encoder.t_max);
            cfg.encoder.n_seg = e.value("n_seg", cfg.encoder.n_seg);
            cfg.encoder.n_part = e.value("n_part", cfg.encoder.n_part);
            std::string fusion = e.value("fusion", std::string("fixed"));
            if (fusion == "fixed" || fusion == "fixed-equal")
                cfg.encoder.fusion = enc::FusionMode::fixed_equal;
            else if (fusion == "learnable" || fusion == "learnable-softmax")
                cfg.encoder.fusion = enc::FusionMode::learnable_softmax;
            else
                throw ConfigError("unknown fusion mode '" + fusion + "'");
            cfg.encoder.attn_mask_padding = e.value("attn_mask_padding", false);
            cfg.encoder.use_pos_encoding = e.value("use_pos_encoding", true);
            if (e.contains("modalities")) {
                cfg.encoder.mod_joint = cfg.encoder.mod_bone = cfg.encoder.mod_motion = false;
                for (const auto& m : e["modalities"]) {
                    std::string name = m.get<std::string>();
                    if (name == "joint" || name == "J") cfg.encoder.mod_joint = true;
                    else if (name == "bone" || name == "B") cfg.encoder.mod_bone = true;
                    else if (name == "motion" || name == "M") cfg.encoder.mod_motion = true;
                    else throw ConfigError("unknown modality '" + name + "'");
                }
            }
        }
        if (doc.contains("part_groups"))
            cfg.part_groups = doc["part_groups"].get<std::vector<std::vector<std::string>>>();
        if (doc.contains("loss")) {
            const json& l = doc["loss"];
            cfg.weights.tau = l.value("tau", cfg.weights.tau);
            cfg.weights.lambda_ts = l.value("lambda_ts", cfg.weights.lambda_ts);
            cfg.weights.lambda_consis = l.value("lambda_consis", cfg.weights.lambda_consis);
            cfg.weights.lambda_part = l.value("lambda_part", cfg.weights.lambda_part);
            cfg.weights.mask_false_negatives = l.value("mask_false_negatives", false);
        }
        if (doc.contains("optimizer")) {
            const json& o = doc["optimizer"];
            cfg.optim.lr_peak = o.value("lr_peak", cfg.optim.lr_peak);
            cfg.optim.warmup_epochs = o.value("warmup_epochs", cfg.optim.warmup_epochs);
            cfg.optim.total_epochs = o.value("total_epochs", cfg.optim.total_epochs);
            cfg.optim.batch_size = o.value("batch_size", cfg.optim.batch_size);
            cfg.optim.beta1 = o.value("beta1", cfg.optim.beta1);
            cfg.optim.beta2 = o.value("beta2", cfg.optim.beta2);
            cfg.optim.eps = o.value("eps", cfg.optim.eps);
        }
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.eval_gamma = doc.value("eval_gamma", cfg.eval_gamma);
        cfg.out_dir = doc.value("out_dir", cfg.out_dir);
        cfg.eval_every = doc.value("eval_every", cfg.eval_every);
        cfg.early_stop_acc = doc.value("early_stop_acc", cfg.early_stop_acc);
    } catch (const json::exception& e) {
        throw ConfigError("run config " + path + ": " + e.what());
    }
    if (cfg.optim.warmup_epochs >= static_cast<double>(cfg.optim.total_epochs))
        throw ConfigError("warmup_epochs must be smaller than total_epochs");
    if (cfg.optim.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (cfg.optim.batch_size < 2)
        std::cerr << "warning: batch_size < 2 degenerates the contrastive losses\n";
    try {
        cfg.weights.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

double lr_schedule(double epoch, const OptimConfig& cfg) {
    double total = static_cast<double>(cfg.total_epochs);
    if (epoch < 0.0 || epoch > total) throw TrainError("lr_schedule: epoch out of range");
    if (cfg.warmup_epochs > 0.0 && epoch <= cfg.warmup_epochs)
        return cfg.lr_peak * epoch / cfg.warmup_epochs;
    double span = total - cfg.warmup_epochs;
    return cfg.lr_peak * 0.5 * (1.0 + std::cos(M_PI * (epoch - cfg.warmup_epochs) / span));
}

namespace {

std::vector<size_t> resolve_part_map(const RunConfig& cfg, const skel::UnifiedSpace& space) {
    if (cfg.part_groups.empty()) return enc::default_part_map(space, cfg.encoder.n_part);
    if (cfg.part_groups.size() != cfg.encoder.n_part)
        throw ConfigError("part_groups must list exactly n_part groups");
    std::vector<size_t> parts(space.k_unified, SIZE_MAX);
    for (size_t p = 0; p < cfg.part_groups.size(); ++p)
        for (const auto& name : cfg.part_groups[p]) {
            auto it = space.slot_by_name.find(name);
            if (it == space.slot_by_name.end()) continue; // joint absent from this space
            if (parts[it->second] != SIZE_MAX)
                throw ConfigError("part_groups assign joint '" + name + "' twice");
            parts[it->second] = p;
        }
    for (size_t s = 0; s < parts.size(); ++s)
        if (parts[s] == SIZE_MAX)
            throw ConfigError("part_groups leave slot '" + space.slot_joint[s] + "' unassigned");
    return parts;
}

} // namespace

LoadedData load_data(const RunConfig& cfg, const std::vector<std::string>* corpus_override) {
    LoadedData data;
    try {
        data.registry = skel::read_registry(cfg.registry_path);
        data.space = skel::build_unified_space(data.registry.formats);
        data.adjacency = cfg.adjacency_path.empty() ? skel::default_adjacency()
                                                    : skel::read_adjacency(cfg.adjacency_path);
        text::LabelBank raw_bank = text::load_bank(cfg.bank_path);
        if (!cfg.cluster_map_path.empty()) {
            text::LabelBank clustered;
            data.clusters = labels::read_cluster_map(cfg.cluster_map_path, &clustered);
            if (clustered.entries.empty())
                throw ConfigError("cluster map has no embedded clustered bank: " + cfg.cluster_map_path);
            data.bank = std::move(clustered);
        } else {
            data.bank = std::move(raw_bank);
        }
        if (!cfg.split_path.empty()) data.split = labels::read_split(cfg.split_path);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    data.padding = cfg.padding;
    data.encoder = cfg.encoder;
    data.encoder.d_semantic = data.bank.dim;
    if (data.encoder.part_of_slot.empty())
        data.encoder.part_of_slot = resolve_part_map(cfg, data.space);
    data.encoder.validate(data.space.k_unified);

    const std::vector<std::string>& corpus_paths =
        corpus_override ? *corpus_override : cfg.corpus_paths;
    if (corpus_paths.empty()) throw ConfigError("no corpus files configured");

    for (const auto& path : corpus_paths) {
        std::vector<skel::RawSequence> seqs;
        try {
            seqs = skel::read_corpus_jsonl(path, data.registry);
        } catch (const std::exception& e) {
            throw ConfigError(e.what());
        }
        for (size_t i = 0; i < seqs.size(); ++i) {
            const auto& fmt = data.registry.get(seqs[i].format_id);
            skel::UnifiedSequence u = skel::unify(seqs[i], data.space, fmt, cfg.padding, &data.adjacency);
            u = skel::resample_time(u, data.encoder.t_max);
            PreparedSample ps;
            ps.sample_id = std::to_string(i); // line index joins renderings across formats
            ps.format_id = seqs[i].format_id;
            ps.mask = u.joint_mask;
            ps.mods = skel::derive_modalities(u, data.space, fmt);
            ps.labels = seqs[i].label_ids;
            if (data.clusters) {
                std::set<int> mapped;
                for (int raw : ps.labels) {
                    auto it = data.clusters->assignment.find(raw);
                    if (it == data.clusters->assignment.end())
                        throw ConfigError("label id " + std::to_string(raw) +
                                          " is missing from the cluster map");
                    mapped.insert(it->second);
                }
                ps.labels.assign(mapped.begin(), mapped.end());
            }
            for (int label : ps.labels)
                if (!data.bank.has(label))
                    throw ConfigError("label id " + std::to_string(label) +
                                      " is missing from the label bank");
            data.samples.push_back(std::move(ps));
        }
    }

    std::set<std::string> train_ids(data.split.train_ids.begin(), data.split.train_ids.end());
    std::set<std::string> test_ids(data.split.test_ids.begin(), data.split.test_ids.end());
    for (size_t i = 0; i < data.samples.size(); ++i) {
        const auto& s = data.samples[i];
        bool touches_unseen = false;
        for (int label : s.labels)
            if (data.bank.is_unseen(label)) touches_unseen = true;
        if (train_ids.empty() && test_ids.empty()) {
            if (!touches_unseen) data.train_idx.push_back(i);
            continue;
        }
        if (train_ids.count(s.sample_id)) {
            if (!touches_unseen) data.train_idx.push_back(i); // unseen classes never train
        } else if (test_ids.count(s.sample_id)) {
            data.test_idx.push_back(i);
        }
    }
    return data;
}

namespace {

enc::Batch batch_from(const LoadedData& data, const std::vector<size_t>& idx) {
    std::vector<const skel::ModalityTriple*> mods;
    std::vector<const std::vector<uint8_t>*> masks;
    for (size_t i : idx) {
        mods.push_back(&data.samples[i].mods);
        masks.push_back(&data.samples[i].mask);
    }
    return enc::make_batch(mods, masks, data.space.k_unified, data.space.m_unified, data.padding);
}

void append_metrics(std::ofstream& log, size_t epoch, size_t step, double lr,
                    const loss::LossComponents& parts) {
    json rec;
    rec["epoch"] = epoch;
    rec["step"] = step;
    rec["lr"] = lr;
    rec["L_total"] = parts.value(parts.total);
    rec["L_instance"] = parts.value(parts.instance);
    rec["L_ts"] = parts.value(parts.ts);
    rec["L_consis"] = parts.value(parts.consis);
    rec["L_part"] = parts.value(parts.part);
    log << rec.dump() << "\n";
}

void save_opt_state(num::Adam& adam, const std::string& path) {
    std::vector<std::pair<std::string, Array>> items;
    for (const auto& [name, mv] : adam.moments()) {
        items.emplace_back("adam_m." + name, mv.first);
        items.emplace_back("adam_v." + name, mv.second);
    }
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    num::write_checkpoint(items, path);
}

void load_opt_state(num::Adam& adam, const std::string& path) {
    for (auto& [name, arr] : num::read_checkpoint(path)) {
        if (name.rfind("adam_m.", 0) == 0)
            adam.moments()[name.substr(7)].first = std::move(arr);
        else if (name.rfind("adam_v.", 0) == 0)
            adam.moments()[name.substr(7)].second = std::move(arr);
    }
}

double validation_top1(const LoadedData& data, num::ParamStore& store) {
    if (data.test_idx.empty()) return -1.0;
    auto features = extract_features(data, store, data.test_idx);
    evals::EvalReport rep = evals::evaluate(features, data.bank, nullptr, 0.0);
    return rep.overall;
}

} // namespace

std::vector<evals::EvalSample> extract_features(const LoadedData& data, num::ParamStore& store,
                                                const std::vector<size_t>& idx) {
    std::vector<evals::EvalSample> out;
    const size_t chunk = 64;
    for (size_t start = 0; start < idx.size(); start += chunk) {
        std::vector<size_t> part(idx.begin() + start,
                                 idx.begin() + std::min(idx.size(), start + chunk));
        enc::Batch batch = batch_from(data, part);
        num::Tape tape;
        num::GraphCtx ctx{tape, store, /*train=*/false};
        enc::FeatureBundle bundle = enc::forward(batch, data.encoder, ctx, /*need_locals=*/false);
        const Array& v = bundle.v.val();
        size_t da = v.shape.back();
        for (size_t i = 0; i < part.size(); ++i) {
            evals::EvalSample s;
            s.feature.assign(v.v.begin() + i * da, v.v.begin() + (i + 1) * da);
            s.labels = data.samples[part[i]].labels;
            out.push_back(std::move(s));
        }
    }
    return out;
}

TrainResult train(const RunConfig& cfg, bool resume, size_t max_epochs_this_run) {
    LoadedData data = load_data(cfg);
    if (data.train_idx.empty()) throw ConfigError("no training samples after split/unseen filtering");
    fs::create_directories(cfg.out_dir);

    const std::string model_path = cfg.out_dir + "/model.ckpt";
    const std::string best_path = cfg.out_dir + "/model_best.ckpt";
    const std::string opt_path = cfg.out_dir + "/opt.ckpt";
    const std::string state_path = cfg.out_dir + "/train_state.json";
    const std::string metrics_path = cfg.out_dir + "/metrics.jsonl";

    num::ParamStore store(derive_seed(cfg.seed, "init"));
    Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
    Rng label_rng(derive_seed(cfg.seed, "labels"));
    num::Adam adam(cfg.optim.beta1, cfg.optim.beta2, cfg.optim.eps);

    size_t start_epoch = 0, global_step = 0;
    double best_acc = -1.0;
    if (resume) {
        if (!fs::exists(state_path)) throw ConfigError("cannot resume: " + state_path + " missing");
        json st = parse_file(state_path, "train state");
        start_epoch = st.at("epochs_completed").get<size_t>();
        global_step = st.at("global_step").get<size_t>();
        best_acc = st.at("best_val_acc").get<double>();
        adam.set_steps(st.at("adam_steps").get<int64_t>());
        shuffle_rng.set_state(st.at("rng_shuffle").get<uint64_t>());
        label_rng.set_state(st.at("rng_labels").get<uint64_t>());
        num::load_checkpoint(store, model_path);
        load_opt_state(adam, opt_path);
    }

    std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
    if (!metrics) throw TrainError("cannot open metrics log: " + metrics_path);

    size_t steps_per_epoch = std::max<size_t>(1, data.train_idx.size() / cfg.optim.batch_size);
    TrainResult result;
    result.checkpoint_path = model_path;
    result.best_checkpoint_path = best_path;
    result.metrics_path = metrics_path;
    result.best_val_acc = best_acc;

    double last_loss = 0.0;
    size_t epoch = start_epoch;
    for (; epoch < cfg.optim.total_epochs; ++epoch) {
        std::vector<size_t> order = data.train_idx;
        shuffle_rng.shuffle(order);

        for (size_t step = 0; step < steps_per_epoch; ++step) {
            size_t lo = step * cfg.optim.batch_size;
            size_t hi = std::min(order.size(), lo + cfg.optim.batch_size);
            if (hi - lo < 1) break;
            std::vector<size_t> batch_idx(order.begin() + lo, order.begin() + hi);

            // One ground-truth label per sample per step, drawn uniformly.
            Array a({batch_idx.size(), data.bank.dim});
            std::vector<std::vector<int>> batch_labels;
            for (size_t i = 0; i < batch_idx.size(); ++i) {
                const auto& labels = data.samples[batch_idx[i]].labels;
                int chosen = labels[label_rng.below(labels.size())];
                const auto& vec = data.bank.vec(chosen);
                std::copy(vec.begin(), vec.end(), a.v.begin() + i * data.bank.dim);
                batch_labels.push_back(labels);
            }

            enc::Batch batch = batch_from(data, batch_idx);
            double lr = lr_schedule(static_cast<double>(epoch) +
                                        static_cast<double>(step + 1) / static_cast<double>(steps_per_epoch),
                                    cfg.optim);
            try {
                num::Tape tape;
                num::GraphCtx ctx{tape, store, /*train=*/true};
                enc::FeatureBundle bundle = enc::forward(batch, data.encoder, ctx);
                loss::LossComponents parts =
                    loss::total_loss(bundle, tape.constant(a), cfg.weights, &batch_labels);
                tape.backward(parts.total);
                adam.step(store, tape, ctx.bound, lr);
                last_loss = parts.value(parts.total);
                append_metrics(metrics, epoch, global_step, lr, parts);
            } catch (const num::GraphError& e) {
                throw TrainError("training aborted at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(global_step) + ": " + e.what());
            }
            ++global_step;
        }

        bool stop_early = false;
        if (!data.test_idx.empty() && cfg.eval_every > 0 &&
            ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.optim.total_epochs)) {
            double acc = validation_top1(data, store);
            if (acc > best_acc) {
                best_acc = acc;
                num::save_checkpoint(store, best_path);
            }
            if (cfg.early_stop_acc > 0.0 && acc >= cfg.early_stop_acc) stop_early = true;
        }

        num::save_checkpoint(store, model_path);
        save_opt_state(adam, opt_path);
        json st;
        st["epochs_completed"] = epoch + 1;
        st["global_step"] = global_step;
        st["best_val_acc"] = best_acc;
        st["adam_steps"] = adam.steps();
        st["rng_shuffle"] = shuffle_rng.state();
        st["rng_labels"] = label_rng.state();
        std::ofstream state(state_path);
        state << st.dump() << "\n";

        if (stop_early) {
            ++epoch;
            break;
        }
        if (max_epochs_this_run > 0 && epoch + 1 - start_epoch >= max_epochs_this_run) {
            ++epoch;
            break;
        }
    }

    if (best_acc < 0.0) num::save_checkpoint(store, best_path); // no validation ran
    result.epochs_run = epoch;
    result.best_val_acc = best_acc;
    result.final_loss = last_loss;
    return result;
}

namespace {

num::ParamStore load_model_store(const RunConfig& cfg, const LoadedData& data,
                                 const std::string& checkpoint) {
    num::ParamStore store(derive_seed(cfg.seed, "init"));
    try {
        num::load_checkpoint(store, checkpoint);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    size_t loaded = store.items().size();
    // A dry forward must not create parameters: the checkpoint has to cover
    // the configured architecture exactly.
    if (!data.samples.empty()) {
        try {
            std::vector<size_t> probe = {0};
            enc::Batch batch = batch_from(data, probe);
            num::Tape tape;
            num::GraphCtx ctx{tape, store, /*train=*/false};
            enc::forward(batch, data.encoder, ctx, /*need_locals=*/false);
        } catch (const std::exception& e) {
            throw ConfigError("checkpoint " + checkpoint +
                              " does not match the configured model: " + e.what());
        }
        if (store.items().size() != loaded)
            throw ConfigError("checkpoint " + checkpoint + " does not match the configured model");
    }
    return store;
}

} // namespace

evals::EvalReport evaluate_model(const RunConfig& cfg, const EvalOptions& opts,
                                 std::string* table_out, const text::LabelBank** bank_out,
                                 LoadedData* data_out) {
    if (opts.checkpoints.empty()) throw ConfigError("no checkpoint given");
    LoadedData data = load_data(cfg, opts.corpus_override.empty() ? nullptr : &opts.corpus_override);
    const std::vector<size_t>& idx =
        opts.eval_on_train ? data.train_idx : (data.test_idx.empty() ? data.train_idx : data.test_idx);
    if (idx.empty()) throw ConfigError("nothing to evaluate");
    double gamma = opts.gamma >= 0.0 ? opts.gamma : cfg.eval_gamma;

    // Ensemble: summing per-model unit features gives the same argmax as
    // averaging per-model cosine scores.
    auto normalize = [](std::vector<double>& v) {
        double n = 0.0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (n > 0.0)
            for (double& x : v) x /= n;
    };
    std::vector<evals::EvalSample> combined;
    for (size_t m = 0; m < opts.checkpoints.size(); ++m) {
        num::ParamStore store = load_model_store(cfg, data, opts.checkpoints[m]);
        auto features = extract_features(data, store, idx);
        if (m == 0) {
            combined = std::move(features);
            if (opts.checkpoints.size() > 1)
                for (auto& s : combined) normalize(s.feature);
        } else {
            for (size_t i = 0; i < combined.size(); ++i) {
                normalize(features[i].feature);
                for (size_t d = 0; d < combined[i].feature.size(); ++d)
                    combined[i].feature[d] += features[i].feature[d];
            }
        }
    }

    const std::map<int, labels::Stratum>* strata = data.split.strata.empty() ? nullptr : &data.split.strata;
    evals::EvalReport rep = evals::evaluate(combined, data.bank, strata, gamma);
    if (table_out) *table_out = rep.to_table();
    if (bank_out) *bank_out = nullptr;
    if (data_out) *data_out = std::move(data);
    return rep;
}

std::vector<evals::GammaRow> sweep_gamma_model(const RunConfig& cfg, const EvalOptions& opts,
                                               double from, double to, double step) {
    if (opts.checkpoints.empty()) throw ConfigError("no checkpoint given");
    LoadedData data = load_data(cfg, opts.corpus_override.empty() ? nullptr : &opts.corpus_override);
    const std::vector<size_t>& idx = data.test_idx.empty() ? data.train_idx : data.test_idx;
    num::ParamStore store = load_model_store(cfg, data, opts.checkpoints.front());
    auto features = extract_features(data, store, idx);
    return evals::sweep_gamma(features, data.bank, from, to, step);
}

GradCheckConfig read_gradcheck_config(const std::string& path) {
    json doc = parse_file(path, "gradcheck config");
    GradCheckConfig gc;
    gc.d_hidden = doc.value("d_hidden", gc.d_hidden);
    gc.layers = doc.value("layers", gc.layers);
    gc.heads = doc.value("heads", gc.heads);
    gc.frames = doc.value("frames", gc.frames);
    gc.k_unified = doc.value("k_unified", gc.k_unified);
    gc.batch = doc.value("batch", gc.batch);
    gc.d_semantic = doc.value("d_semantic", gc.d_semantic);
    gc.n_seg = doc.value("n_seg", gc.n_seg);
    gc.n_part = doc.value("n_part", gc.n_part);
    gc.seed = doc.value("seed", gc.seed);
    gc.step = doc.value("step", gc.step);
    gc.tol = doc.value("tol", gc.tol);
    gc.fusion = doc.value("fusion", gc.fusion);
    gc.padding = doc.value("padding", gc.padding);
    return gc;
}

num::GradCheckReport run_gradcheck(const GradCheckConfig& gc) {
    // Synthetic chain-topology format with the requested joint count.
    skel::SkeletonFormat fmt;
    fmt.format_id = "gradcheck";
    for (size_t j = 0; j < gc.k_unified; ++j) {
        fmt.joints.push_back("j" + std::string(j < 10 ? "0" : "") + std::to_string(j));
        fmt.parent_of.push_back(j == 0 ? 0 : j - 1);
    }
    fmt.coord_dims = 3;
    fmt.max_members = 1;
    skel::UnifiedSpace space = skel::build_unified_space({fmt});

    Rng rng(derive_seed(gc.seed, "gradcheck-data"));
    std::vector<skel::ModalityTriple> mods;
    std::vector<std::vector<uint8_t>> masks;
    std::vector<std::vector<int>> labels;
    Array a({gc.batch, gc.d_semantic});
    for (size_t i = 0; i < gc.batch; ++i) {
        skel::RawSequence seq;
        seq.format_id = fmt.format_id;
        seq.frames = gc.frames;
        seq.members = 1;
        seq.label_ids = {static_cast<int>(i)};
        seq.data.resize(gc.frames * gc.k_unified * 3);
        for (double& x : seq.data) x = rng.normal();
        skel::UnifiedSequence u = skel::unify(seq, space, fmt, skel::padding_from_string(gc.padding));
        mods.push_back(skel::derive_modalities(u, space, fmt));
        masks.push_back(u.joint_mask);
        labels.push_back(seq.label_ids);
        double norm = 0.0;
        std::vector<double> row(gc.d_semantic);
        for (double& x : row) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (size_t d = 0; d < gc.d_semantic; ++d) a[i * gc.d_semantic + d] = row[d] / norm;
    }

    enc::EncoderConfig ecfg;
    ecfg.d_hidden = gc.d_hidden;
    ecfg.layers = gc.layers;
    ecfg.heads = gc.heads;
    ecfg.ffn_mult = 2;
    ecfg.d_semantic = gc.d_semantic;
    ecfg.t_max = gc.frames;
    ecfg.n_seg = gc.n_seg;
    ecfg.n_part = gc.n_part;
    ecfg.part_of_slot = enc::default_part_map(space, gc.n_part);
    ecfg.fusion = gc.fusion == "learnable" ? enc::FusionMode::learnable_softmax
                                           : enc::FusionMode::fixed_equal;

    std::vector<const skel::ModalityTriple*> mod_ptrs;
    std::vector<const std::vector<uint8_t>*> mask_ptrs;
    for (size_t i = 0; i < mods.size(); ++i) {
        mod_ptrs.push_back(&mods[i]);
        mask_ptrs.push_back(&masks[i]);
    }
    enc::Batch batch = enc::make_batch(mod_ptrs, mask_ptrs, space.k_unified, space.m_unified,
                                       skel::padding_from_string(gc.padding));

    loss::LossWeights w; // default weights
    num::ParamStore store(derive_seed(gc.seed, "init"));
    auto build = [&](num::GraphCtx& ctx) {
        enc::FeatureBundle bundle = enc::forward(batch, ecfg, ctx);
        loss::LossComponents parts = loss::total_loss(bundle, ctx.tape.constant(a), w, &labels);
        return parts.total;
    };
    return num::grad_check(build, store, gc.step);
}

} // namespace uskel::harness
