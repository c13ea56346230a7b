#include "uskel/motiongen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "uskel/rng.hpp"

namespace uskel::gen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Pose = std::vector<std::array<double, 3>>; // canonical joints x 3

struct Params {
    std::map<std::string, double> v;
    double get(const std::string& k) const { return v.at(k); }
};

using Ranges = std::map<std::string, std::pair<double, double>>;

const std::map<std::string, Ranges>& default_ranges() {
    static const std::map<std::string, Ranges> r = {
        {"wave", {{"amp", {0.10, 0.16}}, {"freq", {1.5, 2.5}}, {"phase", {0.0, 0.6}}}},
        {"squat", {{"depth", {0.22, 0.34}}, {"freq", {0.8, 1.4}}}},
        {"walk", {{"speed", {0.35, 0.60}}, {"freq", {1.2, 2.0}}, {"amp", {0.14, 0.22}}}},
        {"jump", {{"height", {0.18, 0.30}}}},
        {"kick", {{"amp", {0.5, 0.8}}, {"center", {0.40, 0.60}}}},
        {"turn", {{"angle", {2.2, 3.8}}}},
        {"clap", {{"freq", {1.0, 2.0}}}},
        {"bow", {{"angle", {0.5, 0.9}}}},
    };
    return r;
}

size_t cj(const char* name) { return skel::canonical_index().at(name); }

Pose rest_pose() {
    const auto& joints = skel::canonical_joints();
    Pose p(joints.size());
    for (size_t i = 0; i < joints.size(); ++i) p[i] = joints[i].rest;
    return p;
}

void offset(Pose& p, size_t j, double dx, double dy, double dz) {
    p[j][0] += dx;
    p[j][1] += dy;
    p[j][2] += dz;
}

void offset_many(Pose& p, const std::vector<size_t>& js, double dx, double dy, double dz) {
    for (size_t j : js) offset(p, j, dx, dy, dz);
}

const std::vector<size_t>& upper_body() {
    static const std::vector<size_t> js = [] {
        std::vector<size_t> v;
        for (const char* n : {"spine_mid", "spine_chest", "spine_upper", "neck", "head", "nose",
                              "l_eye", "r_eye", "l_ear", "r_ear", "l_collar", "r_collar",
                              "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist",
                              "r_wrist", "l_hand", "r_hand", "l_hand_tip", "r_hand_tip", "l_thumb",
                              "r_thumb"})
            v.push_back(cj(n));
        return v;
    }();
    return js;
}

const std::vector<size_t>& above_knee() {
    static const std::vector<size_t> js = [] {
        std::vector<size_t> v = upper_body();
        for (const char* n : {"pelvis", "l_hip", "r_hip"}) v.push_back(cj(n));
        return v;
    }();
    return js;
}

// Each primitive maps a normalized time in [0,1] to a canonical pose.
Pose primitive_pose(const std::string& prim, double t01, const Params& pm) {
    Pose p = rest_pose();
    if (prim == "wave") {
        double raise = std::min(1.0, 3.0 * t01);
        double swing = pm.get("amp") * std::sin(2.0 * M_PI * pm.get("freq") * t01 + pm.get("phase"));
        offset(p, cj("r_elbow"), -0.02 * raise, 0.30 * raise, 0.06 * raise);
        for (const char* n : {"r_wrist", "r_hand", "r_hand_tip", "r_thumb"}) {
            double reach = n[2] == 'w' ? 1.0 : 1.2; // hand chain swings a bit wider
            offset(p, cj(n), (-swing - 0.04) * raise * reach, 0.58 * raise, 0.10 * raise);
        }
    } else if (prim == "squat") {
        double dy = -pm.get("depth") * 0.5 * (1.0 - std::cos(2.0 * M_PI * pm.get("freq") * t01));
        offset_many(p, above_knee(), 0.0, dy, 0.0);
        for (const char* n : {"l_knee", "r_knee"}) offset(p, cj(n), 0.0, dy * 0.25, -dy * 0.45);
    } else if (prim == "walk") {
        double fwd = pm.get("speed") * t01;
        double ph = std::sin(2.0 * M_PI * pm.get("freq") * t01);
        double a = pm.get("amp");
        for (size_t j = 0; j < p.size(); ++j) p[j][2] += fwd;
        for (const char* n : {"l_knee", "l_ankle", "l_foot"}) offset(p, cj(n), 0.0, 0.0, a * ph);
        for (const char* n : {"r_knee", "r_ankle", "r_foot"}) offset(p, cj(n), 0.0, 0.0, -a * ph);
        for (const char* n : {"l_ankle", "l_foot"}) offset(p, cj(n), 0.0, std::max(0.0, 0.3 * a * ph), 0.0);
        for (const char* n : {"r_ankle", "r_foot"}) offset(p, cj(n), 0.0, std::max(0.0, -0.3 * a * ph), 0.0);
        for (const char* n : {"l_wrist", "l_hand", "l_hand_tip", "l_thumb"}) offset(p, cj(n), 0.0, 0.0, -0.5 * a * ph);
        for (const char* n : {"r_wrist", "r_hand", "r_hand_tip", "r_thumb"}) offset(p, cj(n), 0.0, 0.0, 0.5 * a * ph);
        // frontal-view gait signature: lateral sway plus a double-frequency bob
        double sway = 0.18 * a * ph;
        double bob = 0.12 * a * std::sin(4.0 * M_PI * pm.get("freq") * t01);
        offset_many(p, above_knee(), sway, bob, 0.0);
    } else if (prim == "jump") {
        double h = pm.get("height") * 4.0 * t01 * (1.0 - t01);
        for (size_t j = 0; j < p.size(); ++j) p[j][1] += h;
        for (const char* n : {"l_elbow", "r_elbow"}) offset(p, cj(n), 0.0, 0.3 * h, 0.0);
        for (const char* n : {"l_wrist", "r_wrist", "l_hand", "r_hand", "l_hand_tip", "r_hand_tip",
                              "l_thumb", "r_thumb"})
            offset(p, cj(n), 0.0, 0.8 * h, 0.0);
    } else if (prim == "kick") {
        double z = (t01 - pm.get("center")) / 0.15;
        double pulse = pm.get("amp") * std::exp(-z * z);
        offset(p, cj("r_knee"), 0.0, 0.15 * pulse, 0.30 * pulse);
        offset(p, cj("r_ankle"), 0.0, 0.28 * pulse, 0.62 * pulse);
        offset(p, cj("r_foot"), 0.0, 0.30 * pulse, 0.70 * pulse);
        offset_many(p, upper_body(), 0.0, 0.0, -0.05 * pulse);
    } else if (prim == "turn") {
        double psi = pm.get("angle") * t01;
        double cx = p[cj("pelvis")][0], cz = p[cj("pelvis")][2];
        double c = std::cos(psi), s = std::sin(psi);
        for (auto& joint : p) {
            double x = joint[0] - cx, z = joint[2] - cz;
            joint[0] = cx + c * x + s * z;
            joint[2] = cz - s * x + c * z;
        }
    } else if (prim == "clap") {
        double closeness = 0.5 * (1.0 - std::cos(2.0 * M_PI * pm.get("freq") * t01));
        for (const char* side : {"l", "r"}) {
            double sign = side[0] == 'l' ? 1.0 : -1.0;
            offset(p, cj((std::string(side) + "_elbow").c_str()), -sign * 0.06 * closeness,
                   0.18 * closeness, 0.12 * closeness);
            for (const char* part : {"_wrist", "_hand", "_hand_tip", "_thumb"}) {
                size_t j = cj((std::string(side) + part).c_str());
                double to_mid = (0.03 * sign - p[j][0]) * closeness;
                offset(p, j, to_mid, 0.42 * closeness, 0.24 * closeness);
            }
        }
    } else if (prim == "bow") {
        double beta = pm.get("angle") * 0.5 * (1.0 - std::cos(2.0 * M_PI * t01));
        double cy = p[cj("pelvis")][1], czz = p[cj("pelvis")][2];
        double c = std::cos(beta), s = std::sin(beta);
        for (size_t j : upper_body()) {
            double y = p[j][1] - cy, z = p[j][2] - czz;
            p[j][1] = cy + c * y - s * z;
            p[j][2] = czz + s * y + c * z;
        }
    } else {
        throw GenError("unknown primitive '" + prim + "'");
    }
    return p;
}

Params draw_params(const ClassSpec& cls, Rng& rng) {
    auto it = default_ranges().find(cls.primitive);
    if (it == default_ranges().end()) throw GenError("unknown primitive '" + cls.primitive + "'");
    Ranges ranges = it->second;
    for (const auto& [k, r] : cls.param_ranges) ranges[k] = r;
    Params pm;
    for (const auto& [k, r] : ranges) pm.v[k] = rng.uniform(r.first, r.second);
    return pm;
}

struct SamplePlan {
    std::vector<int> labels;            // class indices
    std::vector<ClassSpec> specs;       // 1 or 2 entries
};

std::vector<SamplePlan> plan_samples(const GenSpec& spec) {
    std::vector<SamplePlan> plans;
    for (size_t c = 0; c < spec.classes.size(); ++c)
        for (size_t i = 0; i < spec.samples_per_class[c]; ++i)
            plans.push_back({{static_cast<int>(c)}, {spec.classes[c]}});
    for (const auto& pair : spec.multilabel) {
        for (size_t i = 0; i < pair.count; ++i) {
            SamplePlan plan;
            plan.labels = {static_cast<int>(pair.class_a), static_cast<int>(pair.class_b)};
            plan.specs = {spec.classes[pair.class_a], spec.classes[pair.class_b]};
            plans.push_back(std::move(plan));
        }
    }
    return plans;
}

Pose sample_pose(const SamplePlan& plan, const std::vector<Params>& params, double t01,
                 size_t frames) {
    if (plan.specs.size() == 1) return primitive_pose(plan.specs[0].primitive, t01, params[0]);
    // Sequential composition with a blend window of 10% of T around the midpoint.
    double w = 0.5 * std::max(0.1, 2.0 / static_cast<double>(frames));
    double lo = 0.5 - w, hi = 0.5 + w;
    double span = hi; // each primitive plays over a (0.5 + w) share of the timeline
    double ta = std::min(1.0, t01 / span);
    double tb = std::clamp((t01 - lo) / span, 0.0, 1.0);
    Pose a = primitive_pose(plan.specs[0].primitive, ta, params[0]);
    if (t01 < lo) return a;
    Pose b = primitive_pose(plan.specs[1].primitive, tb, params[1]);
    if (t01 >= hi) return b;
    double alpha = (t01 - lo) / (hi - lo);
    for (size_t j = 0; j < a.size(); ++j)
        for (size_t c = 0; c < 3; ++c) a[j][c] = (1.0 - alpha) * a[j][c] + alpha * b[j][c];
    return a;
}

} // namespace

const std::vector<std::string>& primitive_names() {
    static const std::vector<std::string> names = {"wave", "squat", "walk", "jump",
                                                   "kick", "turn", "clap", "bow"};
    return names;
}

void GenSpec::validate(const skel::FormatRegistry& registry) const {
    if (classes.empty()) throw GenError("genspec: no classes");
    if (samples_per_class.size() != classes.size())
        throw GenError("genspec: samples_per_class length must match classes");
    if (formats.empty()) throw GenError("genspec: no formats");
    if (frames < 2) throw GenError("genspec: frames must be >= 2");
    if (noise_sigma < 0.0) throw GenError("genspec: noise_sigma must be >= 0");
    for (const auto& f : formats) {
        if (!registry.has(f)) throw GenError("genspec: unknown format '" + f + "'");
        for (const auto& joint : registry.get(f).joints)
            if (!skel::canonical_index().count(joint))
                throw GenError("format '" + f + "' requests joint '" + joint +
                               "' outside the canonical vocabulary");
    }
    for (const auto& c : classes)
        if (!default_ranges().count(c.primitive)) throw GenError("unknown primitive '" + c.primitive + "'");
    for (const auto& p : multilabel)
        if (p.class_a >= classes.size() || p.class_b >= classes.size())
            throw GenError("genspec: multilabel pair references an unknown class");
}

std::vector<std::vector<std::array<double, 3>>> canonical_trajectory(const GenSpec& spec,
                                                                     size_t sample_index) {
    auto plans = plan_samples(spec);
    if (sample_index >= plans.size()) throw GenError("sample index out of range");
    const SamplePlan& plan = plans[sample_index];
    Rng rng(derive_seed(spec.seed, "sample:" + std::to_string(sample_index)));
    std::vector<Params> params;
    for (const auto& cls : plan.specs) params.push_back(draw_params(cls, rng));
    std::vector<Pose> frames;
    for (size_t t = 0; t < spec.frames; ++t) {
        double t01 = static_cast<double>(t) / static_cast<double>(spec.frames - 1);
        frames.push_back(sample_pose(plan, params, t01, spec.frames));
    }
    return frames;
}

GeneratedCorpus generate(const GenSpec& spec, const skel::FormatRegistry& registry) {
    spec.validate(registry);
    auto plans = plan_samples(spec);

    GeneratedCorpus out;
    for (const auto& f : spec.formats) out.by_format[f] = {};

    for (size_t i = 0; i < plans.size(); ++i) {
        auto canon = canonical_trajectory(spec, i);
        out.sample_ids.push_back(std::to_string(i));
        out.label_ids.push_back(plans[i].labels);
        for (const auto& fmt_id : spec.formats) {
            const skel::SkeletonFormat& fmt = registry.get(fmt_id);
            size_t kp = fmt.joint_count();
            size_t cd = static_cast<size_t>(fmt.coord_dims);
            skel::RawSequence seq;
            seq.format_id = fmt_id;
            seq.frames = spec.frames;
            seq.members = 1;
            seq.label_ids = plans[i].labels;
            seq.data.resize(spec.frames * kp * cd);
            Rng noise(derive_seed(spec.seed, "noise:" + fmt_id + ":" + std::to_string(i)));
            for (size_t t = 0; t < spec.frames; ++t)
                for (size_t j = 0; j < kp; ++j) {
                    size_t ci = skel::canonical_index().at(fmt.joints[j]);
                    for (size_t c = 0; c < cd; ++c) {
                        // 2-d renderings drop depth (orthographic frontal view).
                        double v = canon[t][ci][c];
                        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise.normal();
                        seq.data[(t * kp + j) * cd + c] = v;
                    }
                }
            out.by_format[fmt_id].push_back(std::move(seq));
        }
    }
    return out;
}

GenSpec read_genspec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw GenError("cannot open generation spec: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw GenError("generation spec is not valid JSON: " + path);
    GenSpec spec;
    for (const auto& c : doc.at("classes")) {
        ClassSpec cls;
        cls.name = c.at("name").get<std::string>();
        cls.primitive = c.at("primitive").get<std::string>();
        if (c.contains("params"))
            for (auto it = c["params"].begin(); it != c["params"].end(); ++it) {
                auto r = it.value().get<std::vector<double>>();
                if (r.size() != 2) throw GenError("param range must be [lo, hi]");
                cls.param_ranges[it.key()] = {r[0], r[1]};
            }
        spec.classes.push_back(std::move(cls));
    }
    spec.formats = doc.at("formats").get<std::vector<std::string>>();
    spec.samples_per_class = doc.at("samples_per_class").get<std::vector<size_t>>();
    if (doc.contains("multilabel_pairs"))
        for (const auto& p : doc["multilabel_pairs"])
            spec.multilabel.push_back({p.at("a").get<size_t>(), p.at("b").get<size_t>(),
                                       p.at("count").get<size_t>()});
    spec.frames = doc.value("frames", spec.frames);
    spec.noise_sigma = doc.value("noise_sigma", spec.noise_sigma);
    spec.seed = doc.value("seed", spec.seed);
    return spec;
}

void write_outputs(const GeneratedCorpus& corpus, const GenSpec& spec,
                   const skel::FormatRegistry& registry, const std::string& out_dir) {
    fs::create_directories(out_dir);
    skel::FormatRegistry used;
    for (const auto& f : spec.formats) used.add(registry.get(f));
    for (const auto& [fmt_id, seqs] : corpus.by_format)
        skel::write_corpus_jsonl(out_dir + "/corpus_" + fmt_id + ".jsonl", seqs, used);

    std::ofstream samples(out_dir + "/samples.jsonl");
    if (!samples) throw GenError("cannot write sample manifest");
    for (size_t i = 0; i < corpus.sample_ids.size(); ++i) {
        json rec;
        rec["sample_id"] = corpus.sample_ids[i];
        rec["label_ids"] = corpus.label_ids[i];
        samples << rec.dump() << "\n";
    }

    json manifest;
    json classes = json::array();
    for (size_t c = 0; c < spec.classes.size(); ++c)
        classes.push_back({{"id", c},
                           {"name", spec.classes[c].name},
                           {"primitive", spec.classes[c].primitive},
                           {"count", spec.samples_per_class[c]}});
    manifest["classes"] = std::move(classes);
    manifest["formats"] = spec.formats;
    manifest["frames"] = spec.frames;
    manifest["noise_sigma"] = spec.noise_sigma;
    manifest["seed"] = spec.seed;
    manifest["samples"] = corpus.sample_ids.size();
    std::ofstream mf(out_dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";

    skel::UnifiedSpace space = skel::build_unified_space(used.formats);
    skel::write_registry(out_dir + "/registry.json", used, &space);
    skel::write_adjacency(out_dir + "/adjacency.json", skel::default_adjacency());
}

} // namespace uskel::gen
