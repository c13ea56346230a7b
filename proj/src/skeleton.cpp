#include "uskel/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"

namespace uskel::skel {

using nlohmann::json;

void SkeletonFormat::validate() const {
    if (format_id.empty()) throw SkelError("format_id must be non-empty");
    if (joints.empty()) throw SkelError("format '" + format_id + "' has no joints");
    if (coord_dims != 2 && coord_dims != 3)
        throw SkelError("format '" + format_id + "': coord_dims must be 2 or 3");
    if (max_members < 1) throw SkelError("format '" + format_id + "': max_members must be >= 1");
    if (parent_of.size() != joints.size())
        throw SkelError("format '" + format_id + "': parent_of length mismatch");
    std::set<std::string> seen;
    for (const auto& j : joints)
        if (!seen.insert(j).second)
            throw SkelError("format '" + format_id + "': duplicate joint '" + j + "'");
    size_t roots = 0;
    for (size_t j = 0; j < joints.size(); ++j) {
        if (parent_of[j] >= joints.size())
            throw SkelError("format '" + format_id + "': parent index out of range");
        if (parent_of[j] == j) {
            ++roots;
            continue;
        }
        // Parent chain must reach the root in < K' steps.
        size_t cur = j, steps = 0;
        while (parent_of[cur] != cur) {
            cur = parent_of[cur];
            if (++steps >= joints.size())
                throw SkelError("format '" + format_id + "': cyclic parent chain at '" + joints[j] + "'");
        }
    }
    if (roots != 1) throw SkelError("format '" + format_id + "': expected exactly one root");
}

size_t UnifiedSpace::slot(const std::string& joint) const {
    auto it = slot_by_name.find(joint);
    if (it == slot_by_name.end()) throw SkelError("unknown canonical joint '" + joint + "'");
    return it->second;
}

Padding padding_from_string(const std::string& s) {
    if (s == "zero") return Padding::zero;
    if (s == "interpolation") return Padding::interpolation;
    if (s == "learnable" || s == "learnable-placeholder") return Padding::learnable_placeholder;
    throw SkelError("unknown padding strategy '" + s + "'");
}

std::string padding_name(Padding p) {
    switch (p) {
    case Padding::zero: return "zero";
    case Padding::interpolation: return "interpolation";
    case Padding::learnable_placeholder: return "learnable";
    }
    return "zero";
}

const SkeletonFormat& FormatRegistry::get(const std::string& id) const {
    for (const auto& f : formats)
        if (f.format_id == id) return f;
    throw SkelError("unknown format '" + id + "'");
}

bool FormatRegistry::has(const std::string& id) const {
    for (const auto& f : formats)
        if (f.format_id == id) return true;
    return false;
}

void FormatRegistry::add(SkeletonFormat f) {
    f.validate();
    if (has(f.format_id)) throw SkelError("duplicate format_id '" + f.format_id + "'");
    formats.push_back(std::move(f));
}

UnifiedSpace build_unified_space(const std::vector<SkeletonFormat>& formats) {
    if (formats.empty()) throw SkelError("build_unified_space: empty format list");
    std::set<std::string> ids;
    std::set<std::string> joint_union;
    size_t m_unified = 0;
    for (const auto& f : formats) {
        f.validate();
        if (!ids.insert(f.format_id).second)
            throw SkelError("duplicate format_id '" + f.format_id + "'");
        joint_union.insert(f.joints.begin(), f.joints.end());
        m_unified = std::max(m_unified, f.max_members);
    }
    UnifiedSpace space;
    space.m_unified = m_unified;
    space.slot_joint.assign(joint_union.begin(), joint_union.end()); // sorted: determinism
    space.k_unified = space.slot_joint.size();
    for (size_t s = 0; s < space.slot_joint.size(); ++s) space.slot_by_name[space.slot_joint[s]] = s;
    for (const auto& f : formats) {
        std::vector<size_t> slots(f.joints.size());
        for (size_t j = 0; j < f.joints.size(); ++j) slots[j] = space.slot_by_name.at(f.joints[j]);
        space.slot_of[f.format_id] = std::move(slots);
    }
    return space;
}

UnifiedSequence unify(const RawSequence& seq, const UnifiedSpace& space, const SkeletonFormat& fmt,
                      Padding strategy, const Adjacency* adjacency) {
    if (seq.format_id != fmt.format_id) throw SkelError("unify: sequence/format mismatch");
    if (!space.has_format(fmt.format_id))
        throw SkelError("unify: format '" + fmt.format_id + "' not registered in the unified space");
    if (seq.frames < 1) throw SkelError("unify: sequence must have at least one frame");
    if (seq.members < 1 || seq.members > fmt.max_members)
        throw SkelError("unify: member count out of range for format '" + fmt.format_id + "'");
    size_t kp = fmt.joint_count();
    size_t cd = static_cast<size_t>(fmt.coord_dims);
    if (seq.data.size() != seq.frames * kp * seq.members * cd)
        throw SkelError("unify: frame/joint array shape mismatch for format '" + fmt.format_id + "'");
    if (seq.label_ids.empty()) throw SkelError("unify: label_ids must be non-empty");
    for (double x : seq.data)
        if (!std::isfinite(x)) throw SkelError("unify: non-finite coordinate");

    const auto& slots = space.slot_of.at(fmt.format_id);
    size_t K = space.k_unified, M = space.m_unified, T = seq.frames;

    UnifiedSequence u;
    u.frames = T;
    u.k = K;
    u.m = M;
    u.data = num::Array({T, K, M, 3});
    u.joint_mask.assign(K * M, 0);
    u.label_ids = seq.label_ids;
    u.padding = strategy;

    for (size_t j = 0; j < kp; ++j)
        for (size_t m = 0; m < seq.members; ++m) u.joint_mask[slots[j] * M + m] = 1;

    for (size_t t = 0; t < T; ++t)
        for (size_t j = 0; j < kp; ++j)
            for (size_t m = 0; m < seq.members; ++m)
                for (size_t c = 0; c < cd; ++c)
                    u.data[((t * K + slots[j]) * M + m) * 3 + c] =
                        seq.data[((t * kp + j) * seq.members + m) * cd + c];

    if (strategy == Padding::interpolation) {
        // Fill missing slots of active members from the mean of present
        // adjacent joints; slots with no present source stay zero.
        Adjacency fallback;
        const Adjacency& adj = adjacency ? *adjacency : (fallback = default_adjacency());
        for (size_t s = 0; s < K; ++s) {
            for (size_t m = 0; m < seq.members; ++m) {
                if (u.joint_mask[s * M + m]) continue;
                auto it = adj.find(space.slot_joint[s]);
                if (it == adj.end()) continue;
                std::vector<size_t> sources;
                for (const auto& name : it->second) {
                    auto sn = space.slot_by_name.find(name);
                    if (sn != space.slot_by_name.end() && u.joint_mask[sn->second * M + m])
                        sources.push_back(sn->second);
                }
                if (sources.empty()) continue;
                for (size_t t = 0; t < T; ++t)
                    for (size_t c = 0; c < 3; ++c) {
                        double acc = 0.0;
                        for (size_t src : sources) acc += u.data[((t * K + src) * M + m) * 3 + c];
                        u.data[((t * K + s) * M + m) * 3 + c] = acc / static_cast<double>(sources.size());
                    }
            }
        }
    }
    // zero: already zero-filled. learnable: slots stay zero here; the mask is
    // the sentinel and the encoder substitutes its per-slot parameters.
    return u;
}

ModalityTriple derive_modalities(const UnifiedSequence& u, const UnifiedSpace& space,
                                 const SkeletonFormat& fmt) {
    size_t K = u.k, M = u.m, T = u.frames;
    if (K != space.k_unified || M != space.m_unified)
        throw SkelError("derive_modalities: sequence does not match the unified space");
    const auto& slots = space.slot_of.at(fmt.format_id);

    ModalityTriple out;
    out.joint = u.data;
    out.bone = num::Array({T, K, M, 3});
    out.motion = num::Array({T, K, M, 3});

    // Bone: child minus parent over the format's bones; root slot stays zero.
    for (size_t j = 0; j < fmt.joint_count(); ++j) {
        if (fmt.parent_of[j] == j) continue;
        size_t sc = slots[j], sp = slots[fmt.parent_of[j]];
        for (size_t m = 0; m < M; ++m) {
            if (!u.joint_mask[sc * M + m]) continue;
            for (size_t t = 0; t < T; ++t)
                for (size_t c = 0; c < 3; ++c)
                    out.bone[((t * K + sc) * M + m) * 3 + c] =
                        u.data[((t * K + sc) * M + m) * 3 + c] - u.data[((t * K + sp) * M + m) * 3 + c];
        }
    }

    // Motion: frame-to-frame displacement; frame 0 stays zero.
    for (size_t t = 1; t < T; ++t)
        for (size_t i = 0; i < K * M * 3; ++i)
            out.motion[t * K * M * 3 + i] = u.data[t * K * M * 3 + i] - u.data[(t - 1) * K * M * 3 + i];
    return out;
}

UnifiedSequence resample_time(const UnifiedSequence& u, size_t t_new) {
    if (t_new == 0) throw SkelError("resample_time: target frame count must be >= 1");
    if (t_new == u.frames) return u;
    UnifiedSequence out = u;
    out.frames = t_new;
    out.data = num::Array({t_new, u.k, u.m, 3});
    size_t stride = u.k * u.m * 3;
    for (size_t t = 0; t < t_new; ++t) {
        double pos = (t_new == 1 || u.frames == 1)
                         ? 0.0
                         : static_cast<double>(t) * static_cast<double>(u.frames - 1) /
                               static_cast<double>(t_new - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, u.frames - 1);
        double w = pos - static_cast<double>(lo);
        for (size_t i = 0; i < stride; ++i)
            out.data[t * stride + i] =
                (1.0 - w) * u.data[lo * stride + i] + w * u.data[hi * stride + i];
    }
    return out;
}

// ---- canonical skeleton ------------------------------------------------------

const std::vector<CanonicalJoint>& canonical_joints() {
    static const std::vector<CanonicalJoint> joints = {
        {"pelvis", "pelvis", {0.00, 1.00, 0.00}},
        {"spine_mid", "pelvis", {0.00, 1.15, 0.00}},
        {"spine_chest", "spine_mid", {0.00, 1.30, 0.00}},
        {"spine_upper", "spine_chest", {0.00, 1.38, 0.00}},
        {"neck", "spine_upper", {0.00, 1.45, 0.00}},
        {"head", "neck", {0.00, 1.60, 0.00}},
        {"nose", "head", {0.00, 1.62, 0.10}},
        {"l_eye", "nose", {0.04, 1.66, 0.08}},
        {"r_eye", "nose", {-0.04, 1.66, 0.08}},
        {"l_ear", "head", {0.08, 1.62, 0.02}},
        {"r_ear", "head", {-0.08, 1.62, 0.02}},
        {"l_collar", "spine_upper", {0.08, 1.42, 0.00}},
        {"r_collar", "spine_upper", {-0.08, 1.42, 0.00}},
        {"l_shoulder", "l_collar", {0.22, 1.40, 0.00}},
        {"r_shoulder", "r_collar", {-0.22, 1.40, 0.00}},
        {"l_elbow", "l_shoulder", {0.30, 1.14, 0.00}},
        {"r_elbow", "r_shoulder", {-0.30, 1.14, 0.00}},
        {"l_wrist", "l_elbow", {0.34, 0.92, 0.03}},
        {"r_wrist", "r_elbow", {-0.34, 0.92, 0.03}},
        {"l_hand", "l_wrist", {0.36, 0.84, 0.05}},
        {"r_hand", "r_wrist", {-0.36, 0.84, 0.05}},
        {"l_hand_tip", "l_hand", {0.38, 0.77, 0.06}},
        {"r_hand_tip", "r_hand", {-0.38, 0.77, 0.06}},
        {"l_thumb", "l_hand", {0.32, 0.82, 0.08}},
        {"r_thumb", "r_hand", {-0.32, 0.82, 0.08}},
        {"l_hip", "pelvis", {0.10, 0.96, 0.00}},
        {"r_hip", "pelvis", {-0.10, 0.96, 0.00}},
        {"l_knee", "l_hip", {0.11, 0.52, 0.02}},
        {"r_knee", "r_hip", {-0.11, 0.52, 0.02}},
        {"l_ankle", "l_knee", {0.12, 0.10, 0.00}},
        {"r_ankle", "r_knee", {-0.12, 0.10, 0.00}},
        {"l_foot", "l_ankle", {0.13, 0.04, 0.12}},
        {"r_foot", "r_ankle", {-0.13, 0.04, 0.12}},
    };
    return joints;
}

const std::unordered_map<std::string, size_t>& canonical_index() {
    static const std::unordered_map<std::string, size_t> index = [] {
        std::unordered_map<std::string, size_t> m;
        const auto& joints = canonical_joints();
        for (size_t i = 0; i < joints.size(); ++i) m[joints[i].name] = i;
        return m;
    }();
    return index;
}

SkeletonFormat make_format(const std::string& id, const std::vector<std::string>& joints,
                           int coord_dims, size_t max_members) {
    const auto& canon = canonical_joints();
    const auto& cidx = canonical_index();
    std::unordered_map<std::string, size_t> local;
    for (size_t j = 0; j < joints.size(); ++j) {
        if (!cidx.count(joints[j]))
            throw SkelError("make_format: '" + joints[j] + "' is not a canonical joint");
        local[joints[j]] = j;
    }
    SkeletonFormat fmt;
    fmt.format_id = id;
    fmt.joints = joints;
    fmt.coord_dims = coord_dims;
    fmt.max_members = max_members;
    fmt.parent_of.resize(joints.size());
    std::optional<size_t> root;
    for (size_t j = 0; j < joints.size(); ++j) {
        // Nearest canonical ancestor present in this format.
        size_t cur = cidx.at(joints[j]);
        std::optional<size_t> parent;
        while (true) {
            const std::string up = canon[cur].parent;
            size_t next = cidx.at(up);
            if (next == cur) break; // canonical root
            auto it = local.find(up);
            if (it != local.end()) {
                parent = it->second;
                break;
            }
            cur = next;
        }
        if (parent) {
            fmt.parent_of[j] = *parent;
        } else if (!root) {
            root = j; // first ancestor-less joint becomes the format root
            fmt.parent_of[j] = j;
        } else {
            fmt.parent_of[j] = *root;
        }
    }
    fmt.validate();
    return fmt;
}

std::vector<SkeletonFormat> builtin_formats() {
    std::vector<SkeletonFormat> out;
    out.push_back(make_format(
        "kinect-v1",
        {"pelvis", "spine_mid", "neck", "head", "l_shoulder", "l_elbow", "l_wrist", "l_hand",
         "r_shoulder", "r_elbow", "r_wrist", "r_hand", "l_hip", "l_knee", "l_ankle", "l_foot",
         "r_hip", "r_knee", "r_ankle", "r_foot"},
        3, 1));
    out.push_back(make_format(
        "kinect-v2",
        {"pelvis", "spine_mid", "spine_chest", "neck", "head", "l_shoulder", "l_elbow", "l_wrist",
         "l_hand", "l_hand_tip", "l_thumb", "r_shoulder", "r_elbow", "r_wrist", "r_hand",
         "r_hand_tip", "r_thumb", "l_hip", "l_knee", "l_ankle", "l_foot", "r_hip", "r_knee",
         "r_ankle", "r_foot"},
        3, 1));
    out.push_back(make_format(
        "pose-2d",
        {"nose", "l_eye", "r_eye", "l_ear", "r_ear", "l_shoulder", "r_shoulder", "l_elbow",
         "r_elbow", "l_wrist", "r_wrist", "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle",
         "r_ankle"},
        2, 1));
    out.push_back(make_format(
        "smpl-22",
        {"pelvis", "l_hip", "r_hip", "spine_mid", "l_knee", "r_knee", "spine_chest", "l_ankle",
         "r_ankle", "spine_upper", "l_foot", "r_foot", "neck", "l_collar", "r_collar", "head",
         "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist"},
        3, 1));
    return out;
}

Adjacency default_adjacency() {
    return {
        {"pelvis", {"l_hip", "r_hip"}},
        {"spine_mid", {"pelvis", "spine_chest"}},
        {"spine_chest", {"l_shoulder", "r_shoulder"}},
        {"spine_upper", {"spine_chest", "neck"}},
        {"neck", {"l_shoulder", "r_shoulder"}},
        {"head", {"neck", "nose", "l_ear", "r_ear"}},
        {"nose", {"head"}},
        {"l_eye", {"nose"}},
        {"r_eye", {"nose"}},
        {"l_ear", {"head"}},
        {"r_ear", {"head"}},
        {"l_collar", {"neck", "l_shoulder"}},
        {"r_collar", {"neck", "r_shoulder"}},
        {"l_shoulder", {"l_elbow", "neck"}},
        {"r_shoulder", {"r_elbow", "neck"}},
        {"l_elbow", {"l_shoulder", "l_wrist"}},
        {"r_elbow", {"r_shoulder", "r_wrist"}},
        {"l_wrist", {"l_elbow", "l_hand"}},
        {"r_wrist", {"r_elbow", "r_hand"}},
        {"l_hand", {"l_wrist"}},
        {"r_hand", {"r_wrist"}},
        {"l_hand_tip", {"l_hand", "l_wrist"}},
        {"r_hand_tip", {"r_hand", "r_wrist"}},
        {"l_thumb", {"l_hand", "l_wrist"}},
        {"r_thumb", {"r_hand", "r_wrist"}},
        {"l_hip", {"pelvis"}},
        {"r_hip", {"pelvis"}},
        {"l_knee", {"l_hip", "l_ankle"}},
        {"r_knee", {"r_hip", "r_ankle"}},
        {"l_ankle", {"l_knee"}},
        {"r_ankle", {"r_knee"}},
        {"l_foot", {"l_ankle"}},
        {"r_foot", {"r_ankle"}},
    };
}

// ---- file interfaces ---------------------------------------------------------

std::vector<RawSequence> read_corpus_jsonl(const std::string& path, const FormatRegistry& registry) {
    std::ifstream in(path);
    if (!in) throw SkelError("cannot open corpus: " + path);
    std::vector<RawSequence> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded())
            throw SkelError("corpus " + path + ": invalid JSON on line " + std::to_string(lineno));
        RawSequence seq;
        seq.format_id = rec.at("format_id").get<std::string>();
        const SkeletonFormat& fmt = registry.get(seq.format_id);
        seq.members = rec.at("members").get<size_t>();
        seq.label_ids = rec.at("label_ids").get<std::vector<int>>();
        const json& frames = rec.at("frames");
        seq.frames = frames.size();
        size_t kp = fmt.joint_count();
        size_t cd = static_cast<size_t>(fmt.coord_dims);
        seq.data.resize(seq.frames * kp * seq.members * cd);
        for (size_t t = 0; t < seq.frames; ++t) {
            const json& ft = frames[t];
            if (ft.size() != seq.members)
                throw SkelError("corpus " + path + " line " + std::to_string(lineno) +
                                ": member count mismatch");
            for (size_t m = 0; m < seq.members; ++m) {
                const json& fm = ft[m];
                if (fm.size() != kp)
                    throw SkelError("corpus " + path + " line " + std::to_string(lineno) +
                                    ": joint count mismatch");
                for (size_t j = 0; j < kp; ++j) {
                    const json& fj = fm[j];
                    if (fj.size() != cd)
                        throw SkelError("corpus " + path + " line " + std::to_string(lineno) +
                                        ": coordinate count mismatch");
                    for (size_t c = 0; c < cd; ++c)
                        seq.data[((t * kp + j) * seq.members + m) * cd + c] = fj[c].get<double>();
                }
            }
        }
        out.push_back(std::move(seq));
    }
    return out;
}

void write_corpus_jsonl(const std::string& path, const std::vector<RawSequence>& seqs,
                        const FormatRegistry& registry) {
    std::ofstream out(path);
    if (!out) throw SkelError("cannot open corpus for writing: " + path);
    for (const auto& seq : seqs) {
        const SkeletonFormat& fmt = registry.get(seq.format_id);
        size_t kp = fmt.joint_count();
        size_t cd = static_cast<size_t>(fmt.coord_dims);
        json rec;
        rec["format_id"] = seq.format_id;
        rec["members"] = seq.members;
        rec["label_ids"] = seq.label_ids;
        json frames = json::array();
        for (size_t t = 0; t < seq.frames; ++t) {
            json ft = json::array();
            for (size_t m = 0; m < seq.members; ++m) {
                json fm = json::array();
                for (size_t j = 0; j < kp; ++j) {
                    json fj = json::array();
                    for (size_t c = 0; c < cd; ++c)
                        fj.push_back(seq.data[((t * kp + j) * seq.members + m) * cd + c]);
                    fm.push_back(std::move(fj));
                }
                ft.push_back(std::move(fm));
            }
            frames.push_back(std::move(ft));
        }
        rec["frames"] = std::move(frames);
        out << rec.dump() << "\n";
    }
    if (!out) throw SkelError("corpus write failed: " + path);
}

FormatRegistry read_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SkelError("cannot open format registry: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SkelError("format registry is not valid JSON: " + path);
    const json& list = doc.is_array() ? doc : doc.at("formats");
    FormatRegistry registry;
    for (const auto& f : list) {
        SkeletonFormat fmt;
        fmt.format_id = f.at("format_id").get<std::string>();
        fmt.joints = f.at("joints").get<std::vector<std::string>>();
        fmt.parent_of = f.at("parent_of").get<std::vector<size_t>>();
        fmt.coord_dims = f.at("coord_dims").get<int>();
        fmt.max_members = f.at("max_members").get<size_t>();
        registry.add(std::move(fmt));
    }
    return registry;
}

void write_registry(const std::string& path, const FormatRegistry& registry,
                    const UnifiedSpace* space) {
    json doc;
    json list = json::array();
    for (const auto& f : registry.formats) {
        json jf;
        jf["format_id"] = f.format_id;
        jf["joints"] = f.joints;
        jf["parent_of"] = f.parent_of;
        jf["coord_dims"] = f.coord_dims;
        jf["max_members"] = f.max_members;
        list.push_back(std::move(jf));
    }
    doc["formats"] = std::move(list);
    if (space) {
        doc["unified"] = {{"k_unified", space->k_unified},
                          {"m_unified", space->m_unified},
                          {"slots", space->slot_joint}};
        json maps;
        for (const auto& [fmt_id, slots] : space->slot_of) {
            json m;
            const auto& fmt = registry.get(fmt_id);
            for (size_t j = 0; j < slots.size(); ++j) m[fmt.joints[j]] = slots[j];
            maps[fmt_id] = std::move(m);
        }
        doc["slot_maps"] = std::move(maps);
    }
    std::ofstream out(path);
    if (!out) throw SkelError("cannot open registry for writing: " + path);
    out << doc.dump(2) << "\n";
}

Adjacency read_adjacency(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SkelError("cannot open adjacency file: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw SkelError("adjacency file is not valid JSON: " + path);
    Adjacency adj;
    for (auto it = doc.begin(); it != doc.end(); ++it)
        adj[it.key()] = it.value().get<std::vector<std::string>>();
    return adj;
}

void write_adjacency(const std::string& path, const Adjacency& adj) {
    json doc;
    for (const auto& [name, sources] : adj) doc[name] = sources;
    std::ofstream out(path);
    if (!out) throw SkelError("cannot open adjacency for writing: " + path);
    out << doc.dump(2) << "\n";
}

} // namespace uskel::skel
