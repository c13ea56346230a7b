#include "uskel/labelspace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "uskel/rng.hpp"

namespace uskel::labels {

using nlohmann::json;

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& xs, size_t k,
                                               Rng& rng) {
    std::vector<std::vector<double>> centroids;
    centroids.push_back(xs[rng.below(xs.size())]);
    std::vector<double> d2(xs.size());
    while (centroids.size() < k) {
        double total = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, sq_dist(xs[i], c));
            d2[i] = best;
            total += best;
        }
        size_t pick;
        if (total <= 0.0) {
            pick = rng.below(xs.size());
        } else {
            double r = rng.uniform() * total;
            double acc = 0.0;
            pick = xs.size() - 1;
            for (size_t i = 0; i < xs.size(); ++i) {
                acc += d2[i];
                if (r < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(xs[pick]);
    }
    return centroids;
}

} // namespace

KMeansResult balanced_kmeans(const std::vector<std::vector<double>>& vectors, size_t k,
                             uint64_t seed, size_t max_iter) {
    size_t n = vectors.size();
    if (k == 0) throw LabelSpaceError("balanced_kmeans: k must be positive");
    if (k > n) throw LabelSpaceError("balanced_kmeans: k exceeds the number of points");
    for (const auto& v : vectors) {
        if (v.size() != vectors[0].size()) throw LabelSpaceError("balanced_kmeans: ragged input");
        for (double x : v)
            if (!std::isfinite(x)) throw LabelSpaceError("balanced_kmeans: non-finite input");
    }

    size_t cap_floor = n / k;
    size_t over_quota = n % k; // clusters allowed to reach cap_floor + 1

    Rng rng(derive_seed(seed, "kmeans"));
    KMeansResult res;
    res.k = k;
    res.centroids = kmeanspp_init(vectors, k, rng);
    res.assignment.assign(n, -1);

    struct Cand {
        double d;
        size_t point, cluster;
    };
    std::vector<Cand> cands(n * k);

    for (size_t iter = 0; iter < max_iter; ++iter) {
        res.iterations = iter + 1;
        for (size_t i = 0; i < n; ++i)
            for (size_t c = 0; c < k; ++c)
                cands[i * k + c] = {sq_dist(vectors[i], res.centroids[c]), i, c};
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.d != b.d) return a.d < b.d;
            if (a.point != b.point) return a.point < b.point;
            return a.cluster < b.cluster;
        });

        std::vector<int> next(n, -1);
        std::vector<size_t> size(k, 0);
        size_t assigned = 0, over_used = 0;
        for (const Cand& cd : cands) {
            if (assigned == n) break;
            if (next[cd.point] != -1) continue;
            size_t s = size[cd.cluster];
            if (s >= cap_floor + (over_quota ? 1 : 0)) continue;
            if (s == cap_floor) { // cap_floor -> cap_floor + 1 transition
                if (over_used == over_quota) continue;
                ++over_used;
            }
            next[cd.point] = static_cast<int>(cd.cluster);
            ++size[cd.cluster];
            ++assigned;
        }

        bool changed = next != res.assignment;
        res.assignment = std::move(next);

        for (size_t c = 0; c < k; ++c)
            std::fill(res.centroids[c].begin(), res.centroids[c].end(), 0.0);
        std::vector<size_t> counts(k, 0);
        for (size_t i = 0; i < n; ++i) {
            size_t c = static_cast<size_t>(res.assignment[i]);
            ++counts[c];
            for (size_t d = 0; d < vectors[i].size(); ++d) res.centroids[c][d] += vectors[i][d];
        }
        for (size_t c = 0; c < k; ++c)
            if (counts[c])
                for (double& x : res.centroids[c]) x /= static_cast<double>(counts[c]);

        if (!changed) break;
    }
    return res;
}

ClusteredLabelSpace cluster_bank(const text::LabelBank& bank, size_t k, uint64_t seed,
                                 size_t max_iter) {
    std::vector<int> ids = bank.ids();
    std::vector<std::vector<double>> vecs;
    vecs.reserve(ids.size());
    for (int id : ids) vecs.push_back(bank.vec(id));
    KMeansResult km = balanced_kmeans(vecs, k, seed, max_iter);

    ClusteredLabelSpace out;
    out.k = k;
    out.centroids = km.centroids;
    for (size_t i = 0; i < ids.size(); ++i) out.assignment[ids[i]] = km.assignment[i];
    // Representative: member closest to the centroid, ties to the lowest id.
    std::map<int, std::pair<double, int>> best; // cluster -> (dist, raw id)
    for (size_t i = 0; i < ids.size(); ++i) {
        int c = km.assignment[i];
        double d = sq_dist(vecs[i], km.centroids[static_cast<size_t>(c)]);
        auto it = best.find(c);
        if (it == best.end() || d < it->second.first ||
            (d == it->second.first && ids[i] < it->second.second))
            best[c] = {d, ids[i]};
    }
    for (const auto& [c, pick] : best) out.cluster_names[c] = bank.name(pick.second);
    return out;
}

text::LabelBank clustered_bank(const ClusteredLabelSpace& space, const text::LabelBank& raw) {
    text::LabelBank out;
    out.dim = raw.dim;
    for (size_t c = 0; c < space.k; ++c) {
        auto nm = space.cluster_names.find(static_cast<int>(c));
        out.insert(static_cast<int>(c),
                   nm != space.cluster_names.end() ? nm->second : "cluster-" + std::to_string(c),
                   space.centroids[c]);
    }
    // A cluster is unseen only if every member label is unseen.
    for (size_t c = 0; c < space.k; ++c) {
        bool any_seen = false, any = false;
        for (const auto& [raw_id, cid] : space.assignment) {
            if (cid != static_cast<int>(c)) continue;
            any = true;
            if (!raw.is_unseen(raw_id)) any_seen = true;
        }
        if (any && !any_seen)
            out.unseen.insert(static_cast<int>(c));
        else
            out.seen.insert(static_cast<int>(c));
    }
    return out;
}

const char* stratum_name(Stratum s) {
    switch (s) {
    case Stratum::many: return "many";
    case Stratum::medium: return "medium";
    case Stratum::few: return "few";
    }
    return "few";
}

SplitSpec stratified_split(const std::vector<SampleRef>& samples, double frac, uint64_t seed) {
    if (samples.empty()) throw LabelSpaceError("stratified_split: empty corpus");
    if (frac <= 0.0 || frac >= 1.0) throw LabelSpaceError("stratified_split: frac must be in (0,1)");
    std::map<int, std::vector<size_t>> by_primary;
    for (size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].cluster_ids.empty())
            throw LabelSpaceError("stratified_split: sample '" + samples[i].sample_id +
                                  "' has no cluster ids");
        int primary = *std::min_element(samples[i].cluster_ids.begin(), samples[i].cluster_ids.end());
        by_primary[primary].push_back(i);
    }
    Rng rng(derive_seed(seed, "split"));
    SplitSpec out;
    for (auto& [cluster, idxs] : by_primary) {
        rng.shuffle(idxs);
        size_t n = idxs.size();
        size_t n_train = n == 1 ? 1 : static_cast<size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
        for (size_t i = 0; i < n; ++i)
            (i < n_train ? out.train_ids : out.test_ids).push_back(samples[idxs[i]].sample_id);
    }
    std::sort(out.train_ids.begin(), out.train_ids.end());
    std::sort(out.test_ids.begin(), out.test_ids.end());
    return out;
}

std::map<int, Stratum> stratify_frequency(const std::map<int, size_t>& counts) {
    std::vector<std::pair<int, size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    size_t k = order.size();
    size_t n_many = static_cast<size_t>(std::ceil(0.10 * static_cast<double>(k) - 1e-9));
    size_t n_medium = static_cast<size_t>(std::ceil(0.30 * static_cast<double>(k) - 1e-9));
    std::map<int, Stratum> strata;
    for (size_t i = 0; i < k; ++i) {
        Stratum s = i < n_many ? Stratum::many : (i < n_many + n_medium ? Stratum::medium : Stratum::few);
        strata[order[i].first] = s;
    }
    return strata;
}

// ---- file interfaces ---------------------------------------------------------

void write_cluster_map(const std::string& path, const ClusteredLabelSpace& space,
                       const text::LabelBank& clustered) {
    json doc;
    doc["k"] = space.k;
    json assign;
    for (const auto& [raw_id, cid] : space.assignment) assign[std::to_string(raw_id)] = cid;
    doc["assignment"] = std::move(assign);
    doc["centroids"] = space.centroids;
    json names;
    for (const auto& [cid, name] : space.cluster_names) names[std::to_string(cid)] = name;
    doc["cluster_names"] = std::move(names);
    json bank;
    bank["dim"] = clustered.dim;
    json labels = json::array();
    for (const auto& [id, entry] : clustered.entries)
        labels.push_back({{"id", id}, {"name", entry.name}, {"vector", entry.vec}});
    bank["labels"] = std::move(labels);
    bank["seen"] = clustered.seen;
    bank["unseen"] = clustered.unseen;
    doc["clustered_bank"] = std::move(bank);
    std::ofstream out(path);
    if (!out) throw LabelSpaceError("cannot open cluster map for writing: " + path);
    out << doc.dump() << "\n";
}

ClusteredLabelSpace read_cluster_map(const std::string& path, text::LabelBank* clustered_out) {
    std::ifstream in(path);
    if (!in) throw LabelSpaceError("cannot open cluster map: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw LabelSpaceError("cluster map is not valid JSON: " + path);
    ClusteredLabelSpace space;
    space.k = doc.at("k").get<size_t>();
    for (auto it = doc.at("assignment").begin(); it != doc.at("assignment").end(); ++it)
        space.assignment[std::stoi(it.key())] = it.value().get<int>();
    space.centroids = doc.at("centroids").get<std::vector<std::vector<double>>>();
    for (auto it = doc.at("cluster_names").begin(); it != doc.at("cluster_names").end(); ++it)
        space.cluster_names[std::stoi(it.key())] = it.value().get<std::string>();
    if (clustered_out && doc.contains("clustered_bank")) {
        const json& bank = doc["clustered_bank"];
        clustered_out->dim = bank.at("dim").get<size_t>();
        for (const auto& l : bank.at("labels"))
            clustered_out->insert(l.at("id").get<int>(), l.at("name").get<std::string>(),
                                  l.at("vector").get<std::vector<double>>());
        for (int id : bank.at("seen")) clustered_out->seen.insert(id);
        for (int id : bank.at("unseen")) clustered_out->unseen.insert(id);
    }
    return space;
}

std::vector<SampleRef> read_sample_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LabelSpaceError("cannot open sample manifest: " + path);
    std::vector<SampleRef> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded()) throw LabelSpaceError("sample manifest has invalid JSON: " + path);
        SampleRef s;
        s.sample_id = rec.at("sample_id").get<std::string>();
        s.cluster_ids = rec.at("label_ids").get<std::vector<int>>();
        out.push_back(std::move(s));
    }
    return out;
}

void write_split(const std::string& path, const SplitSpec& split) {
    json doc;
    doc["train_ids"] = split.train_ids;
    doc["test_ids"] = split.test_ids;
    json strata;
    for (const auto& [cid, s] : split.strata) strata[std::to_string(cid)] = stratum_name(s);
    doc["strata"] = std::move(strata);
    std::ofstream out(path);
    if (!out) throw LabelSpaceError("cannot open split for writing: " + path);
    out << doc.dump() << "\n";
}

SplitSpec read_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LabelSpaceError("cannot open split: " + path);
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw LabelSpaceError("split is not valid JSON: " + path);
    SplitSpec split;
    split.train_ids = doc.at("train_ids").get<std::vector<std::string>>();
    split.test_ids = doc.at("test_ids").get<std::vector<std::string>>();
    if (doc.contains("strata")) {
        for (auto it = doc["strata"].begin(); it != doc["strata"].end(); ++it) {
            std::string name = it.value().get<std::string>();
            Stratum s = name == "many" ? Stratum::many : (name == "medium" ? Stratum::medium : Stratum::few);
            split.strata[std::stoi(it.key())] = s;
        }
    }
    return split;
}

} // namespace uskel::labels
