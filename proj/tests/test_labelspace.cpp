#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "uskel/labelspace.hpp"
#include "uskel/rng.hpp"
#include "uskel/textbank.hpp"

using namespace uskel;
using namespace uskel::labels;

namespace {

double partition_cost(const std::vector<std::vector<double>>& xs, const std::vector<int>& assign,
                      size_t k) {
    double cost = 0.0;
    for (size_t c = 0; c < k; ++c) {
        std::vector<double> centroid(xs[0].size(), 0.0);
        size_t count = 0;
        for (size_t i = 0; i < xs.size(); ++i)
            if (assign[i] == static_cast<int>(c)) {
                ++count;
                for (size_t d = 0; d < centroid.size(); ++d) centroid[d] += xs[i][d];
            }
        for (double& x : centroid) x /= static_cast<double>(count);
        for (size_t i = 0; i < xs.size(); ++i)
            if (assign[i] == static_cast<int>(c))
                for (size_t d = 0; d < centroid.size(); ++d) {
                    double diff = xs[i][d] - centroid[d];
                    cost += diff * diff;
                }
    }
    return cost;
}

} // namespace

TEST_CASE("balanced kmeans: k equals n gives singleton clusters at zero cost") {
    std::vector<std::vector<double>> xs = {{0, 0}, {1, 0}, {5, 5}, {9, 1}};
    KMeansResult r = balanced_kmeans(xs, 4, 3, 50);
    std::vector<int> seen(4, 0);
    for (int c : r.assignment) ++seen[static_cast<size_t>(c)];
    for (int s : seen) CHECK(s == 1);
    CHECK(partition_cost(xs, r.assignment, 4) == doctest::Approx(0.0));
}

TEST_CASE("balanced kmeans: k=1 centroid is the mean") {
    std::vector<std::vector<double>> xs = {{0, 0}, {2, 0}, {0, 4}, {2, 4}};
    KMeansResult r = balanced_kmeans(xs, 1, 7, 10);
    CHECK(r.centroids[0][0] == doctest::Approx(1.0));
    CHECK(r.centroids[0][1] == doctest::Approx(2.0));
}

TEST_CASE("balanced kmeans: unit-square corners match the brute-force balanced optimum") {
    // All three balanced 2-partitions of the 4 corners, scored by within-cluster
    // squared distance: the diagonal pairing costs 2.0, the other two cost 1.0.
    std::vector<std::vector<double>> xs = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<int>> partitions = {
        {0, 0, 1, 1}, {0, 1, 0, 1}, {0, 1, 1, 0}};
    for (const auto& p : partitions) best = std::min(best, partition_cost(xs, p, 2));
    for (uint64_t seed = 0; seed < 5; ++seed) {
        KMeansResult r = balanced_kmeans(xs, 2, seed, 50);
        CHECK(partition_cost(xs, r.assignment, 2) == doctest::Approx(best));
    }
}

TEST_CASE("balanced kmeans: errors on k out of range") {
    std::vector<std::vector<double>> xs = {{0.0}, {1.0}};
    CHECK_THROWS_AS(balanced_kmeans(xs, 3, 1, 10), LabelSpaceError);
    CHECK_THROWS_AS(balanced_kmeans(xs, 0, 1, 10), LabelSpaceError);
}

TEST_CASE("property: cluster sizes differ by at most one, deterministically") {
    Rng rng(1001);
    for (int trial = 0; trial < 10; ++trial) {
        size_t n = 5 + rng.below(40);
        size_t k = 1 + rng.below(std::min<size_t>(n, 9));
        std::vector<std::vector<double>> xs(n, std::vector<double>(3));
        for (auto& x : xs)
            for (double& v : x) v = rng.normal();
        KMeansResult a = balanced_kmeans(xs, k, 55, 60);
        KMeansResult b = balanced_kmeans(xs, k, 55, 60);
        CHECK(a.assignment == b.assignment); // same seed, same result
        std::vector<size_t> sizes(k, 0);
        for (int c : a.assignment) ++sizes[static_cast<size_t>(c)];
        size_t lo = *std::min_element(sizes.begin(), sizes.end());
        size_t hi = *std::max_element(sizes.begin(), sizes.end());
        CHECK(hi - lo <= 1);
    }
}

TEST_CASE("stratified split arithmetic") {
    std::vector<SampleRef> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({"a" + std::to_string(i), {0}});
    for (int i = 0; i < 20; ++i) samples.push_back({"b" + std::to_string(i), {1}});
    SplitSpec split = stratified_split(samples, 0.70, 5);
    size_t train_a = 0, train_b = 0;
    for (const auto& id : split.train_ids) (id[0] == 'a' ? train_a : train_b) += 1;
    CHECK(train_a == 7);
    CHECK(train_b == 14);
    CHECK(split.train_ids.size() + split.test_ids.size() == samples.size());
    // disjoint
    for (const auto& id : split.test_ids)
        CHECK(std::find(split.train_ids.begin(), split.train_ids.end(), id) == split.train_ids.end());
}

TEST_CASE("singleton classes go to train") {
    std::vector<SampleRef> samples = {{"only", {3}}, {"x1", {1}}, {"x2", {1}}};
    SplitSpec split = stratified_split(samples, 0.70, 1);
    CHECK(std::find(split.train_ids.begin(), split.train_ids.end(), "only") != split.train_ids.end());
}

TEST_CASE("multi-label samples stratify under their lowest cluster id") {
    std::vector<SampleRef> samples;
    for (int i = 0; i < 10; ++i) samples.push_back({"m" + std::to_string(i), {7, 2}});
    SplitSpec split = stratified_split(samples, 0.70, 9);
    CHECK(split.train_ids.size() == 7); // one group, keyed by cluster 2
}

TEST_CASE("stratify_frequency: 10/30/60 percentages at k=400 and the k=10 rule") {
    std::map<int, size_t> counts;
    for (int c = 0; c < 400; ++c) counts[c] = 10; // all equal: id tie-break
    auto strata = stratify_frequency(counts);
    size_t many = 0, medium = 0, few = 0;
    for (const auto& [cid, s] : strata) {
        if (s == Stratum::many) ++many;
        else if (s == Stratum::medium) ++medium;
        else ++few;
    }
    CHECK(many == 40);
    CHECK(medium == 120);
    CHECK(few == 240);
    // equal counts: the lowest ids take the head stratum
    CHECK(strata.at(0) == Stratum::many);
    CHECK(strata.at(39) == Stratum::many);
    CHECK(strata.at(40) == Stratum::medium);

    std::map<int, size_t> ten;
    for (int c = 0; c < 10; ++c) ten[c] = static_cast<size_t>(100 - c);
    auto s10 = stratify_frequency(ten);
    CHECK(s10.at(0) == Stratum::many);
    CHECK(s10.at(1) == Stratum::medium);
    CHECK(s10.at(3) == Stratum::medium);
    CHECK(s10.at(4) == Stratum::few);
    CHECK(s10.at(9) == Stratum::few);
}

TEST_CASE("cluster_bank produces representatives and a normalized clustered bank") {
    text::LabelBank bank = text::synth_bank(
        {{0, "walk fast"}, {1, "walk slow"}, {2, "jump high"}, {3, "jump far"}}, 64, 11);
    ClusteredLabelSpace space = cluster_bank(bank, 2, 4, 50);
    CHECK(space.assignment.size() == 4);
    text::LabelBank cb = clustered_bank(space, bank);
    CHECK(cb.entries.size() == 2);
    for (const auto& [id, e] : cb.entries) {
        double n = 0.0;
        for (double x : e.vec) n += x * x;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
    }
}

TEST_CASE("split and cluster-map files round-trip") {
    std::vector<SampleRef> samples;
    for (int i = 0; i < 12; ++i) samples.push_back({std::to_string(i), {i % 3}});
    SplitSpec split = stratified_split(samples, 0.70, 3);
    std::map<int, size_t> counts = {{0, 9}, {1, 2}, {2, 1}};
    split.strata = stratify_frequency(counts);
    write_split("split_rt.json", split);
    SplitSpec loaded = read_split("split_rt.json");
    CHECK(loaded.train_ids == split.train_ids);
    CHECK(loaded.test_ids == split.test_ids);
    CHECK(loaded.strata.at(0) == Stratum::many);
    std::remove("split_rt.json");

    text::LabelBank bank = text::synth_bank({{0, "a b"}, {1, "b c"}, {2, "c d"}}, 16, 2);
    ClusteredLabelSpace space = cluster_bank(bank, 3, 9, 20);
    write_cluster_map("cm_rt.json", space, clustered_bank(space, bank));
    text::LabelBank cb;
    ClusteredLabelSpace rt = read_cluster_map("cm_rt.json", &cb);
    CHECK(rt.assignment == space.assignment);
    CHECK(cb.entries.size() == 3);
    std::remove("cm_rt.json");
}
