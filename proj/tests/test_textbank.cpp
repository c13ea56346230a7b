#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "uskel/loss.hpp"
#include "uskel/textbank.hpp"

using namespace uskel;
using namespace uskel::text;

TEST_CASE("load_bank normalizes vectors and keeps pre-normalized ones") {
    std::ofstream out("bank_test.json");
    out << R"({"dim":4,"labels":[
        {"id":0,"name":"walk","vector":[1,0,0,0]},
        {"id":1,"name":"run","vector":[3,4,0,0]}],
        "seen":[0,1],"unseen":[]})";
    out.close();
    LabelBank bank = load_bank("bank_test.json");
    CHECK(bank.dim == 4);
    CHECK(bank.vec(0)[0] == doctest::Approx(1.0));
    CHECK(bank.vec(1)[0] == doctest::Approx(0.6));
    CHECK(bank.vec(1)[1] == doctest::Approx(0.8));
    std::remove("bank_test.json");
}

TEST_CASE("load_bank rejects duplicates, zero vectors and dim mismatches") {
    {
        std::ofstream out("bank_bad.json");
        out << R"({"dim":2,"labels":[{"id":0,"name":"a","vector":[1,0]},{"id":0,"name":"b","vector":[0,1]}]})";
    }
    CHECK_THROWS_AS(load_bank("bank_bad.json"), BankError);
    {
        std::ofstream out("bank_bad.json");
        out << R"({"dim":2,"labels":[{"id":0,"name":"a","vector":[0,0]}]})";
    }
    CHECK_THROWS_AS(load_bank("bank_bad.json"), BankError);
    {
        std::ofstream out("bank_bad.json");
        out << R"({"dim":3,"labels":[{"id":0,"name":"a","vector":[1,0]}]})";
    }
    CHECK_THROWS_AS(load_bank("bank_bad.json"), BankError);
    std::remove("bank_bad.json");
}

TEST_CASE("synth_bank is deterministic and unit-norm") {
    std::vector<std::pair<int, std::string>> names = {{0, "jump high"}, {1, "sit down"}};
    LabelBank a = synth_bank(names, 32, 99);
    LabelBank b = synth_bank(names, 32, 99);
    CHECK(a.vec(0) == b.vec(0)); // bit-stable
    CHECK(a.vec(1) == b.vec(1));
    for (int id : {0, 1}) {
        double n = 0.0;
        for (double x : a.vec(id)) n += x * x;
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-9);
    }
    CHECK_THROWS_AS(synth_bank({{0, "x"}, {1, "x"}}, 32, 1), BankError);
    CHECK_THROWS_AS(synth_bank(names, 4, 1), BankError);
    CHECK(synth_bank({{5, "solo"}}, 16, 3).entries.size() == 1);
}

TEST_CASE("shared word tokens pull names together (95 of 100 seeds)") {
    size_t wins = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        LabelBank bank = synth_bank({{0, "jump high"}, {1, "jump far"}, {2, "sit down"}}, 512, seed);
        double related = loss::cosine(bank.vec(0), bank.vec(1));
        double unrelated = loss::cosine(bank.vec(0), bank.vec(2));
        if (related > unrelated) ++wins;
    }
    CHECK(wins >= 95);
}

TEST_CASE("bank save/load round-trip preserves seen and unseen sets") {
    LabelBank bank = synth_bank({{0, "walk"}, {1, "jump"}, {2, "kick"}}, 16, 5);
    bank.seen.erase(2);
    bank.unseen.insert(2);
    save_bank(bank, "bank_rt.json");
    LabelBank loaded = load_bank("bank_rt.json");
    CHECK(loaded.unseen.count(2) == 1);
    CHECK(loaded.seen.count(0) == 1);
    CHECK(loaded.vec(1) == bank.vec(1));
    std::remove("bank_rt.json");
}
