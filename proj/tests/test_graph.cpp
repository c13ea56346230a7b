#include "doctest.h"

#include <cmath>

#include "uskel/gradcheck.hpp"
#include "uskel/graph.hpp"
#include "uskel/params.hpp"
#include "uskel/rng.hpp"

using namespace uskel;
using namespace uskel::num;

namespace {

Array random_array(Shape shape, Rng& rng, double scale = 1.0) {
    Array a(std::move(shape));
    for (double& x : a.v) x = scale * rng.normal();
    return a;
}

// Runs grad_check over a single-parameter scalar function.
double check_unary(const Shape& shape, const std::function<Node(Node)>& fn, uint64_t seed,
                   double step = 1e-5) {
    ParamStore store(seed);
    Rng rng(seed);
    store.get_or_create("x", shape, Init::zeros) = random_array(shape, rng);
    auto build = [&](GraphCtx& ctx) {
        Node x = ctx.param("x", shape, Init::zeros);
        return sum_all(fn(x));
    };
    return grad_check(build, store, step).max_rel_err;
}

} // namespace

TEST_CASE("softmax of an all-equal vector is uniform") {
    Tape tape;
    Node x = tape.constant(Array({4}, {3.0, 3.0, 3.0, 3.0}));
    Node y = softmax_last(x);
    for (size_t i = 0; i < 4; ++i) CHECK(y.val()[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("max pool over rows picks column maxima") {
    Tape tape;
    Node x = tape.constant(Array({2, 2}, {1.0, 5.0, 3.0, 2.0}));
    Node y = max_over_axis(x, 0);
    CHECK(y.val()[0] == 3.0);
    CHECK(y.val()[1] == 5.0);
}

TEST_CASE("matmul with the identity is the identity") {
    Tape tape;
    Node eye = tape.constant(Array({2, 2}, {1.0, 0.0, 0.0, 1.0}));
    Node a = tape.constant(Array({2, 2}, {3.0, -1.0, 2.5, 7.0}));
    Node y = matmul(eye, a);
    for (size_t i = 0; i < 4; ++i) CHECK(y.val()[i] == a.val()[i]);
}

TEST_CASE("max pool backward routes gradient to the lowest-index argmax on ties") {
    Tape tape;
    Node x = tape.leaf(Array({4}, {2.0, 7.0, 7.0, 1.0}), true);
    Node y = max_over_axis(x, 0);
    Node s = sum_all(y);
    tape.backward(s);
    CHECK(x.grad()[0] == 0.0);
    CHECK(x.grad()[1] == 1.0); // tie: index 1 wins over index 2
    CHECK(x.grad()[2] == 0.0);
    CHECK(x.grad()[3] == 0.0);
}

TEST_CASE("l2 normalization yields unit rows and orthogonal gradients") {
    Tape tape;
    Rng rng(11);
    Array a = random_array({5, 8}, rng);
    Node x = tape.leaf(a, true);
    Node y = l2norm_last(x);
    for (size_t r = 0; r < 5; ++r) {
        double n = 0.0;
        for (size_t j = 0; j < 8; ++j) n += y.val()[r * 8 + j] * y.val()[r * 8 + j];
        CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
    }
    // d/dx of any function of y has no component along x (scale invariance).
    Node s = sum_all(mul(y, tape.constant(random_array({5, 8}, rng))));
    tape.backward(s);
    for (size_t r = 0; r < 5; ++r) {
        double dot = 0.0;
        for (size_t j = 0; j < 8; ++j) dot += x.grad()[r * 8 + j] * x.val()[r * 8 + j];
        CHECK(std::abs(dot) <= 1e-10);
    }
    CHECK_THROWS_AS((void)l2norm_last(tape.constant(Array({1, 3}))), GraphError);
}

TEST_CASE("non-finite results are rejected") {
    Tape tape;
    Node x = tape.constant(Array({2}, {800.0, 1.0}));
    CHECK_THROWS_AS((void)exp_(x), GraphError); // overflow to inf
    Node z = tape.constant(Array({2}, {-1.0, 1.0}));
    CHECK_THROWS_AS((void)log_(z), GraphError); // nan
}

TEST_CASE("backward visits each node once (diamond graph)") {
    Tape tape;
    Node x = tape.leaf(Array({1}, {3.0}), true);
    Node a = scale(x, 2.0);
    Node b = scale(x, 5.0);
    Node y = add(a, b); // y = 7x
    tape.backward(y);
    CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("quadratic analytic gradient matches finite differences") {
    ParamStore store(1);
    store.get_or_create("x", {2}, Init::zeros) = Array({2}, {1.0, 2.0});
    auto build = [](GraphCtx& ctx) {
        Node x = ctx.param("x", {2}, Init::zeros);
        return sum_all(mul(x, x));
    };
    Tape tape;
    GraphCtx ctx{tape, store, true};
    Node loss = build(ctx);
    tape.backward(loss);
    CHECK(tape.rec(ctx.bound[0].node_id).grad[0] == doctest::Approx(2.0));
    CHECK(tape.rec(ctx.bound[0].node_id).grad[1] == doctest::Approx(4.0));
    CHECK(grad_check(build, store, 1e-5).max_rel_err < 1e-9);
}

TEST_CASE("every primitive passes grad_check on random shapes") {
    uint64_t seed = 20260808;
    CHECK(check_unary({3, 4}, [](Node x) { return gelu(x); }, seed) < 1e-6);
    CHECK(check_unary({3, 4}, [](Node x) { return exp_(x); }, seed + 1) < 1e-6);
    CHECK(check_unary({6}, [](Node x) { return softmax_last(x); }, seed + 2) < 1e-6);
    CHECK(check_unary({2, 5}, [](Node x) { return l2norm_last(x); }, seed + 3) < 1e-6);
    CHECK(check_unary({4, 3}, [](Node x) { return transpose(x, 0, 1); }, seed + 4) < 1e-6);
    CHECK(check_unary({2, 3, 2}, [](Node x) { return max_over_axis(x, 1); }, seed + 5) < 1e-6);
    CHECK(check_unary({2, 6}, [](Node x) { return slice(x, 1, 2, 3); }, seed + 6) < 1e-6);
    CHECK(check_unary({5, 2}, [](Node x) { return index_select(x, 0, {4, 0, 0, 2}); }, seed + 7) < 1e-6);
    CHECK(check_unary({3, 4}, [](Node x) { return reshape(x, {2, 6}); }, seed + 8) < 1e-6);
    CHECK(check_unary({7}, [](Node x) { return tile_rows(x, 3); }, seed + 9) < 1e-6);
    CHECK(check_unary({4}, [](Node x) { return mean_all(mul(x, x)); }, seed + 10) < 1e-6);
    CHECK(check_unary({3, 5}, [](Node x) { return sum_last(gelu(x)); }, seed + 11) < 1e-6);
    // relu away from the kink
    CHECK(check_unary({4, 4}, [](Node x) { return relu(add_const(x, 3.0)); }, seed + 12) < 1e-6);

    // log over positive inputs
    ParamStore store(seed + 13);
    Rng rng(seed + 13);
    Array pos({3, 3});
    for (double& x : pos.v) x = 0.5 + rng.uniform();
    store.get_or_create("x", {3, 3}, Init::zeros) = pos;
    auto build_log = [](GraphCtx& ctx) {
        return sum_all(log_(ctx.param("x", {3, 3}, Init::zeros)));
    };
    CHECK(grad_check(build_log, store, 1e-6).max_rel_err < 1e-6);
}

TEST_CASE("binary primitives pass grad_check") {
    uint64_t seed = 77;
    Rng rng(seed);
    ParamStore store(seed);
    store.get_or_create("a", {3, 4}, Init::zeros) = random_array({3, 4}, rng);
    store.get_or_create("b", {3, 4}, Init::zeros) = random_array({3, 4}, rng);
    store.get_or_create("w", {4, 2}, Init::zeros) = random_array({4, 2}, rng);
    store.get_or_create("bias", {2}, Init::zeros) = random_array({2}, rng);
    store.get_or_create("g", {4}, Init::zeros) = random_array({4}, rng, 0.5);
    store.get_or_create("s", {1}, Init::zeros) = Array({1}, {0.7});

    auto build = [](GraphCtx& ctx) {
        Node a = ctx.param("a", {3, 4}, Init::zeros);
        Node b = ctx.param("b", {3, 4}, Init::zeros);
        Node w = ctx.param("w", {4, 2}, Init::zeros);
        Node bias = ctx.param("bias", {2}, Init::zeros);
        Node g = ctx.param("g", {4}, Init::zeros);
        Node s = ctx.param("s", {1}, Init::zeros);
        Node t = layer_norm(add(mul(a, s), b), g, bias.tape->constant(Array({4}, 0.0)), 1e-5);
        Node u = add_bias(matmul(sub(t, b), w), bias);
        Node c = concat({u, scale(u, -0.5)}, 1);
        return mean_all(mul(c, c));
    };
    CHECK(grad_check(build, store, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("batched matmul with broadcast weight passes grad_check") {
    Rng rng(5);
    ParamStore store(5);
    store.get_or_create("x", {2, 3, 4}, Init::zeros) = random_array({2, 3, 4}, rng);
    store.get_or_create("w", {4, 3}, Init::zeros) = random_array({4, 3}, rng);
    auto build = [](GraphCtx& ctx) {
        Node x = ctx.param("x", {2, 3, 4}, Init::zeros);
        Node w = ctx.param("w", {4, 3}, Init::zeros);
        Node y = matmul(x, w);                       // [2,3,3]
        Node z = matmul(y, transpose(y, 1, 2));      // batched both sides
        return sum_all(softmax_last(z));
    };
    CHECK(grad_check(build, store, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("checkpoint round-trips parameter stores byte-exactly") {
    Rng rng(9);
    ParamStore store(9);
    store.get_or_create("w.first", {3, 4}, Init::zeros) = random_array({3, 4}, rng);
    store.get_or_create("w.second", {7}, Init::zeros) = random_array({7}, rng);
    std::string path = "ckpt_roundtrip.bin";
    save_checkpoint(store, path);
    ParamStore loaded(1234);
    load_checkpoint(loaded, path);
    REQUIRE(loaded.items().size() == 2);
    CHECK(loaded.items()[0].first == "w.first");
    for (size_t i = 0; i < 12; ++i) CHECK(loaded.at("w.first")[i] == store.at("w.first")[i]);
    for (size_t i = 0; i < 7; ++i) CHECK(loaded.at("w.second")[i] == store.at("w.second")[i]);
    std::remove(path.c_str());
}
