#include "uskel/loss.hpp"

#include <algorithm>
#include <cmath>

namespace uskel::loss {

using namespace uskel::num;

void LossWeights::validate() const {
    if (tau <= 0.0) throw LossError("temperature must be positive");
    if (lambda_ts < 0.0 || lambda_consis < 0.0 || lambda_part < 0.0)
        throw LossError("loss weights must be non-negative");
}

double cosine(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw LossError("cosine: dimension mismatch");
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        dot += x[i] * y[i];
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    if (nx == 0.0 || ny == 0.0) throw LossError("cosine: zero-norm input");
    return std::clamp(dot / (std::sqrt(nx) * std::sqrt(ny)), -1.0, 1.0);
}

double info_nce(const std::vector<std::vector<double>>& xs,
                const std::vector<std::vector<double>>& ys, size_t i, double tau) {
    if (xs.size() != ys.size() || xs.empty()) throw LossError("info_nce: batch mismatch");
    if (i >= xs.size()) throw LossError("info_nce: index out of range");
    if (tau <= 0.0) throw LossError("info_nce: temperature must be positive");
    double pos = std::exp(cosine(xs[i], ys[i]) / tau);
    double denom = pos;
    for (size_t k = 0; k < xs.size(); ++k) {
        if (k == i) continue;
        denom += std::exp(cosine(xs[i], ys[k]) / tau);
        denom += std::exp(cosine(xs[i], xs[k]) / tau);
    }
    return -std::log(pos / denom);
}

double symm_loss(const std::vector<std::vector<double>>& xs,
                 const std::vector<std::vector<double>>& ys, double tau) {
    if (xs.size() != ys.size() || xs.empty()) throw LossError("symm_loss: batch mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) acc += info_nce(xs, ys, i, tau) + info_nce(ys, xs, i, tau);
    return acc / (2.0 * static_cast<double>(xs.size()));
}

namespace {

bool share_label(const std::vector<int>& a, const std::vector<int>& b) {
    for (int x : a)
        if (std::find(b.begin(), b.end(), x) != b.end()) return true;
    return false;
}

// Negative-pair mask: 1 where k may act as a negative for i.
Array negative_mask(size_t n, const std::vector<std::vector<int>>* labels, bool mask_false_neg) {
    Array m({n, n}, 1.0);
    for (size_t i = 0; i < n; ++i) m[i * n + i] = 0.0;
    if (mask_false_neg && labels) {
        for (size_t i = 0; i < n; ++i)
            for (size_t k = 0; k < n; ++k)
                if (i != k && share_label((*labels)[i], (*labels)[k])) m[i * n + k] = 0.0;
    }
    return m;
}

// One direction of the contrastive objective over the whole batch, [N] row losses.
Node info_nce_rows(Node sim_xy, Node sim_xx, double tau, const Array& neg_mask, Tape& tape) {
    size_t n = sim_xy.shape()[0];
    Array eye({n, n});
    for (size_t i = 0; i < n; ++i) eye[i * n + i] = 1.0;
    Node eye_n = tape.constant(eye);
    Node mask_n = tape.constant(neg_mask);

    Node p = exp_(scale(sim_xy, 1.0 / tau));
    Node q = exp_(scale(sim_xx, 1.0 / tau));
    Node denom = sum_last(add(mul(p, eye_n), add(mul(p, mask_n), mul(q, mask_n)))); // [N]
    Node diag = sum_last(mul(sim_xy, eye_n));                                       // [N]
    return sub(log_(denom), scale(diag, 1.0 / tau));
}

} // namespace

Node symm_loss_node(Node x, Node y, double tau, const std::vector<std::vector<int>>* labels,
                    bool mask_false_negatives) {
    if (x.shape() != y.shape()) throw LossError("symm_loss: shape mismatch");
    if (x.shape().size() != 2) throw LossError("symm_loss: inputs must be [N, D]");
    if (tau <= 0.0) throw LossError("symm_loss: temperature must be positive");
    size_t n = x.shape()[0];
    Tape& tape = *x.tape;

    Node xn = l2norm_last(x);
    Node yn = l2norm_last(y);
    Node s_xy = matmul(xn, transpose(yn, 0, 1));
    Node s_xx = matmul(xn, transpose(xn, 0, 1));
    Node s_yy = matmul(yn, transpose(yn, 0, 1));
    Node s_yx = transpose(s_xy, 0, 1);

    Array neg = negative_mask(n, labels, mask_false_negatives);
    Node fwd = info_nce_rows(s_xy, s_xx, tau, neg, tape);
    Node bwd = info_nce_rows(s_yx, s_yy, tau, neg, tape);
    return scale(add(mean_all(fwd), mean_all(bwd)), 0.5);
}

LossComponents total_loss(const enc::FeatureBundle& bundle, Node label_embeddings,
                          const LossWeights& w, const std::vector<std::vector<int>>* labels) {
    w.validate();
    if (bundle.v.shape() != label_embeddings.shape())
        throw LossError("total_loss: label embedding shape must match projected features");
    Node a = label_embeddings;
    bool fn = w.mask_false_negatives;

    LossComponents out;
    out.instance = symm_loss_node(bundle.v, a, w.tau, labels, fn);
    out.ts = scale(add(symm_loss_node(bundle.v_t, a, w.tau, labels, fn),
                       symm_loss_node(bundle.v_s, a, w.tau, labels, fn)),
                   0.5);
    out.consis = symm_loss_node(bundle.v_t, bundle.v_s, w.tau, labels, fn);

    if (!bundle.has_locals) throw LossError("total_loss: feature bundle is missing FGA locals");
    size_t n_seg = bundle.v_t_local.shape()[1];
    size_t n_part = bundle.v_s_local.shape()[1];
    size_t n = bundle.v.shape()[0];
    size_t da = bundle.v.shape()[1];
    Node seg_acc, part_acc;
    for (size_t j = 0; j < n_seg; ++j) {
        Node vj = reshape(slice(bundle.v_t_local, 1, j, 1), {n, da});
        Node l = symm_loss_node(vj, a, w.tau, labels, fn);
        seg_acc = j == 0 ? l : add(seg_acc, l);
    }
    for (size_t k = 0; k < n_part; ++k) {
        Node vk = reshape(slice(bundle.v_s_local, 1, k, 1), {n, da});
        Node l = symm_loss_node(vk, a, w.tau, labels, fn);
        part_acc = k == 0 ? l : add(part_acc, l);
    }
    out.part = scale(add(scale(seg_acc, 1.0 / static_cast<double>(n_seg)),
                         scale(part_acc, 1.0 / static_cast<double>(n_part))),
                     0.5);

    out.total = add(add(out.instance, scale(out.ts, w.lambda_ts)),
                    add(scale(out.consis, w.lambda_consis), scale(out.part, w.lambda_part)));
    return out;
}

} // namespace uskel::loss
