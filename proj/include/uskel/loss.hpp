#pragma once

#include <vector>

#include "uskel/encoder.hpp"
#include "uskel/params.hpp"

namespace uskel::loss {

struct LossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LossWeights {
    double tau = 0.4;
    double lambda_ts = 1.0;
    double lambda_consis = 0.2;
    double lambda_part = 0.5;
    bool mask_false_negatives = false; // off: samples sharing a label still repel
    void validate() const;
};

// ---- scalar reference ops ----------------------------------------------------

double cosine(const std::vector<double>& x, const std::vector<double>& y);

// Contrastive term for row i: the denominator aggregates the positive pair,
// inter-modal negatives y_k and intra-modal negatives x_k (k != i).
double info_nce(const std::vector<std::vector<double>>& xs,
                const std::vector<std::vector<double>>& ys, size_t i, double tau);

// (1/2N) sum_i [ L_C(x_i, y_i) + L_C(y_i, x_i) ]; symmetric in its arguments.
double symm_loss(const std::vector<std::vector<double>>& xs,
                 const std::vector<std::vector<double>>& ys, double tau);

// ---- graph ops (training path) -----------------------------------------------

// Same objective over tape nodes; x, y are [N, D].
// `labels` enables false-negative masking when the weights ask for it.
num::Node symm_loss_node(num::Node x, num::Node y, double tau,
                         const std::vector<std::vector<int>>* labels = nullptr,
                         bool mask_false_negatives = false);

struct LossComponents {
    num::Node total, instance, ts, consis, part;
    double value(const num::Node& n) const { return n.val()[0]; }
};

// L_total = L_instance + l_ts * L_ts + l_consis * L_consis + l_part * L_part.
LossComponents total_loss(const enc::FeatureBundle& bundle, num::Node label_embeddings,
                          const LossWeights& w,
                          const std::vector<std::vector<int>>* labels = nullptr);

} // namespace uskel::loss
