#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uskel/labelspace.hpp"
#include "uskel/textbank.hpp"

namespace uskel::evals {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Restrict { all, seen, unseen };

// Cosine similarity of each feature row against every bank entry, columns in
// ascending label id order.
std::vector<std::vector<double>> cosine_scores(const std::vector<std::vector<double>>& rows,
                                               const text::LabelBank& bank);

// Calibrated argmax: score(c) - gamma * [c is seen], ties to the lowest label
// id. gamma only applies when the candidate set is unrestricted.
int argmax_calibrated(const std::vector<double>& scores, const std::vector<int>& ids,
                      const text::LabelBank& bank, double gamma, Restrict restrict);

std::vector<int> classify(const std::vector<std::vector<double>>& rows,
                          const text::LabelBank& bank, double gamma, Restrict restrict);

// Multi-label top-1: the single top-scoring class must be one of the
// ground-truth labels.
bool multilabel_top1(int pred, const std::set<int>& truth);

struct EvalSample {
    std::vector<double> feature; // projected global feature v
    std::vector<int> labels;     // ground-truth class ids (>= 1)
    int primary() const;         // lowest label id
};

struct EvalReport {
    double overall = 0.0;
    size_t total = 0, correct = 0;
    std::optional<double> many, medium, few;
    std::map<int, std::pair<size_t, size_t>> per_class; // class -> (correct, total)
    std::optional<double> zsl_acc, seen_s, unseen_u, harmonic_h;
    double gamma = 0.0;

    std::string to_json(const text::LabelBank* bank = nullptr) const;
    std::string to_table() const;
    void write_per_class_csv(const std::string& path, const text::LabelBank& bank) const;
};

// Overall / stratified accuracy plus ZSL and GZSL metrics when the bank has
// unseen classes. Samples count once, under their primary class.
EvalReport evaluate(const std::vector<EvalSample>& samples, const text::LabelBank& bank,
                    const std::map<int, labels::Stratum>* strata, double gamma);

struct GammaRow {
    double gamma, seen_s, unseen_u, harmonic_h;
    size_t seen_predicted; // samples whose prediction landed in a seen class
};

std::vector<GammaRow> sweep_gamma(const std::vector<EvalSample>& samples,
                                  const text::LabelBank& bank, double from, double to,
                                  double step);

} // namespace uskel::evals
