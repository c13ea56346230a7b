#include "uskel/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "uskel/loss.hpp"

namespace uskel::evals {

using nlohmann::json;

std::vector<std::vector<double>> cosine_scores(const std::vector<std::vector<double>>& rows,
                                               const text::LabelBank& bank) {
    if (bank.entries.empty()) throw EvalError("label bank is empty");
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        std::vector<double> scores;
        scores.reserve(bank.entries.size());
        for (const auto& [id, entry] : bank.entries) scores.push_back(loss::cosine(row, entry.vec));
        out.push_back(std::move(scores));
    }
    return out;
}

int argmax_calibrated(const std::vector<double>& scores, const std::vector<int>& ids,
                      const text::LabelBank& bank, double gamma, Restrict restrict) {
    if (gamma < 0.0) throw EvalError("gamma must be >= 0");
    int best_id = -1;
    double best = 0.0;
    for (size_t c = 0; c < ids.size(); ++c) {
        bool unseen = bank.is_unseen(ids[c]);
        if (restrict == Restrict::seen && unseen) continue;
        if (restrict == Restrict::unseen && !unseen) continue;
        double s = scores[c];
        if (restrict == Restrict::all && !unseen) s -= gamma;
        if (best_id < 0 || s > best) { // ids ascend, so ties keep the lowest id
            best = s;
            best_id = ids[c];
        }
    }
    if (best_id < 0) throw EvalError("classify: restricted class set is empty");
    return best_id;
}

std::vector<int> classify(const std::vector<std::vector<double>>& rows,
                          const text::LabelBank& bank, double gamma, Restrict restrict) {
    auto scores = cosine_scores(rows, bank);
    std::vector<int> ids = bank.ids();
    std::vector<int> preds;
    preds.reserve(rows.size());
    for (const auto& s : scores) preds.push_back(argmax_calibrated(s, ids, bank, gamma, restrict));
    return preds;
}

bool multilabel_top1(int pred, const std::set<int>& truth) {
    if (truth.empty()) throw EvalError("multilabel_top1: empty ground truth");
    return truth.count(pred) > 0;
}

int EvalSample::primary() const {
    if (labels.empty()) throw EvalError("sample has no labels");
    return *std::min_element(labels.begin(), labels.end());
}

namespace {

double ratio(size_t num, size_t den) { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

} // namespace

EvalReport evaluate(const std::vector<EvalSample>& samples, const text::LabelBank& bank,
                    const std::map<int, labels::Stratum>* strata, double gamma) {
    if (samples.empty()) throw EvalError("evaluate: no samples");
    EvalReport rep;
    rep.gamma = gamma;

    std::vector<std::vector<double>> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(s.feature);
    auto scores = cosine_scores(rows, bank);
    std::vector<int> ids = bank.ids();

    std::map<labels::Stratum, std::pair<size_t, size_t>> per_stratum;
    size_t seen_total = 0, seen_correct = 0, unseen_total = 0, unseen_correct = 0;
    size_t zsl_total = 0, zsl_correct = 0;

    for (size_t i = 0; i < samples.size(); ++i) {
        int pred = argmax_calibrated(scores[i], ids, bank, gamma, Restrict::all);
        std::set<int> truth(samples[i].labels.begin(), samples[i].labels.end());
        bool ok = multilabel_top1(pred, truth);
        int primary = samples[i].primary();

        ++rep.total;
        rep.correct += ok ? 1 : 0;
        auto& pc = rep.per_class[primary];
        pc.first += ok ? 1 : 0;
        ++pc.second;
        if (strata) {
            auto it = strata->find(primary);
            if (it != strata->end()) {
                auto& st = per_stratum[it->second];
                st.first += ok ? 1 : 0;
                ++st.second;
            }
        }
        if (!bank.unseen.empty()) {
            if (bank.is_unseen(primary)) {
                ++unseen_total;
                unseen_correct += ok ? 1 : 0;
                int zpred = argmax_calibrated(scores[i], ids, bank, 0.0, Restrict::unseen);
                ++zsl_total;
                zsl_correct += multilabel_top1(zpred, truth) ? 1 : 0;
            } else {
                ++seen_total;
                seen_correct += ok ? 1 : 0;
            }
        }
    }

    rep.overall = ratio(rep.correct, rep.total);
    if (strata) {
        auto pick = [&](labels::Stratum s) -> std::optional<double> {
            auto it = per_stratum.find(s);
            if (it == per_stratum.end() || it->second.second == 0) return std::nullopt;
            return ratio(it->second.first, it->second.second);
        };
        rep.many = pick(labels::Stratum::many);
        rep.medium = pick(labels::Stratum::medium);
        rep.few = pick(labels::Stratum::few);
    }
    if (!bank.unseen.empty() && (seen_total || unseen_total)) {
        if (seen_total) rep.seen_s = ratio(seen_correct, seen_total);
        if (unseen_total) {
            rep.unseen_u = ratio(unseen_correct, unseen_total);
            rep.zsl_acc = ratio(zsl_correct, zsl_total);
        }
        if (rep.seen_s && rep.unseen_u) {
            double s = *rep.seen_s, u = *rep.unseen_u;
            rep.harmonic_h = (s + u) > 0.0 ? 2.0 * s * u / (s + u) : 0.0;
        }
    }
    return rep;
}

std::vector<GammaRow> sweep_gamma(const std::vector<EvalSample>& samples,
                                  const text::LabelBank& bank, double from, double to,
                                  double step) {
    if (step <= 0.0 || to < from) throw EvalError("sweep_gamma: bad range");
    std::vector<std::vector<double>> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) rows.push_back(s.feature);
    auto scores = cosine_scores(rows, bank);
    std::vector<int> ids = bank.ids();

    std::vector<GammaRow> out;
    for (double g = from; g <= to + 1e-12; g += step) {
        size_t seen_total = 0, seen_correct = 0, unseen_total = 0, unseen_correct = 0;
        size_t seen_predicted = 0;
        for (size_t i = 0; i < samples.size(); ++i) {
            int pred = argmax_calibrated(scores[i], ids, bank, g, Restrict::all);
            if (!bank.is_unseen(pred)) ++seen_predicted;
            std::set<int> truth(samples[i].labels.begin(), samples[i].labels.end());
            bool ok = multilabel_top1(pred, truth);
            if (bank.is_unseen(samples[i].primary())) {
                ++unseen_total;
                unseen_correct += ok ? 1 : 0;
            } else {
                ++seen_total;
                seen_correct += ok ? 1 : 0;
            }
        }
        GammaRow row;
        row.gamma = g;
        row.seen_s = ratio(seen_correct, seen_total);
        row.unseen_u = ratio(unseen_correct, unseen_total);
        row.harmonic_h = (row.seen_s + row.unseen_u) > 0.0
                             ? 2.0 * row.seen_s * row.unseen_u / (row.seen_s + row.unseen_u)
                             : 0.0;
        row.seen_predicted = seen_predicted;
        out.push_back(row);
    }
    return out;
}

std::string EvalReport::to_json(const text::LabelBank* bank) const {
    json doc;
    doc["overall"] = overall;
    doc["total"] = total;
    doc["correct"] = correct;
    doc["gamma"] = gamma;
    doc["many"] = many ? json(*many) : json(nullptr);
    doc["medium"] = medium ? json(*medium) : json(nullptr);
    doc["few"] = few ? json(*few) : json(nullptr);
    json pc;
    for (const auto& [cid, counts] : per_class) {
        json row;
        row["correct"] = counts.first;
        row["total"] = counts.second;
        if (bank && bank->has(cid)) row["name"] = bank->name(cid);
        pc[std::to_string(cid)] = std::move(row);
    }
    doc["per_class"] = std::move(pc);
    if (zsl_acc || seen_s || unseen_u) {
        json z;
        z["zsl_acc"] = zsl_acc ? json(*zsl_acc) : json(nullptr);
        z["S"] = seen_s ? json(*seen_s) : json(nullptr);
        z["U"] = unseen_u ? json(*unseen_u) : json(nullptr);
        z["H"] = harmonic_h ? json(*harmonic_h) : json(nullptr);
        doc["gzsl"] = std::move(z);
    }
    return doc.dump();
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    auto line = [&](const char* name, const std::optional<double>& v) {
        os << "  " << name << ": ";
        if (v)
            os << *v;
        else
            os << "n/a";
        os << "\n";
    };
    os << "accuracy (top-1, multi-label)\n";
    os << "  overall: " << overall << "  (" << correct << "/" << total << ")\n";
    line("many-shot", many);
    line("medium-shot", medium);
    line("few-shot", few);
    if (seen_s || unseen_u) {
        line("zsl", zsl_acc);
        line("gzsl S", seen_s);
        line("gzsl U", unseen_u);
        line("gzsl H", harmonic_h);
    }
    return os.str();
}

void EvalReport::write_per_class_csv(const std::string& path, const text::LabelBank& bank) const {
    std::ofstream out(path);
    if (!out) throw EvalError("cannot open per-class csv for writing: " + path);
    out << "class_id,name,correct,total,accuracy\n";
    for (const auto& [cid, counts] : per_class) {
        std::string name = bank.has(cid) ? bank.name(cid) : "";
        out << cid << "," << name << "," << counts.first << "," << counts.second << ","
            << ratio(counts.first, counts.second) << "\n";
    }
}

} // namespace uskel::evals
