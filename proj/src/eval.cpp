#include "hmf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "hmf/model.hpp"

namespace hmf::eval {

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels,
                  long long* positives = nullptr, long long* negatives = nullptr) {
    if (scores.size() != labels.size()) {
        throw DataError("eval: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
    }
    long long p = 0, n = 0;
    for (int y : labels) {
        if (y == 1) ++p;
        else if (y == 0) ++n;
        else throw DataError("eval: label " + std::to_string(y) + " is not binary");
    }
    if (positives) *positives = p;
    if (negatives) *negatives = n;
}

} // namespace

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
    long long P = 0, N = 0;
    check_binary(scores, labels, &P, &N);
    if (P == 0 || N == 0) {
        throw UndefinedCurveError("roc_curve: needs at least one positive and one negative");
    }

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    long long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        // absorb the whole tie group into one step
        while (i < idx.size() && scores[idx[i]] == s) {
            if (labels[idx[i]] == 1) ++tp;
            else ++fp;
            ++i;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(N),
                                static_cast<double>(tp) / static_cast<double>(P), s});
    }
    return curve;
}

double auc(const RocCurve& curve) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return area;
}

double auc_pairwise(std::span<const double> scores, std::span<const int> labels) {
    long long P = 0, N = 0;
    check_binary(scores, labels, &P, &N);
    if (P == 0 || N == 0) {
        throw UndefinedCurveError("auc_pairwise: needs at least one positive and one negative");
    }
    double wins = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[j] != 0) continue;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    return wins / (static_cast<double>(P) * static_cast<double>(N));
}

ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold) {
    check_binary(scores, labels);
    ConfusionMatrix cm;
    cm.threshold = threshold;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1) {
            pred ? ++cm.tp : ++cm.fn;
        } else {
            pred ? ++cm.fp : ++cm.tn;
        }
    }
    return cm;
}

ComparisonReport compare_scores(const std::vector<std::pair<std::string,
                                                            std::vector<double>>>& family_scores,
                                std::span<const int> labels, double threshold) {
    ComparisonReport report;
    report.threshold = threshold;
    for (const auto& [family, scores] : family_scores) {
        FamilyEval fe;
        fe.family = family;
        fe.curve = roc_curve(scores, labels);
        fe.auc = auc(fe.curve);
        fe.cm = confusion(scores, labels, threshold);
        report.rows.push_back(std::move(fe));
    }
    return report;
}

ComparisonReport compare_models(const std::vector<dataset::LabeledTile>& test_tiles,
                                const std::vector<std::pair<std::string,
                                                            const model::TrainedModel*>>& models,
                                double threshold) {
    std::vector<int> labels;
    labels.reserve(test_tiles.size());
    for (const auto& t : test_tiles) labels.push_back(t.label);

    std::vector<std::pair<std::string, std::vector<double>>> family_scores;
    for (const auto& [family, trained] : models) {
        model::Scorer scorer(*trained);
        family_scores.emplace_back(family, scorer.score_batch(test_tiles));
    }
    return compare_scores(family_scores, labels, threshold);
}

std::string write_roc_csv(const RocCurve& curve) {
    std::ostringstream out;
    out << "fpr,tpr,threshold\n";
    char buf[96];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof(buf), "%.9f,%.9f,%.9g\n", p.fpr, p.tpr, p.threshold);
        out << buf;
    }
    return out.str();
}

std::string write_comparison_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out << "family,auc,tp,fp,fn,tn,threshold\n";
    char buf[160];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.9f,%lld,%lld,%lld,%lld,%.9g\n", r.family.c_str(),
                      r.auc, r.cm.tp, r.cm.fp, r.cm.fn, r.cm.tn, report.threshold);
        out << buf;
    }
    return out.str();
}

} // namespace hmf::eval
