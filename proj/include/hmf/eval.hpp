#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hmf/errors.hpp"

namespace hmf::model {
struct TrainedModel;
}
namespace hmf::dataset {
struct LabeledTile;
}

namespace hmf::eval {

class UndefinedCurveError : public DataError {
public:
    using DataError::DataError;
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// Staircase curve, descending thresholds, tied scores collapsed into one
// step. Starts at (0,0) (threshold +inf) and ends at (1,1).
struct RocCurve {
    std::vector<RocPoint> points;
};

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area under the curve.
double auc(const RocCurve& curve);

// Independent oracle: P(score_pos > score_neg) + 0.5 * P(tie), brute force
// over all positive/negative pairs.
double auc_pairwise(std::span<const double> scores, std::span<const int> labels);

struct ConfusionMatrix {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;
    double threshold = 0.5;
};

// Predict positive iff score >= threshold.
ConfusionMatrix confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold);

struct FamilyEval {
    std::string family;
    double auc = 0.0;
    ConfusionMatrix cm;
    RocCurve curve;
};

struct ComparisonReport {
    std::vector<FamilyEval> rows;
    double threshold = 0.5;
};

// Scores each family's model on the shared test tiles; makes no ordering
// assertion between families.
ComparisonReport compare_models(const std::vector<dataset::LabeledTile>& test_tiles,
                                const std::vector<std::pair<std::string,
                                                            const model::TrainedModel*>>& models,
                                double threshold);

// Same report from precomputed per-family scores.
ComparisonReport compare_scores(const std::vector<std::pair<std::string,
                                                            std::vector<double>>>& family_scores,
                                std::span<const int> labels, double threshold);

std::string write_roc_csv(const RocCurve& curve);
std::string write_comparison_csv(const ComparisonReport& report);

} // namespace hmf::eval
