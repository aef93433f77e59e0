#include <doctest.h>

#include <cmath>
#include <vector>

#include "hmf/eval.hpp"
#include "hmf/rng.hpp"

using namespace hmf;
using namespace hmf::eval;

namespace {

// brute-force rank statistic, written independently of the library path
double pairwise_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0.0;
    long long pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != 1) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != 0) continue;
            ++pairs;
            if (s[i] > s[j]) wins += 1.0;
            else if (s[i] == s[j]) wins += 0.5;
        }
    }
    return wins / static_cast<double>(pairs);
}

} // namespace

TEST_CASE("roc_curve: hand-swept four-sample example") {
    const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y = {0, 0, 1, 1};
    RocCurve curve = roc_curve(s, y);

    // thresholds swept: inf, 0.8, 0.4, 0.35, 0.1
    REQUIRE(curve.points.size() == 5);
    CHECK(curve.points.front().fpr == 0.0);
    CHECK(curve.points.front().tpr == 0.0);
    CHECK(curve.points.back().fpr == 1.0);
    CHECK(curve.points.back().tpr == 1.0);

    // tpr at fpr = 0 is 0.5 (only 0.8 clears the top threshold)
    double tpr_at_zero = 0.0;
    for (const auto& p : curve.points) {
        if (p.fpr == 0.0) tpr_at_zero = std::max(tpr_at_zero, p.tpr);
    }
    CHECK(tpr_at_zero == 0.5);

    CHECK(auc(curve) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(auc_pairwise(s, y) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(pairwise_oracle(s, y) == 0.75); // 3 of the 4 (pos,neg) pairs ordered
}

TEST_CASE("roc_curve: perfect separation passes through (0,1)") {
    const std::vector<double> s = {0.9, 0.8, 0.2, 0.1};
    const std::vector<int> y = {1, 1, 0, 0};
    RocCurve curve = roc_curve(s, y);
    bool hits_corner = false;
    for (const auto& p : curve.points) {
        if (p.fpr == 0.0 && p.tpr == 1.0) hits_corner = true;
    }
    CHECK(hits_corner);
    CHECK(auc(curve) == 1.0);
    CHECK(auc_pairwise(s, y) == 1.0);
}

TEST_CASE("roc_curve: all-equal scores collapse to one diagonal step") {
    const std::vector<double> s = {0.5, 0.5, 0.5, 0.5};
    const std::vector<int> y = {1, 0, 1, 0};
    RocCurve curve = roc_curve(s, y);
    REQUIRE(curve.points.size() == 2);
    CHECK(curve.points[1].fpr == 1.0);
    CHECK(curve.points[1].tpr == 1.0);
    CHECK(auc(curve) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("auc_pairwise: tie rule and reversal") {
    CHECK(auc_pairwise(std::vector<double>{0.4, 0.4}, std::vector<int>{1, 0}) == 0.5);
    const std::vector<double> s = {0.1, 0.2, 0.8, 0.9};
    const std::vector<int> y = {1, 1, 0, 0};
    CHECK(auc_pairwise(s, y) == 0.0);
}

TEST_CASE("single-class labels are an undefined curve") {
    const std::vector<double> s = {0.1, 0.2};
    CHECK_THROWS_AS(roc_curve(s, std::vector<int>{1, 1}), UndefinedCurveError);
    CHECK_THROWS_AS(auc_pairwise(s, std::vector<int>{0, 0}), UndefinedCurveError);
}

TEST_CASE("confusion: hand-thresholded example and extremes") {
    const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y = {0, 0, 1, 1};

    ConfusionMatrix cm = confusion(s, y, 0.5);
    CHECK(cm.tp == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.fp == 0);
    CHECK(cm.tn == 2);
    CHECK(cm.tp + cm.fp + cm.fn + cm.tn == 4);

    ConfusionMatrix all_pos = confusion(s, y, 0.0);
    CHECK(all_pos.tp == 2);
    CHECK(all_pos.fp == 2);
    CHECK(all_pos.fn == 0);
    CHECK(all_pos.tn == 0);

    ConfusionMatrix all_neg = confusion(s, y, 0.81);
    CHECK(all_neg.tn == 2);
    CHECK(all_neg.fn == 2);
    CHECK(all_neg.tp == 0);
}

TEST_CASE("property: trapezoid AUC equals the pairwise oracle within 1e-9") {
    Rng rng(20200606);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(199);
        std::vector<double> s(n);
        std::vector<int> y(n);
        const bool coarse = rng.unit() < 0.5; // force ties half the time
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.unit();
            y[i] = rng.unit() < 0.3 ? 1 : 0;
            (y[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        const double a = auc(roc_curve(s, y));
        const double b = auc_pairwise(s, y);
        REQUIRE(std::fabs(a - b) < 1e-9);
    }
}

TEST_CASE("property: ROC is monotone with fixed endpoints") {
    Rng rng(123);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 4 + rng.below(60);
        std::vector<double> s(n);
        std::vector<int> y(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(8)) / 7.0;
            y[i] = rng.unit() < 0.4 ? 1 : 0;
            (y[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        RocCurve curve = roc_curve(s, y);
        REQUIRE(curve.points.front().fpr == 0.0);
        REQUIRE(curve.points.front().tpr == 0.0);
        REQUIRE(curve.points.back().fpr == 1.0);
        REQUIRE(curve.points.back().tpr == 1.0);
        for (std::size_t i = 1; i < curve.points.size(); ++i) {
            REQUIRE(curve.points[i].fpr >= curve.points[i - 1].fpr);
            REQUIRE(curve.points[i].tpr >= curve.points[i - 1].tpr);
            REQUIRE(curve.points[i].threshold < curve.points[i - 1].threshold);
        }
    }
}

TEST_CASE("property: AUC is invariant under strictly increasing transforms") {
    Rng rng(55);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 5 + rng.below(50);
        std::vector<double> s(n), t(n);
        std::vector<int> y(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng.below(10)) / 9.0;
            t[i] = std::exp(3.0 * s[i]) - 0.5; // strictly increasing, keeps ties
            y[i] = rng.unit() < 0.5 ? 1 : 0;
            (y[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(auc_pairwise(s, y) == auc_pairwise(t, y));
        CHECK(auc(roc_curve(s, y)) == doctest::Approx(auc(roc_curve(t, y))).epsilon(1e-12));
    }
}

TEST_CASE("property: AUC(s) + AUC(-s) = 1 without ties") {
    Rng rng(66);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 6 + rng.below(40);
        std::vector<double> s(n), neg(n);
        std::vector<int> y(n);
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = (static_cast<double>(i) + rng.uniform(0.1, 0.4)) / n; // distinct
            neg[i] = -s[i];
            y[i] = rng.unit() < 0.5 ? 1 : 0;
            (y[i] ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg) continue;
        CHECK(auc_pairwise(s, y) + auc_pairwise(neg, y) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("property: raising the threshold never adds tp or fp") {
    Rng rng(88);
    std::vector<double> s(60);
    std::vector<int> y(60);
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] = rng.unit();
        y[i] = rng.unit() < 0.4 ? 1 : 0;
    }
    ConfusionMatrix prev = confusion(s, y, 0.0);
    for (double t = 0.1; t <= 1.05; t += 0.1) {
        ConfusionMatrix cur = confusion(s, y, t);
        CHECK(cur.tp <= prev.tp);
        CHECK(cur.fp <= prev.fp);
        prev = cur;
    }
}

TEST_CASE("compare_scores: one row per family, identical scores give identical rows") {
    std::vector<double> s = {0.9, 0.7, 0.3, 0.2};
    std::vector<int> y = {1, 1, 0, 0};
    auto report = compare_scores({{"plain", s}, {"residual", s}, {"dense", s}}, y, 0.5);
    REQUIRE(report.rows.size() == 3);
    for (const auto& row : report.rows) {
        CHECK(row.auc == report.rows[0].auc);
        CHECK(row.cm.tp == report.rows[0].cm.tp);
        CHECK(row.cm.tn == report.rows[0].cm.tn);
    }
    CHECK(report.rows[0].family == "plain");
    CHECK(report.rows[2].family == "dense");

    const std::string csv = write_comparison_csv(report);
    CHECK(csv.find("family,auc,tp,fp,fn,tn,threshold") == 0);
    CHECK(csv.find("dense,") != std::string::npos);
}

TEST_CASE("write_roc_csv emits one row per curve point") {
    std::vector<double> s = {0.9, 0.1};
    std::vector<int> y = {1, 0};
    const std::string csv = write_roc_csv(roc_curve(s, y));
    CHECK(csv.find("fpr,tpr,threshold") == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4); // header + 3 points
}
