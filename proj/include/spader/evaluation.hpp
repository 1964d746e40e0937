#pragma once

#include "spader/scoring.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace spader {

struct EvalRecord {
    std::uint64_t image_id = 0;
    double score = 0.0;  // higher means more normal
    bool is_anomaly = false;
};

/// P(anomaly scores below normal) with ties counted as 1/2, from midranks.
/// Throws std::invalid_argument unless both classes are present and scores are finite.
double auroc(std::span<const EvalRecord> records);

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Sweeps the detection threshold upward (flag anomaly when score <= t); runs from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const EvalRecord> records);

double trapezoid_area(std::span<const RocPoint> curve);

struct ConditionSummary {
    Strategy strategy = Strategy::vae;
    int known_anomaly_digit = 0;
    std::vector<double> trials;
    double mean = 0.0;
    double std = 0.0;  // population
};

ConditionSummary summarize(std::span<const double> trials, Strategy strategy, int known_anomaly_digit);

/// Rows follow kAllStrategies, one column per known-anomaly digit, cells "mean ± std".
std::string format_table(std::span<const ConditionSummary> summaries);

/// Header: strategy,known_anomaly_digit,trials,mean,std,aurocs (semicolon-separated per-trial values).
std::string format_csv(std::span<const ConditionSummary> summaries);

}  // namespace spader
