#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "core/tensor.hpp"

namespace m2d2 {

// Multi-label predictions with per-label Bernoulli entropies (nats).
struct PredictionSet {
    Tensor probs;      // [n, Q] in [0, 1]
    Tensor labels;     // [n, Q] in {0, 1}
    Tensor entropies;  // [n, Q]

    static PredictionSet from_probs(Tensor probs, Tensor labels);

    std::size_t size() const { return probs.extent(0); }
    std::size_t num_labels() const { return probs.extent(1); }

    std::vector<double> prob_column(std::size_t k) const;
    std::vector<double> label_column(std::size_t k) const;
    std::vector<double> entropy_column(std::size_t k) const;

    PredictionSet resample(const std::vector<std::size_t>& rows) const;
};

// -p ln p - (1-p) ln(1-p), with 0 ln 0 = 0.
double bernoulli_entropy(double p);

enum class BaseMetric { auroc, auprc };

// Probability that a random positive outranks a random negative; ties count
// half (midrank formulation). nullopt when only one class is present.
std::optional<double> auroc(const std::vector<double>& scores, const std::vector<double>& labels);

// Average precision: precision at each positive's recall step in descending
// score order; ties broken by stable input order. nullopt with no positives.
std::optional<double> auprc(const std::vector<double>& scores, const std::vector<double>& labels);

std::optional<double> base_metric(BaseMetric m, const std::vector<double>& scores,
                                  const std::vector<double>& labels);

// Metric values over rejection fractions 0.00 .. 0.99; undefined fractions
// are masked from the average.
struct SelectiveCurve {
    std::vector<double> fractions;
    std::vector<std::optional<double>> values;
    std::optional<double> average;
    std::size_t undefined_count = 0;
};

// At fraction f, reject the floor(n f) samples with the highest entropy for
// label k (ties resolved by stable index) and score the retained set.
SelectiveCurve selective_sweep(const PredictionSet& preds, std::size_t label, BaseMetric metric);

struct LabelAggregate {
    std::optional<double> value;  // unweighted mean over defined labels
    std::size_t skipped = 0;
};

LabelAggregate aggregate_labels(const std::vector<std::optional<double>>& per_label);

struct ConfidenceInterval {
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap over row resamples. Degenerate resamples (metric
// undefined) are retried up to 10 times each from fixed per-slot streams, so
// the result is independent of scheduling. nullopt when the metric is
// undefined on the full data or every resample stays degenerate.
std::optional<ConfidenceInterval> bootstrap_ci(
    const PredictionSet& preds,
    const std::function<std::optional<double>(const PredictionSet&)>& metric,
    std::size_t resamples, std::uint64_t seed);

// Shared-resample bootstrap: one row resample per slot feeds every metric, so
// aggregate and per-label intervals come from the same draws.
std::vector<std::optional<ConfidenceInterval>> bootstrap_ci_batch(
    const PredictionSet& preds,
    const std::function<std::vector<std::optional<double>>(const PredictionSet&)>& metrics,
    std::size_t resamples, std::uint64_t seed);

// Empirical percentile with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

}  // namespace m2d2
