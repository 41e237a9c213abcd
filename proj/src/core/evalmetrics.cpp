#include "core/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/parallel.hpp"
#include "core/rng.hpp"

namespace m2d2 {

double bernoulli_entropy(double p) {
    double acc = 0.0;
    if (p > 0.0) acc -= p * std::log(p);
    if (p < 1.0) acc -= (1.0 - p) * std::log(1.0 - p);
    return acc;
}

PredictionSet PredictionSet::from_probs(Tensor probs, Tensor labels) {
    if (probs.ndim() != 2 || probs.shape() != labels.shape())
        fail(ErrorKind::shape, "predictions need matching [n, Q] probs and labels, got " +
                                   shape_str(probs.shape()) + " and " + shape_str(labels.shape()));
    if (probs.extent(0) < 1) fail(ErrorKind::invalid_argument, "empty prediction set");
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
            fail(ErrorKind::invalid_argument, "probability outside [0, 1]");
        if (labels[i] != 0.0 && labels[i] != 1.0)
            fail(ErrorKind::invalid_argument, "labels must be 0 or 1");
    }
    PredictionSet out;
    out.entropies = Tensor(probs.shape());
    for (std::size_t i = 0; i < probs.numel(); ++i) out.entropies[i] = bernoulli_entropy(probs[i]);
    out.probs = std::move(probs);
    out.labels = std::move(labels);
    return out;
}

namespace {

std::vector<double> column(const Tensor& t, std::size_t k) {
    std::size_t n = t.extent(0), q = t.extent(1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = t[i * q + k];
    return out;
}

}  // namespace

std::vector<double> PredictionSet::prob_column(std::size_t k) const { return column(probs, k); }
std::vector<double> PredictionSet::label_column(std::size_t k) const { return column(labels, k); }
std::vector<double> PredictionSet::entropy_column(std::size_t k) const {
    return column(entropies, k);
}

PredictionSet PredictionSet::resample(const std::vector<std::size_t>& rows) const {
    std::size_t q = num_labels();
    PredictionSet out;
    out.probs = Tensor(Shape{rows.size(), q});
    out.labels = Tensor(Shape{rows.size(), q});
    out.entropies = Tensor(Shape{rows.size(), q});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < q; ++k) {
            out.probs[i * q + k] = probs[rows[i] * q + k];
            out.labels[i * q + k] = labels[rows[i] * q + k];
            out.entropies[i * q + k] = entropies[rows[i] * q + k];
        }
    return out;
}

std::optional<double> auroc(const std::vector<double>& scores, const std::vector<double>& labels) {
    std::size_t n = scores.size();
    if (n != labels.size())
        fail(ErrorKind::shape, "auroc: " + std::to_string(n) + " scores vs " +
                                   std::to_string(labels.size()) + " labels");
    std::size_t pos = 0;
    for (double y : labels) pos += y == 1.0 ? 1 : 0;
    std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks handle ties as half-wins
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t u = i; u <= j; ++u)
            if (labels[order[u]] == 1.0) pos_rank_sum += midrank;
        i = j + 1;
    }
    double u_stat = pos_rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
    return u_stat / (static_cast<double>(pos) * static_cast<double>(neg));
}

std::optional<double> auprc(const std::vector<double>& scores, const std::vector<double>& labels) {
    std::size_t n = scores.size();
    if (n != labels.size())
        fail(ErrorKind::shape, "auprc: " + std::to_string(n) + " scores vs " +
                                   std::to_string(labels.size()) + " labels");
    std::size_t pos = 0;
    for (double y : labels) pos += y == 1.0 ? 1 : 0;
    if (pos == 0) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[order[i]] == 1.0) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(i + 1);
        }
    }
    return ap / static_cast<double>(pos);
}

std::optional<double> base_metric(BaseMetric m, const std::vector<double>& scores,
                                  const std::vector<double>& labels) {
    return m == BaseMetric::auroc ? auroc(scores, labels) : auprc(scores, labels);
}

SelectiveCurve selective_sweep(const PredictionSet& preds, std::size_t label, BaseMetric metric) {
    if (label >= preds.num_labels())
        fail(ErrorKind::invalid_argument, "label index " + std::to_string(label) + " out of range");
    std::size_t n = preds.size();
    std::vector<double> scores = preds.prob_column(label);
    std::vector<double> labels = preds.label_column(label);
    std::vector<double> entropy = preds.entropy_column(label);

    // ascending stable order: the rejected tail holds the highest entropies,
    // with later indices rejected first among ties
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return entropy[a] < entropy[b]; });

    SelectiveCurve curve;
    curve.fractions.reserve(100);
    curve.values.reserve(100);
    double acc = 0.0;
    std::size_t defined = 0;
    std::vector<std::size_t> retained;
    std::vector<double> rs, rl;
    for (std::size_t pct = 0; pct < 100; ++pct) {
        curve.fractions.push_back(static_cast<double>(pct) / 100.0);
        std::size_t reject = n * pct / 100;  // floor(n * f) without fp error
        std::size_t keep = n - reject;
        retained.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
        std::sort(retained.begin(), retained.end());  // restore dataset order
        rs.clear();
        rl.clear();
        for (std::size_t idx : retained) {
            rs.push_back(scores[idx]);
            rl.push_back(labels[idx]);
        }
        std::optional<double> v = keep == 0 ? std::nullopt : base_metric(metric, rs, rl);
        if (v) {
            acc += *v;
            ++defined;
        }
        curve.values.push_back(v);
    }
    curve.undefined_count = 100 - defined;
    if (defined > 0) curve.average = acc / static_cast<double>(defined);
    return curve;
}

LabelAggregate aggregate_labels(const std::vector<std::optional<double>>& per_label) {
    if (per_label.empty()) fail(ErrorKind::invalid_argument, "aggregate over zero labels");
    LabelAggregate out;
    double acc = 0.0;
    std::size_t defined = 0;
    for (const auto& v : per_label) {
        if (v) {
            acc += *v;
            ++defined;
        } else {
            ++out.skipped;
        }
    }
    if (defined > 0) out.value = acc / static_cast<double>(defined);
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) fail(ErrorKind::invalid_argument, "percentile of empty sample");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double rank = q * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = std::min(lo + 1, values.size() - 1);
    double frac = rank - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

namespace {

constexpr std::size_t kRetryCap = 10;

std::vector<std::size_t> draw_rows(std::size_t n, Rng& rng) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = rng.index(n);
    return rows;
}

}  // namespace

std::optional<ConfidenceInterval> bootstrap_ci(
    const PredictionSet& preds,
    const std::function<std::optional<double>(const PredictionSet&)>& metric,
    std::size_t resamples, std::uint64_t seed) {
    if (resamples < 100)
        fail(ErrorKind::invalid_argument, "bootstrap needs at least 100 resamples");
    std::optional<double> point = metric(preds);
    if (!point) return std::nullopt;

    std::size_t n = preds.size();
    std::vector<std::optional<double>> slots(resamples);
    parallel_for(resamples, [&](std::size_t slot) {
        for (std::size_t attempt = 0; attempt < kRetryCap; ++attempt) {
            Rng rng(seed, slot * kRetryCap + attempt);
            std::optional<double> v = metric(preds.resample(draw_rows(n, rng)));
            if (v) {
                slots[slot] = v;
                return;
            }
        }
    });

    std::vector<double> values;
    values.reserve(resamples);
    for (const auto& v : slots)
        if (v) values.push_back(*v);
    if (values.empty()) return std::nullopt;

    ConfidenceInterval ci;
    ci.point = *point;
    ci.lo = percentile(values, 0.025);
    ci.hi = percentile(values, 0.975);
    return ci;
}

std::vector<std::optional<ConfidenceInterval>> bootstrap_ci_batch(
    const PredictionSet& preds,
    const std::function<std::vector<std::optional<double>>(const PredictionSet&)>& metrics,
    std::size_t resamples, std::uint64_t seed) {
    if (resamples < 100)
        fail(ErrorKind::invalid_argument, "bootstrap needs at least 100 resamples");
    std::vector<std::optional<double>> points = metrics(preds);
    std::size_t n = preds.size(), width = points.size();

    // a resample is degenerate when some label column lost a class entirely
    auto degenerate = [](const PredictionSet& p) {
        for (std::size_t k = 0; k < p.num_labels(); ++k) {
            double first = p.labels[k];
            bool mixed = false;
            for (std::size_t i = 1; i < p.size() && !mixed; ++i)
                mixed = p.labels[i * p.num_labels() + k] != first;
            if (!mixed) return true;
        }
        return false;
    };

    std::vector<std::vector<std::optional<double>>> slots(resamples);
    parallel_for(resamples, [&](std::size_t slot) {
        PredictionSet sample;
        for (std::size_t attempt = 0; attempt < kRetryCap; ++attempt) {
            Rng rng(seed, slot * kRetryCap + attempt);
            sample = preds.resample(draw_rows(n, rng));
            if (!degenerate(sample) || attempt + 1 == kRetryCap) break;
        }
        slots[slot] = metrics(sample);
    });

    std::vector<std::optional<ConfidenceInterval>> out(width);
    for (std::size_t j = 0; j < width; ++j) {
        if (!points[j]) continue;
        std::vector<double> values;
        values.reserve(resamples);
        for (const auto& row : slots)
            if (row[j]) values.push_back(*row[j]);
        if (values.empty()) continue;
        ConfidenceInterval ci;
        ci.point = *points[j];
        ci.lo = percentile(values, 0.025);
        ci.hi = percentile(values, 0.975);
        out[j] = ci;
    }
    return out;
}

}  // namespace m2d2
