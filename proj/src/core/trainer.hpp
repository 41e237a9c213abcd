#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/evalmetrics.hpp"
#include "core/fusionnet.hpp"
#include "core/m2d2prior.hpp"
#include "core/variational.hpp"

namespace m2d2 {

enum class TrainMode { deterministic, bayes_standard, bayes_m2d2 };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 16;
    std::size_t context_batch_size = 64;
    double learning_rate = 2e-4;
    std::size_t mc_samples_train = 1;
    std::size_t mc_samples_eval = 32;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::bayes_m2d2;
    double posterior_init_std = 0.05;

    // Per-term overrides for ablations; unset means mode defaults
    // (deterministic: all off; bayes_standard: KL only; bayes_m2d2: all on).
    std::optional<bool> include_kl;
    std::optional<bool> include_uncertainty;
    std::optional<bool> include_s_penalty;

    bool bayes() const { return mode != TrainMode::deterministic; }
    bool kl_enabled() const;
    bool uncertainty_enabled() const;
    bool s_penalty_enabled() const;
    void validate() const;
};

// Learnable state for either a deterministic network or its mean-field
// posterior. Bayes modes hold q(theta_h), q(m) over the head, and the
// lognormal q(s); theta_L is sampled as m + sqrt(s) (.) eps.
struct ModelState {
    NetworkConfig net;
    TrainMode mode = TrainMode::deterministic;
    double sigma_s = 0.1;

    VarMap det_params;
    GaussianMeanField q_h;
    GaussianMeanField q_m;
    LogNormalVariational q_s;

    static ModelState init(const NetworkConfig& net, TrainMode mode, double sigma_s,
                           double posterior_init_std, Rng& rng);

    std::map<std::string, Var> leaves() const;
    std::map<std::string, Tensor> snapshot() const;
    static ModelState from_snapshot(const NetworkConfig& net, TrainMode mode, double sigma_s,
                                    const std::map<std::string, Tensor>& tensors);
};

// One reparameterized draw of all network parameters. For bayes modes, m and
// s are also returned for the uncertainty term; deterministic mode returns
// the parameters as-is.
struct ThetaDraw {
    VarMap params;
    Var m;
    Var s;
};

ThetaDraw sample_theta(const ModelState& state, Rng& noise_rng);

// sum_i [ y_i log p_i + (1 - y_i) log(1 - p_i) ] over every element, with
// probs clamped to [1e-7, 1 - 1e-7] before the logs. Positive-sign
// log-likelihood; negate for a loss.
Var bce_log_likelihood(const Var& y, const Var& probs);

// Signed contributions; their sum is the optimized scalar.
struct ObjectiveParts {
    double likelihood = 0.0;
    double kl = 0.0;           // -D_KL(q || p), <= 0
    double uncertainty = 0.0;  // context log-likelihood term
    double s_penalty = 0.0;    // -tau_s ||loc||^2, <= 0

    double total() const { return ((likelihood + kl) + uncertainty) + s_penalty; }
};

struct ObjectiveResult {
    Var value;  // to maximize
    ObjectiveParts parts;
};

// (N/|B|) sum_batch E_q[log p(y|x, theta)] - D_KL(q_phi || p_phi)
//   + E_q[log p~(0 | context)] - tau_s ||loc||^2,
// with terms toggled by mode and expectations over mc_samples_train draws.
ObjectiveResult objective(const ModelState& state, const Tensor& x_ehr, const Tensor& x_cxr,
                          const Tensor& y, std::size_t dataset_size,
                          const std::optional<ContextBatch>& context, const PriorSpec& prior,
                          const M2d2Config& m2cfg, const TrainConfig& tcfg, Rng& noise_rng);

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    std::map<std::string, Tensor> m;
    std::map<std::string, Tensor> v;
};

// Bias-corrected descent step on each parameter's stored gradient. A
// non-finite gradient rejects the step with a diagnostic naming the tensor.
void adam_step(const std::map<std::string, Var>& params, AdamState& state, double lr);

// pi^2 (sum m_i^2)^2 / 2 over the validation 4-vector; entries must lie in
// [0, 1].
double hypervolume(const std::array<double, 4>& metrics);

// Posterior-predictive probabilities: mean of sigmoid(logits) over
// mc_samples parameter draws (one draw for deterministic mode).
PredictionSet predict(const ModelState& state, const DatasetSplit& split, std::size_t mc_samples,
                      Rng& rng);

// AUROC, AUPRC, selective AUROC, selective AUPRC aggregated over labels
// (undefined labels masked; an all-undefined aggregate reads as 0).
struct MetricVector {
    std::array<double, 4> values{};
    std::size_t skipped_labels = 0;
};

MetricVector metric_vector(const PredictionSet& preds);

struct EpochLog {
    std::size_t epoch = 0;
    ObjectiveParts parts;  // means over the epoch's steps
    double objective = 0.0;
    std::array<double, 4> val_metrics{};
    double hv = 0.0;
};

struct Checkpoint {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::map<std::string, Tensor> tensors;
    std::array<double, 4> metrics{};
    double hv = 0.0;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochLog> log;
};

// Minibatch training with per-epoch validation; returns the checkpoint with
// the highest hypervolume. Step errors abort with the epoch/step index.
TrainResult train(const Dataset& data, const NetworkConfig& net, const PriorSpec& prior,
                  const M2d2Config& m2cfg, const TransformSuite& suite, const TrainConfig& tcfg);

}  // namespace m2d2
