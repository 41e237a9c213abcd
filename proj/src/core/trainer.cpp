#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace m2d2 {

std::string to_string(TrainMode mode) {
    switch (mode) {
        case TrainMode::deterministic: return "deterministic";
        case TrainMode::bayes_standard: return "bayes_standard";
        case TrainMode::bayes_m2d2: return "bayes_m2d2";
    }
    fail(ErrorKind::invalid_argument, "unknown train mode");
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "deterministic") return TrainMode::deterministic;
    if (s == "bayes_standard") return TrainMode::bayes_standard;
    if (s == "bayes_m2d2") return TrainMode::bayes_m2d2;
    fail(ErrorKind::config, "unknown train mode \"" + s +
                                "\" (expected deterministic, bayes_standard, or bayes_m2d2)");
}

bool TrainConfig::kl_enabled() const {
    if (include_kl) return *include_kl && bayes();
    return bayes();
}

bool TrainConfig::uncertainty_enabled() const {
    if (include_uncertainty) return *include_uncertainty && bayes();
    return mode == TrainMode::bayes_m2d2;
}

bool TrainConfig::s_penalty_enabled() const {
    if (include_s_penalty) return *include_s_penalty && bayes();
    return mode == TrainMode::bayes_m2d2;
}

void TrainConfig::validate() const {
    if (epochs < 1) fail(ErrorKind::config, "train.epochs must be >= 1");
    if (batch_size < 1) fail(ErrorKind::config, "train.batch_size must be >= 1");
    if (context_batch_size < 1) fail(ErrorKind::config, "train.context_batch_size must be >= 1");
    if (mc_samples_train < 1) fail(ErrorKind::config, "train.mc_samples_train must be >= 1");
    if (mc_samples_eval < 1) fail(ErrorKind::config, "train.mc_samples_eval must be >= 1");
    if (learning_rate <= 0.0) fail(ErrorKind::config, "train.learning_rate must be > 0");
    if (posterior_init_std <= 0.0) fail(ErrorKind::config, "train.posterior_init_std must be > 0");
}

ModelState ModelState::init(const NetworkConfig& net, TrainMode mode, double sigma_s,
                            double posterior_init_std, Rng& rng) {
    ModelState state;
    state.net = net;
    state.mode = mode;
    state.sigma_s = sigma_s;
    VarMap base = init_parameters(net, rng);
    if (mode == TrainMode::deterministic) {
        state.det_params = std::move(base);
        return state;
    }
    std::map<std::string, Tensor> theta_h_init, m_init;
    for (const auto& [name, var] : base) {
        if (name == kHeadName)
            m_init[name] = var->value;
        else
            theta_h_init[name] = var->value;
    }
    state.q_h = GaussianMeanField::init(theta_h_init, posterior_init_std);
    state.q_m = GaussianMeanField::init(m_init, posterior_init_std);
    // start s near posterior_init_std^2 so the sampled head matches the
    // Gaussian groups' initial noise scale
    state.q_s = LogNormalVariational::init(Shape{net.feature_dim(), net.num_labels},
                                           2.0 * std::log(posterior_init_std), sigma_s);
    return state;
}

std::map<std::string, Var> ModelState::leaves() const {
    std::map<std::string, Var> out;
    if (mode == TrainMode::deterministic) {
        for (const auto& [name, var] : det_params) out[name] = var;
        return out;
    }
    for (const auto& [name, var] : q_h.mu) out["mu." + name] = var;
    for (const auto& [name, var] : q_h.rho) out["rho." + name] = var;
    for (const auto& [name, var] : q_m.mu) out["mu." + name] = var;
    for (const auto& [name, var] : q_m.rho) out["rho." + name] = var;
    out["s.loc"] = q_s.loc;
    return out;
}

std::map<std::string, Tensor> ModelState::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : leaves()) out[name] = var->value;
    return out;
}

ModelState ModelState::from_snapshot(const NetworkConfig& net, TrainMode mode, double sigma_s,
                                     const std::map<std::string, Tensor>& tensors) {
    auto shapes = parameter_shapes(net);
    auto lookup = [&](const std::string& name) -> const Tensor& {
        auto it = tensors.find(name);
        if (it == tensors.end())
            fail(ErrorKind::invalid_argument, "checkpoint is missing tensor \"" + name + "\"");
        return it->second;
    };
    auto check_shape = [&](const std::string& name, const Tensor& t, const Shape& want) {
        if (t.shape() != want)
            fail(ErrorKind::invalid_argument,
                 "checkpoint tensor \"" + name + "\" has shape " + shape_str(t.shape()) +
                     " but the network config needs " + shape_str(want));
    };

    ModelState state;
    state.net = net;
    state.mode = mode;
    state.sigma_s = sigma_s;
    if (mode == TrainMode::deterministic) {
        for (const auto& [name, shape] : shapes) {
            const Tensor& t = lookup(name);
            check_shape(name, t, shape);
            state.det_params[name] = leaf(t);
        }
        return state;
    }
    for (const auto& [name, shape] : shapes) {
        const Tensor& mu = lookup("mu." + name);
        const Tensor& rho = lookup("rho." + name);
        check_shape("mu." + name, mu, shape);
        check_shape("rho." + name, rho, shape);
        if (name == kHeadName) {
            state.q_m.mu[name] = leaf(mu);
            state.q_m.rho[name] = leaf(rho);
        } else {
            state.q_h.mu[name] = leaf(mu);
            state.q_h.rho[name] = leaf(rho);
        }
    }
    const Tensor& loc = lookup("s.loc");
    check_shape("s.loc", loc, Shape{net.feature_dim(), net.num_labels});
    state.q_s.loc = leaf(loc);
    state.q_s.sigma_s = sigma_s;
    return state;
}

ThetaDraw sample_theta(const ModelState& state, Rng& noise_rng) {
    ThetaDraw draw;
    if (state.mode == TrainMode::deterministic) {
        draw.params = state.det_params;
        return draw;
    }
    draw.params = sample_reparam(state.q_h, noise_rng);
    VarMap m_draw = sample_reparam(state.q_m, noise_rng);
    draw.m = m_draw.at(kHeadName);
    draw.s = sample_lognormal(state.q_s, noise_rng);
    Var eps = constant(Tensor::randn(draw.m->value.shape(), noise_rng));
    draw.params[kHeadName] = add(draw.m, mul(sqrt_op(draw.s), eps));
    return draw;
}

Var bce_log_likelihood(const Var& y, const Var& probs) {
    if (y->value.shape() != probs->value.shape())
        fail(ErrorKind::shape, "labels " + shape_str(y->value.shape()) + " vs probs " +
                                   shape_str(probs->value.shape()));
    Var p = clamp(probs, 1e-7, 1.0 - 1e-7);
    Var one = scalar_const(1.0);
    return sum(add(mul(y, log_op(p)), mul(sub(one, y), log_op(sub(one, p)))));
}

ObjectiveResult objective(const ModelState& state, const Tensor& x_ehr, const Tensor& x_cxr,
                          const Tensor& y, std::size_t dataset_size,
                          const std::optional<ContextBatch>& context, const PriorSpec& prior,
                          const M2d2Config& m2cfg, const TrainConfig& tcfg, Rng& noise_rng) {
    std::size_t batch = x_ehr.extent(0);
    if (batch == 0) fail(ErrorKind::invalid_argument, "objective on an empty minibatch");
    double rescale = static_cast<double>(dataset_size) / static_cast<double>(batch);
    std::size_t draws = state.mode == TrainMode::deterministic ? 1 : tcfg.mc_samples_train;

    Var ehr = constant(x_ehr);
    Var cxr = constant(x_cxr);
    Var labels = constant(y);

    Var ll_sum;
    Var unc_sum;
    bool want_unc = tcfg.uncertainty_enabled();
    if (want_unc && !context)
        fail(ErrorKind::invalid_argument, "uncertainty term requires a context batch");
    for (std::size_t s = 0; s < draws; ++s) {
        ThetaDraw draw = sample_theta(state, noise_rng);
        Var probs = sigmoid(logits(ehr, cxr, draw.params, state.net));
        Var ll = bce_log_likelihood(labels, probs);
        ll_sum = s == 0 ? ll : add(ll_sum, ll);
        if (want_unc) {
            Var unc = uncertainty_regularizer(*context, draw.params, draw.m, draw.s, m2cfg,
                                              state.net);
            unc_sum = s == 0 ? unc : add(unc_sum, unc);
        }
    }
    double inv_draws = 1.0 / static_cast<double>(draws);
    Var obj = mul(ll_sum, scalar_const(rescale * inv_draws));

    ObjectiveResult result;
    result.parts.likelihood = obj->value.item();

    if (tcfg.kl_enabled()) {
        Var kl = add(kl_gaussian_diag(state.q_h, 0.0, prior.theta_h_var),
                     kl_gaussian_diag(state.q_m, prior.m_loc, 1.0 / prior.m_prec));
        obj = sub(obj, kl);
        result.parts.kl = -kl->value.item();
    }
    if (want_unc) {
        Var unc = mul(unc_sum, scalar_const(inv_draws));
        obj = add(obj, unc);
        result.parts.uncertainty = unc->value.item();
    }
    if (tcfg.s_penalty_enabled()) {
        Var pen = s_penalty(state.q_s, prior.s_tau);
        obj = sub(obj, pen);
        result.parts.s_penalty = -pen->value.item();
    }
    result.value = obj;
    return result;
}

void adam_step(const std::map<std::string, Var>& params, AdamState& state, double lr) {
    // validate every gradient before touching any state, so a rejected step
    // leaves parameters and moments untouched
    for (const auto& [name, var] : params) {
        if (var->grad.shape() != var->value.shape())
            fail(ErrorKind::runtime, "parameter \"" + name + "\" has no gradient");
        if (!var->grad.all_finite())
            fail(ErrorKind::runtime, "non-finite gradient in \"" + name + "\"; step rejected");
    }
    ++state.t;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (const auto& [name, var] : params) {
        Tensor& m = state.m.try_emplace(name, Tensor::zeros(var->value.shape())).first->second;
        Tensor& v = state.v.try_emplace(name, Tensor::zeros(var->value.shape())).first->second;
        double* mp = m.data();
        double* vp = v.data();
        double* value = var->value.data();
        const double* g = var->grad.data();
        for (std::size_t i = 0; i < var->value.numel(); ++i) {
            mp[i] = state.beta1 * mp[i] + (1.0 - state.beta1) * g[i];
            vp[i] = state.beta2 * vp[i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = mp[i] / bc1;
            double vhat = vp[i] / bc2;
            value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double hypervolume(const std::array<double, 4>& metrics) {
    double r2 = 0.0;
    for (double m : metrics) {
        if (!(m >= 0.0 && m <= 1.0))
            fail(ErrorKind::invalid_argument,
                 "hypervolume metric " + std::to_string(m) + " outside [0, 1]");
        r2 += m * m;
    }
    constexpr double kPiSq = 9.869604401089358;
    return kPiSq * r2 * r2 / 2.0;
}

namespace {

struct Batch {
    Tensor x_ehr, x_cxr, y;
};

Batch gather_rows(const DatasetSplit& split, const std::vector<std::size_t>& rows) {
    std::size_t t = split.x_ehr.extent(1), d = split.x_ehr.extent(2);
    std::size_t c = split.x_cxr.extent(1), h = split.x_cxr.extent(2), w = split.x_cxr.extent(3);
    std::size_t q = split.labels.extent(1);
    Batch b;
    b.x_ehr = Tensor(Shape{rows.size(), t, d});
    b.x_cxr = Tensor(Shape{rows.size(), c, h, w});
    b.y = Tensor(Shape{rows.size(), q});
    std::size_t es = t * d, cs = c * h * w;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* se = split.x_ehr.data() + rows[i] * es;
        const double* sc = split.x_cxr.data() + rows[i] * cs;
        const double* sy = split.labels.data() + rows[i] * q;
        std::copy(se, se + es, b.x_ehr.data() + i * es);
        std::copy(sc, sc + cs, b.x_cxr.data() + i * cs);
        std::copy(sy, sy + q, b.y.data() + i * q);
    }
    return b;
}

VarMap as_constants(const std::map<std::string, Tensor>& values) {
    VarMap out;
    for (const auto& [name, t] : values) out[name] = constant(t);
    return out;
}

// Graph-free parameter draw for evaluation.
std::map<std::string, Tensor> draw_values(const ModelState& state, Rng& rng) {
    std::map<std::string, Tensor> out;
    if (state.mode == TrainMode::deterministic) {
        for (const auto& [name, var] : state.det_params) out[name] = var->value;
        return out;
    }
    auto draw_group = [&](const GaussianMeanField& q) {
        for (const auto& [name, mu] : q.mu) {
            const Tensor& rho = q.rho.at(name)->value;
            Tensor v = mu->value;
            for (std::size_t i = 0; i < v.numel(); ++i) {
                double sd = std::log1p(std::exp(std::min(rho[i], 30.0)));
                if (rho[i] > 30.0) sd = rho[i];
                v[i] += sd * rng.normal();
            }
            out[name] = std::move(v);
        }
    };
    draw_group(state.q_h);
    draw_group(state.q_m);
    const Tensor& loc = state.q_s.loc->value;
    Tensor head = out.at(kHeadName);
    for (std::size_t i = 0; i < head.numel(); ++i) {
        double s = std::exp(loc[i] + state.sigma_s * rng.normal());
        head[i] += std::sqrt(s) * rng.normal();
    }
    out[kHeadName] = std::move(head);
    return out;
}

void check_dataset_shapes(const Dataset& data, const NetworkConfig& net) {
    const DatasetSplit& t = data.train;
    if (t.size() == 0 || data.val.size() == 0)
        fail(ErrorKind::invalid_argument, "training needs non-empty train and val splits");
    if (t.x_ehr.ndim() != 3 || t.x_ehr.extent(2) != net.ts_input_dim)
        fail(ErrorKind::shape, "train x_ehr " + shape_str(t.x_ehr.shape()) +
                                   " does not match network.ts_input_dim = " +
                                   std::to_string(net.ts_input_dim));
    if (t.x_cxr.ndim() != 4 || t.x_cxr.extent(1) != net.img_channels ||
        t.x_cxr.extent(2) != net.img_side || t.x_cxr.extent(3) != net.img_side)
        fail(ErrorKind::shape, "train x_cxr " + shape_str(t.x_cxr.shape()) +
                                   " does not match the network image config");
    if (t.labels.ndim() != 2 || t.labels.extent(1) != net.num_labels)
        fail(ErrorKind::shape, "train labels " + shape_str(t.labels.shape()) +
                                   " do not match network.num_labels = " +
                                   std::to_string(net.num_labels));
}

}  // namespace

PredictionSet predict(const ModelState& state, const DatasetSplit& split, std::size_t mc_samples,
                      Rng& rng) {
    std::size_t n = split.size(), q = state.net.num_labels;
    if (n == 0) fail(ErrorKind::invalid_argument, "predict on an empty split");
    std::size_t draws = state.mode == TrainMode::deterministic ? 1 : mc_samples;
    Tensor mean_probs(Shape{n, q});

    constexpr std::size_t kChunk = 64;
    for (std::size_t s = 0; s < draws; ++s) {
        VarMap params = as_constants(draw_values(state, rng));
        for (std::size_t lo = 0; lo < n; lo += kChunk) {
            std::size_t hi = std::min(n, lo + kChunk);
            std::vector<std::size_t> rows(hi - lo);
            std::iota(rows.begin(), rows.end(), lo);
            Batch b = gather_rows(split, rows);
            Var p = sigmoid(logits(constant(b.x_ehr), constant(b.x_cxr), params, state.net));
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t k = 0; k < q; ++k)
                    mean_probs[(lo + i) * q + k] += p->value[i * q + k];
        }
    }
    for (std::size_t i = 0; i < mean_probs.numel(); ++i)
        mean_probs[i] /= static_cast<double>(draws);
    return PredictionSet::from_probs(std::move(mean_probs), split.labels);
}

MetricVector metric_vector(const PredictionSet& preds) {
    std::size_t q = preds.num_labels();
    std::vector<std::optional<double>> roc(q), prc(q), sel_roc(q), sel_prc(q);
    for (std::size_t k = 0; k < q; ++k) {
        auto scores = preds.prob_column(k);
        auto labels = preds.label_column(k);
        roc[k] = auroc(scores, labels);
        prc[k] = auprc(scores, labels);
        sel_roc[k] = selective_sweep(preds, k, BaseMetric::auroc).average;
        sel_prc[k] = selective_sweep(preds, k, BaseMetric::auprc).average;
    }
    MetricVector out;
    LabelAggregate a0 = aggregate_labels(roc), a1 = aggregate_labels(prc),
                   a2 = aggregate_labels(sel_roc), a3 = aggregate_labels(sel_prc);
    out.values = {a0.value.value_or(0.0), a1.value.value_or(0.0), a2.value.value_or(0.0),
                  a3.value.value_or(0.0)};
    out.skipped_labels = std::max(std::max(a0.skipped, a1.skipped),
                                  std::max(a2.skipped, a3.skipped));
    return out;
}

TrainResult train(const Dataset& data, const NetworkConfig& net, const PriorSpec& prior,
                  const M2d2Config& m2cfg, const TransformSuite& suite, const TrainConfig& tcfg) {
    net.validate();
    prior.validate();
    m2cfg.validate();
    tcfg.validate();
    check_dataset_shapes(data, net);

    Rng init_rng(tcfg.seed, 0);
    Rng shuffle_rng(tcfg.seed, 1);
    Rng noise_rng(tcfg.seed, 2);
    Rng context_rng(tcfg.seed, 3);

    ModelState state = ModelState::init(net, tcfg.mode, prior.sigma_s, tcfg.posterior_init_std,
                                        init_rng);
    std::map<std::string, Var> leaves_by_name = state.leaves();
    std::vector<Var> leaf_list;
    for (const auto& [name, var] : leaves_by_name) leaf_list.push_back(var);
    AdamState adam;

    std::size_t n = data.train.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    result.best.hv = -1.0;
    std::size_t global_step = 0;

    M2d2Config step_cfg = m2cfg;
    step_cfg.context_batch_size = tcfg.context_batch_size;

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        // Fisher-Yates on the dedicated stream, so every mode sees the same
        // batch order for a given seed
        for (std::size_t i = n; i-- > 1;) {
            std::size_t j = shuffle_rng.index(i + 1);
            std::swap(order[i], order[j]);
        }

        ObjectiveParts epoch_parts;
        double epoch_objective = 0.0;
        std::size_t steps = 0;
        for (std::size_t lo = 0; lo < n; lo += tcfg.batch_size, ++steps) {
            std::size_t hi = std::min(n, lo + tcfg.batch_size);
            std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                          order.begin() + static_cast<std::ptrdiff_t>(hi));
            try {
                Batch b = gather_rows(data.train, rows);
                std::optional<ContextBatch> context;
                if (tcfg.uncertainty_enabled())
                    context = sample_context_batch(data.train, suite, tcfg.context_batch_size,
                                                   context_rng);
                ObjectiveResult obj = objective(state, b.x_ehr, b.x_cxr, b.y, n, context, prior,
                                                step_cfg, tcfg, noise_rng);
                zero_grad(leaf_list);
                backward(neg(obj.value));
                adam_step(leaves_by_name, adam, tcfg.learning_rate);

                epoch_parts.likelihood += obj.parts.likelihood;
                epoch_parts.kl += obj.parts.kl;
                epoch_parts.uncertainty += obj.parts.uncertainty;
                epoch_parts.s_penalty += obj.parts.s_penalty;
                epoch_objective += obj.parts.total();
                ++global_step;
            } catch (const Error& e) {
                throw Error(e.kind(), "epoch " + std::to_string(epoch) + " step " +
                                          std::to_string(steps) + ": " + e.what());
            }
        }
        double inv = 1.0 / static_cast<double>(steps);
        epoch_parts.likelihood *= inv;
        epoch_parts.kl *= inv;
        epoch_parts.uncertainty *= inv;
        epoch_parts.s_penalty *= inv;

        Rng eval_rng(tcfg.seed, 1000 + epoch);
        PredictionSet val_preds = predict(state, data.val, tcfg.mc_samples_eval, eval_rng);
        MetricVector metrics = metric_vector(val_preds);
        double hv = hypervolume(metrics.values);

        EpochLog row;
        row.epoch = epoch;
        row.parts = epoch_parts;
        row.objective = epoch_objective * inv;
        row.val_metrics = metrics.values;
        row.hv = hv;
        result.log.push_back(row);

        if (hv > result.best.hv) {
            result.best.step = global_step;
            result.best.epoch = epoch;
            result.best.tensors = state.snapshot();
            result.best.metrics = metrics.values;
            result.best.hv = hv;
        }
    }
    return result;
}

}  // namespace m2d2
