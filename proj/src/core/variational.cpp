#include "core/variational.hpp"

#include <cmath>

namespace m2d2 {

void PriorSpec::validate() const {
    if (theta_h_var <= 0.0) fail(ErrorKind::config, "prior.theta_h_var must be > 0");
    if (m_prec <= 0.0) fail(ErrorKind::config, "prior.m_prec must be > 0");
    if (s_tau <= 0.0) fail(ErrorKind::config, "prior.s_tau must be > 0");
    if (sigma_s < 0.0) fail(ErrorKind::config, "prior.sigma_s must be >= 0");
}

GaussianMeanField GaussianMeanField::init(const std::map<std::string, Tensor>& mu_init,
                                          double init_std) {
    if (init_std <= 0.0) fail(ErrorKind::config, "posterior init std must be > 0");
    GaussianMeanField q;
    double rho0 = inverse_softplus(init_std);
    for (const auto& [name, value] : mu_init) {
        q.mu[name] = leaf(value);
        q.rho[name] = leaf(Tensor::full(value.shape(), rho0));
    }
    return q;
}

std::size_t GaussianMeanField::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, v] : mu) n += v->value.numel();
    return n;
}

LogNormalVariational LogNormalVariational::init(const Shape& shape, double loc_init,
                                                double sigma_s) {
    LogNormalVariational q;
    q.loc = leaf(Tensor::full(shape, loc_init));
    q.sigma_s = sigma_s;
    return q;
}

VarMap sample_reparam(const GaussianMeanField& q, Rng& rng) {
    VarMap out;
    for (const auto& [name, mu] : q.mu) {
        const Var& rho = q.rho.at(name);
        Var eps = constant(Tensor::randn(mu->value.shape(), rng));
        out[name] = add(mu, mul(softplus(rho), eps));
    }
    return out;
}

Var sample_lognormal(const LogNormalVariational& q, Rng& rng) {
    Var eps = constant(Tensor::randn(q.loc->value.shape(), rng));
    return exp_op(add(q.loc, mul(scalar_const(q.sigma_s), eps)));
}

Var kl_gaussian_diag(const GaussianMeanField& q, double prior_mean, double prior_var) {
    if (prior_var <= 0.0) fail(ErrorKind::config, "prior variance must be > 0");
    double log_sigma_p = 0.5 * std::log(prior_var);
    Var total = scalar_const(0.0);
    for (const auto& [name, mu] : q.mu) {
        const Var& rho = q.rho.at(name);
        Var sigma_q = softplus(rho);
        Var quad = add(sum(square(sigma_q)), sum(square(sub(mu, scalar_const(prior_mean)))));
        double n = static_cast<double>(mu->value.numel());
        total = add(total, add(sub(scalar_const(n * (log_sigma_p - 0.5)), sum(log_op(sigma_q))),
                               mul(quad, scalar_const(0.5 / prior_var))));
    }
    return total;
}

Var s_penalty(const LogNormalVariational& q, double tau_s) {
    return mul(scalar_const(tau_s), sum(square(q.loc)));
}

}  // namespace m2d2
