#pragma once

#include <map>
#include <string>

#include "core/autodiff.hpp"
#include "core/rng.hpp"

namespace m2d2 {

// Scalar hyperparameters of the prior and hyperpriors:
//   p(theta_h) = N(0, theta_h_var I)
//   p(m)       = N(m_loc, m_prec^-1 I)
//   p(s)       = Lognormal(0, 2 s_tau^-1 I)
struct PriorSpec {
    double theta_h_var = 0.1;
    double m_loc = 0.0;
    double m_prec = 10.0;
    double s_tau = 1.0;
    double sigma_s = 0.1;  // fixed scale of the lognormal variational q(s)

    void validate() const;
};

// Diagonal Gaussian over a set of named tensors; std = softplus(rho).
struct GaussianMeanField {
    std::map<std::string, Var> mu;
    std::map<std::string, Var> rho;

    // rho chosen so softplus(rho) = init_std.
    static GaussianMeanField init(const std::map<std::string, Tensor>& mu_init,
                                  double init_std = 0.05);

    std::size_t param_count() const;
};

// Lognormal over the final-layer variances: s = exp(loc + sigma_s * eps).
struct LogNormalVariational {
    Var loc;         // [feature_dim, num_labels]
    double sigma_s;  // fixed

    static LogNormalVariational init(const Shape& shape, double loc_init, double sigma_s);
};

inline double inverse_softplus(double y) { return std::log(std::expm1(y)); }

// theta = mu + softplus(rho) (.) eps with eps ~ N(0, I); gradients flow to mu
// and rho through the retained noise.
VarMap sample_reparam(const GaussianMeanField& q, Rng& rng);

// s = exp(loc + sigma_s * eps), strictly positive.
Var sample_lognormal(const LogNormalVariational& q, Rng& rng);

// sum_i [ log(sigma_p / sigma_q,i) + (sigma_q,i^2 + (mu_q,i - mu_p)^2) / (2 sigma_p^2) - 1/2 ]
// against an isotropic prior N(prior_mean, prior_var I).
Var kl_gaussian_diag(const GaussianMeanField& q, double prior_mean, double prior_var);

// tau_s * ||loc||_2^2, the learnable part of the q(s) hyperprior KL.
Var s_penalty(const LogNormalVariational& q, double tau_s);

}  // namespace m2d2
