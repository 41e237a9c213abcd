#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/dataset.hpp"
#include "core/fusionnet.hpp"
#include "core/rng.hpp"

namespace m2d2 {

enum class TsTransformKind { drop_start, gaussian_noise, invert };
enum class ImgTransformKind {
    random_crop,
    hflip,
    vflip,
    gaussian_blur,
    solarize,
    invert,
    color_jitter,
};

std::string to_string(TsTransformKind k);
std::string to_string(ImgTransformKind k);
TsTransformKind ts_transform_from_string(const std::string& s);
ImgTransformKind img_transform_from_string(const std::string& s);

struct TsTransform {
    TsTransformKind kind = TsTransformKind::invert;
    double drop_fraction = 0.25;  // (0, 1)
    double noise_sigma = 0.5;     // > 0

    void validate() const;
};

struct ImgTransform {
    ImgTransformKind kind = ImgTransformKind::invert;
    double crop_ratio = 0.75;        // (0, 1]
    double blur_sigma = 1.0;         // > 0, 3x3 kernel
    double solarize_threshold = 0.5; // [0, 1]
    double jitter_brightness = 0.2;  // +- range
    double jitter_contrast = 0.2;    // +- range around 1

    void validate() const;
};

// The per-modality transformation pools a context row draws from.
struct TransformSuite {
    std::vector<TsTransform> ts;
    std::vector<ImgTransform> img;

    static TransformSuite defaults();
};

// Paired transformed inputs representing the prior's context distribution.
struct ContextBatch {
    Tensor x_ehr;  // [M, T, d]
    Tensor x_cxr;  // [M, C, S, S]

    std::size_t size() const { return x_ehr.extent(0); }
};

// Scalar hyperparameters of the context likelihood:
//   K_k = cov_scale * s_k * H H^T + beta I, likelihood precision tau_f,
//   mean f_scale * H m_k.
struct M2d2Config {
    double tau_f = 1.0;
    double beta = 5.0;
    double f_scale = 10.0;
    double cov_scale = 0.1;
    std::size_t context_batch_size = 64;
    bool include_logdet = true;    // off reproduces the Mahalanobis-only objective
    bool include_constant = true;  // the -(M/2) log(2 pi / tau_f) term

    bool mahalanobis_only() const { return !include_logdet && !include_constant; }
    void validate() const;
};

// drop_start zeroes the first floor(drop_fraction * T) steps, gaussian_noise
// adds iid N(0, sigma^2), invert reverses time order. Requires T >= 2.
Tensor transform_timeseries(const Tensor& x, const TsTransform& t, Rng& rng);

// Pixel range [0, 1] in and out; spatial size preserved (crop re-resizes).
Tensor transform_image(const Tensor& x, const ImgTransform& t, Rng& rng);

// M rows sampled uniformly from train, one uniformly chosen transform per
// modality per row, drawn independently.
ContextBatch sample_context_batch(const DatasetSplit& train, const TransformSuite& suite,
                                  std::size_t m, Rng& rng);

// K = cov_scale * s_k * H H^T + beta I  (symmetric positive definite)
Var context_kernel(const Var& h, const Var& s_k, const M2d2Config& cfg);

// Gaussian context log-likelihood of predicting zero on the context batch,
// summed over labels:
//   sum_k [ -(tau_f/2) d^2(f_scale H m_k, K_k) - 1/2 log det K_k
//           - (M/2) log(2 pi / tau_f) ]
// with the log-det and constant terms individually switchable.
Var uncertainty_regularizer(const ContextBatch& context, const VarMap& theta_h, const Var& m,
                            const Var& s, const M2d2Config& cfg, const NetworkConfig& net);

}  // namespace m2d2
