#include "core/m2d2prior.hpp"

#include <algorithm>
#include <cmath>

namespace m2d2 {

std::string to_string(TsTransformKind k) {
    switch (k) {
        case TsTransformKind::drop_start: return "drop_start";
        case TsTransformKind::gaussian_noise: return "gaussian_noise";
        case TsTransformKind::invert: return "invert";
    }
    fail(ErrorKind::invalid_argument, "unknown ts transform kind");
}

std::string to_string(ImgTransformKind k) {
    switch (k) {
        case ImgTransformKind::random_crop: return "random_crop";
        case ImgTransformKind::hflip: return "hflip";
        case ImgTransformKind::vflip: return "vflip";
        case ImgTransformKind::gaussian_blur: return "gaussian_blur";
        case ImgTransformKind::solarize: return "solarize";
        case ImgTransformKind::invert: return "invert";
        case ImgTransformKind::color_jitter: return "color_jitter";
    }
    fail(ErrorKind::invalid_argument, "unknown img transform kind");
}

TsTransformKind ts_transform_from_string(const std::string& s) {
    if (s == "drop_start") return TsTransformKind::drop_start;
    if (s == "gaussian_noise") return TsTransformKind::gaussian_noise;
    if (s == "invert") return TsTransformKind::invert;
    fail(ErrorKind::config, "unknown time-series transform \"" + s + "\"");
}

ImgTransformKind img_transform_from_string(const std::string& s) {
    if (s == "random_crop") return ImgTransformKind::random_crop;
    if (s == "hflip") return ImgTransformKind::hflip;
    if (s == "vflip") return ImgTransformKind::vflip;
    if (s == "gaussian_blur") return ImgTransformKind::gaussian_blur;
    if (s == "solarize") return ImgTransformKind::solarize;
    if (s == "invert") return ImgTransformKind::invert;
    if (s == "color_jitter") return ImgTransformKind::color_jitter;
    fail(ErrorKind::config, "unknown image transform \"" + s + "\"");
}

void TsTransform::validate() const {
    if (kind == TsTransformKind::drop_start && (drop_fraction <= 0.0 || drop_fraction >= 1.0))
        fail(ErrorKind::config, "drop_fraction must lie in (0, 1)");
    if (kind == TsTransformKind::gaussian_noise && noise_sigma <= 0.0)
        fail(ErrorKind::config, "noise_sigma must be > 0");
}

void ImgTransform::validate() const {
    if (kind == ImgTransformKind::random_crop && (crop_ratio <= 0.0 || crop_ratio > 1.0))
        fail(ErrorKind::config, "crop_ratio must lie in (0, 1]");
    if (kind == ImgTransformKind::gaussian_blur && blur_sigma <= 0.0)
        fail(ErrorKind::config, "blur_sigma must be > 0");
    if (kind == ImgTransformKind::solarize &&
        (solarize_threshold < 0.0 || solarize_threshold > 1.0))
        fail(ErrorKind::config, "solarize_threshold must lie in [0, 1]");
    if (jitter_brightness < 0.0 || jitter_contrast < 0.0)
        fail(ErrorKind::config, "jitter ranges must be >= 0");
}

void M2d2Config::validate() const {
    if (tau_f <= 0.0) fail(ErrorKind::config, "m2d2.tau_f must be > 0");
    if (beta <= 0.0) fail(ErrorKind::config, "m2d2.beta must be > 0");
    if (f_scale < 0.0) fail(ErrorKind::config, "m2d2.f_scale must be >= 0");
    if (cov_scale <= 0.0) fail(ErrorKind::config, "m2d2.cov_scale must be > 0");
    if (context_batch_size < 1) fail(ErrorKind::config, "m2d2.context_batch_size must be >= 1");
}

TransformSuite TransformSuite::defaults() {
    TransformSuite suite;
    for (auto k : {TsTransformKind::drop_start, TsTransformKind::gaussian_noise,
                   TsTransformKind::invert}) {
        TsTransform t;
        t.kind = k;
        suite.ts.push_back(t);
    }
    for (auto k : {ImgTransformKind::random_crop, ImgTransformKind::hflip, ImgTransformKind::vflip,
                   ImgTransformKind::gaussian_blur, ImgTransformKind::solarize,
                   ImgTransformKind::invert, ImgTransformKind::color_jitter}) {
        ImgTransform t;
        t.kind = k;
        suite.img.push_back(t);
    }
    return suite;
}

Tensor transform_timeseries(const Tensor& x, const TsTransform& t, Rng& rng) {
    if (x.ndim() != 2)
        fail(ErrorKind::shape, "time series must be [T, d], got " + shape_str(x.shape()));
    std::size_t steps = x.extent(0), d = x.extent(1);
    if (steps < 2)
        fail(ErrorKind::invalid_argument,
             "degenerate sequence: need T >= 2, got T = " + std::to_string(steps));
    t.validate();

    Tensor out = x;
    switch (t.kind) {
        case TsTransformKind::drop_start: {
            std::size_t cut = static_cast<std::size_t>(
                std::floor(t.drop_fraction * static_cast<double>(steps)));
            for (std::size_t i = 0; i < cut * d; ++i) out[i] = 0.0;
            break;
        }
        case TsTransformKind::gaussian_noise: {
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] += t.noise_sigma * rng.normal();
            break;
        }
        case TsTransformKind::invert: {
            for (std::size_t i = 0; i < steps; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    out.at({i, j}) = x.at({steps - 1 - i, j});
            break;
        }
    }
    return out;
}

namespace {

void check_pixel_range(const Tensor& x) {
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (!(x[i] >= 0.0 && x[i] <= 1.0))
            fail(ErrorKind::invalid_argument,
                 "image pixel " + std::to_string(i) + " = " + std::to_string(x[i]) +
                     " outside [0, 1]");
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

Tensor transform_image(const Tensor& x, const ImgTransform& t, Rng& rng) {
    if (x.ndim() != 3)
        fail(ErrorKind::shape, "image must be [C, H, W], got " + shape_str(x.shape()));
    check_pixel_range(x);
    t.validate();
    std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    Tensor out = x;

    switch (t.kind) {
        case ImgTransformKind::random_crop: {
            std::size_t ch2 = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(t.crop_ratio * static_cast<double>(h))));
            std::size_t cw2 = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::lround(t.crop_ratio * static_cast<double>(w))));
            ch2 = std::min(ch2, h);
            cw2 = std::min(cw2, w);
            std::size_t top = rng.index(h - ch2 + 1);
            std::size_t left = rng.index(w - cw2 + 1);
            // crop then nearest-neighbor resize back to the original size
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) {
                        std::size_t si = top + std::min(ch2 - 1, (i * ch2) / h);
                        std::size_t sj = left + std::min(cw2 - 1, (j * cw2) / w);
                        out.at({ci, i, j}) = x.at({ci, si, sj});
                    }
            break;
        }
        case ImgTransformKind::hflip: {
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        out.at({ci, i, j}) = x.at({ci, i, w - 1 - j});
            break;
        }
        case ImgTransformKind::vflip: {
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        out.at({ci, i, j}) = x.at({ci, h - 1 - i, j});
            break;
        }
        case ImgTransformKind::gaussian_blur: {
            // 3x3 kernel, renormalized at the borders so constants stay fixed
            double s2 = 2.0 * t.blur_sigma * t.blur_sigma;
            double k[3][3];
            for (int p = -1; p <= 1; ++p)
                for (int q = -1; q <= 1; ++q)
                    k[p + 1][q + 1] = std::exp(-(p * p + q * q) / s2);
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t i = 0; i < h; ++i)
                    for (std::size_t j = 0; j < w; ++j) {
                        double acc = 0.0, wsum = 0.0;
                        for (int p = -1; p <= 1; ++p)
                            for (int q = -1; q <= 1; ++q) {
                                long si = static_cast<long>(i) + p;
                                long sj = static_cast<long>(j) + q;
                                if (si < 0 || sj < 0 || si >= static_cast<long>(h) ||
                                    sj >= static_cast<long>(w))
                                    continue;
                                acc += k[p + 1][q + 1] *
                                       x.at({ci, static_cast<std::size_t>(si),
                                             static_cast<std::size_t>(sj)});
                                wsum += k[p + 1][q + 1];
                            }
                        out.at({ci, i, j}) = acc / wsum;
                    }
            break;
        }
        case ImgTransformKind::solarize: {
            for (std::size_t i = 0; i < out.numel(); ++i)
                if (out[i] >= t.solarize_threshold) out[i] = 1.0 - out[i];
            break;
        }
        case ImgTransformKind::invert: {
            for (std::size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 - out[i];
            break;
        }
        case ImgTransformKind::color_jitter: {
            double brightness = rng.uniform(-t.jitter_brightness, t.jitter_brightness);
            double contrast = 1.0 + rng.uniform(-t.jitter_contrast, t.jitter_contrast);
            for (std::size_t i = 0; i < out.numel(); ++i)
                out[i] = clamp01(contrast * (out[i] - 0.5) + 0.5 + brightness);
            break;
        }
    }
    return out;
}

ContextBatch sample_context_batch(const DatasetSplit& train, const TransformSuite& suite,
                                  std::size_t m, Rng& rng) {
    if (train.size() == 0) fail(ErrorKind::invalid_argument, "context sampling from empty train set");
    if (m < 1) fail(ErrorKind::invalid_argument, "context batch size must be >= 1");
    if (suite.ts.empty() || suite.img.empty())
        fail(ErrorKind::config, "transform suite must contain at least one transform per modality");

    std::size_t steps = train.x_ehr.extent(1), d = train.x_ehr.extent(2);
    std::size_t c = train.x_cxr.extent(1), h = train.x_cxr.extent(2), w = train.x_cxr.extent(3);

    ContextBatch batch;
    batch.x_ehr = Tensor(Shape{m, steps, d});
    batch.x_cxr = Tensor(Shape{m, c, h, w});
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t row = rng.index(train.size());
        Tensor ehr = transform_timeseries(train.ehr_row(row), suite.ts[rng.index(suite.ts.size())],
                                          rng);
        Tensor cxr = transform_image(train.cxr_row(row), suite.img[rng.index(suite.img.size())],
                                     rng);
        for (std::size_t j = 0; j < ehr.numel(); ++j) batch.x_ehr[i * steps * d + j] = ehr[j];
        for (std::size_t j = 0; j < cxr.numel(); ++j) batch.x_cxr[i * c * h * w + j] = cxr[j];
    }
    return batch;
}

Var context_kernel(const Var& h, const Var& s_k, const M2d2Config& cfg) {
    if (s_k->value.item() <= 0.0)
        fail(ErrorKind::invalid_argument, "context kernel needs s_k > 0");
    std::size_t m = h->value.extent(0);
    Var gram = matmul(h, transpose(h));
    Var scaled = mul(gram, mul(s_k, scalar_const(cfg.cov_scale)));
    Tensor jitter = Tensor::identity(m);
    for (std::size_t i = 0; i < m; ++i) jitter.at({i, i}) = cfg.beta;
    return add(scaled, constant(jitter));
}

Var uncertainty_regularizer(const ContextBatch& context, const VarMap& theta_h, const Var& m,
                            const Var& s, const M2d2Config& cfg, const NetworkConfig& net) {
    cfg.validate();
    std::size_t rows = context.size();
    std::size_t f = net.feature_dim(), q = net.num_labels;
    if (m->value.shape() != Shape{f, q} || s->value.shape() != Shape{f, q})
        fail(ErrorKind::shape, "final-layer samples must be [" + std::to_string(f) + ", " +
                                   std::to_string(q) + "]");

    Var h = features(constant(context.x_ehr), constant(context.x_cxr), theta_h, net);
    double constant_term =
        -0.5 * static_cast<double>(rows) * std::log(2.0 * 3.14159265358979323846 / cfg.tau_f);

    Var total = scalar_const(0.0);
    for (std::size_t k = 0; k < q; ++k) {
        Var m_k = reshape(slice(m, 1, k, 1), Shape{f, 1});
        Var mean_k = mul(reshape(matmul(h, m_k), Shape{rows}), scalar_const(cfg.f_scale));
        Var s_k = mean(slice(s, 1, k, 1));
        Var kernel = context_kernel(h, s_k, cfg);
        Var term = mul(mahalanobis_sq(mean_k, kernel), scalar_const(-0.5 * cfg.tau_f));
        if (cfg.include_logdet) term = sub(term, mul(logdet_spd(kernel), scalar_const(0.5)));
        if (cfg.include_constant) term = add(term, scalar_const(constant_term));
        total = add(total, term);
    }
    return total;
}

}  // namespace m2d2
