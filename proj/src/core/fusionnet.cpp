#include "core/fusionnet.hpp"

#include <cmath>

namespace m2d2 {

void NetworkConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v < 1) fail(ErrorKind::config, std::string("network.") + name + " must be >= 1");
    };
    positive(ts_input_dim, "ts_input_dim");
    positive(ts_hidden_dim, "ts_hidden_dim");
    positive(ts_layers, "ts_layers");
    positive(img_channels, "img_channels");
    positive(num_labels, "num_labels");
    if (img_side < 8) fail(ErrorKind::config, "network.img_side must be >= 8");
    if (conv_channels.empty()) fail(ErrorKind::config, "network.conv_channels must be non-empty");
    for (std::size_t c : conv_channels) positive(c, "conv_channels entry");
    // each block shrinks by 2 (3x3 valid conv) then halves (2x2 pool)
    std::size_t side = img_side;
    for (std::size_t i = 0; i < conv_channels.size(); ++i) {
        if (side < 3)
            fail(ErrorKind::config, "network.img_side too small for " +
                                        std::to_string(conv_channels.size()) + " conv blocks");
        side = (side - 2) / 2;
        if (side < 1)
            fail(ErrorKind::config, "network.img_side too small for " +
                                        std::to_string(conv_channels.size()) + " conv blocks");
    }
}

std::map<std::string, Shape> parameter_shapes(const NetworkConfig& cfg) {
    std::map<std::string, Shape> shapes;
    std::size_t h = cfg.ts_hidden_dim;
    for (std::size_t l = 0; l < cfg.ts_layers; ++l) {
        std::size_t in = l == 0 ? cfg.ts_input_dim : h;
        std::string p = "ts.l" + std::to_string(l) + ".";
        shapes[p + "wx"] = Shape{in, 4 * h};
        shapes[p + "wh"] = Shape{h, 4 * h};
        shapes[p + "b"] = Shape{4 * h};
    }
    std::size_t in_ch = cfg.img_channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        std::string p = "img.b" + std::to_string(i) + ".";
        shapes[p + "w"] = Shape{cfg.conv_channels[i], in_ch, 3, 3};
        shapes[p + "b"] = Shape{cfg.conv_channels[i]};
        in_ch = cfg.conv_channels[i];
    }
    shapes[kHeadName] = Shape{cfg.feature_dim(), cfg.num_labels};
    return shapes;
}

VarMap init_parameters(const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    VarMap params;
    for (const auto& [name, shape] : parameter_shapes(cfg)) {
        bool is_bias = shape.size() == 1;
        if (is_bias) {
            Tensor b = Tensor::zeros(shape);
            if (name.rfind("ts.", 0) == 0) {
                // forget-gate block is the second quarter of the packed gates
                std::size_t h = shape[0] / 4;
                for (std::size_t i = h; i < 2 * h; ++i) b[i] = 1.0;
            }
            params[name] = leaf(std::move(b));
        } else {
            std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
            double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            params[name] = leaf(Tensor::uniform(shape, rng, -bound, bound));
        }
    }
    return params;
}

std::vector<std::string> theta_h_names(const NetworkConfig& cfg) {
    std::vector<std::string> names;
    for (const auto& [name, shape] : parameter_shapes(cfg))
        if (name != kHeadName) names.push_back(name);
    return names;
}

namespace {

const Var& param(const VarMap& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) fail(ErrorKind::invalid_argument, "missing parameter " + name);
    return it->second;
}

}  // namespace

Var encode_timeseries(const Var& x, const VarMap& params, const NetworkConfig& cfg) {
    const Shape& s = x->value.shape();
    if (s.size() != 3 || s[2] != cfg.ts_input_dim)
        fail(ErrorKind::shape, "encode_timeseries expects [B, T, " +
                                   std::to_string(cfg.ts_input_dim) + "], got " + shape_str(s));
    std::size_t B = s[0], T = s[1], H = cfg.ts_hidden_dim;
    if (T == 0) fail(ErrorKind::invalid_argument, "encode_timeseries: empty sequence (T = 0)");
    if (!x->value.all_finite())
        fail(ErrorKind::invalid_argument, "encode_timeseries: non-finite input");

    std::vector<Var> h(cfg.ts_layers), c(cfg.ts_layers);
    for (std::size_t l = 0; l < cfg.ts_layers; ++l) {
        h[l] = constant(Tensor::zeros(Shape{B, H}));
        c[l] = constant(Tensor::zeros(Shape{B, H}));
    }

    for (std::size_t t = 0; t < T; ++t) {
        Var input = reshape(slice(x, 1, t, 1), Shape{B, cfg.ts_input_dim});
        for (std::size_t l = 0; l < cfg.ts_layers; ++l) {
            std::string p = "ts.l" + std::to_string(l) + ".";
            Var z = add(add(matmul(input, param(params, p + "wx")),
                            matmul(h[l], param(params, p + "wh"))),
                        param(params, p + "b"));
            Var gi = sigmoid(slice(z, 1, 0, H));
            Var gf = sigmoid(slice(z, 1, H, H));
            Var gg = tanh_op(slice(z, 1, 2 * H, H));
            Var go = sigmoid(slice(z, 1, 3 * H, H));
            c[l] = add(mul(gf, c[l]), mul(gi, gg));
            h[l] = mul(go, tanh_op(c[l]));
            input = h[l];
        }
    }
    return h[cfg.ts_layers - 1];
}

Var encode_image(const Var& x, const VarMap& params, const NetworkConfig& cfg) {
    const Shape& s = x->value.shape();
    if (s.size() != 4 || s[1] != cfg.img_channels || s[2] != cfg.img_side || s[3] != cfg.img_side)
        fail(ErrorKind::shape, "encode_image expects [B, " + std::to_string(cfg.img_channels) +
                                   ", " + std::to_string(cfg.img_side) + ", " +
                                   std::to_string(cfg.img_side) + "], got " + shape_str(s));
    std::size_t B = s[0];
    Var cur = x;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        std::string p = "img.b" + std::to_string(i) + ".";
        Var w = param(params, p + "w");
        Var b = reshape(param(params, p + "b"), Shape{1, cfg.conv_channels[i], 1, 1});
        cur = maxpool2x2(tanh_op(add(conv2d(cur, w), b)));
    }
    const Shape& fs = cur->value.shape();
    std::size_t ch = fs[1], spatial = fs[2] * fs[3];
    return mean_axis(reshape(cur, Shape{B, ch, spatial}), 2);
}

Var features(const Var& x_ehr, const Var& x_cxr, const VarMap& params, const NetworkConfig& cfg) {
    Var ts = encode_timeseries(x_ehr, params, cfg);
    Var img = encode_image(x_cxr, params, cfg);
    return concat({ts, img}, 1);
}

Var logits(const Var& x_ehr, const Var& x_cxr, const VarMap& params, const NetworkConfig& cfg) {
    return matmul(features(x_ehr, x_cxr, params, cfg), param(params, kHeadName));
}

Tensor encode_timeseries_single(const Tensor& x, const VarMap& params, const NetworkConfig& cfg) {
    if (x.ndim() != 2)
        fail(ErrorKind::shape, "expected [T, d] time series, got " + shape_str(x.shape()));
    Var batched = constant(x.reshaped(Shape{1, x.extent(0), x.extent(1)}));
    return encode_timeseries(batched, params, cfg)->value.reshaped(Shape{cfg.ts_hidden_dim});
}

Tensor encode_image_single(const Tensor& x, const VarMap& params, const NetworkConfig& cfg) {
    if (x.ndim() != 3)
        fail(ErrorKind::shape, "expected [C, H, W] image, got " + shape_str(x.shape()));
    Var batched = constant(x.reshaped(Shape{1, x.extent(0), x.extent(1), x.extent(2)}));
    return encode_image(batched, params, cfg)->value.reshaped(Shape{cfg.img_feature_dim()});
}

Tensor logits_single(const Tensor& x_ehr, const Tensor& x_cxr, const VarMap& params,
                     const NetworkConfig& cfg) {
    Var ehr = constant(x_ehr.reshaped(Shape{1, x_ehr.extent(0), x_ehr.extent(1)}));
    Var cxr = constant(x_cxr.reshaped(Shape{1, x_cxr.extent(0), x_cxr.extent(1), x_cxr.extent(2)}));
    return logits(ehr, cxr, params, cfg)->value.reshaped(Shape{cfg.num_labels});
}

}  // namespace m2d2
