#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/autodiff.hpp"
#include "core/rng.hpp"

namespace m2d2 {

using VarMap = std::map<std::string, Var>;

// Architecture of the deterministic fusion network f(x) = h(x) * head, with a
// stacked gated recurrent time-series encoder and a small conv image encoder.
struct NetworkConfig {
    std::size_t ts_input_dim = 4;
    std::size_t ts_hidden_dim = 16;
    std::size_t ts_layers = 2;
    std::size_t img_side = 16;
    std::size_t img_channels = 1;
    std::vector<std::size_t> conv_channels = {8, 12};
    std::size_t num_labels = 4;

    std::size_t img_feature_dim() const { return conv_channels.back(); }
    std::size_t feature_dim() const { return ts_hidden_dim + img_feature_dim(); }
    std::size_t head_param_count() const { return feature_dim() * num_labels; }

    void validate() const;
};

// Shapes of every learnable tensor. "head.w" is the final layer; everything
// else is the feature extractor.
std::map<std::string, Shape> parameter_shapes(const NetworkConfig& cfg);

// Fan-in-scaled uniform init for weights, zero biases, forget-gate bias 1.
VarMap init_parameters(const NetworkConfig& cfg, Rng& rng);

std::vector<std::string> theta_h_names(const NetworkConfig& cfg);

inline const std::string kHeadName = "head.w";

// x: [B, T, ts_input_dim] -> [B, ts_hidden_dim] (final hidden state, top layer)
Var encode_timeseries(const Var& x, const VarMap& params, const NetworkConfig& cfg);

// x: [B, C, S, S] -> [B, img_feature_dim]; conv/tanh/pool blocks then global
// average pooling.
Var encode_image(const Var& x, const VarMap& params, const NetworkConfig& cfg);

// [encode_timeseries || encode_image] -> [B, feature_dim]. This is h(x).
Var features(const Var& x_ehr, const Var& x_cxr, const VarMap& params, const NetworkConfig& cfg);

// h(x) * head.w -> [B, num_labels]
Var logits(const Var& x_ehr, const Var& x_cxr, const VarMap& params, const NetworkConfig& cfg);

// Single-sample conveniences matching the per-example contracts.
Tensor encode_timeseries_single(const Tensor& x, const VarMap& params, const NetworkConfig& cfg);
Tensor encode_image_single(const Tensor& x, const VarMap& params, const NetworkConfig& cfg);
Tensor logits_single(const Tensor& x_ehr, const Tensor& x_cxr, const VarMap& params,
                     const NetworkConfig& cfg);

}  // namespace m2d2
