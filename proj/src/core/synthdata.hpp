#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "core/dataset.hpp"
#include "core/rng.hpp"

namespace m2d2 {

// Desk-scale paired multimodal dataset with planted signal in both
// modalities and a held-out shifted split.
struct SynthSpec {
    std::size_t n_train = 256;
    std::size_t n_val = 96;
    std::size_t n_test = 256;
    std::size_t n_shifted = 256;
    std::size_t T = 32;
    std::size_t d = 4;
    std::size_t img_side = 16;
    std::size_t Q = 4;
    double label_signal_strength = 1.0;
    double prevalence_bias = 0.0;  // latent threshold; > 0 skews labels rare
    std::uint64_t seed = 1;

    void validate() const;
};

// Labels come from a latent z ~ N(0, I_Q) via y_k = 1[z_k > bias]; the time
// series mixes per-label sinusoids and the image mixes per-label blobs, with
// complementary per-modality gains. The shifted split applies transforms that
// are deliberately not in the context suite (amplitude rescale, 90-degree
// rotation).
Dataset generate(const SynthSpec& spec);

// --- binary tensor container -------------------------------------------------
// magic "M2D2TNSR" | version u8 = 1 | dtype u8 | ndim u8 | reserved u8 |
// dims ndim x u64 LE | payload row-major LE

enum class TensorDType : std::uint8_t { f32 = 0, f64 = 1, u8 = 2 };

void write_tensor(const std::string& path, const Tensor& t,
                  TensorDType dtype = TensorDType::f64);
Tensor read_tensor(const std::string& path);

// Checkpoint container: repeated records of u16 LE name length, name bytes,
// then a full tensor record.
void write_named_tensors(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> read_named_tensors(const std::string& path);

// --- on-disk dataset layout ---------------------------------------------------
// <dir>/manifest.txt lines: "<split> <ehr path> <cxr path> <labels path>",
// paths relative to the manifest.
void write_dataset(const std::string& dir, const Dataset& data);
Dataset load_dataset(const std::string& dir);

}  // namespace m2d2
