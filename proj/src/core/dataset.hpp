#pragma once

#include "core/tensor.hpp"

namespace m2d2 {

// One split of a paired multimodal dataset.
struct DatasetSplit {
    Tensor x_ehr;   // [n, T, d]
    Tensor x_cxr;   // [n, C, S, S]
    Tensor labels;  // [n, Q] in {0, 1}

    std::size_t size() const { return x_ehr.ndim() > 0 ? x_ehr.extent(0) : 0; }

    Tensor ehr_row(std::size_t i) const;
    Tensor cxr_row(std::size_t i) const;
};

struct Dataset {
    DatasetSplit train, val, test, shifted;

    const DatasetSplit& split(const std::string& name) const;
};

}  // namespace m2d2
