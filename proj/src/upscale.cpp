#include "upscale.hpp"

namespace ptlab {

std::vector<int32_t> upscale_mapping(int32_t n_layers, int32_t overlap) {
    if (n_layers < 1) throw error(errc::argument, "upscale: source must have at least one layer");
    if (overlap < 0 || overlap >= n_layers) {
        throw error(errc::argument, "upscale: overlap " + std::to_string(overlap) +
                    " must satisfy 0 <= overlap < n_layers (" + std::to_string(n_layers) + ")");
    }
    std::vector<int32_t> mapping;
    mapping.reserve((size_t) (2 * (n_layers - overlap)));
    for (int32_t l = 0; l < n_layers - overlap; l++) mapping.push_back(l);
    for (int32_t l = overlap; l < n_layers; l++) mapping.push_back(l);
    return mapping;
}

} // namespace ptlab
