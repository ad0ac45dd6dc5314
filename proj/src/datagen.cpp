#include "dinf/datagen.hpp"

namespace dinf {

Dataset generate_dataset(const std::string& kind, int n, int dim, std::uint64_t seed) {
    if (n < 1 || dim < 1) throw ConfigError("generate_dataset: n and dim must be positive");
    Sampler smp(RngStream(seed).child("dataset"));
    std::vector<Vec> pts;
    pts.reserve(n);
    if (kind == "gmm2") {
        for (int i = 0; i < n; ++i) {
            const bool left = smp.uniform() < 0.5;
            Vec x = 0.5 * smp.normal_vec(dim);
            x[0] += left ? -1.5 : 1.5;
            if (dim > 1) x[1] += left ? -1.0 : 1.0;
            pts.push_back(std::move(x));
        }
    } else if (kind == "gaussian") {
        for (int i = 0; i < n; ++i) pts.push_back(smp.normal_vec(dim));
    } else {
        throw ConfigError("generate_dataset: unknown kind '" + kind + "'");
    }
    return Dataset::from_points(std::move(pts));
}

}  // namespace dinf
