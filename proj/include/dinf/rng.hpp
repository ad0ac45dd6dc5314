#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "dinf/common.hpp"

namespace dinf {

// Hierarchical deterministic random stream. A stream is an immutable 64-bit
// key derived from a root seed and a path of (label, index) components; equal
// paths give equal draw sequences, distinct paths give independent ones.
// Drawing happens through a Sampler constructed from the stream.
class RngStream {
public:
    RngStream() : state_(0x9e3779b97f4a7c15ull) {}
    explicit RngStream(std::uint64_t root_seed);

    RngStream child(std::string_view label) const;
    RngStream child(std::string_view label, std::uint64_t index) const;
    RngStream child(std::string_view label, std::uint64_t i, std::uint64_t j) const {
        return child(label, i).child("#", j);
    }

    std::uint64_t key() const { return state_; }

    friend bool operator==(const RngStream& a, const RngStream& b) { return a.state_ == b.state_; }

private:
    explicit RngStream(std::uint64_t state, int) : state_(state) {}
    std::uint64_t state_;
};

// Draw source over a stream key. Not thread-safe; make one per task.
class Sampler {
public:
    explicit Sampler(const RngStream& stream);

    double normal();
    double uniform();  // [0, 1)
    std::uint64_t uniform_index(std::uint64_t n);  // {0, ..., n-1}
    int uniform_timestep(int t_max);               // {1, ..., t_max}
    Vec normal_vec(int dim);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace dinf
