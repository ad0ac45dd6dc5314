#include "dinf/rng.hpp"

#include <algorithm>

namespace dinf {
namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t absorb_bytes(std::uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h = (h ^ c) * kFnvPrime;
    }
    return h;
}

std::uint64_t absorb_word(std::uint64_t h, std::uint64_t w) {
    for (int i = 0; i < 8; ++i) {
        h = (h ^ ((w >> (8 * i)) & 0xff)) * kFnvPrime;
    }
    return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t root_seed)
    : state_(splitmix64(absorb_word(kFnvOffset, root_seed))) {}

RngStream RngStream::child(std::string_view label) const {
    return RngStream(splitmix64(absorb_bytes(state_, label)), 0);
}

RngStream RngStream::child(std::string_view label, std::uint64_t index) const {
    return RngStream(splitmix64(absorb_word(absorb_bytes(state_, label), index)), 0);
}

Sampler::Sampler(const RngStream& stream) : engine_(stream.key()) {}

double Sampler::normal() { return normal_(engine_); }

double Sampler::uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

std::uint64_t Sampler::uniform_index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
}

int Sampler::uniform_timestep(int t_max) {
    return static_cast<int>(std::uniform_int_distribution<int>(1, t_max)(engine_));
}

Vec Sampler::normal_vec(int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = normal();
    return v;
}

std::vector<std::size_t> Dataset::order_by_id() const {
    std::vector<std::size_t> order(ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [this](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
    return order;
}

}  // namespace dinf
