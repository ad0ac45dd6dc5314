#pragma once

#include <functional>
#include <optional>
#include <variant>

#include "dinf/net.hpp"
#include "dinf/rng.hpp"
#include "dinf/schedule.hpp"

namespace dinf {

// Canonical (t, eps) draw for the s-th Monte Carlo sample of a per-example
// objective. Every consumer of the joint (t, eps) expectation derives its
// draws this way, so passing the same stream freezes the same samples across
// losses, gradients, and curvature sweeps. s_index counts from 1.
struct McDraw {
    int t;
    Vec eps;
};
McDraw mc_draw(const NoiseSchedule& s, int data_dim, const RngStream& stream, int s_index);

// MC average over S eps draws of ||eps - net(q_sample(x0, t, eps), t)||^2.
double per_timestep_loss(const EpsilonNet& net, const NoiseSchedule& s, const Vec& x0, int t,
                         int S, const RngStream& stream);

// MC average over S joint (t, eps) draws of the per-timestep integrand.
double diffusion_loss(const EpsilonNet& net, const NoiseSchedule& s, const Vec& x0, int S,
                      const RngStream& stream);

// States recorded during ancestral sampling; states[k] = x^(k), so states[T]
// is the initial noise and states[0] the sample.
struct Trajectory {
    std::vector<Vec> states;
    std::uint64_t seed = 0;
};

struct SampleResult {
    Vec x0;
    std::optional<Trajectory> trajectory;
};

SampleResult ddpm_sample(const EpsilonNet& net, const NoiseSchedule& s, std::uint64_t seed,
                         bool record);

// Same chain with an arbitrary denoiser; lets tests plug in closed-form
// optimal predictors.
using DenoiserFn = std::function<Vec(const Vec& x_t, int t)>;
SampleResult ddpm_sample(const DenoiserFn& eps_fn, int data_dim, const NoiseSchedule& s,
                         std::uint64_t seed, bool record);

enum class MeasurementKind { SimpleLoss, Elbo, TrajectoryLogProb, PerTimestepLoss };

struct MeasurementFn {
    MeasurementKind kind = MeasurementKind::SimpleLoss;
    int t = 0;        // PerTimestepLoss only
    int samples = 250;
    RngStream stream;
};

using QueryPayload = std::variant<Vec, Trajectory>;

// Scalar proxy for the generation probability of the query. Pure in all
// arguments including the embedded stream.
double measure(const EpsilonNet& net, const NoiseSchedule& s, const MeasurementFn& fn,
               const QueryPayload& query);

}  // namespace dinf
