#include "dinf/diffusion.hpp"

#include <cmath>

namespace dinf {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double gaussian_logpdf(const Vec& v, const Vec& mean, double var) {
    const double d = static_cast<double>(v.size());
    return -0.5 * d * (kLog2Pi + std::log(var)) - (v - mean).squaredNorm() / (2.0 * var);
}

}  // namespace

McDraw mc_draw(const NoiseSchedule& s, int data_dim, const RngStream& stream, int s_index) {
    Sampler smp(stream.child("s", static_cast<std::uint64_t>(s_index)));
    McDraw d;
    // T = 1 draws no timestep so the sequence matches the fixed-t losses
    d.t = s.T == 1 ? 1 : smp.uniform_timestep(s.T);
    d.eps = smp.normal_vec(data_dim);
    return d;
}

double per_timestep_loss(const EpsilonNet& net, const NoiseSchedule& s, const Vec& x0, int t,
                         int S, const RngStream& stream) {
    if (S < 1) throw ConfigError("per_timestep_loss: S must be >= 1");
    if (t < 1 || t > s.T) throw ConfigError("per_timestep_loss: timestep out of range");
    double acc = 0.0;
    for (int i = 1; i <= S; ++i) {
        Sampler smp(stream.child("s", static_cast<std::uint64_t>(i)));
        const Vec eps = smp.normal_vec(net.data_dim);
        const Vec x_t = q_sample(s, x0, t, eps);
        acc += (eps - run_forward(net, x_t, t).output).squaredNorm();
    }
    return acc / S;
}

double diffusion_loss(const EpsilonNet& net, const NoiseSchedule& s, const Vec& x0, int S,
                      const RngStream& stream) {
    if (S < 1) throw ConfigError("diffusion_loss: S must be >= 1");
    double acc = 0.0;
    for (int i = 1; i <= S; ++i) {
        const McDraw d = mc_draw(s, net.data_dim, stream, i);
        const Vec x_t = q_sample(s, x0, d.t, d.eps);
        acc += (d.eps - run_forward(net, x_t, d.t).output).squaredNorm();
    }
    return acc / S;
}

SampleResult ddpm_sample(const DenoiserFn& eps_fn, int data_dim, const NoiseSchedule& s,
                         std::uint64_t seed, bool record) {
    const RngStream root(seed);
    Vec x = Sampler(root.child("prior")).normal_vec(data_dim);

    SampleResult res;
    if (record) {
        res.trajectory.emplace();
        res.trajectory->seed = seed;
        res.trajectory->states.resize(s.T + 1);
        res.trajectory->states[s.T] = x;
    }

    for (int t = s.T; t >= 1; --t) {
        const Vec eps_pred = eps_fn(x, t);
        Vec next = posterior_mean(s, x, eps_pred, t);
        if (t >= 2) {
            next += s.sig(t) * Sampler(root.child("z", t)).normal_vec(data_dim);
        }
        if (!next.allFinite()) throw SamplingDivergedError(t);
        x = std::move(next);
        if (record) res.trajectory->states[t - 1] = x;
    }
    res.x0 = std::move(x);
    return res;
}

SampleResult ddpm_sample(const EpsilonNet& net, const NoiseSchedule& s, std::uint64_t seed,
                         bool record) {
    return ddpm_sample(
        [&net](const Vec& x, int t) { return run_forward(net, x, t).output; }, net.data_dim, s,
        seed, record);
}

double measure(const EpsilonNet& net, const NoiseSchedule& s, const MeasurementFn& fn,
               const QueryPayload& query) {
    switch (fn.kind) {
        case MeasurementKind::SimpleLoss: {
            const Vec* x = std::get_if<Vec>(&query);
            if (!x) throw PayloadError("SimpleLoss expects a data vector");
            return diffusion_loss(net, s, *x, fn.samples, fn.stream);
        }
        case MeasurementKind::PerTimestepLoss: {
            const Vec* x = std::get_if<Vec>(&query);
            if (!x) throw PayloadError("PerTimestepLoss expects a data vector");
            if (fn.t < 1 || fn.t > s.T) throw ConfigError("PerTimestepLoss: t out of range");
            return per_timestep_loss(net, s, *x, fn.t, fn.samples, fn.stream);
        }
        case MeasurementKind::Elbo: {
            const Vec* x = std::get_if<Vec>(&query);
            if (!x) throw PayloadError("Elbo expects a data vector");
            double acc = 0.0;
            for (int i = 1; i <= fn.samples; ++i) {
                const McDraw d = mc_draw(s, net.data_dim, fn.stream, i);
                const Vec x_t = q_sample(s, *x, d.t, d.eps);
                acc += s.T * s.w(d.t) * (d.eps - run_forward(net, x_t, d.t).output).squaredNorm();
            }
            return acc / fn.samples;
        }
        case MeasurementKind::TrajectoryLogProb: {
            const Trajectory* traj = std::get_if<Trajectory>(&query);
            if (!traj) throw PayloadError("TrajectoryLogProb expects a stored trajectory");
            if (static_cast<int>(traj->states.size()) != s.T + 1) {
                throw PayloadError("trajectory length does not match the schedule");
            }
            // t = 1 transition excluded (sigma_1 = 0 makes it degenerate)
            double logp = gaussian_logpdf(traj->states[s.T], Vec::Zero(net.data_dim), 1.0);
            for (int t = 2; t <= s.T; ++t) {
                const Vec& x_t = traj->states[t];
                const Vec eps_pred = run_forward(net, x_t, t).output;
                const Vec mu = posterior_mean(s, x_t, eps_pred, t);
                logp += gaussian_logpdf(traj->states[t - 1], mu, s.sig(t) * s.sig(t));
            }
            return logp;
        }
    }
    throw ConfigError("unknown measurement kind");
}

}  // namespace dinf
