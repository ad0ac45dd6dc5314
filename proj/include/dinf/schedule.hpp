#pragma once

#include "dinf/common.hpp"

namespace dinf {

// Diffusion coefficients, indexed by timestep t in 1..T (storage index t-1).
// The process is defined by its marginals: x_t = sqrt(alpha_bar_t) x0 +
// sqrt(1 - alpha_bar_t) eps with alpha_bar_t = prod_{t'<=t} lambda_{t'}^2,
// mapped from a linear beta schedule by lambda_t = sqrt(1 - beta_t).
struct NoiseSchedule {
    int T = 0;
    Vec lambda;       // lambda_t in (0, 1)
    Vec alpha_bar;    // strictly decreasing, in (0, 1]
    Vec sigma;        // sampler std devs; sigma_1 = 0
    Vec elbo_weight;  // positive per-timestep ELBO weights

    double lam(int t) const { return lambda[t - 1]; }
    double abar(int t) const { return alpha_bar[t - 1]; }
    double sig(int t) const { return sigma[t - 1]; }
    double w(int t) const { return elbo_weight[t - 1]; }
};

enum class ScheduleKind { Linear };

NoiseSchedule make_schedule(int T, double beta_min, double beta_max,
                            ScheduleKind kind = ScheduleKind::Linear);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Vec q_sample(const NoiseSchedule& s, const Vec& x0, int t, const Vec& eps);

// mu_{t-1|t,0} = (x_t - (1 - lambda_t^2) / sqrt(1 - abar_t) * eps) / lambda_t
Vec posterior_mean(const NoiseSchedule& s, const Vec& x_t, const Vec& eps, int t);

// w_t = (1 - lambda_t^2)^2 / (2 sigma_t^2 lambda_t^2 (1 - abar_t)) for t >= 2,
// with w_1 continued as w_2.
Vec elbo_weights(const NoiseSchedule& s);

}  // namespace dinf
