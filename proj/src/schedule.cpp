#include "dinf/schedule.hpp"

#include <cmath>

namespace dinf {

NoiseSchedule make_schedule(int T, double beta_min, double beta_max, ScheduleKind kind) {
    if (T < 1) throw ConfigError("schedule: T must be >= 1");
    if (!(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0)) {
        throw ConfigError("schedule: need 0 < beta_min <= beta_max < 1");
    }
    (void)kind;  // only linear exists

    NoiseSchedule s;
    s.T = T;
    s.lambda.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);

    double abar_prev = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double beta =
            T == 1 ? beta_min
                   : beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) / (T - 1);
        const double lam = std::sqrt(1.0 - beta);
        const double abar = abar_prev * lam * lam;
        s.lambda[t - 1] = lam;
        s.alpha_bar[t - 1] = abar;
        // "small" sampler variance, with abar_0 := 1 so sigma_1 = 0
        s.sigma[t - 1] = std::sqrt((1.0 - abar_prev) / (1.0 - abar) * (1.0 - lam * lam));
        abar_prev = abar;
    }
    s.elbo_weight = elbo_weights(s);
    return s;
}

Vec q_sample(const NoiseSchedule& s, const Vec& x0, int t, const Vec& eps) {
    if (t < 1 || t > s.T) throw ConfigError("q_sample: timestep out of range");
    const double abar = s.abar(t);
    return std::sqrt(abar) * x0 + std::sqrt(1.0 - abar) * eps;
}

Vec posterior_mean(const NoiseSchedule& s, const Vec& x_t, const Vec& eps, int t) {
    if (t < 1 || t > s.T) throw ConfigError("posterior_mean: timestep out of range");
    const double lam = s.lam(t);
    if (lam == 0.0) throw ScheduleError("posterior_mean: lambda_t = 0");
    const double coeff = (1.0 - lam * lam) / std::sqrt(1.0 - s.abar(t));
    return (x_t - coeff * eps) / lam;
}

Vec elbo_weights(const NoiseSchedule& s) {
    Vec w(s.T);
    for (int t = 2; t <= s.T; ++t) {
        const double sig2 = s.sig(t) * s.sig(t);
        if (sig2 == 0.0) throw ScheduleError("elbo_weights: sigma_t = 0 at t = " + std::to_string(t));
        const double one_minus_lam2 = 1.0 - s.lam(t) * s.lam(t);
        w[t - 1] = one_minus_lam2 * one_minus_lam2 /
                   (2.0 * sig2 * s.lam(t) * s.lam(t) * (1.0 - s.abar(t)));
    }
    // the discrete reconstruction term is out of scope; continue w_1 from w_2
    w[0] = s.T >= 2 ? w[1] : 1.0;
    return w;
}

}  // namespace dinf
