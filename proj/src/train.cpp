#include "dinf/train.hpp"

#include <cmath>

#include "dinf/parallel.hpp"

namespace dinf {

Vec per_example_train_gradient(const EpsilonNet& net, const NoiseSchedule& s, const Vec& x0,
                               int S, const RngStream& stream) {
    if (S < 1) throw ConfigError("per_example_train_gradient: S must be >= 1");
    Vec acc = Vec::Zero(net.param_count());
    for (int i = 1; i <= S; ++i) {
        const McDraw d = mc_draw(s, net.data_dim, stream, i);
        const Vec x_t = q_sample(s, x0, d.t, d.eps);
        acc += grad_sq_loss(net, x_t, d.t, d.eps).grad;
    }
    return acc / S;
}

TrainResult train(EpsilonNet net, const NoiseSchedule& s, const std::vector<Vec>& dataset,
                  const std::vector<double>& example_weights, const OptimizerConfig& cfg,
                  long steps, std::uint64_t seed) {
    if (example_weights.size() != dataset.size()) {
        throw ConfigError("train: |example_weights| != |dataset|");
    }
    for (double w : example_weights) {
        if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("train: weights must lie in [0, 1]");
    }
    if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");

    std::vector<std::size_t> support;
    if (cfg.support_sampling) {
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            if (example_weights[i] > 0.0) support.push_back(i);
        }
    } else {
        support.resize(dataset.size());
        for (std::size_t i = 0; i < support.size(); ++i) support[i] = i;
    }
    if (support.empty()) throw ConfigError("train: no examples to sample from");

    const RngStream root(seed);
    const long n_params = net.param_count();
    Vec velocity = Vec::Zero(n_params);  // sgd
    Vec m1 = Vec::Zero(n_params);        // adam
    Vec m2 = Vec::Zero(n_params);

    TrainResult result;
    const int B = cfg.batch_size;
    std::vector<Vec> slot_grads(B);
    std::vector<double> slot_losses(B);
    std::vector<std::size_t> batch_idx(B);
    double interval_loss = 0.0;
    long interval_count = 0;

    for (long step = 0; step < steps; ++step) {
        Sampler idx_smp(root.child("batch", static_cast<std::uint64_t>(step)));
        for (int b = 0; b < B; ++b) {
            batch_idx[b] = support[idx_smp.uniform_index(support.size())];
        }

        parallel::for_each_index(static_cast<std::size_t>(B), [&](std::size_t b) {
            const std::size_t n = batch_idx[b];
            const double w = example_weights[n];
            Sampler smp(root.child("noise", static_cast<std::uint64_t>(step), b));
            const int t = smp.uniform_timestep(s.T);
            const Vec eps = smp.normal_vec(net.data_dim);
            const Vec x_t = q_sample(s, dataset[n], t, eps);
            GradResult g = grad_sq_loss(net, x_t, t, eps);
            slot_grads[b] = w * g.grad;
            slot_losses[b] = w * g.loss;
        });

        Vec grad = Vec::Zero(n_params);
        double loss = 0.0;
        for (int b = 0; b < B; ++b) {
            grad += slot_grads[b];
            loss += slot_losses[b];
        }
        grad /= B;
        loss /= B;
        if (!std::isfinite(loss)) throw TrainingDivergedError(step);

        const double lr = cfg.cosine_lr
                              ? cfg.lr * 0.5 *
                                    (1.0 + std::cos(M_PI * static_cast<double>(step) / steps))
                              : cfg.lr;
        Vec theta = net.flat_params();
        if (cfg.kind == OptimizerConfig::Kind::Sgd) {
            velocity = cfg.momentum * velocity + grad;
            theta -= lr * velocity;
        } else {
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
            m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step + 1));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step + 1));
            const Vec denom = (m2 / c2).cwiseSqrt() + Vec::Constant(n_params, cfg.adam_eps);
            theta -= lr * (m1 / c1).cwiseQuotient(denom);
        }
        if (!theta.allFinite()) throw TrainingDivergedError(step);
        net.set_flat_params(theta);

        interval_loss += loss;
        ++interval_count;
        if ((step + 1) % cfg.log_interval == 0 || step + 1 == steps) {
            result.loss_curve.push_back(interval_loss / interval_count);
            interval_loss = 0.0;
            interval_count = 0;
        }
    }

    result.net = std::move(net);
    return result;
}

}  // namespace dinf
