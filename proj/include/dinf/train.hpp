#pragma once

#include "dinf/diffusion.hpp"
#include "dinf/net.hpp"

namespace dinf {

// Average over s = 1..S of the squared-error gradient at (t_s, eps_s), with
// (t_s, eps_s) drawn from child streams of `stream` indexed by s. Pure in all
// arguments; independent of thread count.
Vec per_example_train_gradient(const EpsilonNet& net, const NoiseSchedule& s, const Vec& x0,
                               int S, const RngStream& stream);

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };
    Kind kind = Kind::Adam;
    double lr = 1e-3;
    double momentum = 0.9;  // sgd
    double beta1 = 0.9;     // adam
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 32;
    int log_interval = 100;
    // cosine decay of the learning rate to zero over the run
    bool cosine_lr = false;
    // When set, minibatch indices are drawn only from examples with positive
    // weight, which makes zero-weight training trajectory-identical to
    // training on the corresponding subset. Otherwise indices are drawn
    // uniformly from the full dataset and the per-example loss is scaled by
    // its weight.
    bool support_sampling = false;
};

struct TrainResult {
    EpsilonNet net;
    std::vector<double> loss_curve;  // mean training loss per logging interval
};

// Minibatch stochastic minimization of (1/N) sum_n w_n * loss(theta, x_n).
// Throws TrainingDivergedError with the step index if the loss goes
// non-finite.
TrainResult train(EpsilonNet net, const NoiseSchedule& s, const std::vector<Vec>& dataset,
                  const std::vector<double>& example_weights, const OptimizerConfig& cfg,
                  long steps, std::uint64_t seed);

}  // namespace dinf
