#pragma once

#include "dinf/influence.hpp"
#include "dinf/train.hpp"

namespace dinf {

// Everything needed to train a model from scratch.
struct TrainSpec {
    ArchConfig arch;
    NoiseSchedule schedule;
    OptimizerConfig opt;
    long steps = 0;
    std::uint64_t seed = 0;
};

// Trains on the weighted dataset; `seed` overrides spec.seed when nonzero is
// desired, so retraining ensembles can vary it deterministically.
EpsilonNet train_from_spec(const TrainSpec& spec, const std::vector<Vec>& points,
                           const std::vector<double>& weights, std::uint64_t seed);

// M independent draws of floor(N * fraction) distinct indices from {0..N-1}.
std::vector<std::vector<std::uint64_t>> sample_subsets(std::uint64_t N, int M, double fraction,
                                                       std::uint64_t seed);

std::vector<double> weights_from_subset(std::uint64_t N, const std::vector<std::uint64_t>& subset);

// Retrains theta*_k(D_i) for every (weight vector i, seed k) and evaluates
// every query measurement with its embedded stream, shared across all models.
// Diverged runs leave NaN cells and a stderr warning. Result: M entries of
// K x Q matrices.
std::vector<Mat> retrain_oracle(const TrainSpec& spec, const std::vector<Vec>& points,
                                const std::vector<std::vector<double>>& weight_vectors, int K,
                                const std::vector<Query>& queries);

// One retrain per subset with a single fixed seed; predictions are the
// measured values themselves. M x Q.
Mat exact_retraining_predictor(const TrainSpec& spec, const std::vector<Vec>& points,
                               const std::vector<std::vector<std::uint64_t>>& subsets,
                               const std::vector<Query>& queries);

// Tie-aware (average-rank) Spearman correlation.
double spearman(const Vec& xs, const Vec& ys);

struct LdsResult {
    Vec per_query;
    double mean = 0.0;
    double stderr_mean = 0.0;
};

// Per query: Spearman between predicted deltas (M) and K-averaged oracle
// measurements (M); subsets whose oracle cells all diverged are dropped
// pairwise. mean +- stddev/sqrt(Q) over queries.
LdsResult lds(const Mat& predictions, const std::vector<Mat>& oracle);

// Predicted measurement deltas for retraining on each subset: the removed set
// is the complement of the subset in the score matrix's training ids. M x Q.
Mat predictions_from_scores(const ScoreMatrix& sm,
                            const std::vector<std::vector<std::uint64_t>>& subsets,
                            std::uint64_t dataset_size, double downweight_fraction = 1.0);

// Retraining-based LDS benchmark: subsets, the oracle tensor, and the query
// ids it was measured on.
struct LdsBenchmark {
    std::vector<std::vector<std::uint64_t>> subsets;
    int K = 0;
    double fraction = 0.5;
    std::vector<Mat> oracle;  // M of K x Q
    std::vector<std::uint64_t> query_ids;
    std::uint64_t subset_seed = 0;
};

LdsBenchmark build_lds_benchmark(const TrainSpec& spec, const std::vector<Vec>& points, int M,
                                 int K, double fraction, const std::vector<Query>& queries,
                                 std::uint64_t subset_seed);

// Removes the ceil(percent * N / 100) highest-scoring training examples per
// query, retrains from scratch with the base seed and step count, and reports
// the per-query measurement change against the base model.
Vec remove_top_and_retrain(const ScoreMatrix& sm, double percent, const TrainSpec& spec,
                           const std::vector<Vec>& points, const std::vector<Query>& queries,
                           const EpsilonNet& base_net);

// Grid of LDS values: entry (i, j) evaluates influence predictions built with
// the per-timestep proxy loss proxy_ts[i] against retrained ground-truth
// changes in the per-timestep loss target_ts[j].
struct TimestepGridResult {
    Mat grid;  // |proxy_ts| x |target_ts|
    std::vector<int> proxy_ts;
    std::vector<int> target_ts;
};

TimestepGridResult timestep_cross_lds(const EpsilonNet& base_net, const TrainSpec& retrain_spec,
                                      const Dataset& dataset, const CurvatureState& state,
                                      double damping, const std::vector<Vec>& query_points,
                                      const std::vector<int>& proxy_ts,
                                      const std::vector<int>& target_ts, int M, int K,
                                      double fraction, int S_measure, int S_grad,
                                      const RngStream& root);

void save_benchmark(ArtifactContainer& c, const std::string& prefix, const LdsBenchmark& b);
LdsBenchmark load_benchmark(const ArtifactContainer& c, const std::string& prefix);

}  // namespace dinf
