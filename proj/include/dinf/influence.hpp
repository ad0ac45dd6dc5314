#pragma once

#include <string>

#include "dinf/curvature.hpp"
#include "dinf/diffusion.hpp"

namespace dinf {

// int8 absmax-quantized vectors with one scale per segment (segments are the
// per-layer parameter blocks, because layer gradient magnitudes differ by
// orders of magnitude).
struct CompressedGradients {
    std::vector<long> segment_sizes;
    long vector_length = 0;
    std::vector<std::vector<std::int8_t>> payload;  // per vector
    std::vector<std::vector<double>> scales;        // per vector, per segment
    std::string codec = "int8-absmax-per-segment";
};

CompressedGradients quantize(const std::vector<Vec>& vecs,
                             const std::vector<long>& segment_sizes);
std::vector<Vec> dequantize(const CompressedGradients& cg);

// Per-layer parameter block sizes of a network (the quantization segments).
std::vector<long> layer_segment_sizes(const EpsilonNet& net);

// grad_theta m(theta, query): Monte Carlo for the loss-family measurements,
// exact trajectory-density backprop for TrajectoryLogProb.
Vec query_gradient(const EpsilonNet& net, const NoiseSchedule& sched, const MeasurementFn& fn,
                   const QueryPayload& query);

struct Query {
    std::uint64_t id = 0;
    MeasurementFn fn;
    QueryPayload payload;
};

struct ScoreMeta {
    double damping = 0.0;
    std::string curvature_desc;
    std::string measurement_desc;
    int samples = 0;  // S of the training-gradient sweep
    bool compressed = false;
    std::uint64_t train_stream_key = 0;
    std::uint64_t net_hash = 0;
};

// Q x N grid of damped-inverse-preconditioned inner products between query
// measurement gradients and per-example training gradients. Positive score:
// removing the training example is predicted to increase the measurement.
struct ScoreMatrix {
    Mat scores;  // Q x N
    std::vector<std::uint64_t> query_ids;
    std::vector<std::uint64_t> train_ids;
    ScoreMeta meta;
};

// Algorithm 1 (single-use): precondition all query gradients once (optionally
// compressed), then sweep the training set computing each gradient once.
ScoreMatrix influence_scores(const EpsilonNet& net, const NoiseSchedule& sched,
                             const CurvatureState& state, double damping,
                             const std::vector<Query>& queries, const Dataset& dataset, int S,
                             const RngStream& stream, bool compress);

// Algorithm 2 (continual deployment): cache preconditioned training
// gradients, then score incoming queries against the cache. With compression
// off the scores equal Algorithm 1's bitwise.
struct TrainCache {
    std::vector<Vec> train_half;  // half-preconditioned (dequantized if compressed)
    std::vector<std::uint64_t> train_ids;
    double damping = 0.0;
    int samples = 0;
    bool compressed = false;
    std::uint64_t train_stream_key = 0;
    std::uint64_t net_hash = 0;
    std::string curvature_desc;
};

TrainCache build_train_cache(const EpsilonNet& net, const NoiseSchedule& sched,
                             const CurvatureState& state, double damping, const Dataset& dataset,
                             int S, const RngStream& stream, bool compress);

ScoreMatrix score_queries(const TrainCache& cache, const EpsilonNet& net,
                          const NoiseSchedule& sched, const CurvatureState& state,
                          const std::vector<Query>& queries);

// delta[q] = (downweight_fraction / N) * sum_{j in removed} score[q][j];
// positive delta predicts the measurement increases upon removal.
Vec predict_subset_delta(const ScoreMatrix& sm, const std::vector<std::uint64_t>& removed,
                         std::uint64_t dataset_size, double downweight_fraction = 1.0);

// Top-k column indices of one score row; ties break toward the lower
// training id.
std::vector<std::size_t> top_k_indices(const ScoreMatrix& sm, std::size_t query_row,
                                       std::size_t k);

std::string describe_curvature(const CurvatureState& state);

void save_scores(ArtifactContainer& c, const std::string& prefix, const ScoreMatrix& sm);
ScoreMatrix load_scores(const ArtifactContainer& c, const std::string& prefix);
void save_train_cache(ArtifactContainer& c, const std::string& prefix, const TrainCache& tc);
TrainCache load_train_cache(const ArtifactContainer& c, const std::string& prefix);

// Plain-text export: '#'-prefixed metadata line (with a hash of the metadata),
// then one comma-separated row per query.
void export_scores_csv(const std::string& path, const ScoreMatrix& sm,
                       std::uint64_t config_hash);

}  // namespace dinf
