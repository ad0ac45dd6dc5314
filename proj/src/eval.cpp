#include "dinf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "dinf/parallel.hpp"

namespace dinf {
namespace {

Vec average_ranks(const Vec& xs) {
    const Eigen::Index n = xs.size();
    std::vector<Eigen::Index> idx(n);
    for (Eigen::Index i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](Eigen::Index a, Eigen::Index b) { return xs[a] < xs[b]; });
    Vec ranks(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
        for (Eigen::Index k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double pearson(const Vec& xs, const Vec& ys) {
    const double n = static_cast<double>(xs.size());
    const double mx = xs.mean(), my = ys.mean();
    const Vec cx = xs.array() - mx, cy = ys.array() - my;
    const double sx = cx.norm(), sy = cy.norm();
    if (sx == 0.0 || sy == 0.0) {
        throw CorrelationUndefinedError("correlation undefined for constant input");
    }
    (void)n;
    return cx.dot(cy) / (sx * sy);
}

std::uint64_t retrain_seed(const TrainSpec& spec, std::string_view purpose, std::uint64_t i,
                           std::uint64_t k) {
    return RngStream(spec.seed).child(purpose, i).child("k", k).key();
}

}  // namespace

EpsilonNet train_from_spec(const TrainSpec& spec, const std::vector<Vec>& points,
                           const std::vector<double>& weights, std::uint64_t seed) {
    EpsilonNet net = build_network(spec.arch, seed);
    return train(std::move(net), spec.schedule, points, weights, spec.opt, spec.steps, seed).net;
}

std::vector<std::vector<std::uint64_t>> sample_subsets(std::uint64_t N, int M, double fraction,
                                                       std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("sample_subsets: fraction must lie in (0, 1)");
    }
    if (M < 1) throw ConfigError("sample_subsets: M must be >= 1");
    const std::uint64_t take = static_cast<std::uint64_t>(
        std::floor(static_cast<double>(N) * fraction));
    std::vector<std::vector<std::uint64_t>> subsets;
    subsets.reserve(M);
    for (int i = 0; i < M; ++i) {
        Sampler smp(RngStream(seed).child("subset", static_cast<std::uint64_t>(i)));
        // partial Fisher-Yates
        std::vector<std::uint64_t> pool(N);
        for (std::uint64_t j = 0; j < N; ++j) pool[j] = j;
        for (std::uint64_t j = 0; j < take; ++j) {
            const std::uint64_t pick = j + smp.uniform_index(N - j);
            std::swap(pool[j], pool[pick]);
        }
        std::vector<std::uint64_t> subset(pool.begin(), pool.begin() + take);
        std::sort(subset.begin(), subset.end());
        subsets.push_back(std::move(subset));
    }
    return subsets;
}

std::vector<double> weights_from_subset(std::uint64_t N,
                                        const std::vector<std::uint64_t>& subset) {
    std::vector<double> w(N, 0.0);
    for (std::uint64_t idx : subset) {
        if (idx >= N) throw IndexError("weights_from_subset: index out of range");
        w[idx] = 1.0;
    }
    return w;
}

std::vector<Mat> retrain_oracle(const TrainSpec& spec, const std::vector<Vec>& points,
                                const std::vector<std::vector<double>>& weight_vectors, int K,
                                const std::vector<Query>& queries) {
    if (K < 1) throw ConfigError("retrain_oracle: K must be >= 1");
    const std::size_t M = weight_vectors.size();
    const std::size_t Q = queries.size();
    std::vector<Mat> oracle(M, Mat::Constant(K, static_cast<Eigen::Index>(Q),
                                             std::numeric_limits<double>::quiet_NaN()));

    // jobs keyed by (i, k); cells are disjoint so gathering order is irrelevant
    parallel::for_each_index(M * static_cast<std::size_t>(K), [&](std::size_t job) {
        const std::size_t i = job / K;
        const int k = static_cast<int>(job % K);
        try {
            const EpsilonNet model =
                train_from_spec(spec, points, weight_vectors[i],
                                retrain_seed(spec, "retrain", i, static_cast<std::uint64_t>(k)));
            for (std::size_t q = 0; q < Q; ++q) {
                oracle[i](k, static_cast<Eigen::Index>(q)) =
                    measure(model, spec.schedule, queries[q].fn, queries[q].payload);
            }
        } catch (const TrainingDivergedError& e) {
            std::cerr << "warning: retrain (subset " << i << ", seed " << k
                      << ") diverged at step " << e.step << "; cell left missing\n";
        }
    });
    return oracle;
}

Mat exact_retraining_predictor(const TrainSpec& spec, const std::vector<Vec>& points,
                               const std::vector<std::vector<std::uint64_t>>& subsets,
                               const std::vector<Query>& queries) {
    const std::size_t M = subsets.size();
    const std::size_t Q = queries.size();
    Mat preds = Mat::Constant(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(Q),
                              std::numeric_limits<double>::quiet_NaN());
    parallel::for_each_index(M, [&](std::size_t i) {
        try {
            const EpsilonNet model =
                train_from_spec(spec, points, weights_from_subset(points.size(), subsets[i]),
                                retrain_seed(spec, "exact-retrain", i, 0));
            for (std::size_t q = 0; q < Q; ++q) {
                preds(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) =
                    measure(model, spec.schedule, queries[q].fn, queries[q].payload);
            }
        } catch (const TrainingDivergedError& e) {
            std::cerr << "warning: exact-retrain subset " << i << " diverged at step " << e.step
                      << "\n";
        }
    });
    return preds;
}

double spearman(const Vec& xs, const Vec& ys) {
    if (xs.size() != ys.size()) throw ConfigError("spearman: length mismatch");
    if (xs.size() < 2) throw ConfigError("spearman: need at least two points");
    return pearson(average_ranks(xs), average_ranks(ys));
}

LdsResult lds(const Mat& predictions, const std::vector<Mat>& oracle) {
    const Eigen::Index M = predictions.rows();
    const Eigen::Index Q = predictions.cols();
    if (static_cast<std::size_t>(M) != oracle.size()) {
        throw ConfigError("lds: subset count mismatch");
    }
    for (const Mat& m : oracle) {
        if (m.cols() != Q) throw ConfigError("lds: query count mismatch");
    }

    LdsResult res;
    res.per_query.resize(Q);
    for (Eigen::Index q = 0; q < Q; ++q) {
        std::vector<double> preds, truths;
        for (Eigen::Index i = 0; i < M; ++i) {
            double sum = 0.0;
            int count = 0;
            for (Eigen::Index k = 0; k < oracle[i].rows(); ++k) {
                const double v = oracle[i](k, q);
                if (std::isfinite(v)) {
                    sum += v;
                    ++count;
                }
            }
            if (count == 0) continue;  // dropped pairwise
            if (count < oracle[i].rows()) {
                std::cerr << "warning: subset " << i << " query " << q << " averaged over "
                          << count << "/" << oracle[i].rows() << " seeds\n";
            }
            preds.push_back(predictions(i, q));
            truths.push_back(sum / count);
        }
        if (preds.size() < 2) {
            throw ConfigError("lds: fewer than two usable subsets for query " +
                              std::to_string(q));
        }
        const Vec p = Eigen::Map<const Vec>(preds.data(), static_cast<Eigen::Index>(preds.size()));
        const Vec t =
            Eigen::Map<const Vec>(truths.data(), static_cast<Eigen::Index>(truths.size()));
        res.per_query[q] = spearman(p, t);
    }

    res.mean = res.per_query.mean();
    const double var = (res.per_query.array() - res.mean).square().sum() /
                       std::max<Eigen::Index>(1, Q - 1);
    res.stderr_mean = std::sqrt(var / static_cast<double>(Q));
    return res;
}

Mat predictions_from_scores(const ScoreMatrix& sm,
                            const std::vector<std::vector<std::uint64_t>>& subsets,
                            std::uint64_t dataset_size, double downweight_fraction) {
    const std::size_t M = subsets.size();
    Mat preds(static_cast<Eigen::Index>(M), sm.scores.rows());
    for (std::size_t i = 0; i < M; ++i) {
        // removed = complement of the kept subset
        std::vector<bool> kept(dataset_size, false);
        for (std::uint64_t idx : subsets[i]) kept[idx] = true;
        std::vector<std::uint64_t> removed;
        for (std::uint64_t j = 0; j < dataset_size; ++j) {
            if (!kept[j]) removed.push_back(j);
        }
        preds.row(static_cast<Eigen::Index>(i)) =
            predict_subset_delta(sm, removed, dataset_size, downweight_fraction).transpose();
    }
    return preds;
}

LdsBenchmark build_lds_benchmark(const TrainSpec& spec, const std::vector<Vec>& points, int M,
                                 int K, double fraction, const std::vector<Query>& queries,
                                 std::uint64_t subset_seed) {
    LdsBenchmark b;
    b.subsets = sample_subsets(points.size(), M, fraction, subset_seed);
    b.K = K;
    b.fraction = fraction;
    b.subset_seed = subset_seed;
    for (const Query& q : queries) b.query_ids.push_back(q.id);
    std::vector<std::vector<double>> weight_vectors;
    weight_vectors.reserve(b.subsets.size());
    for (const auto& s : b.subsets) weight_vectors.push_back(weights_from_subset(points.size(), s));
    b.oracle = retrain_oracle(spec, points, weight_vectors, K, queries);
    return b;
}

Vec remove_top_and_retrain(const ScoreMatrix& sm, double percent, const TrainSpec& spec,
                           const std::vector<Vec>& points, const std::vector<Query>& queries,
                           const EpsilonNet& base_net) {
    if (!(percent >= 0.0 && percent < 100.0)) {
        throw ConfigError("remove_top_and_retrain: percent must lie in [0, 100)");
    }
    if (static_cast<std::size_t>(sm.scores.rows()) != queries.size()) {
        throw ConfigError("remove_top_and_retrain: score rows must match queries");
    }
    const std::uint64_t N = points.size();
    const std::size_t count =
        static_cast<std::size_t>(std::ceil(percent * static_cast<double>(N) / 100.0));

    Vec deltas(static_cast<Eigen::Index>(queries.size()));
    parallel::for_each_index(queries.size(), [&](std::size_t q) {
        const auto top = top_k_indices(sm, q, count);
        std::vector<double> weights(N, 1.0);
        for (std::size_t pos : top) weights[sm.train_ids[pos]] = 0.0;
        // same seed and step count as the base run, so percent = 0 reproduces
        // the base trajectory exactly
        const EpsilonNet retrained = train_from_spec(spec, points, weights, spec.seed);
        const double base = measure(base_net, spec.schedule, queries[q].fn, queries[q].payload);
        const double after = measure(retrained, spec.schedule, queries[q].fn, queries[q].payload);
        deltas[static_cast<Eigen::Index>(q)] = after - base;
    });
    return deltas;
}

TimestepGridResult timestep_cross_lds(const EpsilonNet& base_net, const TrainSpec& retrain_spec,
                                      const Dataset& dataset, const CurvatureState& state,
                                      double damping, const std::vector<Vec>& query_points,
                                      const std::vector<int>& proxy_ts,
                                      const std::vector<int>& target_ts, int M, int K,
                                      double fraction, int S_measure, int S_grad,
                                      const RngStream& root) {
    if (proxy_ts.empty() || target_ts.empty()) {
        throw ConfigError("timestep_cross_lds: timestep lists must be nonempty");
    }
    const std::uint64_t N = dataset.size();
    const auto subsets = sample_subsets(N, M, fraction, root.child("subsets").key());
    std::vector<std::vector<double>> weight_vectors;
    for (const auto& s : subsets) weight_vectors.push_back(weights_from_subset(N, s));

    // one oracle sweep covers every (target t, query) pair
    std::vector<Query> oracle_queries;
    for (std::size_t ti = 0; ti < target_ts.size(); ++ti) {
        for (std::size_t qi = 0; qi < query_points.size(); ++qi) {
            Query q;
            q.id = ti * query_points.size() + qi;
            q.fn = {MeasurementKind::PerTimestepLoss, target_ts[ti], S_measure,
                    root.child("measure", ti, qi)};
            q.payload = query_points[qi];
            oracle_queries.push_back(std::move(q));
        }
    }
    const auto oracle = retrain_oracle(retrain_spec, dataset.points, weight_vectors, K,
                                       oracle_queries);

    TimestepGridResult res;
    res.proxy_ts = proxy_ts;
    res.target_ts = target_ts;
    res.grid.resize(static_cast<Eigen::Index>(proxy_ts.size()),
                    static_cast<Eigen::Index>(target_ts.size()));

    // the cached half-preconditioned training gradients are shared by every
    // proxy measurement (query batching)
    const TrainCache cache = build_train_cache(base_net, retrain_spec.schedule, state, damping,
                                               dataset, S_grad, root.child("train-grads"), false);

    const std::size_t Qn = query_points.size();
    for (std::size_t pi = 0; pi < proxy_ts.size(); ++pi) {
        std::vector<Query> proxy_queries;
        for (std::size_t qi = 0; qi < Qn; ++qi) {
            Query q;
            q.id = qi;
            q.fn = {MeasurementKind::PerTimestepLoss, proxy_ts[pi], S_measure,
                    root.child("proxy", pi, qi)};
            q.payload = query_points[qi];
            proxy_queries.push_back(std::move(q));
        }
        const ScoreMatrix sm =
            score_queries(cache, base_net, retrain_spec.schedule, state, proxy_queries);
        const Mat preds = predictions_from_scores(sm, subsets, N);

        for (std::size_t ti = 0; ti < target_ts.size(); ++ti) {
            // slice the oracle tensor down to this target's query block
            std::vector<Mat> sliced;
            sliced.reserve(oracle.size());
            for (const Mat& m : oracle) {
                sliced.push_back(m.middleCols(static_cast<Eigen::Index>(ti * Qn),
                                              static_cast<Eigen::Index>(Qn)));
            }
            res.grid(static_cast<Eigen::Index>(pi), static_cast<Eigen::Index>(ti)) =
                lds(preds, sliced).mean;
        }
    }
    return res;
}

void save_benchmark(ArtifactContainer& c, const std::string& prefix, const LdsBenchmark& b) {
    c.add_scalar_u64(prefix + "/M", b.subsets.size());
    c.add_scalar_u64(prefix + "/K", static_cast<std::uint64_t>(b.K));
    const double fraction = b.fraction;
    c.add_f64(prefix + "/fraction", {1}, std::span<const double>(&fraction, 1));
    c.add_scalar_u64(prefix + "/subset_seed", b.subset_seed);
    c.add_u64(prefix + "/query_ids", {b.query_ids.size()}, b.query_ids);
    for (std::size_t i = 0; i < b.subsets.size(); ++i) {
        c.add_u64(prefix + "/subset" + std::to_string(i), {b.subsets[i].size()}, b.subsets[i]);
        c.add_matrix(prefix + "/oracle" + std::to_string(i), b.oracle[i]);
    }
}

LdsBenchmark load_benchmark(const ArtifactContainer& c, const std::string& prefix) {
    LdsBenchmark b;
    const std::uint64_t M = c.get_scalar_u64(prefix + "/M");
    b.K = static_cast<int>(c.get_scalar_u64(prefix + "/K"));
    b.fraction = c.get_f64(prefix + "/fraction")[0];
    b.subset_seed = c.get_scalar_u64(prefix + "/subset_seed");
    b.query_ids = c.get_u64(prefix + "/query_ids");
    for (std::uint64_t i = 0; i < M; ++i) {
        b.subsets.push_back(c.get_u64(prefix + "/subset" + std::to_string(i)));
        b.oracle.push_back(c.get_matrix(prefix + "/oracle" + std::to_string(i)));
    }
    return b;
}

}  // namespace dinf
