#include "dinf/influence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dinf/parallel.hpp"
#include "dinf/train.hpp"

namespace dinf {
namespace {

const char* kind_name(MeasurementKind k) {
    switch (k) {
        case MeasurementKind::SimpleLoss: return "simple_loss";
        case MeasurementKind::Elbo: return "elbo";
        case MeasurementKind::TrajectoryLogProb: return "trajectory_logprob";
        case MeasurementKind::PerTimestepLoss: return "per_timestep_loss";
    }
    return "?";
}

std::string describe_measurements(const std::vector<Query>& queries) {
    if (queries.empty()) return "none";
    std::ostringstream os;
    const MeasurementFn& fn = queries.front().fn;
    os << kind_name(fn.kind);
    if (fn.kind == MeasurementKind::PerTimestepLoss) os << "(t=" << fn.t << ")";
    os << " S=" << fn.samples << " Q=" << queries.size();
    return os.str();
}

// Everything needed to turn raw parameter-space gradients into half-
// preconditioned vectors for one (state, net) pair.
struct ScoringContext {
    DampedSolver solver;
    Mat proj;  // empty unless the backend projects
    std::vector<long> segments;

    ScoringContext(const EpsilonNet& net, const CurvatureState& state) : solver(state) {
        if (state.meta.net_hash != net_param_hash(net)) {
            throw ProvenanceError("influence: curvature state was built from different parameters");
        }
        if (state.meta.backend == CurvatureBackend::ProjectedEf) {
            proj = state.identity_projection
                       ? Mat::Identity(state.d_proj, net.param_count())
                       : projection_matrix(state.d_proj, net.param_count(), state.meta.proj_seed);
            segments = {static_cast<long>(state.d_proj)};
        } else if (state.meta.backend == CurvatureBackend::DenseGgn) {
            segments = {net.param_count()};
        } else {
            segments = layer_segment_sizes(net);
        }
    }

    Vec half(double damping, const Vec& raw) const {
        if (proj.size() > 0) {
            const Vec u = proj * raw;
            return solver.apply_half_inverse(damping, u);
        }
        return solver.apply_half_inverse(damping, raw);
    }
};

}  // namespace

std::vector<long> layer_segment_sizes(const EpsilonNet& net) {
    std::vector<long> sizes;
    sizes.reserve(net.layers.size());
    for (const Layer& l : net.layers) sizes.push_back(layer_param_count(l));
    return sizes;
}

CompressedGradients quantize(const std::vector<Vec>& vecs,
                             const std::vector<long>& segment_sizes) {
    long total = 0;
    for (long s : segment_sizes) total += s;
    CompressedGradients cg;
    cg.segment_sizes = segment_sizes;
    cg.vector_length = total;
    cg.payload.reserve(vecs.size());
    cg.scales.reserve(vecs.size());
    for (const Vec& v : vecs) {
        if (v.size() != total) throw ConfigError("quantize: vector length mismatch");
        if (!v.allFinite()) throw NumericError("quantize: non-finite input");
        std::vector<std::int8_t> q(total);
        std::vector<double> sc;
        sc.reserve(segment_sizes.size());
        long off = 0;
        for (long seg : segment_sizes) {
            const double absmax = seg > 0 ? v.segment(off, seg).cwiseAbs().maxCoeff() : 0.0;
            const double scale = absmax / 127.0;
            sc.push_back(scale);
            for (long i = 0; i < seg; ++i) {
                q[off + i] = scale == 0.0
                                 ? std::int8_t{0}
                                 : static_cast<std::int8_t>(std::lround(v[off + i] / scale));
            }
            off += seg;
        }
        cg.payload.push_back(std::move(q));
        cg.scales.push_back(std::move(sc));
    }
    return cg;
}

std::vector<Vec> dequantize(const CompressedGradients& cg) {
    std::vector<Vec> out;
    out.reserve(cg.payload.size());
    for (std::size_t k = 0; k < cg.payload.size(); ++k) {
        Vec v(cg.vector_length);
        long off = 0;
        for (std::size_t si = 0; si < cg.segment_sizes.size(); ++si) {
            const long seg = cg.segment_sizes[si];
            const double scale = cg.scales[k][si];
            for (long i = 0; i < seg; ++i) {
                v[off + i] = scale * static_cast<double>(cg.payload[k][off + i]);
            }
            off += seg;
        }
        out.push_back(std::move(v));
    }
    return out;
}

Vec query_gradient(const EpsilonNet& net, const NoiseSchedule& sched, const MeasurementFn& fn,
                   const QueryPayload& query) {
    switch (fn.kind) {
        case MeasurementKind::SimpleLoss: {
            const Vec* x = std::get_if<Vec>(&query);
            if (!x) throw PayloadError("SimpleLoss expects a data vector");
            // same function as the per-example training gradient
            return per_example_train_gradient(net, sched, *x, fn.samples, fn.stream);
        }
        case MeasurementKind::PerTimestepLoss: {
            const Vec* x = std::get_if<Vec>(&query);
            if (!x) throw PayloadError("PerTimestepLoss expects a data vector");
            if (fn.t < 1 || fn.t > sched.T) throw ConfigError("PerTimestepLoss: t out of range");
            Vec acc = Vec::Zero(net.param_count());
            for (int s = 1; s <= fn.samples; ++s) {
                Sampler smp(fn.stream.child("s", static_cast<std::uint64_t>(s)));
                const Vec eps = smp.normal_vec(net.data_dim);
                const Vec x_t = q_sample(sched, *x, fn.t, eps);
                acc += grad_sq_loss(net, x_t, fn.t, eps).grad;
            }
            return acc / fn.samples;
        }
        case MeasurementKind::Elbo: {
            const Vec* x = std::get_if<Vec>(&query);
            if (!x) throw PayloadError("Elbo expects a data vector");
            Vec acc = Vec::Zero(net.param_count());
            for (int s = 1; s <= fn.samples; ++s) {
                const McDraw d = mc_draw(sched, net.data_dim, fn.stream, s);
                const Vec x_t = q_sample(sched, *x, d.t, d.eps);
                acc += (sched.T * sched.w(d.t)) * grad_sq_loss(net, x_t, d.t, d.eps).grad;
            }
            return acc / fn.samples;
        }
        case MeasurementKind::TrajectoryLogProb: {
            const Trajectory* traj = std::get_if<Trajectory>(&query);
            if (!traj) throw PayloadError("TrajectoryLogProb expects a stored trajectory");
            if (static_cast<int>(traj->states.size()) != sched.T + 1) {
                throw PayloadError("trajectory length does not match the schedule");
            }
            Vec acc = Vec::Zero(net.param_count());
            for (int t = 2; t <= sched.T; ++t) {
                const Vec& x_t = traj->states[t];
                const ForwardPass fwd = run_forward(net, x_t, t);
                const Vec mu = posterior_mean(sched, x_t, fwd.output, t);
                const double coeff =
                    (1.0 - sched.lam(t) * sched.lam(t)) / std::sqrt(1.0 - sched.abar(t));
                const double sig2 = sched.sig(t) * sched.sig(t);
                // d logN / d eps_pred: mu is affine in the prediction with
                // slope -coeff/lambda
                const Vec seed = -(coeff / sched.lam(t) / sig2) * (traj->states[t - 1] - mu);
                acc += run_backward(net, fwd, seed, true).param_grad;
            }
            return acc;
        }
    }
    throw ConfigError("unknown measurement kind");
}

std::string describe_curvature(const CurvatureState& state) {
    std::ostringstream os;
    switch (state.meta.backend) {
        case CurvatureBackend::Kfac: os << "kfac"; break;
        case CurvatureBackend::Ekfac: os << "ekfac"; break;
        case CurvatureBackend::DenseGgn: os << "dense"; break;
        case CurvatureBackend::ProjectedEf: os << "projected_ef"; break;
    }
    os << " kind=" << (state.meta.ggn_kind == GgnKind::Model ? "model" : "loss");
    os << " sharing=" << (state.meta.sharing == Sharing::Expand ? "expand" : "reduce");
    os << " N=" << state.meta.dataset_size << " S=" << state.meta.samples;
    if (state.meta.samples_correction > 0) os << " S2=" << state.meta.samples_correction;
    char buf[64];
    std::snprintf(buf, sizeof(buf), " stream=%016llx net=%016llx",
                  static_cast<unsigned long long>(state.meta.stream_key),
                  static_cast<unsigned long long>(state.meta.net_hash));
    os << buf;
    if (state.meta.backend == CurvatureBackend::ProjectedEf) {
        os << " d_proj=" << state.d_proj << " proj_seed=" << state.meta.proj_seed;
        if (state.identity_projection) os << " identity";
    }
    return os.str();
}

ScoreMatrix influence_scores(const EpsilonNet& net, const NoiseSchedule& sched,
                             const CurvatureState& state, double damping,
                             const std::vector<Query>& queries, const Dataset& dataset, int S,
                             const RngStream& stream, bool compress) {
    if (damping <= 0.0) throw ConfigError("influence_scores: damping must be > 0");
    const ScoringContext ctx(net, state);
    const std::size_t Q = queries.size();
    const std::size_t N = dataset.size();

    std::vector<Vec> query_half(Q);
    parallel::for_each_index(Q, [&](std::size_t q) {
        const Vec g = query_gradient(net, sched, queries[q].fn, queries[q].payload);
        query_half[q] = ctx.half(damping, g);
    });
    if (compress) {
        query_half = dequantize(quantize(query_half, ctx.segments));
    }

    const auto order = dataset.order_by_id();
    ScoreMatrix sm;
    sm.scores.resize(static_cast<Eigen::Index>(Q), static_cast<Eigen::Index>(N));
    sm.train_ids.resize(N);
    for (std::size_t pos = 0; pos < N; ++pos) sm.train_ids[pos] = dataset.ids[order[pos]];
    sm.query_ids.reserve(Q);
    for (const Query& q : queries) sm.query_ids.push_back(q.id);

    // each training gradient is computed once and dotted against every cached
    // query vector; columns are disjoint across workers
    parallel::for_each_index(N, [&](std::size_t pos) {
        const std::size_t n = order[pos];
        const Vec g = per_example_train_gradient(net, sched, dataset.points[n], S,
                                                 example_stream(stream, dataset.ids[n]));
        const Vec h = ctx.half(damping, g);
        for (std::size_t q = 0; q < Q; ++q) {
            sm.scores(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(pos)) =
                query_half[q].dot(h);
        }
    });

    sm.meta.damping = damping;
    sm.meta.curvature_desc = describe_curvature(state);
    sm.meta.measurement_desc = describe_measurements(queries);
    sm.meta.samples = S;
    sm.meta.compressed = compress;
    sm.meta.train_stream_key = stream.key();
    sm.meta.net_hash = net_param_hash(net);
    return sm;
}

TrainCache build_train_cache(const EpsilonNet& net, const NoiseSchedule& sched,
                             const CurvatureState& state, double damping, const Dataset& dataset,
                             int S, const RngStream& stream, bool compress) {
    if (damping <= 0.0) throw ConfigError("build_train_cache: damping must be > 0");
    const ScoringContext ctx(net, state);
    const auto order = dataset.order_by_id();
    const std::size_t N = dataset.size();

    TrainCache tc;
    tc.train_half.resize(N);
    tc.train_ids.resize(N);
    for (std::size_t pos = 0; pos < N; ++pos) tc.train_ids[pos] = dataset.ids[order[pos]];
    parallel::for_each_index(N, [&](std::size_t pos) {
        const std::size_t n = order[pos];
        const Vec g = per_example_train_gradient(net, sched, dataset.points[n], S,
                                                 example_stream(stream, dataset.ids[n]));
        tc.train_half[pos] = ctx.half(damping, g);
    });
    if (compress) {
        tc.train_half = dequantize(quantize(tc.train_half, ctx.segments));
    }
    tc.damping = damping;
    tc.samples = S;
    tc.compressed = compress;
    tc.train_stream_key = stream.key();
    tc.net_hash = net_param_hash(net);
    tc.curvature_desc = describe_curvature(state);
    return tc;
}

ScoreMatrix score_queries(const TrainCache& cache, const EpsilonNet& net,
                          const NoiseSchedule& sched, const CurvatureState& state,
                          const std::vector<Query>& queries) {
    if (cache.net_hash != net_param_hash(net)) {
        throw ProvenanceError("score_queries: cache was built from different parameters");
    }
    if (cache.curvature_desc != describe_curvature(state)) {
        throw ProvenanceError("score_queries: cache was built from a different curvature state");
    }
    const ScoringContext ctx(net, state);
    const std::size_t Q = queries.size();
    const std::size_t N = cache.train_half.size();

    ScoreMatrix sm;
    sm.scores.resize(static_cast<Eigen::Index>(Q), static_cast<Eigen::Index>(N));
    sm.train_ids = cache.train_ids;
    for (const Query& q : queries) sm.query_ids.push_back(q.id);

    parallel::for_each_index(Q, [&](std::size_t q) {
        const Vec g = query_gradient(net, sched, queries[q].fn, queries[q].payload);
        const Vec hq = ctx.half(cache.damping, g);
        for (std::size_t pos = 0; pos < N; ++pos) {
            // query side stays the left operand so Algorithm 1 and this path
            // share one arithmetic order
            sm.scores(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(pos)) =
                hq.dot(cache.train_half[pos]);
        }
    });

    sm.meta.damping = cache.damping;
    sm.meta.curvature_desc = cache.curvature_desc;
    sm.meta.measurement_desc = describe_measurements(queries);
    sm.meta.samples = cache.samples;
    sm.meta.compressed = cache.compressed;
    sm.meta.train_stream_key = cache.train_stream_key;
    sm.meta.net_hash = cache.net_hash;
    return sm;
}

Vec predict_subset_delta(const ScoreMatrix& sm, const std::vector<std::uint64_t>& removed,
                         std::uint64_t dataset_size, double downweight_fraction) {
    std::set<std::uint64_t> seen;
    Vec delta = Vec::Zero(sm.scores.rows());
    for (std::uint64_t id : removed) {
        const auto it = std::find(sm.train_ids.begin(), sm.train_ids.end(), id);
        if (it == sm.train_ids.end()) {
            throw IndexError("predict_subset_delta: unknown training id " + std::to_string(id));
        }
        if (!seen.insert(id).second) {
            throw IndexError("predict_subset_delta: duplicate training id " + std::to_string(id));
        }
        const Eigen::Index col = static_cast<Eigen::Index>(it - sm.train_ids.begin());
        delta += sm.scores.col(col);
    }
    return (downweight_fraction / static_cast<double>(dataset_size)) * delta;
}

std::vector<std::size_t> top_k_indices(const ScoreMatrix& sm, std::size_t query_row,
                                       std::size_t k) {
    std::vector<std::size_t> idx(sm.train_ids.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const double sa = sm.scores(static_cast<Eigen::Index>(query_row),
                                    static_cast<Eigen::Index>(a));
        const double sb = sm.scores(static_cast<Eigen::Index>(query_row),
                                    static_cast<Eigen::Index>(b));
        if (sa != sb) return sa > sb;
        return sm.train_ids[a] < sm.train_ids[b];  // ties: lower training id wins
    });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

void save_scores(ArtifactContainer& c, const std::string& prefix, const ScoreMatrix& sm) {
    c.add_matrix(prefix + "/scores", sm.scores);
    c.add_u64(prefix + "/query_ids", {sm.query_ids.size()}, sm.query_ids);
    c.add_u64(prefix + "/train_ids", {sm.train_ids.size()}, sm.train_ids);
    const double damping = sm.meta.damping;
    c.add_f64(prefix + "/damping", {1}, std::span<const double>(&damping, 1));
    c.add_string(prefix + "/curvature", sm.meta.curvature_desc);
    c.add_string(prefix + "/measurement", sm.meta.measurement_desc);
    std::uint64_t meta[4] = {static_cast<std::uint64_t>(sm.meta.samples),
                             sm.meta.compressed ? 1ull : 0ull, sm.meta.train_stream_key,
                             sm.meta.net_hash};
    c.add_u64(prefix + "/meta", {4}, meta);
}

ScoreMatrix load_scores(const ArtifactContainer& c, const std::string& prefix) {
    ScoreMatrix sm;
    sm.scores = c.get_matrix(prefix + "/scores");
    sm.query_ids = c.get_u64(prefix + "/query_ids");
    sm.train_ids = c.get_u64(prefix + "/train_ids");
    sm.meta.damping = c.get_f64(prefix + "/damping")[0];
    sm.meta.curvature_desc = c.get_string(prefix + "/curvature");
    sm.meta.measurement_desc = c.get_string(prefix + "/measurement");
    const auto meta = c.get_u64(prefix + "/meta");
    sm.meta.samples = static_cast<int>(meta[0]);
    sm.meta.compressed = meta[1] != 0;
    sm.meta.train_stream_key = meta[2];
    sm.meta.net_hash = meta[3];
    return sm;
}

void save_train_cache(ArtifactContainer& c, const std::string& prefix, const TrainCache& tc) {
    const std::size_t N = tc.train_half.size();
    const Eigen::Index dim = N > 0 ? tc.train_half.front().size() : 0;
    Mat m(static_cast<Eigen::Index>(N), dim);
    for (std::size_t i = 0; i < N; ++i) m.row(static_cast<Eigen::Index>(i)) = tc.train_half[i];
    c.add_matrix(prefix + "/train_half", m);
    c.add_u64(prefix + "/train_ids", {tc.train_ids.size()}, tc.train_ids);
    const double damping = tc.damping;
    c.add_f64(prefix + "/damping", {1}, std::span<const double>(&damping, 1));
    c.add_string(prefix + "/curvature", tc.curvature_desc);
    std::uint64_t meta[4] = {static_cast<std::uint64_t>(tc.samples), tc.compressed ? 1ull : 0ull,
                             tc.train_stream_key, tc.net_hash};
    c.add_u64(prefix + "/meta", {4}, meta);
}

TrainCache load_train_cache(const ArtifactContainer& c, const std::string& prefix) {
    TrainCache tc;
    const Mat m = c.get_matrix(prefix + "/train_half");
    tc.train_half.reserve(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) tc.train_half.push_back(m.row(i).transpose());
    tc.train_ids = c.get_u64(prefix + "/train_ids");
    tc.damping = c.get_f64(prefix + "/damping")[0];
    tc.curvature_desc = c.get_string(prefix + "/curvature");
    const auto meta = c.get_u64(prefix + "/meta");
    tc.samples = static_cast<int>(meta[0]);
    tc.compressed = meta[1] != 0;
    tc.train_stream_key = meta[2];
    tc.net_hash = meta[3];
    return tc;
}

void export_scores_csv(const std::string& path, const ScoreMatrix& sm,
                       std::uint64_t config_hash) {
    std::ostringstream meta;
    meta << "damping=" << sm.meta.damping << " curvature=\"" << sm.meta.curvature_desc
         << "\" measurement=\"" << sm.meta.measurement_desc << "\" samples=" << sm.meta.samples
         << " compressed=" << (sm.meta.compressed ? 1 : 0);
    const std::uint64_t meta_hash = fnv1a64(meta.str());

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ContainerError("cannot open for writing: " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
    out << "# scores config_hash=" << buf;
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(meta_hash));
    out << " meta_hash=" << buf << " " << meta.str() << "\n";
    out << "query_id";
    for (std::uint64_t id : sm.train_ids) out << ",train_" << id;
    out << "\n";
    for (Eigen::Index q = 0; q < sm.scores.rows(); ++q) {
        out << sm.query_ids[static_cast<std::size_t>(q)];
        for (Eigen::Index j = 0; j < sm.scores.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", sm.scores(q, j));
            out << "," << buf;
        }
        out << "\n";
    }
}

}  // namespace dinf
