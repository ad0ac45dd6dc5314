#include "dinf/curvature.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>

#include "dinf/parallel.hpp"

namespace dinf {
namespace {

KfacTarget resolve_target(GgnKind kind, KfacTarget t) {
    if (t != KfacTarget::Default) return t;
    return kind == GgnKind::Model ? KfacTarget::Exact : KfacTarget::TrainingEps;
}

struct LayerShape {
    int rows = 0;  // d_out
    int cols = 0;  // d_in + 1
    int M = 1;
};

std::vector<LayerShape> layer_shapes(const EpsilonNet& net) {
    std::vector<LayerShape> shapes;
    shapes.reserve(net.layers.size());
    for (const Layer& l : net.layers) {
        const auto [rows, cols] = layer_param_shape(l);
        shapes.push_back({rows, cols, layer_sharing_size(l)});
    }
    return shapes;
}

struct FactorAcc {
    std::vector<Mat> A, B;

    static FactorAcc zeros(const std::vector<LayerShape>& shapes) {
        FactorAcc acc;
        for (const auto& sh : shapes) {
            acc.A.push_back(Mat::Zero(sh.cols, sh.cols));
            acc.B.push_back(Mat::Zero(sh.rows, sh.rows));
        }
        return acc;
    }

    void combine(const FactorAcc& other) {
        for (std::size_t l = 0; l < A.size(); ++l) {
            A[l] += other.A[l];
            B[l] += other.B[l];
        }
    }
};

// Accumulates the a-side outer products of one sample into acc.A.
void accumulate_a(FactorAcc& acc, const std::vector<std::vector<Vec>>& as, Sharing sharing) {
    for (std::size_t l = 0; l < as.size(); ++l) {
        if (sharing == Sharing::Expand) {
            for (const Vec& a : as[l]) acc.A[l].noalias() += a * a.transpose();
        } else {
            Vec ahat = as[l][0];
            for (std::size_t m = 1; m < as[l].size(); ++m) ahat += as[l][m];
            acc.A[l].noalias() += ahat * ahat.transpose();
        }
    }
}

// Accumulates the b-side of one single-backward sample (target-based) into
// acc.B with the given weight.
void accumulate_b_single(FactorAcc& acc, const std::vector<std::vector<Vec>>& bs, Sharing sharing,
                         double weight) {
    for (std::size_t l = 0; l < bs.size(); ++l) {
        if (sharing == Sharing::Expand) {
            for (const Vec& b : bs[l]) acc.B[l].noalias() += weight * (b * b.transpose());
        } else {
            Vec bhat = bs[l][0];
            for (std::size_t m = 1; m < bs[l].size(); ++m) bhat += bs[l][m];
            acc.B[l].noalias() += weight * (bhat * bhat.transpose());
        }
    }
}

// Exact l2-Hessian b-side: one backward per output coordinate, weight 2 from
// the Hessian of the squared error.
void accumulate_b_exact(FactorAcc& acc, const EpsilonNet& net, const ForwardPass& fwd,
                        Sharing sharing) {
    const int R = net.data_dim;
    for (int r = 0; r < R; ++r) {
        Vec seed = Vec::Zero(R);
        seed[r] = 1.0;
        const BackwardPass bp = run_backward(net, fwd, seed, /*want_param_grad=*/false);
        accumulate_b_single(acc, bp.layer_b, sharing, 2.0);
    }
}

Vec sample_eta(int data_dim, const RngStream& ex_stream, int s_index) {
    return Sampler(ex_stream.child("s", static_cast<std::uint64_t>(s_index)).child("eta"))
        .normal_vec(data_dim);
}

const char* backend_name(CurvatureBackend b) {
    switch (b) {
        case CurvatureBackend::Kfac: return "kfac";
        case CurvatureBackend::Ekfac: return "ekfac";
        case CurvatureBackend::DenseGgn: return "dense";
        case CurvatureBackend::ProjectedEf: return "projected_ef";
    }
    return "?";
}

}  // namespace

std::uint64_t net_param_hash(const EpsilonNet& net) {
    const Vec theta = net.flat_params();
    return fnv1a64(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(theta.data()), theta.size() * sizeof(double)));
}

CurvatureState accumulate_kfac(const EpsilonNet& net, const NoiseSchedule& sched,
                               const Dataset& dataset, GgnKind kind, Sharing sharing, int S,
                               const RngStream& stream, KfacTarget target) {
    if (S < 1) throw ConfigError("accumulate_kfac: S must be >= 1");
    if (dataset.size() == 0) throw ConfigError("accumulate_kfac: empty dataset");
    target = resolve_target(kind, target);

    const auto shapes = layer_shapes(net);
    const auto order = dataset.order_by_id();
    const std::size_t N = dataset.size();
    const bool loss_reduce = kind == GgnKind::Loss && sharing == Sharing::Reduce;

    FactorAcc total = parallel::blocked_reduce<FactorAcc>(
        N, parallel::kDefaultBlock, [&] { return FactorAcc::zeros(shapes); },
        [&](FactorAcc& acc, std::size_t pos) {
            const std::size_t n = order[pos];
            const RngStream ex = example_stream(stream, dataset.ids[n]);
            if (loss_reduce) {
                // position-summed a and b averaged over samples before the
                // outer product
                std::vector<Vec> abar(shapes.size()), bbar(shapes.size());
                for (std::size_t l = 0; l < shapes.size(); ++l) {
                    abar[l] = Vec::Zero(shapes[l].cols);
                    bbar[l] = Vec::Zero(shapes[l].rows);
                }
                for (int s = 1; s <= S; ++s) {
                    const McDraw d = mc_draw(sched, net.data_dim, ex, s);
                    const Vec x_t = q_sample(sched, dataset.points[n], d.t, d.eps);
                    const ForwardPass fwd = run_forward(net, x_t, d.t);
                    const auto as = a_vectors(net, fwd);
                    const Vec seed = 2.0 * (fwd.output - d.eps);
                    const BackwardPass bp = run_backward(net, fwd, seed, false);
                    for (std::size_t l = 0; l < shapes.size(); ++l) {
                        for (const Vec& a : as[l]) abar[l] += a;
                        for (const Vec& b : bp.layer_b[l]) bbar[l] += b;
                    }
                }
                for (std::size_t l = 0; l < shapes.size(); ++l) {
                    abar[l] /= S;
                    bbar[l] /= S;
                    acc.A[l].noalias() += abar[l] * abar[l].transpose();
                    acc.B[l].noalias() += bbar[l] * bbar[l].transpose();
                }
                return;
            }
            for (int s = 1; s <= S; ++s) {
                const McDraw d = mc_draw(sched, net.data_dim, ex, s);
                const Vec x_t = q_sample(sched, dataset.points[n], d.t, d.eps);
                const ForwardPass fwd = run_forward(net, x_t, d.t);
                accumulate_a(acc, a_vectors(net, fwd), sharing);
                switch (target) {
                    case KfacTarget::Exact:
                        accumulate_b_exact(acc, net, fwd, sharing);
                        break;
                    case KfacTarget::TrainingEps: {
                        const Vec seed = 2.0 * (fwd.output - d.eps);
                        accumulate_b_single(acc, run_backward(net, fwd, seed, false).layer_b,
                                            sharing, 1.0);
                        break;
                    }
                    case KfacTarget::SampledEps: {
                        // eps_mod = stopgrad(out) + eta, so the seed is -2 eta;
                        // the 1/2 makes the eta-expectation match the exact path
                        const Vec eta = sample_eta(net.data_dim, ex, s);
                        const Vec seed = -2.0 * eta;
                        accumulate_b_single(acc, run_backward(net, fwd, seed, false).layer_b,
                                            sharing, 0.5);
                        break;
                    }
                    case KfacTarget::Default: break;  // resolved above
                }
            }
        },
        [](FactorAcc& lhs, const FactorAcc& rhs) { lhs.combine(rhs); });

    CurvatureState state;
    state.meta.backend = CurvatureBackend::Kfac;
    state.meta.ggn_kind = kind;
    state.meta.sharing = sharing;
    state.meta.dataset_size = N;
    state.meta.samples = S;
    state.meta.stream_key = stream.key();
    state.meta.net_hash = net_param_hash(net);
    state.kfac.resize(shapes.size());
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const double M = static_cast<double>(shapes[l].M);
        double a_scale, b_scale;
        if (loss_reduce) {
            a_scale = static_cast<double>(N) * M * M;
            b_scale = static_cast<double>(N);
        } else if (sharing == Sharing::Expand) {
            a_scale = static_cast<double>(N) * S * M;
            b_scale = static_cast<double>(N) * S;
        } else {
            a_scale = static_cast<double>(N) * S * M * M;
            b_scale = static_cast<double>(N) * S;
        }
        state.kfac[l].A = total.A[l] / a_scale;
        state.kfac[l].B = total.B[l] / b_scale;
    }
    return state;
}

CurvatureState ekfac_correct(const CurvatureState& kfac, const EpsilonNet& net,
                             const NoiseSchedule& sched, const Dataset& dataset, int S2,
                             const RngStream& stream) {
    if (kfac.meta.backend != CurvatureBackend::Kfac) {
        throw ConfigError("ekfac_correct: input state is not K-FAC");
    }
    if (kfac.meta.net_hash != net_param_hash(net)) {
        throw ProvenanceError("ekfac_correct: state was built from different parameters");
    }
    if (kfac.meta.dataset_size != dataset.size()) {
        throw ProvenanceError("ekfac_correct: dataset size mismatch");
    }
    if (S2 < 1) throw ConfigError("ekfac_correct: S2 must be >= 1");

    const auto shapes = layer_shapes(net);
    const GgnKind kind = kfac.meta.ggn_kind;

    CurvatureState state = kfac;
    state.meta.backend = CurvatureBackend::Ekfac;
    state.meta.samples_correction = S2;
    state.meta.correction_stream_key = stream.key();
    state.ekfac.resize(shapes.size());
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        Eigen::SelfAdjointEigenSolver<Mat> ea(kfac.kfac[l].A);
        Eigen::SelfAdjointEigenSolver<Mat> eb(kfac.kfac[l].B);
        if (ea.info() != Eigen::Success || eb.info() != Eigen::Success) {
            throw NumericError("ekfac_correct: eigendecomposition failed at layer " +
                               std::to_string(l));
        }
        state.ekfac[l].Q_A = ea.eigenvectors();
        state.ekfac[l].Q_B = eb.eigenvectors();
    }

    const auto order = dataset.order_by_id();
    const std::size_t N = dataset.size();

    // Full per-sample layer gradient matrix (positions summed inside). For the
    // exact model target the eta expectation is taken analytically: one matrix
    // per output coordinate, squared moments weighted by 2.
    auto layer_grad = [&](const std::vector<std::vector<Vec>>& as,
                          const std::vector<std::vector<Vec>>& bs, std::size_t l) {
        Mat g = Mat::Zero(shapes[l].rows, shapes[l].cols);
        for (std::size_t m = 0; m < as[l].size(); ++m) {
            g.noalias() += bs[l][m] * as[l][m].transpose();
        }
        return g;
    };

    using LambdaAcc = std::vector<Mat>;
    LambdaAcc total = parallel::blocked_reduce<LambdaAcc>(
        N, parallel::kDefaultBlock,
        [&] {
            LambdaAcc acc;
            for (const auto& sh : shapes) acc.push_back(Mat::Zero(sh.rows, sh.cols));
            return acc;
        },
        [&](LambdaAcc& acc, std::size_t pos) {
            const std::size_t n = order[pos];
            const RngStream ex = example_stream(stream, dataset.ids[n]);
            if (kind == GgnKind::Loss) {
                // average the gradient over samples before squaring, matching
                // the loss-split outer-product convention
                std::vector<Mat> gbar;
                for (const auto& sh : shapes) gbar.push_back(Mat::Zero(sh.rows, sh.cols));
                for (int s = 1; s <= S2; ++s) {
                    const McDraw d = mc_draw(sched, net.data_dim, ex, s);
                    const Vec x_t = q_sample(sched, dataset.points[n], d.t, d.eps);
                    const ForwardPass fwd = run_forward(net, x_t, d.t);
                    const auto as = a_vectors(net, fwd);
                    const Vec seed = 2.0 * (fwd.output - d.eps);
                    const BackwardPass bp = run_backward(net, fwd, seed, false);
                    for (std::size_t l = 0; l < shapes.size(); ++l) {
                        gbar[l] += layer_grad(as, bp.layer_b, l);
                    }
                }
                for (std::size_t l = 0; l < shapes.size(); ++l) {
                    const Mat rot =
                        state.ekfac[l].Q_B.transpose() * (gbar[l] / S2) * state.ekfac[l].Q_A;
                    acc[l] += rot.cwiseProduct(rot);
                }
                return;
            }
            for (int s = 1; s <= S2; ++s) {
                const McDraw d = mc_draw(sched, net.data_dim, ex, s);
                const Vec x_t = q_sample(sched, dataset.points[n], d.t, d.eps);
                const ForwardPass fwd = run_forward(net, x_t, d.t);
                const auto as = a_vectors(net, fwd);
                for (int r = 0; r < net.data_dim; ++r) {
                    Vec seed = Vec::Zero(net.data_dim);
                    seed[r] = 1.0;
                    const BackwardPass bp = run_backward(net, fwd, seed, false);
                    for (std::size_t l = 0; l < shapes.size(); ++l) {
                        const Mat rot = state.ekfac[l].Q_B.transpose() *
                                        layer_grad(as, bp.layer_b, l) * state.ekfac[l].Q_A;
                        acc[l] += 2.0 * rot.cwiseProduct(rot);
                    }
                }
            }
        },
        [](LambdaAcc& lhs, const LambdaAcc& rhs) {
            for (std::size_t l = 0; l < lhs.size(); ++l) lhs[l] += rhs[l];
        });

    for (std::size_t l = 0; l < shapes.size(); ++l) {
        const double scale = kind == GgnKind::Loss ? static_cast<double>(N)
                                                   : static_cast<double>(N) * S2;
        state.ekfac[l].lambda = total[l] / scale;
    }
    return state;
}

CurvatureState dense_ggn(const EpsilonNet& net, const NoiseSchedule& sched,
                         const Dataset& dataset, GgnKind kind, int S, const RngStream& stream) {
    const long P = net.param_count();
    if (P > 2000) {
        throw OracleScaleError("dense_ggn: param_count " + std::to_string(P) +
                               " exceeds the oracle guard of 2000");
    }
    if (S < 1) throw ConfigError("dense_ggn: S must be >= 1");
    if (dataset.size() == 0) throw ConfigError("dense_ggn: empty dataset");

    const auto order = dataset.order_by_id();
    const std::size_t N = dataset.size();
    Mat G = Mat::Zero(P, P);

    // oracle path: serial accumulation in id order
    for (std::size_t pos = 0; pos < N; ++pos) {
        const std::size_t n = order[pos];
        const RngStream ex = example_stream(stream, dataset.ids[n]);
        if (kind == GgnKind::Model) {
            for (int s = 1; s <= S; ++s) {
                const McDraw d = mc_draw(sched, net.data_dim, ex, s);
                const Vec x_t = q_sample(sched, dataset.points[n], d.t, d.eps);
                const ForwardPass fwd = run_forward(net, x_t, d.t);
                for (int r = 0; r < net.data_dim; ++r) {
                    Vec seed = Vec::Zero(net.data_dim);
                    seed[r] = 1.0;
                    const Vec g = run_backward(net, fwd, seed, true).param_grad;
                    G.noalias() += g * g.transpose();
                }
            }
        } else {
            const Vec g =
                per_example_train_gradient(net, sched, dataset.points[n], S, ex);
            G.noalias() += g * g.transpose();
        }
    }
    if (kind == GgnKind::Model) {
        G *= 2.0 / (static_cast<double>(N) * S);
    } else {
        G /= static_cast<double>(N);
    }

    CurvatureState state;
    state.meta.backend = CurvatureBackend::DenseGgn;
    state.meta.ggn_kind = kind;
    state.meta.dataset_size = N;
    state.meta.samples = S;
    state.meta.stream_key = stream.key();
    state.meta.net_hash = net_param_hash(net);
    state.dense = std::move(G);
    return state;
}

Mat projection_matrix(int d_proj, long d_param, std::uint64_t proj_seed) {
    Mat P(d_proj, d_param);
    Sampler smp(RngStream(proj_seed).child("proj"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_proj));
    for (long j = 0; j < d_param; ++j) {
        for (int i = 0; i < d_proj; ++i) P(i, j) = smp.normal() * scale;
    }
    return P;
}

CurvatureState projected_ef(const EpsilonNet& net, const NoiseSchedule& sched,
                            const Dataset& dataset, int d_proj, std::uint64_t proj_seed, int S,
                            const RngStream& stream, bool identity_projection) {
    if (d_proj < 1) throw ConfigError("projected_ef: d_proj must be >= 1");
    if (S < 1) throw ConfigError("projected_ef: S must be >= 1");
    if (dataset.size() == 0) throw ConfigError("projected_ef: empty dataset");
    const long P = net.param_count();
    if (identity_projection && d_proj != P) {
        throw ConfigError("projected_ef: identity hook requires d_proj == param_count");
    }

    Mat proj;
    if (identity_projection) {
        proj = Mat::Identity(d_proj, P);
    } else {
        proj = projection_matrix(d_proj, P, proj_seed);
    }

    const auto order = dataset.order_by_id();
    const std::size_t N = dataset.size();

    CurvatureState state;
    state.projected_grads.resize(static_cast<Eigen::Index>(N), d_proj);
    state.example_ids.resize(N);
    for (std::size_t pos = 0; pos < N; ++pos) state.example_ids[pos] = dataset.ids[order[pos]];

    parallel::for_each_index(N, [&](std::size_t pos) {
        const std::size_t n = order[pos];
        const Vec g = per_example_train_gradient(net, sched, dataset.points[n], S,
                                                 example_stream(stream, dataset.ids[n]));
        state.projected_grads.row(static_cast<Eigen::Index>(pos)) = (proj * g).transpose();
    });

    Mat H = Mat::Zero(d_proj, d_proj);
    for (std::size_t pos = 0; pos < N; ++pos) {
        const Vec row = state.projected_grads.row(static_cast<Eigen::Index>(pos)).transpose();
        H.noalias() += row * row.transpose();
    }
    H /= static_cast<double>(N);

    state.meta.backend = CurvatureBackend::ProjectedEf;
    state.meta.ggn_kind = GgnKind::Loss;
    state.meta.dataset_size = N;
    state.meta.samples = S;
    state.meta.stream_key = stream.key();
    state.meta.net_hash = net_param_hash(net);
    state.meta.proj_seed = proj_seed;
    state.d_proj = d_proj;
    state.identity_projection = identity_projection;
    state.projected_h = std::move(H);
    return state;
}

DampedSolver::DampedSolver(const CurvatureState& state) : backend_(state.meta.backend) {
    switch (backend_) {
        case CurvatureBackend::Kfac: {
            for (std::size_t l = 0; l < state.kfac.size(); ++l) {
                Eigen::SelfAdjointEigenSolver<Mat> ea(state.kfac[l].A);
                Eigen::SelfAdjointEigenSolver<Mat> eb(state.kfac[l].B);
                if (ea.info() != Eigen::Success || eb.info() != Eigen::Success) {
                    throw NumericError("damped solver: eigendecomposition failed at layer " +
                                       std::to_string(l));
                }
                LayerEigen le;
                le.Q_A = ea.eigenvectors();
                le.Q_B = eb.eigenvectors();
                le.lam_A = ea.eigenvalues().cwiseMax(0.0);
                le.lam_B = eb.eigenvalues().cwiseMax(0.0);
                input_dim_ += static_cast<long>(le.Q_B.rows()) * le.Q_A.rows();
                layers_.push_back(std::move(le));
            }
            break;
        }
        case CurvatureBackend::Ekfac: {
            for (const auto& ek : state.ekfac) {
                LayerEigen le;
                le.Q_A = ek.Q_A;
                le.Q_B = ek.Q_B;
                le.lambda = ek.lambda.cwiseMax(0.0);
                input_dim_ += static_cast<long>(le.Q_B.rows()) * le.Q_A.rows();
                layers_.push_back(std::move(le));
            }
            break;
        }
        case CurvatureBackend::DenseGgn: {
            Eigen::SelfAdjointEigenSolver<Mat> eig(state.dense);
            if (eig.info() != Eigen::Success) {
                throw NumericError("damped solver: dense eigendecomposition failed");
            }
            Q_dense_ = eig.eigenvectors();
            lam_dense_ = eig.eigenvalues().cwiseMax(0.0);
            input_dim_ = state.dense.rows();
            break;
        }
        case CurvatureBackend::ProjectedEf: {
            Eigen::SelfAdjointEigenSolver<Mat> eig(state.projected_h);
            if (eig.info() != Eigen::Success) {
                throw NumericError("damped solver: projected eigendecomposition failed");
            }
            Q_dense_ = eig.eigenvectors();
            lam_dense_ = eig.eigenvalues().cwiseMax(0.0);
            input_dim_ = state.d_proj;
            break;
        }
    }
}

Vec DampedSolver::apply_inverse(double damping, const Vec& v) const {
    if (damping <= 0.0) throw ConfigError("precondition: damping must be > 0");
    if (v.size() != input_dim_) throw ConfigError("precondition: vector length mismatch");
    if (backend_ == CurvatureBackend::DenseGgn || backend_ == CurvatureBackend::ProjectedEf) {
        const Vec rot = Q_dense_.transpose() * v;
        const Vec scaled = (rot.array() / (lam_dense_.array() + damping)).matrix();
        return Q_dense_ * scaled;
    }
    Vec out(v.size());
    Eigen::Index off = 0;
    for (const LayerEigen& le : layers_) {
        const Eigen::Index rows = le.Q_B.rows(), cols = le.Q_A.rows();
        Eigen::Map<const Mat> X(v.data() + off, rows, cols);
        const Mat rot = le.Q_B.transpose() * X * le.Q_A;
        Mat scaled(rows, cols);
        if (le.lambda.size() > 0) {
            scaled = rot.cwiseQuotient(le.lambda + Mat::Constant(rows, cols, damping));
        } else {
            const Mat grid = le.lam_B * le.lam_A.transpose();
            scaled = rot.cwiseQuotient(grid + Mat::Constant(rows, cols, damping));
        }
        Eigen::Map<Mat>(out.data() + off, rows, cols) = le.Q_B * scaled * le.Q_A.transpose();
        off += rows * cols;
    }
    return out;
}

Vec DampedSolver::apply_half_inverse(double damping, const Vec& v) const {
    if (damping <= 0.0) throw ConfigError("precondition: damping must be > 0");
    if (v.size() != input_dim_) throw ConfigError("precondition: vector length mismatch");
    if (backend_ == CurvatureBackend::DenseGgn || backend_ == CurvatureBackend::ProjectedEf) {
        const Vec rot = Q_dense_.transpose() * v;
        return (rot.array() / (lam_dense_.array() + damping).sqrt()).matrix();
    }
    Vec out(v.size());
    Eigen::Index off = 0;
    for (const LayerEigen& le : layers_) {
        const Eigen::Index rows = le.Q_B.rows(), cols = le.Q_A.rows();
        Eigen::Map<const Mat> X(v.data() + off, rows, cols);
        const Mat rot = le.Q_B.transpose() * X * le.Q_A;
        Mat grid(rows, cols);
        if (le.lambda.size() > 0) {
            grid = le.lambda;
        } else {
            grid = le.lam_B * le.lam_A.transpose();
        }
        Eigen::Map<Mat>(out.data() + off, rows, cols) =
            rot.cwiseQuotient((grid.array() + damping).sqrt().matrix());
        off += rows * cols;
    }
    return out;
}

Vec precondition(const CurvatureState& state, double damping, const Vec& v) {
    return DampedSolver(state).apply_inverse(damping, v);
}

void save_curvature(ArtifactContainer& c, const std::string& prefix, const CurvatureState& s) {
    c.add_string(prefix + "/backend", backend_name(s.meta.backend));
    std::uint64_t meta[8] = {static_cast<std::uint64_t>(s.meta.ggn_kind),
                             static_cast<std::uint64_t>(s.meta.sharing),
                             s.meta.dataset_size,
                             static_cast<std::uint64_t>(s.meta.samples),
                             static_cast<std::uint64_t>(s.meta.samples_correction),
                             s.meta.stream_key,
                             s.meta.correction_stream_key,
                             s.meta.net_hash};
    c.add_u64(prefix + "/meta", {8}, meta);
    c.add_scalar_u64(prefix + "/proj_seed", s.meta.proj_seed);
    c.add_scalar_u64(prefix + "/n_layers", s.kfac.size());
    for (std::size_t l = 0; l < s.kfac.size(); ++l) {
        const std::string p = prefix + "/layer" + std::to_string(l);
        c.add_matrix(p + "/A", s.kfac[l].A);
        c.add_matrix(p + "/B", s.kfac[l].B);
    }
    for (std::size_t l = 0; l < s.ekfac.size(); ++l) {
        const std::string p = prefix + "/layer" + std::to_string(l);
        c.add_matrix(p + "/Q_A", s.ekfac[l].Q_A);
        c.add_matrix(p + "/Q_B", s.ekfac[l].Q_B);
        c.add_matrix(p + "/lambda", s.ekfac[l].lambda);
    }
    if (s.meta.backend == CurvatureBackend::DenseGgn) {
        c.add_matrix(prefix + "/dense", s.dense);
    }
    if (s.meta.backend == CurvatureBackend::ProjectedEf) {
        c.add_scalar_u64(prefix + "/d_proj", static_cast<std::uint64_t>(s.d_proj));
        c.add_scalar_u64(prefix + "/identity_projection", s.identity_projection ? 1 : 0);
        c.add_matrix(prefix + "/projected_grads", s.projected_grads);
        c.add_matrix(prefix + "/projected_h", s.projected_h);
        c.add_u64(prefix + "/example_ids", {s.example_ids.size()}, s.example_ids);
    }
}

CurvatureState load_curvature(const ArtifactContainer& c, const std::string& prefix) {
    CurvatureState s;
    const std::string backend = c.get_string(prefix + "/backend");
    if (backend == "kfac") s.meta.backend = CurvatureBackend::Kfac;
    else if (backend == "ekfac") s.meta.backend = CurvatureBackend::Ekfac;
    else if (backend == "dense") s.meta.backend = CurvatureBackend::DenseGgn;
    else if (backend == "projected_ef") s.meta.backend = CurvatureBackend::ProjectedEf;
    else throw ContainerError("unknown curvature backend: " + backend);

    const auto meta = c.get_u64(prefix + "/meta");
    s.meta.ggn_kind = static_cast<GgnKind>(meta[0]);
    s.meta.sharing = static_cast<Sharing>(meta[1]);
    s.meta.dataset_size = meta[2];
    s.meta.samples = static_cast<int>(meta[3]);
    s.meta.samples_correction = static_cast<int>(meta[4]);
    s.meta.stream_key = meta[5];
    s.meta.correction_stream_key = meta[6];
    s.meta.net_hash = meta[7];
    s.meta.proj_seed = c.get_scalar_u64(prefix + "/proj_seed");

    const std::uint64_t n_layers = c.get_scalar_u64(prefix + "/n_layers");
    for (std::uint64_t l = 0; l < n_layers; ++l) {
        const std::string p = prefix + "/layer" + std::to_string(l);
        KfacLayerFactors f;
        f.A = c.get_matrix(p + "/A");
        f.B = c.get_matrix(p + "/B");
        s.kfac.push_back(std::move(f));
        if (s.meta.backend == CurvatureBackend::Ekfac) {
            EkfacLayerFactors e;
            e.Q_A = c.get_matrix(p + "/Q_A");
            e.Q_B = c.get_matrix(p + "/Q_B");
            e.lambda = c.get_matrix(p + "/lambda");
            s.ekfac.push_back(std::move(e));
        }
    }
    if (s.meta.backend == CurvatureBackend::DenseGgn) {
        s.dense = c.get_matrix(prefix + "/dense");
    }
    if (s.meta.backend == CurvatureBackend::ProjectedEf) {
        s.d_proj = static_cast<int>(c.get_scalar_u64(prefix + "/d_proj"));
        s.identity_projection = c.get_scalar_u64(prefix + "/identity_projection") != 0;
        s.projected_grads = c.get_matrix(prefix + "/projected_grads");
        s.projected_h = c.get_matrix(prefix + "/projected_h");
        s.example_ids = c.get_u64(prefix + "/example_ids");
    }
    return s;
}

}  // namespace dinf
