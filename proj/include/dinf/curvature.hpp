#pragma once

#include "dinf/container.hpp"
#include "dinf/diffusion.hpp"
#include "dinf/net.hpp"
#include "dinf/train.hpp"

namespace dinf {

enum class GgnKind { Model, Loss };
enum class Sharing { Expand, Reduce };
enum class CurvatureBackend { Kfac, Ekfac, DenseGgn, ProjectedEf };

// Per-example Monte Carlo stream, keyed by the stable example id. Every sweep
// that draws (t, eps) samples for example `id` derives them from here, so
// passing the same root stream to two sweeps freezes the same samples.
inline RngStream example_stream(const RngStream& root, std::uint64_t id) {
    return root.child("mc", id);
}

std::uint64_t net_param_hash(const EpsilonNet& net);

struct KfacLayerFactors {
    Mat A;  // (d_in + 1) x (d_in + 1) input second moment
    Mat B;  // d_out x d_out output-gradient second moment
};

struct EkfacLayerFactors {
    Mat Q_A;     // eigenbasis of A
    Mat Q_B;     // eigenbasis of B
    Mat lambda;  // d_out x (d_in + 1) corrected second moments in the rotated basis
};

struct CurvatureMeta {
    CurvatureBackend backend = CurvatureBackend::Kfac;
    GgnKind ggn_kind = GgnKind::Model;
    Sharing sharing = Sharing::Expand;
    std::uint64_t dataset_size = 0;
    int samples = 0;             // S of the factor pass
    int samples_correction = 0;  // S2 of the eigenvalue pass (ekfac)
    std::uint64_t stream_key = 0;
    std::uint64_t correction_stream_key = 0;
    std::uint64_t net_hash = 0;
    std::uint64_t proj_seed = 0;  // projected_ef
};

struct CurvatureState {
    CurvatureMeta meta;
    std::vector<KfacLayerFactors> kfac;    // Kfac and Ekfac
    std::vector<EkfacLayerFactors> ekfac;  // Ekfac only
    Mat dense;                             // DenseGgn only
    // ProjectedEf: gradients and second moment in the projected space; rows
    // of `projected_grads` follow `example_ids`.
    int d_proj = 0;
    bool identity_projection = false;  // test hook
    Mat projected_grads;               // N x d_proj
    Mat projected_h;                   // d_proj x d_proj
    std::vector<std::uint64_t> example_ids;
};

// Backward-target policy for the K-FAC accumulation. The default pairing is
// Model -> Exact (the l2 Hessian handled analytically via one backward pass
// per output coordinate) and Loss -> TrainingEps (single backward at the
// training target). SampledEps and the explicit policies exist as test hooks:
// SampledEps draws eps_mod = stopgrad(net(x_t)) + eta, and passing
// TrainingEps with GgnKind::Model forces the two accumulations onto the
// identical code path.
enum class KfacTarget { Default, Exact, TrainingEps, SampledEps };

CurvatureState accumulate_kfac(const EpsilonNet& net, const NoiseSchedule& sched,
                               const Dataset& dataset, GgnKind kind, Sharing sharing, int S,
                               const RngStream& stream, KfacTarget target = KfacTarget::Default);

// Eigendecomposes the stored factors and re-fits the eigenvalues as second
// moments of rotated per-(example, sample) layer gradients over a fresh
// S2-sample pass.
CurvatureState ekfac_correct(const CurvatureState& kfac, const EpsilonNet& net,
                             const NoiseSchedule& sched, const Dataset& dataset, int S2,
                             const RngStream& stream);

// Dense oracle (param_count <= 2000). Model split accumulates 2/N averaged
// J^T J with Jacobians built column by column; loss split averages the
// per-example gradient over S samples before the outer product.
CurvatureState dense_ggn(const EpsilonNet& net, const NoiseSchedule& sched,
                         const Dataset& dataset, GgnKind kind, int S, const RngStream& stream);

// TRAK-style backend: random projection P with iid N(0, 1/d_proj) entries,
// stored projected per-example gradients, and the projected empirical Fisher.
// The identity hook (d_proj == param_count) replaces P with the identity.
CurvatureState projected_ef(const EpsilonNet& net, const NoiseSchedule& sched,
                            const Dataset& dataset, int d_proj, std::uint64_t proj_seed, int S,
                            const RngStream& stream, bool identity_projection = false);

Mat projection_matrix(int d_proj, long d_param, std::uint64_t proj_seed);

// Eigenstructure of a curvature state, built once and reused across damping
// values. apply_inverse realizes (H + lambda I)^{-1} v; apply_half_inverse
// realizes (Lambda + lambda)^{-1/2} Q^T v, so that dot(half(u), half(v)) =
// u^T (H + lambda I)^{-1} v with one canonical arithmetic order.
class DampedSolver {
public:
    explicit DampedSolver(const CurvatureState& state);

    Vec apply_inverse(double damping, const Vec& v) const;
    Vec apply_half_inverse(double damping, const Vec& v) const;

    long input_dim() const { return input_dim_; }

private:
    struct LayerEigen {
        Mat Q_A, Q_B;
        Vec lam_A, lam_B;  // kfac factor eigenvalues
        Mat lambda;        // ekfac corrected grid (empty for kfac)
    };
    CurvatureBackend backend_;
    std::vector<LayerEigen> layers_;
    Mat Q_dense_;
    Vec lam_dense_;
    long input_dim_ = 0;
};

// Spec-level entry point: blockwise (H_approx + lambda I)^{-1} v.
Vec precondition(const CurvatureState& state, double damping, const Vec& v);

void save_curvature(ArtifactContainer& c, const std::string& prefix, const CurvatureState& s);
CurvatureState load_curvature(const ArtifactContainer& c, const std::string& prefix);

}  // namespace dinf
