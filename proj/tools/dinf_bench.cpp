// Kernel benchmark: serial reference vs the OpenMP path on the data-parallel
// sweeps. Also asserts the two produce bitwise-identical results.

#include <chrono>
#include <cstdio>
#include <thread>

#include "dinf/curvature.hpp"
#include "dinf/datagen.hpp"
#include "dinf/eval.hpp"
#include "dinf/parallel.hpp"

using namespace dinf;

namespace {

double seconds(const std::chrono::steady_clock::time_point& a,
               const std::chrono::steady_clock::time_point& b) {
    return std::chrono::duration<double>(b - a).count();
}

template <class F>
void bench(const char* name, F&& run) {
    parallel::set_max_workers(1);
    auto t0 = std::chrono::steady_clock::now();
    const auto serial = run();
    auto t1 = std::chrono::steady_clock::now();

    const unsigned hw = std::max(2u, std::thread::hardware_concurrency());
    parallel::set_max_workers(static_cast<int>(hw));
    auto t2 = std::chrono::steady_clock::now();
    const auto par = run();
    auto t3 = std::chrono::steady_clock::now();

    const double ts = seconds(t0, t1), tp = seconds(t2, t3);
    const bool identical = serial == par;
    std::printf("%-28s serial %8.3fs  parallel(%u) %8.3fs  speedup %5.2fx  bitwise %s\n", name,
                ts, hw, tp, ts / tp, identical ? "ok" : "MISMATCH");
}

}  // namespace

int main() {
    const Dataset data = generate_dataset("gmm2", 256, 2, 11);
    const NoiseSchedule sched = make_schedule(100, 1e-4, 0.05);
    ArchConfig arch;
    arch.data_dim = 2;
    arch.time_embed_dim = 8;
    LayerSpecConfig h;
    h.out_dim = 32;
    LayerSpecConfig o;
    o.out_dim = 2;
    o.act = Activation::Identity;
    arch.layers = {h, o};
    const EpsilonNet net = build_network(arch, 3);

    bench("train-gradient sweep", [&] {
        Vec acc = Vec::Zero(net.param_count());
        std::vector<Vec> grads(data.size());
        parallel::for_each_index(data.size(), [&](std::size_t i) {
            grads[i] = per_example_train_gradient(net, sched, data.points[i], 256,
                                                  example_stream(RngStream(5), data.ids[i]));
        });
        for (const Vec& g : grads) acc += g;
        return Vec(acc / static_cast<double>(data.size()));
    });

    bench("kfac accumulation", [&] {
        const CurvatureState s =
            accumulate_kfac(net, sched, data, GgnKind::Model, Sharing::Expand, 128, RngStream(7));
        Vec flat(2);
        flat << s.kfac[0].A.sum(), s.kfac[0].B.sum();
        Mat all(s.kfac.size(), 2);
        for (std::size_t l = 0; l < s.kfac.size(); ++l) {
            all(static_cast<Eigen::Index>(l), 0) = s.kfac[l].A.sum();
            all(static_cast<Eigen::Index>(l), 1) = s.kfac[l].B.sum();
        }
        return all;
    });

    bench("retraining ensemble", [&] {
        TrainSpec spec;
        spec.arch = arch;
        spec.schedule = sched;
        spec.opt.kind = OptimizerConfig::Kind::Adam;
        spec.opt.lr = 2e-3;
        spec.opt.batch_size = 16;
        spec.opt.support_sampling = true;
        spec.steps = 150;
        spec.seed = 17;
        const auto subsets = sample_subsets(data.size(), 4, 0.5, 23);
        std::vector<std::vector<double>> wv;
        for (const auto& s : subsets) wv.push_back(weights_from_subset(data.size(), s));
        std::vector<Query> queries;
        Query q;
        q.id = 0;
        q.fn = {MeasurementKind::SimpleLoss, 0, 32, RngStream(29).child("m")};
        q.payload = Vec(data.points[0]);
        queries.push_back(std::move(q));
        const auto oracle = retrain_oracle(spec, data.points, wv, 2, queries);
        Mat flat(oracle.size(), oracle[0].cols());
        for (std::size_t i = 0; i < oracle.size(); ++i) {
            flat.row(static_cast<Eigen::Index>(i)) = oracle[i].colwise().sum();
        }
        return flat;
    });

    return 0;
}
