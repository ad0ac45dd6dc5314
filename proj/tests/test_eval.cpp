#include <cmath>
#include <set>

#include "doctest.h"

#include "dinf/datagen.hpp"
#include "dinf/eval.hpp"

using namespace dinf;

namespace {

TrainSpec tiny_spec(std::uint64_t seed) {
    TrainSpec spec;
    spec.arch.data_dim = 2;
    spec.arch.time_embed_dim = 4;
    LayerSpecConfig h;
    h.out_dim = 8;
    h.act = Activation::Silu;
    LayerSpecConfig o;
    o.out_dim = 2;
    o.act = Activation::Identity;
    spec.arch.layers = {h, o};
    spec.schedule = make_schedule(20, 1e-4, 0.05);
    spec.opt.kind = OptimizerConfig::Kind::Adam;
    spec.opt.lr = 2e-3;
    spec.opt.batch_size = 8;
    spec.opt.support_sampling = true;
    spec.steps = 60;
    spec.seed = seed;
    return spec;
}

std::vector<Query> loss_queries(int q, int dim, int samples, std::uint64_t seed) {
    std::vector<Query> out;
    Sampler smp(RngStream(seed).child("queries"));
    for (int i = 0; i < q; ++i) {
        Query qu;
        qu.id = 500 + i;
        qu.fn = {MeasurementKind::SimpleLoss, 0, samples, RngStream(seed).child("qs", i)};
        qu.payload = smp.normal_vec(dim);
        out.push_back(std::move(qu));
    }
    return out;
}

// independent oracle: brute-force average ranks, then textbook Pearson
double spearman_bruteforce(const Vec& xs, const Vec& ys) {
    auto ranks = [](const Vec& v) {
        const Eigen::Index n = v.size();
        Vec r(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double below = 0, equal = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (v[j] < v[i]) ++below;
                if (v[j] == v[i]) ++equal;
            }
            r[i] = below + 0.5 * (equal + 1);
        }
        return r;
    };
    const Vec rx = ranks(xs), ry = ranks(ys);
    const double mx = rx.mean(), my = ry.mean();
    double num = 0, dx = 0, dy = 0;
    for (Eigen::Index i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    return num / std::sqrt(dx * dy);
}

}  // namespace

TEST_CASE("sample_subsets: sizes, determinism, distinctness") {
    const auto subsets = sample_subsets(10, 20, 0.5, 7);
    REQUIRE(subsets.size() == 20);
    for (const auto& s : subsets) {
        CHECK(s.size() == 5);
        CHECK(std::set<std::uint64_t>(s.begin(), s.end()).size() == 5);
        for (auto v : s) CHECK(v < 10);
    }
    const auto again = sample_subsets(10, 20, 0.5, 7);
    CHECK(subsets == again);

    bool any_differ = false;
    for (std::size_t i = 0; i + 1 < subsets.size(); ++i) {
        any_differ |= subsets[i] != subsets[i + 1];
    }
    CHECK(any_differ);

    CHECK_THROWS_AS(sample_subsets(10, 0, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(sample_subsets(10, 2, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(sample_subsets(10, 2, 1.0, 1), ConfigError);
}

TEST_CASE("spearman: closed-form cases") {
    Vec inc(5), dec(5);
    inc << 1, 2, 3, 4, 5;
    dec << 10, 8, 6, 4, 2;
    Vec up(5);
    up << 0.1, 0.5, 0.7, 2.0, 9.0;
    CHECK(spearman(inc, up) == doctest::Approx(1.0));
    CHECK(spearman(dec, up) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(spearman(Vec::Ones(4), up.head(4)), CorrelationUndefinedError);
    CHECK_THROWS_AS(spearman(inc, up.head(4)), ConfigError);
}

TEST_CASE("spearman: exact agreement with the brute-force rank oracle") {
    Sampler smp(RngStream(3).child("sp"));
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(smp.uniform_index(20));
        Vec xs(n), ys(n);
        for (int i = 0; i < n; ++i) {
            // coarse quantization forces plenty of ties
            xs[i] = std::round(smp.normal() * 2.0) / 2.0;
            ys[i] = std::round(smp.normal() * 2.0) / 2.0;
        }
        // skip degenerate draws
        bool xs_const = true, ys_const = true;
        for (int i = 1; i < n; ++i) {
            xs_const &= xs[i] == xs[0];
            ys_const &= ys[i] == ys[0];
        }
        if (xs_const || ys_const) continue;
        CHECK(std::abs(spearman(xs, ys) - spearman_bruteforce(xs, ys)) <= 1e-12);
    }
}

TEST_CASE("lds: perfect predictions give 1.0 per query") {
    const int M = 6, K = 2, Q = 3;
    std::vector<Mat> oracle;
    Sampler smp(RngStream(5).child("o"));
    for (int i = 0; i < M; ++i) {
        Mat m(K, Q);
        for (int k = 0; k < K; ++k) {
            for (int q = 0; q < Q; ++q) m(k, q) = smp.normal();
        }
        oracle.push_back(m);
    }
    Mat preds(M, Q);
    for (int i = 0; i < M; ++i) preds.row(i) = oracle[i].colwise().mean();
    const LdsResult r = lds(preds, oracle);
    for (int q = 0; q < Q; ++q) CHECK(r.per_query[q] == doctest::Approx(1.0));
    CHECK(r.mean == doctest::Approx(1.0));

    // stderr is the sample stddev over queries divided by sqrt(Q)
    const double sd = std::sqrt((r.per_query.array() - r.mean).square().sum() / (Q - 1));
    CHECK(r.stderr_mean == doctest::Approx(sd / std::sqrt(static_cast<double>(Q))));
}

TEST_CASE("lds: random predictions stay within 3 stderr of zero") {
    const int M = 20, K = 1, Q = 50;
    std::vector<Mat> oracle;
    Sampler smp(RngStream(11).child("null"));
    for (int i = 0; i < M; ++i) {
        Mat m(K, Q);
        for (int q = 0; q < Q; ++q) m(0, q) = smp.normal();
        oracle.push_back(m);
    }
    Mat preds(M, Q);
    for (int i = 0; i < M; ++i) {
        for (int q = 0; q < Q; ++q) preds(i, q) = smp.normal();
    }
    const LdsResult r = lds(preds, oracle);
    CHECK(std::abs(r.mean) < 3.0 * r.stderr_mean);
}

TEST_CASE("lds: invariant to strictly increasing transforms of predictions") {
    const int M = 8, K = 1, Q = 2;
    std::vector<Mat> oracle;
    Sampler smp(RngStream(13).child("tr"));
    for (int i = 0; i < M; ++i) {
        Mat m(K, Q);
        for (int q = 0; q < Q; ++q) m(0, q) = smp.normal();
        oracle.push_back(m);
    }
    Mat preds(M, Q);
    for (int i = 0; i < M; ++i) {
        for (int q = 0; q < Q; ++q) preds(i, q) = smp.normal();
    }
    const LdsResult a = lds(preds, oracle);
    const LdsResult b = lds((3.7 * preds.array() - 2.0).matrix(), oracle);
    CHECK((a.per_query - b.per_query).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lds: missing cells are dropped pairwise") {
    const int M = 5, K = 2, Q = 1;
    std::vector<Mat> oracle;
    for (int i = 0; i < M; ++i) {
        Mat m(K, Q);
        m(0, 0) = static_cast<double>(i);
        m(1, 0) = static_cast<double>(i) + 0.1;
        oracle.push_back(m);
    }
    // subset 2 fully diverged; subset 3 has one usable seed
    oracle[2](0, 0) = oracle[2](1, 0) = std::numeric_limits<double>::quiet_NaN();
    oracle[3](1, 0) = std::numeric_limits<double>::quiet_NaN();
    Mat preds(M, Q);
    preds << 0, 1, 99, 3, 4;  // agrees with the oracle on the surviving pairs
    const LdsResult r = lds(preds, oracle);
    CHECK(r.per_query[0] == doctest::Approx(1.0));
}

TEST_CASE("retrain_oracle: determinism and full-subset base equality") {
    const Dataset data = generate_dataset("gmm2", 16, 2, 3);
    const TrainSpec spec = tiny_spec(21);
    const auto queries = loss_queries(2, 2, 8, 31);

    // K = 1 reduces to a single retrain per subset
    std::vector<std::vector<double>> wv = {std::vector<double>(16, 1.0)};
    const auto o1 = retrain_oracle(spec, data.points, wv, 1, queries);
    REQUIRE(o1.size() == 1);
    CHECK(o1[0].rows() == 1);
    CHECK(o1[0].cols() == 2);
    CHECK(o1[0].allFinite());

    const auto o2 = retrain_oracle(spec, data.points, wv, 1, queries);
    CHECK((o1[0] - o2[0]).cwiseAbs().maxCoeff() == 0.0);

    // the full subset with the base training seed reproduces the base model
    const EpsilonNet base = train_from_spec(spec, data.points, std::vector<double>(16, 1.0),
                                            RngStream(spec.seed)
                                                .child("retrain", 0)
                                                .child("k", 0)
                                                .key());
    for (int q = 0; q < 2; ++q) {
        const double direct = measure(base, spec.schedule, queries[q].fn, queries[q].payload);
        CHECK(o1[0](0, q) == direct);
    }
}

TEST_CASE("exact_retraining_predictor: K = 1 oracle with the shared seed gives LDS 1") {
    const Dataset data = generate_dataset("gmm2", 16, 2, 5);
    const TrainSpec spec = tiny_spec(23);
    const auto queries = loss_queries(2, 2, 8, 33);
    const auto subsets = sample_subsets(16, 4, 0.5, 41);

    const Mat preds = exact_retraining_predictor(spec, data.points, subsets, queries);
    CHECK(preds.allFinite());
    const Mat preds2 = exact_retraining_predictor(spec, data.points, subsets, queries);
    CHECK((preds - preds2).cwiseAbs().maxCoeff() == 0.0);

    // oracle sharing the same retrain seeds reproduces the predictor exactly
    std::vector<std::vector<double>> wv;
    for (const auto& s : subsets) wv.push_back(weights_from_subset(16, s));
    std::vector<Mat> oracle;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        Mat cell(1, static_cast<Eigen::Index>(queries.size()));
        const EpsilonNet model = train_from_spec(
            spec, data.points, wv[i],
            RngStream(spec.seed).child("exact-retrain", i).child("k", 0).key());
        for (std::size_t q = 0; q < queries.size(); ++q) {
            cell(0, static_cast<Eigen::Index>(q)) =
                measure(model, spec.schedule, queries[q].fn, queries[q].payload);
        }
        oracle.push_back(cell);
    }
    const LdsResult r = lds(preds, oracle);
    for (Eigen::Index q = 0; q < r.per_query.size(); ++q) {
        CHECK(r.per_query[q] == doctest::Approx(1.0));
    }
}

TEST_CASE("remove_top_and_retrain: percent 0 gives exactly zero deltas") {
    const Dataset data = generate_dataset("gmm2", 12, 2, 7);
    const TrainSpec spec = tiny_spec(29);
    const auto queries = loss_queries(2, 2, 6, 37);
    const EpsilonNet base =
        train_from_spec(spec, data.points, std::vector<double>(12, 1.0), spec.seed);

    ScoreMatrix sm;
    sm.scores = Mat::Random(2, 12);
    sm.query_ids = {0, 1};
    sm.train_ids.resize(12);
    for (std::uint64_t i = 0; i < 12; ++i) sm.train_ids[i] = i;

    const Vec deltas = remove_top_and_retrain(sm, 0.0, spec, data.points, queries, base);
    CHECK(deltas.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("remove_top_and_retrain: removal count and selection") {
    const Dataset data = generate_dataset("gmm2", 10, 2, 9);
    const TrainSpec spec = tiny_spec(31);
    ScoreMatrix sm;
    sm.scores.resize(1, 10);
    sm.scores << 5, 1, 9, 3, 9, 0, -2, 7, 4, 6;
    sm.query_ids = {0};
    sm.train_ids.resize(10);
    for (std::uint64_t i = 0; i < 10; ++i) sm.train_ids[i] = i;

    // ceil(25 * 10 / 100) = 3 removed; brute-force top-3 with the tie rule
    const auto top = top_k_indices(sm, 0, 3);
    std::vector<std::uint64_t> expect = {2, 4, 7};
    std::vector<std::uint64_t> got;
    for (auto pos : top) got.push_back(sm.train_ids[pos]);
    CHECK(got == expect);

    CHECK_THROWS_AS(remove_top_and_retrain(sm, 100.0, spec, data.points, {}, EpsilonNet{}),
                    ConfigError);
}

TEST_CASE("benchmark container roundtrip") {
    LdsBenchmark b;
    b.subsets = {{0, 1, 2}, {1, 3, 4}};
    b.K = 2;
    b.fraction = 0.5;
    b.subset_seed = 99;
    b.query_ids = {7, 8};
    b.oracle = {Mat::Random(2, 2), Mat::Random(2, 2)};
    ArtifactContainer c;
    save_benchmark(c, "lds", b);
    const LdsBenchmark back = load_benchmark(ArtifactContainer::deserialize(c.serialize()), "lds");
    CHECK(back.subsets == b.subsets);
    CHECK(back.K == b.K);
    CHECK(back.query_ids == b.query_ids);
    for (int i = 0; i < 2; ++i) {
        CHECK((back.oracle[i] - b.oracle[i]).cwiseAbs().maxCoeff() == 0.0);
    }
}
