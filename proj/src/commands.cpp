#include "dinf/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include "dinf/datagen.hpp"
#include "dinf/parallel.hpp"
#include "dinf/eval.hpp"

namespace dinf {
namespace {

namespace fs = std::filesystem;

NoiseSchedule schedule_from(const RunConfig& cfg) {
    return make_schedule(cfg.schedule.T, cfg.schedule.beta_min, cfg.schedule.beta_max);
}

Dataset dataset_from(const RunConfig& cfg) {
    return generate_dataset(cfg.dataset.kind, cfg.dataset.n, cfg.dataset.data_dim,
                            cfg.dataset.seed);
}

TrainSpec base_train_spec(const RunConfig& cfg) {
    TrainSpec spec;
    spec.arch = arch_from_config(cfg);
    spec.schedule = schedule_from(cfg);
    spec.opt = optimizer_from_config(cfg);
    spec.steps = cfg.training.steps;
    spec.seed = cfg.training.seed;
    return spec;
}

TrainSpec subset_train_spec(const RunConfig& cfg) {
    TrainSpec spec = base_train_spec(cfg);
    spec.steps = std::max<long>(
        1, static_cast<long>(std::llround(cfg.training.steps * cfg.evaluation.subset_step_factor)));
    return spec;
}

MeasurementKind measurement_kind_from(const RunConfig& cfg) {
    const std::string& m = cfg.evaluation.measurement;
    if (m == "elbo") return MeasurementKind::Elbo;
    if (m == "per_timestep_loss") return MeasurementKind::PerTimestepLoss;
    if (m == "trajectory_logprob") return MeasurementKind::TrajectoryLogProb;
    return MeasurementKind::SimpleLoss;
}

void write_meta(ArtifactContainer& c, const RunConfig& cfg) {
    c.add_scalar_u64("meta/config_hash", config_hash(cfg));
}

ArtifactContainer read_artifact(const RunConfig& cfg, const fs::path& out_dir,
                                const std::string& name) {
    const fs::path path = out_dir / name;
    if (!fs::exists(path)) {
        throw ConfigError("missing input artifact " + path.string() +
                          " (run the producing command first)");
    }
    ArtifactContainer c = ArtifactContainer::read_file(path);
    const std::uint64_t have = c.get_scalar_u64("meta/config_hash");
    if (have != config_hash(cfg)) {
        throw ProvenanceError(name + " was produced under a different config (hash mismatch)");
    }
    return c;
}

void write_artifact(const ArtifactContainer& c, const fs::path& out_dir,
                    const std::string& name) {
    fs::create_directories(out_dir);
    c.write_file(out_dir / name);
    std::cout << "wrote " << (out_dir / name).string() << "\n";
}

// Generated query samples with their trajectories; every downstream command
// rebuilds the same Query objects (payload + fixed measurement stream) from
// this artifact and the config.
struct QuerySet {
    std::vector<Query> queries;
    std::vector<Vec> points;
};

std::uint64_t query_sample_seed(const RunConfig& cfg, int i) {
    return RngStream(cfg.training.seed).child("query-sample", i).key();
}

QuerySet queries_from_samples(const RunConfig& cfg, const ArtifactContainer& samples) {
    const Mat x0 = samples.get_matrix("samples/x0");
    const MeasurementKind kind = measurement_kind_from(cfg);
    QuerySet qs;
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
        Query q;
        q.id = static_cast<std::uint64_t>(i);
        q.fn.kind = kind;
        q.fn.t = cfg.evaluation.measurement_t;
        q.fn.samples = cfg.evaluation.measure_samples;
        // fixed per-query stream, shared across every model the query is
        // measured on
        q.fn.stream = RngStream(cfg.training.seed).child("measure-stream", i);
        if (kind == MeasurementKind::TrajectoryLogProb) {
            Trajectory traj;
            const Mat states = samples.get_matrix("samples/traj" + std::to_string(i));
            traj.states.reserve(states.rows());
            for (Eigen::Index k = 0; k < states.rows(); ++k) {
                traj.states.push_back(states.row(k).transpose());
            }
            traj.seed = samples.get_scalar_u64("samples/seed" + std::to_string(i));
            q.payload = std::move(traj);
        } else {
            q.payload = Vec(x0.row(i).transpose());
        }
        qs.points.push_back(x0.row(i).transpose());
        qs.queries.push_back(std::move(q));
    }
    return qs;
}

CurvatureState build_factors(const RunConfig& cfg, const EpsilonNet& net,
                             const NoiseSchedule& sched, const Dataset& data) {
    const RngStream root(cfg.training.seed);
    const GgnKind kind = cfg.attribution.ggn_kind == "loss" ? GgnKind::Loss : GgnKind::Model;
    const Sharing sharing =
        cfg.attribution.sharing == "reduce" ? Sharing::Reduce : Sharing::Expand;
    const int S = cfg.attribution.samples;
    if (cfg.attribution.backend == "kfac") {
        return accumulate_kfac(net, sched, data, kind, sharing, S, root.child("factors"));
    }
    if (cfg.attribution.backend == "ekfac") {
        // sample budget split evenly between the basis and eigenvalue passes
        const int s_basis = std::max(1, S / 2);
        const int s_corr = std::max(1, S - s_basis);
        const CurvatureState kf = accumulate_kfac(net, sched, data, kind, sharing, s_basis,
                                                  root.child("factors-basis"));
        return ekfac_correct(kf, net, sched, data, s_corr, root.child("factors-corr"));
    }
    if (cfg.attribution.backend == "dense") {
        return dense_ggn(net, sched, data, kind, S, root.child("factors"));
    }
    return projected_ef(net, sched, data, cfg.attribution.d_proj, cfg.attribution.proj_seed, S,
                        root.child("factors"));
}

int cmd_train(const RunConfig& cfg, const fs::path& out_dir) {
    const Dataset data = dataset_from(cfg);
    const NoiseSchedule sched = schedule_from(cfg);
    EpsilonNet net = build_network(arch_from_config(cfg), cfg.training.seed);
    const TrainResult result =
        train(std::move(net), sched, data.points, std::vector<double>(data.size(), 1.0),
              optimizer_from_config(cfg), cfg.training.steps, cfg.training.seed);

    ArtifactContainer c;
    write_meta(c, cfg);
    save_net(c, "net", result.net);
    c.add_scalar_u64("meta/net_hash", net_param_hash(result.net));
    c.add_scalar_u64("meta/train_seed", cfg.training.seed);
    c.add_f64("train/loss_curve", {result.loss_curve.size()},
              std::span<const double>(result.loss_curve.data(), result.loss_curve.size()));
    write_artifact(c, out_dir, "model.dinf");
    std::cout << "train: " << result.loss_curve.size() << " intervals, first "
              << result.loss_curve.front() << ", last " << result.loss_curve.back() << "\n";
    return 0;
}

int cmd_sample(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const NoiseSchedule sched = schedule_from(cfg);
    const int Q = cfg.evaluation.queries;

    ArtifactContainer c;
    write_meta(c, cfg);
    c.add_scalar_u64("meta/parent_net_hash", net_param_hash(net));
    Mat x0(Q, net.data_dim);
    std::vector<SampleResult> results(Q);
    parallel::for_each_index(static_cast<std::size_t>(Q), [&](std::size_t i) {
        results[i] = ddpm_sample(net, sched, query_sample_seed(cfg, static_cast<int>(i)), true);
    });
    for (int i = 0; i < Q; ++i) {
        x0.row(i) = results[i].x0.transpose();
        const Trajectory& traj = *results[i].trajectory;
        Mat states(traj.states.size(), net.data_dim);
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            states.row(static_cast<Eigen::Index>(k)) = traj.states[k].transpose();
        }
        c.add_matrix("samples/traj" + std::to_string(i), states);
        c.add_scalar_u64("samples/seed" + std::to_string(i), traj.seed);
    }
    c.add_matrix("samples/x0", x0);
    write_artifact(c, out_dir, "samples.dinf");
    std::cout << "sample: " << Q << " queries generated\n";
    return 0;
}

int cmd_measure(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const NoiseSchedule sched = schedule_from(cfg);
    const QuerySet qs = queries_from_samples(cfg, read_artifact(cfg, out_dir, "samples.dinf"));

    Vec values(static_cast<Eigen::Index>(qs.queries.size()));
    parallel::for_each_index(qs.queries.size(), [&](std::size_t i) {
        values[static_cast<Eigen::Index>(i)] =
            measure(net, sched, qs.queries[i].fn, qs.queries[i].payload);
    });

    ArtifactContainer c;
    write_meta(c, cfg);
    c.add_vector("measurements/values", values);
    write_artifact(c, out_dir, "measurements.dinf");

    std::ofstream csv(out_dir / "measurements.csv", std::ios::trunc);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    csv << "# measurements config_hash=" << buf << " kind=" << cfg.evaluation.measurement
        << " samples=" << cfg.evaluation.measure_samples << "\n";
    csv << "query_id,value\n";
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", values[i]);
        csv << i << "," << buf << "\n";
    }
    std::cout << "measure: " << values.size() << " values (" << cfg.evaluation.measurement
              << ")\n";
    return 0;
}

int cmd_factors(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const CurvatureState state =
        build_factors(cfg, net, schedule_from(cfg), dataset_from(cfg));

    ArtifactContainer c;
    write_meta(c, cfg);
    save_curvature(c, "curvature", state);
    write_artifact(c, out_dir, "factors.dinf");
    std::cout << "factors: " << describe_curvature(state) << "\n";
    return 0;
}

int cmd_influence(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const NoiseSchedule sched = schedule_from(cfg);
    const Dataset data = dataset_from(cfg);
    const CurvatureState state =
        load_curvature(read_artifact(cfg, out_dir, "factors.dinf"), "curvature");
    const QuerySet qs = queries_from_samples(cfg, read_artifact(cfg, out_dir, "samples.dinf"));

    ArtifactContainer c;
    write_meta(c, cfg);
    c.add_scalar_u64("scores/damping_count", cfg.attribution.damping.size());
    for (std::size_t di = 0; di < cfg.attribution.damping.size(); ++di) {
        const double damping = cfg.attribution.damping[di];
        const ScoreMatrix sm = influence_scores(
            net, sched, state, damping, qs.queries, data, cfg.attribution.samples,
            RngStream(cfg.training.seed).child("train-grads"), cfg.attribution.compress);
        save_scores(c, "scores/d" + std::to_string(di), sm);
        export_scores_csv((out_dir / ("scores_d" + std::to_string(di) + ".csv")).string(), sm,
                          config_hash(cfg));
        std::cout << "influence: damping " << damping << " -> " << sm.scores.rows() << "x"
                  << sm.scores.cols() << " scores\n";
    }
    write_artifact(c, out_dir, "scores.dinf");
    return 0;
}

int cmd_cache(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const NoiseSchedule sched = schedule_from(cfg);
    const Dataset data = dataset_from(cfg);
    const CurvatureState state =
        load_curvature(read_artifact(cfg, out_dir, "factors.dinf"), "curvature");
    const QuerySet qs = queries_from_samples(cfg, read_artifact(cfg, out_dir, "samples.dinf"));

    const double damping = cfg.attribution.damping.front();
    const TrainCache cache =
        build_train_cache(net, sched, state, damping, data, cfg.attribution.samples,
                          RngStream(cfg.training.seed).child("train-grads"),
                          cfg.attribution.compress);
    ArtifactContainer cc;
    write_meta(cc, cfg);
    save_train_cache(cc, "cache", cache);
    write_artifact(cc, out_dir, "cache.dinf");

    const ScoreMatrix sm = score_queries(cache, net, sched, state, qs.queries);
    ArtifactContainer sc;
    write_meta(sc, cfg);
    save_scores(sc, "scores", sm);
    write_artifact(sc, out_dir, "cache_scores.dinf");
    export_scores_csv((out_dir / "cache_scores.csv").string(), sm, config_hash(cfg));
    std::cout << "cache: " << cache.train_half.size() << " cached training gradients, scored "
              << sm.scores.rows() << " queries\n";
    return 0;
}

int cmd_lds_make(const RunConfig& cfg, const fs::path& out_dir) {
    const QuerySet qs = queries_from_samples(cfg, read_artifact(cfg, out_dir, "samples.dinf"));
    const Dataset data = dataset_from(cfg);
    const TrainSpec spec = subset_train_spec(cfg);
    const std::uint64_t subset_seed = RngStream(cfg.training.seed).child("subsets").key();

    const LdsBenchmark bench = build_lds_benchmark(
        spec, data.points, cfg.evaluation.subsets, cfg.evaluation.seeds, cfg.evaluation.fraction,
        qs.queries, subset_seed);
    const Mat exact =
        exact_retraining_predictor(spec, data.points, bench.subsets, qs.queries);

    ArtifactContainer c;
    write_meta(c, cfg);
    save_benchmark(c, "lds", bench);
    c.add_matrix("lds/exact_retrain_predictions", exact);
    write_artifact(c, out_dir, "lds.dinf");
    std::cout << "lds-make: " << bench.subsets.size() << " subsets x " << bench.K
              << " seeds retrained\n";
    return 0;
}

struct LdsReportRow {
    std::string method;
    double damping = 0.0;
    LdsResult result;
};

void print_lds_row(const LdsReportRow& row) {
    std::cout << "lds " << row.method;
    if (row.damping > 0.0) std::cout << " damping=" << row.damping;
    std::cout << " mean=" << row.result.mean << " stderr=" << row.result.stderr_mean
              << " per-query=";
    char buf[32];
    for (Eigen::Index q = 0; q < row.result.per_query.size(); ++q) {
        std::snprintf(buf, sizeof(buf), "%.3f", row.result.per_query[q]);
        std::cout << (q ? "," : "") << buf;
    }
    std::cout << "\n";
}

int cmd_lds_eval(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer lds_art = read_artifact(cfg, out_dir, "lds.dinf");
    const LdsBenchmark bench = load_benchmark(lds_art, "lds");
    const std::uint64_t N = cfg.dataset.n;
    std::vector<LdsReportRow> rows;

    if (fs::exists(out_dir / "scores.dinf")) {
        const ArtifactContainer scores = read_artifact(cfg, out_dir, "scores.dinf");
        const std::uint64_t nd = scores.get_scalar_u64("scores/damping_count");
        for (std::uint64_t di = 0; di < nd; ++di) {
            const ScoreMatrix sm = load_scores(scores, "scores/d" + std::to_string(di));
            LdsReportRow row;
            row.method = cfg.attribution.backend + "_influence";
            row.damping = sm.meta.damping;
            row.result = lds(predictions_from_scores(sm, bench.subsets, N), bench.oracle);
            rows.push_back(std::move(row));
        }
    }

    {
        LdsReportRow row;
        row.method = "exact_retraining";
        row.result = lds(lds_art.get_matrix("lds/exact_retrain_predictions"), bench.oracle);
        rows.push_back(std::move(row));
    }

    {
        // random-score baseline, seeded from the config
        Sampler smp(RngStream(cfg.training.seed).child("random-baseline"));
        Mat preds(static_cast<Eigen::Index>(bench.subsets.size()),
                  static_cast<Eigen::Index>(bench.query_ids.size()));
        for (Eigen::Index i = 0; i < preds.rows(); ++i) {
            for (Eigen::Index q = 0; q < preds.cols(); ++q) preds(i, q) = smp.normal();
        }
        LdsReportRow row;
        row.method = "random_baseline";
        row.result = lds(preds, bench.oracle);
        rows.push_back(std::move(row));
    }

    if (fs::exists(out_dir / "predictions.dinf")) {
        const ArtifactContainer preds_art = read_artifact(cfg, out_dir, "predictions.dinf");
        LdsReportRow row;
        row.method = "predictions";
        row.result = lds(preds_art.get_matrix("predictions"), bench.oracle);
        rows.push_back(std::move(row));
    }

    ArtifactContainer report;
    write_meta(report, cfg);
    std::ofstream csv(out_dir / "lds_report.csv", std::ios::trunc);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    csv << "# lds_report config_hash=" << buf << "\n";
    csv << "method,damping,mean_lds,stderr";
    for (std::size_t q = 0; q < bench.query_ids.size(); ++q) csv << ",q" << q;
    csv << "\n";
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        const auto& row = rows[ri];
        print_lds_row(row);
        csv << row.method << "," << row.damping << "," << row.result.mean << ","
            << row.result.stderr_mean;
        for (Eigen::Index q = 0; q < row.result.per_query.size(); ++q) {
            std::snprintf(buf, sizeof(buf), "%.17g", row.result.per_query[q]);
            csv << "," << buf;
        }
        csv << "\n";
        const std::string p = "report/row" + std::to_string(ri);
        report.add_string(p + "/method", row.method);
        const double vals[2] = {row.damping, row.result.mean};
        report.add_f64(p + "/damping_mean", {2}, vals);
        report.add_vector(p + "/per_query", row.result.per_query);
    }
    report.add_scalar_u64("report/rows", rows.size());
    write_artifact(report, out_dir, "lds_report.dinf");
    return 0;
}

ScoreMatrix slice_rows(const ScoreMatrix& sm, std::size_t count) {
    ScoreMatrix out = sm;
    count = std::min<std::size_t>(count, sm.scores.rows());
    out.scores = sm.scores.topRows(static_cast<Eigen::Index>(count));
    out.query_ids.assign(sm.query_ids.begin(), sm.query_ids.begin() + count);
    return out;
}

int cmd_ablate_remove_top(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const Dataset data = dataset_from(cfg);
    const QuerySet qs = queries_from_samples(cfg, read_artifact(cfg, out_dir, "samples.dinf"));
    const ArtifactContainer scores = read_artifact(cfg, out_dir, "scores.dinf");
    const ScoreMatrix sm = load_scores(scores, "scores/d0");
    const TrainSpec spec = base_train_spec(cfg);

    const std::size_t nq =
        std::min<std::size_t>(cfg.evaluation.remove_top_queries, qs.queries.size());
    const std::vector<Query> queries(qs.queries.begin(), qs.queries.begin() + nq);
    const ScoreMatrix sliced = slice_rows(sm, nq);

    // random-score baseline with the same removal counts
    ScoreMatrix random_sm = sliced;
    Sampler smp(RngStream(cfg.training.seed).child("ablate-random"));
    for (Eigen::Index i = 0; i < random_sm.scores.rows(); ++i) {
        for (Eigen::Index j = 0; j < random_sm.scores.cols(); ++j) {
            random_sm.scores(i, j) = smp.normal();
        }
    }

    ArtifactContainer c;
    write_meta(c, cfg);
    std::ofstream csv(out_dir / "ablation.csv", std::ios::trunc);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    csv << "# ablation config_hash=" << buf << "\n";
    csv << "percent,method,mean_delta";
    for (std::size_t q = 0; q < nq; ++q) csv << ",q" << q;
    csv << "\n";
    int row = 0;
    for (double percent : cfg.evaluation.percents) {
        for (const auto& [method, matrix] : {std::pair<std::string, const ScoreMatrix*>(
                                                 cfg.attribution.backend + "_influence", &sliced),
                                             {"random_baseline", &random_sm}}) {
            const Vec deltas =
                remove_top_and_retrain(*matrix, percent, spec, data.points, queries, net);
            csv << percent << "," << method << "," << deltas.mean();
            for (Eigen::Index q = 0; q < deltas.size(); ++q) {
                std::snprintf(buf, sizeof(buf), "%.17g", deltas[q]);
                csv << "," << buf;
            }
            csv << "\n";
            std::cout << "ablate percent=" << percent << " " << method
                      << " mean_delta=" << deltas.mean() << "\n";
            const std::string p = "ablation/row" + std::to_string(row++);
            c.add_string(p + "/method", method);
            const double meta2[2] = {percent, deltas.mean()};
            c.add_f64(p + "/percent_mean", {2}, meta2);
            c.add_vector(p + "/deltas", deltas);
        }
    }
    c.add_scalar_u64("ablation/rows", static_cast<std::uint64_t>(row));
    write_artifact(c, out_dir, "ablation.dinf");
    return 0;
}

int cmd_timestep_grid(const RunConfig& cfg, const fs::path& out_dir) {
    const ArtifactContainer model = read_artifact(cfg, out_dir, "model.dinf");
    const EpsilonNet net = load_net(model, "net");
    const Dataset data = dataset_from(cfg);
    const QuerySet qs = queries_from_samples(cfg, read_artifact(cfg, out_dir, "samples.dinf"));
    const CurvatureState state =
        load_curvature(read_artifact(cfg, out_dir, "factors.dinf"), "curvature");

    const TimestepGridResult grid = timestep_cross_lds(
        net, subset_train_spec(cfg), data, state, cfg.attribution.damping.front(), qs.points,
        cfg.evaluation.proxy_timesteps, cfg.evaluation.target_timesteps, cfg.evaluation.subsets,
        cfg.evaluation.seeds, cfg.evaluation.fraction, cfg.evaluation.measure_samples,
        cfg.attribution.samples, RngStream(cfg.training.seed).child("timestep-grid"));

    ArtifactContainer c;
    write_meta(c, cfg);
    c.add_matrix("grid/values", grid.grid);
    std::vector<std::uint64_t> pts(grid.proxy_ts.begin(), grid.proxy_ts.end());
    std::vector<std::uint64_t> tts(grid.target_ts.begin(), grid.target_ts.end());
    c.add_u64("grid/proxy_ts", {pts.size()}, pts);
    c.add_u64("grid/target_ts", {tts.size()}, tts);
    write_artifact(c, out_dir, "grid.dinf");

    std::ofstream csv(out_dir / "timestep_grid.csv", std::ios::trunc);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    csv << "# timestep_grid config_hash=" << buf << " rows=proxy_t cols=target_t\n";
    csv << "proxy_t";
    for (int t : grid.target_ts) csv << ",target_" << t;
    csv << "\n";
    for (Eigen::Index i = 0; i < grid.grid.rows(); ++i) {
        csv << grid.proxy_ts[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < grid.grid.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", grid.grid(i, j));
            csv << "," << buf;
        }
        csv << "\n";
    }
    std::cout << "timestep-grid: " << grid.grid.rows() << "x" << grid.grid.cols() << " grid\n";
    return 0;
}

int cmd_export_plotdata(const RunConfig& cfg, const fs::path& out_dir) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    const std::string hash_line(buf);
    int exported = 0;

    if (fs::exists(out_dir / "lds_report.dinf")) {
        const ArtifactContainer report = read_artifact(cfg, out_dir, "lds_report.dinf");
        const std::uint64_t rows = report.get_scalar_u64("report/rows");
        // bar data: best damping per method
        std::ofstream bars(out_dir / "plot_lds_bars.csv", std::ios::trunc);
        bars << "# plot_lds_bars config_hash=" << hash_line << "\n";
        bars << "method,best_damping,mean_lds,stderr\n";
        std::ofstream sweep(out_dir / "plot_damping_sweep.csv", std::ios::trunc);
        sweep << "# plot_damping_sweep config_hash=" << hash_line << "\n";
        sweep << "method,damping,mean_lds\n";
        std::map<std::string, std::pair<double, double>> best;  // method -> (damping, mean)
        std::map<std::string, double> best_stderr;
        for (std::uint64_t ri = 0; ri < rows; ++ri) {
            const std::string p = "report/row" + std::to_string(ri);
            const std::string method = report.get_string(p + "/method");
            const auto dm = report.get_f64(p + "/damping_mean");
            const Vec per_query = report.get_vector(p + "/per_query");
            sweep << method << "," << dm[0] << "," << dm[1] << "\n";
            const double q = static_cast<double>(per_query.size());
            const double mean = dm[1];
            const double sd =
                std::sqrt((per_query.array() - mean).square().sum() / std::max(1.0, q - 1));
            if (!best.count(method) || dm[1] > best[method].second) {
                best[method] = {dm[0], dm[1]};
                best_stderr[method] = sd / std::sqrt(q);
            }
        }
        for (const auto& [method, dm] : best) {
            bars << method << "," << dm.first << "," << dm.second << "," << best_stderr[method]
                 << "\n";
        }
        exported += 2;
    }
    if (fs::exists(out_dir / "grid.dinf")) {
        // the grid is already tabular; re-emit under the plot prefix
        const ArtifactContainer grid = read_artifact(cfg, out_dir, "grid.dinf");
        const Mat values = grid.get_matrix("grid/values");
        const auto pts = grid.get_u64("grid/proxy_ts");
        const auto tts = grid.get_u64("grid/target_ts");
        std::ofstream g(out_dir / "plot_timestep_grid.csv", std::ios::trunc);
        g << "# plot_timestep_grid config_hash=" << hash_line << "\n";
        g << "proxy_t,target_t,lds\n";
        for (Eigen::Index i = 0; i < values.rows(); ++i) {
            for (Eigen::Index j = 0; j < values.cols(); ++j) {
                g << pts[static_cast<std::size_t>(i)] << "," << tts[static_cast<std::size_t>(j)]
                  << "," << values(i, j) << "\n";
            }
        }
        ++exported;
    }
    std::cout << "export-plotdata: " << exported << " tables\n";
    return 0;
}

}  // namespace

std::vector<std::string> command_names() {
    return {"train",    "sample",   "measure",          "factors",
            "influence", "cache",    "lds-make",         "lds-eval",
            "ablate-remove-top", "timestep-grid", "export-plotdata"};
}

int run_command(const std::string& cmd, const RunConfig& cfg,
                const std::filesystem::path& out_dir) {
    if (cmd == "train") return cmd_train(cfg, out_dir);
    if (cmd == "sample") return cmd_sample(cfg, out_dir);
    if (cmd == "measure") return cmd_measure(cfg, out_dir);
    if (cmd == "factors") return cmd_factors(cfg, out_dir);
    if (cmd == "influence") return cmd_influence(cfg, out_dir);
    if (cmd == "cache") return cmd_cache(cfg, out_dir);
    if (cmd == "lds-make") return cmd_lds_make(cfg, out_dir);
    if (cmd == "lds-eval") return cmd_lds_eval(cfg, out_dir);
    if (cmd == "ablate-remove-top") return cmd_ablate_remove_top(cfg, out_dir);
    if (cmd == "timestep-grid") return cmd_timestep_grid(cfg, out_dir);
    if (cmd == "export-plotdata") return cmd_export_plotdata(cfg, out_dir);
    throw ConfigError("unknown command: " + cmd);
}

}  // namespace dinf
