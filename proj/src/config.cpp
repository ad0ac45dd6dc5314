#include "dinf/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "dinf/container.hpp"

namespace dinf {
namespace {

using nlohmann::json;

// Collects every violation before failing.
struct Validator {
    std::vector<std::string> errors;

    void fail(const std::string& path, const std::string& what) {
        errors.push_back(path + ": " + what);
    }

    void check_keys(const json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
        for (const auto& [key, value] : obj.items()) {
            bool ok = false;
            for (const char* a : allowed) ok |= key == a;
            if (!ok) fail(path.empty() ? key : path + "." + key, "unknown key");
        }
    }

    template <class T>
    void read(const json& obj, const std::string& path, const char* key, T& out) {
        if (!obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const json::exception&) {
            fail(path + key, "type mismatch");
        }
    }

    void finish() {
        if (errors.empty()) return;
        std::ostringstream os;
        os << "invalid config (" << errors.size() << " violation(s)):";
        for (const auto& e : errors) os << "\n  - " << e;
        throw ConfigError(os.str());
    }
};

void validate_ranges(const RunConfig& c, Validator& v) {
    if (c.dataset.n < 1) v.fail("dataset.n", "must be >= 1");
    if (c.dataset.data_dim < 1) v.fail("dataset.data_dim", "must be >= 1");
    if (c.dataset.kind != "gmm2" && c.dataset.kind != "gaussian") {
        v.fail("dataset.kind", "unknown generator '" + c.dataset.kind + "'");
    }
    if (c.schedule.T < 1) v.fail("schedule.T", "must be >= 1");
    if (!(0.0 < c.schedule.beta_min && c.schedule.beta_min <= c.schedule.beta_max &&
          c.schedule.beta_max < 1.0)) {
        v.fail("schedule", "need 0 < beta_min <= beta_max < 1");
    }
    if (c.arch.time_embed_dim < 0 || c.arch.time_embed_dim % 2 != 0) {
        v.fail("arch.time_embed_dim", "must be even and nonnegative");
    }
    for (std::size_t i = 0; i < c.arch.layers.size(); ++i) {
        const auto& l = c.arch.layers[i];
        const std::string p = "arch.layers[" + std::to_string(i) + "]";
        if (l.kind != "dense" && l.kind != "conv1d") v.fail(p + ".kind", "unknown layer kind");
        if (l.activation != "silu" && l.activation != "identity") {
            v.fail(p + ".activation", "unknown activation");
        }
        if (l.kind == "dense" && l.out_dim < 1) v.fail(p + ".out_dim", "must be >= 1");
        if (l.kind == "conv1d" &&
            (l.in_channels < 1 || l.out_channels < 1 || l.kernel_width < 1)) {
            v.fail(p, "conv1d dimensions must be >= 1");
        }
    }
    if (c.training.optimizer != "adam" && c.training.optimizer != "sgd") {
        v.fail("training.optimizer", "must be adam or sgd");
    }
    if (!(c.training.lr > 0.0)) v.fail("training.lr", "must be > 0");
    if (c.training.steps < 1) v.fail("training.steps", "must be >= 1");
    if (c.training.batch < 1) v.fail("training.batch", "must be >= 1");
    if (c.training.log_interval < 1) v.fail("training.log_interval", "must be >= 1");
    if (c.training.sampling != "support" && c.training.sampling != "uniform") {
        v.fail("training.sampling", "must be support or uniform");
    }
    if (c.training.lr_schedule != "constant" && c.training.lr_schedule != "cosine") {
        v.fail("training.lr_schedule", "must be constant or cosine");
    }
    if (c.attribution.backend != "kfac" && c.attribution.backend != "ekfac" &&
        c.attribution.backend != "dense" && c.attribution.backend != "projected_ef") {
        v.fail("attribution.backend", "unknown backend");
    }
    if (c.attribution.ggn_kind != "model" && c.attribution.ggn_kind != "loss") {
        v.fail("attribution.ggn_kind", "must be model or loss");
    }
    if (c.attribution.sharing != "expand" && c.attribution.sharing != "reduce") {
        v.fail("attribution.sharing", "must be expand or reduce");
    }
    if (c.attribution.samples < 1) v.fail("attribution.samples", "must be >= 1");
    if (c.attribution.damping.empty()) v.fail("attribution.damping", "must be nonempty");
    for (double d : c.attribution.damping) {
        if (!(d > 0.0)) v.fail("attribution.damping", "values must be > 0");
    }
    if (c.attribution.d_proj < 1) v.fail("attribution.d_proj", "must be >= 1");
    if (c.evaluation.subsets < 1) v.fail("evaluation.subsets", "must be >= 1");
    if (c.evaluation.seeds < 1) v.fail("evaluation.seeds", "must be >= 1");
    if (!(c.evaluation.fraction > 0.0 && c.evaluation.fraction < 1.0)) {
        v.fail("evaluation.fraction", "must lie in (0, 1)");
    }
    if (c.evaluation.queries < 1) v.fail("evaluation.queries", "must be >= 1");
    for (double p : c.evaluation.percents) {
        if (!(p >= 0.0 && p < 100.0)) v.fail("evaluation.percents", "must lie in [0, 100)");
    }
    if (c.evaluation.measure_samples < 1) v.fail("evaluation.measure_samples", "must be >= 1");
    if (c.evaluation.measurement != "simple_loss" && c.evaluation.measurement != "elbo" &&
        c.evaluation.measurement != "per_timestep_loss" &&
        c.evaluation.measurement != "trajectory_logprob") {
        v.fail("evaluation.measurement", "unknown measurement kind");
    }
    if (c.evaluation.measurement_t < 1 || c.evaluation.measurement_t > c.schedule.T) {
        v.fail("evaluation.measurement_t", "must lie in [1, T]");
    }
    if (!(c.evaluation.subset_step_factor > 0.0 && c.evaluation.subset_step_factor <= 1.0)) {
        v.fail("evaluation.subset_step_factor", "must lie in (0, 1]");
    }
    for (int t : c.evaluation.proxy_timesteps) {
        if (t < 1 || t > c.schedule.T) v.fail("evaluation.proxy_timesteps", "entries in [1, T]");
    }
    for (int t : c.evaluation.target_timesteps) {
        if (t < 1 || t > c.schedule.T) v.fail("evaluation.target_timesteps", "entries in [1, T]");
    }
    if (c.evaluation.remove_top_queries < 1) {
        v.fail("evaluation.remove_top_queries", "must be >= 1");
    }
}

RunConfig from_json(const json& root) {
    Validator v;
    if (!root.is_object()) throw ConfigError("config root must be a JSON object");
    v.check_keys(root, "", {"dataset", "schedule", "arch", "training", "attribution",
                            "evaluation"});

    RunConfig c;
    if (root.contains("dataset")) {
        const json& d = root["dataset"];
        v.check_keys(d, "dataset", {"kind", "n", "data_dim", "seed"});
        v.read(d, "dataset.", "kind", c.dataset.kind);
        v.read(d, "dataset.", "n", c.dataset.n);
        v.read(d, "dataset.", "data_dim", c.dataset.data_dim);
        v.read(d, "dataset.", "seed", c.dataset.seed);
    }
    if (root.contains("schedule")) {
        const json& d = root["schedule"];
        v.check_keys(d, "schedule", {"T", "beta_min", "beta_max"});
        v.read(d, "schedule.", "T", c.schedule.T);
        v.read(d, "schedule.", "beta_min", c.schedule.beta_min);
        v.read(d, "schedule.", "beta_max", c.schedule.beta_max);
    }
    if (root.contains("arch")) {
        const json& d = root["arch"];
        v.check_keys(d, "arch", {"time_embed_dim", "layers"});
        v.read(d, "arch.", "time_embed_dim", c.arch.time_embed_dim);
        if (d.contains("layers")) {
            if (!d["layers"].is_array()) {
                v.fail("arch.layers", "must be an array");
            } else {
                for (std::size_t i = 0; i < d["layers"].size(); ++i) {
                    const json& lj = d["layers"][i];
                    const std::string p = "arch.layers[" + std::to_string(i) + "]";
                    v.check_keys(lj, p, {"kind", "out_dim", "in_channels", "out_channels",
                                         "kernel_width", "activation"});
                    ArchLayerSpec l;
                    v.read(lj, p + ".", "kind", l.kind);
                    v.read(lj, p + ".", "out_dim", l.out_dim);
                    v.read(lj, p + ".", "in_channels", l.in_channels);
                    v.read(lj, p + ".", "out_channels", l.out_channels);
                    v.read(lj, p + ".", "kernel_width", l.kernel_width);
                    v.read(lj, p + ".", "activation", l.activation);
                    c.arch.layers.push_back(std::move(l));
                }
            }
        }
    }
    if (root.contains("training")) {
        const json& d = root["training"];
        v.check_keys(d, "training", {"optimizer", "lr", "momentum", "steps", "batch", "seed",
                                     "sampling", "log_interval", "lr_schedule"});
        v.read(d, "training.", "optimizer", c.training.optimizer);
        v.read(d, "training.", "lr", c.training.lr);
        v.read(d, "training.", "momentum", c.training.momentum);
        v.read(d, "training.", "steps", c.training.steps);
        v.read(d, "training.", "batch", c.training.batch);
        v.read(d, "training.", "seed", c.training.seed);
        v.read(d, "training.", "sampling", c.training.sampling);
        v.read(d, "training.", "log_interval", c.training.log_interval);
        v.read(d, "training.", "lr_schedule", c.training.lr_schedule);
    }
    if (root.contains("attribution")) {
        const json& d = root["attribution"];
        v.check_keys(d, "attribution", {"backend", "ggn_kind", "sharing", "samples", "damping",
                                        "compress", "d_proj", "proj_seed"});
        v.read(d, "attribution.", "backend", c.attribution.backend);
        v.read(d, "attribution.", "ggn_kind", c.attribution.ggn_kind);
        v.read(d, "attribution.", "sharing", c.attribution.sharing);
        v.read(d, "attribution.", "samples", c.attribution.samples);
        v.read(d, "attribution.", "damping", c.attribution.damping);
        v.read(d, "attribution.", "compress", c.attribution.compress);
        v.read(d, "attribution.", "d_proj", c.attribution.d_proj);
        v.read(d, "attribution.", "proj_seed", c.attribution.proj_seed);
    }
    if (root.contains("evaluation")) {
        const json& d = root["evaluation"];
        v.check_keys(d, "evaluation",
                     {"subsets", "seeds", "fraction", "queries", "percents", "measure_samples",
                      "measurement", "measurement_t", "subset_step_factor", "proxy_timesteps",
                      "target_timesteps", "remove_top_queries"});
        v.read(d, "evaluation.", "subsets", c.evaluation.subsets);
        v.read(d, "evaluation.", "seeds", c.evaluation.seeds);
        v.read(d, "evaluation.", "fraction", c.evaluation.fraction);
        v.read(d, "evaluation.", "queries", c.evaluation.queries);
        v.read(d, "evaluation.", "percents", c.evaluation.percents);
        v.read(d, "evaluation.", "measure_samples", c.evaluation.measure_samples);
        v.read(d, "evaluation.", "measurement", c.evaluation.measurement);
        v.read(d, "evaluation.", "measurement_t", c.evaluation.measurement_t);
        v.read(d, "evaluation.", "subset_step_factor", c.evaluation.subset_step_factor);
        v.read(d, "evaluation.", "proxy_timesteps", c.evaluation.proxy_timesteps);
        v.read(d, "evaluation.", "target_timesteps", c.evaluation.target_timesteps);
        v.read(d, "evaluation.", "remove_top_queries", c.evaluation.remove_top_queries);
    }

    validate_ranges(c, v);
    v.finish();
    return c;
}

json to_json(const RunConfig& c) {
    json root;
    root["dataset"] = {{"kind", c.dataset.kind},
                       {"n", c.dataset.n},
                       {"data_dim", c.dataset.data_dim},
                       {"seed", c.dataset.seed}};
    root["schedule"] = {{"T", c.schedule.T},
                        {"beta_min", c.schedule.beta_min},
                        {"beta_max", c.schedule.beta_max}};
    json layers = json::array();
    for (const auto& l : c.arch.layers) {
        json lj = {{"kind", l.kind}, {"activation", l.activation}};
        if (l.kind == "dense") {
            lj["out_dim"] = l.out_dim;
        } else {
            lj["in_channels"] = l.in_channels;
            lj["out_channels"] = l.out_channels;
            lj["kernel_width"] = l.kernel_width;
        }
        layers.push_back(std::move(lj));
    }
    root["arch"] = {{"time_embed_dim", c.arch.time_embed_dim}, {"layers", std::move(layers)}};
    root["training"] = {{"optimizer", c.training.optimizer},
                        {"lr", c.training.lr},
                        {"momentum", c.training.momentum},
                        {"steps", c.training.steps},
                        {"batch", c.training.batch},
                        {"seed", c.training.seed},
                        {"sampling", c.training.sampling},
                        {"log_interval", c.training.log_interval},
                        {"lr_schedule", c.training.lr_schedule}};
    root["attribution"] = {{"backend", c.attribution.backend},
                           {"ggn_kind", c.attribution.ggn_kind},
                           {"sharing", c.attribution.sharing},
                           {"samples", c.attribution.samples},
                           {"damping", c.attribution.damping},
                           {"compress", c.attribution.compress},
                           {"d_proj", c.attribution.d_proj},
                           {"proj_seed", c.attribution.proj_seed}};
    root["evaluation"] = {{"subsets", c.evaluation.subsets},
                          {"seeds", c.evaluation.seeds},
                          {"fraction", c.evaluation.fraction},
                          {"queries", c.evaluation.queries},
                          {"percents", c.evaluation.percents},
                          {"measure_samples", c.evaluation.measure_samples},
                          {"measurement", c.evaluation.measurement},
                          {"measurement_t", c.evaluation.measurement_t},
                          {"subset_step_factor", c.evaluation.subset_step_factor},
                          {"proxy_timesteps", c.evaluation.proxy_timesteps},
                          {"target_timesteps", c.evaluation.target_timesteps},
                          {"remove_top_queries", c.evaluation.remove_top_queries}};
    return root;
}

}  // namespace

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

RunConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(root);
}

std::string serialize_config(const RunConfig& cfg) {
    return to_json(cfg).dump(2);  // nlohmann objects keep keys sorted
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(to_json(cfg).dump()); }

ArchConfig arch_from_config(const RunConfig& cfg) {
    ArchConfig arch;
    arch.data_dim = cfg.dataset.data_dim;
    arch.time_embed_dim = cfg.arch.time_embed_dim;
    auto act_of = [](const std::string& a) {
        return a == "identity" ? Activation::Identity : Activation::Silu;
    };
    if (cfg.arch.layers.empty()) {
        LayerSpecConfig h;
        h.out_dim = 32;
        h.act = Activation::Silu;
        LayerSpecConfig o;
        o.out_dim = cfg.dataset.data_dim;
        o.act = Activation::Identity;
        arch.layers = {h, o};
        return arch;
    }
    for (const auto& l : cfg.arch.layers) {
        LayerSpecConfig s;
        if (l.kind == "dense") {
            s.kind = LayerSpecConfig::Kind::Dense;
            s.out_dim = l.out_dim;
        } else {
            s.kind = LayerSpecConfig::Kind::Conv1d;
            s.in_channels = l.in_channels;
            s.out_channels = l.out_channels;
            s.kernel_width = l.kernel_width;
        }
        s.act = act_of(l.activation);
        arch.layers.push_back(s);
    }
    return arch;
}

OptimizerConfig optimizer_from_config(const RunConfig& cfg) {
    OptimizerConfig opt;
    opt.kind = cfg.training.optimizer == "sgd" ? OptimizerConfig::Kind::Sgd
                                               : OptimizerConfig::Kind::Adam;
    opt.lr = cfg.training.lr;
    opt.momentum = cfg.training.momentum;
    opt.batch_size = cfg.training.batch;
    opt.log_interval = cfg.training.log_interval;
    opt.support_sampling = cfg.training.sampling == "support";
    opt.cosine_lr = cfg.training.lr_schedule == "cosine";
    return opt;
}

bool operator==(const RunConfig& a, const RunConfig& b) {
    return to_json(a) == to_json(b);
}

}  // namespace dinf
