#include "dinf/net.hpp"

#include <cmath>

namespace dinf {
namespace {

double silu(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;
}

double silu_deriv(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

Vec apply_activation(Activation act, const Vec& pre) {
    if (act == Activation::Identity) return pre;
    Vec out(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) out[i] = silu(pre[i]);
    return out;
}

Vec activation_deriv(Activation act, const Vec& pre) {
    if (act == Activation::Identity) return Vec::Ones(pre.size());
    Vec d(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) d[i] = silu_deriv(pre[i]);
    return d;
}

Vec conv_patch(const Conv1dLayer& l, const Vec& input, int m) {
    Vec p(l.patch_dim());
    for (int c = 0; c < l.in_channels; ++c) {
        for (int j = 0; j < l.kernel_width; ++j) {
            p[c * l.kernel_width + j] = input[c * l.in_len + m + j];
        }
    }
    return p;
}

}  // namespace

int layer_in_dim(const Layer& l) {
    return std::visit([](const auto& x) {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseLayer>) return x.in_dim;
        else return x.in_dim();
    }, l);
}

int layer_out_dim(const Layer& l) {
    return std::visit([](const auto& x) {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseLayer>) return x.out_dim;
        else return x.out_dim();
    }, l);
}

long layer_param_count(const Layer& l) {
    return std::visit([](const auto& x) {
        return static_cast<long>(x.weight.size()) + static_cast<long>(x.bias.size());
    }, l);
}

int layer_sharing_size(const Layer& l) {
    if (std::holds_alternative<DenseLayer>(l)) return 1;
    return std::get<Conv1dLayer>(l).out_len();
}

std::pair<int, int> layer_param_shape(const Layer& l) {
    if (const auto* d = std::get_if<DenseLayer>(&l)) return {d->out_dim, d->in_dim + 1};
    const auto& c = std::get<Conv1dLayer>(l);
    return {c.out_channels, c.patch_dim() + 1};
}

long EpsilonNet::param_count() const {
    long n = 0;
    for (const Layer& l : layers) n += layer_param_count(l);
    return n;
}

Vec EpsilonNet::flat_params() const {
    Vec theta(param_count());
    Eigen::Index off = 0;
    for (const Layer& l : layers) {
        std::visit([&](const auto& x) {
            const Eigen::Index rows = x.weight.rows();
            for (Eigen::Index c = 0; c < x.weight.cols(); ++c) {
                theta.segment(off, rows) = x.weight.col(c);
                off += rows;
            }
            theta.segment(off, rows) = x.bias;
            off += rows;
        }, l);
    }
    return theta;
}

void EpsilonNet::set_flat_params(const Vec& theta) {
    if (theta.size() != param_count()) throw ConfigError("flat parameter size mismatch");
    if (!theta.allFinite()) throw NumericError("non-finite parameters");
    Eigen::Index off = 0;
    for (Layer& l : layers) {
        std::visit([&](auto& x) {
            const Eigen::Index rows = x.weight.rows();
            for (Eigen::Index c = 0; c < x.weight.cols(); ++c) {
                x.weight.col(c) = theta.segment(off, rows);
                off += rows;
            }
            x.bias = theta.segment(off, rows);
            off += rows;
        }, l);
    }
}

Vec sinusoidal_time_embedding(int t, int dim) {
    Vec emb(dim);
    if (dim == 0) return emb;
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        emb[i] = std::sin(t * freq);
        emb[half + i] = std::cos(t * freq);
    }
    return emb;
}

EpsilonNet build_network(const ArchConfig& arch, std::uint64_t seed) {
    if (arch.data_dim <= 0) throw ConfigError("data_dim must be positive");
    if (arch.time_embed_dim < 0 || arch.time_embed_dim % 2 != 0) {
        throw ConfigError("time_embed_dim must be even and nonnegative");
    }
    if (arch.layers.empty()) throw ConfigError("architecture has no layers");

    EpsilonNet net;
    net.data_dim = arch.data_dim;
    net.time_embed_dim = arch.time_embed_dim;

    const RngStream root(seed);
    int cur_dim = net.input_dim();
    for (std::size_t li = 0; li < arch.layers.size(); ++li) {
        const LayerSpecConfig& spec = arch.layers[li];
        const std::string where = "layer " + std::to_string(li);
        Layer layer;
        if (spec.kind == LayerSpecConfig::Kind::Dense) {
            if (spec.out_dim <= 0) throw ConfigError(where + ": out_dim must be positive");
            DenseLayer d;
            d.in_dim = cur_dim;
            d.out_dim = spec.out_dim;
            d.act = spec.act;
            d.weight.resize(d.out_dim, d.in_dim);
            d.bias.resize(d.out_dim);
            layer = std::move(d);
            cur_dim = spec.out_dim;
        } else {
            if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.kernel_width <= 0) {
                throw ConfigError(where + ": conv1d dimensions must be positive");
            }
            if (cur_dim % spec.in_channels != 0) {
                throw ConfigError(where + ": input dim " + std::to_string(cur_dim) +
                                  " not divisible by in_channels " +
                                  std::to_string(spec.in_channels));
            }
            Conv1dLayer c;
            c.in_channels = spec.in_channels;
            c.out_channels = spec.out_channels;
            c.kernel_width = spec.kernel_width;
            c.in_len = cur_dim / spec.in_channels;
            if (c.out_len() <= 0) {
                throw ConfigError(where + ": kernel_width " + std::to_string(spec.kernel_width) +
                                  " exceeds input length " + std::to_string(c.in_len));
            }
            c.act = spec.act;
            c.weight.resize(c.out_channels, c.patch_dim());
            c.bias.resize(c.out_channels);
            cur_dim = c.out_dim();
            layer = std::move(c);
        }

        // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), drawn in flat layout order
        Sampler smp(root.child("init", li));
        std::visit([&](auto& x) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(x.weight.cols()));
            for (Eigen::Index c = 0; c < x.weight.cols(); ++c) {
                for (Eigen::Index r = 0; r < x.weight.rows(); ++r) {
                    x.weight(r, c) = (2.0 * smp.uniform() - 1.0) * bound;
                }
            }
            for (Eigen::Index r = 0; r < x.bias.size(); ++r) {
                x.bias[r] = (2.0 * smp.uniform() - 1.0) * bound;
            }
        }, layer);
        net.layers.push_back(std::move(layer));
    }

    if (cur_dim != arch.data_dim) {
        throw ConfigError("last layer output dim " + std::to_string(cur_dim) +
                          " does not equal data_dim " + std::to_string(arch.data_dim));
    }
    return net;
}

ForwardPass run_forward(const EpsilonNet& net, const Vec& x, int t) {
    if (x.size() != net.data_dim) throw ConfigError("input dim mismatch");
    if (!x.allFinite()) throw NumericError("non-finite network input");
    if (t < 1) throw ConfigError("timestep must be >= 1");

    ForwardPass fwd;
    fwd.input.resize(net.input_dim());
    fwd.input.head(net.data_dim) = x;
    fwd.input.tail(net.time_embed_dim) = sinusoidal_time_embedding(t, net.time_embed_dim);

    Vec cur = fwd.input;
    fwd.layer_inputs.reserve(net.layers.size());
    fwd.preact.reserve(net.layers.size());
    for (const Layer& l : net.layers) {
        fwd.layer_inputs.push_back(cur);
        Vec pre;
        if (const auto* d = std::get_if<DenseLayer>(&l)) {
            pre.noalias() = d->weight * cur;
            pre += d->bias;
        } else {
            const auto& c = std::get<Conv1dLayer>(l);
            pre.resize(c.out_dim());
            const int out_len = c.out_len();
            for (int m = 0; m < out_len; ++m) {
                Vec patch = conv_patch(c, cur, m);
                Vec pm = c.weight * patch;
                pm += c.bias;
                for (int o = 0; o < c.out_channels; ++o) pre[o * out_len + m] = pm[o];
            }
        }
        fwd.preact.push_back(pre);
        cur = apply_activation(std::visit([](const auto& x_) { return x_.act; }, l), pre);
    }
    fwd.output = std::move(cur);
    return fwd;
}

BackwardPass run_backward(const EpsilonNet& net, const ForwardPass& fwd, const Vec& output_seed,
                          bool want_param_grad) {
    BackwardPass bwd;
    const std::size_t L = net.layers.size();
    bwd.layer_b.resize(L);
    if (want_param_grad) bwd.param_grad = Vec::Zero(net.param_count());

    std::vector<Eigen::Index> offsets(L);
    {
        Eigen::Index off = 0;
        for (std::size_t l = 0; l < L; ++l) {
            offsets[l] = off;
            off += layer_param_count(net.layers[l]);
        }
    }

    Vec g_post = output_seed;
    for (std::size_t li = L; li-- > 0;) {
        const Layer& layer = net.layers[li];
        const Activation act = std::visit([](const auto& x) { return x.act; }, layer);
        const Vec g_pre = g_post.cwiseProduct(activation_deriv(act, fwd.preact[li]));
        const Vec& in = fwd.layer_inputs[li];

        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            bwd.layer_b[li] = {g_pre};
            if (want_param_grad) {
                auto block = bwd.param_grad.segment(offsets[li], layer_param_count(layer));
                Eigen::Map<Mat> gmat(block.data(), d->out_dim, d->in_dim + 1);
                gmat.leftCols(d->in_dim).noalias() = g_pre * in.transpose();
                gmat.col(d->in_dim) = g_pre;
            }
            g_post.noalias() = d->weight.transpose() * g_pre;
        } else {
            const auto& c = std::get<Conv1dLayer>(layer);
            const int out_len = c.out_len();
            std::vector<Vec> bs(out_len);
            Vec g_in = Vec::Zero(c.in_dim());
            Mat gw;
            Vec gb;
            if (want_param_grad) {
                gw = Mat::Zero(c.out_channels, c.patch_dim());
                gb = Vec::Zero(c.out_channels);
            }
            for (int m = 0; m < out_len; ++m) {
                Vec bm(c.out_channels);
                for (int o = 0; o < c.out_channels; ++o) bm[o] = g_pre[o * out_len + m];
                if (want_param_grad) {
                    Vec patch = conv_patch(c, in, m);
                    gw.noalias() += bm * patch.transpose();
                    gb += bm;
                }
                Vec gpatch = c.weight.transpose() * bm;
                for (int ch = 0; ch < c.in_channels; ++ch) {
                    for (int j = 0; j < c.kernel_width; ++j) {
                        g_in[ch * c.in_len + m + j] += gpatch[ch * c.kernel_width + j];
                    }
                }
                bs[m] = std::move(bm);
            }
            if (want_param_grad) {
                auto block = bwd.param_grad.segment(offsets[li], layer_param_count(layer));
                Eigen::Map<Mat> gmat(block.data(), c.out_channels, c.patch_dim() + 1);
                gmat.leftCols(c.patch_dim()) = gw;
                gmat.col(c.patch_dim()) = gb;
            }
            bwd.layer_b[li] = std::move(bs);
            g_post = std::move(g_in);
        }
    }
    return bwd;
}

std::vector<std::vector<Vec>> a_vectors(const EpsilonNet& net, const ForwardPass& fwd) {
    std::vector<std::vector<Vec>> as(net.layers.size());
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const Vec& in = fwd.layer_inputs[li];
        if (const auto* d = std::get_if<DenseLayer>(&net.layers[li])) {
            Vec a(d->in_dim + 1);
            a.head(d->in_dim) = in;
            a[d->in_dim] = 1.0;
            as[li] = {std::move(a)};
        } else {
            const auto& c = std::get<Conv1dLayer>(net.layers[li]);
            const int out_len = c.out_len();
            as[li].reserve(out_len);
            for (int m = 0; m < out_len; ++m) {
                Vec a(c.patch_dim() + 1);
                a.head(c.patch_dim()) = conv_patch(c, in, m);
                a[c.patch_dim()] = 1.0;
                as[li].push_back(std::move(a));
            }
        }
    }
    return as;
}

GradResult grad_sq_loss(const EpsilonNet& net, const Vec& x_t, int t, const Vec& target) {
    if (target.size() != net.data_dim) throw ConfigError("target dim mismatch");
    ForwardPass fwd = run_forward(net, x_t, t);
    const Vec residual = fwd.output - target;
    const Vec seed = 2.0 * residual;
    BackwardPass bwd = run_backward(net, fwd, seed, /*want_param_grad=*/true);

    GradResult res;
    res.grad = std::move(bwd.param_grad);
    res.trace.a = a_vectors(net, fwd);
    res.trace.b = std::move(bwd.layer_b);
    res.eps_pred = std::move(fwd.output);
    res.loss = residual.squaredNorm();
    return res;
}

Vec grad_from_trace(const EpsilonNet& net, const LayerTrace& trace) {
    Vec grad = Vec::Zero(net.param_count());
    Eigen::Index off = 0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const auto [rows, cols] = layer_param_shape(net.layers[li]);
        Eigen::Map<Mat> gmat(grad.segment(off, static_cast<Eigen::Index>(rows) * cols).data(),
                             rows, cols);
        for (std::size_t m = 0; m < trace.a[li].size(); ++m) {
            gmat.noalias() += trace.b[li][m] * trace.a[li][m].transpose();
        }
        off += static_cast<Eigen::Index>(rows) * cols;
    }
    return grad;
}

void save_net(ArtifactContainer& c, const std::string& prefix, const EpsilonNet& net) {
    c.add_scalar_u64(prefix + "/data_dim", static_cast<std::uint64_t>(net.data_dim));
    c.add_scalar_u64(prefix + "/time_embed_dim", static_cast<std::uint64_t>(net.time_embed_dim));
    c.add_scalar_u64(prefix + "/n_layers", net.layers.size());
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        const std::string p = prefix + "/layer" + std::to_string(li);
        if (const auto* d = std::get_if<DenseLayer>(&net.layers[li])) {
            std::uint64_t meta[3] = {0, static_cast<std::uint64_t>(d->act), 0};
            c.add_u64(p + "/kind_act", {3}, meta);
            c.add_matrix(p + "/weight", d->weight);
            c.add_vector(p + "/bias", d->bias);
        } else {
            const auto& cv = std::get<Conv1dLayer>(net.layers[li]);
            std::uint64_t meta[3] = {1, static_cast<std::uint64_t>(cv.act),
                                     static_cast<std::uint64_t>(cv.in_channels) << 32 |
                                         static_cast<std::uint64_t>(cv.kernel_width)};
            c.add_u64(p + "/kind_act", {3}, meta);
            c.add_scalar_u64(p + "/in_len", static_cast<std::uint64_t>(cv.in_len));
            c.add_matrix(p + "/weight", cv.weight);
            c.add_vector(p + "/bias", cv.bias);
        }
    }
}

EpsilonNet load_net(const ArtifactContainer& c, const std::string& prefix) {
    EpsilonNet net;
    net.data_dim = static_cast<int>(c.get_scalar_u64(prefix + "/data_dim"));
    net.time_embed_dim = static_cast<int>(c.get_scalar_u64(prefix + "/time_embed_dim"));
    const std::uint64_t n_layers = c.get_scalar_u64(prefix + "/n_layers");
    for (std::uint64_t li = 0; li < n_layers; ++li) {
        const std::string p = prefix + "/layer" + std::to_string(li);
        const auto meta = c.get_u64(p + "/kind_act");
        const Mat w = c.get_matrix(p + "/weight");
        const Vec b = c.get_vector(p + "/bias");
        if (meta[0] > 1) {
            throw UnsupportedLayerError("unknown layer kind tag " + std::to_string(meta[0]) +
                                        " in record " + p);
        }
        if (meta[0] == 0) {
            DenseLayer d;
            d.out_dim = static_cast<int>(w.rows());
            d.in_dim = static_cast<int>(w.cols());
            d.weight = w;
            d.bias = b;
            d.act = static_cast<Activation>(meta[1]);
            net.layers.emplace_back(std::move(d));
        } else {
            Conv1dLayer cv;
            cv.in_channels = static_cast<int>(meta[2] >> 32);
            cv.kernel_width = static_cast<int>(meta[2] & 0xffffffff);
            cv.in_len = static_cast<int>(c.get_scalar_u64(p + "/in_len"));
            cv.out_channels = static_cast<int>(w.rows());
            cv.weight = w;
            cv.bias = b;
            cv.act = static_cast<Activation>(meta[1]);
            net.layers.emplace_back(std::move(cv));
        }
    }
    return net;
}

}  // namespace dinf
