#pragma once

#include <string>
#include <variant>
#include <vector>

#include "dinf/common.hpp"
#include "dinf/container.hpp"
#include "dinf/rng.hpp"

namespace dinf {

enum class Activation { Identity, Silu };

struct DenseLayer {
    int in_dim = 0;
    int out_dim = 0;
    Mat weight;  // out_dim x in_dim
    Vec bias;    // out_dim
    Activation act = Activation::Silu;
};

// Valid (no padding) 1-D convolution, stride 1. The flat input is interpreted
// channel-major as in_channels rows of length in_len; the output is
// out_channels rows of length in_len - kernel_width + 1, flattened the same
// way. Each spatial position is one weight-sharing slot.
struct Conv1dLayer {
    int in_channels = 0;
    int out_channels = 0;
    int kernel_width = 0;
    int in_len = 0;
    Mat weight;  // out_channels x (kernel_width * in_channels)
    Vec bias;    // out_channels
    Activation act = Activation::Silu;

    int out_len() const { return in_len - kernel_width + 1; }
    int in_dim() const { return in_channels * in_len; }
    int out_dim() const { return out_channels * out_len(); }
    int patch_dim() const { return kernel_width * in_channels; }
};

using Layer = std::variant<DenseLayer, Conv1dLayer>;

int layer_in_dim(const Layer& l);
int layer_out_dim(const Layer& l);
long layer_param_count(const Layer& l);
// Weight-sharing positions: 1 for dense, out_len for conv.
int layer_sharing_size(const Layer& l);
// (rows, cols) of the layer's combined [weight | bias] matrix; the flat
// parameter layout is its column-major vectorization.
std::pair<int, int> layer_param_shape(const Layer& l);

// Noise-prediction network. The input is the data vector with a sinusoidal
// embedding of the timestep appended.
struct EpsilonNet {
    int data_dim = 0;
    int time_embed_dim = 8;
    std::vector<Layer> layers;

    int input_dim() const { return data_dim + time_embed_dim; }
    long param_count() const;
    Vec flat_params() const;
    void set_flat_params(const Vec& theta);
};

Vec sinusoidal_time_embedding(int t, int dim);

struct LayerSpecConfig {
    enum class Kind { Dense, Conv1d };
    Kind kind = Kind::Dense;
    int out_dim = 0;        // dense
    int in_channels = 0;    // conv
    int out_channels = 0;   // conv
    int kernel_width = 0;   // conv
    Activation act = Activation::Silu;
};

struct ArchConfig {
    int data_dim = 0;
    int time_embed_dim = 8;
    std::vector<LayerSpecConfig> layers;
};

// Scaled uniform fan-in initialization from the seeded stream. Throws
// ConfigError naming the offending layer if dimensions do not chain.
EpsilonNet build_network(const ArchConfig& arch, std::uint64_t seed);

// Forward activations for one (x, t) evaluation.
struct ForwardPass {
    Vec input;                      // data ++ time embedding
    std::vector<Vec> layer_inputs;  // flat input to each layer
    std::vector<Vec> preact;        // flat pre-activation output of each layer
    Vec output;
};

ForwardPass run_forward(const EpsilonNet& net, const Vec& x, int t);

// Reverse sweep from a gradient seed on the network output.
struct BackwardPass {
    Vec param_grad;                        // flat, empty unless requested
    std::vector<std::vector<Vec>> layer_b; // [layer][position] d obj / d preact
};

BackwardPass run_backward(const EpsilonNet& net, const ForwardPass& fwd, const Vec& output_seed,
                          bool want_param_grad);

// Per-layer, per-position input vectors with the trailing 1 appended for the
// bias column.
std::vector<std::vector<Vec>> a_vectors(const EpsilonNet& net, const ForwardPass& fwd);

// Captured factors of one squared-error backward pass: the flat parameter
// gradient of the objective equals, per layer, sum_m a[m] (x) b[m] under the
// column-major [weight | bias] layout.
struct LayerTrace {
    std::vector<std::vector<Vec>> a;
    std::vector<std::vector<Vec>> b;
};

struct GradResult {
    Vec grad;
    LayerTrace trace;
    Vec eps_pred;
    double loss = 0.0;  // squared-error value
};

// Gradient of ||target - net(x_t, t)||^2 in the flat parameter layout.
GradResult grad_sq_loss(const EpsilonNet& net, const Vec& x_t, int t, const Vec& target);

// Reassemble the flat gradient from a trace (sum of a (x) b per layer).
Vec grad_from_trace(const EpsilonNet& net, const LayerTrace& trace);

void save_net(ArtifactContainer& c, const std::string& prefix, const EpsilonNet& net);
EpsilonNet load_net(const ArtifactContainer& c, const std::string& prefix);

}  // namespace dinf
