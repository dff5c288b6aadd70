#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace socbal {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a; // row-major

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
};

enum class Activation : uint8_t { Identity = 0, Relu = 1, Tanh = 2 };

/// Dense feed-forward network. weights[l] has shape dims[l+1] x dims[l];
/// the hidden activation applies to every layer but the last, the output
/// activation to the last. All parameters are 64-bit.
struct Mlp {
    std::vector<int> dims;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    Activation hidden = Activation::Relu;
    Activation output = Activation::Identity;

    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    int layer_count() const { return static_cast<int>(weights.size()); }
    size_t parameter_count() const;
};

/// Parameter-shaped gradient (or moment) storage.
struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    void zero();
};

MlpGrads make_grads(const Mlp& net);

/// Weights drawn uniform in +-1/sqrt(fan_in), biases zero.
Mlp make_mlp(const std::vector<int>& dims, Activation hidden, Activation output,
             std::mt19937_64& rng);

/// Scratch buffers reused across forward/backward calls on same-shaped nets.
struct MlpWorkspace {
    std::vector<std::vector<double>> acts;   // acts[0] = input copy
    std::vector<std::vector<double>> deltas; // per-layer error terms
    const std::vector<double>& output() const { return acts.back(); }
};

void forward(const Mlp& net, std::span<const double> input, MlpWorkspace& ws);
std::vector<double> forward(const Mlp& net, std::span<const double> input);

/// Backpropagates upstream (dL/doutput) through the net. Parameter gradients
/// are ACCUMULATED into grads; pass input_grad to also get dL/dinput.
/// The workspace must hold the forward pass for the same input.
void backward(const Mlp& net, const MlpWorkspace& ws, std::span<const double> upstream,
              MlpGrads& grads, MlpWorkspace& scratch, std::span<double> input_grad = {});

/// Convenience wrapper: fresh forward pass, zeroed gradients, returned input grad.
std::pair<MlpGrads, std::vector<double>> backward(const Mlp& net, std::span<const double> input,
                                                  std::span<const double> upstream);

/// dL/dinput only; parameter gradients are not computed.
void backward_input(const Mlp& net, const MlpWorkspace& ws, std::span<const double> upstream,
                    MlpWorkspace& scratch, std::span<double> input_grad);

/// Adam with bias correction.
struct AdamState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step_count = 0;
    MlpGrads m;
    MlpGrads v;
};

AdamState make_adam(const Mlp& net, double learning_rate);

/// One descent step. Throws on non-finite gradients.
void optimizer_step(AdamState& opt, Mlp& net, const MlpGrads& grads);

/// Binary network block: u32 dim count, u32 dims, then per layer the
/// row-major weight matrix followed by the bias vector, all little-endian
/// f64. Activations are not stored; the caller supplies them on read.
/// Checkpoint files prepend the "DMRL1" magic before the network blocks.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in, Activation hidden, Activation output);

inline constexpr char kCheckpointMagic[5] = {'D', 'M', 'R', 'L', '1'};

} // namespace socbal
