#include "mlp.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "error.hpp"

namespace socbal {

size_t Mlp::parameter_count() const {
    size_t n = 0;
    for (size_t l = 0; l < weights.size(); ++l) {
        n += weights[l].a.size() + biases[l].size();
    }
    return n;
}

void MlpGrads::zero() {
    for (auto& w : weights) std::fill(w.a.begin(), w.a.end(), 0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

MlpGrads make_grads(const Mlp& net) {
    MlpGrads g;
    g.weights.reserve(net.weights.size());
    g.biases.reserve(net.biases.size());
    for (size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.emplace_back(net.weights[l].rows, net.weights[l].cols);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

Mlp make_mlp(const std::vector<int>& dims, Activation hidden, Activation output,
             std::mt19937_64& rng) {
    if (dims.size() < 2) throw Error("mlp: need at least an input and an output layer");
    for (int d : dims) {
        if (d < 1) throw Error("mlp: layer dims must be positive");
    }
    Mlp net;
    net.dims = dims;
    net.hidden = hidden;
    net.output = output;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        Matrix w(dims[l + 1], dims[l]);
        for (double& v : w.a) v = u(rng);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(dims[l + 1], 0.0);
    }
    return net;
}

namespace {

inline double activate(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Relu: return z > 0.0 ? z : 0.0;
        case Activation::Tanh: return std::tanh(z);
    }
    return z;
}

// Derivative expressed through the activation value itself.
inline double activate_grad(Activation act, double a) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return a > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: return 1.0 - a * a;
    }
    return 1.0;
}

// y = W x + b, unrolled into four accumulators so the reduction vectorizes.
inline void matvec(const Matrix& w, const double* x, const double* b, double* y) {
    for (int r = 0; r < w.rows; ++r) {
        const double* row = w.a.data() + static_cast<size_t>(r) * w.cols;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        int c = 0;
        for (; c + 4 <= w.cols; c += 4) {
            s0 += row[c] * x[c];
            s1 += row[c + 1] * x[c + 1];
            s2 += row[c + 2] * x[c + 2];
            s3 += row[c + 3] * x[c + 3];
        }
        for (; c < w.cols; ++c) s0 += row[c] * x[c];
        y[r] = (s0 + s1) + (s2 + s3) + b[r];
    }
}

void ensure_workspace(const Mlp& net, MlpWorkspace& ws) {
    const size_t layers = net.dims.size();
    if (ws.acts.size() != layers) {
        ws.acts.assign(layers, {});
        ws.deltas.assign(layers, {});
    }
    for (size_t l = 0; l < layers; ++l) {
        ws.acts[l].resize(net.dims[l]);
        ws.deltas[l].resize(net.dims[l]);
    }
}

} // namespace

void forward(const Mlp& net, std::span<const double> input, MlpWorkspace& ws) {
    if (static_cast<int>(input.size()) != net.input_dim()) {
        throw Error("mlp forward: input has " + std::to_string(input.size()) +
                    " entries, expected " + std::to_string(net.input_dim()));
    }
    ensure_workspace(net, ws);
    std::copy(input.begin(), input.end(), ws.acts[0].begin());
    const int L = net.layer_count();
    for (int l = 0; l < L; ++l) {
        Activation act = (l + 1 == L) ? net.output : net.hidden;
        matvec(net.weights[l], ws.acts[l].data(), net.biases[l].data(), ws.acts[l + 1].data());
        for (double& v : ws.acts[l + 1]) v = activate(act, v);
    }
}

std::vector<double> forward(const Mlp& net, std::span<const double> input) {
    MlpWorkspace ws;
    forward(net, input, ws);
    return ws.output();
}

void backward(const Mlp& net, const MlpWorkspace& ws, std::span<const double> upstream,
              MlpGrads& grads, MlpWorkspace& scratch, std::span<double> input_grad) {
    const int L = net.layer_count();
    if (static_cast<int>(upstream.size()) != net.output_dim()) {
        throw Error("mlp backward: upstream gradient has " + std::to_string(upstream.size()) +
                    " entries, expected " + std::to_string(net.output_dim()));
    }
    ensure_workspace(net, scratch);

    // delta for the output layer
    {
        auto& delta = scratch.deltas[L];
        const auto& a = ws.acts[L];
        for (int i = 0; i < net.dims[L]; ++i) {
            delta[i] = upstream[i] * activate_grad(net.output, a[i]);
        }
    }

    for (int l = L - 1; l >= 0; --l) {
        const auto& delta = scratch.deltas[l + 1];
        const auto& a_in = ws.acts[l];
        Matrix& dw = grads.weights[l];
        auto& db = grads.biases[l];
        const Matrix& w = net.weights[l];
        auto& delta_prev = scratch.deltas[l];
        std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
        for (int r = 0; r < w.rows; ++r) {
            const double d = delta[r];
            db[r] += d;
            double* dw_row = dw.a.data() + static_cast<size_t>(r) * w.cols;
            const double* w_row = w.a.data() + static_cast<size_t>(r) * w.cols;
            for (int c = 0; c < w.cols; ++c) {
                dw_row[c] += d * a_in[c];
                delta_prev[c] += w_row[c] * d;
            }
        }
        if (l > 0) {
            for (int c = 0; c < net.dims[l]; ++c) {
                delta_prev[c] *= activate_grad(net.hidden, a_in[c]);
            }
        }
    }

    if (!input_grad.empty()) {
        if (static_cast<int>(input_grad.size()) != net.input_dim()) {
            throw Error("mlp backward: input_grad span has the wrong length");
        }
        std::copy(scratch.deltas[0].begin(), scratch.deltas[0].end(), input_grad.begin());
    }
}

std::pair<MlpGrads, std::vector<double>> backward(const Mlp& net, std::span<const double> input,
                                                  std::span<const double> upstream) {
    MlpWorkspace ws;
    forward(net, input, ws);
    MlpGrads grads = make_grads(net);
    std::vector<double> input_grad(net.input_dim(), 0.0);
    backward(net, ws, upstream, grads, ws, input_grad);
    return {std::move(grads), std::move(input_grad)};
}

void backward_input(const Mlp& net, const MlpWorkspace& ws, std::span<const double> upstream,
                    MlpWorkspace& scratch, std::span<double> input_grad) {
    const int L = net.layer_count();
    if (static_cast<int>(upstream.size()) != net.output_dim()) {
        throw Error("mlp backward_input: upstream gradient has the wrong length");
    }
    if (static_cast<int>(input_grad.size()) != net.input_dim()) {
        throw Error("mlp backward_input: input_grad span has the wrong length");
    }
    ensure_workspace(net, scratch);
    {
        auto& delta = scratch.deltas[L];
        const auto& a = ws.acts[L];
        for (int i = 0; i < net.dims[L]; ++i) {
            delta[i] = upstream[i] * activate_grad(net.output, a[i]);
        }
    }
    for (int l = L - 1; l >= 0; --l) {
        const auto& delta = scratch.deltas[l + 1];
        const Matrix& w = net.weights[l];
        auto& delta_prev = scratch.deltas[l];
        std::fill(delta_prev.begin(), delta_prev.end(), 0.0);
        for (int r = 0; r < w.rows; ++r) {
            const double d = delta[r];
            const double* w_row = w.a.data() + static_cast<size_t>(r) * w.cols;
            for (int c = 0; c < w.cols; ++c) {
                delta_prev[c] += w_row[c] * d;
            }
        }
        if (l > 0) {
            const auto& a_in = ws.acts[l];
            for (int c = 0; c < net.dims[l]; ++c) {
                delta_prev[c] *= activate_grad(net.hidden, a_in[c]);
            }
        }
    }
    std::copy(scratch.deltas[0].begin(), scratch.deltas[0].end(), input_grad.begin());
}

AdamState make_adam(const Mlp& net, double learning_rate) {
    if (!(learning_rate > 0.0)) throw Error("adam: learning rate must be > 0");
    AdamState opt;
    opt.learning_rate = learning_rate;
    opt.m = make_grads(net);
    opt.v = make_grads(net);
    return opt;
}

namespace {

void adam_update(double lr, double b1, double b2, double eps, double bc1, double bc2,
                 std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::span<double> p) {
    for (size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) throw Error("adam: non-finite gradient");
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        double m_hat = m[i] / bc1;
        double v_hat = v[i] / bc2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

} // namespace

void optimizer_step(AdamState& opt, Mlp& net, const MlpGrads& grads) {
    if (grads.weights.size() != net.weights.size()) {
        throw Error("adam: gradient shape does not match the network");
    }
    ++opt.step_count;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
    for (size_t l = 0; l < net.weights.size(); ++l) {
        adam_update(opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon, bc1, bc2,
                    grads.weights[l].a, opt.m.weights[l].a, opt.v.weights[l].a,
                    net.weights[l].a);
        adam_update(opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon, bc1, bc2,
                    grads.biases[l], opt.m.biases[l], opt.v.biases[l], net.biases[l]);
    }
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("checkpoint: truncated network block");
    return v;
}

} // namespace

void write_mlp(std::ostream& out, const Mlp& net) {
    write_raw(out, static_cast<uint32_t>(net.dims.size()));
    for (int d : net.dims) write_raw(out, static_cast<uint32_t>(d));
    for (size_t l = 0; l < net.weights.size(); ++l) {
        out.write(reinterpret_cast<const char*>(net.weights[l].a.data()),
                  static_cast<std::streamsize>(net.weights[l].a.size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(net.biases[l].data()),
                  static_cast<std::streamsize>(net.biases[l].size() * sizeof(double)));
    }
    if (!out) throw Error("checkpoint: write failed");
}

Mlp read_mlp(std::istream& in, Activation hidden, Activation output) {
    auto ndims = read_raw<uint32_t>(in);
    if (ndims < 2 || ndims > 64) throw Error("checkpoint: implausible layer count");
    std::vector<int> dims(ndims);
    for (auto& d : dims) {
        d = static_cast<int>(read_raw<uint32_t>(in));
        if (d < 1 || d > 1 << 20) throw Error("checkpoint: implausible layer dim");
    }
    Mlp net;
    net.dims = dims;
    net.hidden = hidden;
    net.output = output;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w(dims[l + 1], dims[l]);
        in.read(reinterpret_cast<char*>(w.a.data()),
                static_cast<std::streamsize>(w.a.size() * sizeof(double)));
        std::vector<double> b(dims[l + 1]);
        in.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw Error("checkpoint: truncated parameters");
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    return net;
}

} // namespace socbal
