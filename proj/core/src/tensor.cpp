#include "cql/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cql/errors.hpp"

namespace cql {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged rows in Matrix::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void he_uniform_init(DenseLayer& layer, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_features()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weights.data()) w = dist(rng);
    std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
}

Gradients Gradients::zeros_like(std::span<const DenseLayer> layers) {
    Gradients g;
    g.layers.reserve(layers.size());
    for (const auto& l : layers) {
        g.layers.push_back({Matrix(l.out_features(), l.in_features()),
                            std::vector<double>(l.out_features(), 0.0)});
    }
    return g;
}

void Gradients::add_scaled(const Gradients& other, double scale) {
    if (other.layers.size() != layers.size()) {
        throw DimensionError("gradient layer count mismatch in add_scaled");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto dst = layers[i].weights.data();
        auto src = other.layers[i].weights.data();
        if (dst.size() != src.size() || layers[i].biases.size() != other.layers[i].biases.size()) {
            throw DimensionError("gradient shape mismatch at layer " + std::to_string(i));
        }
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
        for (std::size_t k = 0; k < layers[i].biases.size(); ++k) {
            layers[i].biases[k] += scale * other.layers[i].biases[k];
        }
    }
}

bool Gradients::all_finite() const noexcept {
    for (const auto& l : layers) {
        if (!l.weights.all_finite()) return false;
        for (double b : l.biases) {
            if (!std::isfinite(b)) return false;
        }
    }
    return true;
}

double Gradients::max_abs() const noexcept {
    double m = 0.0;
    for (const auto& l : layers) {
        for (double w : l.weights.data()) m = std::max(m, std::abs(w));
        for (double b : l.biases) m = std::max(m, std::abs(b));
    }
    return m;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_transposed: inner dimensions " + std::to_string(a.cols()) +
                             " and " + std::to_string(b.cols()) + " differ");
    }
    Matrix out(a.rows(), b.rows());
    const std::size_t k_dim = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ar = a.row(i).data();
        double* orow = out.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* br = b.row(j).data();
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            std::size_t k = 0;
            for (; k + 4 <= k_dim; k += 4) {
                acc[0] += ar[k] * br[k];
                acc[1] += ar[k + 1] * br[k + 1];
                acc[2] += ar[k + 2] * br[k + 2];
                acc[3] += ar[k + 3] * br[k + 3];
            }
            for (; k < k_dim; ++k) acc[0] += ar[k] * br[k];
            orow[j] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
        }
    }
    return out;
}

namespace {

inline double activate(Activation act, double z) noexcept {
    if (act == Activation::LeakyReLU) return z > 0.0 ? z : kLeakySlope * z;
    return z;
}

inline double activation_derivative(Activation act, double z) noexcept {
    if (act == Activation::LeakyReLU) return z > 0.0 ? 1.0 : kLeakySlope;
    return 1.0;
}

void check_layer_input(const DenseLayer& layer, std::size_t index, std::size_t width) {
    if (layer.weights.cols() != width) {
        throw DimensionError("layer " + std::to_string(index) + " expects " +
                             std::to_string(layer.weights.cols()) + " inputs, got " +
                             std::to_string(width));
    }
    if (layer.biases.size() != layer.weights.rows()) {
        throw DimensionError("layer " + std::to_string(index) + " bias length " +
                             std::to_string(layer.biases.size()) + " != " +
                             std::to_string(layer.weights.rows()));
    }
}

Matrix affine(const DenseLayer& layer, const Matrix& x) {
    Matrix z = matmul_transposed(x, layer.weights);
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto r = z.row(i);
        for (std::size_t o = 0; o < r.size(); ++o) r[o] += layer.biases[o];
    }
    return z;
}

Matrix apply_activation(Activation act, const Matrix& z) {
    Matrix y = z;
    if (act != Activation::Identity) {
        for (double& v : y.data()) v = activate(act, v);
    }
    return y;
}

}  // namespace

ForwardCache forward(std::span<const DenseLayer> layers, const Matrix& input) {
    ForwardCache cache;
    cache.inputs.reserve(layers.size());
    cache.pre_activations.reserve(layers.size());
    Matrix x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        check_layer_input(layers[i], i, x.cols());
        Matrix z = affine(layers[i], x);
        Matrix y = apply_activation(layers[i].activation, z);
        cache.shapes.emplace_back(layers[i].out_features(), layers[i].in_features());
        cache.inputs.push_back(std::move(x));
        cache.pre_activations.push_back(std::move(z));
        x = std::move(y);
    }
    if (!x.all_finite()) throw NumericError("forward pass produced a non-finite output");
    cache.output = std::move(x);
    return cache;
}

Matrix predict(std::span<const DenseLayer> layers, const Matrix& input) {
    Matrix x = input;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        check_layer_input(layers[i], i, x.cols());
        Matrix z = affine(layers[i], x);
        if (layers[i].activation != Activation::Identity) {
            for (double& v : z.data()) v = activate(layers[i].activation, v);
        }
        x = std::move(z);
    }
    if (!x.all_finite()) throw NumericError("forward pass produced a non-finite output");
    return x;
}

BackwardResult backward(std::span<const DenseLayer> layers, const ForwardCache& cache,
                        const Matrix& output_gradient) {
    if (cache.inputs.size() != layers.size() || cache.shapes.size() != layers.size()) {
        throw ConsistencyError("forward cache holds " + std::to_string(cache.inputs.size()) +
                               " layers, network has " + std::to_string(layers.size()));
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (cache.shapes[i] != std::pair{layers[i].out_features(), layers[i].in_features()}) {
            throw ConsistencyError("forward cache is stale at layer " + std::to_string(i));
        }
    }
    if (output_gradient.rows() != cache.output.rows() ||
        output_gradient.cols() != cache.output.cols()) {
        throw ConsistencyError("output gradient shape does not match cached output");
    }

    BackwardResult result{Gradients::zeros_like(layers), Matrix{}};
    Matrix delta = output_gradient;
    for (std::size_t li = layers.size(); li-- > 0;) {
        const DenseLayer& layer = layers[li];
        const Matrix& z = cache.pre_activations[li];
        const Matrix& x = cache.inputs[li];
        if (layer.activation != Activation::Identity) {
            auto d = delta.data();
            auto zd = z.data();
            for (std::size_t k = 0; k < d.size(); ++k) {
                d[k] *= activation_derivative(layer.activation, zd[k]);
            }
        }
        auto& g = result.grads.layers[li];
        const std::size_t out = layer.out_features();
        const std::size_t in = layer.in_features();
        for (std::size_t b = 0; b < delta.rows(); ++b) {
            const double* drow = delta.row(b).data();
            const double* xrow = x.row(b).data();
            for (std::size_t o = 0; o < out; ++o) {
                const double d = drow[o];
                if (d == 0.0) continue;
                g.biases[o] += d;
                double* grow = g.weights.row(o).data();
                for (std::size_t k = 0; k < in; ++k) grow[k] += d * xrow[k];
            }
        }
        Matrix dx(delta.rows(), in);
        for (std::size_t b = 0; b < delta.rows(); ++b) {
            const double* drow = delta.row(b).data();
            double* dxrow = dx.row(b).data();
            for (std::size_t o = 0; o < out; ++o) {
                const double d = drow[o];
                if (d == 0.0) continue;
                const double* wrow = layer.weights.row(o).data();
                for (std::size_t k = 0; k < in; ++k) dxrow[k] += d * wrow[k];
            }
        }
        delta = std::move(dx);
    }
    if (!result.grads.all_finite() || !delta.all_finite()) {
        throw NumericError("backward pass produced a non-finite gradient");
    }
    result.input_gradient = std::move(delta);
    return result;
}

AdamState AdamState::for_layers(std::span<const DenseLayer> layers, double beta1, double beta2,
                                double epsilon) {
    AdamState s;
    s.first_moment = Gradients::zeros_like(layers).layers;
    s.second_moment = Gradients::zeros_like(layers).layers;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    return s;
}

void adam_step(std::span<DenseLayer> params, const Gradients& grads, AdamState& state,
               double learning_rate) {
    if (grads.layers.size() != params.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw DimensionError("adam_step: parameter, gradient and state layer counts differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto n_w = params[i].weights.size();
        const auto n_b = params[i].biases.size();
        if (grads.layers[i].weights.size() != n_w || grads.layers[i].biases.size() != n_b ||
            state.first_moment[i].weights.size() != n_w ||
            state.second_moment[i].weights.size() != n_w ||
            state.first_moment[i].biases.size() != n_b ||
            state.second_moment[i].biases.size() != n_b) {
            throw DimensionError("adam_step: shape mismatch at layer " + std::to_string(i));
        }
    }
    if (!grads.all_finite()) {
        throw NumericError("adam_step: non-finite gradient entry at optimizer step " +
                           std::to_string(state.step + 1));
    }

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double eps = state.epsilon;

    auto update = [&](std::span<double> p, std::span<const double> g, std::span<double> m,
                      std::span<double> v) {
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + eps);
        }
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        update(params[i].weights.data(), grads.layers[i].weights.data(),
               state.first_moment[i].weights.data(), state.second_moment[i].weights.data());
        update(params[i].biases, grads.layers[i].biases, state.first_moment[i].biases,
               state.second_moment[i].biases);
    }
}

}  // namespace cql
