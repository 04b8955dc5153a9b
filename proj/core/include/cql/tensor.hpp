#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cql/rng.hpp"

namespace cql {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    /// Builds a matrix from nested initializer rows; all rows must share a width.
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    bool all_finite() const noexcept;
    void fill(double v);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

enum class Activation : std::uint8_t { Identity = 0, LeakyReLU = 1 };

inline constexpr double kLeakySlope = 0.01;

struct DenseLayer {
    Matrix weights;               // out x in
    std::vector<double> biases;   // out
    Activation activation = Activation::Identity;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Activation act)
        : weights(out, in), biases(out, 0.0), activation(act) {}

    std::size_t in_features() const noexcept { return weights.cols(); }
    std::size_t out_features() const noexcept { return weights.rows(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// He-uniform weights (bound sqrt(6 / fan_in)), zero biases.
void he_uniform_init(DenseLayer& layer, Rng& rng);

struct LayerGradient {
    Matrix weights;
    std::vector<double> biases;
};

struct Gradients {
    std::vector<LayerGradient> layers;

    /// Zero gradients shaped like the given layers.
    static Gradients zeros_like(std::span<const DenseLayer> layers);

    void add_scaled(const Gradients& other, double scale);
    bool all_finite() const noexcept;
    double max_abs() const noexcept;
};

/// Intermediate values kept by forward() for a later backward() call.
struct ForwardCache {
    std::vector<Matrix> inputs;           // input to layer i
    std::vector<Matrix> pre_activations;  // W x + b of layer i
    Matrix output;                        // post-activation of the last layer
    std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (out, in) per layer
};

ForwardCache forward(std::span<const DenseLayer> layers, const Matrix& input);

/// Output only; skips retaining the cache.
Matrix predict(std::span<const DenseLayer> layers, const Matrix& input);

struct BackwardResult {
    Gradients grads;
    Matrix input_gradient;
};

BackwardResult backward(std::span<const DenseLayer> layers, const ForwardCache& cache,
                        const Matrix& output_gradient);

struct AdamState {
    std::vector<LayerGradient> first_moment;
    std::vector<LayerGradient> second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_layers(std::span<const DenseLayer> layers, double beta1 = 0.9,
                                double beta2 = 0.999, double epsilon = 1e-8);
};

/// One bias-corrected Adam update in place. Throws NumericError on any
/// non-finite gradient entry, leaving params and state untouched.
void adam_step(std::span<DenseLayer> params, const Gradients& grads, AdamState& state,
               double learning_rate);

// C = A * B^T, used for the (batch x in) * (out x in)^T products.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);

}  // namespace cql
