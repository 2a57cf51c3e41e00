#pragma once

// Small fully connected networks with hand-written backward passes: the two
// domain projectors, the shared classifier and the discriminator, plus Adam
// and a JSON checkpoint format.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "abrsi/numerics.hpp"

namespace abrsi {

enum class Activation { leaky_relu, softmax, sigmoid, linear };

inline constexpr double kLeakySlope = 0.01;

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Row-wise softmax with max subtraction; rows sum to 1 for any finite logits.
void softmax_rows(Matrix& z);

struct Layer {
    Matrix weight;  // in x out, so a batch maps as X*W + b
    std::vector<double> bias;
    Activation activation = Activation::linear;
};

// Per-layer inputs, pre-activations and outputs of one forward pass.
struct GradTape {
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre;
    std::vector<Matrix> outputs;
    bool consumed = false;
};

struct MlpGrads {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;
};

struct Mlp {
    std::vector<Layer> layers;

    // dims has one more entry than activations. Weights and biases start
    // uniform on +-1/sqrt(fan_in).
    static Mlp build(const std::vector<std::size_t>& dims,
                     const std::vector<Activation>& activations, Rng& rng);

    std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
    std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

    Matrix forward(const Matrix& x, GradTape* tape = nullptr) const;

    // Consumes the tape, adds parameter gradients into `grads` and returns
    // dL/dx (empty when want_input_grad is false). `upstream` is dL/d(output).
    Matrix backward(GradTape& tape, const Matrix& upstream, MlpGrads& grads,
                    bool want_input_grad = true) const;

    MlpGrads zero_grads() const;
};

enum class DomainSide { source, target };

struct NetworkShape {
    std::size_t d_s = 0;
    std::size_t d_t = 0;
    std::size_t d_c = 32;
    std::size_t hidden = 128;
    std::size_t k = 0;
    std::size_t d_in = 0;  // discriminator input width
};

struct NetworkParams {
    Mlp e_s;  // d_S -> h -> d_C
    Mlp e_t;  // d_T -> h -> d_C
    Mlp c;    // d_C -> K, softmax
    Mlp d;    // d_in -> 1, sigmoid

    static NetworkParams build(const NetworkShape& shape, Rng& rng);

    const Mlp& projector(DomainSide side) const { return side == DomainSide::source ? e_s : e_t; }
};

struct ParamGrads {
    MlpGrads e_s, e_t, c, d;

    static ParamGrads zeros_like(const NetworkParams& p);
    MlpGrads& projector(DomainSide side) { return side == DomainSide::source ? e_s : e_t; }
};

Matrix project(const NetworkParams& params, const Matrix& x, DomainSide side,
               GradTape* tape = nullptr);
Matrix classify(const NetworkParams& params, const Matrix& features, GradTape* tape = nullptr);

// Named flat views over every tensor, in a fixed order shared by params and
// grads ("e_s.layer0.weight", "e_s.layer0.bias", ...).
struct TensorView {
    std::string name;
    std::span<double> values;
};
std::vector<TensorView> tensors(NetworkParams& p);
std::vector<TensorView> tensors(ParamGrads& g);
std::vector<TensorView> tensors(Mlp& m, const std::string& prefix);
std::vector<TensorView> tensors(MlpGrads& g, const std::string& prefix);

void scale(MlpGrads& g, double factor);
void add_into(MlpGrads& acc, const MlpGrads& g);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

// One Adam update over matching tensor lists. Throws std::domain_error
// naming the first tensor whose gradient is not finite, before touching
// any parameter.
void adam_step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
               AdamState& state, const AdamConfig& cfg);

struct Checkpoint {
    NetworkParams params;
    AdamState adam;
    std::string rng_state;
    std::size_t epoch = 0;
    std::map<std::string, Matrix> extra;  // trainer state such as the previous error knowledge
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace abrsi
