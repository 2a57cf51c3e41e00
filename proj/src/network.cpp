#include "abrsi/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace abrsi {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::softmax: return "softmax";
        case Activation::sigmoid: return "sigmoid";
        case Activation::linear: return "linear";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    for (auto a : {Activation::leaky_relu, Activation::softmax, Activation::sigmoid,
                   Activation::linear})
        if (to_string(a) == s) return a;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

void softmax_rows(Matrix& z) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto row = z.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
}

namespace {

void activate(Matrix& z, Activation a) {
    switch (a) {
        case Activation::leaky_relu:
            for (double& v : z.data())
                if (v < 0.0) v *= kLeakySlope;
            break;
        case Activation::softmax: softmax_rows(z); break;
        case Activation::sigmoid:
            for (double& v : z.data())
                v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
            break;
        case Activation::linear: break;
    }
}

// dL/dz from dL/d(output) for one layer.
Matrix activation_backward(const Matrix& upstream, const Matrix& pre, const Matrix& out,
                           Activation a) {
    Matrix dz = upstream;
    switch (a) {
        case Activation::leaky_relu:
            for (std::size_t i = 0; i < dz.size(); ++i)
                if (pre.data()[i] < 0.0) dz.data()[i] *= kLeakySlope;
            break;
        case Activation::softmax:
            for (std::size_t r = 0; r < dz.rows(); ++r) {
                const auto p = out.row(r);
                auto g = dz.row(r);
                const double gp = dot(g, p);
                for (std::size_t j = 0; j < g.size(); ++j) g[j] = p[j] * (g[j] - gp);
            }
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < dz.size(); ++i) {
                const double s = out.data()[i];
                dz.data()[i] *= s * (1.0 - s);
            }
            break;
        case Activation::linear: break;
    }
    return dz;
}

}  // namespace

Mlp Mlp::build(const std::vector<std::size_t>& dims, const std::vector<Activation>& activations,
               Rng& rng) {
    if (dims.size() != activations.size() + 1 || activations.empty())
        throw std::invalid_argument("Mlp::build: need one more dimension than activations");
    Mlp m;
    for (std::size_t l = 0; l < activations.size(); ++l) {
        if (dims[l] == 0 || dims[l + 1] == 0)
            throw std::invalid_argument("Mlp::build: zero-width layer");
        Layer layer;
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        layer.weight = Matrix(dims[l], dims[l + 1]);
        for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
        layer.bias.resize(dims[l + 1]);
        for (double& b : layer.bias) b = rng.uniform(-bound, bound);
        layer.activation = activations[l];
        m.layers.push_back(std::move(layer));
    }
    return m;
}

Matrix Mlp::forward(const Matrix& x, GradTape* tape) const {
    if (x.cols() != in_dim())
        throw DimensionError("Mlp::forward: input " + x.shape() + " does not match in_dim " +
                             std::to_string(in_dim()));
    if (tape) *tape = GradTape{};
    Matrix h = x;
    for (const auto& layer : layers) {
        Matrix z = matmul(h, layer.weight);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            auto row = z.row(r);
            for (std::size_t j = 0; j < row.size(); ++j) row[j] += layer.bias[j];
        }
        if (tape) {
            tape->inputs.push_back(std::move(h));
            tape->pre.push_back(z);
        }
        activate(z, layer.activation);
        if (tape) tape->outputs.push_back(z);
        h = std::move(z);
    }
    return h;
}

Matrix Mlp::backward(GradTape& tape, const Matrix& upstream, MlpGrads& grads,
                     bool want_input_grad) const {
    if (tape.consumed) throw std::logic_error("Mlp::backward: tape already consumed");
    if (tape.outputs.size() != layers.size())
        throw DimensionError("Mlp::backward: tape has " + std::to_string(tape.outputs.size()) +
                             " layers, network has " + std::to_string(layers.size()));
    if (grads.weight.size() != layers.size())
        throw DimensionError("Mlp::backward: gradient buffer does not match network");
    if (upstream.rows() != tape.outputs.back().rows() ||
        upstream.cols() != tape.outputs.back().cols())
        throw DimensionError("Mlp::backward: upstream " + upstream.shape() +
                             " does not match output " + tape.outputs.back().shape());
    tape.consumed = true;
    Matrix g = upstream;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const Matrix dz = activation_backward(g, tape.pre[l], tape.outputs[l], layers[l].activation);
        const Matrix dw = matmul_tn(tape.inputs[l], dz);
        auto& gw = grads.weight[l].data();
        for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += dw.data()[i];
        auto& gb = grads.bias[l];
        for (std::size_t r = 0; r < dz.rows(); ++r) {
            const auto row = dz.row(r);
            for (std::size_t j = 0; j < row.size(); ++j) gb[j] += row[j];
        }
        if (l > 0 || want_input_grad) g = matmul_nt(dz, layers[l].weight);
    }
    return want_input_grad ? g : Matrix{};
}

MlpGrads Mlp::zero_grads() const {
    MlpGrads g;
    for (const auto& layer : layers) {
        g.weight.emplace_back(layer.weight.rows(), layer.weight.cols());
        g.bias.emplace_back(layer.bias.size(), 0.0);
    }
    return g;
}

NetworkParams NetworkParams::build(const NetworkShape& s, Rng& rng) {
    if (s.k < 2) throw std::invalid_argument("NetworkParams: need at least two categories");
    if (s.d_in == 0) throw std::invalid_argument("NetworkParams: discriminator input width is 0");
    NetworkParams p;
    p.e_s = Mlp::build({s.d_s, s.hidden, s.d_c}, {Activation::leaky_relu, Activation::linear}, rng);
    p.e_t = Mlp::build({s.d_t, s.hidden, s.d_c}, {Activation::leaky_relu, Activation::linear}, rng);
    p.c = Mlp::build({s.d_c, s.k}, {Activation::softmax}, rng);
    p.d = Mlp::build({s.d_in, 1}, {Activation::sigmoid}, rng);
    return p;
}

ParamGrads ParamGrads::zeros_like(const NetworkParams& p) {
    return {p.e_s.zero_grads(), p.e_t.zero_grads(), p.c.zero_grads(), p.d.zero_grads()};
}

Matrix project(const NetworkParams& params, const Matrix& x, DomainSide side, GradTape* tape) {
    return params.projector(side).forward(x, tape);
}

Matrix classify(const NetworkParams& params, const Matrix& features, GradTape* tape) {
    return params.c.forward(features, tape);
}

std::vector<TensorView> tensors(Mlp& m, const std::string& prefix) {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        const std::string base = prefix + ".layer" + std::to_string(l);
        out.push_back({base + ".weight", m.layers[l].weight.data()});
        out.push_back({base + ".bias", m.layers[l].bias});
    }
    return out;
}

std::vector<TensorView> tensors(MlpGrads& g, const std::string& prefix) {
    std::vector<TensorView> out;
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
        const std::string base = prefix + ".layer" + std::to_string(l);
        out.push_back({base + ".weight", g.weight[l].data()});
        out.push_back({base + ".bias", g.bias[l]});
    }
    return out;
}

std::vector<TensorView> tensors(NetworkParams& p) {
    std::vector<TensorView> out;
    for (auto* part : {&p.e_s, &p.e_t, &p.c, &p.d}) {
        const char* name = part == &p.e_s ? "e_s" : part == &p.e_t ? "e_t" : part == &p.c ? "c" : "d";
        auto v = tensors(*part, name);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

std::vector<TensorView> tensors(ParamGrads& g) {
    std::vector<TensorView> out;
    for (auto* part : {&g.e_s, &g.e_t, &g.c, &g.d}) {
        const char* name = part == &g.e_s ? "e_s" : part == &g.e_t ? "e_t" : part == &g.c ? "c" : "d";
        auto v = tensors(*part, name);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

void scale(MlpGrads& g, double factor) {
    for (auto& w : g.weight)
        for (double& x : w.data()) x *= factor;
    for (auto& b : g.bias)
        for (double& x : b) x *= factor;
}

void add_into(MlpGrads& acc, const MlpGrads& g) {
    if (acc.weight.size() != g.weight.size())
        throw DimensionError("add_into: gradient buffers differ in layer count");
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
        auto& a = acc.weight[l].data();
        const auto& b = g.weight[l].data();
        if (a.size() != b.size()) throw DimensionError("add_into: weight shape mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        for (std::size_t i = 0; i < g.bias[l].size(); ++i) acc.bias[l][i] += g.bias[l][i];
    }
}

void adam_step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " tensors but " +
                             std::to_string(grads.size()) + " gradients");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].values.size() != grads[t].values.size())
            throw DimensionError("adam_step: shape mismatch for " + params[t].name);
        for (double g : grads[t].values)
            if (!std::isfinite(g))
                throw std::domain_error("non-finite gradient in " + grads[t].name);
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.values.size(), 0.0);
            state.v.emplace_back(p.values.size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw DimensionError("adam_step: optimizer state does not match parameters");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].values;
        const auto g = grads[k].values;
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints. nlohmann writes doubles in shortest round-trip form, so a
// save/load cycle is bit-exact.
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

json mlp_json(const Mlp& m) {
    json layers = json::array();
    for (const auto& l : m.layers)
        layers.push_back({{"activation", to_string(l.activation)},
                          {"weight", matrix_json(l.weight)},
                          {"bias", l.bias}});
    return layers;
}

Mlp mlp_from(const json& j) {
    Mlp m;
    for (const auto& jl : j) {
        Layer l;
        l.activation = activation_from_string(jl.at("activation").get<std::string>());
        l.weight = matrix_from(jl.at("weight"));
        l.bias = jl.at("bias").get<std::vector<double>>();
        if (l.bias.size() != l.weight.cols())
            throw std::runtime_error("checkpoint: bias length does not match weight columns");
        if (!m.layers.empty() && m.layers.back().weight.cols() != l.weight.rows())
            throw std::runtime_error("checkpoint: layer dimensions do not chain");
        m.layers.push_back(std::move(l));
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    json j;
    j["format"] = "abrsi-checkpoint-1";
    j["epoch"] = ck.epoch;
    j["rng"] = ck.rng_state;
    j["params"] = {{"e_s", mlp_json(ck.params.e_s)},
                   {"e_t", mlp_json(ck.params.e_t)},
                   {"c", mlp_json(ck.params.c)},
                   {"d", mlp_json(ck.params.d)}};
    j["adam"] = {{"step", ck.adam.step}, {"m", ck.adam.m}, {"v", ck.adam.v}};
    json extra = json::object();
    for (const auto& [name, m] : ck.extra) extra[name] = matrix_json(m);
    j["extra"] = extra;
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
        out << j.dump();
        if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
    json j;
    try {
        in >> j;
        if (j.value("format", "") != "abrsi-checkpoint-1")
            throw std::runtime_error("unrecognised checkpoint format in " + path.string());
        Checkpoint ck;
        ck.epoch = j.at("epoch").get<std::size_t>();
        ck.rng_state = j.at("rng").get<std::string>();
        const auto& p = j.at("params");
        ck.params.e_s = mlp_from(p.at("e_s"));
        ck.params.e_t = mlp_from(p.at("e_t"));
        ck.params.c = mlp_from(p.at("c"));
        ck.params.d = mlp_from(p.at("d"));
        ck.adam.step = j.at("adam").at("step").get<std::uint64_t>();
        ck.adam.m = j.at("adam").at("m").get<std::vector<std::vector<double>>>();
        ck.adam.v = j.at("adam").at("v").get<std::vector<std::vector<double>>>();
        for (const auto& [name, m] : j.at("extra").items()) ck.extra[name] = matrix_from(m);
        return ck;
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed checkpoint " + path.string() + ": " + e.what());
    }
}

}  // namespace abrsi
