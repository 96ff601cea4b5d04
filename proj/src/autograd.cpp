#include "resobj/autograd.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "resobj/errors.hpp"

namespace resobj {

std::string_view op_name(OpKind kind) {
    switch (kind) {
        case OpKind::constant: return "constant";
        case OpKind::parameter: return "parameter";
        case OpKind::add: return "add";
        case OpKind::subtract: return "subtract";
        case OpKind::multiply: return "multiply";
        case OpKind::matmul: return "matmul";
        case OpKind::conv2d: return "conv2d";
        case OpKind::relu: return "relu";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::log: return "log";
        case OpKind::exp: return "exp";
        case OpKind::softplus: return "softplus";
        case OpKind::scale: return "scale";
        case OpKind::sum: return "sum";
        case OpKind::mean: return "mean";
        case OpKind::masked_select: return "masked_select";
        case OpKind::broadcast: return "broadcast";
        case OpKind::reshape: return "reshape";
        case OpKind::smooth_l1: return "smooth_l1";
        case OpKind::stop_gradient: return "stop_gradient";
    }
    return "unknown";
}

const Tensor& Var::value() const { return tape_->node(id_).value; }

namespace {

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b) {
    throw ContractViolation(std::string(op_name(kind)) + ": incompatible shapes " + shape_string(a) +
                            " and " + shape_string(b));
}

Tape& same_tape(Var a, Var b) {
    if (&a.tape() != &b.tape()) throw ContractViolation("operands live on different tapes");
    return a.tape();
}

double stable_sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double stable_softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Var elementwise_binary(OpKind kind, Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.shape != y.shape) shape_error(kind, x.shape, y.shape);
    TapeNode node;
    node.kind = kind;
    node.inputs = {a.id(), b.id()};
    node.value = Tensor(x.shape);
    auto& out = node.value.data;
    for (std::size_t i = 0; i < out.size(); ++i) {
        switch (kind) {
            case OpKind::add: out[i] = x[i] + y[i]; break;
            case OpKind::subtract: out[i] = x[i] - y[i]; break;
            default: out[i] = x[i] * y[i]; break;
        }
    }
    return tape.record(std::move(node));
}

template <typename Fn>
Var elementwise_unary(OpKind kind, Var a, Fn fn, double attr = 0.0) {
    TapeNode node;
    node.kind = kind;
    node.attr = attr;
    node.inputs = {a.id()};
    const Tensor& x = a.value();
    node.value = Tensor(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i) node.value[i] = fn(x[i]);
    return a.tape().record(std::move(node));
}

// Convolutions run on a zero-padded channel-major copy of the input. With a
// row stride of W+2, every 3x3 tap becomes a constant offset, so the inner
// loops sweep one contiguous span of H*(W+2) values; the two extra columns per
// row are scratch and never read back.
struct PaddedGrid {
    std::size_t h, w, stride, plane, span;
    PaddedGrid(std::size_t h_, std::size_t w_)
        : h(h_), w(w_), stride(w_ + 2), plane((h_ + 2) * (w_ + 2) + 2), span(h_ * (w_ + 2)) {}
    std::size_t tap(int ky, int kx) const { return static_cast<std::size_t>(ky) * stride + static_cast<std::size_t>(kx); }
    // Tap offsets in kernel order; `flipped` gives the transposed convolution.
    std::array<std::size_t, 9> taps(bool flipped) const {
        std::array<std::size_t, 9> o{};
        for (int t = 0; t < 9; ++t) o[static_cast<std::size_t>(t)] = flipped ? tap(2 - t / 3, 2 - t % 3) : tap(t / 3, t % 3);
        return o;
    }
};

// The nine weights w[co, :, :, ci].
std::array<double, 9> kernel_of(const Tensor& w, std::size_t co, std::size_t ci, std::size_t cin) {
    std::array<double, 9> k{};
    for (std::size_t t = 0; t < 9; ++t) k[t] = w[(co * 9 + t) * cin + ci];
    return k;
}

// [H,W,C] -> per-channel padded planes.
std::vector<double> pad_channels(const std::vector<double>& hwc, const PaddedGrid& g, std::size_t c) {
    std::vector<double> out(c * g.plane, 0.0);
    for (std::size_t y = 0; y < g.h; ++y)
        for (std::size_t x = 0; x < g.w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                out[ch * g.plane + (y + 1) * g.stride + x + 1] = hwc[(y * g.w + x) * c + ch];
    return out;
}

// [H,W,C] -> per-channel spans (output-side layout, scratch columns zero).
std::vector<double> to_spans(const std::vector<double>& hwc, const PaddedGrid& g, std::size_t c) {
    std::vector<double> out(c * g.span, 0.0);
    for (std::size_t y = 0; y < g.h; ++y)
        for (std::size_t x = 0; x < g.w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) out[ch * g.span + y * g.stride + x] = hwc[(y * g.w + x) * c + ch];
    return out;
}

// out[i] += sum over the nine taps of w[t] * in[i + off[t]], for i < span.
void accumulate_taps(double* out, const double* in, const double* w, const std::size_t* off, std::size_t span) {
    const double* a[9];
    for (int t = 0; t < 9; ++t) a[t] = in + off[t];
    for (std::size_t i = 0; i < span; ++i) {
        out[i] += w[0] * a[0][i] + w[1] * a[1][i] + w[2] * a[2][i] + w[3] * a[3][i] + w[4] * a[4][i] +
                  w[5] * a[5][i] + w[6] * a[6][i] + w[7] * a[7][i] + w[8] * a[8][i];
    }
}

// acc[t] += sum_i g[i] * in[i + off[t]]. Each tap is one pass with a fixed
// four-lane split, so the reduction order never depends on the compiler.
void correlate_taps(double* acc, const double* g, const double* in, const std::size_t* off, std::size_t span) {
    for (int t = 0; t < 9; ++t) {
        const double* a = in + off[t];
        double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
        std::size_t i = 0;
        for (; i + 4 <= span; i += 4) {
            l0 += g[i] * a[i];
            l1 += g[i + 1] * a[i + 1];
            l2 += g[i + 2] * a[i + 2];
            l3 += g[i + 3] * a[i + 3];
        }
        for (; i < span; ++i) l0 += g[i] * a[i];
        acc[t] += (l0 + l1) + (l2 + l3);
    }
}

}  // namespace

Var Tape::constant(Tensor value) {
    TapeNode node;
    node.kind = OpKind::constant;
    node.value = std::move(value);
    return record(std::move(node));
}

Var Tape::parameter(ParamId id, Tensor value) {
    if (params_.contains(id)) {
        throw ContractViolation("parameter " + std::to_string(id) + " bound twice on one tape");
    }
    TapeNode node;
    node.kind = OpKind::parameter;
    node.value = std::move(value);
    node.param = id;
    node.requires_grad = true;
    Var v = record(std::move(node));
    params_[id] = v.id();
    return v;
}

Var Tape::record(TapeNode node) {
    if (node.kind == OpKind::stop_gradient) {
        node.stop_gradient = true;
        node.requires_grad = false;
    } else if (node.kind != OpKind::parameter) {
        node.requires_grad = std::any_of(node.inputs.begin(), node.inputs.end(),
                                         [&](NodeId i) { return nodes_.at(i).requires_grad; });
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var add(Var a, Var b) { return elementwise_binary(OpKind::add, a, b); }
Var subtract(Var a, Var b) { return elementwise_binary(OpKind::subtract, a, b); }
Var multiply(Var a, Var b) { return elementwise_binary(OpKind::multiply, a, b); }

Var matmul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = a.value();
    const Tensor& y = b.value();
    if (x.shape.size() != 2 || y.shape.size() != 2 || x.shape[1] != y.shape[0]) {
        shape_error(OpKind::matmul, x.shape, y.shape);
    }
    const std::size_t m = x.shape[0], k = x.shape[1], n = y.shape[1];
    TapeNode node;
    node.kind = OpKind::matmul;
    node.inputs = {a.id(), b.id()};
    node.value = Tensor(Shape{m, n});
    double* out = node.value.data.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            const double* yr = y.data.data() + p * n;
            double* o = out + i * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += xv * yr[j];
        }
    }
    return tape.record(std::move(node));
}

Var conv2d(Var input, Var weight) {
    Tape& tape = same_tape(input, weight);
    const Tensor& x = input.value();
    const Tensor& w = weight.value();
    if (x.shape.size() != 3 || w.shape.size() != 4 || w.shape[1] != 3 || w.shape[2] != 3 ||
        w.shape[3] != x.shape[2]) {
        shape_error(OpKind::conv2d, x.shape, w.shape);
    }
    const std::size_t h = x.shape[0], wd = x.shape[1], cout = w.shape[0];
    TapeNode node;
    node.kind = OpKind::conv2d;
    node.inputs = {input.id(), weight.id()};
    const std::size_t cin = x.shape[2];
    const PaddedGrid grid(h, wd);
    node.saved = pad_channels(x.data, grid, cin);
    std::vector<double> out_s(cout * grid.span, 0.0);
    const auto off = grid.taps(false);
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const auto k = kernel_of(w, co, ci, cin);
            accumulate_taps(out_s.data() + co * grid.span, node.saved.data() + ci * grid.plane, k.data(), off.data(),
                            grid.span);
        }
    }
    node.value = Tensor(Shape{h, wd, cout});
    double* out = node.value.data.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < wd; ++xx)
            for (std::size_t co = 0; co < cout; ++co)
                out[(y * wd + xx) * cout + co] = out_s[co * grid.span + y * grid.stride + xx];
    return tape.record(std::move(node));
}

Var relu(Var x) {
    return elementwise_unary(OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Var sigmoid(Var x) { return elementwise_unary(OpKind::sigmoid, x, stable_sigmoid); }

Var log(Var x) {
    for (double v : x.value().data) {
        if (!(v > 0.0)) {
            throw DomainError("log: non-positive input " + std::to_string(v));
        }
    }
    return elementwise_unary(OpKind::log, x, [](double v) { return std::log(v); });
}

Var exp(Var x) {
    return elementwise_unary(OpKind::exp, x, [](double v) { return std::exp(v); });
}

Var softplus(Var x) { return elementwise_unary(OpKind::softplus, x, stable_softplus); }

Var scale(Var x, double factor) {
    return elementwise_unary(OpKind::scale, x, [factor](double v) { return v * factor; }, factor);
}

Var sum(Var x) {
    TapeNode node;
    node.kind = OpKind::sum;
    node.inputs = {x.id()};
    double acc = 0.0;
    for (double v : x.value().data) acc += v;
    node.value = Tensor::scalar(acc);
    return x.tape().record(std::move(node));
}

Var mean(Var x) {
    const std::size_t n = x.value().numel();
    if (n == 0) throw ContractViolation("mean: empty tensor");
    TapeNode node;
    node.kind = OpKind::mean;
    node.inputs = {x.id()};
    double acc = 0.0;
    for (double v : x.value().data) acc += v;
    node.value = Tensor::scalar(acc / static_cast<double>(n));
    return x.tape().record(std::move(node));
}

Var masked_select(Var x, const std::vector<bool>& mask) {
    const Tensor& in = x.value();
    if (mask.size() != in.numel()) {
        shape_error(OpKind::masked_select, in.shape, Shape{mask.size()});
    }
    TapeNode node;
    node.kind = OpKind::masked_select;
    node.inputs = {x.id()};
    std::vector<double> picked;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            node.indices.push_back(i);
            picked.push_back(in[i]);
        }
    }
    const std::size_t n = picked.size();
    node.value = Tensor(Shape{n}, std::move(picked));
    return x.tape().record(std::move(node));
}

Var broadcast(Var x, const Shape& shape) {
    const Tensor& in = x.value();
    const bool suffix = in.shape.size() <= shape.size() &&
                        std::equal(in.shape.rbegin(), in.shape.rend(), shape.rbegin());
    if (!suffix) shape_error(OpKind::broadcast, in.shape, shape);
    TapeNode node;
    node.kind = OpKind::broadcast;
    node.inputs = {x.id()};
    node.value = Tensor(shape);
    const std::size_t inner = in.numel();
    for (std::size_t i = 0; i < node.value.numel(); ++i) node.value[i] = in[i % inner];
    return x.tape().record(std::move(node));
}

Var reshape(Var x, const Shape& shape) {
    const Tensor& in = x.value();
    if (shape_numel(shape) != in.numel()) shape_error(OpKind::reshape, in.shape, shape);
    TapeNode node;
    node.kind = OpKind::reshape;
    node.inputs = {x.id()};
    node.value = Tensor(shape, in.data);
    return x.tape().record(std::move(node));
}

Var smooth_l1(Var x, double beta) {
    if (!(beta > 0.0)) throw ContractViolation("smooth_l1: beta must be positive");
    return elementwise_unary(
        OpKind::smooth_l1, x,
        [beta](double v) {
            const double a = std::abs(v);
            return a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
        },
        beta);
}

Var stop_gradient(Var x) {
    TapeNode node;
    node.kind = OpKind::stop_gradient;
    node.inputs = {x.id()};
    node.value = x.value();
    return x.tape().record(std::move(node));
}

GradMap Tape::backward(Var loss) const {
    if (&loss.tape() != this) throw ContractViolation("backward: loss lives on another tape");
    const TapeNode& root = nodes_.at(loss.id());
    if (!root.value.is_scalar()) {
        throw ContractViolation("backward: loss must be scalar, got shape " +
                                shape_string(root.value.shape));
    }
    std::vector<std::vector<double>> grads(nodes_.size());
    grads[loss.id()] = {1.0};

    auto accumulate = [&](NodeId id) -> std::vector<double>* {
        const TapeNode& n = nodes_[id];
        if (!n.requires_grad) return nullptr;
        auto& g = grads[id];
        if (g.empty()) g.assign(n.value.numel(), 0.0);
        return &g;
    };

    for (NodeId id = loss.id() + 1; id-- > 0;) {
        const TapeNode& n = nodes_[id];
        const auto& g = grads[id];
        if (g.empty() || n.stop_gradient || n.inputs.empty()) continue;
        const Tensor& out = n.value;
        const std::size_t count = out.numel();
        switch (n.kind) {
            case OpKind::add:
            case OpKind::subtract: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i];
                }
                if (auto* gb = accumulate(n.inputs[1])) {
                    const double s = n.kind == OpKind::add ? 1.0 : -1.0;
                    for (std::size_t i = 0; i < count; ++i) (*gb)[i] += s * g[i];
                }
                break;
            }
            case OpKind::multiply: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i] * b[i];
                }
                if (auto* gb = accumulate(n.inputs[1])) {
                    for (std::size_t i = 0; i < count; ++i) (*gb)[i] += g[i] * a[i];
                }
                break;
            }
            case OpKind::matmul: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                const Tensor& b = nodes_[n.inputs[1]].value;
                const std::size_t m = a.shape[0], k = a.shape[1], cols = b.shape[1];
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            double acc = 0.0;
                            for (std::size_t j = 0; j < cols; ++j) acc += g[i * cols + j] * b[p * cols + j];
                            (*ga)[i * k + p] += acc;
                        }
                    }
                }
                if (auto* gb = accumulate(n.inputs[1])) {
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) {
                            const double av = a[i * k + p];
                            double* dst = gb->data() + p * cols;
                            const double* gr = g.data() + i * cols;
                            for (std::size_t j = 0; j < cols; ++j) dst[j] += av * gr[j];
                        }
                    }
                }
                break;
            }
            case OpKind::conv2d: {
                const Tensor& in = nodes_[n.inputs[0]].value;
                const Tensor& w = nodes_[n.inputs[1]].value;
                const std::size_t h = in.shape[0], wd = in.shape[1], cin = in.shape[2];
                const std::size_t cout = w.shape[0];
                const PaddedGrid grid(h, wd);
                if (auto* gw = accumulate(n.inputs[1])) {
                    const std::vector<double> g_s = to_spans(g, grid, cout);
                    const auto off = grid.taps(false);
                    std::array<double, 9> acc{};
                    for (std::size_t co = 0; co < cout; ++co) {
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            acc.fill(0.0);
                            correlate_taps(acc.data(), g_s.data() + co * grid.span, n.saved.data() + ci * grid.plane,
                                           off.data(), grid.span);
                            for (std::size_t t = 0; t < 9; ++t) (*gw)[(co * 9 + t) * cin + ci] += acc[t];
                        }
                    }
                }
                if (auto* gi = accumulate(n.inputs[0])) {
                    // Transposed convolution: padded output gradient, flipped taps.
                    const std::vector<double> g_p = pad_channels(g, grid, cout);
                    const auto off = grid.taps(true);
                    std::vector<double> gin_s(cin * grid.span, 0.0);
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        for (std::size_t co = 0; co < cout; ++co) {
                            const auto k = kernel_of(w, co, ci, cin);
                            accumulate_taps(gin_s.data() + ci * grid.span, g_p.data() + co * grid.plane, k.data(),
                                            off.data(), grid.span);
                        }
                    }
                    for (std::size_t y = 0; y < h; ++y)
                        for (std::size_t xx = 0; xx < wd; ++xx)
                            for (std::size_t ci = 0; ci < cin; ++ci)
                                (*gi)[(y * wd + xx) * cin + ci] += gin_s[ci * grid.span + y * grid.stride + xx];
                }
                break;
            }
            case OpKind::relu: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) {
                        if (out[i] > 0.0) (*ga)[i] += g[i];
                    }
                }
                break;
            }
            case OpKind::sigmoid: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i] * out[i] * (1.0 - out[i]);
                }
                break;
            }
            case OpKind::log: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i] / a[i];
                }
                break;
            }
            case OpKind::exp: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i] * out[i];
                }
                break;
            }
            case OpKind::softplus: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i] * stable_sigmoid(a[i]);
                }
                break;
            }
            case OpKind::scale: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i] * n.attr;
                }
                break;
            }
            case OpKind::sum:
            case OpKind::mean: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    const double s = n.kind == OpKind::sum ? g[0] : g[0] / static_cast<double>(ga->size());
                    for (double& v : *ga) v += s;
                }
                break;
            }
            case OpKind::masked_select: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < n.indices.size(); ++i) (*ga)[n.indices[i]] += g[i];
                }
                break;
            }
            case OpKind::broadcast: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    const std::size_t inner = ga->size();
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i % inner] += g[i];
                }
                break;
            }
            case OpKind::reshape: {
                if (auto* ga = accumulate(n.inputs[0])) {
                    for (std::size_t i = 0; i < count; ++i) (*ga)[i] += g[i];
                }
                break;
            }
            case OpKind::smooth_l1: {
                const Tensor& a = nodes_[n.inputs[0]].value;
                if (auto* ga = accumulate(n.inputs[0])) {
                    const double beta = n.attr;
                    for (std::size_t i = 0; i < count; ++i) {
                        const double v = a[i];
                        const double d = std::abs(v) < beta ? v / beta : (v > 0 ? 1.0 : -1.0);
                        (*ga)[i] += g[i] * d;
                    }
                }
                break;
            }
            case OpKind::constant:
            case OpKind::parameter:
            case OpKind::stop_gradient:
                break;
        }
    }

    GradMap result;
    for (const auto& [param, node_id] : params_) {
        const TapeNode& n = nodes_[node_id];
        if (grads[node_id].empty()) {
            result.emplace(param, Tensor(n.value.shape));
        } else {
            result.emplace(param, Tensor(n.value.shape, std::move(grads[node_id])));
        }
    }
    return result;
}

GradCheckResult finite_diff_check(const ScalarGraph& f, const std::vector<Tensor>& params,
                                  double epsilon, std::span<const std::size_t> subset) {
    if (!(epsilon > 0.0)) throw ContractViolation("finite_diff_check: epsilon must be positive");

    auto evaluate = [&](const std::vector<Tensor>& values) {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) vars.push_back(tape.parameter(i, values[i]));
        const double v = f(tape, vars).value().item();
        if (!std::isfinite(v)) throw NumericError("finite_diff_check: function value is not finite");
        return v;
    };

    GradMap analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.parameter(i, params[i]));
        Var out = f(tape, vars);
        if (!std::isfinite(out.value().item())) {
            throw NumericError("finite_diff_check: function value is not finite");
        }
        analytic = tape.backward(out);
    }

    std::vector<std::size_t> which(subset.begin(), subset.end());
    if (which.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) which.push_back(i);
    }

    GradCheckResult result;
    std::vector<Tensor> probe = params;
    for (std::size_t p : which) {
        for (std::size_t i = 0; i < params.at(p).numel(); ++i) {
            const double orig = params[p][i];
            probe[p][i] = orig + epsilon;
            const double up = evaluate(probe);
            probe[p][i] = orig - epsilon;
            const double down = evaluate(probe);
            probe[p][i] = orig;
            const double numeric = (up - down) / (2.0 * epsilon);
            const double err = std::abs(analytic.at(p)[i] - numeric) / std::max(1.0, std::abs(numeric));
            ++result.checked;
            if (err > result.max_relative_error) {
                result.max_relative_error = err;
                result.worst_param = p;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace resobj
