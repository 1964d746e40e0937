#include "spader/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace spader::ad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Grow-only uninitialized buffer, reused across calls on the same thread.
class Scratch {
public:
    double* get(std::size_t n) {
        if (n > size_) {
            data_.reset(new double[n]);
            size_ = n;
        }
        return data_.get();
    }

private:
    std::unique_ptr<double[]> data_;
    std::size_t size_ = 0;
};

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": operand shapes differ, " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
    }
}

// Fixed-order dot product. The grouping depends only on n, never on pointer
// alignment or batch layout, so results are reproducible bit for bit.
double dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
    }
    double tail = 0.0;
    for (; j < n; ++j) tail += a[j] * b[j];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

struct ConvGeometry {
    std::size_t batch, in_ch, height, width;
    std::size_t out_ch, kh, kw, stride, pad;
    std::size_t out_h, out_w;

    std::size_t patch() const { return in_ch * kh * kw; }
    std::size_t out_plane() const { return out_h * out_w; }
    std::size_t in_plane() const { return height * width; }

    // Output rows per im2col tile; keeps the column buffer cache-resident.
    // Tiling depends only on the layer geometry, so every sample is computed
    // identically regardless of how many samples share the batch.
    std::size_t tile_rows() const {
        const std::size_t budget = std::size_t{1} << 16;
        return std::clamp<std::size_t>(budget / std::max<std::size_t>(1, patch() * out_w), 1, out_h);
    }

    // Output columns [lo, hi) whose input column index lands inside the image.
    std::pair<std::size_t, std::size_t> valid_cols(std::size_t kx) const {
        std::size_t lo = 0;
        while (lo < out_w && lo * stride + kx < pad) ++lo;
        std::size_t hi = out_w;
        while (hi > lo && (hi - 1) * stride + kx - pad >= width) --hi;
        return {lo, hi};
    }
};

// cols is [patch, rows*out_w] for output rows [oy0, oy0+rows) of one sample plane set.
void im2col(const ConvGeometry& g, const double* sample, std::size_t oy0, std::size_t rows, double* cols) {
    const std::size_t ncols = rows * g.out_w;
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        const double* plane = sample + c * g.in_plane();
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                double* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
                const auto [lo, hi] = g.valid_cols(kx);
                for (std::size_t r = 0; r < rows; ++r) {
                    double* dst = row + r * g.out_w;
                    const long iy = static_cast<long>((oy0 + r) * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) {
                        std::fill(dst, dst + g.out_w, 0.0);
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(iy) * g.width + kx - g.pad;
                    // Borders are a column or two wide; plain stores beat memset calls here.
                    for (std::size_t ox = 0; ox < lo; ++ox) dst[ox] = 0.0;
                    if (g.stride == 1) {
                        std::copy(src + lo, src + hi, dst + lo);
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
                    }
                    for (std::size_t ox = hi; ox < g.out_w; ++ox) dst[ox] = 0.0;
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, const double* cols, std::size_t oy0, std::size_t rows,
            double* sample_grad) {
    const std::size_t ncols = rows * g.out_w;
    for (std::size_t c = 0; c < g.in_ch; ++c) {
        double* plane = sample_grad + c * g.in_plane();
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const double* row = cols + ((c * g.kh + ky) * g.kw + kx) * ncols;
                const auto [lo, hi] = g.valid_cols(kx);
                for (std::size_t r = 0; r < rows; ++r) {
                    const long iy = static_cast<long>((oy0 + r) * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    const double* src = row + r * g.out_w;
                    double* dst = plane + static_cast<std::size_t>(iy) * g.width + kx - g.pad;
                    if (g.stride == 1) {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
                    } else {
                        for (std::size_t ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
                    }
                }
            }
        }
    }
}

template <class Fn, class Deriv>
Var unary(Var x, Fn fn, Deriv deriv) {
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fn(in[i]);
    return x.tape()->record(std::move(out), {x}, [deriv](const GradContext& ctx) {
        const Tensor& in = *ctx.in_values[0];
        Tensor& g = *ctx.in_grads[0];
        for (std::size_t i = 0; i < in.size(); ++i) {
            g[i] += ctx.out_grad[i] * deriv(in[i], ctx.out_value[i]);
        }
    });
}

Tape& same_tape(Var a, Var b, const char* op) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
        throw TapeError(std::string(op) + ": operands are not on the same tape");
    }
    return *a.tape();
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape
// ---------------------------------------------------------------------------

const Tensor& Var::value() const {
    if (tape_ == nullptr) throw TapeError("value() on a detached Var");
    return tape_->value(id_);
}

const Tensor* Var::grad() const {
    if (tape_ == nullptr) return nullptr;
    return tape_->grad(id_);
}

const Tensor& Tape::value(std::size_t id) const { return nodes_.at(id).value(); }

const Tensor* Tape::grad(std::size_t id) const {
    const Node& node = nodes_.at(id);
    return node.has_grad ? &node.grad : nullptr;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.owned = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::borrow(const Tensor& value, bool requires_grad) {
    Node node;
    node.borrowed = &value;
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
    Node node;
    node.owned = std::move(value);
    node.rule = std::move(rule);
    node.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        check_owner(in, "record");
        node.inputs.push_back(in.id());
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v, const char* what) const {
    if (v.tape() != this || v.id() >= nodes_.size()) {
        throw TapeError(std::string(what) + ": tensor is not recorded on this tape");
    }
}

void Tape::zero_grad() {
    for (Node& node : nodes_) {
        node.grad = Tensor();
        node.has_grad = false;
    }
}

void Tape::sweep(std::size_t output, const std::vector<char>& active, std::size_t floor) {
    Node& out = nodes_[output];
    out.grad = Tensor(out.value().shape(), 1.0);
    out.has_grad = true;

    std::vector<const Tensor*> in_values;
    std::vector<Tensor*> in_grads;
    for (std::size_t i = output + 1; i-- > floor;) {
        Node& node = nodes_[i];
        if (!active[i] || !node.has_grad || !node.rule) continue;
        in_values.clear();
        in_grads.clear();
        bool any = false;
        for (std::size_t in : node.inputs) {
            Node& src = nodes_[in];
            in_values.push_back(&src.value());
            if (in >= floor && active[in]) {
                if (!src.has_grad) {
                    src.grad = Tensor(src.value().shape(), 0.0);
                    src.has_grad = true;
                }
                in_grads.push_back(&src.grad);
                any = true;
            } else {
                in_grads.push_back(nullptr);
            }
        }
        if (!any) continue;
        node.rule(GradContext{node.value(), node.grad, in_values, in_grads});
    }
}

void Tape::backward(Var output) {
    check_owner(output, "backward");
    if (output.value().size() != 1) {
        throw TapeError("backward: output must be a scalar, got shape " + to_string(output.shape()));
    }
    zero_grad();
    std::vector<char> active(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) active[i] = nodes_[i].requires_grad;
    active[output.id()] = 1;
    sweep(output.id(), active, 0);
}

Tensor Tape::grad_wrt(Var output, Var activation) {
    check_owner(output, "grad_wrt");
    check_owner(activation, "grad_wrt");
    if (output.value().size() != 1) {
        throw TapeError("grad_wrt: output must be a scalar, got shape " + to_string(output.shape()));
    }
    const std::size_t a = activation.id();
    if (a > output.id()) {
        throw TapeError("grad_wrt: activation was recorded after the output");
    }
    zero_grad();
    std::vector<char> active(nodes_.size(), 0);
    active[a] = 1;
    for (std::size_t i = a + 1; i <= output.id(); ++i) {
        for (std::size_t in : nodes_[i].inputs) {
            if (active[in]) {
                active[i] = 1;
                break;
            }
        }
    }
    if (!active[output.id()]) return Tensor(activation.shape(), 0.0);
    sweep(output.id(), active, a);
    return nodes_[a].grad;
}

// ---------------------------------------------------------------------------
// Operators
// ---------------------------------------------------------------------------

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, std::size_t padding) {
    Tape& tape = same_tape(input, kernel, "conv2d");
    same_tape(input, bias, "conv2d");
    const Tensor& x = input.value();
    const Tensor& w = kernel.value();
    const Tensor& b = bias.value();
    if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
    if ((x.rank() != 3 && x.rank() != 4) || w.rank() != 4) {
        throw ShapeError("conv2d: expected input [C,H,W] or [N,C,H,W] and kernel [Co,C,kH,kW], got " +
                         to_string(x.shape()) + " and " + to_string(w.shape()));
    }
    const bool batched = x.rank() == 4;
    ConvGeometry g{};
    g.batch = batched ? x.dim(0) : 1;
    g.in_ch = x.dim(batched ? 1 : 0);
    g.height = x.dim(batched ? 2 : 1);
    g.width = x.dim(batched ? 3 : 2);
    g.out_ch = w.dim(0);
    g.kh = w.dim(2);
    g.kw = w.dim(3);
    g.stride = stride;
    g.pad = padding;
    if (w.dim(1) != g.in_ch) {
        throw ShapeError("conv2d: input channels of " + to_string(x.shape()) +
                         " do not match kernel " + to_string(w.shape()));
    }
    if (b.shape() != Shape{g.out_ch}) {
        throw ShapeError("conv2d: bias " + to_string(b.shape()) + " does not match kernel " +
                         to_string(w.shape()));
    }
    if (g.height + 2 * padding < g.kh || g.width + 2 * padding < g.kw) {
        throw ShapeError("conv2d: kernel " + to_string(w.shape()) + " does not fit padded input " +
                         to_string(x.shape()));
    }
    g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;

    Shape out_shape = batched ? Shape{g.batch, g.out_ch, g.out_h, g.out_w}
                              : Shape{g.out_ch, g.out_h, g.out_w};
    Tensor out(out_shape);
    const ConstMatrixMap wmat(w.data(), g.out_ch, g.patch());
    thread_local Scratch col_buf;
    const std::size_t plane = g.out_plane();
    const std::size_t tile = g.tile_rows();
    double* cols = col_buf.get(g.patch() * tile * g.out_w);
    for (std::size_t n = 0; n < g.batch; ++n) {
        const double* sample = x.data() + n * g.in_ch * g.in_plane();
        double* dst = out.data() + n * g.out_ch * plane;
        for (std::size_t oy0 = 0; oy0 < g.out_h; oy0 += tile) {
            const std::size_t rows = std::min(tile, g.out_h - oy0);
            const std::size_t ncols = rows * g.out_w;
            im2col(g, sample, oy0, rows, cols);
            StridedMap o(dst + oy0 * g.out_w, g.out_ch, ncols, Eigen::OuterStride<>(plane));
            o.noalias() = wmat * ConstMatrixMap(cols, g.patch(), ncols);
            for (std::size_t co = 0; co < g.out_ch; ++co) o.row(co).array() += b[co];
        }
    }

    return tape.record(std::move(out), {input, kernel, bias}, [g](const GradContext& ctx) {
        const Tensor& x = *ctx.in_values[0];
        const Tensor& w = *ctx.in_values[1];
        Tensor* gx = ctx.in_grads[0];
        Tensor* gw = ctx.in_grads[1];
        Tensor* gb = ctx.in_grads[2];
        const std::size_t plane = g.out_plane();
        const std::size_t tile = g.tile_rows();
        const ConstMatrixMap wmat(w.data(), g.out_ch, g.patch());
        thread_local Scratch col_buf;
        double* cols = col_buf.get(g.patch() * tile * g.out_w);
        for (std::size_t n = 0; n < g.batch; ++n) {
            const double* sample = x.data() + n * g.in_ch * g.in_plane();
            const double* dy = ctx.out_grad.data() + n * g.out_ch * plane;
            for (std::size_t oy0 = 0; oy0 < g.out_h; oy0 += tile) {
                const std::size_t rows = std::min(tile, g.out_h - oy0);
                const std::size_t ncols = rows * g.out_w;
                const ConstStridedMap dout(dy + oy0 * g.out_w, g.out_ch, ncols, Eigen::OuterStride<>(plane));
                if (gb != nullptr) {
                    for (std::size_t co = 0; co < g.out_ch; ++co) {
                        const double* row = dy + co * plane + oy0 * g.out_w;
                        double s = 0.0;
                        for (std::size_t p = 0; p < ncols; ++p) s += row[p];
                        (*gb)[co] += s;
                    }
                }
                if (gw != nullptr) {
                    im2col(g, sample, oy0, rows, cols);
                    MatrixMap gwmat(gw->data(), g.out_ch, g.patch());
                    gwmat.noalias() += dout * ConstMatrixMap(cols, g.patch(), ncols).transpose();
                }
                if (gx != nullptr) {
                    MatrixMap dcols(cols, g.patch(), ncols);
                    dcols.noalias() = wmat.transpose() * dout;
                    col2im(g, cols, oy0, rows, gx->data() + n * g.in_ch * g.in_plane());
                }
            }
        }
    });
}

Var dense(Var input, Var weight, Var bias) {
    Tape& tape = same_tape(input, weight, "dense");
    same_tape(input, bias, "dense");
    const Tensor& x = input.value();
    const Tensor& w = weight.value();
    const Tensor& b = bias.value();
    if ((x.rank() != 1 && x.rank() != 2) || w.rank() != 2) {
        throw ShapeError("dense: expected input [N] or [B,N] and weight [M,N], got " +
                         to_string(x.shape()) + " and " + to_string(w.shape()));
    }
    const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
    const std::size_t n_in = x.shape().back();
    const std::size_t n_out = w.dim(0);
    if (w.dim(1) != n_in) {
        throw ShapeError("dense: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(w.shape()));
    }
    if (b.shape() != Shape{n_out}) {
        throw ShapeError("dense: bias " + to_string(b.shape()) + " does not match weight " +
                         to_string(w.shape()));
    }
    Tensor out(x.rank() == 2 ? Shape{rows, n_out} : Shape{n_out});
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t m = 0; m < n_out; ++m) {
            out[r * n_out + m] = dot(w.data() + m * n_in, x.data() + r * n_in, n_in) + b[m];
        }
    }
    return tape.record(std::move(out), {input, weight, bias},
                       [rows, n_in, n_out](const GradContext& ctx) {
        const Tensor& x = *ctx.in_values[0];
        const Tensor& w = *ctx.in_values[1];
        const Tensor& dy = ctx.out_grad;
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t m = 0; m < n_out; ++m) {
                const double d = dy[r * n_out + m];
                if (d == 0.0) continue;
                if (ctx.in_grads[0] != nullptr) {
                    axpy(d, w.data() + m * n_in, ctx.in_grads[0]->data() + r * n_in, n_in);
                }
                if (ctx.in_grads[1] != nullptr) {
                    axpy(d, x.data() + r * n_in, ctx.in_grads[1]->data() + m * n_in, n_in);
                }
                if (ctx.in_grads[2] != nullptr) (*ctx.in_grads[2])[m] += d;
            }
        }
    });
}

Var relu(Var x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
    return unary(
        x,
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double s) { return s * (1.0 - s); });
}

Var abs(Var x) {
    return unary(x, [](double v) { return std::fabs(v); },
                 [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var exp(Var x) {
    return unary(x, [](double v) { return std::exp(v); }, [](double, double e) { return e; });
}

Var square(Var x) {
    return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var scale(Var x, double factor) {
    return unary(x, [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
    return unary(x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Var add(Var a, Var b) {
    Tape& tape = same_tape(a, b, "add");
    require_same_shape("add", a.value(), b.value());
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    return tape.record(std::move(out), {a, b}, [](const GradContext& ctx) {
        for (Tensor* g : ctx.in_grads) {
            if (g == nullptr) continue;
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i];
        }
    });
}

Var sub(Var a, Var b) {
    Tape& tape = same_tape(a, b, "sub");
    require_same_shape("sub", a.value(), b.value());
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return tape.record(std::move(out), {a, b}, [](const GradContext& ctx) {
        if (Tensor* g = ctx.in_grads[0]) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i];
        }
        if (Tensor* g = ctx.in_grads[1]) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= ctx.out_grad[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& tape = same_tape(a, b, "mul");
    require_same_shape("mul", a.value(), b.value());
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return tape.record(std::move(out), {a, b}, [](const GradContext& ctx) {
        const Tensor& av = *ctx.in_values[0];
        const Tensor& bv = *ctx.in_values[1];
        if (Tensor* g = ctx.in_grads[0]) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i] * bv[i];
        }
        if (Tensor* g = ctx.in_grads[1]) {
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += ctx.out_grad[i] * av[i];
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return x.tape()->record(Tensor::scalar(s), {x}, [](const GradContext& ctx) {
        const double d = ctx.out_grad[0];
        Tensor& g = *ctx.in_grads[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
}

Var mean(Var x) {
    const std::size_t n = x.value().size();
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    const double inv = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    return x.tape()->record(Tensor::scalar(s * inv), {x}, [inv](const GradContext& ctx) {
        const double d = ctx.out_grad[0] * inv;
        Tensor& g = *ctx.in_grads[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += d;
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.tape()->record(std::move(out), {x}, [](const GradContext& ctx) {
        Tensor& g = *ctx.in_grads[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += ctx.out_grad[i];
    });
}

Var upsample_nearest(Var x, std::size_t height, std::size_t width) {
    const Tensor& in = x.value();
    if (in.rank() < 2 || height == 0 || width == 0) {
        throw ShapeError("upsample_nearest: cannot resize " + to_string(in.shape()) + " to " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    const std::size_t h = in.dim(in.rank() - 2);
    const std::size_t w = in.dim(in.rank() - 1);
    const std::size_t planes = in.size() / (h * w);
    Shape out_shape = in.shape();
    out_shape[out_shape.size() - 2] = height;
    out_shape[out_shape.size() - 1] = width;

    std::vector<std::size_t> src_index(height * width);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t xx = 0; xx < width; ++xx) {
            src_index[y * width + xx] = (y * h / height) * w + (xx * w / width);
        }
    }
    Tensor out(out_shape);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = in.data() + p * h * w;
        double* dst = out.data() + p * height * width;
        for (std::size_t i = 0; i < height * width; ++i) dst[i] = src[src_index[i]];
    }
    return x.tape()->record(std::move(out), {x},
                            [src_index, planes, h, w](const GradContext& ctx) {
        const std::size_t out_plane = src_index.size();
        Tensor& g = *ctx.in_grads[0];
        for (std::size_t p = 0; p < planes; ++p) {
            const double* dy = ctx.out_grad.data() + p * out_plane;
            double* dst = g.data() + p * h * w;
            for (std::size_t i = 0; i < out_plane; ++i) dst[src_index[i]] += dy[i];
        }
    });
}

Var elementwise(Elementwise kind, Var a, Var b) {
    switch (kind) {
        case Elementwise::relu: return relu(a);
        case Elementwise::sigmoid: return sigmoid(a);
        case Elementwise::abs: return abs(a);
        case Elementwise::square: return square(a);
        case Elementwise::add: return add(a, b);
        case Elementwise::sub: return sub(a, b);
        case Elementwise::mul: return mul(a, b);
    }
    throw std::invalid_argument("elementwise: unknown kind");
}

Var reduce(Reduction kind, Var x) {
    return kind == Reduction::sum ? sum(x) : mean(x);
}

}  // namespace spader::ad
