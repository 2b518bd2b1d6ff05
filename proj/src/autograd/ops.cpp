// SPDX-License-Identifier: Apache-2.0
#include "xkd/autograd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "xkd/core/error.hpp"

namespace xkd::ops {

namespace {

using detail::Node;

// Gradient buffer of parent `i`, or nullptr when that parent takes no gradient.
double* parent_grad(Node& self, std::size_t i) {
    auto& p = *self.parents[i];
    if (!p.requires_grad) return nullptr;
    return p.ensure_grad().data();
}

const std::vector<double>& parent_values(Node& self, std::size_t i) { return self.parents[i]->values; }

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

std::size_t last_extent(const Tensor& x, const char* op) {
    if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError(std::string(op) + ": empty last axis");
    return x.shape().back();
}

// ---------------------------------------------------------------- broadcasting

struct BroadcastPlan {
    Shape out;
    bool same = true;
    std::vector<std::size_t> ia, ib;
};

std::shared_ptr<const BroadcastPlan> plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    auto plan = std::make_shared<BroadcastPlan>();
    if (a == b) {
        plan->out = a;
        return plan;
    }
    plan->same = false;
    const std::size_t rank = std::max(a.size(), b.size());
    Shape ea(rank, 1), eb(rank, 1);
    std::copy(a.begin(), a.end(), ea.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
    std::copy(b.begin(), b.end(), eb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
    plan->out.resize(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        if (ea[d] == eb[d] || eb[d] == 1) {
            plan->out[d] = ea[d];
        } else if (ea[d] == 1) {
            plan->out[d] = eb[d];
        } else {
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a) + " with " + shape_string(b));
        }
    }
    std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
    std::size_t stride_a = 1, stride_b = 1;
    for (std::size_t d = rank; d-- > 0;) {
        sa[d] = ea[d] == 1 ? 0 : stride_a;
        sb[d] = eb[d] == 1 ? 0 : stride_b;
        stride_a *= ea[d];
        stride_b *= eb[d];
    }
    const std::size_t n = shape_numel(plan->out);
    plan->ia.resize(n);
    plan->ib.resize(n);
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t oa = 0, ob = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            oa += idx[d] * sa[d];
            ob += idx[d] * sb[d];
        }
        plan->ia[k] = oa;
        plan->ib[k] = ob;
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < plan->out[d]) break;
            idx[d] = 0;
        }
    }
    return plan;
}

// fwd(a, b) -> value; bwd(a, b, out) -> {d/da, d/db}
template <class Fwd, class Bwd>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Bwd bwd) {
    auto plan = plan_broadcast(a.shape(), b.shape(), op);
    const auto av = a.values();
    const auto bv = b.values();
    const std::size_t n = shape_numel(plan->out);
    std::vector<double> out(n);
    if (plan->same) {
        for (std::size_t k = 0; k < n; ++k) out[k] = fwd(av[k], bv[k]);
    } else {
        for (std::size_t k = 0; k < n; ++k) out[k] = fwd(av[plan->ia[k]], bv[plan->ib[k]]);
    }
    return Tensor::make_result(plan->out, std::move(out), {a, b}, op, [plan, bwd](Node& self) {
        const auto& x = parent_values(self, 0);
        const auto& y = parent_values(self, 1);
        double* gx = parent_grad(self, 0);
        double* gy = parent_grad(self, 1);
        const auto& g = self.grad;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const std::size_t i = plan->same ? k : plan->ia[k];
            const std::size_t j = plan->same ? k : plan->ib[k];
            const auto [da, db] = bwd(x[i], y[j], self.values[k]);
            if (gx) gx[i] += g[k] * da;
            if (gy) gy[j] += g[k] * db;
        }
    });
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, const char* op, Fwd fwd, Bwd bwd) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t k = 0; k < xv.size(); ++k) out[k] = fwd(xv[k]);
    return Tensor::make_result(x.shape(), std::move(out), {x}, op, [bwd](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        const auto& xin = parent_values(self, 0);
        const auto& g = self.grad;
        for (std::size_t k = 0; k < g.size(); ++k) gx[k] += g[k] * bwd(xin[k], self.values[k]);
    });
}

struct Pair {
    double a, b;
};

}  // namespace

// ---------------------------------------------------------------- element-wise

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](double, double, double) { return Pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](double, double, double) { return Pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](double x, double y, double) { return Pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(a, b, "div", [](double x, double y) { return x / y; },
                  [](double x, double y, double) { return Pair{1.0 / y, -x / (y * y)}; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(x, "scalar-mul", [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Tensor square(const Tensor& x) {
    return unary(x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
    for (double v : x.values()) {
        if (v < 0.0) throw DomainError("sqrt: negative input " + std::to_string(v));
    }
    return unary(x, "sqrt", [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor exp(const Tensor& x) {
    return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x, double floor) {
    for (double v : x.values()) {
        if (v < 0.0) throw DomainError("log: negative input " + std::to_string(v));
    }
    return unary(
        x, "log", [floor](double v) { return std::log(std::max(v, floor)); },
        [floor](double v, double) { return v < floor ? 0.0 : 1.0 / v; });
}

Tensor gelu(const Tensor& x) {
    return unary(
        x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); },
        [](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + v * pdf;
        });
}

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
    const auto av = a.values();
    const auto bv = b.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            const double* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    }
    return Tensor::make_result({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& self) {
        const auto& A = parent_values(self, 0);
        const auto& B = parent_values(self, 1);
        const auto& G = self.grad;
        if (double* gA = parent_grad(self, 0)) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = G.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double* brow = B.data() + p * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    gA[i * k + p] += acc;
                }
            }
        }
        if (double* gB = parent_grad(self, 1)) {
            for (std::size_t i = 0; i < m; ++i) {
                const double* grow = G.data() + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double s = A[i * k + p];
                    double* gbrow = gB + p * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
                }
            }
        }
    });
}

Tensor transpose(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("transpose: expects a 2-D tensor, got " + shape_string(x.shape()));
    const std::size_t r = x.size(0), c = x.size(1);
    const auto xv = x.values();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    return Tensor::make_result({c, r}, std::move(out), {x}, "transpose", [r, c](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    return Tensor::make_result(std::move(shape), std::move(out), {x}, "reshape", [](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t k = 0; k < self.grad.size(); ++k) gx[k] += self.grad[k];
    });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
    const std::size_t ax = normalize_axis(axis, x.rank(), "slice");
    const auto sp = split_axis(x.shape(), ax);
    if (begin >= end || end > sp.len) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for extent " +
                         std::to_string(sp.len));
    }
    const std::size_t width = end - begin;
    Shape out_shape = x.shape();
    out_shape[ax] = width;
    const auto xv = x.values();
    std::vector<double> out(sp.outer * width * sp.inner);
    for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = xv.data() + (o * sp.len + begin) * sp.inner;
        std::copy(src, src + width * sp.inner, out.data() + o * width * sp.inner);
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "slice", [sp, begin, width](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t o = 0; o < sp.outer; ++o) {
            double* dst = gx + (o * sp.len + begin) * sp.inner;
            const double* src = self.grad.data() + o * width * sp.inner;
            for (std::size_t k = 0; k < width * sp.inner; ++k) dst[k] += src[k];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const std::size_t ax = normalize_axis(axis, parts[0].rank(), "concat");
    Shape out_shape = parts[0].shape();
    std::vector<std::size_t> lens;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d < s.size(); ++d) {
            if (d != ax && s[d] != out_shape[d]) {
                throw ShapeError("concat: shapes " + shape_string(out_shape) + " and " + shape_string(s) +
                                 " differ off the concatenation axis");
            }
        }
        lens.push_back(s[ax]);
        total += s[ax];
    }
    out_shape[ax] = total;
    const auto sp = split_axis(out_shape, ax);
    std::vector<double> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto pv = parts[i].values();
        for (std::size_t o = 0; o < sp.outer; ++o) {
            const double* src = pv.data() + o * lens[i] * sp.inner;
            std::copy(src, src + lens[i] * sp.inner, out.data() + (o * total + offset) * sp.inner);
        }
        offset += lens[i];
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), parts, "concat", [sp, lens, total](Node& self) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < lens.size(); ++i) {
            if (double* gp = parent_grad(self, i)) {
                for (std::size_t o = 0; o < sp.outer; ++o) {
                    const double* src = self.grad.data() + (o * total + off) * sp.inner;
                    double* dst = gp + o * lens[i] * sp.inner;
                    for (std::size_t k = 0; k < lens[i] * sp.inner; ++k) dst[k] += src[k];
                }
            }
            off += lens[i];
        }
    });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    if (x.rank() == 0 || rows.empty()) throw ShapeError("gather_rows: empty input or index list");
    const std::size_t n = x.size(0);
    const std::size_t width = x.numel() / n;
    for (auto r : rows) {
        if (r >= n) throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range " + std::to_string(n));
    }
    Shape out_shape = x.shape();
    out_shape[0] = rows.size();
    const auto xv = x.values();
    std::vector<double> out(rows.size() * width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(xv.begin() + static_cast<std::ptrdiff_t>(rows[i] * width),
                  xv.begin() + static_cast<std::ptrdiff_t>((rows[i] + 1) * width), out.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, "gather",
                               [idx = std::move(idx), width](Node& self) {
                                   double* gx = parent_grad(self, 0);
                                   if (!gx) return;
                                   for (std::size_t i = 0; i < idx.size(); ++i) {
                                       for (std::size_t k = 0; k < width; ++k) gx[idx[i] * width + k] += self.grad[i * width + k];
                                   }
                               });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return Tensor::make_result({1}, {s}, {x}, "sum", [](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        const double g = self.grad[0];
        const std::size_t n = self.parents[0]->values.size();
        for (std::size_t k = 0; k < n; ++k) gx[k] += g;
    });
}

Tensor mean(const Tensor& x) {
    const double n = static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.values()) s += v;
    return Tensor::make_result({1}, {s / n}, {x}, "mean", [n](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        const double g = self.grad[0] / n;
        const std::size_t cnt = self.parents[0]->values.size();
        for (std::size_t k = 0; k < cnt; ++k) gx[k] += g;
    });
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, bool keepdim, bool average) {
    const char* op = average ? "mean" : "sum";
    const std::size_t ax = normalize_axis(axis, x.rank(), op);
    const auto sp = split_axis(x.shape(), ax);
    if (sp.len == 0) throw ShapeError(std::string(op) + ": empty reduction axis");
    Shape out_shape = x.shape();
    if (keepdim) {
        out_shape[ax] = 1;
    } else {
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
        if (out_shape.empty()) out_shape = {1};
    }
    const double factor = average ? 1.0 / static_cast<double>(sp.len) : 1.0;
    const auto xv = x.values();
    std::vector<double> out(sp.outer * sp.inner, 0.0);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t l = 0; l < sp.len; ++l)
            for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += xv[(o * sp.len + l) * sp.inner + i];
    if (average) {
        for (auto& v : out) v *= factor;
    }
    return Tensor::make_result(std::move(out_shape), std::move(out), {x}, op, [sp, factor](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t l = 0; l < sp.len; ++l)
                for (std::size_t i = 0; i < sp.inner; ++i)
                    gx[(o * sp.len + l) * sp.inner + i] += self.grad[o * sp.inner + i] * factor;
    });
}

}  // namespace

Tensor sum(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, false); }

Tensor mean(const Tensor& x, int axis, bool keepdim) { return reduce_axis(x, axis, keepdim, true); }

// ---------------------------------------------------------------- row-wise normalizers

Tensor softmax(const Tensor& x) {
    const std::size_t d = last_extent(x, "softmax");
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double* o = out.data() + r * d;
        const double mx = *std::max_element(in, in + d);
        double z = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            z += o[j];
        }
        for (std::size_t j = 0; j < d; ++j) o[j] /= z;
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "softmax", [rows, d](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.values.data() + r * d;
            const double* g = self.grad.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x) {
    const std::size_t d = last_extent(x, "layer_norm");
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    std::vector<double> out(x.numel());
    std::vector<double> inv_std(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += in[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(d);
        inv_std[r] = 1.0 / std::sqrt(var + kNormEps);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (in[j] - mu) * inv_std[r];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "layer-norm",
                               [rows, d, inv_std = std::move(inv_std)](Node& self) {
                                   double* gx = parent_grad(self, 0);
                                   if (!gx) return;
                                   const double inv_d = 1.0 / static_cast<double>(d);
                                   for (std::size_t r = 0; r < rows; ++r) {
                                       const double* y = self.values.data() + r * d;
                                       const double* g = self.grad.data() + r * d;
                                       double mg = 0.0, mgy = 0.0;
                                       for (std::size_t j = 0; j < d; ++j) {
                                           mg += g[j];
                                           mgy += g[j] * y[j];
                                       }
                                       mg *= inv_d;
                                       mgy *= inv_d;
                                       for (std::size_t j = 0; j < d; ++j)
                                           gx[r * d + j] += inv_std[r] * (g[j] - mg - y[j] * mgy);
                                   }
                               });
}

Tensor l2_normalize(const Tensor& x, double eps) {
    const std::size_t d = last_extent(x, "l2_normalize");
    const std::size_t rows = x.numel() / d;
    const auto xv = x.values();
    std::vector<double> out(x.numel());
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double ss = 0.0;
        for (std::size_t j = 0; j < d; ++j) ss += xv[r * d + j] * xv[r * d + j];
        norms[r] = std::sqrt(ss + eps);
        for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xv[r * d + j] / norms[r];
    }
    return Tensor::make_result(x.shape(), std::move(out), {x}, "l2-norm", [rows, d, norms = std::move(norms)](Node& self) {
        double* gx = parent_grad(self, 0);
        if (!gx) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.values.data() + r * d;
            const double* g = self.grad.data() + r * d;
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += (g[j] - y[j] * dot) / norms[r];
        }
    });
}

}  // namespace xkd::ops
