#include "cmfuse/tape.hpp"

#include <cmath>

#include "cmfuse/error.hpp"

namespace cmfuse {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw invariant_error(std::string(op) + ": operands from different tapes");
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

// Bridge between the free op functions and the tape's private node storage.
struct TapeAccess {
    static Var push(Tape& t, Tape::Node node) {
        t.nodes_.push_back(std::move(node));
        return Var{&t, static_cast<int>(t.nodes_.size()) - 1};
    }
    static Var make(Tape& t, Tensor value, bool needs_grad, std::function<void(Tape&, int)> backprop) {
        Tape::Node n;
        n.own = std::move(value);
        n.needs_grad = needs_grad;
        if (needs_grad) n.backprop = std::move(backprop);
        return push(t, std::move(n));
    }
    static Var leaf(Tape& t, Tensor own, const Tensor* ext, bool needs_grad) {
        Tape::Node n;
        n.own = std::move(own);
        n.ext = ext;
        n.needs_grad = needs_grad;
        return push(t, std::move(n));
    }
    static bool needs_grad(const Tape& t, int id) {
        return t.nodes_[static_cast<std::size_t>(id)].needs_grad;
    }
    static const Tensor& val(const Tape& t, int id) {
        return t.nodes_[static_cast<std::size_t>(id)].val();
    }
    static const Tensor& grad_of(const Tape& t, int id) {
        return t.nodes_[static_cast<std::size_t>(id)].grad;
    }
};

namespace {

Var make_op(Tape& t, Tensor value, bool needs_grad, std::function<void(Tape&, int)> backprop) {
    return TapeAccess::make(t, std::move(value), needs_grad, std::move(backprop));
}

bool wants(Var v) { return TapeAccess::needs_grad(*v.tape, v.id); }

}  // namespace

Var Tape::constant(Tensor v) { return TapeAccess::leaf(*this, std::move(v), nullptr, false); }

Var Tape::constant_ref(const Tensor* v) { return TapeAccess::leaf(*this, Tensor(), v, false); }

Var Tape::variable(Tensor v) { return TapeAccess::leaf(*this, std::move(v), nullptr, true); }

Var Tape::variable_ref(const Tensor* v) { return TapeAccess::leaf(*this, Tensor(), v, true); }

const Tensor& Tape::value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].val(); }

const Tensor& Tape::grad(Var v) { return grad_buf(v.id); }

Tensor& Tape::grad_buf(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) {
        n.grad = Tensor(n.val().rows(), n.val().cols());
    }
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw invariant_error("backward: root from another tape");
    const Node& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.val().rows() != 1 || r.val().cols() != 1) {
        throw invariant_error("backward: root must be scalar");
    }
    if (!r.needs_grad) return;
    for (auto& n : nodes_) {
        if (!n.grad.empty()) n.grad.fill(0.0);
    }
    grad_buf(root.id)[0] = 1.0;
    for (int id = root.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.needs_grad || !n.backprop || n.grad.empty()) continue;
        n.backprop(*this, id);
    }
}

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
    require_same_tape(a, b, "matmul");
    Tape& t = *a.tape;
    Tensor out;
    gemm(a.value(), trans_a, b.value(), trans_b, out, false);
    const bool ng = wants(a) || wants(b);
    const int ia = a.id, ib = b.id;
    return make_op(t, std::move(out), ng, [ia, ib, trans_a, trans_b](Tape& tp, int id) {
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        const Tensor& av = TapeAccess::val(tp, ia);
        const Tensor& bv = TapeAccess::val(tp, ib);
        if (TapeAccess::needs_grad(tp, ia)) {
            Tensor& da = tp.grad_buf(ia);
            if (!trans_a && !trans_b) gemm(dy, false, bv, true, da, true);
            else if (!trans_a && trans_b) gemm(dy, false, bv, false, da, true);
            else if (trans_a && !trans_b) gemm(bv, false, dy, true, da, true);
            else gemm(bv, true, dy, true, da, true);
        }
        if (TapeAccess::needs_grad(tp, ib)) {
            Tensor& db = tp.grad_buf(ib);
            if (!trans_a && !trans_b) gemm(av, true, dy, false, db, true);
            else if (!trans_a && trans_b) gemm(dy, true, av, false, db, true);
            else if (trans_a && !trans_b) gemm(av, false, dy, false, db, true);
            else gemm(dy, true, av, true, db, true);
        }
    });
}

Var add(Var a, Var b) { return add_scaled(a, b, 1.0); }
Var sub(Var a, Var b) { return add_scaled(a, b, -1.0); }

Var add_scaled(Var a, Var b, double c) {
    require_same_tape(a, b, "add");
    if (!a.value().same_shape(b.value())) throw invariant_error("add: shape mismatch");
    Tape& t = *a.tape;
    Tensor out = a.value();
    out.axpy(c, b.value());
    const bool ng = wants(a) || wants(b);
    const int ia = a.id, ib = b.id;
    return make_op(t, std::move(out), ng, [ia, ib, c](Tape& tp, int id) {
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        if (TapeAccess::needs_grad(tp, ia)) tp.grad_buf(ia).axpy(1.0, dy);
        if (TapeAccess::needs_grad(tp, ib)) tp.grad_buf(ib).axpy(c, dy);
    });
}

Var scale(Var a, double c) {
    Tape& t = *a.tape;
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    const int ia = a.id;
    return make_op(t, std::move(out), wants(a), [ia, c](Tape& tp, int id) {
        if (TapeAccess::needs_grad(tp, ia)) {
            tp.grad_buf(ia).axpy(c, TapeAccess::grad_of(tp, id));
        }
    });
}

namespace {

// Shared scaffolding for elementwise y=f(x) ops whose derivative is a
// function of (x, y).
Var elementwise(Var x, double (*fwd)(double), double (*dfn)(double, double)) {
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    Tensor out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    const int ix = x.id;
    return make_op(t, std::move(out), wants(x), [ix, dfn](Tape& tp, int id) {
        if (!TapeAccess::needs_grad(tp, ix)) return;
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        const Tensor& xv = TapeAccess::val(tp, ix);
        const Tensor& yv = TapeAccess::val(tp, id);
        Tensor& dx = tp.grad_buf(ix);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[i] * dfn(xv[i], yv[i]);
    });
}

}  // namespace

Var relu(Var x) {
    return elementwise(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var x) {
    return elementwise(
        x, [](double v) { return stable_softplus(v); },
        [](double v, double) { return stable_sigmoid(v); });
}

Var tanh_op(Var x) {
    return elementwise(
        x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid_op(Var x) {
    return elementwise(
        x, [](double v) { return stable_sigmoid(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Var softmax_rows(Var x) {
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    if (!xv.all_finite()) throw numeric_error("softmax_rows: non-finite input");
    Tensor out(xv.rows(), xv.cols());
    for (int i = 0; i < xv.rows(); ++i) {
        double mx = xv.at(i, 0);
        for (int j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv.at(i, j));
        double s = 0.0;
        for (int j = 0; j < xv.cols(); ++j) {
            const double e = std::exp(xv.at(i, j) - mx);
            out.at(i, j) = e;
            s += e;
        }
        for (int j = 0; j < xv.cols(); ++j) out.at(i, j) /= s;
    }
    const int ix = x.id;
    return make_op(t, std::move(out), wants(x), [ix](Tape& tp, int id) {
        if (!TapeAccess::needs_grad(tp, ix)) return;
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        const Tensor& y = TapeAccess::val(tp, id);
        Tensor& dx = tp.grad_buf(ix);
        for (int i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols(); ++j) dot += dy.at(i, j) * y.at(i, j);
            for (int j = 0; j < y.cols(); ++j) {
                dx.at(i, j) += y.at(i, j) * (dy.at(i, j) - dot);
            }
        }
    });
}

Var conv1d_rows(Var x, Var kernel, ConvMode mode) {
    require_same_tape(x, kernel, "conv1d_rows");
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    const Tensor& kv = kernel.value();
    if (kv.rows() != 1) throw invariant_error("conv1d_rows: kernel must be a row vector");
    const int w = kv.cols();
    const int n = xv.rows();
    const int L = xv.cols();
    const int off = mode == ConvMode::Same ? (w - 1) / 2 : 0;
    int Lout;
    if (mode == ConvMode::Valid) {
        if (L < w) {
            throw invariant_error("conv1d_rows: input length " + std::to_string(L) +
                                  " shorter than kernel width " + std::to_string(w));
        }
        Lout = L - w + 1;
    } else {
        Lout = L;
    }
    Tensor out(n, Lout);
    for (int i = 0; i < n; ++i) {
        for (int tt = 0; tt < Lout; ++tt) {
            double s = 0.0;
            for (int u = 0; u < w; ++u) {
                const int src = tt + u - off;
                if (src < 0 || src >= L) continue;
                s += xv.at(i, src) * kv[static_cast<std::size_t>(u)];
            }
            out.at(i, tt) = s;
        }
    }
    const int ix = x.id, ik = kernel.id;
    return make_op(t, std::move(out), wants(x) || wants(kernel), [ix, ik, w, off](Tape& tp, int id) {
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        const Tensor& xv = TapeAccess::val(tp, ix);
        const Tensor& kv = TapeAccess::val(tp, ik);
        const int n = xv.rows();
        const int L = xv.cols();
        const int Lout = dy.cols();
        const bool gx = TapeAccess::needs_grad(tp, ix);
        const bool gk = TapeAccess::needs_grad(tp, ik);
        Tensor* dx = gx ? &tp.grad_buf(ix) : nullptr;
        Tensor* dk = gk ? &tp.grad_buf(ik) : nullptr;
        for (int i = 0; i < n; ++i) {
            for (int tt = 0; tt < Lout; ++tt) {
                const double g = dy.at(i, tt);
                if (g == 0.0) continue;
                for (int u = 0; u < w; ++u) {
                    const int src = tt + u - off;
                    if (src < 0 || src >= L) continue;
                    if (gx) dx->at(i, src) += g * kv[static_cast<std::size_t>(u)];
                    if (gk) (*dk)[static_cast<std::size_t>(u)] += g * xv.at(i, src);
                }
            }
        }
    });
}

Var affine_rows(Var x, Var w, Var bias) {
    require_same_tape(x, w, "affine_rows");
    require_same_tape(x, bias, "affine_rows");
    const Tensor& bv = bias.value();
    if (bv.rows() != 1 || bv.cols() != w.value().cols()) {
        throw invariant_error("affine_rows: bias shape mismatch");
    }
    Tape& t = *x.tape;
    Tensor out;
    gemm(x.value(), false, w.value(), false, out, false);
    for (int i = 0; i < out.rows(); ++i) {
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bv[static_cast<std::size_t>(j)];
    }
    const bool ng = wants(x) || wants(w) || wants(bias);
    const int ix = x.id, iw = w.id, ib = bias.id;
    return make_op(t, std::move(out), ng, [ix, iw, ib](Tape& tp, int id) {
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        if (TapeAccess::needs_grad(tp, ix)) {
            gemm(dy, false, TapeAccess::val(tp, iw), true, tp.grad_buf(ix), true);
        }
        if (TapeAccess::needs_grad(tp, iw)) {
            gemm(TapeAccess::val(tp, ix), true, dy, false, tp.grad_buf(iw), true);
        }
        if (TapeAccess::needs_grad(tp, ib)) {
            Tensor& db = tp.grad_buf(ib);
            for (int i = 0; i < dy.rows(); ++i) {
                for (int j = 0; j < dy.cols(); ++j) db[static_cast<std::size_t>(j)] += dy.at(i, j);
            }
        }
    });
}

Var tri_upper(Var m, bool include_diag) {
    Tape& t = *m.tape;
    const Tensor& mv = m.value();
    const int n = mv.rows();
    if (mv.cols() != n) throw invariant_error("tri_upper: matrix must be square");
    const int len = include_diag ? n * (n + 1) / 2 : n * (n - 1) / 2;
    Tensor out(1, len);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = include_diag ? i : i + 1; j < n; ++j) out[k++] = mv.at(i, j);
    }
    const int im = m.id;
    return make_op(t, std::move(out), wants(m), [im, include_diag, n](Tape& tp, int id) {
        if (!TapeAccess::needs_grad(tp, im)) return;
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        Tensor& dm = tp.grad_buf(im);
        std::size_t k = 0;
        for (int i = 0; i < n; ++i) {
            for (int j = include_diag ? i : i + 1; j < n; ++j) dm.at(i, j) += dy[k++];
        }
    });
}

Var symmetrize(Var m) {
    Tape& t = *m.tape;
    const Tensor& mv = m.value();
    const int n = mv.rows();
    if (mv.cols() != n) throw invariant_error("symmetrize: matrix must be square");
    Tensor out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) out.at(i, j) = 0.5 * (mv.at(i, j) + mv.at(j, i));
    }
    const int im = m.id;
    return make_op(t, std::move(out), wants(m), [im, n](Tape& tp, int id) {
        if (!TapeAccess::needs_grad(tp, im)) return;
        const Tensor& dy = TapeAccess::grad_of(tp, id);
        Tensor& dm = tp.grad_buf(im);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) dm.at(i, j) += 0.5 * (dy.at(i, j) + dy.at(j, i));
        }
    });
}

Var mean_abs_diff(Var a, Var b) {
    require_same_tape(a, b, "mean_abs_diff");
    if (!a.value().same_shape(b.value())) throw invariant_error("mean_abs_diff: shape mismatch");
    Tape& t = *a.tape;
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const double inv_n = 1.0 / static_cast<double>(av.size());
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += std::fabs(av[i] - bv[i]);
    const int ia = a.id, ib = b.id;
    return make_op(t, Tensor::scalar(s * inv_n), wants(a) || wants(b), [ia, ib, inv_n](Tape& tp, int id) {
        const double g = TapeAccess::grad_of(tp, id)[0] * inv_n;
        const Tensor& av = TapeAccess::val(tp, ia);
        const Tensor& bv = TapeAccess::val(tp, ib);
        const bool ga = TapeAccess::needs_grad(tp, ia);
        const bool gb = TapeAccess::needs_grad(tp, ib);
        Tensor* da = ga ? &tp.grad_buf(ia) : nullptr;
        Tensor* db = gb ? &tp.grad_buf(ib) : nullptr;
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double diff = av[i] - bv[i];
            const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            if (ga) (*da)[i] += g * sgn;
            if (gb) (*db)[i] -= g * sgn;
        }
    });
}

Var weighted_sum(Var x, Tensor coeffs) {
    if (!x.value().same_shape(coeffs)) throw invariant_error("weighted_sum: shape mismatch");
    Tape& t = *x.tape;
    const Tensor& xv = x.value();
    double s = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * coeffs[i];
    const int ix = x.id;
    Var c = t.constant(std::move(coeffs));
    const int ic = c.id;
    return make_op(t, Tensor::scalar(s), wants(x), [ix, ic](Tape& tp, int id) {
        if (!TapeAccess::needs_grad(tp, ix)) return;
        const double g = TapeAccess::grad_of(tp, id)[0];
        tp.grad_buf(ix).axpy(g, TapeAccess::val(tp, ic));
    });
}

Var softmax_xent(Var logits_row, int target) {
    Tape& t = *logits_row.tape;
    const Tensor& z = logits_row.value();
    if (z.rows() != 1) throw invariant_error("softmax_xent: logits must be a row vector");
    if (target < 0 || target >= z.cols()) throw invariant_error("softmax_xent: target out of range");
    double mx = z[0];
    for (int j = 1; j < z.cols(); ++j) mx = std::max(mx, z[static_cast<std::size_t>(j)]);
    double s = 0.0;
    for (int j = 0; j < z.cols(); ++j) s += std::exp(z[static_cast<std::size_t>(j)] - mx);
    const double loss = std::log(s) + mx - z[static_cast<std::size_t>(target)];
    const int iz = logits_row.id;
    return make_op(t, Tensor::scalar(loss), wants(logits_row), [iz, target](Tape& tp, int id) {
        if (!TapeAccess::needs_grad(tp, iz)) return;
        const double g = TapeAccess::grad_of(tp, id)[0];
        const Tensor& z = TapeAccess::val(tp, iz);
        double mx = z[0];
        for (std::size_t j = 1; j < z.size(); ++j) mx = std::max(mx, z[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) s += std::exp(z[j] - mx);
        Tensor& dz = tp.grad_buf(iz);
        for (std::size_t j = 0; j < z.size(); ++j) {
            double p = std::exp(z[j] - mx) / s;
            if (static_cast<int>(j) == target) p -= 1.0;
            dz[j] += g * p;
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    Tensor out;
    gemm(a, false, b, false, out, false);
    return out;
}

Tensor softmax_rows(const Tensor& m) {
    Tape t;
    return t.value(softmax_rows(t.constant(m)));
}

}  // namespace cmfuse
