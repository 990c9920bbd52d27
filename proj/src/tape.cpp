// SPDX-License-Identifier: Apache-2.0
#include "driftforge/tape.hpp"

#include <cmath>

#include "driftforge/kernels.hpp"

namespace driftforge {

namespace ker = driftforge::kernels;

Tape::Id Tape::leaf(Tensor value, bool track) {
    value.check_finite("leaf");
    Node n;
    n.value = std::move(value);
    n.tracked = track;
    n.name = "leaf";
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
}

bool Tape::any_tracked(const std::vector<Id>& ids) const {
    for (Id id : ids)
        if (tracked(id)) return true;
    return false;
}

Tape::Id Tape::make_node(Tensor value, std::vector<Id> parents, Vjp vjp, std::string name) {
    value.check_finite(name);
    Node n;
    n.value = std::move(value);
    n.tracked = any_tracked(parents);
    n.parents = std::move(parents);
    if (n.tracked) n.vjp = std::move(vjp);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(Id id) {
    auto& g = grads_[static_cast<size_t>(id)];
    if (g.numel() == 0) g = Tensor(val(id).shape());
    return g;
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.same_shape(tb), "add: shape mismatch " << ta.shape_str() << " vs " << tb.shape_str());
    Tensor out(ta.shape());
    ker::add(ta.data(), tb.data(), out.data(), ta.numel());
    return make_node(std::move(out), {a, b},
                     [a, b](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) ker::axpy(1.0, g.data(), t.grad_buf(a).data(), g.numel());
                         if (t.tracked(b)) ker::axpy(1.0, g.data(), t.grad_buf(b).data(), g.numel());
                     },
                     "add");
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.same_shape(tb), "sub: shape mismatch " << ta.shape_str() << " vs " << tb.shape_str());
    Tensor out(ta.shape());
    ker::sub(ta.data(), tb.data(), out.data(), ta.numel());
    return make_node(std::move(out), {a, b},
                     [a, b](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) ker::axpy(1.0, g.data(), t.grad_buf(a).data(), g.numel());
                         if (t.tracked(b)) ker::axpy(-1.0, g.data(), t.grad_buf(b).data(), g.numel());
                     },
                     "sub");
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.same_shape(tb), "mul: shape mismatch " << ta.shape_str() << " vs " << tb.shape_str());
    Tensor out(ta.shape());
    ker::mul(ta.data(), tb.data(), out.data(), ta.numel());
    return make_node(std::move(out), {a, b},
                     [a, b](Tape& t, Tape::Id, const Tensor& g) {
                         const i64 n = g.numel();
                         if (t.tracked(a)) {
                             Tensor& ga = t.grad_buf(a);
                             const double* vb = t.val(b).data();
                             const double* gd = g.data();
                             double* out = ga.data();
                             for (i64 i = 0; i < n; ++i) out[i] += gd[i] * vb[i];
                         }
                         if (t.tracked(b)) {
                             Tensor& gb = t.grad_buf(b);
                             const double* va = t.val(a).data();
                             const double* gd = g.data();
                             double* out = gb.data();
                             for (i64 i = 0; i < n; ++i) out[i] += gd[i] * va[i];
                         }
                     },
                     "mul");
}

Tape::Id Tape::scale(Id a, double s) {
    const Tensor& ta = val(a);
    Tensor out(ta.shape());
    ker::scale(ta.data(), s, out.data(), ta.numel());
    return make_node(std::move(out), {a},
                     [a, s](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) ker::axpy(s, g.data(), t.grad_buf(a).data(), g.numel());
                     },
                     "scale");
}

Tape::Id Tape::add_bias(Id x, Id bias) {
    const Tensor& tx = val(x);
    const Tensor& tb = val(bias);
    DF_CHECK(tx.rank() == 2 && tb.rank() == 1 && tx.dim(1) == tb.dim(0),
             "add_bias: incompatible shapes " << tx.shape_str() << " and " << tb.shape_str());
    const i64 rows = tx.dim(0);
    const i64 cols = tx.dim(1);
    Tensor out(tx.shape());
    for (i64 r = 0; r < rows; ++r)
        for (i64 c = 0; c < cols; ++c) out.at(r * cols + c) = tx.at(r * cols + c) + tb.at(c);
    return make_node(std::move(out), {x, bias},
                     [x, bias, rows, cols](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(x)) ker::axpy(1.0, g.data(), t.grad_buf(x).data(), g.numel());
                         if (t.tracked(bias)) {
                             Tensor& gb = t.grad_buf(bias);
                             for (i64 r = 0; r < rows; ++r)
                                 for (i64 c = 0; c < cols; ++c) gb.at(c) += g.at(r * cols + c);
                         }
                     },
                     "add_bias");
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.rank() == 2 && tb.rank() == 2 && ta.dim(1) == tb.dim(0),
             "matmul: shape mismatch " << ta.shape_str() << " x " << tb.shape_str());
    const i64 m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
    Tensor out({m, n});
    ker::gemm(ta.data(), tb.data(), out.data(), m, k, n);
    return make_node(std::move(out), {a, b},
                     [a, b, m, k, n](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) {
                             Tensor da({m, k});
                             ker::gemm_nt(g.data(), t.val(b).data(), da.data(), m, n, k);
                             ker::axpy(1.0, da.data(), t.grad_buf(a).data(), da.numel());
                         }
                         if (t.tracked(b)) {
                             Tensor db({k, n});
                             ker::gemm_tn(t.val(a).data(), g.data(), db.data(), k, m, n);
                             ker::axpy(1.0, db.data(), t.grad_buf(b).data(), db.numel());
                         }
                     },
                     "matmul");
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.rank() == 2 && tb.rank() == 2 && ta.dim(1) == tb.dim(1),
             "matmul_nt: shape mismatch " << ta.shape_str() << " x " << tb.shape_str() << "^T");
    const i64 m = ta.dim(0), k = ta.dim(1), n = tb.dim(0);
    Tensor out({m, n});
    ker::gemm_nt(ta.data(), tb.data(), out.data(), m, k, n);
    return make_node(std::move(out), {a, b},
                     [a, b, m, k, n](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) {
                             Tensor da({m, k});
                             ker::gemm(g.data(), t.val(b).data(), da.data(), m, n, k);
                             ker::axpy(1.0, da.data(), t.grad_buf(a).data(), da.numel());
                         }
                         if (t.tracked(b)) {
                             Tensor db({n, k});
                             ker::gemm_tn(g.data(), t.val(a).data(), db.data(), n, m, k);
                             ker::axpy(1.0, db.data(), t.grad_buf(b).data(), db.numel());
                         }
                     },
                     "matmul_nt");
}

Tape::Id Tape::bmm(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.rank() == 3 && tb.rank() == 3 && ta.dim(0) == tb.dim(0) && ta.dim(2) == tb.dim(1),
             "bmm: shape mismatch " << ta.shape_str() << " x " << tb.shape_str());
    const i64 nb = ta.dim(0), m = ta.dim(1), k = ta.dim(2), n = tb.dim(2);
    Tensor out({nb, m, n});
    ker::bmm(ta.data(), tb.data(), out.data(), nb, m, k, n);
    return make_node(std::move(out), {a, b},
                     [a, b, nb, m, k, n](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) {
                             Tensor da({nb, m, k});
                             ker::bmm_nt(g.data(), t.val(b).data(), da.data(), nb, m, n, k);
                             ker::axpy(1.0, da.data(), t.grad_buf(a).data(), da.numel());
                         }
                         if (t.tracked(b)) {
                             Tensor db({nb, k, n});
                             ker::bmm_tn(t.val(a).data(), g.data(), db.data(), nb, k, m, n);
                             ker::axpy(1.0, db.data(), t.grad_buf(b).data(), db.numel());
                         }
                     },
                     "bmm");
}

Tape::Id Tape::bmm_nt(Id a, Id b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    DF_CHECK(ta.rank() == 3 && tb.rank() == 3 && ta.dim(0) == tb.dim(0) && ta.dim(2) == tb.dim(2),
             "bmm_nt: shape mismatch " << ta.shape_str() << " x " << tb.shape_str() << "^T");
    const i64 nb = ta.dim(0), m = ta.dim(1), k = ta.dim(2), n = tb.dim(1);
    Tensor out({nb, m, n});
    ker::bmm_nt(ta.data(), tb.data(), out.data(), nb, m, k, n);
    return make_node(std::move(out), {a, b},
                     [a, b, nb, m, k, n](Tape& t, Tape::Id, const Tensor& g) {
                         if (t.tracked(a)) {
                             Tensor da({nb, m, k});
                             ker::bmm(g.data(), t.val(b).data(), da.data(), nb, m, n, k);
                             ker::axpy(1.0, da.data(), t.grad_buf(a).data(), da.numel());
                         }
                         if (t.tracked(b)) {
                             Tensor db({nb, n, k});
                             ker::bmm_tn(g.data(), t.val(a).data(), db.data(), nb, n, m, k);
                             ker::axpy(1.0, db.data(), t.grad_buf(b).data(), db.numel());
                         }
                     },
                     "bmm_nt");
}

Tape::Id Tape::relu(Id x) {
    const Tensor& tx = val(x);
    Tensor out(tx.shape());
    ker::relu(tx.data(), out.data(), tx.numel());
    return make_node(std::move(out), {x},
                     [x](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor dx(g.shape());
                         ker::relu_backward(t.val(x).data(), g.data(), dx.data(), g.numel());
                         ker::axpy(1.0, dx.data(), t.grad_buf(x).data(), dx.numel());
                     },
                     "relu");
}

Tape::Id Tape::sum(Id x) {
    const Tensor& tx = val(x);
    Tensor out = Tensor::scalar(ker::sum(tx.data(), tx.numel()));
    return make_node(std::move(out), {x},
                     [x](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor& gx = t.grad_buf(x);
                         const double gv = g.at(0);
                         double* d = gx.data();
                         for (i64 i = 0; i < gx.numel(); ++i) d[i] += gv;
                     },
                     "sum");
}

Tape::Id Tape::softmax_masked(Id x, std::shared_ptr<std::vector<unsigned char>> keep) {
    const Tensor& tx = val(x);
    DF_CHECK(tx.rank() >= 1, "softmax: rank must be >= 1");
    const i64 cols = tx.dim(tx.rank() - 1);
    DF_CHECK(cols >= 1, "softmax: empty axis");
    const i64 rows = tx.numel() / cols;
    DF_CHECK(static_cast<i64>(keep->size()) == tx.numel(), "softmax: mask size mismatch");
    // every row needs at least one kept entry
    for (i64 r = 0; r < rows; ++r) {
        bool any = false;
        for (i64 c = 0; c < cols; ++c) any = any || (*keep)[static_cast<size_t>(r * cols + c)];
        DF_CHECK(any, "softmax: fully masked row " << r);
    }
    Tensor out(tx.shape());
    ker::softmax_masked_rows(tx.data(), keep->data(), out.data(), rows, cols);
    return make_node(std::move(out), {x},
                     [x, rows, cols](Tape& t, Tape::Id self, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor dx(g.shape());
                         ker::softmax_masked_rows_backward(t.val(self).data(), g.data(), dx.data(), rows, cols);
                         ker::axpy(1.0, dx.data(), t.grad_buf(x).data(), dx.numel());
                     },
                     "softmax");
}

Tape::Id Tape::softmax_rows(Id x) {
    const Tensor& tx = val(x);
    auto keep = std::make_shared<std::vector<unsigned char>>(static_cast<size_t>(tx.numel()), 1);
    return softmax_masked(x, std::move(keep));
}

Tape::Id Tape::layer_norm(Id x, Id gain, Id shift, double eps) {
    const Tensor& tx = val(x);
    const Tensor& tg = val(gain);
    const Tensor& ts = val(shift);
    DF_CHECK(tx.rank() == 2 && tg.rank() == 1 && ts.rank() == 1 && tx.dim(1) == tg.dim(0) && tx.dim(1) == ts.dim(0),
             "layer_norm: incompatible shapes");
    const i64 rows = tx.dim(0), cols = tx.dim(1);
    Tensor out(tx.shape());
    auto xhat = std::make_shared<Tensor>(tx.shape());
    auto inv_std = std::make_shared<Tensor>(std::vector<i64>{rows});
    ker::layer_norm_rows(tx.data(), tg.data(), ts.data(), out.data(), xhat->data(), inv_std->data(), rows, cols, eps);
    return make_node(std::move(out), {x, gain, shift},
                     [x, gain, shift, xhat, inv_std, rows, cols](Tape& t, Tape::Id, const Tensor& g) {
                         Tensor dx({rows, cols});
                         Tensor dgain({cols});
                         Tensor dshift({cols});
                         ker::layer_norm_rows_backward(xhat->data(), inv_std->data(), t.val(gain).data(), g.data(),
                                                       dx.data(), dgain.data(), dshift.data(), rows, cols);
                         if (t.tracked(x)) ker::axpy(1.0, dx.data(), t.grad_buf(x).data(), dx.numel());
                         if (t.tracked(gain)) ker::axpy(1.0, dgain.data(), t.grad_buf(gain).data(), dgain.numel());
                         if (t.tracked(shift)) ker::axpy(1.0, dshift.data(), t.grad_buf(shift).data(), dshift.numel());
                     },
                     "layer_norm");
}

Tape::Id Tape::dropout(Id x, double rate, Rng& rng, bool training) {
    DF_CHECK(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1), got " << rate);
    if (!training || rate == 0.0) return x;
    const Tensor& tx = val(x);
    const i64 n = tx.numel();
    auto keep_scale = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    const double inv_keep = 1.0 / (1.0 - rate);
    // mask sampling stays serial so the draw order is seed-determined
    for (i64 i = 0; i < n; ++i) (*keep_scale)[static_cast<size_t>(i)] = (rng.uniform() < rate) ? 0.0 : inv_keep;
    Tensor out(tx.shape());
    ker::mul(tx.data(), keep_scale->data(), out.data(), n);
    return make_node(std::move(out), {x},
                     [x, keep_scale, n](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor dx(g.shape());
                         ker::mul(g.data(), keep_scale->data(), dx.data(), n);
                         ker::axpy(1.0, dx.data(), t.grad_buf(x).data(), n);
                     },
                     "dropout");
}

Tape::Id Tape::take_rows(Id x, std::shared_ptr<std::vector<i64>> rows) {
    const Tensor& tx = val(x);
    DF_CHECK(tx.rank() == 2, "take_rows: source must be rank 2");
    const i64 cols = tx.dim(1);
    const i64 nsrc = tx.dim(0);
    const i64 nout = static_cast<i64>(rows->size());
    Tensor out({nout, cols});
    for (i64 i = 0; i < nout; ++i) {
        const i64 r = (*rows)[static_cast<size_t>(i)];
        DF_CHECK(r >= 0 && r < nsrc, "take_rows: row " << r << " out of range [0," << nsrc << ")");
        for (i64 c = 0; c < cols; ++c) out.at(i * cols + c) = tx.at(r * cols + c);
    }
    return make_node(std::move(out), {x},
                     [x, rows, cols](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor& gx = t.grad_buf(x);
                         // serial scatter: duplicate indices accumulate in a
                         // fixed order
                         for (size_t i = 0; i < rows->size(); ++i) {
                             const i64 r = (*rows)[i];
                             for (i64 c = 0; c < cols; ++c)
                                 gx.at(r * cols + c) += g.at(static_cast<i64>(i) * cols + c);
                         }
                     },
                     "take_rows");
}

Tape::Id Tape::embedding_rows(Id table, std::shared_ptr<std::vector<i64>> ids) {
    const Tensor& tx = val(table);
    DF_CHECK(tx.rank() == 2, "embedding_rows: table must be rank 2");
    const i64 cols = tx.dim(1);
    const i64 nsrc = tx.dim(0);
    const i64 nout = static_cast<i64>(ids->size());
    Tensor out({nout, cols});
    for (i64 i = 0; i < nout; ++i) {
        const i64 r = (*ids)[static_cast<size_t>(i)];
        DF_CHECK(r >= 0 && r < nsrc, "embedding_rows: id " << r << " out of range [0," << nsrc << ")");
        for (i64 c = 0; c < cols; ++c) out.at(i * cols + c) = tx.at(r * cols + c);
    }
    return make_node(std::move(out), {table},
                     [table, ids, cols](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(table)) return;
                         Tensor& gx = t.grad_buf(table);
                         for (size_t i = 0; i < ids->size(); ++i) {
                             const i64 r = (*ids)[i];
                             if (r == 0) continue;  // padding row stays frozen
                             for (i64 c = 0; c < cols; ++c)
                                 gx.at(r * cols + c) += g.at(static_cast<i64>(i) * cols + c);
                         }
                     },
                     "embedding_rows");
}

Tape::Id Tape::split_heads(Id x, i64 batch, i64 width, i64 heads) {
    const Tensor& tx = val(x);
    DF_CHECK(tx.rank() == 2 && tx.dim(0) == batch * width && tx.dim(1) % heads == 0,
             "split_heads: incompatible shape " << tx.shape_str());
    const i64 d = tx.dim(1);
    const i64 dh = d / heads;
    Tensor out({batch * heads, width, dh});
    for (i64 b = 0; b < batch; ++b)
        for (i64 h = 0; h < heads; ++h)
            for (i64 w = 0; w < width; ++w)
                for (i64 c = 0; c < dh; ++c)
                    out.at(((b * heads + h) * width + w) * dh + c) = tx.at((b * width + w) * d + h * dh + c);
    return make_node(std::move(out), {x},
                     [x, batch, width, heads, d, dh](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor& gx = t.grad_buf(x);
                         for (i64 b = 0; b < batch; ++b)
                             for (i64 h = 0; h < heads; ++h)
                                 for (i64 w = 0; w < width; ++w)
                                     for (i64 c = 0; c < dh; ++c)
                                         gx.at((b * width + w) * d + h * dh + c) +=
                                             g.at(((b * heads + h) * width + w) * dh + c);
                     },
                     "split_heads");
}

Tape::Id Tape::merge_heads(Id x, i64 batch, i64 width, i64 heads) {
    const Tensor& tx = val(x);
    DF_CHECK(tx.rank() == 3 && tx.dim(0) == batch * heads && tx.dim(1) == width,
             "merge_heads: incompatible shape " << tx.shape_str());
    const i64 dh = tx.dim(2);
    const i64 d = dh * heads;
    Tensor out({batch * width, d});
    for (i64 b = 0; b < batch; ++b)
        for (i64 h = 0; h < heads; ++h)
            for (i64 w = 0; w < width; ++w)
                for (i64 c = 0; c < dh; ++c)
                    out.at((b * width + w) * d + h * dh + c) = tx.at(((b * heads + h) * width + w) * dh + c);
    return make_node(std::move(out), {x},
                     [x, batch, width, heads, d, dh](Tape& t, Tape::Id, const Tensor& g) {
                         if (!t.tracked(x)) return;
                         Tensor& gx = t.grad_buf(x);
                         for (i64 b = 0; b < batch; ++b)
                             for (i64 h = 0; h < heads; ++h)
                                 for (i64 w = 0; w < width; ++w)
                                     for (i64 c = 0; c < dh; ++c)
                                         gx.at(((b * heads + h) * width + w) * dh + c) +=
                                             g.at((b * width + w) * d + h * dh + c);
                     },
                     "merge_heads");
}

std::vector<Tensor> Tape::gradients(Id loss, std::span<const Id> wrt) {
    DF_CHECK(val(loss).numel() == 1, "gradients: loss must be scalar, got shape " << val(loss).shape_str());
    grads_.assign(nodes_.size(), Tensor());
    grad_buf(loss).at(0) = 1.0;
    for (Id id = loss; id >= 0; --id) {
        auto& node = nodes_[static_cast<size_t>(id)];
        Tensor& g = grads_[static_cast<size_t>(id)];
        if (g.numel() == 0 || !node.tracked || !node.vjp) continue;
        g.check_finite("grad(" + node.name + ")");
        node.vjp(*this, id, g);
    }
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (Id w : wrt) {
        Tensor& g = grads_[static_cast<size_t>(w)];
        out.push_back(g.numel() == 0 ? Tensor(val(w).shape()) : std::move(g));
    }
    grads_.clear();
    return out;
}

}  // namespace driftforge
