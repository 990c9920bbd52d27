// SPDX-License-Identifier: Apache-2.0
#include "driftforge/infonce.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <memory>
#include <numeric>

#include "driftforge/kernels.hpp"

namespace driftforge {

namespace ker = driftforge::kernels;

void ContrastiveConfig::validate() const {
    DF_CHECK(temperature > 0.0, "contrastive: temperature must be positive");
    DF_CHECK(top_k >= 1, "contrastive: top_k must be >= 1");
    if (projection.numel() > 0) DF_CHECK(projection.rank() == 2, "contrastive: projection must be a matrix");
}

std::vector<i64> select_hard_negatives(std::span<const double> sim_row, i64 self_index, i64 k) {
    const i64 n = static_cast<i64>(sim_row.size());
    DF_CHECK(self_index >= 0 && self_index < n, "select_hard_negatives: self index out of range");
    std::vector<i64> cand;
    cand.reserve(static_cast<size_t>(n - 1));
    for (i64 j = 0; j < n; ++j)
        if (j != self_index) cand.push_back(j);
    const i64 kk = std::min<i64>(std::max<i64>(k, 1), n - 1);
    std::sort(cand.begin(), cand.end(), [&](i64 a, i64 b) {
        if (sim_row[static_cast<size_t>(a)] != sim_row[static_cast<size_t>(b)])
            return sim_row[static_cast<size_t>(a)] > sim_row[static_cast<size_t>(b)];
        return a < b;  // deterministic tie-break
    });
    cand.resize(static_cast<size_t>(kk));
    return cand;
}

namespace {

// Row-normalize for cosine similarity; norms clamped away from zero.
void normalize_rows(const Tensor& x, Tensor& out, std::vector<double>& norms) {
    const i64 rows = x.dim(0), cols = x.dim(1);
    norms.resize(static_cast<size_t>(rows));
    for (i64 r = 0; r < rows; ++r) {
        double s = 0.0;
        for (i64 c = 0; c < cols; ++c) s += x.at2(r, c) * x.at2(r, c);
        const double nrm = std::max(std::sqrt(s), 1e-12);
        norms[static_cast<size_t>(r)] = nrm;
        for (i64 c = 0; c < cols; ++c) out.at2(r, c) = x.at2(r, c) / nrm;
    }
}

}  // namespace

Tape::Id infonce_topk(Tape& tape, Tape::Id anchors, const Tensor& positives, const ContrastiveConfig& cfg) {
    cfg.validate();
    Tape::Id a = anchors;
    Tensor pos = positives;
    if (cfg.projection.numel() > 0) {
        a = tape.matmul(a, tape.constant(cfg.projection));
        Tensor projected({positives.dim(0), cfg.projection.dim(1)});
        ker::gemm(positives.data(), cfg.projection.data(), projected.data(), positives.dim(0), positives.dim(1),
                  cfg.projection.dim(1));
        pos = std::move(projected);
    }
    const Tensor& av = tape.val(a);
    DF_CHECK(av.rank() == 2 && av.same_shape(pos),
             "infonce: anchors " << av.shape_str() << " and positives must share shape");
    const i64 B = av.dim(0);
    const i64 d = av.dim(1);
    if (B < 2) {
        std::cerr << "[driftforge] infonce: batch of " << B << " has no negatives; loss set to 0\n";
        return tape.constant(Tensor::scalar(0.0));
    }
    const i64 k = std::min<i64>(cfg.top_k, B - 1);
    const double tau = cfg.temperature;
    const bool cosine = cfg.similarity == ContrastiveConfig::Similarity::Cosine;

    auto a_hat = std::make_shared<Tensor>(std::vector<i64>{B, d});
    auto p_hat = std::make_shared<Tensor>(std::vector<i64>{B, d});
    auto a_norms = std::make_shared<std::vector<double>>();
    std::vector<double> p_norms;
    if (cosine) {
        normalize_rows(av, *a_hat, *a_norms);
        normalize_rows(pos, *p_hat, p_norms);
    } else {
        *a_hat = av;
        *p_hat = pos;
    }

    // pairwise similarities among negative candidates
    const Tensor& negatives_src = cfg.negatives_from_positives ? *p_hat : *a_hat;
    Tensor sims({B, B});
    ker::gemm_nt(a_hat->data(), negatives_src.data(), sims.data(), B, d, B);

    auto neighbor = std::make_shared<std::vector<std::vector<i64>>>();
    auto pi = std::make_shared<Tensor>(std::vector<i64>{B, k + 1});  // softmax over [pos, negatives...]
    double loss = 0.0;
    for (i64 i = 0; i < B; ++i) {
        double s_pos = 0.0;
        for (i64 c = 0; c < d; ++c) s_pos += a_hat->at2(i, c) * p_hat->at2(i, c);
        auto negs = select_hard_negatives(std::span<const double>(sims.data() + i * B, static_cast<size_t>(B)), i, k);
        std::vector<double> z(static_cast<size_t>(k + 1));
        z[0] = s_pos / tau;
        for (i64 m = 0; m < k; ++m) z[static_cast<size_t>(m + 1)] = sims.at2(i, negs[static_cast<size_t>(m)]) / tau;
        const double mx = *std::max_element(z.begin(), z.end());
        double denom = 0.0;
        for (double v : z) denom += std::exp(v - mx);
        const double lse = mx + std::log(denom);
        loss += lse - z[0];
        for (i64 m = 0; m <= k; ++m) pi->at2(i, m) = std::exp(z[static_cast<size_t>(m)] - lse);
        neighbor->push_back(std::move(negs));
    }
    loss /= static_cast<double>(B);

    const bool negs_tracked = !cfg.negatives_from_positives;
    return tape.make_node(
        Tensor::scalar(loss), {a},
        [a, a_hat, p_hat, a_norms, neighbor, pi, B, d, k, tau, cosine, negs_tracked](Tape& t, Tape::Id,
                                                                                     const Tensor& g) {
            if (!t.tracked(a)) return;
            const double coef = g.at(0) / (static_cast<double>(B) * tau);
            // gradient w.r.t. the (possibly normalized) anchors
            Tensor ga_hat({B, d});
            for (i64 i = 0; i < B; ++i) {
                const double w_pos = coef * (pi->at2(i, 0) - 1.0);
                for (i64 c = 0; c < d; ++c) ga_hat.at2(i, c) += w_pos * p_hat->at2(i, c);
                const auto& negs = (*neighbor)[static_cast<size_t>(i)];
                for (i64 m = 0; m < k; ++m) {
                    const i64 j = negs[static_cast<size_t>(m)];
                    const double w = coef * pi->at2(i, m + 1);
                    const Tensor& src = negs_tracked ? *a_hat : *p_hat;
                    for (i64 c = 0; c < d; ++c) ga_hat.at2(i, c) += w * src.at2(j, c);
                    if (negs_tracked)
                        for (i64 c = 0; c < d; ++c) ga_hat.at2(j, c) += w * a_hat->at2(i, c);
                }
            }
            Tensor& ga = t.grad_buf(a);
            if (!cosine) {
                ker::axpy(1.0, ga_hat.data(), ga.data(), ga_hat.numel());
                return;
            }
            // through the row normalization: (I - aa^T) / ||a||
            for (i64 i = 0; i < B; ++i) {
                double dot = 0.0;
                for (i64 c = 0; c < d; ++c) dot += ga_hat.at2(i, c) * a_hat->at2(i, c);
                const double inv = 1.0 / (*a_norms)[static_cast<size_t>(i)];
                for (i64 c = 0; c < d; ++c)
                    ga.at2(i, c) += (ga_hat.at2(i, c) - dot * a_hat->at2(i, c)) * inv;
            }
        },
        "infonce");
}

Tape::Id kl_consistency(Tape& tape, Tape::Id logits_updated, const Tensor& logits_reference) {
    const Tensor& zu = tape.val(logits_updated);
    DF_CHECK(zu.rank() == 2 && zu.same_shape(logits_reference), "kl: logits shape mismatch");
    const i64 B = zu.dim(0);
    const i64 V = zu.dim(1);
    auto q = std::make_shared<Tensor>(std::vector<i64>{B, V});  // reference distribution
    auto p = std::make_shared<Tensor>(std::vector<i64>{B, V});  // updated distribution
    double loss = 0.0;
    for (i64 b = 0; b < B; ++b) {
        const double* zr = logits_reference.data() + b * V;
        const double* zp = zu.data() + b * V;
        double mr = zr[0], mp = zp[0];
        for (i64 j = 1; j < V; ++j) {
            mr = std::max(mr, zr[j]);
            mp = std::max(mp, zp[j]);
        }
        double dr = 0.0, dp = 0.0;
        for (i64 j = 0; j < V; ++j) {
            dr += std::exp(zr[j] - mr);
            dp += std::exp(zp[j] - mp);
        }
        const double lser = mr + std::log(dr);
        const double lsep = mp + std::log(dp);
        for (i64 j = 0; j < V; ++j) {
            const double qv = std::exp(zr[j] - lser);
            q->at2(b, j) = qv;
            p->at2(b, j) = std::exp(zp[j] - lsep);
            if (qv > 0.0) loss += qv * ((zr[j] - lser) - (zp[j] - lsep));
        }
    }
    loss /= static_cast<double>(B);
    loss = std::max(loss, 0.0);  // clamp tiny negative rounding
    return tape.make_node(
        Tensor::scalar(loss), {logits_updated},
        [logits_updated, q, p, B, V](Tape& t, Tape::Id, const Tensor& g) {
            if (!t.tracked(logits_updated)) return;
            Tensor& gz = t.grad_buf(logits_updated);
            const double scale = g.at(0) / static_cast<double>(B);
            for (i64 b = 0; b < B; ++b)
                for (i64 j = 0; j < V; ++j) gz.at2(b, j) += scale * (p->at2(b, j) - q->at2(b, j));
        },
        "kl_consistency");
}

}  // namespace driftforge
