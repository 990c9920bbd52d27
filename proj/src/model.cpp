// SPDX-License-Identifier: Apache-2.0
#include "driftforge/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "driftforge/kernels.hpp"

namespace driftforge {

namespace ker = driftforge::kernels;

void ModelConfig::validate() const {
    DF_CHECK(hidden_dim >= 1 && n_blocks >= 1 && n_heads >= 1 && max_seq_len >= 1, "model config: sizes must be >= 1");
    DF_CHECK(hidden_dim % n_heads == 0, "model config: hidden_dim " << hidden_dim << " not divisible by n_heads "
                                                                    << n_heads);
    DF_CHECK(dropout_rate >= 0.0 && dropout_rate < 1.0, "model config: dropout_rate must be in [0,1)");
    DF_CHECK(vocab_size >= 2, "model config: vocab_size must be >= 2 (padding + items)");
}

namespace {

Tensor normal_init(std::vector<i64> shape, Rng& rng, double stddev = 0.02) {
    Tensor t(std::move(shape));
    for (i64 i = 0; i < t.numel(); ++i) t.at(i) = stddev * rng.normal();
    return t;
}

}  // namespace

ParamSet ParamSet::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamSet p;
    const i64 d = cfg.hidden_dim;
    const i64 f = cfg.ffn_dim();
    Tensor emb = normal_init({cfg.vocab_size, d}, rng);
    for (i64 c = 0; c < d; ++c) emb.at(c) = 0.0;  // padding row stays zero
    p.entries_.emplace_back("item_emb", std::move(emb));
    p.entries_.emplace_back("pos_emb", normal_init({cfg.max_seq_len, d}, rng));
    for (i64 b = 0; b < cfg.n_blocks; ++b) {
        const std::string pre = "blk" + std::to_string(b) + ".";
        p.entries_.emplace_back(pre + "ln1.gain", Tensor::full({d}, 1.0));
        p.entries_.emplace_back(pre + "ln1.shift", Tensor({d}));
        p.entries_.emplace_back(pre + "attn.wq", normal_init({d, d}, rng));
        p.entries_.emplace_back(pre + "attn.bq", Tensor({d}));
        p.entries_.emplace_back(pre + "attn.wk", normal_init({d, d}, rng));
        p.entries_.emplace_back(pre + "attn.bk", Tensor({d}));
        p.entries_.emplace_back(pre + "attn.wv", normal_init({d, d}, rng));
        p.entries_.emplace_back(pre + "attn.bv", Tensor({d}));
        p.entries_.emplace_back(pre + "attn.wo", normal_init({d, d}, rng));
        p.entries_.emplace_back(pre + "attn.bo", Tensor({d}));
        p.entries_.emplace_back(pre + "ln2.gain", Tensor::full({d}, 1.0));
        p.entries_.emplace_back(pre + "ln2.shift", Tensor({d}));
        p.entries_.emplace_back(pre + "ffn.w1", normal_init({d, f}, rng));
        p.entries_.emplace_back(pre + "ffn.b1", Tensor({f}));
        p.entries_.emplace_back(pre + "ffn.w2", normal_init({f, d}, rng));
        p.entries_.emplace_back(pre + "ffn.b2", Tensor({d}));
    }
    p.entries_.emplace_back("final_ln.gain", Tensor::full({d}, 1.0));
    p.entries_.emplace_back("final_ln.shift", Tensor({d}));
    return p;
}

Tensor& ParamSet::at(const std::string& name) {
    for (auto& [n, t] : entries_)
        if (n == name) return t;
    DF_CHECK(false, "param '" << name << "' not found");
    throw std::runtime_error("unreachable");
}

const Tensor& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

void ParamSet::grow_vocab(i64 new_vocab_size, Rng& rng) {
    Tensor& emb = at("item_emb");
    const i64 old_rows = emb.dim(0);
    const i64 d = emb.dim(1);
    DF_CHECK(new_vocab_size >= old_rows, "grow_vocab: cannot shrink from " << old_rows << " to " << new_vocab_size);
    if (new_vocab_size == old_rows) return;
    Tensor grown({new_vocab_size, d});
    std::copy(emb.data(), emb.data() + old_rows * d, grown.data());
    for (i64 r = old_rows; r < new_vocab_size; ++r)
        for (i64 c = 0; c < d; ++c) grown.at(r * d + c) = 0.02 * rng.normal();
    emb = std::move(grown);
}

std::vector<unsigned char> ParamSet::serialize(const ModelConfig& cfg) const {
    std::map<std::string, double> meta = {
        {"hidden_dim", static_cast<double>(cfg.hidden_dim)},   {"n_blocks", static_cast<double>(cfg.n_blocks)},
        {"n_heads", static_cast<double>(cfg.n_heads)},         {"max_seq_len", static_cast<double>(cfg.max_seq_len)},
        {"dropout_rate", cfg.dropout_rate},                    {"vocab_size", static_cast<double>(vocab_size())},
    };
    return encode_records("DRIFTFORGE-CKPT-1", meta, entries_);
}

std::string ParamSet::sha256(const ModelConfig& cfg) const { return sha256_hex(serialize(cfg)); }

void ParamSet::save(const std::string& path, const ModelConfig& cfg) const { write_file(path, serialize(cfg)); }

std::pair<ParamSet, ModelConfig> ParamSet::load(const std::string& path) {
    auto decoded = decode_records(read_file(path), "DRIFTFORGE-CKPT-1");
    ModelConfig cfg;
    cfg.hidden_dim = static_cast<i64>(decoded.meta.at("hidden_dim"));
    cfg.n_blocks = static_cast<i64>(decoded.meta.at("n_blocks"));
    cfg.n_heads = static_cast<i64>(decoded.meta.at("n_heads"));
    cfg.max_seq_len = static_cast<i64>(decoded.meta.at("max_seq_len"));
    cfg.dropout_rate = decoded.meta.at("dropout_rate");
    cfg.vocab_size = static_cast<i64>(decoded.meta.at("vocab_size"));
    ParamSet p;
    p.entries_ = std::move(decoded.records);
    return {std::move(p), cfg};
}

PaddedBatch pad_prefixes(const std::vector<std::vector<i64>>& prefixes, i64 min_width) {
    DF_CHECK(!prefixes.empty(), "pad_prefixes: empty batch");
    i64 width = min_width;
    for (const auto& p : prefixes) {
        DF_CHECK(!p.empty(), "pad_prefixes: prefix lengths must be >= 1");
        width = std::max(width, static_cast<i64>(p.size()));
    }
    PaddedBatch out;
    out.width = width;
    out.idx.assign(static_cast<size_t>(width) * prefixes.size(), 0);
    for (size_t b = 0; b < prefixes.size(); ++b) {
        const auto& p = prefixes[b];
        out.lengths.push_back(static_cast<i64>(p.size()));
        const i64 off = static_cast<i64>(b) * width + width - static_cast<i64>(p.size());
        for (size_t k = 0; k < p.size(); ++k) out.idx[static_cast<size_t>(off) + k] = p[k];
    }
    return out;
}

PaddedBatch pad_batch(std::span<const Sample> samples, i64 min_width) {
    std::vector<std::vector<i64>> prefixes;
    prefixes.reserve(samples.size());
    for (const auto& s : samples) prefixes.push_back(s.prefix);
    return pad_prefixes(prefixes, min_width);
}

BoundModel model_forward(Tape& tape, const ParamSet& params, const ModelConfig& cfg, const PaddedBatch& batch,
                         bool training, bool track, Rng* dropout_rng) {
    cfg.validate();
    const i64 B = batch.batch();
    const i64 W = batch.width;
    const i64 d = cfg.hidden_dim;
    const i64 heads = cfg.n_heads;
    const i64 dh = d / heads;
    DF_CHECK(B >= 1 && W >= 1, "forward: empty batch");
    DF_CHECK(static_cast<i64>(batch.idx.size()) == B * W, "forward: idx size mismatch");
    for (i64 b = 0; b < B; ++b) {
        const i64 len = batch.lengths[static_cast<size_t>(b)];
        DF_CHECK(len >= 1, "forward: prefix length must be >= 1");
        DF_CHECK(len <= cfg.max_seq_len, "forward: sequence of length " << len << " exceeds max_seq_len "
                                                                        << cfg.max_seq_len);
        DF_CHECK(len <= W, "forward: length exceeds batch width");
    }
    DF_CHECK(!training || dropout_rng != nullptr || cfg.dropout_rate == 0.0,
             "forward: training with dropout requires an RNG");

    BoundModel bound;
    std::map<std::string, Tape::Id> ids;
    for (const auto& [name, t] : params.entries()) {
        const Tape::Id id = tape.leaf(t, track);
        ids[name] = id;
        bound.param_ids.push_back(id);
    }

    // item + positional embeddings; positional rows are anchored to the
    // sequence end so left-padding depth cannot shift them
    auto item_ids = std::make_shared<std::vector<i64>>(batch.idx);
    auto pos_ids = std::make_shared<std::vector<i64>>();
    pos_ids->reserve(static_cast<size_t>(B * W));
    for (i64 b = 0; b < B; ++b)
        for (i64 j = 0; j < W; ++j) pos_ids->push_back(std::max<i64>(0, cfg.max_seq_len - W + j));
    // positional rows use take_rows: row 0 is a real position and must
    // receive gradient, unlike the item-embedding padding row
    Tape::Id x = tape.add(tape.embedding_rows(ids.at("item_emb"), item_ids),
                          tape.take_rows(ids.at("pos_emb"), pos_ids));
    Rng dummy(0);
    Rng& drng = dropout_rng ? *dropout_rng : dummy;
    x = tape.dropout(x, cfg.dropout_rate, drng, training);

    // attention keep mask: causal, real keys only, diagonal always allowed
    // so fully padded query rows stay well-defined
    auto keep = std::make_shared<std::vector<unsigned char>>();
    keep->resize(static_cast<size_t>(B * heads * W * W), 0);
    for (i64 b = 0; b < B; ++b) {
        const i64 len = batch.lengths[static_cast<size_t>(b)];
        const i64 first_real = W - len;
        for (i64 q = 0; q < W; ++q)
            for (i64 k = 0; k <= q; ++k) {
                const bool ok = (k >= first_real) || (k == q);
                if (!ok) continue;
                for (i64 h = 0; h < heads; ++h) keep->at(static_cast<size_t>(((b * heads + h) * W + q) * W + k)) = 1;
            }
    }

    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    for (i64 blk = 0; blk < cfg.n_blocks; ++blk) {
        const std::string pre = "blk" + std::to_string(blk) + ".";
        Tape::Id xn = tape.layer_norm(x, ids.at(pre + "ln1.gain"), ids.at(pre + "ln1.shift"));
        Tape::Id q = tape.add_bias(tape.matmul(xn, ids.at(pre + "attn.wq")), ids.at(pre + "attn.bq"));
        Tape::Id k = tape.add_bias(tape.matmul(xn, ids.at(pre + "attn.wk")), ids.at(pre + "attn.bk"));
        Tape::Id v = tape.add_bias(tape.matmul(xn, ids.at(pre + "attn.wv")), ids.at(pre + "attn.bv"));
        Tape::Id qh = tape.split_heads(q, B, W, heads);
        Tape::Id kh = tape.split_heads(k, B, W, heads);
        Tape::Id vh = tape.split_heads(v, B, W, heads);
        Tape::Id scores = tape.scale(tape.bmm_nt(qh, kh), inv_sqrt_dh);
        Tape::Id probs = tape.softmax_masked(scores, keep);
        Tape::Id ctx = tape.merge_heads(tape.bmm(probs, vh), B, W, heads);
        Tape::Id attn_out = tape.add_bias(tape.matmul(ctx, ids.at(pre + "attn.wo")), ids.at(pre + "attn.bo"));
        attn_out = tape.dropout(attn_out, cfg.dropout_rate, drng, training);
        x = tape.add(x, attn_out);

        Tape::Id xn2 = tape.layer_norm(x, ids.at(pre + "ln2.gain"), ids.at(pre + "ln2.shift"));
        Tape::Id f1 = tape.relu(tape.add_bias(tape.matmul(xn2, ids.at(pre + "ffn.w1")), ids.at(pre + "ffn.b1")));
        Tape::Id f2 = tape.add_bias(tape.matmul(f1, ids.at(pre + "ffn.w2")), ids.at(pre + "ffn.b2"));
        f2 = tape.dropout(f2, cfg.dropout_rate, drng, training);
        x = tape.add(x, f2);
    }

    bound.h_all = tape.layer_norm(x, ids.at("final_ln.gain"), ids.at("final_ln.shift"));
    auto last_rows = std::make_shared<std::vector<i64>>();
    for (i64 b = 0; b < B; ++b) last_rows->push_back(b * W + W - 1);
    bound.h_last = tape.take_rows(bound.h_all, last_rows);
    return bound;
}

Tape::Id score_items(Tape& tape, Tape::Id h_last, Tape::Id item_emb) {
    const Tensor& h = tape.val(h_last);
    const Tensor& emb = tape.val(item_emb);
    DF_CHECK(h.rank() == 2 && emb.rank() == 2 && h.dim(1) == emb.dim(1),
             "score_items: incompatible shapes " << h.shape_str() << " and " << emb.shape_str());
    const i64 B = h.dim(0);
    const i64 d = h.dim(1);
    const i64 V = emb.dim(0) - 1;  // padding row excluded from ranking
    DF_CHECK(V >= 1, "score_items: empty item vocabulary");
    Tensor logits({B, V});
    ker::gemm_nt(h.data(), emb.data() + d, logits.data(), B, d, V);
    return tape.make_node(
        std::move(logits), {h_last, item_emb},
        [h_last, item_emb, B, d, V](Tape& t, Tape::Id, const Tensor& g) {
            if (t.tracked(h_last)) {
                Tensor dh({B, d});
                ker::gemm(g.data(), t.val(item_emb).data() + d, dh.data(), B, V, d);
                ker::axpy(1.0, dh.data(), t.grad_buf(h_last).data(), dh.numel());
            }
            if (t.tracked(item_emb)) {
                Tensor demb({V, d});
                ker::gemm_tn(g.data(), t.val(h_last).data(), demb.data(), V, B, d);
                ker::axpy(1.0, demb.data(), t.grad_buf(item_emb).data() + d, demb.numel());
            }
        },
        "score_items");
}

Tape::Id ce_loss(Tape& tape, Tape::Id logits, std::span<const i64> target_items) {
    const Tensor& z = tape.val(logits);
    DF_CHECK(z.rank() == 2, "ce_loss: logits must be rank 2");
    const i64 B = z.dim(0);
    const i64 V = z.dim(1);
    DF_CHECK(static_cast<i64>(target_items.size()) == B, "ce_loss: target count mismatch");
    auto cols = std::make_shared<std::vector<i64>>();
    cols->reserve(static_cast<size_t>(B));
    for (i64 it : target_items) {
        DF_CHECK(it >= 1 && it <= V, "ce_loss: target item " << it << " out of range [1," << V << "]");
        cols->push_back(it - 1);
    }
    double loss = 0.0;
    auto probs = std::make_shared<Tensor>(std::vector<i64>{B, V});
    for (i64 b = 0; b < B; ++b) {
        const double* zr = z.data() + b * V;
        double mx = zr[0];
        for (i64 j = 1; j < V; ++j) mx = std::max(mx, zr[j]);
        double denom = 0.0;
        for (i64 j = 0; j < V; ++j) denom += std::exp(zr[j] - mx);
        const double lse = mx + std::log(denom);
        loss += lse - zr[(*cols)[static_cast<size_t>(b)]];
        double* pr = probs->data() + b * V;
        for (i64 j = 0; j < V; ++j) pr[j] = std::exp(zr[j] - lse);
    }
    loss /= static_cast<double>(B);
    return tape.make_node(
        Tensor::scalar(loss), {logits},
        [logits, cols, probs, B, V](Tape& t, Tape::Id, const Tensor& g) {
            if (!t.tracked(logits)) return;
            Tensor& gz = t.grad_buf(logits);
            const double scale = g.at(0) / static_cast<double>(B);
            for (i64 b = 0; b < B; ++b) {
                const double* pr = probs->data() + b * V;
                double* gr = gz.data() + b * V;
                for (i64 j = 0; j < V; ++j) gr[j] += scale * pr[j];
                gr[(*cols)[static_cast<size_t>(b)]] -= scale;
            }
        },
        "ce_loss");
}

}  // namespace driftforge
