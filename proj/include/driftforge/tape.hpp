// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "driftforge/rng.hpp"
#include "driftforge/tensor.hpp"

namespace driftforge {

// Reverse-mode gradient tape. Operations evaluate eagerly, record their
// vector-Jacobian product, and return an id into the tape. One tape is
// built per forward pass and dropped afterwards; ids are only valid for
// the tape that produced them.
//
// Nodes whose inputs are all untracked record no backward function, so a
// forward pass over untracked leaves doubles as inference.
class Tape {
public:
    using Id = i64;
    // Backward callback: `self` is the node's own id (its value is the
    // forward output, handy for ops like softmax whose derivative is
    // cheapest in terms of the output).
    using Vjp = std::function<void(Tape&, Id self, const Tensor& grad_out)>;

    Id leaf(Tensor value, bool track);
    Id constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& val(Id id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool tracked(Id id) const { return nodes_[static_cast<size_t>(id)].tracked; }
    i64 size() const { return static_cast<i64>(nodes_.size()); }

    // Extension point for fused operations defined outside this module.
    // `vjp` receives the upstream gradient and must accumulate into the
    // parents via grad_buf(). It is dropped when no parent is tracked.
    Id make_node(Tensor value, std::vector<Id> parents, Vjp vjp, std::string name);

    // Gradient accumulation buffer for `id`, allocated to zeros on first use.
    Tensor& grad_buf(Id id);

    // Elementwise and linear-algebra primitives.
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id scale(Id a, double s);
    Id add_bias(Id x, Id bias);              // x:[r,c] + bias:[c] per row
    Id matmul(Id a, Id b);                   // [m,k]x[k,n]
    Id matmul_nt(Id a, Id b);                // [m,k]x[n,k]^T
    Id bmm(Id a, Id b);                      // [nb,m,k]x[nb,k,n]
    Id bmm_nt(Id a, Id b);                   // [nb,m,k]x[nb,n,k]^T
    Id relu(Id x);
    Id sum(Id x);                            // -> scalar [1]

    // softmax over the last dimension with a keep mask of the same length
    // as x; dropped entries get probability exactly 0.
    Id softmax_masked(Id x, std::shared_ptr<std::vector<unsigned char>> keep);
    // Unmasked convenience wrapper (keep-all).
    Id softmax_rows(Id x);

    Id layer_norm(Id x, Id gain, Id shift, double eps = 1e-12);

    // Inverted dropout; identity in eval mode or at rate 0 (consumes no
    // randomness in those cases).
    Id dropout(Id x, double rate, Rng& rng, bool training);

    // Row gather; backward scatter-adds into the source.
    Id take_rows(Id x, std::shared_ptr<std::vector<i64>> rows);
    // Row gather for embedding tables: index 0 is the padding row and is
    // skipped on the backward scatter, so it never receives gradient.
    Id embedding_rows(Id table, std::shared_ptr<std::vector<i64>> ids);

    // Head split/merge for multi-head attention: [B*W, d] <-> [B*h, W, d/h].
    Id split_heads(Id x, i64 batch, i64 width, i64 heads);
    Id merge_heads(Id x, i64 batch, i64 width, i64 heads);

    // Backward pass from a scalar loss. Returns one gradient per entry of
    // `wrt`, shaped like the corresponding value; leaves the loss does not
    // reach get zero gradients.
    std::vector<Tensor> gradients(Id loss, std::span<const Id> wrt);

private:
    struct Node {
        Tensor value;
        std::vector<Id> parents;
        Vjp vjp;
        bool tracked = false;
        std::string name;
    };

    bool any_tracked(const std::vector<Id>& ids) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

}  // namespace driftforge
