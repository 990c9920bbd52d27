// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "driftforge/data.hpp"
#include "driftforge/serialize.hpp"
#include "driftforge/tape.hpp"

namespace driftforge {

struct ModelConfig {
    i64 hidden_dim = 150;
    i64 n_blocks = 2;
    i64 n_heads = 1;
    i64 max_seq_len = 50;
    double dropout_rate = 0.1;
    i64 vocab_size = 0;  // |I| + 1 (row 0 is padding)

    i64 ffn_dim() const { return 2 * hidden_dim; }
    void validate() const;
};

// Named, ordered parameter tensors. Names are stable and identical
// between the updated and reference models so Fisher state and masks
// align parameter-wise. The item-embedding padding row (index 0) is all
// zeros and never receives gradient.
class ParamSet {
public:
    static ParamSet init(const ModelConfig& cfg, Rng& rng);

    i64 size() const { return static_cast<i64>(entries_.size()); }
    const std::string& name(i64 i) const { return entries_[static_cast<size_t>(i)].first; }
    Tensor& tensor(i64 i) { return entries_[static_cast<size_t>(i)].second; }
    const Tensor& tensor(i64 i) const { return entries_[static_cast<size_t>(i)].second; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    const NamedTensors& entries() const { return entries_; }

    // Extends the item-embedding table for newly appeared items; old rows
    // are copied, new rows freshly initialized.
    void grow_vocab(i64 new_vocab_size, Rng& rng);
    i64 vocab_size() const { return at("item_emb").dim(0); }

    std::vector<unsigned char> serialize(const ModelConfig& cfg) const;
    std::string sha256(const ModelConfig& cfg) const;
    void save(const std::string& path, const ModelConfig& cfg) const;
    static std::pair<ParamSet, ModelConfig> load(const std::string& path);

private:
    NamedTensors entries_;
};

// Left-padded index batch: row b occupies slots [width - lengths[b], width),
// slot value 0 means padding. Positional rows are anchored to the sequence
// end, so extra left-padding never changes a sequence's final hidden state.
struct PaddedBatch {
    i64 width = 0;
    std::vector<i64> lengths;
    std::vector<i64> idx;  // batch * width, row-major
    i64 batch() const { return static_cast<i64>(lengths.size()); }
};

PaddedBatch pad_batch(std::span<const Sample> samples, i64 min_width = 0);
PaddedBatch pad_prefixes(const std::vector<std::vector<i64>>& prefixes, i64 min_width = 0);

struct BoundModel {
    std::vector<Tape::Id> param_ids;  // aligned with ParamSet order
    Tape::Id h_all = -1;              // [B*W, d] final hidden states
    Tape::Id h_last = -1;             // [B, d] at each sequence's last real position
};

// Causal transformer encoder forward pass over the tape. `track` controls
// whether parameters record gradients; dropout only fires in training
// mode (and then requires an RNG).
BoundModel model_forward(Tape& tape, const ParamSet& params, const ModelConfig& cfg, const PaddedBatch& batch,
                         bool training, bool track, Rng* dropout_rng);

// logits[b, i] = h_t[b] . item_emb[i + 1]; the padding row is excluded, so
// column i corresponds to item id i + 1.
Tape::Id score_items(Tape& tape, Tape::Id h_last, Tape::Id item_emb);

// Mean over the batch of -log softmax(logits)[target]. Targets are
// 1-based item ids.
Tape::Id ce_loss(Tape& tape, Tape::Id logits, std::span<const i64> target_items);

}  // namespace driftforge
