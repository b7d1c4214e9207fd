#pragma once

#include <map>
#include <string>
#include <vector>

#include "actuforge/nn.hpp"

// Deterministic tokenizer over the template lexicon and a small text encoder
// (learned token embeddings, masked mean pooling, 2-layer MLP). The encoder is
// trained jointly with the denoiser; an all-PAD input yields the learned
// unconditional embedding.

namespace af::text {

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    std::map<std::string, int> token_to_id;  // dense ids starting at 2

    int size() const { return static_cast<int>(token_to_id.size()) + 2; }

    // pure function of the corpus texts: sorted unique tokens
    static Vocabulary build(const std::vector<std::string>& texts);

    void save(const std::string& path) const;  // sorted JSON token -> id
    static Vocabulary load(const std::string& path);

    bool operator==(const Vocabulary& o) const { return token_to_id == o.token_to_id; }
};

// lowercase, split on anything non-alphanumeric
std::vector<std::string> split_tokens(const std::string& text);

inline constexpr int kMaxSeqLen = 32;

// out-of-vocabulary tokens map to UNK; truncated/padded to max_len
std::vector<int> tokenize(const Vocabulary& vocab, const std::string& text,
                          int max_len = kMaxSeqLen);

struct TextEncoderConfig {
    int vocab_size = 0;
    int token_dim = 32;
    int embed_dim = 64;
};

struct TextEncoder {
    TextEncoderConfig cfg;
    Parameter token_table;  // [vocab, token_dim]
    Linear l1, l2;

    TextEncoder() = default;
    TextEncoder(const TextEncoderConfig& cfg_, Rng& rng);

    // ids (padded) -> [1, embed_dim]
    Tensor forward(const std::vector<int>& ids) const;

    std::vector<Parameter*> parameters();
};

}  // namespace af::text
