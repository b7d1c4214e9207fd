#include "actuforge/textenc.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <json.hpp>

namespace af::text {

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
    std::set<std::string> tokens;
    for (const auto& t : texts)
        for (auto& tok : split_tokens(t)) tokens.insert(tok);
    Vocabulary v;
    int id = 2;
    for (const auto& tok : tokens) v.token_to_id.emplace(tok, id++);
    return v;
}

void Vocabulary::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["<pad>"] = kPad;
    j["<unk>"] = kUnk;
    for (const auto& [tok, id] : token_to_id) j[tok] = id;
    std::ofstream os(path);
    require(os.good(), str("cannot write vocabulary: ", path));
    os << j.dump(2) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), str("cannot open vocabulary: ", path));
    auto j = nlohmann::ordered_json::parse(is);
    Vocabulary v;
    for (auto& [tok, id] : j.items()) {
        if (tok == "<pad>" || tok == "<unk>") continue;
        v.token_to_id.emplace(tok, id.get<int>());
    }
    return v;
}

std::vector<int> tokenize(const Vocabulary& vocab, const std::string& text, int max_len) {
    std::vector<int> ids;
    for (const auto& tok : split_tokens(text)) {
        if (static_cast<int>(ids.size()) >= max_len) break;
        auto it = vocab.token_to_id.find(tok);
        ids.push_back(it == vocab.token_to_id.end() ? Vocabulary::kUnk : it->second);
    }
    ids.resize(max_len, Vocabulary::kPad);
    return ids;
}

TextEncoder::TextEncoder(const TextEncoderConfig& cfg_, Rng& rng)
    : cfg(cfg_),
      token_table("text.tokens",
                  init_normal({cfg_.vocab_size, cfg_.token_dim}, 0.1f, rng)),
      l1("text.l1", cfg_.token_dim, cfg_.embed_dim, rng),
      l2("text.l2", cfg_.embed_dim, cfg_.embed_dim, rng) {}

Tensor TextEncoder::forward(const std::vector<int>& ids) const {
    const int len = static_cast<int>(ids.size());
    Tensor emb = gather_rows(token_table.value, ids);  // [len, token_dim]
    // masked mean over non-PAD rows as a matmul; all-PAD pools to zeros
    int count = 0;
    for (int id : ids) count += id != Vocabulary::kPad ? 1 : 0;
    std::vector<float> mask(static_cast<size_t>(len), 0.0f);
    float inv = count > 0 ? 1.0f / static_cast<float>(count) : 0.0f;
    for (int i = 0; i < len; ++i) mask[i] = ids[i] != Vocabulary::kPad ? inv : 0.0f;
    Tensor mask_row = Tensor::from({1, len}, std::move(mask));
    Tensor pooled = matmul(mask_row, emb);  // [1, token_dim]
    return l2.forward(silu(l1.forward(pooled)));
}

std::vector<Parameter*> TextEncoder::parameters() {
    std::vector<Parameter*> ps{&token_table};
    l1.collect(ps);
    l2.collect(ps);
    return ps;
}

}  // namespace af::text
