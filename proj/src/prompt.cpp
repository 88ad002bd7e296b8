#include "etlab/prompt.hpp"

#include "etlab/errors.hpp"
#include "etlab/sprite.hpp"

namespace etlab {

namespace {

constexpr int kScaffoldLen = 5;
const char* kScaffold[kScaffoldLen] = {"this", "four", "panel", "grid", "apply"};

PromptVocab build_default_vocab() {
    PromptVocab v;
    v.words.push_back("<pad>");
    for (const char* w : kScaffold) v.words.push_back(w);
    for (const EditOp& e : default_taxonomy().edits) v.words.push_back(e.name);
    v.words.push_back("identity");
    return v;
}

}  // namespace

int PromptVocab::id_of(const std::string& word) const {
    for (size_t i = 0; i < words.size(); ++i)
        if (words[i] == word) return static_cast<int>(i);
    throw UnknownEdit("word not in prompt vocabulary: " + word);
}

const std::string& PromptVocab::word_of(int id) const {
    if (id < 0 || id >= size()) throw UsageError("prompt token id out of range");
    return words[static_cast<size_t>(id)];
}

const PromptVocab& PromptVocab::default_vocab() {
    static const PromptVocab vocab = build_default_vocab();
    return vocab;
}

PromptTokens encode_prompt(const std::vector<std::string>& edit_names) {
    const PromptVocab& vocab = PromptVocab::default_vocab();
    if (kScaffoldLen + static_cast<int>(edit_names.size()) > kPromptLen)
        throw PromptOverflow("too many edit names for prompt length");
    PromptTokens p;
    p.token_ids.reserve(kPromptLen);
    for (const char* w : kScaffold) p.token_ids.push_back(vocab.id_of(w));
    for (const std::string& name : edit_names) p.token_ids.push_back(vocab.id_of(name));
    while (static_cast<int>(p.token_ids.size()) < kPromptLen)
        p.token_ids.push_back(vocab.pad_id());
    return p;
}

PromptTokens scaffold_prompt() { return encode_prompt({}); }

std::vector<std::string> decode_prompt(const PromptTokens& prompt) {
    const PromptVocab& vocab = PromptVocab::default_vocab();
    if (static_cast<int>(prompt.token_ids.size()) != kPromptLen)
        throw UsageError("prompt has wrong length");
    std::vector<std::string> names;
    for (int i = kScaffoldLen; i < kPromptLen; ++i) {
        const int id = prompt.token_ids[static_cast<size_t>(i)];
        if (id == vocab.pad_id()) continue;
        names.push_back(vocab.word_of(id));
    }
    return names;
}

}  // namespace etlab
