#pragma once

#include <string>
#include <vector>

namespace etlab {

/// Fixed prompt length M: scaffold plus up to three edit-name slots.
inline constexpr int kPromptLen = 8;

/// Closed prompt vocabulary: pad, five scaffold words describing the
/// four-panel layout, the 21 default edit names, and "identity".
struct PromptVocab {
    std::vector<std::string> words;  // index == token id; words[0] is <pad>

    int size() const { return static_cast<int>(words.size()); }
    int pad_id() const { return 0; }
    int id_of(const std::string& word) const;  // UnknownEdit for edit-name words
    const std::string& word_of(int id) const;

    static const PromptVocab& default_vocab();
};

struct PromptTokens {
    std::vector<int> token_ids;  // always length kPromptLen

    bool operator==(const PromptTokens&) const = default;
};

/// Template fill: scaffold tokens, one token per edit name, padded to M.
/// Throws PromptOverflow if the names do not fit, UnknownEdit for
/// unregistered names.
PromptTokens encode_prompt(const std::vector<std::string>& edit_names);

/// The generic scaffold-only prompt used for pretraining.
PromptTokens scaffold_prompt();

/// Recovers the edit names from an encoded prompt.
std::vector<std::string> decode_prompt(const PromptTokens& prompt);

}  // namespace etlab
