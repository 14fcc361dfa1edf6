#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sqm/embeddings.hpp"

namespace sqm {

inline constexpr std::string_view unk_focus = "<unk>";

struct ParsedToken {
    std::size_t id = 0;  // 1-based
    std::string form;
    std::string lemma;
    std::string upos;
    std::string xpos;
    std::string feats;
    std::size_t head = 0;  // 0 = root
    std::string deprel;

    /// Penn tag: XPOS, or a mapping of UPOS when XPOS is absent.
    std::string pos() const;
};

struct ParsedQuestion {
    std::string id;
    std::string text;
    std::vector<ParsedToken> tokens;

    /// 0-based index of the root token; FormatError unless there is exactly one.
    std::size_t root() const;
    const ParsedToken& at(std::size_t index) const { return tokens[index]; }
};

/// Checks ids, head ranges and the single root.
void validate_parse(const ParsedQuestion& parsed);

/// CoNLL-U; `# sent_id = ` names a sentence, otherwise ids are s1, s2, ...
/// Multiword ranges and empty nodes are skipped.
std::vector<ParsedQuestion> read_conllu(std::istream& in, const std::string& source);
std::vector<ParsedQuestion> load_conllu(const std::filesystem::path& path);

/// Parses keyed by id.
using ParseStore = std::map<std::string, ParsedQuestion>;
ParseStore make_parse_store(std::vector<ParsedQuestion> parses);

bool is_wh_tag(std::string_view pos);
bool is_verb_tag(std::string_view pos);

/// Dependent of `anchor` with relation `rel` (leftmost when several). When there
/// is none and `anchor` itself attaches to its head through `rel`, that head.
/// `rel` = "conj" also matches subtyped conj:* relations.
std::optional<std::size_t> relation_tail(const ParsedQuestion& parsed, std::size_t anchor, std::string_view rel);

/// First token tagged WDT/WP/WP$/WRB, else the first tagged VB/VBD/VBP/VBZ.
std::optional<std::size_t> question_word(const ParsedQuestion& parsed);

/// det of anchor, else dobj of anchor, else dobj of anchor's conj, else dobj of
/// that conj's ccomp/xcomp. Rules that fire are appended to `trace`.
std::optional<std::size_t> extract_object(const ParsedQuestion& parsed, std::size_t anchor,
                                          std::vector<std::string>* trace = nullptr);

struct FocusResult {
    std::optional<std::size_t> question_word;
    std::optional<std::size_t> focus;
    std::vector<std::string> rule_trace;
};

FocusResult extract_focus(const ParsedQuestion& parsed);

/// Lowercased focus surface, empty when the focus is unknown.
std::vector<std::string> focus_tokens(const ParsedQuestion& parsed, const FocusResult& result);

/// {id, question_word, focus, rule_trace}
nlohmann::ordered_json focus_report(const ParsedQuestion& parsed, const FocusResult& result);

/// Cosine of the averaged focus embeddings; 0 when either side is unknown.
double focus_similarity(const EmbeddingTable& table, std::span<const std::string> focus_p,
                        std::span<const std::string> focus_q);

}  // namespace sqm
