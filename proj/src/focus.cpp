#include "sqm/focus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>

#include "sqm/error.hpp"

namespace sqm {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

bool is_wh_form(std::string_view form) {
    static const std::array<std::string_view, 9> words = {"what", "which", "who",  "whom", "whose",
                                                          "when", "where", "why",  "how"};
    const auto l = lower(form);
    return std::find(words.begin(), words.end(), l) != words.end();
}

bool has_feature(std::string_view feats, std::string_view feature) {
    std::size_t start = 0;
    while (start <= feats.size()) {
        auto end = feats.find('|', start);
        if (end == std::string_view::npos) {
            end = feats.size();
        }
        if (feats.substr(start, end - start) == feature) {
            return true;
        }
        start = end + 1;
    }
    return false;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

bool parse_size(std::string_view s, std::size_t& out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool relation_matches(std::string_view deprel, std::string_view rel) {
    if (deprel == rel) {
        return true;
    }
    return rel == "conj" && deprel.substr(0, 5) == "conj:";
}

}  // namespace

std::string ParsedToken::pos() const {
    if (!xpos.empty() && xpos != "_") {
        return xpos;
    }
    const bool wh = has_feature(feats, "PronType=Int") || has_feature(feats, "PronType=Rel") || is_wh_form(form);
    if (upos == "VERB") {
        return "VB";
    }
    if (wh && upos == "PRON") {
        return "WP";
    }
    if (wh && upos == "ADV") {
        return "WRB";
    }
    if (wh && upos == "DET") {
        return "WDT";
    }
    return upos;
}

std::size_t ParsedQuestion::root() const {
    std::optional<std::size_t> found;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i].head == 0) {
            if (found) {
                throw FormatError(id, 0, "parse has more than one root");
            }
            found = i;
        }
    }
    if (!found) {
        throw FormatError(id, 0, "parse has no root");
    }
    return *found;
}

void validate_parse(const ParsedQuestion& parsed) {
    if (parsed.tokens.empty()) {
        throw FormatError(parsed.id, 0, "parse has no tokens");
    }
    for (std::size_t i = 0; i < parsed.tokens.size(); ++i) {
        const auto& t = parsed.tokens[i];
        if (t.id != i + 1) {
            throw FormatError(parsed.id, 0, "token ids must run 1..n, found " + std::to_string(t.id));
        }
        if (t.head > parsed.tokens.size()) {
            throw FormatError(parsed.id, 0, "head " + std::to_string(t.head) + " out of range");
        }
        if (t.head == t.id) {
            throw FormatError(parsed.id, 0, "token " + std::to_string(t.id) + " heads itself");
        }
        if ((t.head == 0) != (t.deprel == "root")) {
            throw FormatError(parsed.id, 0, "token " + std::to_string(t.id) + " has head 0 without 'root' or vice versa");
        }
    }
    parsed.root();
}

std::vector<ParsedQuestion> read_conllu(std::istream& in, const std::string& source) {
    std::vector<ParsedQuestion> out;
    ParsedQuestion current;
    std::size_t first_line = 0;
    std::string line;
    std::size_t line_no = 0;
    auto finish = [&]() {
        if (current.tokens.empty()) {
            current = ParsedQuestion{};
            return;
        }
        if (current.id.empty()) {
            current.id = "s" + std::to_string(out.size() + 1);
        }
        try {
            validate_parse(current);
        } catch (const FormatError& e) {
            throw FormatError(source, first_line, std::string("sentence ") + current.id + ": " + e.what());
        }
        out.push_back(std::move(current));
        current = ParsedQuestion{};
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            finish();
            continue;
        }
        if (current.tokens.empty() && current.id.empty() && current.text.empty()) {
            first_line = line_no;
        }
        if (line.front() == '#') {
            std::string_view body(line);
            body.remove_prefix(1);
            while (!body.empty() && body.front() == ' ') {
                body.remove_prefix(1);
            }
            auto eq = body.find('=');
            if (eq != std::string_view::npos) {
                auto key = body.substr(0, eq);
                auto value = body.substr(eq + 1);
                while (!key.empty() && key.back() == ' ') {
                    key.remove_suffix(1);
                }
                while (!value.empty() && value.front() == ' ') {
                    value.remove_prefix(1);
                }
                if (key == "sent_id") {
                    current.id = std::string(value);
                } else if (key == "text") {
                    current.text = std::string(value);
                }
            }
            continue;
        }
        auto cols = split_tabs(line);
        if (cols.size() != 10) {
            throw FormatError(source, line_no, "expected 10 tab-separated columns, got " + std::to_string(cols.size()));
        }
        if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) {
            continue;
        }
        ParsedToken t;
        if (!parse_size(cols[0], t.id)) {
            throw FormatError(source, line_no, "bad token id '" + std::string(cols[0]) + "'");
        }
        if (!parse_size(cols[6], t.head)) {
            throw FormatError(source, line_no, "bad head '" + std::string(cols[6]) + "'");
        }
        t.form = std::string(cols[1]);
        t.lemma = std::string(cols[2]);
        t.upos = std::string(cols[3]);
        t.xpos = std::string(cols[4]);
        t.feats = std::string(cols[5]);
        t.deprel = std::string(cols[7]);
        if (t.id != current.tokens.size() + 1) {
            throw FormatError(source, line_no, "token id " + std::to_string(t.id) + " out of sequence");
        }
        current.tokens.push_back(std::move(t));
    }
    finish();
    return out;
}

std::vector<ParsedQuestion> load_conllu(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open parse file " + path.string());
    }
    return read_conllu(in, path.string());
}

ParseStore make_parse_store(std::vector<ParsedQuestion> parses) {
    ParseStore store;
    for (auto& p : parses) {
        std::string id = p.id;
        if (!store.emplace(id, std::move(p)).second) {
            throw DataError("duplicate parse id " + id);
        }
    }
    return store;
}

bool is_wh_tag(std::string_view pos) { return pos == "WDT" || pos == "WP" || pos == "WP$" || pos == "WRB"; }

bool is_verb_tag(std::string_view pos) { return pos == "VB" || pos == "VBD" || pos == "VBP" || pos == "VBZ"; }

std::optional<std::size_t> relation_tail(const ParsedQuestion& parsed, std::size_t anchor, std::string_view rel) {
    const std::size_t anchor_id = anchor + 1;
    for (std::size_t i = 0; i < parsed.tokens.size(); ++i) {
        if (parsed.tokens[i].head == anchor_id && relation_matches(parsed.tokens[i].deprel, rel)) {
            return i;
        }
    }
    const auto& a = parsed.tokens[anchor];
    if (a.head != 0 && relation_matches(a.deprel, rel)) {
        return a.head - 1;
    }
    return std::nullopt;
}

std::optional<std::size_t> question_word(const ParsedQuestion& parsed) {
    for (std::size_t i = 0; i < parsed.tokens.size(); ++i) {
        if (is_wh_tag(parsed.tokens[i].pos())) {
            return i;
        }
    }
    for (std::size_t i = 0; i < parsed.tokens.size(); ++i) {
        if (is_verb_tag(parsed.tokens[i].pos())) {
            return i;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> extract_object(const ParsedQuestion& parsed, std::size_t anchor,
                                          std::vector<std::string>* trace) {
    auto note = [&](const char* rule) {
        if (trace != nullptr) {
            trace->emplace_back(rule);
        }
    };
    if (auto obj = relation_tail(parsed, anchor, "det")) {
        note("object:det");
        return obj;
    }
    if (auto obj = relation_tail(parsed, anchor, "dobj")) {
        note("object:dobj");
        return obj;
    }
    auto conj = relation_tail(parsed, anchor, "conj");
    if (!conj) {
        note("object:none");
        return std::nullopt;
    }
    note("object:conj");
    if (auto obj = relation_tail(parsed, *conj, "dobj")) {
        note("object:conj.dobj");
        return obj;
    }
    auto comp = relation_tail(parsed, *conj, "ccomp");
    if (!comp) {
        comp = relation_tail(parsed, *conj, "xcomp");
    }
    if (comp) {
        if (auto obj = relation_tail(parsed, *comp, "dobj")) {
            note("object:conj.comp.dobj");
            return obj;
        }
    }
    note("object:none");
    return std::nullopt;
}

FocusResult extract_focus(const ParsedQuestion& parsed) {
    validate_parse(parsed);
    FocusResult r;
    r.question_word = question_word(parsed);
    if (!r.question_word) {
        r.rule_trace = {"qw:none", "unk"};
        return r;
    }
    const auto& qw = parsed.at(*r.question_word);
    const std::string pos = qw.pos();
    r.rule_trace.emplace_back(is_wh_tag(pos) ? "qw:wh" : "qw:verb");

    if (lower(qw.form) == "how") {
        r.focus = relation_tail(parsed, *r.question_word, "advmod");
        r.rule_trace.emplace_back(r.focus ? "how:advmod" : "how:advmod:none");
    } else if (is_verb_tag(pos)) {
        r.rule_trace.emplace_back("verb:object");
        r.focus = extract_object(parsed, *r.question_word, &r.rule_trace);
    } else if (is_wh_tag(pos)) {
        const std::size_t root = parsed.root();
        if (root == *r.question_word) {
            r.focus = relation_tail(parsed, root, "nsubj");
            r.rule_trace.emplace_back(r.focus ? "wh:root:nsubj" : "wh:root:nsubj:none");
        } else {
            r.rule_trace.emplace_back("wh:root:object");
            r.focus = extract_object(parsed, root, &r.rule_trace);
        }
    }
    if (!r.focus) {
        r.rule_trace.emplace_back("unk");
    }
    return r;
}

std::vector<std::string> focus_tokens(const ParsedQuestion& parsed, const FocusResult& result) {
    if (!result.focus) {
        return {};
    }
    return {lower(parsed.at(*result.focus).form)};
}

nlohmann::ordered_json focus_report(const ParsedQuestion& parsed, const FocusResult& result) {
    nlohmann::ordered_json j;
    j["id"] = parsed.id;
    j["question_word"] =
        result.question_word ? nlohmann::ordered_json(parsed.at(*result.question_word).form) : nlohmann::ordered_json();
    j["focus"] = result.focus ? parsed.at(*result.focus).form : std::string(unk_focus);
    j["rule_trace"] = result.rule_trace;
    return j;
}

double focus_similarity(const EmbeddingTable& table, std::span<const std::string> focus_p,
                        std::span<const std::string> focus_q) {
    auto is_unknown = [](std::span<const std::string> f) {
        return f.empty() || (f.size() == 1 && f[0] == unk_focus);
    };
    if (is_unknown(focus_p) || is_unknown(focus_q)) {
        return 0.0;
    }
    return cosine(table.compose_average(focus_p), table.compose_average(focus_q));
}

}  // namespace sqm
