#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace navgen {

enum class Style { kFineGrained, kHighLevel };

inline const char* style_name(Style s) {
    return s == Style::kFineGrained ? "fine_grained" : "high_level";
}

inline std::optional<Style> style_from_name(const std::string& s) {
    if (s == "fine_grained") {
        return Style::kFineGrained;
    }
    if (s == "high_level") {
        return Style::kHighLevel;
    }
    return std::nullopt;
}

inline std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        out.push_back(tok);
    }
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += tokens[i];
    }
    return out;
}

namespace grammar {

// Instruction grammars. The synthesizer emits these forms and the follower
// parses exactly the same forms, so template corpus and follower stay duals.
//
//   fine_grained: clause ("then" clause)*
//     clause := "go"|"walk" DIR
//             | "pass"|"passing" "the" OBJ
//             | "stop"|"halt" ["at"|"by" "the" OBJ]
//   high_level: "go"|"head" "to" "the" ROOM ["and" "find"|"locate" "the" OBJ]
struct Lexicon {
    std::set<std::string> objects;
    std::set<std::string> rooms;
};

enum class ClauseKind { kGo, kPass, kStopAt, kStop, kGoToRoom, kFind };

struct Clause {
    ClauseKind kind;
    std::string arg;  // direction, object or room noun; empty for plain stop
};

inline const std::vector<std::string>& directions() {
    static const std::vector<std::string> dirs{"north", "east", "south", "west"};
    return dirs;
}

inline bool is_direction(const std::string& w) {
    const auto& d = directions();
    return std::find(d.begin(), d.end(), w) != d.end();
}

struct ParseResult {
    Style style;
    std::vector<Clause> clauses;
};

namespace detail {

class TokenCursor {
public:
    explicit TokenCursor(const std::vector<std::string>& toks) : toks_(&toks) {}
    bool done() const { return pos_ >= toks_->size(); }
    const std::string& peek() const { return (*toks_)[pos_]; }
    const std::string& next() { return (*toks_)[pos_++]; }
    bool accept(const std::string& w) {
        if (!done() && peek() == w) {
            ++pos_;
            return true;
        }
        return false;
    }
    bool accept_any(std::initializer_list<const char*> ws) {
        for (const char* w : ws) {
            if (accept(w)) {
                return true;
            }
        }
        return false;
    }

private:
    const std::vector<std::string>* toks_;
    std::size_t pos_ = 0;
};

inline std::optional<Clause> parse_fine_clause(TokenCursor& cur, const Lexicon& lex) {
    if (cur.accept_any({"go", "walk"})) {
        if (cur.done() || !is_direction(cur.peek())) {
            return std::nullopt;
        }
        return Clause{ClauseKind::kGo, cur.next()};
    }
    if (cur.accept_any({"pass", "passing"})) {
        if (!cur.accept("the") || cur.done() || lex.objects.count(cur.peek()) == 0) {
            return std::nullopt;
        }
        return Clause{ClauseKind::kPass, cur.next()};
    }
    if (cur.accept_any({"stop", "halt"})) {
        if (cur.accept_any({"at", "by"})) {
            if (!cur.accept("the") || cur.done() || lex.objects.count(cur.peek()) == 0) {
                return std::nullopt;
            }
            return Clause{ClauseKind::kStopAt, cur.next()};
        }
        return Clause{ClauseKind::kStop, ""};
    }
    return std::nullopt;
}

}  // namespace detail

inline std::optional<ParseResult> parse_fine_grained(const std::vector<std::string>& tokens,
                                                     const Lexicon& lex) {
    if (tokens.empty()) {
        return std::nullopt;
    }
    detail::TokenCursor cur(tokens);
    ParseResult res{Style::kFineGrained, {}};
    while (true) {
        auto clause = detail::parse_fine_clause(cur, lex);
        if (!clause) {
            return std::nullopt;
        }
        res.clauses.push_back(*clause);
        if (cur.done()) {
            break;
        }
        if (!cur.accept("then")) {
            return std::nullopt;
        }
    }
    return res;
}

inline std::optional<ParseResult> parse_high_level(const std::vector<std::string>& tokens,
                                                   const Lexicon& lex) {
    detail::TokenCursor cur(tokens);
    if (!cur.accept_any({"go", "head"}) || !cur.accept("to") || !cur.accept("the")) {
        return std::nullopt;
    }
    if (cur.done() || lex.rooms.count(cur.peek()) == 0) {
        return std::nullopt;
    }
    ParseResult res{Style::kHighLevel, {}};
    res.clauses.push_back(Clause{ClauseKind::kGoToRoom, cur.next()});
    if (cur.done()) {
        return res;
    }
    if (!cur.accept("and") || !cur.accept_any({"find", "locate"}) || !cur.accept("the")) {
        return std::nullopt;
    }
    if (cur.done() || lex.objects.count(cur.peek()) == 0) {
        return std::nullopt;
    }
    res.clauses.push_back(Clause{ClauseKind::kFind, cur.next()});
    return cur.done() ? std::optional<ParseResult>(res) : std::nullopt;
}

inline std::optional<ParseResult> parse(const std::vector<std::string>& tokens, const Lexicon& lex) {
    if (auto fine = parse_fine_grained(tokens, lex)) {
        return fine;
    }
    return parse_high_level(tokens, lex);
}

inline bool validate(const std::vector<std::string>& tokens, Style style, const Lexicon& lex) {
    if (style == Style::kFineGrained) {
        return parse_fine_grained(tokens, lex).has_value();
    }
    return parse_high_level(tokens, lex).has_value();
}

// Canonical emission (the synthesizer's template voice).
inline std::vector<std::string> emit_fine_grained(const std::vector<Clause>& clauses) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (i > 0) {
            out.push_back("then");
        }
        const Clause& c = clauses[i];
        switch (c.kind) {
            case ClauseKind::kGo:
                out.push_back("go");
                out.push_back(c.arg);
                break;
            case ClauseKind::kPass:
                out.push_back("pass");
                out.push_back("the");
                out.push_back(c.arg);
                break;
            case ClauseKind::kStopAt:
                out.push_back("stop");
                out.push_back("at");
                out.push_back("the");
                out.push_back(c.arg);
                break;
            case ClauseKind::kStop:
                out.push_back("stop");
                break;
            default:
                break;
        }
    }
    return out;
}

inline std::vector<std::string> emit_high_level(const std::vector<Clause>& clauses) {
    std::vector<std::string> out{"go", "to", "the"};
    out.push_back(clauses.at(0).arg);
    if (clauses.size() > 1) {
        out.push_back("and");
        out.push_back("find");
        out.push_back("the");
        out.push_back(clauses[1].arg);
    }
    return out;
}

// Paraphrase used for alternate reference texts; still grammar-valid.
inline std::vector<std::string> paraphrase(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& w = tokens[i];
        if (w == "go" && i + 1 < tokens.size() && tokens[i + 1] == "to") {
            out.push_back("head");
        } else if (w == "go") {
            out.push_back("walk");
        } else if (w == "pass") {
            out.push_back("passing");
        } else if (w == "stop") {
            out.push_back("halt");
        } else if (w == "at") {
            out.push_back("by");
        } else if (w == "find") {
            out.push_back("locate");
        } else {
            out.push_back(w);
        }
    }
    return out;
}

}  // namespace grammar
}  // namespace navgen
