#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "pl9/errors.hpp"

namespace pl9 {

enum class Tok : uint8_t {
    Atom,      // lowercase identifier or 'quoted atom'
    Var,       // uppercase/underscore identifier
    Int,
    Str,       // "double quoted"
    Punct,     // operators and punctuation, text carries the spelling
    ClauseEnd, // '.' terminating a clause
    Eof,
};

struct Token {
    Tok kind;
    std::string text;
    int64_t value = 0;
    int line = 1;
    int col = 1;
};

// Hand-rolled scanner for the rule language. '.' is a clause terminator when
// followed by layout or EOF, and an OOP access dot when glued to an
// identifier or '('; '..' is the range operator.
class Lexer {
public:
    Lexer(std::string_view src, std::string file = "<input>")
        : src_(src), file_(std::move(file)) {}

    std::vector<Token> tokenize() {
        std::vector<Token> out;
        for (;;) {
            Token t = next();
            bool eof = t.kind == Tok::Eof;
            out.push_back(std::move(t));
            if (eof) break;
        }
        return out;
    }

    const std::string& file() const { return file_; }

private:
    [[noreturn]] void fail(const std::string& msg) {
        throw Error::parse_at(file_, line_, col_, msg);
    }

    char peek(size_t ahead = 0) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    char advance() {
        char c = src_[pos_++];
        if (c == '\n') { ++line_; col_ = 1; } else { ++col_; }
        return c;
    }

    void skip_layout() {
        for (;;) {
            char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                advance();
            } else if (c == '%') {
                while (peek() && peek() != '\n') advance();
            } else if (c == '/' && peek(1) == '*') {
                advance(); advance();
                while (!(peek() == '*' && peek(1) == '/')) {
                    if (!peek()) fail("unterminated block comment");
                    advance();
                }
                advance(); advance();
            } else {
                return;
            }
        }
    }

    Token make(Tok kind, std::string text, int line, int col) {
        Token t;
        t.kind = kind;
        t.text = std::move(text);
        t.line = line;
        t.col = col;
        return t;
    }

    Token next() {
        skip_layout();
        int line = line_, col = col_;
        char c = peek();
        if (!c) return make(Tok::Eof, "", line, col);

        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string num;
            while (std::isdigit(static_cast<unsigned char>(peek())))
                num.push_back(advance());
            if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))
                fail("floating point literals are not supported");
            Token t = make(Tok::Int, num, line, col);
            t.value = std::stoll(num);
            return t;
        }

        if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
            std::string id;
            while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')
                id.push_back(advance());
            return make(Tok::Var, id, line, col);
        }

        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::string id;
            while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')
                id.push_back(advance());
            return make(Tok::Atom, id, line, col);
        }

        if (c == '\'') {
            advance();
            std::string text;
            for (;;) {
                if (!peek()) fail("unterminated quoted atom");
                char d = advance();
                if (d == '\'') break;
                if (d == '\\') text.push_back(unescape(advance()));
                else text.push_back(d);
            }
            return make(Tok::Atom, text, line, col);
        }

        if (c == '"') {
            advance();
            std::string text;
            for (;;) {
                if (!peek()) fail("unterminated string");
                char d = advance();
                if (d == '"') break;
                if (d == '\\') text.push_back(unescape(advance()));
                else text.push_back(d);
            }
            return make(Tok::Str, text, line, col);
        }

        // punctuation and operators, longest match first
        static const char* multi[] = {
            "#<=>", "#\\/", "#/\\", "?=>", "#=<", "#<=", "#>=", "#!=", "#=>",
            "!==", "=>", "?=", "==", "!=", "=<", "<=", ">=", ":=", "::",
            "++", "..", "#=", "#<", "#>", "#~", "#^",
        };
        for (const char* m : multi) {
            size_t len = std::string_view(m).size();
            if (src_.compare(pos_, len, m) == 0) {
                for (size_t i = 0; i < len; ++i) advance();
                return make(Tok::Punct, m, line, col);
            }
        }

        if (c == '.') {
            char after = peek(1);
            if (std::isalpha(static_cast<unsigned char>(after)) || after == '_' ||
                after == '(') {
                advance();
                return make(Tok::Punct, ".", line, col);
            }
            advance();
            return make(Tok::ClauseEnd, ".", line, col);
        }

        static const std::string singles = "()[]{},|;:=<>+-*/@$";
        if (singles.find(c) != std::string::npos) {
            advance();
            return make(Tok::Punct, std::string(1, c), line, col);
        }

        fail(std::string("unexpected character '") + c + "'");
    }

    static char unescape(char c) {
        switch (c) {
            case 'n': return '\n';
            case 't': return '\t';
            case 'r': return '\r';
            case '0': return '\0';
            default: return c;
        }
    }

    std::string_view src_;
    std::string file_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

}  // namespace pl9
