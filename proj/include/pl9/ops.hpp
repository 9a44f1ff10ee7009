#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace pl9 {

// Binding powers for the fixed operator table. Larger binds tighter.
// Right-associative operators reuse their own binding power as the minimum
// for the right operand; non-associative ones reject chained use.
enum class Assoc : uint8_t { Left, Right, None };

struct InfixOp {
    int bp;
    Assoc assoc;
};

inline std::optional<InfixOp> infix_op(std::string_view text) {
    struct Row { std::string_view t; int bp; Assoc a; };
    static constexpr Row rows[] = {
        {"=>", 50, Assoc::None},
        {"?=>", 50, Assoc::None},
        {";", 100, Assoc::Right},
        {",", 200, Assoc::Right},
        {"#<=>", 310, Assoc::Right},
        {"#=>", 310, Assoc::Right},
        {"#\\/", 320, Assoc::Left},
        {"#^", 330, Assoc::Left},
        {"#/\\", 340, Assoc::Left},
        {"=", 400, Assoc::None},
        {":=", 400, Assoc::None},
        {"==", 400, Assoc::None},
        {"!==", 400, Assoc::None},
        {"!=", 400, Assoc::None},
        {"<", 400, Assoc::None},
        {">", 400, Assoc::None},
        {"=<", 400, Assoc::None},
        {"<=", 400, Assoc::None},
        {">=", 400, Assoc::None},
        {"::", 400, Assoc::None},
        {"#=", 400, Assoc::None},
        {"#!=", 400, Assoc::None},
        {"#>", 400, Assoc::None},
        {"#>=", 400, Assoc::None},
        {"#<", 400, Assoc::None},
        {"#=<", 400, Assoc::None},
        {"#<=", 400, Assoc::None},
        {"in", 400, Assoc::None},
        {"@", 400, Assoc::None},
        {"..", 500, Assoc::None},
        {"+", 600, Assoc::Left},
        {"-", 600, Assoc::Left},
        {"++", 600, Assoc::Right},
        {"*", 700, Assoc::Left},
        {"/", 700, Assoc::Left},
        {"div", 700, Assoc::Left},
        {"mod", 700, Assoc::Left},
    };
    for (const Row& r : rows)
        if (r.t == text) return InfixOp{r.bp, r.a};
    return std::nullopt;
}

struct PrefixOp {
    int operand_bp;
};

inline std::optional<PrefixOp> prefix_op(std::string_view text) {
    if (text == "-" || text == "+" || text == "#~") return PrefixOp{800};
    if (text == "not") return PrefixOp{210};
    if (text == "$") return PrefixOp{210};
    return std::nullopt;
}

// Binding power of postfix forms: indexing X[...] and OOP '.' access.
inline constexpr int kPostfixBp = 900;

}  // namespace pl9
