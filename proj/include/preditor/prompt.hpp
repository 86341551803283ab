// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <sstream>
#include <string>
#include <string_view>

#include "preditor/common.hpp"

namespace preditor {

enum class Concept { disc, square, small, large, bright, dark };
enum class Attribute { shape, size, tone };

inline constexpr std::array<Concept, 6> kAllConcepts = {Concept::disc,  Concept::square, Concept::small,
                                                        Concept::large, Concept::bright, Concept::dark};

inline constexpr std::string_view concept_name(Concept c) {
    switch (c) {
        case Concept::disc: return "disc";
        case Concept::square: return "square";
        case Concept::small: return "small";
        case Concept::large: return "large";
        case Concept::bright: return "bright";
        case Concept::dark: return "dark";
    }
    return "?";
}

inline constexpr Attribute attribute_of(Concept c) {
    switch (c) {
        case Concept::disc:
        case Concept::square: return Attribute::shape;
        case Concept::small:
        case Concept::large: return Attribute::size;
        default: return Attribute::tone;
    }
}

/// The two concepts of an attribute, in (first, second) order.
inline constexpr std::array<Concept, 2> attribute_concepts(Attribute a) {
    switch (a) {
        case Attribute::shape: return {Concept::disc, Concept::square};
        case Attribute::size: return {Concept::small, Concept::large};
        default: return {Concept::bright, Concept::dark};
    }
}

inline Concept parse_concept(std::string_view word) {
    for (Concept c : kAllConcepts) {
        if (concept_name(c) == word) return c;
    }
    throw ParseError("prompt", "unknown label '" + std::string(word) + "'");
}

/// A text prompt over the toy vocabulary: an unordered set of concept labels.
struct ToyPrompt {
    std::vector<Concept> concepts;

    /// Accepts labels separated by spaces, commas or braces, e.g. "{disc, bright}".
    static ToyPrompt parse(std::string_view text) {
        ToyPrompt p;
        std::string word;
        auto flush = [&] {
            if (word.empty()) return;
            p.add(parse_concept(word));
            word.clear();
        };
        for (char ch : text) {
            if (ch == ' ' || ch == ',' || ch == '{' || ch == '}' || ch == '\t') flush();
            else word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
        flush();
        if (p.concepts.empty()) throw ParseError("prompt", "empty prompt");
        return p;
    }

    ToyPrompt& add(Concept c) {
        if (std::find(concepts.begin(), concepts.end(), c) == concepts.end()) concepts.push_back(c);
        return *this;
    }

    bool contains(Concept c) const { return std::find(concepts.begin(), concepts.end(), c) != concepts.end(); }

    std::string to_string() const {
        std::string out;
        for (Concept c : concepts) {
            if (!out.empty()) out += ' ';
            out += concept_name(c);
        }
        return out;
    }

    bool operator==(const ToyPrompt&) const = default;
};

}  // namespace preditor
