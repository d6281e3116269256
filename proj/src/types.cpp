#include "icai/types.hpp"

#include "icai/error.hpp"

namespace icai {

std::string to_string(GenerationMode m) {
    switch (m) {
        case GenerationMode::baseline: return "baseline";
        case GenerationMode::generalizing: return "generalizing";
        case GenerationMode::triplet: return "triplet";
        case GenerationMode::scored: return "scored";
    }
    return "baseline";
}

std::string to_string(Dimension d) {
    switch (d) {
        case Dimension::content: return "content";
        case Dimension::style: return "style";
        case Dimension::sentiment: return "sentiment";
    }
    return "content";
}

GenerationMode generation_mode_from_string(const std::string& s) {
    if (s == "baseline") return GenerationMode::baseline;
    if (s == "generalizing") return GenerationMode::generalizing;
    if (s == "triplet") return GenerationMode::triplet;
    if (s == "scored") return GenerationMode::scored;
    throw ValidationError("unknown generation mode: " + s);
}

Dimension dimension_from_string(const std::string& s) {
    if (s == "content") return Dimension::content;
    if (s == "style") return Dimension::style;
    if (s == "sentiment") return Dimension::sentiment;
    throw ValidationError("unknown dimension: " + s);
}

std::string to_string(Vote v) {
    switch (v) {
        case Vote::favor: return "favor";
        case Vote::against: return "against";
        case Vote::not_applicable: return "not_applicable";
    }
    return "not_applicable";
}

Vote vote_from_string(const std::string& s) {
    if (s == "favor") return Vote::favor;
    if (s == "against") return Vote::against;
    if (s == "not_applicable") return Vote::not_applicable;
    throw ValidationError("unknown vote: " + s);
}

}  // namespace icai
