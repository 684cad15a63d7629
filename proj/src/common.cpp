#include "mobilab/common.hpp"

namespace mobilab {

namespace {
constexpr std::array<std::string_view, kRelativeCount> kRelativeNames{
    "child", "father", "mother", "paternal_grandfather", "maternal_grandfather",
    "paternal_grandmother", "maternal_grandmother",
};
}

std::string_view to_string(Relative r) { return kRelativeNames[index_of(r)]; }

std::optional<Relative> parse_relative(std::string_view s) {
    for (std::size_t i = 0; i < kRelativeCount; ++i)
        if (kRelativeNames[i] == s) return kAllRelatives[i];
    return std::nullopt;
}

std::string_view to_string(Gender g) { return g == Gender::Male ? "M" : "F"; }

std::optional<Gender> parse_gender(std::string_view s) {
    if (s == "M") return Gender::Male;
    if (s == "F") return Gender::Female;
    return std::nullopt;
}

}  // namespace mobilab
