#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mobilab {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { Config, Validation, Analysis };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error config_error(const std::string& what) { return {ErrorKind::Config, what}; }
inline Error validation_error(const std::string& what) { return {ErrorKind::Validation, what}; }
inline Error analysis_error(const std::string& what) { return {ErrorKind::Analysis, what}; }

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool present(double v) noexcept { return !std::isnan(v); }
inline std::optional<double> as_optional(double v) {
    return present(v) ? std::optional<double>(v) : std::nullopt;
}

enum class Gender : std::uint8_t { Male, Female };

// Relatives of the anchor child, ordered by generation.
enum class Relative : std::uint8_t {
    Child,
    Father,
    Mother,
    PaternalGrandfather,
    MaternalGrandfather,
    PaternalGrandmother,
    MaternalGrandmother,
};
inline constexpr std::size_t kRelativeCount = 7;
inline constexpr std::array<Relative, kRelativeCount> kAllRelatives{
    Relative::Child,
    Relative::Father,
    Relative::Mother,
    Relative::PaternalGrandfather,
    Relative::MaternalGrandfather,
    Relative::PaternalGrandmother,
    Relative::MaternalGrandmother,
};

// 0 = child, 1 = parents, 2 = grandparents.
inline int generation_of(Relative r) noexcept {
    switch (r) {
        case Relative::Child: return 0;
        case Relative::Father:
        case Relative::Mother: return 1;
        default: return 2;
    }
}

inline Gender gender_of(Relative r) noexcept {
    switch (r) {
        case Relative::Mother:
        case Relative::PaternalGrandmother:
        case Relative::MaternalGrandmother: return Gender::Female;
        default: return Gender::Male;
    }
}

inline std::size_t index_of(Relative r) noexcept { return static_cast<std::size_t>(r); }

std::string_view to_string(Relative r);
std::optional<Relative> parse_relative(std::string_view s);
std::string_view to_string(Gender g);
std::optional<Gender> parse_gender(std::string_view s);

// Schooling code set used when education is categorical.
inline constexpr std::array<double, 7> kSchoolingCodes{7.0, 9.0, 10.5, 12.0, 14.0, 16.0, 20.0};

}  // namespace mobilab
