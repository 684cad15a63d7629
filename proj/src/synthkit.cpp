#include "mobilab/synthkit.hpp"

#include "mobilab/parallel.hpp"
#include "mobilab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>

namespace mobilab {

bool same_record(const LineageRecord& a, const LineageRecord& b) {
    auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    if (a.child_id != b.child_id || a.region_id != b.region_id ||
        a.child_birth_year != b.child_birth_year || a.child_gender != b.child_gender)
        return false;
    for (std::size_t i = 0; i < kRelativeCount; ++i) {
        const auto& x = a.outcomes[i];
        const auto& y = b.outcomes[i];
        if (!same(x.schooling, y.schooling) || !same(x.log_earnings, y.log_earnings) ||
            !same(x.earnings_rank, y.earnings_rank))
            return false;
    }
    return true;
}

CategoricalThresholds CategoricalThresholds::defaults() {
    // Shares chosen so generation means land near 13.2 (children), 11.8
    // (parents) and 9.2 (grandparents) years of schooling.
    CategoricalThresholds t;
    t.shares[0] = {0.005, 0.085, 0.115, 0.545, 0.715, 0.985};
    t.shares[1] = {0.08, 0.30, 0.42, 0.70, 0.84, 0.98};
    t.shares[2] = {0.45, 0.70, 0.78, 0.90, 0.95, 0.99};
    return t;
}

CategoricalThresholds CategoricalThresholds::uniform(std::vector<double> shares) {
    CategoricalThresholds t;
    t.shares = {shares, shares, shares};
    return t;
}

void validate(const ChannelParams& c, const std::string& where) {
    if (!(c.rho > 0.0 && c.rho <= 1.0))
        throw config_error(where + ": rho must lie in (0, 1], got " + std::to_string(c.rho));
    if (!(c.lambda >= 0.0 && c.lambda < 1.0))
        throw config_error(where + ": lambda must lie in [0, 1), got " + std::to_string(c.lambda));
    for (double sd : c.gen_sds)
        if (!(sd > 0.0)) throw config_error(where + ": generation standard deviations must be positive");
    for (double m : c.missing_rates)
        if (!(m >= 0.0 && m < 1.0)) throw config_error(where + ": missing rates must lie in [0, 1)");
}

namespace {

void validate_thresholds(const CategoricalThresholds& t) {
    for (const auto& shares : t.shares) {
        if (shares.size() != kSchoolingCodes.size() - 1)
            throw config_error("categorical thresholds need exactly six shares per generation");
        for (std::size_t i = 0; i < shares.size(); ++i) {
            if (!(shares[i] > 0.0 && shares[i] < 1.0))
                throw config_error("categorical threshold shares must lie in (0, 1)");
            if (i > 0 && !(shares[i] > shares[i - 1]))
                throw config_error("categorical thresholds must be strictly increasing");
        }
    }
}

class ShockSource {
public:
    explicit ShockSource(ShockDistribution d) : kind_(d) {}

    double operator()(Stream& s) {
        if (kind_ == ShockDistribution::Gaussian) return normal_(s);
        // Student t with 5 dof rescaled to unit variance.
        return student_(s) * std::sqrt(3.0 / 5.0);
    }

private:
    ShockDistribution kind_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::student_t_distribution<double> student_{5.0};
};

struct LatentLine {
    std::array<double, kRelativeCount> e{};
};

// Correlated innovation pair for the two channels.
struct Innovation {
    double schooling;
    double earnings;
};

class LineageBuilder {
public:
    LineageBuilder(const GeneratorConfig& cfg, const RegionParams& region)
        : cfg_(cfg), region_(region), shocks_(cfg.shocks) {
        c_ = cfg.channel_correlation;
        c_rest_ = std::sqrt(std::max(0.0, 1.0 - c_ * c_));
    }

    LineageRecord build(Stream& s, std::uint64_t child_id) {
        LineageRecord rec;
        rec.child_id = child_id;
        rec.region_id = region_.region_id;
        std::uniform_int_distribution<int> year(cfg_.child_birth_year_first, cfg_.child_birth_year_last);
        rec.child_birth_year = year(s);
        rec.child_gender = s.uniform() < 0.5 ? Gender::Male : Gender::Female;

        const bool drifting = !cfg_.steady_state && cfg_.drift.has_value();
        const double sd0 = drifting ? cfg_.drift->initial_latent_sd : 1.0;

        LatentLine ls, le;
        const auto& S = region_.schooling;
        const auto& E = region_.earnings;
        auto ar = [](double lambda) { return std::sqrt(1.0 - lambda * lambda); };
        const double sp = region_.spousal_correlation;
        const double sp_rest = std::sqrt(std::max(0.0, 1.0 - sp * sp));

        auto step = [&](Relative out, Relative from, double ws, double we, double ss, double se) {
            Innovation z = draw(s);
            ls.e[index_of(out)] = ws * ls.e[index_of(from)] + ss * z.schooling;
            le.e[index_of(out)] = we * le.e[index_of(from)] + se * z.earnings;
        };

        Innovation z0 = draw(s);
        ls.e[index_of(Relative::PaternalGrandfather)] = sd0 * z0.schooling;
        le.e[index_of(Relative::PaternalGrandfather)] = sd0 * z0.earnings;
        step(Relative::Father, Relative::PaternalGrandfather, S.lambda, E.lambda, ar(S.lambda), ar(E.lambda));
        step(Relative::Child, Relative::Father, S.lambda, E.lambda, ar(S.lambda), ar(E.lambda));
        if (!cfg_.paternal_line_only) {
            step(Relative::Mother, Relative::Father, sp, sp, sp_rest, sp_rest);
            // Reverse AR(1) step: for a stationary Gaussian chain the parent
            // given the child is N(lambda * e_child, 1 - lambda^2).
            step(Relative::MaternalGrandfather, Relative::Mother, S.lambda, E.lambda, ar(S.lambda),
                 ar(E.lambda));
            step(Relative::PaternalGrandmother, Relative::PaternalGrandfather, sp, sp, sp_rest, sp_rest);
            step(Relative::MaternalGrandmother, Relative::MaternalGrandfather, sp, sp, sp_rest, sp_rest);
        }

        for (Relative r : kAllRelatives) {
            auto& o = rec.at(r);
            if (cfg_.paternal_line_only && r != Relative::Child && r != Relative::Father &&
                r != Relative::PaternalGrandfather)
                continue;
            const int g = generation_of(r);
            o.schooling = observe(s, S, ls.e[index_of(r)], g, drifting);
            if (cfg_.censor_schooling) o.schooling = std::clamp(o.schooling, 0.0, 30.0);
            if (cfg_.with_earnings) o.log_earnings = observe(s, E, le.e[index_of(r)], g, drifting);
        }
        // Missingness is drawn after all outcomes so that it is independent
        // of them and does not shift the outcome draws.
        for (Relative r : kAllRelatives) {
            auto& o = rec.at(r);
            if (s.uniform() < S.missing_rates[index_of(r)]) o.schooling = kMissing;
            if (s.uniform() < E.missing_rates[index_of(r)]) o.log_earnings = kMissing;
        }
        return rec;
    }

private:
    Innovation draw(Stream& s) {
        const double a = shocks_(s);
        if (!cfg_.with_earnings) return {a, 0.0};
        const double b = shocks_(s);
        return {a, c_ * a + c_rest_ * b};
    }

    double observe(Stream& s, const ChannelParams& ch, double latent, int g, bool drifting) {
        const double u = shocks_(s);
        const double y = ch.rho * latent + std::sqrt(1.0 - ch.rho * ch.rho) * u;
        double m = ch.gen_means[static_cast<std::size_t>(g)];
        double sd = ch.gen_sds[static_cast<std::size_t>(g)];
        if (drifting) {
            m += cfg_.drift->mean_shift[static_cast<std::size_t>(g)];
            sd *= cfg_.drift->sd_scale[static_cast<std::size_t>(g)];
        }
        return m + sd * y;
    }

    const GeneratorConfig& cfg_;
    const RegionParams& region_;
    ShockSource shocks_;
    double c_ = 0.0;
    double c_rest_ = 1.0;
};

}  // namespace

void validate(const RegionParams& region) {
    const std::string where = "region " + std::to_string(region.region_id);
    if (region.n_lineages < 1) throw config_error(where + ": n_lineages must be at least 1");
    validate(region.schooling, where + " schooling");
    validate(region.earnings, where + " earnings");
    if (!(region.spousal_correlation >= -1.0 && region.spousal_correlation <= 1.0))
        throw config_error(where + ": spousal correlation must lie in [-1, 1]");
}

void validate(const GeneratorConfig& config) {
    if (config.regions.empty()) throw config_error("generator config has no regions");
    std::size_t total = 0;
    for (const auto& r : config.regions) {
        validate(r);
        total += r.n_lineages;
    }
    if (total == 0) throw config_error("generator config has zero lineages");
    if (!(config.channel_correlation >= -1.0 && config.channel_correlation <= 1.0))
        throw config_error("channel correlation must lie in [-1, 1]");
    if (config.child_birth_year_last < config.child_birth_year_first)
        throw config_error("empty child birth-year window");
    if (!config.steady_state && config.drift && !(config.drift->initial_latent_sd > 0.0))
        throw config_error("drift initial latent sd must be positive");
    validate_thresholds(config.thresholds);
}

std::vector<LineageRecord> generate_population(const GeneratorConfig& config) {
    validate(config);

    constexpr std::size_t kChunk = 4096;
    struct Job {
        std::size_t region;
        std::size_t begin;
        std::size_t end;
        std::size_t offset;
    };
    std::vector<Job> jobs;
    std::size_t offset = 0;
    for (std::size_t r = 0; r < config.regions.size(); ++r) {
        const std::size_t n = config.regions[r].n_lineages;
        for (std::size_t b = 0; b < n; b += kChunk)
            jobs.push_back({r, b, std::min(n, b + kChunk), offset + b});
        offset += n;
    }

    std::vector<LineageRecord> out(offset);
    parallel_for(jobs.size(), [&](std::size_t j) {
        const Job& job = jobs[j];
        LineageBuilder builder(config, config.regions[job.region]);
        for (std::size_t i = job.begin; i < job.end; ++i) {
            Stream s = substream(config.seed, job.region, i);
            out[job.offset + (i - job.begin)] = builder.build(s, job.offset + (i - job.begin) + 1);
        }
    });

    if (config.outcome_mode != OutcomeMode::Continuous)
        apply_categorical_education(out, config.thresholds);
    return out;
}

void apply_categorical_education(std::span<LineageRecord> records,
                                 const CategoricalThresholds& thresholds) {
    validate_thresholds(thresholds);
    for (int g = 0; g < 3; ++g) {
        std::vector<double> values;
        for (const auto& rec : records)
            for (Relative r : kAllRelatives)
                if (generation_of(r) == g && present(rec.at(r).schooling))
                    values.push_back(rec.at(r).schooling);
        if (values.empty()) continue;
        std::sort(values.begin(), values.end());
        const auto& shares = thresholds.shares[static_cast<std::size_t>(g)];
        std::vector<double> cutoffs;
        for (double p : shares) {
            auto pos = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
            pos = std::clamp<std::size_t>(pos, 1, values.size()) - 1;
            cutoffs.push_back(values[pos]);
        }
        for (auto& rec : records) {
            for (Relative r : kAllRelatives) {
                if (generation_of(r) != g) continue;
                double& v = rec.at(r).schooling;
                if (!present(v)) continue;
                const auto code = static_cast<std::size_t>(
                    std::lower_bound(cutoffs.begin(), cutoffs.end(), v) - cutoffs.begin());
                v = kSchoolingCodes[code];
            }
        }
    }
}

std::vector<std::size_t> calibrated_region_sizes(std::size_t total_lineages) {
    // Log-linear interpolation of the size quantile function.
    constexpr std::array<std::pair<double, double>, 8> anchors{{
        {0.0, 263.0},
        {56.5 / 289.0, 1000.0},
        {159.5 / 289.0, 2000.0},
        {0.75, 3000.0},
        {0.862, 5000.0},
        {0.95, 8000.0},
        {0.99, 22000.0},
        {1.0, 56969.0},
    }};
    constexpr std::size_t kRegions = 290;
    std::vector<double> raw(kRegions);
    for (std::size_t i = 0; i < kRegions; ++i) {
        const double p = static_cast<double>(i) / (kRegions - 1);
        std::size_t k = 1;
        while (k + 1 < anchors.size() && anchors[k].first < p) ++k;
        const auto [p0, s0] = anchors[k - 1];
        const auto [p1, s1] = anchors[k];
        const double t = std::clamp((p - p0) / (p1 - p0), 0.0, 1.0);
        raw[i] = std::exp(std::log(s0) + t * (std::log(s1) - std::log(s0)));
    }
    double scale = 1.0;
    if (total_lineages > 0) {
        double sum = 0.0;
        for (double v : raw) sum += v;
        scale = static_cast<double>(total_lineages) / sum;
    }
    std::vector<std::size_t> sizes(kRegions);
    for (std::size_t i = 0; i < kRegions; ++i)
        sizes[i] = std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(raw[i] * scale)));
    return sizes;
}

GeneratorConfig calibrated_config(std::uint64_t seed, const CalibrationOptions& options) {
    GeneratorConfig cfg;
    cfg.seed = seed;
    cfg.channel_correlation = 0.5;
    cfg.censor_schooling = true;
    const auto sizes = calibrated_region_sizes(options.total_lineages);
    // Regions are listed in random size order so that region ids carry no
    // information about size.
    std::vector<std::size_t> order(sizes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Stream shuffle = substream(seed, 0x5157454445ULL);
    std::shuffle(order.begin(), order.end(), shuffle);

    // Regional deviations are drawn in antithetic pairs of size-adjacent
    // regions, so size-weighted regional means sit at the centres instead of
    // wandering with the few largest regions.
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t r = 0; r < sizes.size(); ++r) {
        const std::size_t rank = order[r];
        Stream s = substream(seed, 0x726567696f6eULL, rank / 2);
        const double sign = rank % 2 == 0 ? 1.0 : -1.0;
        const double z1 = sign * z(s), z2 = sign * z(s), z3 = sign * z(s), z4 = sign * z(s);
        const double k = options.heterogeneous ? 1.0 : 0.0;
        RegionParams rp;
        rp.region_id = static_cast<std::uint32_t>(r + 1);
        rp.n_lineages = sizes[order[r]];
        rp.cluster = static_cast<int>(r * 25 / sizes.size()) + 1;
        rp.spousal_correlation = 0.9;

        const double lambda = std::clamp(0.403 + k * 0.08 * z1, 0.05, 0.9);
        rp.schooling.lambda = lambda;
        rp.schooling.rho = std::clamp(0.89 + k * 0.04 * z2, 0.5, 1.0);
        rp.schooling.gen_means = {13.45, 11.9, 9.2};
        rp.schooling.gen_sds = {2.2, 2.5, 2.4};
        rp.schooling.missing_rates = {0.02, 0.04, 0.03, 0.30, 0.30, 0.32, 0.32};

        rp.earnings.rho = std::clamp(0.756 + k * 0.05 * z3, 0.3, 1.0);
        rp.earnings.lambda = std::clamp(0.431 + k * (0.3 * (lambda - 0.403) + 0.06 * z4), 0.05, 0.9);
        rp.earnings.gen_means = {12.87, 12.42, 12.47};
        const double dispersion = std::max(0.2, 0.55 + 1.5 * (lambda - 0.403));
        rp.earnings.gen_sds = {dispersion, dispersion, dispersion};
        rp.earnings.missing_rates = {0.03, 0.05, 0.06, 0.22, 0.22, 0.35, 0.35};
        cfg.regions.push_back(rp);
    }
    return cfg;
}

// ---------------------------------------------------------------------------

int education_group(double schooling) {
    if (!present(schooling)) return kMissingEducationGroup;
    for (std::size_t i = 0; i < kSchoolingCodes.size(); ++i)
        if (schooling == kSchoolingCodes[i]) return static_cast<int>(i);
    // Continuous schooling: nearest code.
    std::size_t best = 0;
    for (std::size_t i = 1; i < kSchoolingCodes.size(); ++i)
        if (std::abs(schooling - kSchoolingCodes[i]) < std::abs(schooling - kSchoolingCodes[best])) best = i;
    return static_cast<int>(best);
}

double ProfileCoefficients::eval(int age, int year) const {
    const double a = age - 40;
    const double t = year - 2000;
    return c[0] * a + c[1] * a * a + c[2] * t + c[3] * t * t;
}

PanelConfig PanelConfig::defaults() {
    PanelConfig cfg;
    for (int gender = 0; gender < 2; ++gender) {
        for (int edu = 0; edu < kEducationGroups; ++edu) {
            const double level = edu == kMissingEducationGroup ? 1.0 : edu;
            auto& p = cfg.profiles[static_cast<std::size_t>(gender * kEducationGroups + edu)];
            p.c[0] = 0.010 + 0.003 * level - 0.002 * gender;
            p.c[1] = -0.0006 - 0.00005 * level;
            p.c[2] = 0.012 + 0.001 * level;
            p.c[3] = -0.00004;
        }
    }
    return cfg;
}

int relative_birth_year(const LineageRecord& record, Relative r) {
    // Mean ages at the birth of the next generation: fathers 31, mothers 28.
    Stream s = substream(0x6c696e6561676573ULL, record.child_id);
    std::normal_distribution<double> gap(0.0, 4.0);
    const double d_father = 31.0 + gap(s);
    const double d_mother = 28.0 + gap(s);
    const double d_pgf = 31.0 + gap(s);
    const double d_pgm = 28.0 + gap(s);
    const double d_mgf = 31.0 + gap(s);
    const double d_mgm = 28.0 + gap(s);
    const int child = record.child_birth_year;
    auto yr = [](double v) { return static_cast<int>(std::lround(v)); };
    const int father = child - yr(d_father);
    const int mother = child - yr(d_mother);
    switch (r) {
        case Relative::Child: return child;
        case Relative::Father: return father;
        case Relative::Mother: return mother;
        case Relative::PaternalGrandfather: return father - yr(d_pgf);
        case Relative::PaternalGrandmother: return father - yr(d_pgm);
        case Relative::MaternalGrandfather: return mother - yr(d_mgf);
        case Relative::MaternalGrandmother: return mother - yr(d_mgm);
    }
    return child;
}

std::vector<EarningsPanelRow> generate_earnings_panel(std::span<const LineageRecord> records,
                                                      const PanelConfig& config) {
    if (config.year_last < config.year_first) throw config_error("empty panel year window");
    if (config.age_max < config.age_min) throw config_error("empty panel age window");
    if (!(config.transitory_sd >= 0.0)) throw config_error("transitory sd must be non-negative");

    std::vector<std::vector<EarningsPanelRow>> per_record(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
        const LineageRecord& rec = records[i];
        auto& rows = per_record[i];
        std::normal_distribution<double> noise(0.0, 1.0);
        for (Relative r : kAllRelatives) {
            const auto& o = rec.at(r);
            if (!present(o.log_earnings)) continue;
            const Gender gender = r == Relative::Child ? rec.child_gender : gender_of(r);
            const int edu = education_group(o.schooling);
            const int by = relative_birth_year(rec, r);
            const auto& prof = config.profiles[static_cast<std::size_t>(
                static_cast<int>(gender) * kEducationGroups + edu)];
            const double effect = o.log_earnings - prof.eval(40, by + 40);
            Stream s = substream(config.seed, rec.child_id, index_of(r));
            for (int year = config.year_first; year <= config.year_last; ++year) {
                const int age = year - by;
                if (age < config.age_min || age > config.age_max) continue;
                EarningsPanelRow row;
                row.person_id = person_id(rec.child_id, r);
                row.region_id = rec.region_id;
                row.gender = gender;
                row.edu_group = edu;
                row.birth_year = by;
                row.year = year;
                row.age = age;
                row.log_earnings = effect + prof.eval(age, year) + config.transitory_sd * noise(s);
                rows.push_back(row);
            }
        }
    });

    std::vector<EarningsPanelRow> out;
    std::size_t total = 0;
    for (const auto& v : per_record) total += v.size();
    out.reserve(total);
    for (auto& v : per_record) out.insert(out.end(), v.begin(), v.end());
    flag_below_floor(out, config.floor_share_of_male_median);
    return out;
}

void flag_below_floor(std::span<EarningsPanelRow> rows, double share_of_male_median) {
    std::map<int, std::vector<double>> male_levels;
    for (const auto& row : rows)
        if (row.gender == Gender::Male) male_levels[row.year].push_back(std::exp(row.log_earnings));
    std::map<int, double> log_floor;
    for (auto& [year, levels] : male_levels) {
        std::sort(levels.begin(), levels.end());
        const std::size_t n = levels.size();
        const double med = n % 2 == 1 ? levels[n / 2] : 0.5 * (levels[n / 2 - 1] + levels[n / 2]);
        log_floor[year] = std::log(share_of_male_median * med);
    }
    for (auto& row : rows) {
        auto it = log_floor.find(row.year);
        row.below_floor = it != log_floor.end() && row.log_earnings < it->second;
    }
}

}  // namespace mobilab
