#include "mobilab/pipeline.hpp"

#include "mobilab/io.hpp"
#include "mobilab/parallel.hpp"
#include "mobilab/rng.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

namespace mobilab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 9> kAnalysisNames{
    "estimates", "delta", "latent", "gatsby", "placebo", "subsamples", "recovery", "cef", "cross_matrix",
};
constexpr std::array<std::string_view, 8> kPresetNames{
    "table2", "table3", "table4", "table5", "table6", "figure1_density", "figure3_cef", "figure6_placebo",
};

// ---------------------------------------------------------------------------
// Configuration

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw config_error(std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, std::initializer_list<std::string_view> known, const std::string& where) {
    if (!j.is_object()) throw config_error(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw config_error("unknown config key '" + key + "' in " + where);
    }
}

template <class E, std::size_t N>
E parse_choice(const json& j, const char* key, E fallback, const std::array<std::string_view, N>& names) {
    if (!j.contains(key)) return fallback;
    const auto s = get_or<std::string>(j, key, "");
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == s) return static_cast<E>(i);
    std::string allowed;
    for (auto n : names) allowed += std::string(allowed.empty() ? "" : ", ") + std::string(n);
    throw config_error(std::string("config key '") + key + "': '" + s + "' is not one of " + allowed);
}

constexpr std::array<std::string_view, 3> kInputNames{"synthetic", "lineage_csv", "panel_csv"};
constexpr std::array<std::string_view, 3> kPresetInputNames{"calibrated", "homogeneous", "custom"};
constexpr std::array<std::string_view, 3> kModeNames{"continuous", "categorical_education", "earnings_panel"};
constexpr std::array<std::string_view, 2> kSurNames{"union", "triplet_complete"};
constexpr std::array<std::string_view, 2> kGenerationNames{"father", "grandfather"};
constexpr std::array<std::string_view, 3> kGenderNames{"all", "sons", "daughters"};
constexpr std::array<std::string_view, 2> kStatisticChoice{"regression_slope", "pearson_correlation"};
constexpr std::array<std::string_view, 2> kShockNames{"gaussian", "student_t5"};

RegionParams custom_region(const json& j, std::size_t index) {
    reject_unknown(j,
                   {"id", "n_lineages", "rho", "lambda", "earnings_rho", "earnings_lambda", "spousal_correlation",
                    "cluster", "missing_rates"},
                   "input.regions[" + std::to_string(index) + "]");
    RegionParams rp;
    rp.region_id = get_or<std::uint32_t>(j, "id", static_cast<std::uint32_t>(index + 1));
    rp.n_lineages = get_or<std::size_t>(j, "n_lineages", 1000);
    rp.schooling.rho = get_or<double>(j, "rho", 0.9);
    rp.schooling.lambda = get_or<double>(j, "lambda", 0.4);
    rp.schooling.gen_means = {13.45, 11.9, 9.2};
    rp.schooling.gen_sds = {2.2, 2.5, 2.4};
    rp.earnings.rho = get_or<double>(j, "earnings_rho", 0.756);
    rp.earnings.lambda = get_or<double>(j, "earnings_lambda", 0.431);
    rp.earnings.gen_means = {12.87, 12.42, 12.47};
    rp.earnings.gen_sds = {0.55, 0.55, 0.55};
    rp.spousal_correlation = get_or<double>(j, "spousal_correlation", 0.5);
    rp.cluster = get_or<int>(j, "cluster", static_cast<int>(index + 1));
    if (j.contains("missing_rates")) {
        const auto rates = get_or<std::vector<double>>(j, "missing_rates", {});
        if (rates.size() != kRelativeCount) throw config_error("missing_rates needs one entry per relative (7)");
        std::copy(rates.begin(), rates.end(), rp.schooling.missing_rates.begin());
        std::copy(rates.begin(), rates.end(), rp.earnings.missing_rates.begin());
    }
    return rp;
}

json region_json(const RegionParams& rp) {
    json j;
    j["id"] = rp.region_id;
    j["n_lineages"] = rp.n_lineages;
    j["rho"] = rp.schooling.rho;
    j["lambda"] = rp.schooling.lambda;
    j["earnings_rho"] = rp.earnings.rho;
    j["earnings_lambda"] = rp.earnings.lambda;
    j["spousal_correlation"] = rp.spousal_correlation;
    j["cluster"] = rp.cluster;
    j["missing_rates"] = std::vector<double>(rp.schooling.missing_rates.begin(), rp.schooling.missing_rates.end());
    return j;
}

json config_to_json(const PipelineConfig& c) {
    json j;
    j["seed"] = c.seed;
    json in;
    in["kind"] = kInputNames[static_cast<std::size_t>(c.input)];
    in["preset"] = kPresetInputNames[static_cast<std::size_t>(c.synthetic.preset)];
    in["total_lineages"] = c.synthetic.total_lineages;
    in["outcome_mode"] = kModeNames[static_cast<std::size_t>(c.synthetic.outcome_mode)];
    json regions = json::array();
    for (const auto& r : c.synthetic.regions) regions.push_back(region_json(r));
    in["regions"] = regions;
    in["lineage_csv"] = c.lineage_csv;
    in["panel_csv"] = c.panel_csv;
    in["skip_invalid_rows"] = c.skip_invalid_rows;
    in["categorical_education"] = c.categorical_education;
    j["input"] = in;
    json an = json::array();
    for (auto a : c.analyses) an.push_back(to_string(a));
    j["analyses"] = an;
    j["weighted"] = c.weighted;
    j["balanced"] = c.balanced;
    j["gender"] = to_string(c.gender);
    j["min_pairs"] = c.min_pairs;
    j["sur_sample"] = kSurNames[static_cast<std::size_t>(c.sur_sample)];
    j["inequality_generation"] = kGenerationNames[static_cast<std::size_t>(c.inequality_generation)];
    j["placebo"] = {{"n_permutations", c.placebo.n_permutations}, {"split_threshold", c.placebo.split_threshold}};
    j["subsamples"] = {{"replicates", c.subsamples.replicates}, {"fraction", c.subsamples.fraction}};
    j["recovery"] = {{"rhos", c.recovery.rhos},
                     {"lambdas", c.recovery.lambdas},
                     {"sizes", c.recovery.sizes},
                     {"replicates", c.recovery.replicates},
                     {"statistic", to_string(c.recovery.statistic)},
                     {"sur_sample", kSurNames[static_cast<std::size_t>(c.recovery.sample)]},
                     {"shocks", kShockNames[static_cast<std::size_t>(c.recovery.shocks)]},
                     {"missing_rate", c.recovery.missing_rate}};
    j["cef_bins"] = c.cef_bins;
    j["cross_min_pairs"] = c.cross_min_pairs;
    return j;
}

}  // namespace

std::string_view to_string(AnalysisKind a) { return kAnalysisNames[static_cast<std::size_t>(a)]; }

std::optional<AnalysisKind> parse_analysis(std::string_view s) {
    for (std::size_t i = 0; i < kAnalysisNames.size(); ++i)
        if (kAnalysisNames[i] == s) return static_cast<AnalysisKind>(i);
    return std::nullopt;
}

bool PipelineConfig::wants(AnalysisKind a) const {
    return std::find(analyses.begin(), analyses.end(), a) != analyses.end();
}

PipelineConfig parse_config(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    reject_unknown(j,
                   {"seed", "input", "analyses", "weighted", "balanced", "gender", "min_pairs", "sur_sample",
                    "inequality_generation", "placebo", "subsamples", "recovery", "cef_bins", "cross_min_pairs",
                    "output_dir"},
                   "config");
    PipelineConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    if (j.contains("input")) {
        const json& in = j.at("input");
        reject_unknown(in,
                       {"kind", "preset", "total_lineages", "outcome_mode", "regions", "lineage_csv", "panel_csv",
                        "skip_invalid_rows", "categorical_education"},
                       "input");
        c.input = parse_choice(in, "kind", c.input, kInputNames);
        c.synthetic.preset = parse_choice(in, "preset", c.synthetic.preset, kPresetInputNames);
        c.synthetic.total_lineages = get_or<std::size_t>(in, "total_lineages", 0);
        c.synthetic.outcome_mode = parse_choice(in, "outcome_mode", c.synthetic.outcome_mode, kModeNames);
        if (in.contains("regions")) {
            const json& regions = in.at("regions");
            if (!regions.is_array()) throw config_error("input.regions must be an array");
            for (std::size_t i = 0; i < regions.size(); ++i) c.synthetic.regions.push_back(custom_region(regions[i], i));
        }
        c.lineage_csv = get_or<std::string>(in, "lineage_csv", "");
        c.panel_csv = get_or<std::string>(in, "panel_csv", "");
        c.skip_invalid_rows = get_or<bool>(in, "skip_invalid_rows", false);
        c.categorical_education = get_or<bool>(in, "categorical_education", false);
    }
    if (j.contains("analyses")) {
        c.analyses.clear();
        for (const auto& name : get_or<std::vector<std::string>>(j, "analyses", {})) {
            auto a = parse_analysis(name);
            if (!a) throw config_error("unknown analysis '" + name + "'");
            if (!c.wants(*a)) c.analyses.push_back(*a);
        }
    }
    c.weighted = get_or<bool>(j, "weighted", c.weighted);
    c.balanced = get_or<bool>(j, "balanced", c.balanced);
    c.gender = parse_choice(j, "gender", c.gender, kGenderNames);
    c.min_pairs = get_or<std::size_t>(j, "min_pairs", c.min_pairs);
    c.sur_sample = parse_choice(j, "sur_sample", c.sur_sample, kSurNames);
    c.inequality_generation = parse_choice(j, "inequality_generation", c.inequality_generation, kGenerationNames);
    if (j.contains("placebo")) {
        const json& p = j.at("placebo");
        reject_unknown(p, {"n_permutations", "split_threshold"}, "placebo");
        c.placebo.n_permutations = get_or<int>(p, "n_permutations", c.placebo.n_permutations);
        c.placebo.split_threshold = get_or<std::size_t>(p, "split_threshold", c.placebo.split_threshold);
    }
    if (j.contains("subsamples")) {
        const json& s = j.at("subsamples");
        reject_unknown(s, {"replicates", "fraction"}, "subsamples");
        c.subsamples.replicates = get_or<int>(s, "replicates", c.subsamples.replicates);
        c.subsamples.fraction = get_or<double>(s, "fraction", c.subsamples.fraction);
    }
    if (j.contains("recovery")) {
        const json& r = j.at("recovery");
        reject_unknown(r, {"rhos", "lambdas", "sizes", "replicates", "statistic", "sur_sample", "shocks", "missing_rate"},
                       "recovery");
        c.recovery.rhos = get_or<std::vector<double>>(r, "rhos", c.recovery.rhos);
        c.recovery.lambdas = get_or<std::vector<double>>(r, "lambdas", c.recovery.lambdas);
        c.recovery.sizes = get_or<std::vector<std::size_t>>(r, "sizes", c.recovery.sizes);
        c.recovery.replicates = get_or<int>(r, "replicates", c.recovery.replicates);
        c.recovery.statistic = parse_choice(r, "statistic", c.recovery.statistic, kStatisticChoice);
        c.recovery.sample = parse_choice(r, "sur_sample", c.recovery.sample, kSurNames);
        c.recovery.shocks = parse_choice(r, "shocks", c.recovery.shocks, kShockNames);
        c.recovery.missing_rate = get_or<double>(r, "missing_rate", c.recovery.missing_rate);
    }
    c.cef_bins = get_or<int>(j, "cef_bins", c.cef_bins);
    c.cross_min_pairs = get_or<std::size_t>(j, "cross_min_pairs", c.cross_min_pairs);
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir.string());
    validate(c);
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void validate(const PipelineConfig& c) {
    if (c.analyses.empty()) throw config_error("no analyses requested");
    const bool needs_input = std::any_of(c.analyses.begin(), c.analyses.end(),
                                         [](AnalysisKind a) { return a != AnalysisKind::Recovery; });
    if (needs_input) {
        switch (c.input) {
            case InputKind::Synthetic:
                if (c.synthetic.preset == SyntheticPreset::Custom && c.synthetic.regions.empty())
                    throw config_error("custom synthetic input needs input.regions");
                if (c.synthetic.preset != SyntheticPreset::Custom && !c.synthetic.regions.empty())
                    throw config_error("input.regions is only used with the custom preset");
                for (const auto& r : c.synthetic.regions) validate(r);
                break;
            case InputKind::LineageCsv:
                if (c.lineage_csv.empty()) throw config_error("lineage_csv input needs input.lineage_csv");
                break;
            case InputKind::PanelCsv:
                if (c.lineage_csv.empty() || c.panel_csv.empty())
                    throw config_error("panel_csv input needs input.panel_csv and input.lineage_csv (family links)");
                break;
        }
    }
    if (c.input != InputKind::Synthetic && c.synthetic.preset == SyntheticPreset::Custom &&
        !c.synthetic.regions.empty())
        throw config_error("input.regions is only used with synthetic input");
    validate(c.placebo);
    validate(c.subsamples);
    if (c.wants(AnalysisKind::Recovery)) validate(c.recovery);
    if (c.cef_bins < 2) throw config_error("cef_bins must be at least 2");
    if (c.min_pairs < 3) throw config_error("min_pairs must be at least 3");
}

std::string canonical_json(const PipelineConfig& c) { return config_to_json(c).dump(2); }

std::string config_hash(const PipelineConfig& c) { return hex64(fnv1a(canonical_json(c))); }

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return 2;
        case ErrorKind::Validation: return 3;
        case ErrorKind::Analysis: return 4;
    }
    return 4;
}

int ReportBundle::exit_code() const { return failures.empty() ? 0 : exit_code_for(failures.front().kind); }

// ---------------------------------------------------------------------------
// Input

GeneratorConfig generator_config(const PipelineConfig& c) {
    GeneratorConfig gen;
    switch (c.synthetic.preset) {
        case SyntheticPreset::Calibrated:
        case SyntheticPreset::Homogeneous: {
            CalibrationOptions opt;
            opt.total_lineages = c.synthetic.total_lineages;
            opt.heterogeneous = c.synthetic.preset == SyntheticPreset::Calibrated;
            gen = calibrated_config(c.seed, opt);
            break;
        }
        case SyntheticPreset::Custom:
            gen.seed = c.seed;
            gen.regions = c.synthetic.regions;
            break;
    }
    gen.outcome_mode = c.synthetic.outcome_mode;
    return gen;
}

namespace {

void apply_panel_predictions(std::vector<LineageRecord>& records, std::span<const EarningsPanelRow> panel,
                             std::vector<std::string>& log) {
    const FeModel model = fit_fe_model(panel);
    log.push_back("fixed-effects model: " + std::to_string(model.n_rows) + " person-years, " +
                  std::to_string(model.n_persons) + " persons, R2 " + format_fixed(model.r2, 6));
    for (const auto& d : model.diagnostics) log.push_back("fixed-effects: " + d);
    const auto keys = person_keys(records);
    const PredictionReport pred = predict_at_40(model, keys);
    for (const auto& w : pred.warnings) log.push_back("prediction: " + w);
    log.push_back("persons without earnings observations: " + std::to_string(pred.without_effect));
    attach_predictions(records, pred);
}

}  // namespace

LoadedInput load_input(const PipelineConfig& c) {
    LoadedInput out;
    if (c.input == InputKind::Synthetic) {
        const GeneratorConfig gen = generator_config(c);
        out.records = generate_population(gen);
        out.log.push_back("generated " + std::to_string(out.records.size()) + " lineages in " +
                          std::to_string(gen.regions.size()) + " regions");
        if (c.synthetic.outcome_mode == OutcomeMode::EarningsPanel) {
            PanelConfig pc = PanelConfig::defaults();
            pc.seed = derive_key(c.seed, 0x70616e656cULL);
            out.panel = generate_earnings_panel(out.records, pc);
            flag_below_floor(out.panel, pc.floor_share_of_male_median);
            out.log.push_back("generated " + std::to_string(out.panel.size()) + " person-year earnings rows");
            apply_panel_predictions(out.records, out.panel, out.log);
        } else {
            assign_earnings_ranks(out.records);
        }
        return out;
    }
    IngestOptions opt;
    opt.fail_fast = !c.skip_invalid_rows;
    opt.categorical_education = c.categorical_education;
    IngestReport rep = ingest_lineage_csv(c.lineage_csv, opt);
    out.records = std::move(rep.records);
    out.skipped = std::move(rep.errors);
    out.log.push_back("read " + std::to_string(rep.rows_read) + " lineage rows, kept " +
                      std::to_string(out.records.size()));
    for (const auto& e : out.skipped)
        out.log.push_back("skipped line " + std::to_string(e.line) + (e.column.empty() ? "" : " (" + e.column + ")") +
                          ": " + e.message);
    std::set<std::uint64_t> ids;
    for (const auto& r : out.records)
        if (!ids.insert(r.child_id).second)
            throw validation_error("duplicate child_id " + std::to_string(r.child_id) + " in " + c.lineage_csv);
    if (c.input == InputKind::PanelCsv) {
        const auto panel = read_panel_csv(c.panel_csv);
        out.log.push_back("read " + std::to_string(panel.size()) + " person-year rows");
        apply_panel_predictions(out.records, panel, out.log);
    } else {
        // Ranks are recomputed from log earnings so the input's rank columns
        // cannot disagree with its earnings.
        bool any_earnings = false;
        for (const auto& r : out.records)
            for (Relative rel : kAllRelatives) any_earnings = any_earnings || present(r.at(rel).log_earnings);
        if (any_earnings) assign_earnings_ranks(out.records);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analyses

namespace {

struct Context {
    const PipelineConfig& cfg;
    const std::vector<LineageRecord>& records;
    RegionGroups groups;
    OutcomeContext octx;
    bool has_earnings = false;
    fs::path dir;
};

struct Outcome {
    std::vector<std::string> files;
    std::vector<std::string> log;
};

template <class Fn>
std::string write_file(const Context& ctx, const std::string& name, Fn&& fn) {
    std::ofstream out(ctx.dir / name, std::ios::binary);
    if (!out) throw config_error("cannot write " + (ctx.dir / name).string());
    fn(out);
    if (!out) throw config_error("write failed for " + (ctx.dir / name).string());
    return name;
}

EstimatorSpec make_spec(const Context& ctx, OutcomeKind o, Statistic s, PairType p) {
    EstimatorSpec spec;
    spec.outcome = o;
    spec.statistic = s;
    spec.pair = p;
    spec.gender = ctx.cfg.gender;
    spec.balanced = ctx.cfg.balanced;
    spec.weighting = ctx.cfg.weighted ? Weighting::PairCount : Weighting::Unweighted;
    return spec;
}

constexpr std::array<PairType, 8> kPairs{
    PairType::Father,           PairType::Mother,
    PairType::ParentalAverage,  PairType::PaternalGrandfather,
    PairType::MaternalGrandfather, PairType::PaternalGrandmother,
    PairType::MaternalGrandmother, PairType::GrandparentalAverage,
};

std::vector<EstimatorSpec> estimate_specs(const Context& ctx) {
    std::vector<EstimatorSpec> specs;
    for (PairType p : kPairs)
        specs.push_back(make_spec(ctx, OutcomeKind::SchoolingYears, Statistic::PearsonCorrelation, p));
    for (PairType p : {PairType::Father, PairType::PaternalGrandfather})
        specs.push_back(make_spec(ctx, OutcomeKind::BinaryEducation, Statistic::PearsonCorrelation, p));
    if (ctx.has_earnings) {
        for (PairType p : kPairs)
            specs.push_back(make_spec(ctx, OutcomeKind::EarningsRank, Statistic::RegressionSlope, p));
        for (PairType p : {PairType::Father, PairType::PaternalGrandfather})
            specs.push_back(make_spec(ctx, OutcomeKind::LogEarnings, Statistic::RegressionSlope, p));
    }
    return specs;
}

void write_spec_fields(CsvWriter& w, const EstimatorSpec& s) {
    w.field(std::string_view(s.label()))
        .field(to_string(s.outcome))
        .field(to_string(s.statistic))
        .field(to_string(s.pair))
        .field(to_string(s.gender))
        .field(s.balanced);
}

bool is_rank_slope(const EstimatorSpec& s) {
    return s.outcome == OutcomeKind::EarningsRank && s.statistic == Statistic::RegressionSlope;
}

Outcome run_estimates(const Context& ctx) {
    Outcome out;
    const auto specs = estimate_specs(ctx);
    std::vector<std::vector<MobilityEstimate>> all(specs.size());
    std::vector<MobilityEstimate> national(specs.size());
    std::vector<std::string> national_error(specs.size());
    for (std::size_t k = 0; k < specs.size(); ++k) {
        all[k] = estimate_by_region(ctx.groups, specs[k], ctx.octx);
        try {
            national[k] = estimate_region(ctx.records, specs[k], ctx.octx);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Analysis) throw;
            national_error[k] = e.what();
        }
    }
    out.files.push_back(write_file(ctx, "estimates.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"spec", "outcome", "statistic", "pair", "gender", "balanced", "region_id", "alpha", "beta", "se_beta",
               "p25", "n_pairs", "r2", "flagged", "flag_reason"});
        for (std::size_t k = 0; k < specs.size(); ++k)
            for (const auto& e : all[k]) {
                write_spec_fields(w, specs[k]);
                w.field(std::string_view(std::to_string(e.region_id)))
                    .field(e.alpha)
                    .field(e.beta)
                    .field(e.se_beta)
                    .field(is_rank_slope(specs[k]) && !e.flagged ? p25_upward_mobility(e) : kMissing)
                    .field(e.n_pairs)
                    .field(e.r2)
                    .field(e.flagged)
                    .field(std::string_view(e.flag_reason))
                    .end_row();
            }
    }));
    out.files.push_back(write_file(ctx, "estimates_summary.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"spec", "outcome", "statistic", "pair", "gender", "balanced", "regions", "mean_unweighted",
               "sd_unweighted", "mean_weighted", "sd_weighted"});
        for (std::size_t k = 0; k < specs.size(); ++k) {
            const SeriesSummary s = summarize(all[k], ctx.cfg.min_pairs);
            write_spec_fields(w, specs[k]);
            w.field(s.regions).field(s.mean_unweighted).field(s.sd_unweighted).field(s.mean_weighted).field(s.sd_weighted);
            w.end_row();
        }
    }));
    out.files.push_back(write_file(ctx, "national.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"spec", "outcome", "statistic", "pair", "gender", "balanced", "alpha", "beta", "se_beta", "n_pairs",
               "error"});
        for (std::size_t k = 0; k < specs.size(); ++k) {
            write_spec_fields(w, specs[k]);
            w.field(national[k].alpha)
                .field(national[k].beta)
                .field(national[k].se_beta)
                .field(national[k].n_pairs)
                .field(std::string_view(national_error[k]))
                .end_row();
        }
    }));
    out.log.push_back("estimates: " + std::to_string(specs.size()) + " statistics x " +
                      std::to_string(ctx.groups.ids.size()) + " regions");
    return out;
}

std::vector<OutcomeKind> latent_outcomes(const Context& ctx) {
    std::vector<OutcomeKind> o{OutcomeKind::SchoolingYears};
    if (ctx.has_earnings) o.push_back(OutcomeKind::EarningsRank);
    return o;
}

Outcome run_delta(const Context& ctx) {
    Outcome out;
    std::vector<std::pair<OutcomeKind, std::vector<DeltaTest>>> results;
    for (OutcomeKind o : latent_outcomes(ctx)) {
        DeltaOptions opt;
        opt.outcome = o;
        opt.gender = ctx.cfg.gender;
        opt.sample = ctx.cfg.balanced ? SurSample::TripletComplete : ctx.cfg.sur_sample;
        results.emplace_back(o, delta_tests_by_region(ctx.groups, opt, ctx.octx));
    }
    out.files.push_back(write_file(ctx, "delta.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"outcome", "region_id", "beta1", "beta2", "delta", "var_beta1", "var_beta2", "cov_b1b2", "var_delta",
               "t_stat", "p_two_sided", "p_one_sided", "n_parent_pairs", "n_grandparent_pairs", "n_common", "flagged",
               "flag_reason"});
        for (const auto& [o, tests] : results)
            for (const auto& t : tests) {
                w.field(to_string(o))
                    .field(std::string_view(std::to_string(t.region_id)))
                    .field(t.beta1)
                    .field(t.beta2)
                    .field(t.delta)
                    .field(t.var_beta1)
                    .field(t.var_beta2)
                    .field(t.cov_b1b2)
                    .field(t.var_delta)
                    .field(t.t_stat)
                    .field(t.p_two_sided)
                    .field(t.p_one_sided)
                    .field(t.n_parent_pairs)
                    .field(t.n_grandparent_pairs)
                    .field(t.n_common)
                    .field(t.flagged)
                    .field(std::string_view(t.flag_reason))
                    .end_row();
            }
    }));
    out.files.push_back(write_file(ctx, "delta_summary.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"outcome", "regions", "share_delta_positive", "share_delta_positive_weighted", "share_t_above_1.96",
               "share_t_above_1.96_weighted", "share_one_sided", "share_one_sided_weighted", "share_two_sided",
               "share_two_sided_weighted"});
        for (const auto& [o, tests] : results) {
            const RejectShares s = reject_shares(tests);
            w.field(to_string(o))
                .field(s.regions)
                .field(s.delta_positive)
                .field(s.delta_positive_weighted)
                .field(s.t_above)
                .field(s.t_above_weighted)
                .field(s.one_sided)
                .field(s.one_sided_weighted)
                .field(s.two_sided)
                .field(s.two_sided_weighted)
                .end_row();
        }
    }));
    out.log.push_back("delta: tests for " + std::to_string(results.size()) + " outcomes");
    return out;
}

std::vector<LatentEstimate> latent_for(const Context& ctx, const RegionGroups& groups, const OutcomeContext& octx,
                                       OutcomeKind o, bool balanced) {
    LatentOptions opt;
    opt.outcome = o;
    opt.balanced = balanced;
    opt.gender = ctx.cfg.gender;
    return latent_by_region(groups, opt, octx);
}

void write_regression(CsvWriter& w, const std::string& model, const RegressionResult& r) {
    auto kv = [&](const std::string& key, const std::string& value) {
        w.field(std::string_view(model)).field(std::string_view(key)).field(std::string_view(value)).end_row();
    };
    kv("n", std::to_string(r.n));
    for (std::size_t i = 0; i < r.names.size(); ++i) {
        kv("coef." + r.names[i], format_fixed(r.coef[static_cast<Eigen::Index>(i)]));
        kv("se." + r.names[i], format_fixed(r.se[static_cast<Eigen::Index>(i)]));
    }
    kv("r2", format_fixed(r.r2));
    kv("adj_r2", format_fixed(r.adj_r2));
    kv("condition_number", format_fixed(r.condition_number, 6));
    for (std::size_t i = 0; i < r.warnings.size(); ++i) kv("warning." + std::to_string(i + 1), r.warnings[i]);
}

struct ModelSpec {
    std::string name;
    LatentRegressors regressors;
    bool log_mode;
};
const std::vector<ModelSpec>& latent_models() {
    static const std::vector<ModelSpec> models{
        {"rho", LatentRegressors::Rho, false},
        {"lambda", LatentRegressors::Lambda, false},
        {"both", LatentRegressors::Both, false},
        {"log_both", LatentRegressors::Both, true},
    };
    return models;
}

Outcome run_latent(const Context& ctx) {
    Outcome out;
    struct Block {
        OutcomeKind outcome;
        bool balanced;
        std::vector<LatentEstimate> est;
    };
    std::vector<Block> blocks;
    for (OutcomeKind o : latent_outcomes(ctx))
        for (bool balanced : {false, true}) blocks.push_back({o, balanced, latent_for(ctx, ctx.groups, ctx.octx, o, balanced)});

    out.files.push_back(write_file(ctx, "latent.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"outcome", "sample", "region_id", "beta1_adj", "beta2", "lambda_hat", "rho_hat", "valid", "reason",
               "n_grandparent_pairs"});
        for (const auto& b : blocks)
            for (const auto& e : b.est) {
                w.field(to_string(b.outcome))
                    .field(std::string_view(b.balanced ? "balanced" : "baseline"))
                    .field(std::string_view(std::to_string(e.region_id)))
                    .field(e.beta1_adj)
                    .field(e.beta2)
                    .field(e.lambda_hat)
                    .field(e.rho_hat)
                    .field(e.valid)
                    .field(std::string_view(e.reason))
                    .field(e.n_grandparent_pairs)
                    .end_row();
            }
    }));
    out.files.push_back(write_file(ctx, "latent_summary.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"outcome", "sample", "parameter", "regions", "mean_weighted", "sd_weighted", "mean_unweighted",
               "sd_unweighted"});
        for (const auto& b : blocks) {
            std::vector<double> rho, lambda, wts;
            for (const auto& e : b.est)
                if (e.valid) {
                    rho.push_back(e.rho_hat);
                    lambda.push_back(e.lambda_hat);
                    wts.push_back(static_cast<double>(e.n_grandparent_pairs));
                }
            for (const auto& [name, v] : {std::pair{"rho_hat", &rho}, std::pair{"lambda_hat", &lambda}}) {
                w.field(to_string(b.outcome))
                    .field(std::string_view(b.balanced ? "balanced" : "baseline"))
                    .field(std::string_view(name))
                    .field(v->size());
                if (v->size() >= 2) {
                    w.field(weighted_mean(*v, wts)).field(weighted_sd(*v, wts)).field(mean(*v)).field(weighted_sd(*v, {}));
                } else {
                    w.field(kMissing).field(kMissing).field(kMissing).field(kMissing);
                }
                w.end_row();
            }
        }
    }));
    std::vector<std::string> failures;
    out.files.push_back(write_file(ctx, "latent_regressions.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"model", "key", "value"});
        for (const auto& b : blocks) {
            if (b.balanced != ctx.cfg.balanced) continue;
            for (const auto& m : latent_models()) {
                const std::string model = std::string(to_string(b.outcome)) + ":" + m.name;
                try {
                    write_regression(w, model, latent_regression(b.est, m.regressors, m.log_mode, {}, ctx.cfg.weighted));
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::Analysis) throw;
                    w.field(std::string_view(model)).field("error").field(std::string_view(e.what())).end_row();
                    failures.push_back(model + ": " + e.what());
                }
            }
        }
    }));
    for (const auto& b : blocks) {
        std::size_t valid = 0;
        for (const auto& e : b.est) valid += e.valid ? 1 : 0;
        out.log.push_back("latent " + std::string(to_string(b.outcome)) + (b.balanced ? " balanced" : " baseline") +
                          ": " + std::to_string(valid) + " of " + std::to_string(b.est.size()) + " regions valid");
        for (const auto& e : b.est)
            if (!e.valid)
                out.log.push_back("  region " + std::to_string(e.region_id) + " excluded: " + e.reason);
    }
    if (!failures.empty()) throw analysis_error("latent regressions failed: " + failures.front());
    return out;
}

void require_earnings(const Context& ctx, std::string_view analysis) {
    if (!ctx.has_earnings)
        throw config_error(std::string(analysis) + " requires earnings, but the input has no log earnings");
}

std::vector<MobilityEstimate> as_p25(std::vector<MobilityEstimate> est) {
    for (auto& e : est) {
        if (e.flagged) continue;
        e.beta = p25_upward_mobility(e);
    }
    return est;
}

Outcome run_gatsby(const Context& ctx) {
    require_earnings(ctx, "gatsby");
    Outcome out;
    const auto father = inequality_by_region(ctx.groups, InequalityGeneration::Father);
    const auto grandfather = inequality_by_region(ctx.groups, InequalityGeneration::Grandfather);
    out.files.push_back(write_file(ctx, "inequality.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"region_id", "generation", "gini", "sd_log", "n"});
        for (const auto* set : {&father, &grandfather})
            for (const auto& m : *set)
                w.field(std::string_view(std::to_string(m.region_id)))
                    .field(std::string_view(m.generation == InequalityGeneration::Father ? "father" : "grandfather"))
                    .field(m.gini)
                    .field(m.sd_log)
                    .field(m.n)
                    .end_row();
    }));

    struct Row {
        std::string panel, statistic, column;
        GatsbyResult res;
        std::string error;
    };
    std::vector<Row> rows;
    struct Stat {
        const char* name;
        OutcomeKind outcome;
        Statistic statistic;
        bool p25;
    };
    const std::array<Stat, 4> stats{{
        {"rank_slope", OutcomeKind::EarningsRank, Statistic::RegressionSlope, false},
        {"ige_log", OutcomeKind::LogEarnings, Statistic::RegressionSlope, false},
        {"p25_upward", OutcomeKind::EarningsRank, Statistic::RegressionSlope, true},
        {"education_correlation", OutcomeKind::SchoolingYears, Statistic::PearsonCorrelation, false},
    }};
    for (const auto& [panel, pair, ineq] :
         {std::tuple{"intergenerational", PairType::Father, &father},
          std::tuple{"multigenerational", PairType::PaternalGrandfather, &grandfather}}) {
        for (const Stat& st : stats) {
            for (const auto& [column, gender, size_control] :
                 {std::tuple{"sons", GenderFilter::Sons, false}, std::tuple{"daughters", GenderFilter::Daughters, false},
                  std::tuple{"pooled", GenderFilter::All, false}, std::tuple{"size_controlled", GenderFilter::All, true}}) {
                EstimatorSpec spec = make_spec(ctx, st.outcome, st.statistic, pair);
                spec.gender = gender;
                auto est = estimate_by_region(ctx.groups, spec, ctx.octx);
                if (st.p25) est = as_p25(std::move(est));
                GatsbyOptions opt;
                opt.weighted = ctx.cfg.weighted;
                opt.size_control = size_control;
                opt.min_pairs = ctx.cfg.min_pairs;
                Row row{panel, st.name, column, {}, {}};
                try {
                    row.res = gatsby_correlation(est, *ineq, opt);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::Analysis) throw;
                    row.error = e.what();
                }
                rows.push_back(std::move(row));
            }
        }
    }
    out.files.push_back(write_file(ctx, "gatsby.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"panel", "statistic", "column", "correlation", "p_value", "regions", "weighted", "error"});
        for (const auto& r : rows)
            w.field(std::string_view(r.panel))
                .field(std::string_view(r.statistic))
                .field(std::string_view(r.column))
                .field(r.res.correlation)
                .field(r.res.p_value)
                .field(r.res.regions)
                .field(ctx.cfg.weighted)
                .field(std::string_view(r.error))
                .end_row();
    }));

    const auto latent = latent_for(ctx, ctx.groups, ctx.octx, OutcomeKind::SchoolingYears, ctx.cfg.balanced);
    const auto& ineq = ctx.cfg.inequality_generation == InequalityGeneration::Father ? father : grandfather;
    std::vector<std::string> failures;
    out.files.push_back(write_file(ctx, "gatsby_regressions.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"model", "key", "value"});
        for (const auto& m : latent_models()) {
            if (m.log_mode) continue;
            const std::string model = "gini:" + m.name;
            try {
                write_regression(w, model, latent_inequality_regression(ineq, latent, m.regressors, {}, ctx.cfg.weighted));
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Analysis) throw;
                w.field(std::string_view(model)).field("error").field(std::string_view(e.what())).end_row();
                failures.push_back(model + ": " + e.what());
            }
        }
    }));
    out.log.push_back("gatsby: " + std::to_string(rows.size()) + " correlations");
    for (const auto& r : rows)
        if (!r.error.empty()) out.log.push_back("  " + r.panel + " " + r.statistic + " " + r.column + ": " + r.error);
    if (!failures.empty()) throw analysis_error("inequality regressions failed: " + failures.front());
    return out;
}

std::vector<EstimatorSpec> placebo_specs(const Context& ctx) {
    std::vector<EstimatorSpec> s{make_spec(ctx, OutcomeKind::SchoolingYears, Statistic::PearsonCorrelation, PairType::Father)};
    if (ctx.has_earnings)
        s.push_back(make_spec(ctx, OutcomeKind::EarningsRank, Statistic::RegressionSlope, PairType::Father));
    return s;
}

Outcome run_placebo(const Context& ctx) {
    Outcome out;
    PlaceboConfig pc = ctx.cfg.placebo;
    pc.seed = derive_key(ctx.cfg.seed, 0x706c61636562ULL);
    std::vector<std::pair<EstimatorSpec, PlaceboResult>> results;
    for (const auto& spec : placebo_specs(ctx)) results.emplace_back(spec, placebo_reshuffle(ctx.groups, pc, spec, ctx.octx));
    out.files.push_back(write_file(ctx, "dispersion.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"spec", "group", "regions", "mean_pairs", "actual_sd", "placebo_sd", "ratio", "permutations",
               "split_threshold"});
        for (const auto& [spec, res] : results)
            for (const auto& r : res.reports)
                w.field(std::string_view(spec.label()))
                    .field(to_string(r.group))
                    .field(r.regions)
                    .field(r.mean_pairs)
                    .field(r.actual_sd)
                    .field(r.placebo_sd)
                    .field(r.ratio)
                    .field(pc.n_permutations)
                    .field(pc.split_threshold)
                    .end_row();
    }));
    out.files.push_back(write_file(ctx, "placebo_estimates.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"spec", "region_id", "pairs", "actual", "placebo", "placebo_mean"});
        for (const auto& [spec, res] : results)
            for (std::size_t r = 0; r < res.regions.size(); ++r) {
                std::vector<double> v;
                for (const auto& perm : res.placebo)
                    if (present(perm[r])) v.push_back(perm[r]);
                w.field(std::string_view(spec.label()))
                    .field(std::string_view(std::to_string(res.regions[r])))
                    .field(res.pairs[r])
                    .field(res.actual[r])
                    .field(res.placebo.front()[r])
                    .field(v.empty() ? kMissing : mean(v))
                    .end_row();
            }
    }));
    out.log.push_back("placebo: " + std::to_string(pc.n_permutations) + " permutations");
    return out;
}

Outcome run_subsamples(const Context& ctx) {
    Outcome out;
    SubsampleConfig sc = ctx.cfg.subsamples;
    sc.seed = derive_key(ctx.cfg.seed, 0x7375627361ULL);
    const auto outcomes = latent_outcomes(ctx);
    const Analysis analysis = [&](std::span<const LineageRecord> sub) {
        const RegionGroups groups = group_by_region(sub);
        const OutcomeContext octx = make_outcome_context(sub);
        CoefficientReport rep;
        for (OutcomeKind o : outcomes) {
            const auto est = latent_for(ctx, groups, octx, o, ctx.cfg.balanced);
            for (const auto& m : latent_models()) {
                if (m.log_mode) continue;
                const std::string prefix = std::string(to_string(o)) + ":" + m.name + ":";
                RegressionResult r;
                try {
                    r = latent_regression(est, m.regressors, false, {}, ctx.cfg.weighted);
                } catch (const Error& e) {
                    if (e.kind() != ErrorKind::Analysis) throw;
                    // Keep the entry list identical across replicates.
                    for (const char* term : {"const", "rho_hat", "lambda_hat"}) rep.push_back({prefix + term, kMissing, kMissing});
                    rep.push_back({prefix + "adj_r2", kMissing, kMissing});
                    rep.push_back({prefix + "n", kMissing, kMissing});
                    continue;
                }
                for (const char* term : {"const", "rho_hat", "lambda_hat"}) {
                    auto it = std::find(r.names.begin(), r.names.end(), term);
                    if (it == r.names.end()) {
                        rep.push_back({prefix + term, kMissing, kMissing});
                        continue;
                    }
                    const auto i = static_cast<Eigen::Index>(it - r.names.begin());
                    rep.push_back({prefix + term, r.coef[i], r.se[i]});
                }
                rep.push_back({prefix + "adj_r2", r.adj_r2, kMissing});
                rep.push_back({prefix + "n", static_cast<double>(r.n), kMissing});
            }
        }
        return rep;
    };
    const CoefficientReport avg = subsample_replicates(ctx.records, sc, analysis);
    out.files.push_back(write_file(ctx, "subsamples.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"entry", "mean_value", "mean_se", "replicates", "fraction"});
        for (const auto& e : avg)
            w.field(std::string_view(e.name)).field(e.value).field(e.se).field(sc.replicates).field(sc.fraction).end_row();
    }));
    out.log.push_back("subsamples: " + std::to_string(sc.replicates) + " replicates at fraction " +
                      format_fixed(sc.fraction, 6));
    return out;
}

void write_moment(CsvWriter& w, const MomentSummary& m) { w.field(m.truth).field(m.mean).field(m.bias).field(m.sd).field(m.mc_se); }

Outcome run_recovery(const Context& ctx) {
    Outcome out;
    RecoveryConfig rc = ctx.cfg.recovery;
    rc.seed = derive_key(ctx.cfg.seed, 0x7265636fULL);
    const auto cells = recovery_experiment(rc);
    out.files.push_back(write_file(ctx, "recovery.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        std::vector<std::string> header{"rho", "lambda", "n", "replicates", "invalid"};
        for (const char* q : {"beta1", "beta2", "delta", "lambda_hat", "rho_hat"})
            for (const char* f : {"truth", "mean", "bias", "sd", "mc_se"}) header.push_back(std::string(q) + "_" + f);
        for (const char* f : {"mean_var_delta", "empirical_var_delta", "coverage", "rejection_two_sided",
                              "rejection_one_sided", "corr_rho_lambda"})
            header.push_back(f);
        for (const auto& h : header) w.field(std::string_view(h));
        w.end_row();
        for (const auto& c : cells) {
            w.field(c.rho).field(c.lambda).field(c.n).field(c.replicates).field(c.invalid);
            for (const auto* m : {&c.beta1, &c.beta2, &c.delta, &c.lambda_hat, &c.rho_hat}) write_moment(w, *m);
            w.field(c.mean_var_delta)
                .field(c.empirical_var_delta)
                .field(c.coverage)
                .field(c.rejection_two_sided)
                .field(c.rejection_one_sided)
                .field(c.corr_rho_lambda)
                .end_row();
        }
    }));
    out.log.push_back("recovery: " + std::to_string(cells.size()) + " grid cells x " + std::to_string(rc.replicates) +
                      " replicates");
    return out;
}

Outcome run_cef(const Context& ctx) {
    require_earnings(ctx, "cef");
    Outcome out;
    std::vector<CefProfile> profiles;
    std::vector<std::pair<std::string, double>> regional;
    for (const auto& [level, pair] : {std::pair{"national_father", PairType::Father},
                                      std::pair{"national_grandfather", PairType::PaternalGrandfather}}) {
        const EstimatorSpec spec = make_spec(ctx, OutcomeKind::EarningsRank, Statistic::RegressionSlope, pair);
        profiles.push_back(cef_bins(ctx.records, spec, ctx.cfg.cef_bins, level, ctx.octx));
        for (bool weighted : {false, true}) {
            const std::string name = std::string(pair == PairType::Father ? "regional_father" : "regional_grandfather") +
                                     (weighted ? "_weighted" : "_unweighted");
            double v = kMissing;
            try {
                v = mean_linearity_index(ctx.groups, spec, weighted, ctx.cfg.min_pairs, ctx.octx);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::Analysis) throw;
            }
            regional.emplace_back(name, v);
        }
    }
    out.files.push_back(write_file(ctx, "cef.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"level", "bin", "center", "mean", "n"});
        for (const auto& p : profiles)
            for (std::size_t b = 0; b < p.bins.size(); ++b)
                w.field(std::string_view(p.level))
                    .field(b + 1)
                    .field(p.bins[b].center)
                    .field(p.bins[b].mean)
                    .field(p.bins[b].n)
                    .end_row();
    }));
    out.files.push_back(write_file(ctx, "linearity.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.row({"level", "r2_linear", "r2_quadratic", "linearity_index"});
        for (const auto& p : profiles)
            w.field(std::string_view(p.level)).field(p.r2_linear).field(p.r2_quadratic).field(p.linearity_index).end_row();
        for (const auto& [name, v] : regional)
            w.field(std::string_view(name)).field(kMissing).field(kMissing).field(v).end_row();
    }));
    out.log.push_back("cef: " + std::to_string(ctx.cfg.cef_bins) + " bins");
    return out;
}

Outcome run_cross_matrix(const Context& ctx) {
    Outcome out;
    struct Measure {
        const char* name;
        OutcomeKind outcome;
        Statistic statistic;
        PairType pair;
        bool p25;
    };
    std::vector<Measure> measures{
        {"education_father", OutcomeKind::SchoolingYears, Statistic::PearsonCorrelation, PairType::Father, false},
        {"education_grandfather", OutcomeKind::SchoolingYears, Statistic::PearsonCorrelation,
         PairType::PaternalGrandfather, false},
    };
    if (ctx.has_earnings) {
        measures.push_back({"rank_slope_father", OutcomeKind::EarningsRank, Statistic::RegressionSlope, PairType::Father, false});
        measures.push_back({"rank_slope_grandfather", OutcomeKind::EarningsRank, Statistic::RegressionSlope,
                            PairType::PaternalGrandfather, false});
        measures.push_back({"ige_father", OutcomeKind::LogEarnings, Statistic::RegressionSlope, PairType::Father, false});
        measures.push_back({"ige_grandfather", OutcomeKind::LogEarnings, Statistic::RegressionSlope,
                            PairType::PaternalGrandfather, false});
        measures.push_back({"p25_father", OutcomeKind::EarningsRank, Statistic::RegressionSlope, PairType::Father, true});
    }
    std::vector<StatisticSeries> series;
    for (const auto& m : measures) {
        auto est = estimate_by_region(ctx.groups, make_spec(ctx, m.outcome, m.statistic, m.pair), ctx.octx);
        if (m.p25) est = as_p25(std::move(est));
        series.push_back({m.name, std::move(est)});
    }
    const CorrelationMatrix cm = cross_measure_matrix(series, ctx.cfg.cross_min_pairs);
    out.files.push_back(write_file(ctx, "cross_matrix.csv", [&](std::ostream& os) {
        CsvWriter w(os);
        w.field("measure");
        for (const auto& n : cm.names) w.field(std::string_view(n));
        w.end_row();
        for (std::size_t a = 0; a < cm.names.size(); ++a) {
            w.field(std::string_view(cm.names[a]));
            for (std::size_t b = 0; b < cm.names.size(); ++b) w.field(cm.values[a][b]);
            w.end_row();
        }
    }));
    out.log.push_back("cross_matrix: " + std::to_string(cm.regions.size()) + " regions with at least " +
                      std::to_string(ctx.cfg.cross_min_pairs) + " pairs in every measure");
    return out;
}

Outcome run_analysis(AnalysisKind a, const Context& ctx) {
    switch (a) {
        case AnalysisKind::Estimates: return run_estimates(ctx);
        case AnalysisKind::Delta: return run_delta(ctx);
        case AnalysisKind::Latent: return run_latent(ctx);
        case AnalysisKind::Gatsby: return run_gatsby(ctx);
        case AnalysisKind::Placebo: return run_placebo(ctx);
        case AnalysisKind::Subsamples: return run_subsamples(ctx);
        case AnalysisKind::Recovery: return run_recovery(ctx);
        case AnalysisKind::Cef: return run_cef(ctx);
        case AnalysisKind::CrossMatrix: return run_cross_matrix(ctx);
    }
    return {};
}

std::string_view kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::Config: return "config";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Analysis: return "analysis";
    }
    return "analysis";
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

ReportBundle run_pipeline(const PipelineConfig& config) {
    validate(config);
    ReportBundle bundle;
    bundle.dir = config.output_dir;
    bundle.config_hash = config_hash(config);
    std::error_code ec;
    fs::create_directories(bundle.dir, ec);
    if (ec) throw config_error("cannot create output directory " + bundle.dir.string() + ": " + ec.message());

    std::vector<std::string> log;
    log.push_back("mobilab " + std::string(kVersion) + " config " + bundle.config_hash + " seed " +
                  std::to_string(config.seed));

    const bool needs_input = std::any_of(config.analyses.begin(), config.analyses.end(),
                                         [](AnalysisKind a) { return a != AnalysisKind::Recovery; });
    LoadedInput input;
    if (needs_input) {
        input = load_input(config);
        log.insert(log.end(), input.log.begin(), input.log.end());
        if (input.records.empty()) throw validation_error("input contains no lineages");
    }
    Context ctx{config, input.records, group_by_region(input.records), {}, false, bundle.dir};
    if (needs_input) {
        ctx.octx = make_outcome_context(input.records);
        for (const auto& r : input.records)
            if (present(r.at(Relative::Father).log_earnings) || present(r.at(Relative::Child).log_earnings)) {
                ctx.has_earnings = true;
                break;
            }
        log.push_back(std::to_string(ctx.groups.ids.size()) + " regions" +
                      (ctx.has_earnings ? ", earnings available" : ", no earnings"));
    }

    // Independent analyses run concurrently; each owns its output files.
    std::vector<Outcome> outcomes(config.analyses.size());
    std::vector<std::optional<AnalysisFailure>> failed(config.analyses.size());
    parallel_for(config.analyses.size(), [&](std::size_t i) {
        const AnalysisKind a = config.analyses[i];
        try {
            outcomes[i] = run_analysis(a, ctx);
        } catch (const Error& e) {
            failed[i] = AnalysisFailure{std::string(to_string(a)), e.kind(), e.what()};
        } catch (const std::exception& e) {
            failed[i] = AnalysisFailure{std::string(to_string(a)), ErrorKind::Analysis, e.what()};
        }
    });
    for (std::size_t i = 0; i < config.analyses.size(); ++i) {
        bundle.files.insert(bundle.files.end(), outcomes[i].files.begin(), outcomes[i].files.end());
        log.insert(log.end(), outcomes[i].log.begin(), outcomes[i].log.end());
        if (failed[i]) {
            log.push_back(std::string(kind_name(failed[i]->kind)) + " error in " + failed[i]->analysis + ": " +
                          failed[i]->message);
            bundle.failures.push_back(*failed[i]);
        }
    }

    {
        std::ofstream out(bundle.dir / "config.json", std::ios::binary);
        out << canonical_json(config) << '\n';
        bundle.files.push_back("config.json");
    }
    {
        std::ofstream out(bundle.dir / "run.log", std::ios::binary);
        for (const auto& line : log) out << line << '\n';
        bundle.files.push_back("run.log");
    }

    json manifest;
    manifest["tool"] = "mobilab";
    manifest["version"] = kVersion;
    manifest["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                           "." + std::to_string(EIGEN_MINOR_VERSION)},
                             {"boost", BOOST_LIB_VERSION}};
    manifest["seed"] = config.seed;
    manifest["config_hash"] = bundle.config_hash;
    json files = json::array();
    for (const auto& f : bundle.files) files.push_back({{"name", f}, {"fnv1a", hex64(fnv1a(read_file(bundle.dir / f)))}});
    manifest["files"] = files;
    json failures = json::array();
    for (const auto& f : bundle.failures)
        failures.push_back({{"analysis", f.analysis}, {"kind", kind_name(f.kind)}, {"message", f.message}});
    manifest["failures"] = failures;
    {
        std::ofstream out(bundle.dir / "manifest.json", std::ios::binary);
        out << manifest.dump(2) << '\n';
    }
    return bundle;
}

// ---------------------------------------------------------------------------
// Presets

std::string_view to_string(TablePreset p) { return kPresetNames[static_cast<std::size_t>(p)]; }

std::optional<TablePreset> parse_preset(std::string_view s) {
    for (std::size_t i = 0; i < kPresetNames.size(); ++i)
        if (kPresetNames[i] == s) return static_cast<TablePreset>(i);
    return std::nullopt;
}

std::vector<std::string> preset_inputs(TablePreset p) {
    switch (p) {
        case TablePreset::Table2: return {"estimates_summary.csv"};
        case TablePreset::Table3: return {"latent_summary.csv"};
        case TablePreset::Table4: return {"gatsby.csv"};
        case TablePreset::Table5: return {"latent_regressions.csv"};
        case TablePreset::Table6: return {"gatsby_regressions.csv"};
        case TablePreset::Figure1Density: return {"estimates.csv"};
        case TablePreset::Figure3Cef: return {"cef.csv"};
        case TablePreset::Figure6Placebo: return {"placebo_estimates.csv"};
    }
    return {};
}

std::vector<DensityPoint> kernel_density(std::span<const double> values, double bandwidth, int grid_points) {
    if (values.empty()) throw analysis_error("kernel density of an empty sample");
    if (!(bandwidth > 0.0) || grid_points < 2) throw config_error("kernel density needs h > 0 and two grid points");
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it - 3.0 * bandwidth, hi = *hi_it + 3.0 * bandwidth;
    const double norm = 1.0 / (static_cast<double>(values.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
    std::vector<DensityPoint> out(static_cast<std::size_t>(grid_points));
    for (int g = 0; g < grid_points; ++g) {
        const double x = lo + (hi - lo) * g / (grid_points - 1);
        double s = 0.0;
        for (double v : values) {
            const double z = (x - v) / bandwidth;
            s += std::exp(-0.5 * z * z);
        }
        out[static_cast<std::size_t>(g)] = {x, s * norm};
    }
    return out;
}

namespace {

// Long (model, key, value) to wide: one column per model, rows in first-seen
// key order.
void write_wide(std::ostream& os, const Table& t) {
    std::vector<std::string> models, keys;
    std::map<std::pair<std::string, std::string>, std::string> cell;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& m = t.text(r, "model");
        const auto& k = t.text(r, "key");
        if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
        cell[{m, k}] = t.text(r, "value");
    }
    CsvWriter w(os);
    w.field("row");
    for (const auto& m : models) w.field(std::string_view(m));
    w.end_row();
    for (const auto& k : keys) {
        if (k == "condition_number") continue;
        w.field(std::string_view(k));
        for (const auto& m : models) {
            auto it = cell.find({m, k});
            w.field(std::string_view(it == cell.end() ? std::string() : it->second));
        }
        w.end_row();
    }
}

}  // namespace

fs::path emit_table_preset(const fs::path& bundle_dir, TablePreset preset) {
    std::vector<std::string> missing;
    for (const auto& f : preset_inputs(preset))
        if (!fs::exists(bundle_dir / f)) missing.push_back(f);
    if (!missing.empty()) {
        std::string msg = std::string(to_string(preset)) + " needs analyses that are not in the bundle: missing";
        for (const auto& m : missing) msg += " " + m;
        throw config_error(msg);
    }
    const fs::path dir = bundle_dir / "tables";
    fs::create_directories(dir);
    const fs::path path = dir / (std::string(to_string(preset)) + ".csv");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw config_error("cannot write " + path.string());
    CsvWriter w(os);
    const Table t = read_table(bundle_dir / preset_inputs(preset).front());

    switch (preset) {
        case TablePreset::Table2: {
            w.row({"statistic", "outcome", "pair", "regions", "mean_unweighted", "sd_unweighted", "mean_weighted",
                   "sd_weighted"});
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                for (const char* col : {"statistic", "outcome", "pair", "regions", "mean_unweighted", "sd_unweighted",
                                        "mean_weighted", "sd_weighted"})
                    w.field(std::string_view(t.text(r, col)));
                w.end_row();
            }
            break;
        }
        case TablePreset::Table3: {
            // Panels (baseline, balanced) x (mean, sd) by outcome x parameter.
            std::vector<std::string> columns;
            std::map<std::tuple<std::string, std::string, std::string>, std::string> cell;
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                const std::string col = t.text(r, "outcome") + ":" + t.text(r, "parameter");
                if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
                cell[{t.text(r, "sample"), "mean", col}] = t.text(r, "mean_weighted");
                cell[{t.text(r, "sample"), "sd", col}] = t.text(r, "sd_weighted");
            }
            w.field("panel").field("moment");
            for (const auto& c : columns) w.field(std::string_view(c));
            w.end_row();
            for (const char* panel : {"baseline", "balanced"})
                for (const char* moment : {"mean", "sd"}) {
                    w.field(panel).field(moment);
                    for (const auto& c : columns) {
                        auto it = cell.find({panel, moment, c});
                        w.field(std::string_view(it == cell.end() ? std::string() : it->second));
                    }
                    w.end_row();
                }
            break;
        }
        case TablePreset::Table4: {
            const std::array<const char*, 4> columns{"sons", "daughters", "pooled", "size_controlled"};
            std::vector<std::pair<std::string, std::string>> rows;
            std::map<std::tuple<std::string, std::string, std::string>, std::pair<std::string, std::string>> cell;
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                const std::pair key{t.text(r, "panel"), t.text(r, "statistic")};
                if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
                cell[{key.first, key.second, t.text(r, "column")}] = {t.text(r, "correlation"), t.text(r, "p_value")};
            }
            w.field("panel").field("statistic").field("row");
            for (const char* c : columns) w.field(c);
            w.end_row();
            for (const auto& [panel, stat] : rows)
                for (const char* what : {"correlation", "p"}) {
                    w.field(std::string_view(panel)).field(std::string_view(stat)).field(what);
                    for (const char* c : columns) {
                        auto it = cell.find({panel, stat, c});
                        const std::string v = it == cell.end() ? std::string()
                                                               : (std::string_view(what) == "p" ? it->second.second
                                                                                                : it->second.first);
                        w.field(std::string_view(v));
                    }
                    w.end_row();
                }
            break;
        }
        case TablePreset::Table5:
        case TablePreset::Table6: write_wide(os, t); break;
        case TablePreset::Figure1Density: {
            w.row({"series", "x", "density"});
            std::vector<std::string> order;
            std::map<std::string, std::vector<double>> values;
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                const auto& pair = t.text(r, "pair");
                const auto& outcome = t.text(r, "outcome");
                if (pair != "father" && pair != "paternal_grandfather") continue;
                if (outcome != "schooling_years" && outcome != "earnings_rank") continue;
                if (t.text(r, "flagged") == "1") continue;
                const std::string series = outcome + ":" + pair;
                if (!values.count(series)) order.push_back(series);
                values[series].push_back(t.number(r, "beta"));
            }
            for (const auto& s : order)
                for (const auto& p : kernel_density(values[s], 0.01, 512))
                    w.field(std::string_view(s)).field(p.x).field(p.density).end_row();
            break;
        }
        case TablePreset::Figure3Cef: {
            w.row({"level", "bin", "center", "mean_child_rank", "n"});
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                for (const char* col : {"level", "bin", "center", "mean", "n"}) w.field(std::string_view(t.text(r, col)));
                w.end_row();
            }
            break;
        }
        case TablePreset::Figure6Placebo: {
            w.row({"spec", "region_id", "pairs", "actual", "placebo"});
            for (std::size_t r = 0; r < t.rows.size(); ++r) {
                for (const char* col : {"spec", "region_id", "pairs", "actual", "placebo"})
                    w.field(std::string_view(t.text(r, col)));
                w.end_row();
            }
            break;
        }
    }
    return path;
}

}  // namespace mobilab
