// mobilab: command-line front end for the regional mobility pipeline.

#include "mobilab/io.hpp"
#include "mobilab/pipeline.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace mobilab;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "mobilab_out";
    std::optional<bool> weighted;
    std::optional<bool> balanced;
    std::optional<std::size_t> min_pairs;
    std::optional<std::string> gender;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "JSON run configuration");
    sub->add_option("--seed", f.seed, "Master seed (overrides the config)");
    sub->add_option("--out", f.out, "Output directory")->capture_default_str();
    sub->add_flag_callback("--weighted", [&f] { f.weighted = true; }, "Weight regions by pair counts");
    sub->add_flag_callback("--unweighted", [&f] { f.weighted = false; }, "Weight regions equally");
    sub->add_flag_callback("--balanced", [&f] { f.balanced = true; }, "Require child, father and grandfather");
    sub->add_flag_callback("--unbalanced", [&f] { f.balanced = false; }, "Use all available pairs");
    sub->add_option("--min-pairs", f.min_pairs, "Minimum pairs for a region to count");
    sub->add_option("--gender", f.gender, "Child gender filter")->check(CLI::IsMember({"all", "sons", "daughters"}));
}

PipelineConfig build_config(const CommonFlags& f) {
    PipelineConfig c = f.config.empty() ? PipelineConfig{} : load_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (f.weighted) c.weighted = *f.weighted;
    if (f.balanced) c.balanced = *f.balanced;
    if (f.min_pairs) c.min_pairs = *f.min_pairs;
    if (f.gender) c.gender = *parse_gender_filter(*f.gender);
    c.output_dir = f.out;
    return c;
}

int report_bundle(const ReportBundle& b) {
    for (const auto& f : b.files) std::cout << (b.dir / f).string() << '\n';
    for (const auto& f : b.failures) std::cerr << "error in " << f.analysis << ": " << f.message << '\n';
    return b.exit_code();
}

int run_single(const CommonFlags& f, AnalysisKind a) {
    PipelineConfig c = build_config(f);
    c.analyses = {a};
    validate(c);
    return report_bundle(run_pipeline(c));
}

int simulate(const CommonFlags& f, std::optional<std::size_t> lineages) {
    PipelineConfig c = build_config(f);
    if (c.input != InputKind::Synthetic) throw config_error("simulate needs synthetic input in the config");
    if (lineages) c.synthetic.total_lineages = *lineages;
    validate(c);
    const LoadedInput in = load_input(c);
    fs::create_directories(c.output_dir);
    write_lineage_csv(fs::path(c.output_dir) / "lineages.csv", in.records);
    std::cout << (fs::path(c.output_dir) / "lineages.csv").string() << '\n';
    if (!in.panel.empty()) {
        write_panel_csv(fs::path(c.output_dir) / "panel.csv", in.panel);
        std::cout << (fs::path(c.output_dir) / "panel.csv").string() << '\n';
    }
    for (const auto& line : in.log) std::cerr << line << '\n';
    return 0;
}

int ingest(const std::string& input, const std::string& out, bool skip, bool categorical) {
    IngestOptions opt;
    opt.fail_fast = !skip;
    opt.categorical_education = categorical;
    const IngestReport rep = ingest_lineage_csv(fs::path(input), opt);
    fs::create_directories(out);
    const fs::path report = fs::path(out) / "ingest_report.csv";
    std::ofstream os(report, std::ios::binary);
    write_ingest_report(os, rep);
    std::cout << report.string() << '\n';
    std::cerr << "read " << rep.rows_read << " rows, kept " << rep.records.size() << '\n';
    for (const auto& e : rep.errors)
        std::cerr << "line " << e.line << (e.column.empty() ? "" : ", column " + e.column) << ": " << e.message << '\n';
    return rep.errors.empty() ? 0 : 3;
}

int report(const CommonFlags& f, const std::string& bundle, const std::vector<std::string>& presets) {
    std::vector<TablePreset> chosen;
    for (const auto& p : presets) {
        auto t = parse_preset(p);
        if (!t) throw config_error("unknown preset '" + p + "'");
        chosen.push_back(*t);
    }
    fs::path dir = bundle;
    int code = 0;
    if (bundle.empty()) {
        const ReportBundle b = run_pipeline(build_config(f));
        code = report_bundle(b);
        dir = b.dir;
    }
    if (chosen.empty()) chosen.assign(kAllPresets.begin(), kAllPresets.end());
    for (TablePreset p : chosen) {
        try {
            std::cout << emit_table_preset(dir, p).string() << '\n';
        } catch (const Error& e) {
            // Without an explicit preset list, skip tables whose analyses did not run.
            if (!presets.empty()) throw;
            std::cerr << "skipped " << to_string(p) << ": " << e.what() << '\n';
        }
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regional multigenerational mobility estimation"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonFlags flags;
    std::optional<std::size_t> lineages;
    std::string ingest_input, ingest_out = "mobilab_out", bundle;
    bool skip_invalid = false, categorical = false;
    std::vector<std::string> presets;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic population and write lineages.csv");
    add_common(sim, flags);
    sim->add_option("--lineages", lineages, "Total lineages (preset sizes otherwise)");

    auto* ing = app.add_subcommand("ingest", "Validate a lineage CSV and write a column report");
    ing->add_option("input", ingest_input, "Lineage CSV")->required();
    ing->add_option("--out", ingest_out, "Output directory")->capture_default_str();
    ing->add_flag("--skip-invalid", skip_invalid, "Skip and log invalid rows instead of stopping");
    ing->add_flag("--categorical-education", categorical, "Schooling must be an attainment code");

    const std::vector<std::pair<const char*, AnalysisKind>> single{
        {"estimate", AnalysisKind::Estimates}, {"delta", AnalysisKind::Delta},
        {"latent", AnalysisKind::Latent},      {"gatsby", AnalysisKind::Gatsby},
        {"placebo", AnalysisKind::Placebo},    {"subsample", AnalysisKind::Subsamples},
        {"recover", AnalysisKind::Recovery},
    };
    std::vector<CLI::App*> single_cmds;
    for (const auto& [name, kind] : single) {
        auto* sub = app.add_subcommand(name, std::string("Run the ") + std::string(to_string(kind)) + " analysis");
        add_common(sub, flags);
        single_cmds.push_back(sub);
    }

    auto* rep = app.add_subcommand("report", "Run the configured analyses and emit table presets");
    add_common(rep, flags);
    rep->add_option("--bundle", bundle, "Existing bundle directory (skips the run)");
    rep->add_option("--preset", presets, "Preset(s) to emit; all available when omitted");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (sim->parsed()) return simulate(flags, lineages);
        if (ing->parsed()) return ingest(ingest_input, ingest_out, skip_invalid, categorical);
        if (rep->parsed()) return report(flags, bundle, presets);
        for (std::size_t i = 0; i < single.size(); ++i)
            if (single_cmds[i]->parsed()) return run_single(flags, single[i].second);
    } catch (const Error& e) {
        std::cerr << "mobilab: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "mobilab: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
