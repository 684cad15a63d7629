#pragma once

// Batch orchestration: configuration, input loading, the analysis menu, the
// report bundle on disk, and the table presets derived from it.

#include "mobilab/common.hpp"
#include "mobilab/earnings.hpp"
#include "mobilab/gatsby.hpp"
#include "mobilab/harness.hpp"
#include "mobilab/io.hpp"
#include "mobilab/latent.hpp"
#include "mobilab/mobility.hpp"
#include "mobilab/synthkit.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mobilab {

inline constexpr std::string_view kVersion = "0.1.0";

enum class InputKind { Synthetic, LineageCsv, PanelCsv };
enum class SyntheticPreset { Calibrated, Homogeneous, Custom };
enum class AnalysisKind { Estimates, Delta, Latent, Gatsby, Placebo, Subsamples, Recovery, Cef, CrossMatrix };

inline constexpr std::array<AnalysisKind, 9> kAllAnalyses{
    AnalysisKind::Estimates, AnalysisKind::Delta,    AnalysisKind::Latent,
    AnalysisKind::Gatsby,    AnalysisKind::Placebo,  AnalysisKind::Subsamples,
    AnalysisKind::Recovery,  AnalysisKind::Cef,      AnalysisKind::CrossMatrix,
};

std::string_view to_string(AnalysisKind a);
std::optional<AnalysisKind> parse_analysis(std::string_view s);

struct SyntheticInput {
    SyntheticPreset preset = SyntheticPreset::Calibrated;
    std::size_t total_lineages = 0;  // 0 keeps the preset's native size
    OutcomeMode outcome_mode = OutcomeMode::Continuous;
    std::vector<RegionParams> regions;  // custom preset only
};

struct PipelineConfig {
    std::uint64_t seed = 2024;
    InputKind input = InputKind::Synthetic;
    SyntheticInput synthetic;
    std::string lineage_csv;
    std::string panel_csv;
    bool skip_invalid_rows = false;
    bool categorical_education = false;

    // Everything except recovery, which needs no input and runs on request.
    std::vector<AnalysisKind> analyses{AnalysisKind::Estimates, AnalysisKind::Delta, AnalysisKind::Latent,
                                       AnalysisKind::Gatsby,    AnalysisKind::Placebo, AnalysisKind::Subsamples,
                                       AnalysisKind::Cef,       AnalysisKind::CrossMatrix};
    bool weighted = true;
    bool balanced = false;
    GenderFilter gender = GenderFilter::All;
    std::size_t min_pairs = 3;
    SurSample sur_sample = SurSample::Union;
    InequalityGeneration inequality_generation = InequalityGeneration::Father;
    PlaceboConfig placebo;
    SubsampleConfig subsamples;
    RecoveryConfig recovery;
    int cef_bins = 20;
    std::size_t cross_min_pairs = 1000;

    // Not part of the configuration identity.
    std::filesystem::path output_dir = "mobilab_out";

    bool wants(AnalysisKind a) const;
};

PipelineConfig parse_config(std::string_view json_text);
PipelineConfig load_config(const std::filesystem::path& path);
void validate(const PipelineConfig& config);
// Canonical JSON of everything that determines the numbers (no output dir).
std::string canonical_json(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

// Synthetic population or validated CSV input, with earnings ranks (and
// fixed-effects predictions when a panel is involved) attached.
struct LoadedInput {
    std::vector<LineageRecord> records;
    std::vector<EarningsPanelRow> panel;  // synthetic earnings-panel mode only
    std::vector<std::string> log;
    std::vector<RowError> skipped;
};
LoadedInput load_input(const PipelineConfig& config);
GeneratorConfig generator_config(const PipelineConfig& config);

struct AnalysisFailure {
    std::string analysis;
    ErrorKind kind = ErrorKind::Analysis;
    std::string message;
};

struct ReportBundle {
    std::filesystem::path dir;
    std::vector<std::string> files;
    std::vector<AnalysisFailure> failures;
    std::string config_hash;

    int exit_code() const;
};

int exit_code_for(ErrorKind kind);

// Runs the requested analyses, one CSV each, then writes the manifest.
// Failures are recorded and the remaining analyses still run.
ReportBundle run_pipeline(const PipelineConfig& config);

enum class TablePreset { Table2, Table3, Table4, Table5, Table6, Figure1Density, Figure3Cef, Figure6Placebo };
inline constexpr std::array<TablePreset, 8> kAllPresets{
    TablePreset::Table2, TablePreset::Table3,         TablePreset::Table4,     TablePreset::Table5,
    TablePreset::Table6, TablePreset::Figure1Density, TablePreset::Figure3Cef, TablePreset::Figure6Placebo,
};
std::string_view to_string(TablePreset p);
std::optional<TablePreset> parse_preset(std::string_view s);
// Bundle files a preset reads.
std::vector<std::string> preset_inputs(TablePreset p);

// Reshapes bundle files into the preset layout and writes
// <bundle>/tables/<preset>.csv. Missing inputs raise a config error that
// lists them; nothing is recomputed.
std::filesystem::path emit_table_preset(const std::filesystem::path& bundle_dir, TablePreset preset);

// Gaussian kernel density on an even grid spanning the data +- 3 bandwidths.
struct DensityPoint {
    double x = 0.0;
    double density = 0.0;
};
std::vector<DensityPoint> kernel_density(std::span<const double> values, double bandwidth = 0.01,
                                         int grid_points = 512);

}  // namespace mobilab
