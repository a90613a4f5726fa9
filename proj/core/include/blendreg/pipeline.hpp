// pipeline.hpp - end-to-end phantom -> register -> Jacobian -> features -> evaluate/predict runs.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blendreg/csv.hpp"
#include "blendreg/image.hpp"
#include "blendreg/jacobian.hpp"
#include "blendreg/phantom.hpp"
#include "blendreg/radiomics.hpp"
#include "blendreg/registration.hpp"
#include "blendreg/stats.hpp"

namespace blendreg {

inline constexpr const char *kVersion = "0.1.0";

/// Stage failure carrying the stage name and case id.
class PipelineError : public std::runtime_error {
public:
    PipelineError(std::string stage, std::string case_id, const std::string &what)
        : std::runtime_error("stage '" + stage + "'" + (case_id.empty() ? "" : " case '" + case_id + "'") + ": " + what),
          stage_(std::move(stage)), case_id_(std::move(case_id)) {}
    const std::string &stage() const { return stage_; }
    const std::string &case_id() const { return case_id_; }

private:
    std::string stage_;
    std::string case_id_;
};

struct CohortConfig {
    int cases = 20;
    double change_lo = 10.0;
    double change_hi = 80.0;
    std::uint64_t seed = 7;
    int size = 64;
    double spacing = 1.0;
    double radius = 12.0;
    double heterogeneity_spread = 0.15;
    double noise_min = 0.005;
    double noise_max = 0.02;

    CohortOptions options() const;
};

struct PredictConfig {
    bool enabled = true;
    int folds = 10;
    int repeats = 10;
    std::uint64_t seed = 1;
    int n_trees = 200;
    int max_features = 10;
    double corr_threshold = 0.9;
    double responder_threshold = 50.0; ///< true change (%) at or above which a case is a responder
};

struct PipelineConfig {
    BlendConfig blend;
    Engine engine = Engine::bsd;
    Channel channel = Channel::blend;
    std::map<Channel, RegistrationConfig> registration{
        {Channel::blend, RegistrationConfig::defaults_for(Channel::blend)},
        {Channel::pet, RegistrationConfig::defaults_for(Channel::pet)},
        {Channel::ct, RegistrationConfig::defaults_for(Channel::ct)}};
    CohortConfig cohort;
    int n_bins = 32;
    PredictConfig predict;
    std::string input_dir; ///< phantom directory to read instead of generating the cohort

    void validate() const;
    const RegistrationConfig &active_registration() const { return registration.at(channel); }
};

/// Parses a config document; missing keys keep their defaults, unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const std::string &text);
/// Fully expanded canonical JSON (sorted keys, compact).
std::string pipeline_config_to_json(const PipelineConfig &cfg);
/// FNV-1a 64-bit hash of the canonical JSON, as 16 hex digits.
std::string config_hash(const PipelineConfig &cfg);

/// Registration settings from a JSON object, starting from `base`.
RegistrationConfig registration_config_from_json(const std::string &text, RegistrationConfig base);

/// The registration input for a channel: blended, or one normalized modality.
Image3D channel_image(const Image3D &ct, const Image3D &pet, Channel channel, const BlendConfig &cfg);

/// Cohort report as pretty JSON (NaN metrics become null).
std::string evaluation_to_json(const EvaluationReport &rep);
/// metric,value rows of a cohort report.
CsvTable evaluation_summary_table(const EvaluationReport &rep);
/// feature, auc, p_value, higher_in_responders.
CsvTable univariate_table(const std::vector<UnivariateResult> &results);
/// Cross-validation report as pretty JSON.
std::string prediction_to_json(const CVReport &rep, const CVOptions &opts);
/// n_features, accuracy.
CsvTable accuracy_curve_table(const CVReport &rep);
/// Joins a features CSV (case_id + feature columns) with a labels CSV (case_id, label).
CaseTable case_table_from_csv(const CsvTable &features, const CsvTable &labels);

struct CaseOutcome {
    std::string case_id;
    double gt_change_pct = 0.0;
    double est_change_pct = 0.0;
    double dsc = 0.0;
    double min_jacobian = 0.0;
    int iterations = 0;
    FeatureVector features;
};

struct RunSummary {
    std::vector<CaseOutcome> cases;
    EvaluationReport evaluation;     ///< pearson_r is NaN when undefined
    std::optional<CVReport> prediction;
    std::string prediction_note;
};

struct RunOptions {
    int jobs = 1;
    bool write_case_images = true;
    bool run_predict = true;
};

/// Executes the pipeline and writes every artifact plus manifest.json into out_dir.
RunSummary run_pipeline(const PipelineConfig &cfg, const std::string &out_dir, const RunOptions &opts = {});

struct SweepCell {
    double sigma = 0.0;
    double gamma = 0.0;
    double dsc_mean = 0.0;
    double pearson_r = 0.0;
    double mean_abs_diff_pct = 0.0;
    bool ok = false;
    std::string error;
    bool best = false;
};

/// Index of the best successful cell: highest mean DSC, ties broken by higher r.
std::optional<std::size_t> best_cell(const std::vector<SweepCell> &cells);

/// One evaluation per (sigma, gamma); writes sweep.csv into out_dir.
std::vector<SweepCell> param_sweep(const PipelineConfig &cfg, const std::vector<double> &sigmas,
                                   const std::vector<double> &gammas, const std::string &out_dir, int jobs = 1);

/// Writes a phantom case directory: images, masks, true field and case.json.
void write_phantom_case(const PhantomCase &pc, const std::string &dir);
/// Reads a directory written by write_phantom_case.
PhantomCase read_phantom_case(const std::string &dir);

} // namespace blendreg
