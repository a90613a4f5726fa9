// blendreg - command line front end for the blended-channel Jacobian pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "blendreg/csv.hpp"
#include "blendreg/error.hpp"
#include "blendreg/field.hpp"
#include "blendreg/jacobian.hpp"
#include "blendreg/metaimage.hpp"
#include "blendreg/phantom.hpp"
#include "blendreg/pipeline.hpp"
#include "blendreg/radiomics.hpp"
#include "blendreg/registration.hpp"
#include "blendreg/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace blendreg;

namespace {

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string &path, const std::string &text) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
}

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

PipelineConfig load_config(const std::string &path) {
    if (path.empty()) return PipelineConfig{};
    try {
        return pipeline_config_from_json(slurp(path));
    } catch (const std::exception &e) {
        throw PipelineError("config", "", e.what());
    }
}

struct PhantomArgs {
    std::string config, out;
    int cases = -1;
    double lo = -1.0, hi = -1.0;
    long long seed = -1;
};

int cmd_phantom(const PhantomArgs &a) {
    PipelineConfig cfg = load_config(a.config);
    auto &c = cfg.cohort;
    if (a.cases > 0) c.cases = a.cases;
    if (a.lo >= 0.0) c.change_lo = a.lo;
    if (a.hi >= 0.0) c.change_hi = a.hi;
    if (a.seed >= 0) c.seed = static_cast<std::uint64_t>(a.seed);
    cfg.validate();
    const auto cohort = make_cohort(c.cases, {c.change_lo, c.change_hi}, c.seed, c.options(), cfg.blend);
    for (const auto &pc : cohort) {
        write_phantom_case(pc, (fs::path(a.out) / pc.case_id).string());
        std::cout << pc.case_id << " true_change_pct=" << format_double(pc.true_change_pct) << "\n";
    }
    return 0;
}

struct BlendArgs {
    std::string ct, pet, out, config;
    double alpha = -1.0;
    std::string channel = "blend";
};

int cmd_blend(const BlendArgs &a) {
    PipelineConfig cfg = load_config(a.config);
    if (a.alpha >= 0.0) cfg.blend.alpha = a.alpha;
    cfg.blend.validate();
    const Image3D ct = read_image(a.ct);
    Image3D pet = read_image(a.pet);
    if (!pet.geometry().matches(ct.geometry())) pet = resample(pet, ct.geometry(), Interpolation::linear);
    write_image(a.out, channel_image(ct, pet, parse_channel(a.channel), cfg.blend));
    return 0;
}

struct RegisterArgs {
    std::string fixed, moving, fixed_mask, moving_mask, engine = "bsd", channel = "blend", config;
    std::string out_field, out_inverse, trace;
};

int cmd_register(const RegisterArgs &a) {
    const Channel channel = parse_channel(a.channel);
    RegistrationConfig cfg = RegistrationConfig::defaults_for(channel);
    if (!a.config.empty()) cfg = registration_config_from_json(slurp(a.config), cfg);
    const Engine engine = parse_engine(a.engine);
    const Image3D fixed = read_image(a.fixed);
    Image3D moving = read_image(a.moving);
    RegistrationResult res;
    if (!a.fixed_mask.empty() && !a.moving_mask.empty()) {
        res = register_pair(fixed, moving, read_mask(a.fixed_mask), read_mask(a.moving_mask), engine, cfg);
    } else {
        if (!moving.geometry().matches(fixed.geometry())) {
            moving = resample(moving, fixed.geometry(), Interpolation::linear);
        }
        res = engine == Engine::bsd ? register_bsd(fixed, moving, cfg) : register_ffd(fixed, moving, cfg);
    }
    write_field(a.out_field, res.forward_field);
    if (!a.out_inverse.empty()) write_field(a.out_inverse, res.inverse_field);
    if (!a.trace.empty()) {
        CsvTable t;
        t.header = {"step", "level", "similarity", "geodesic", "regularizer"};
        for (std::size_t i = 0; i < res.cost_trace.size(); ++i) {
            const auto &c = res.cost_trace[i];
            t.rows.push_back({std::to_string(i), std::to_string(c.level), format_double(c.similarity),
                              format_double(c.geodesic), format_double(c.regularizer)});
        }
        write_csv(a.trace, t);
    }
    std::cout << "min_jacobian=" << format_double(min_jacobian(res.forward_field))
              << " finest_mi=" << format_double(res.finest_initial_mi) << "->"
              << format_double(res.finest_final_mi) << " converged=" << (res.converged ? 1 : 0) << "\n";
    return 0;
}

struct JacobianArgs {
    std::string field, mask, out_jmap, report, followup_mask;
};

int cmd_jacobian(const JacobianArgs &a) {
    const DeformationField field = read_field(a.field);
    const Mask3D mask = read_mask(a.mask);
    const JacobianMap jm = jacobian_map(field);
    if (!a.out_jmap.empty()) write_image(a.out_jmap, jm);
    json r = {{"est_change_pct", number(jacobian_integral_change(jm, mask))},
              {"min_jacobian", number(min_jacobian(field))},
              {"mask_voxels", count_foreground(mask)}};
    if (!a.followup_mask.empty()) r["dsc"] = number(dice(warp_mask(read_mask(a.followup_mask), field), mask));
    const std::string text = r.dump(2) + "\n";
    if (a.report.empty()) {
        std::cout << text;
    } else {
        spit(a.report, text);
    }
    return 0;
}

struct FeaturesArgs {
    std::string jmap, mask, out, case_id;
    int bins = 32;
};

int cmd_features(const FeaturesArgs &a) {
    const FeatureVector fv = extract_all(read_image(a.jmap), read_mask(a.mask), a.bins);
    CsvTable t;
    t.header.push_back("case_id");
    for (const auto &n : FeatureVector::names()) t.header.push_back(n);
    std::vector<std::string> row{a.case_id.empty() ? fs::path(a.jmap).stem().string() : a.case_id};
    for (double v : fv.values) row.push_back(format_double(v));
    t.rows.push_back(std::move(row));
    write_csv(a.out, t);
    if (fv.degenerate) std::cerr << "note: constant Jacobian in ROI, texture features are degenerate\n";
    return 0;
}

struct TableArgs {
    std::string features, labels, out, curve;
    long long seed = 1;
    int folds = 10, repeats = 10, trees = 200, max_features = 10;
    double corr = 0.9;
};

int cmd_univariate(const TableArgs &a) {
    const CaseTable t = case_table_from_csv(read_csv(a.features), read_csv(a.labels));
    write_csv(a.out, univariate_table(univariate_analysis(t)));
    return 0;
}

int cmd_predict(const TableArgs &a) {
    const CaseTable t = case_table_from_csv(read_csv(a.features), read_csv(a.labels));
    CVOptions o;
    o.folds = a.folds;
    o.repeats = a.repeats;
    o.seed = static_cast<std::uint64_t>(a.seed);
    o.n_trees = a.trees;
    o.max_features = a.max_features;
    o.corr_threshold = a.corr;
    const CVReport r = cross_validate(t, o);
    spit(a.out, prediction_to_json(r, o));
    if (!a.curve.empty()) write_csv(a.curve, accuracy_curve_table(r));
    std::cout << "accuracy=" << format_double(r.mean.accuracy) << " auc=" << format_double(r.mean.auc) << "\n";
    return 0;
}

struct EvaluateArgs {
    std::string input, out_json, out_csv;
};

int cmd_evaluate(const EvaluateArgs &a) {
    const CsvTable in = read_csv(a.input);
    const std::size_t cid = in.column("case_id");
    auto col = [&](std::initializer_list<const char *> names) {
        for (const char *n : names) {
            for (std::size_t i = 0; i < in.header.size(); ++i)
                if (in.header[i] == n) return i;
        }
        throw InputError(std::string("evaluate: missing column ") + *names.begin());
    };
    const std::size_t est = col({"est_change_pct", "est"});
    const std::size_t gt = col({"gt_change_pct", "gt"});
    const std::size_t dsc = col({"dsc"});
    std::vector<CaseEvaluation> cases;
    for (const auto &row : in.rows) {
        cases.push_back({row.at(cid), std::stod(row.at(est)), std::stod(row.at(gt)), std::stod(row.at(dsc))});
    }
    const EvaluationReport rep = evaluate_cohort(cases);
    if (!a.out_json.empty()) spit(a.out_json, evaluation_to_json(rep));
    if (!a.out_csv.empty()) write_csv(a.out_csv, evaluation_summary_table(rep));
    std::cout << "pearson_r=" << format_double(rep.pearson_r)
              << " mean_abs_diff_pct=" << format_double(rep.mean_abs_diff_pct)
              << " dsc_mean=" << format_double(rep.dsc_mean) << "\n";
    return 0;
}

struct RunArgs {
    std::string config, out;
    int jobs = 1;
    bool no_images = false;
    std::vector<double> sigmas{16, 32, 64, 128}, gammas{0.1, 0.15, 0.2, 0.25};
};

int cmd_run(const RunArgs &a) {
    const PipelineConfig cfg = load_config(a.config);
    RunOptions o;
    o.jobs = a.jobs;
    o.write_case_images = !a.no_images;
    const RunSummary s = run_pipeline(cfg, a.out, o);
    std::cout << "cases=" << s.cases.size() << " pearson_r=" << format_double(s.evaluation.pearson_r)
              << " mean_abs_diff_pct=" << format_double(s.evaluation.mean_abs_diff_pct)
              << " dsc_mean=" << format_double(s.evaluation.dsc_mean);
    if (s.prediction) std::cout << " cv_accuracy=" << format_double(s.prediction->mean.accuracy);
    std::cout << "\n";
    return 0;
}

int cmd_sweep(const RunArgs &a) {
    const PipelineConfig cfg = load_config(a.config);
    const auto cells = param_sweep(cfg, a.sigmas, a.gammas, a.out, a.jobs);
    for (const auto &c : cells) {
        std::cout << "sigma=" << format_double(c.sigma) << " gamma=" << format_double(c.gamma);
        if (c.ok) {
            std::cout << " dsc_mean=" << format_double(c.dsc_mean) << " pearson_r=" << format_double(c.pearson_r);
        } else {
            std::cout << " error=" << c.error;
        }
        std::cout << (c.best ? " best" : "") << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Blended PET/CT registration, Jacobian maps and radiomic response prediction"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    PhantomArgs pa;
    auto *phantom = app.add_subcommand("phantom", "Generate a synthetic shrinkage cohort");
    phantom->add_option("--out", pa.out, "Output directory")->required();
    phantom->add_option("--config", pa.config, "Pipeline config JSON (cohort section)");
    phantom->add_option("--cases", pa.cases, "Number of cases");
    phantom->add_option("--change-lo", pa.lo, "Smallest true change, percent");
    phantom->add_option("--change-hi", pa.hi, "Largest true change, percent");
    phantom->add_option("--seed", pa.seed, "Cohort seed");

    BlendArgs ba;
    auto *blend = app.add_subcommand("blend", "Clip, normalize and blend a CT/PET pair");
    blend->add_option("--ct", ba.ct)->required()->check(CLI::ExistingFile);
    blend->add_option("--pet", ba.pet)->required()->check(CLI::ExistingFile);
    blend->add_option("--out", ba.out)->required();
    blend->add_option("--alpha", ba.alpha, "CT weight in [0,1]");
    blend->add_option("--channel", ba.channel, "blend, pet or ct")->check(CLI::IsMember({"blend", "pet", "ct"}));
    blend->add_option("--config", ba.config, "Pipeline config JSON (blend section)");

    RegisterArgs ra;
    auto *reg = app.add_subcommand("register", "Deformably register a moving image to a fixed image");
    reg->add_option("--fixed", ra.fixed)->required()->check(CLI::ExistingFile);
    reg->add_option("--moving", ra.moving)->required()->check(CLI::ExistingFile);
    reg->add_option("--fixed-mask", ra.fixed_mask, "Tumor mask on the fixed grid")->check(CLI::ExistingFile);
    reg->add_option("--moving-mask", ra.moving_mask, "Tumor mask on the moving grid")->check(CLI::ExistingFile);
    reg->add_option("--engine", ra.engine)->check(CLI::IsMember({"bsd", "ffd"}));
    reg->add_option("--channel", ra.channel, "Selects the default settings")
        ->check(CLI::IsMember({"blend", "pet", "ct"}));
    reg->add_option("--config", ra.config, "Registration settings JSON")->check(CLI::ExistingFile);
    reg->add_option("--out-field", ra.out_field)->required();
    reg->add_option("--out-inverse", ra.out_inverse);
    reg->add_option("--trace", ra.trace, "Cost trace CSV");

    JacobianArgs ja;
    auto *jac = app.add_subcommand("jacobian", "Jacobian determinant map and volume change");
    jac->add_option("--field", ja.field)->required()->check(CLI::ExistingFile);
    jac->add_option("--mask", ja.mask, "Baseline tumor mask")->required()->check(CLI::ExistingFile);
    jac->add_option("--out-jmap", ja.out_jmap);
    jac->add_option("--report", ja.report, "JSON report (stdout if omitted)");
    jac->add_option("--followup-mask", ja.followup_mask, "Adds the warped-mask DSC")->check(CLI::ExistingFile);

    FeaturesArgs fa;
    auto *feat = app.add_subcommand("features", "56 radiomic features of a Jacobian map");
    feat->add_option("--jmap", fa.jmap)->required()->check(CLI::ExistingFile);
    feat->add_option("--mask", fa.mask)->required()->check(CLI::ExistingFile);
    feat->add_option("--out", fa.out)->required();
    feat->add_option("--case-id", fa.case_id);
    feat->add_option("--bins", fa.bins)->check(CLI::Range(2, 4096));

    TableArgs ua;
    auto *uni = app.add_subcommand("univariate", "Per-feature AUC and rank-sum p-value");
    uni->add_option("--features", ua.features)->required()->check(CLI::ExistingFile);
    uni->add_option("--labels", ua.labels, "CSV with case_id,label")->required()->check(CLI::ExistingFile);
    uni->add_option("--out", ua.out)->required();

    TableArgs pr;
    auto *pred = app.add_subcommand("predict", "Repeated cross-validated response prediction");
    pred->add_option("--features", pr.features)->required()->check(CLI::ExistingFile);
    pred->add_option("--labels", pr.labels, "CSV with case_id,label")->required()->check(CLI::ExistingFile);
    pred->add_option("--out-report", pr.out)->required();
    pred->add_option("--curve", pr.curve, "Accuracy versus feature count CSV");
    pred->add_option("--seed", pr.seed);
    pred->add_option("--folds", pr.folds);
    pred->add_option("--repeats", pr.repeats);
    pred->add_option("--trees", pr.trees);
    pred->add_option("--max-features", pr.max_features);
    pred->add_option("--corr-threshold", pr.corr);

    EvaluateArgs ea;
    auto *eval = app.add_subcommand("evaluate", "Cohort agreement between estimated and true change");
    eval->add_option("--input", ea.input, "CSV with case_id, est, gt, dsc")->required()->check(CLI::ExistingFile);
    eval->add_option("--out-json", ea.out_json);
    eval->add_option("--out-csv", ea.out_csv);

    RunArgs rn;
    auto *run = app.add_subcommand("run", "Full pipeline over a cohort");
    run->add_option("--config", rn.config, "Pipeline config JSON")->check(CLI::ExistingFile);
    run->add_option("--out", rn.out, "Run directory")->required();
    run->add_option("--jobs", rn.jobs, "Concurrent cases")->check(CLI::PositiveNumber);
    run->add_flag("--no-images", rn.no_images, "Skip per-case images and fields");

    RunArgs sw;
    auto *sweep = app.add_subcommand("sweep", "Mesh spacing / step size grid over the cohort");
    sweep->add_option("--config", sw.config, "Pipeline config JSON")->check(CLI::ExistingFile);
    sweep->add_option("--out", sw.out)->required();
    sweep->add_option("--sigmas", sw.sigmas, "Mesh spacings, mm")->delimiter(',');
    sweep->add_option("--gammas", sw.gammas, "Step sizes")->delimiter(',');
    sweep->add_option("--jobs", sw.jobs)->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        if (phantom->parsed()) return cmd_phantom(pa);
        if (blend->parsed()) return cmd_blend(ba);
        if (reg->parsed()) return cmd_register(ra);
        if (jac->parsed()) return cmd_jacobian(ja);
        if (feat->parsed()) return cmd_features(fa);
        if (uni->parsed()) return cmd_univariate(ua);
        if (pred->parsed()) return cmd_predict(pr);
        if (eval->parsed()) return cmd_evaluate(ea);
        if (run->parsed()) return cmd_run(rn);
        if (sweep->parsed()) return cmd_sweep(sw);
    } catch (const PipelineError &e) {
        std::cerr << "blendreg: error in " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "blendreg: error in stage '" << name << "': " << e.what() << "\n";
        return 1;
    }
    return 1;
}
