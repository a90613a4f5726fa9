// pipeline.cpp - config handling, per-case processing and run artifacts.

#include "blendreg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>

#include "blendreg/csv.hpp"
#include "blendreg/error.hpp"
#include "blendreg/metaimage.hpp"
#include "json.hpp"

namespace blendreg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Applies `set` to every key of obj; unknown keys are an error.
void for_keys(const json &obj, const std::string &where,
              const std::map<std::string, std::function<void(const json &)>> &setters) {
    if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (const auto &[key, value] : obj.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) throw ConfigError(where + ": unknown key '" + key + "'");
        try {
            it->second(value);
        } catch (const json::exception &e) {
            throw ConfigError(where + "." + key + ": " + e.what());
        }
    }
}

json to_json(const BlendConfig &b) {
    return {{"alpha", b.alpha},           {"ct_clip_max", b.ct_clip_max}, {"ct_norm_lo", b.ct_norm_lo},
            {"ct_norm_hi", b.ct_norm_hi}, {"pet_norm_lo", b.pet_norm_lo}, {"pet_norm_hi", b.pet_norm_hi}};
}

void from_json_into(const json &j, BlendConfig &b) {
    for_keys(j, "blend",
             {{"alpha", [&](const json &v) { b.alpha = v.get<double>(); }},
              {"ct_clip_max", [&](const json &v) { b.ct_clip_max = v.get<double>(); }},
              {"ct_norm_lo", [&](const json &v) { b.ct_norm_lo = v.get<double>(); }},
              {"ct_norm_hi", [&](const json &v) { b.ct_norm_hi = v.get<double>(); }},
              {"pet_norm_lo", [&](const json &v) { b.pet_norm_lo = v.get<double>(); }},
              {"pet_norm_hi", [&](const json &v) { b.pet_norm_hi = v.get<double>(); }}});
}

json to_json(const RegistrationConfig &r) {
    return {{"levels", r.levels},
            {"mesh_spacing", r.mesh_spacing},
            {"step_size", r.step_size},
            {"iterations", r.iterations},
            {"mi_bins", r.mi_bins},
            {"rigidity_weight", r.rigidity_weight},
            {"rigidity_iterations", r.rigidity_iterations},
            {"crop_margin", r.crop_margin},
            {"geodesic_weight", r.geodesic_weight},
            {"bending_weight", r.bending_weight},
            {"squarings", r.squarings},
            {"min_step", r.min_step},
            {"convergence_halvings", r.convergence_halvings}};
}

void from_json_into(const json &j, RegistrationConfig &r, const std::string &where) {
    for_keys(j, where,
             {{"levels", [&](const json &v) { r.levels = v.get<int>(); }},
              {"mesh_spacing", [&](const json &v) { r.mesh_spacing = v.get<double>(); }},
              {"step_size", [&](const json &v) { r.step_size = v.get<double>(); }},
              {"iterations", [&](const json &v) { r.iterations = v.get<std::vector<int>>(); }},
              {"mi_bins", [&](const json &v) { r.mi_bins = v.get<int>(); }},
              {"rigidity_weight", [&](const json &v) { r.rigidity_weight = v.get<double>(); }},
              {"rigidity_iterations", [&](const json &v) { r.rigidity_iterations = v.get<int>(); }},
              {"crop_margin", [&](const json &v) { r.crop_margin = v.get<double>(); }},
              {"geodesic_weight", [&](const json &v) { r.geodesic_weight = v.get<double>(); }},
              {"bending_weight", [&](const json &v) { r.bending_weight = v.get<double>(); }},
              {"squarings", [&](const json &v) { r.squarings = v.get<int>(); }},
              {"min_step", [&](const json &v) { r.min_step = v.get<double>(); }},
              {"convergence_halvings", [&](const json &v) { r.convergence_halvings = v.get<int>(); }}});
}

json to_json(const CohortConfig &c) {
    return {{"cases", c.cases},
            {"change_lo", c.change_lo},
            {"change_hi", c.change_hi},
            {"seed", c.seed},
            {"size", c.size},
            {"spacing", c.spacing},
            {"radius", c.radius},
            {"heterogeneity_spread", c.heterogeneity_spread},
            {"noise_min", c.noise_min},
            {"noise_max", c.noise_max}};
}

void from_json_into(const json &j, CohortConfig &c) {
    for_keys(j, "cohort",
             {{"cases", [&](const json &v) { c.cases = v.get<int>(); }},
              {"change_lo", [&](const json &v) { c.change_lo = v.get<double>(); }},
              {"change_hi", [&](const json &v) { c.change_hi = v.get<double>(); }},
              {"seed", [&](const json &v) { c.seed = v.get<std::uint64_t>(); }},
              {"size", [&](const json &v) { c.size = v.get<int>(); }},
              {"spacing", [&](const json &v) { c.spacing = v.get<double>(); }},
              {"radius", [&](const json &v) { c.radius = v.get<double>(); }},
              {"heterogeneity_spread", [&](const json &v) { c.heterogeneity_spread = v.get<double>(); }},
              {"noise_min", [&](const json &v) { c.noise_min = v.get<double>(); }},
              {"noise_max", [&](const json &v) { c.noise_max = v.get<double>(); }}});
}

json to_json(const PredictConfig &p) {
    return {{"enabled", p.enabled},
            {"folds", p.folds},
            {"repeats", p.repeats},
            {"seed", p.seed},
            {"n_trees", p.n_trees},
            {"max_features", p.max_features},
            {"corr_threshold", p.corr_threshold},
            {"responder_threshold", p.responder_threshold}};
}

void from_json_into(const json &j, PredictConfig &p) {
    for_keys(j, "predict",
             {{"enabled", [&](const json &v) { p.enabled = v.get<bool>(); }},
              {"folds", [&](const json &v) { p.folds = v.get<int>(); }},
              {"repeats", [&](const json &v) { p.repeats = v.get<int>(); }},
              {"seed", [&](const json &v) { p.seed = v.get<std::uint64_t>(); }},
              {"n_trees", [&](const json &v) { p.n_trees = v.get<int>(); }},
              {"max_features", [&](const json &v) { p.max_features = v.get<int>(); }},
              {"corr_threshold", [&](const json &v) { p.corr_threshold = v.get<double>(); }},
              {"responder_threshold", [&](const json &v) { p.responder_threshold = v.get<double>(); }}});
}

json config_json(const PipelineConfig &cfg) {
    json reg = json::object();
    for (const auto &[channel, r] : cfg.registration) reg[to_string(channel)] = to_json(r);
    return {{"blend", to_json(cfg.blend)},
            {"engine", to_string(cfg.engine)},
            {"channel", to_string(cfg.channel)},
            {"registration", reg},
            {"cohort", to_json(cfg.cohort)},
            {"radiomics", {{"n_bins", cfg.n_bins}}},
            {"predict", to_json(cfg.predict)},
            {"io", {{"input_dir", cfg.input_dir}}}};
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex16(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_text(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed: " + p.string());
}

// JSON number, or null for NaN / infinity.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); }

json to_json(const PhantomSpec &s) {
    json j = {{"dims", {s.grid.dims[0], s.grid.dims[1], s.grid.dims[2]}},
              {"spacing", {s.grid.spacing.x, s.grid.spacing.y, s.grid.spacing.z}},
              {"origin", {s.grid.origin.x, s.grid.origin.y, s.grid.origin.z}},
              {"center", {s.center.x, s.center.y, s.center.z}},
              {"baseline_radius", s.baseline_radius},
              {"shrink_factor", s.shrink_factor},
              {"foreground_intensity", s.foreground_intensity},
              {"background_intensity", s.background_intensity},
              {"noise_sd", s.noise_sd},
              {"seed", s.seed}};
    j["heterogeneity"] = s.heterogeneity ? json(*s.heterogeneity) : json(nullptr);
    return j;
}

PhantomSpec phantom_spec_from_json(const json &j) {
    PhantomSpec s;
    auto vec = [](const json &a) { return Vec3{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()}; };
    const auto &d = j.at("dims");
    s.grid.dims = {d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>(), d.at(2).get<std::int64_t>()};
    s.grid.spacing = vec(j.at("spacing"));
    s.grid.origin = vec(j.at("origin"));
    s.center = vec(j.at("center"));
    s.baseline_radius = j.at("baseline_radius").get<double>();
    s.shrink_factor = j.at("shrink_factor").get<double>();
    s.foreground_intensity = j.at("foreground_intensity").get<double>();
    s.background_intensity = j.at("background_intensity").get<double>();
    s.noise_sd = j.at("noise_sd").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("heterogeneity") && !j.at("heterogeneity").is_null()) {
        s.heterogeneity = j.at("heterogeneity").get<std::array<double, 8>>();
    }
    return s;
}

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the lowest-index failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)> &fn) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto &e : errors)
        if (e) std::rethrow_exception(e);
}

struct CaseSource {
    std::string case_id;
    std::function<PhantomCase()> load;
};

std::vector<CaseSource> case_sources(const PipelineConfig &cfg) {
    std::vector<CaseSource> out;
    if (!cfg.input_dir.empty()) {
        if (!fs::is_directory(cfg.input_dir)) {
            throw PipelineError("input", "", "input directory does not exist: " + cfg.input_dir);
        }
        std::vector<fs::path> dirs;
        for (const auto &e : fs::directory_iterator(cfg.input_dir)) {
            if (e.is_directory() && fs::exists(e.path() / "case.json")) dirs.push_back(e.path());
        }
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw PipelineError("input", "", "no case directories under " + cfg.input_dir);
        for (const auto &d : dirs) {
            out.push_back({d.filename().string(), [d] { return read_phantom_case(d.string()); }});
        }
        return out;
    }
    const auto specs = cohort_specs(cfg.cohort.cases, {cfg.cohort.change_lo, cfg.cohort.change_hi}, cfg.cohort.seed,
                                    cfg.cohort.options());
    for (std::size_t i = 0; i < specs.size(); ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "case_%03zu", i);
        const std::string cid = id;
        out.push_back({cid, [spec = specs[i], cid, blend = cfg.blend] {
                           PhantomCase pc = make_sphere_phantom(spec, blend);
                           pc.case_id = cid;
                           return pc;
                       }});
    }
    return out;
}

void write_trace(const fs::path &p, const std::vector<CostTerms> &trace) {
    CsvTable t;
    t.header = {"step", "level", "similarity", "geodesic", "regularizer"};
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto &c = trace[i];
        t.rows.push_back({std::to_string(i), std::to_string(c.level), fmt(c.similarity), fmt(c.geodesic),
                          fmt(c.regularizer)});
    }
    write_csv(p.string(), t);
}

// Runs one case through register -> Jacobian -> features.
CaseOutcome process_case(const PipelineConfig &cfg, const CaseSource &src, const fs::path &case_dir,
                         bool write_images) {
    const std::string &id = src.case_id;
    auto stage = [&](const char *name, auto &&fn) {
        try {
            return fn();
        } catch (const PipelineError &) {
            throw;
        } catch (const std::exception &e) {
            throw PipelineError(name, id, e.what());
        }
    };
    const PhantomCase pc = stage("phantom", [&] { return src.load(); });
    const auto [fixed, moving] = stage("blend", [&] {
        return std::pair{channel_image(pc.baseline_ct, pc.baseline_pet, cfg.channel, cfg.blend),
                         channel_image(pc.followup_ct, pc.followup_pet, cfg.channel, cfg.blend)};
    });
    const RegistrationResult reg = stage("register", [&] {
        return register_pair(fixed, moving, pc.baseline_mask, pc.followup_mask, cfg.engine,
                             cfg.active_registration());
    });
    CaseOutcome out;
    out.case_id = id;
    out.gt_change_pct = pc.true_change_pct;
    out.iterations = static_cast<int>(reg.cost_trace.size());
    const JacobianMap jmap = stage("jacobian", [&] {
        JacobianMap j = jacobian_map(reg.forward_field);
        out.est_change_pct = jacobian_integral_change(j, pc.baseline_mask);
        out.dsc = dice(warp_mask(pc.followup_mask, reg.forward_field), pc.baseline_mask);
        out.min_jacobian = min_jacobian(reg.forward_field);
        return j;
    });
    out.features = stage("features", [&] { return extract_all(jmap, pc.baseline_mask, cfg.n_bins); });
    if (write_images) {
        stage("write", [&] {
            fs::create_directories(case_dir);
            write_image(case_dir / "baseline_input.mha", fixed);
            write_image(case_dir / "followup_input.mha", moving);
            write_field(case_dir / "forward_field.mha", reg.forward_field);
            write_field(case_dir / "inverse_field.mha", reg.inverse_field);
            write_image(case_dir / "jacobian.mha", jmap);
            write_trace(case_dir / "trace.csv", reg.cost_trace);
            return 0;
        });
    }
    return out;
}

CsvTable features_table(const std::vector<CaseOutcome> &cases) {
    CsvTable t;
    t.header.push_back("case_id");
    for (const auto &n : FeatureVector::names()) t.header.push_back(n);
    for (const auto &c : cases) {
        std::vector<std::string> row{c.case_id};
        for (double v : c.features.values) row.push_back(fmt(v));
        t.rows.push_back(std::move(row));
    }
    return t;
}

json evaluation_json(const EvaluationReport &rep) {
    json cases = json::array();
    for (const auto &c : rep.cases) {
        cases.push_back({{"case_id", c.case_id},
                         {"est_change_pct", num(c.est_change_pct)},
                         {"gt_change_pct", num(c.gt_change_pct)},
                         {"dsc", num(c.dsc)}});
    }
    return {{"pearson_r", num(rep.pearson_r)},
            {"mean_abs_diff_pct", num(rep.mean_abs_diff_pct)},
            {"dsc_mean", num(rep.dsc_mean)},
            {"dsc_sd", num(rep.dsc_sd)},
            {"n_cases", rep.cases.size()},
            {"cases", cases}};
}

json metrics_json(const CVMetrics &m) {
    return {{"sensitivity", num(m.sensitivity)},
            {"specificity", num(m.specificity)},
            {"accuracy", num(m.accuracy)},
            {"auc", num(m.auc)}};
}

} // namespace

CohortOptions CohortConfig::options() const {
    CohortOptions o;
    o.grid = Geometry{{size, size, size}, {spacing, spacing, spacing}, {}};
    o.baseline_radius = radius;
    o.heterogeneity_spread = heterogeneity_spread;
    o.noise_min = noise_min;
    o.noise_max = noise_max;
    return o;
}

void PipelineConfig::validate() const {
    blend.validate();
    for (const auto &[channel, r] : registration) r.validate();
    if (!registration.contains(channel)) throw ConfigError("no registration settings for the active channel");
    if (n_bins < 2) throw ConfigError("radiomics n_bins must be >= 2");
    if (input_dir.empty()) {
        if (cohort.cases < 1) throw ConfigError("cohort.cases must be >= 1");
        if (cohort.size < 16) throw ConfigError("cohort.size must be >= 16");
        if (!(cohort.spacing > 0.0) || !(cohort.radius > 0.0)) {
            throw ConfigError("cohort spacing and radius must be positive");
        }
        if (cohort.change_lo < 0.0 || cohort.change_hi >= 100.0 || cohort.change_lo > cohort.change_hi) {
            throw ConfigError("cohort change range must satisfy 0 <= lo <= hi < 100");
        }
        if (cohort.heterogeneity_spread < 0.0 || cohort.noise_min < 0.0 || cohort.noise_min > cohort.noise_max) {
            throw ConfigError("cohort spread and noise bounds are invalid");
        }
    }
    if (predict.folds < 2 || predict.repeats < 1 || predict.n_trees < 1 || predict.max_features < 1) {
        throw ConfigError("predict: folds >= 2, repeats >= 1, n_trees >= 1, max_features >= 1 required");
    }
    if (!(predict.corr_threshold > 0.0 && predict.corr_threshold <= 1.0)) {
        throw ConfigError("predict.corr_threshold must lie in (0, 1]");
    }
}

PipelineConfig pipeline_config_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    PipelineConfig cfg;
    for_keys(j, "config",
             {{"blend", [&](const json &v) { from_json_into(v, cfg.blend); }},
              {"engine", [&](const json &v) { cfg.engine = parse_engine(v.get<std::string>()); }},
              {"channel", [&](const json &v) { cfg.channel = parse_channel(v.get<std::string>()); }},
              {"registration",
               [&](const json &v) {
                   if (!v.is_object()) throw ConfigError("registration: expected a JSON object");
                   for (const auto &[key, sub] : v.items()) {
                       const Channel c = parse_channel(key);
                       from_json_into(sub, cfg.registration[c], "registration." + key);
                   }
               }},
              {"cohort", [&](const json &v) { from_json_into(v, cfg.cohort); }},
              {"radiomics",
               [&](const json &v) {
                   for_keys(v, "radiomics", {{"n_bins", [&](const json &b) { cfg.n_bins = b.get<int>(); }}});
               }},
              {"predict", [&](const json &v) { from_json_into(v, cfg.predict); }},
              {"io",
               [&](const json &v) {
                   for_keys(v, "io",
                            {{"input_dir", [&](const json &d) { cfg.input_dir = d.get<std::string>(); }}});
               }}});
    cfg.validate();
    return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig &cfg) { return config_json(cfg).dump(); }

std::string config_hash(const PipelineConfig &cfg) { return hex16(fnv1a(pipeline_config_to_json(cfg))); }

RegistrationConfig registration_config_from_json(const std::string &text, RegistrationConfig base) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        throw ConfigError(std::string("registration config is not valid JSON: ") + e.what());
    }
    from_json_into(j, base, "registration");
    base.validate();
    return base;
}

Image3D channel_image(const Image3D &ct, const Image3D &pet, Channel channel, const BlendConfig &cfg) {
    switch (channel) {
    case Channel::blend:
        return blend_channels(ct, pet, cfg);
    case Channel::pet:
        return normalize(pet, cfg.pet_norm_lo, cfg.pet_norm_hi);
    case Channel::ct:
        return normalize(clip_intensity(ct, cfg.ct_clip_max), cfg.ct_norm_lo, cfg.ct_norm_hi);
    }
    throw ConfigError("unknown channel");
}

RunSummary run_pipeline(const PipelineConfig &cfg, const std::string &out_dir, const RunOptions &opts) {
    try {
        cfg.validate();
    } catch (const std::exception &e) {
        throw PipelineError("config", "", e.what());
    }
    const fs::path root(out_dir);
    try {
        fs::create_directories(root);
    } catch (const std::exception &e) {
        throw PipelineError("output", "", e.what());
    }
    const auto sources = case_sources(cfg);

    RunSummary summary;
    summary.cases.resize(sources.size());
    parallel_for(sources.size(), opts.jobs, [&](std::size_t i) {
        summary.cases[i] = process_case(cfg, sources[i], root / "cases" / sources[i].case_id, opts.write_case_images);
    });

    std::vector<std::string> files;
    auto emit_csv = [&](const std::string &name, const CsvTable &t) {
        write_csv((root / name).string(), t);
        files.push_back(name);
    };

    try {
        emit_csv("features.csv", features_table(summary.cases));

        std::vector<CaseEvaluation> evals;
        for (const auto &c : summary.cases) evals.push_back({c.case_id, c.est_change_pct, c.gt_change_pct, c.dsc});
        EvaluationReport rep;
        try {
            rep = evaluate_cohort(evals);
        } catch (const std::invalid_argument &) {
        } catch (const DegenerateError &) {
        }
        if (rep.cases.empty()) {
            // too few cases or constant est/gt: report the other metrics, r undefined
            std::vector<double> dsc;
            double abs_diff = 0.0;
            for (const auto &c : evals) {
                dsc.push_back(c.dsc);
                abs_diff += std::abs(c.est_change_pct - c.gt_change_pct);
            }
            rep.cases = evals;
            rep.pearson_r = std::numeric_limits<double>::quiet_NaN();
            rep.mean_abs_diff_pct = abs_diff / static_cast<double>(evals.size());
            rep.dsc_mean = mean(dsc);
            rep.dsc_sd = dsc.size() > 1 ? standard_deviation(dsc) : 0.0;
        }
        summary.evaluation = rep;

        CsvTable ev;
        ev.header = {"case_id", "est_change_pct", "gt_change_pct", "dsc", "min_jacobian", "iterations"};
        for (const auto &c : summary.cases) {
            ev.rows.push_back({c.case_id, fmt(c.est_change_pct), fmt(c.gt_change_pct), fmt(c.dsc),
                               fmt(c.min_jacobian), std::to_string(c.iterations)});
        }
        emit_csv("evaluation.csv", ev);
        write_text(root / "evaluation.json", evaluation_to_json(rep));
        files.push_back("evaluation.json");
    } catch (const PipelineError &) {
        throw;
    } catch (const std::exception &e) {
        throw PipelineError("evaluate", "", e.what());
    }

    CaseTable table;
    table.feature_names = FeatureVector::names();
    for (const auto &c : summary.cases) {
        table.case_ids.push_back(c.case_id);
        table.rows.push_back(c.features.values);
        table.labels.push_back(c.gt_change_pct >= cfg.predict.responder_threshold ? 1 : 0);
    }
    bool labels_ok = true;
    try {
        table.validate();
    } catch (const InputError &e) {
        labels_ok = false;
        summary.prediction_note = e.what();
    }

    try {
        CsvTable uni = univariate_table({});
        if (labels_ok) uni = univariate_table(univariate_analysis(table));
        emit_csv("univariate.csv", uni);
    } catch (const std::exception &e) {
        throw PipelineError("univariate", "", e.what());
    }

    try {
        std::string pred;
        CsvTable curve = accuracy_curve_table({});
        if (!cfg.predict.enabled || !opts.run_predict) {
            summary.prediction_note = "prediction disabled";
        } else if (labels_ok) {
            CVOptions cv;
            cv.folds = cfg.predict.folds;
            cv.repeats = cfg.predict.repeats;
            cv.seed = cfg.predict.seed;
            cv.max_features = cfg.predict.max_features;
            cv.n_trees = cfg.predict.n_trees;
            cv.corr_threshold = cfg.predict.corr_threshold;
            CVReport r = cross_validate(table, cv);
            pred = prediction_to_json(r, cv);
            curve = accuracy_curve_table(r);
            summary.prediction = std::move(r);
        }
        if (!summary.prediction) {
            pred = json{{"status", "skipped"}, {"note", summary.prediction_note}}.dump(2) + "\n";
        }
        write_text(root / "prediction.json", pred);
        files.push_back("prediction.json");
        emit_csv("accuracy_curve.csv", curve);
    } catch (const std::exception &e) {
        throw PipelineError("predict", "", e.what());
    }

    json manifest = {{"version", kVersion},
                     {"config_hash", config_hash(cfg)},
                     {"config", config_json(cfg)},
                     {"cases", summary.cases.size()}};
    json listing = json::array();
    std::sort(files.begin(), files.end());
    for (const auto &f : files) {
        listing.push_back({{"file", f}, {"fnv1a64", hex16(fnv1a(read_text(root / f)))}});
    }
    manifest["outputs"] = listing;
    write_text(root / "manifest.json", manifest.dump(2) + "\n");
    return summary;
}

std::string evaluation_to_json(const EvaluationReport &rep) { return evaluation_json(rep).dump(2) + "\n"; }

CsvTable evaluation_summary_table(const EvaluationReport &rep) {
    CsvTable t;
    t.header = {"metric", "value"};
    t.rows = {{"n_cases", std::to_string(rep.cases.size())},
              {"pearson_r", fmt(rep.pearson_r)},
              {"mean_abs_diff_pct", fmt(rep.mean_abs_diff_pct)},
              {"dsc_mean", fmt(rep.dsc_mean)},
              {"dsc_sd", fmt(rep.dsc_sd)}};
    return t;
}

CsvTable univariate_table(const std::vector<UnivariateResult> &results) {
    CsvTable t;
    t.header = {"feature", "auc", "p_value", "higher_in_responders"};
    for (const auto &r : results) {
        t.rows.push_back({r.feature, fmt(r.auc), fmt(r.p_value), r.higher_in_positive ? "1" : "0"});
    }
    return t;
}

std::string prediction_to_json(const CVReport &r, const CVOptions &opts) {
    json per_repeat = json::array();
    for (const auto &m : r.per_repeat) per_repeat.push_back(metrics_json(m));
    json freq = json::object();
    for (const auto &[name, count] : r.selection_frequency)
        if (count > 0) freq[name] = count;
    json curve = json::array();
    for (double a : r.accuracy_curve) curve.push_back(num(a));
    const json j = {{"status", "ok"},
                    {"folds", opts.folds},
                    {"repeats", opts.repeats},
                    {"seed", opts.seed},
                    {"n_trees", opts.n_trees},
                    {"max_features", opts.max_features},
                    {"corr_threshold", opts.corr_threshold},
                    {"mean", metrics_json(r.mean)},
                    {"sd", metrics_json(r.sd)},
                    {"per_repeat", per_repeat},
                    {"selection_frequency", freq},
                    {"accuracy_curve", curve},
                    {"single_class_folds", r.single_class_folds}};
    return j.dump(2) + "\n";
}

CsvTable accuracy_curve_table(const CVReport &rep) {
    CsvTable t;
    t.header = {"n_features", "accuracy"};
    for (std::size_t k = 0; k < rep.accuracy_curve.size(); ++k) {
        t.rows.push_back({std::to_string(k + 1), fmt(rep.accuracy_curve[k])});
    }
    return t;
}

CaseTable case_table_from_csv(const CsvTable &features, const CsvTable &labels) {
    if (features.header.empty() || features.header.front() != "case_id") {
        throw InputError("features CSV must start with a case_id column");
    }
    const std::size_t lid = labels.column("case_id");
    const std::size_t llab = labels.column("label");
    std::map<std::string, int> label_of;
    for (const auto &row : labels.rows) {
        if (row.size() <= std::max(lid, llab)) throw InputError("labels CSV: short row");
        const std::string &v = row[llab];
        if (v != "0" && v != "1") throw InputError("labels CSV: label must be 0 or 1, got '" + v + "'");
        label_of[row[lid]] = v == "1" ? 1 : 0;
    }
    CaseTable t;
    t.feature_names.assign(features.header.begin() + 1, features.header.end());
    for (const auto &row : features.rows) {
        if (row.size() != features.header.size()) throw InputError("features CSV: ragged row");
        const auto it = label_of.find(row[0]);
        if (it == label_of.end()) throw InputError("no label for case '" + row[0] + "'");
        std::vector<double> values;
        for (std::size_t c = 1; c < row.size(); ++c) {
            const std::string &cell = row[c];
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!cell.empty() && cell != "nan") {
                std::size_t used = 0;
                try {
                    v = std::stod(cell, &used);
                } catch (const std::exception &) {
                    used = 0;
                }
                if (used != cell.size()) throw InputError("features CSV: bad number '" + cell + "'");
            }
            values.push_back(v);
        }
        t.case_ids.push_back(row[0]);
        t.rows.push_back(std::move(values));
        t.labels.push_back(it->second);
    }
    t.validate();
    return t;
}

std::optional<std::size_t> best_cell(const std::vector<SweepCell> &cells) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto &c = cells[i];
        if (!c.ok) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto &b = cells[*best];
        const double cr = std::isnan(c.pearson_r) ? -2.0 : c.pearson_r;
        const double br = std::isnan(b.pearson_r) ? -2.0 : b.pearson_r;
        if (c.dsc_mean > b.dsc_mean || (c.dsc_mean == b.dsc_mean && cr > br)) best = i;
    }
    return best;
}

std::vector<SweepCell> param_sweep(const PipelineConfig &cfg, const std::vector<double> &sigmas,
                                   const std::vector<double> &gammas, const std::string &out_dir, int jobs) {
    if (sigmas.empty() || gammas.empty()) throw ConfigError("param_sweep needs nonempty sigma and gamma grids");
    const fs::path root(out_dir);
    fs::create_directories(root);
    std::vector<SweepCell> cells;
    for (double s : sigmas) {
        for (double g : gammas) {
            SweepCell cell;
            cell.sigma = s;
            cell.gamma = g;
            PipelineConfig c = cfg;
            c.registration[c.channel].mesh_spacing = s;
            c.registration[c.channel].step_size = g;
            c.predict.enabled = false;
            const std::string name = "sigma_" + format_double(s) + "_gamma_" + format_double(g);
            try {
                RunOptions ro;
                ro.jobs = jobs;
                ro.write_case_images = false;
                ro.run_predict = false;
                const RunSummary rs = run_pipeline(c, (root / "cells" / name).string(), ro);
                cell.dsc_mean = rs.evaluation.dsc_mean;
                cell.pearson_r = rs.evaluation.pearson_r;
                cell.mean_abs_diff_pct = rs.evaluation.mean_abs_diff_pct;
                cell.ok = true;
            } catch (const std::exception &e) {
                cell.error = e.what();
            }
            cells.push_back(cell);
        }
    }
    if (const auto b = best_cell(cells)) cells[*b].best = true;
    CsvTable t;
    t.header = {"sigma", "gamma", "dsc_mean", "pearson_r", "mean_abs_diff_pct", "status", "best"};
    for (const auto &c : cells) {
        t.rows.push_back({format_double(c.sigma), format_double(c.gamma), c.ok ? fmt(c.dsc_mean) : "",
                          c.ok ? fmt(c.pearson_r) : "", c.ok ? fmt(c.mean_abs_diff_pct) : "",
                          c.ok ? "ok" : "error: " + c.error, c.best ? "1" : "0"});
    }
    write_csv((root / "sweep.csv").string(), t);
    return cells;
}

void write_phantom_case(const PhantomCase &pc, const std::string &dir) {
    const fs::path d(dir);
    fs::create_directories(d);
    write_image(d / "baseline_ct.mha", pc.baseline_ct);
    write_image(d / "followup_ct.mha", pc.followup_ct);
    write_image(d / "baseline_pet.mha", pc.baseline_pet);
    write_image(d / "followup_pet.mha", pc.followup_pet);
    write_mask(d / "baseline_mask.mha", pc.baseline_mask);
    write_mask(d / "followup_mask.mha", pc.followup_mask);
    write_field(d / "true_field.mha", pc.true_field);
    const json j = {{"case_id", pc.case_id}, {"true_change_pct", pc.true_change_pct}, {"spec", to_json(pc.spec)}};
    write_text(d / "case.json", j.dump(2) + "\n");
}

PhantomCase read_phantom_case(const std::string &dir) {
    const fs::path d(dir);
    PhantomCase pc;
    try {
        const json j = json::parse(read_text(d / "case.json"));
        pc.case_id = j.at("case_id").get<std::string>();
        pc.true_change_pct = j.at("true_change_pct").get<double>();
        pc.spec = phantom_spec_from_json(j.at("spec"));
    } catch (const json::exception &e) {
        throw InputError("malformed " + (d / "case.json").string() + ": " + e.what());
    }
    pc.baseline_ct = read_image(d / "baseline_ct.mha");
    pc.followup_ct = read_image(d / "followup_ct.mha");
    pc.baseline_pet = read_image(d / "baseline_pet.mha");
    pc.followup_pet = read_image(d / "followup_pet.mha");
    pc.baseline_mask = read_mask(d / "baseline_mask.mha");
    pc.followup_mask = read_mask(d / "followup_mask.mha");
    if (fs::exists(d / "true_field.mha")) pc.true_field = read_field(d / "true_field.mha");
    pc.baseline_img = blend_channels(pc.baseline_ct, pc.baseline_pet, BlendConfig{});
    pc.followup_img = blend_channels(pc.followup_ct, pc.followup_pet, BlendConfig{});
    return pc;
}

} // namespace blendreg
