#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "blendreg/csv.hpp"
#include "blendreg/metaimage.hpp"
#include "blendreg/pipeline.hpp"

using namespace blendreg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / "blendreg_pipeline_test" / name;
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.cohort.cases = 4;
    cfg.cohort.size = 32;
    cfg.cohort.radius = 6;
    cfg.cohort.change_lo = 20;
    cfg.cohort.change_hi = 60;
    auto &r = cfg.registration[Channel::blend];
    r.iterations = {15, 10, 5};
    r.mesh_spacing = 16;
    cfg.predict.folds = 2;
    cfg.predict.repeats = 2;
    cfg.predict.n_trees = 10;
    cfg.predict.max_features = 3;
    cfg.predict.responder_threshold = 40;
    return cfg;
}

} // namespace

TEST_CASE("empty config gives the defaults") {
    const PipelineConfig cfg = pipeline_config_from_json("{}");
    CHECK(cfg.blend.alpha == 0.2);
    CHECK(cfg.engine == Engine::bsd);
    CHECK(cfg.channel == Channel::blend);
    CHECK(cfg.registration.at(Channel::blend).mesh_spacing == 32.0);
    CHECK(cfg.registration.at(Channel::ct).mesh_spacing == 16.0);
    CHECK(cfg.registration.at(Channel::blend).step_size == 0.15);
    CHECK(cfg.n_bins == 32);
    CHECK(cfg.predict.folds == 10);
    CHECK(cfg.predict.repeats == 10);
    CHECK(cfg.predict.n_trees == 200);
}

TEST_CASE("config JSON round trip and strictness") {
    PipelineConfig cfg = small_config();
    cfg.engine = Engine::ffd;
    cfg.channel = Channel::pet;
    cfg.registration[Channel::pet].bending_weight = 2.5;
    const std::string text = pipeline_config_to_json(cfg);
    const PipelineConfig back = pipeline_config_from_json(text);
    CHECK(pipeline_config_to_json(back) == text);
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);

    CHECK_THROWS_AS(pipeline_config_from_json(R"({"bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(R"({"registration": {"blend": {"sigma": 3}}})"), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(R"({"blend": {"alpha": "high"}})"), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(R"({"blend": {"alpha": 2}})"), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json(R"({"engine": "demons"})"), ConfigError);
    CHECK_THROWS_AS(pipeline_config_from_json("{"), ConfigError);

    const auto reg = registration_config_from_json(R"({"step_size": 0.25, "iterations": [5, 5, 5]})",
                                                   RegistrationConfig::defaults_for(Channel::ct));
    CHECK(reg.step_size == 0.25);
    CHECK(reg.mesh_spacing == 16.0);
}

TEST_CASE("hash changes when any field changes") {
    const PipelineConfig base;
    const std::string h = config_hash(base);
    std::vector<PipelineConfig> variants(8, base);
    variants[0].blend.alpha = 0.3;
    variants[1].engine = Engine::ffd;
    variants[2].registration[Channel::ct].step_size = 0.2;
    variants[3].cohort.seed = 8;
    variants[4].n_bins = 16;
    variants[5].predict.seed = 2;
    variants[6].input_dir = "x";
    variants[7].registration[Channel::blend].iterations = {100, 70, 41};
    for (const auto &v : variants) CHECK(config_hash(v) != h);
    CHECK(config_hash(PipelineConfig{}) == h);
}

TEST_CASE("best cell rule") {
    std::vector<SweepCell> cells(4);
    cells[0] = {16, 0.1, 0.80, 0.95, 0, true, "", false};
    cells[1] = {32, 0.1, 0.85, 0.90, 0, true, "", false};
    cells[2] = {32, 0.15, 0.85, 0.93, 0, true, "", false};
    cells[3] = {64, 0.1, 0.99, 0.99, 0, false, "diverged", false};
    CHECK(best_cell(cells) == std::optional<std::size_t>{2});
    cells[2].ok = false;
    CHECK(best_cell(cells) == std::optional<std::size_t>{1});
    for (auto &c : cells) c.ok = false;
    CHECK_FALSE(best_cell(cells).has_value());
}

TEST_CASE("channel images") {
    Image3D ct(Geometry{{2, 1, 1}, {1, 1, 1}, {}}), pet(ct.geometry());
    ct[0] = -1000;
    ct[1] = 2000;
    pet[0] = 35;
    pet[1] = 0;
    const BlendConfig b;
    const Image3D bl = channel_image(ct, pet, Channel::blend, b);
    CHECK(bl[0] == doctest::Approx(0.8));
    CHECK(bl[1] == doctest::Approx(0.2));
    CHECK(channel_image(ct, pet, Channel::pet, b)[0] == 1.0);
    CHECK(channel_image(ct, pet, Channel::ct, b)[1] == 1.0);
}

TEST_CASE("phantom case directories round trip") {
    CohortOptions o;
    o.grid = Geometry{{24, 24, 24}, {1, 1, 1}, {}};
    o.baseline_radius = 5;
    const auto cohort = make_cohort(2, {30, 30}, 4, o);
    const fs::path dir = scratch("phantom") / cohort[1].case_id;
    write_phantom_case(cohort[1], dir.string());
    const PhantomCase back = read_phantom_case(dir.string());
    CHECK(back.case_id == cohort[1].case_id);
    CHECK(back.true_change_pct == doctest::Approx(cohort[1].true_change_pct));
    CHECK(back.baseline_mask == cohort[1].baseline_mask);
    CHECK(back.spec.heterogeneity.has_value() == cohort[1].spec.heterogeneity.has_value());
    for (std::size_t n = 0; n < back.baseline_ct.size(); ++n) {
        CHECK(back.baseline_ct[n] == doctest::Approx(cohort[1].baseline_ct[n]).epsilon(1e-6));
    }
}

TEST_CASE("run_pipeline writes reproducible artifacts") {
    const PipelineConfig cfg = small_config();
    const fs::path a = scratch("run_a"), b = scratch("run_b");
    RunOptions one;
    const RunSummary s = run_pipeline(cfg, a.string(), one);
    RunOptions two;
    two.jobs = 3;
    run_pipeline(cfg, b.string(), two);
    REQUIRE(s.cases.size() == 4);
    for (const char *f : {"features.csv", "evaluation.csv", "evaluation.json", "univariate.csv", "prediction.json",
                          "accuracy_curve.csv", "manifest.json"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(fs::exists(a / "cases" / "case_000" / "jacobian.mha"));
    CHECK(fs::exists(a / "cases" / "case_000" / "trace.csv"));
    CHECK(slurp(a / "cases" / "case_002" / "forward_field.mha") == slurp(b / "cases" / "case_002" / "forward_field.mha"));
    CHECK(slurp(a / "manifest.json").find(config_hash(cfg)) != std::string::npos);
    const CsvTable feats = read_csv((a / "features.csv").string());
    CHECK(feats.header.size() == 57);
    CHECK(feats.rows.size() == 4);
    CHECK(s.prediction.has_value());
    CHECK(std::isfinite(s.evaluation.pearson_r));
    for (const auto &c : s.cases) CHECK(c.est_change_pct == doctest::Approx(c.gt_change_pct).epsilon(0.5));
}

TEST_CASE("identity cohort") {
    PipelineConfig cfg = small_config();
    cfg.cohort.cases = 3;
    cfg.cohort.change_lo = 0;
    cfg.cohort.change_hi = 0;
    cfg.cohort.noise_min = cfg.cohort.noise_max = 0.0;
    const fs::path out = scratch("identity");
    const RunSummary s = run_pipeline(cfg, out.string());
    for (const auto &c : s.cases) {
        CHECK(std::abs(c.est_change_pct) < 1.0);
        CHECK(c.gt_change_pct == doctest::Approx(0.0).scale(1.0));
        CHECK(c.dsc == 1.0);
    }
    CHECK(std::isnan(s.evaluation.pearson_r));
    CHECK(slurp(out / "evaluation.json").find("\"pearson_r\": null") != std::string::npos);
    CHECK_FALSE(s.prediction.has_value());
    CHECK(slurp(out / "prediction.json").find("skipped") != std::string::npos);
}

TEST_CASE("stage errors carry the stage and case") {
    PipelineConfig cfg = small_config();
    cfg.input_dir = (fs::temp_directory_path() / "blendreg_no_such_dir").string();
    try {
        run_pipeline(cfg, scratch("err").string());
        FAIL("expected a PipelineError");
    } catch (const PipelineError &e) {
        CHECK(e.stage() == "input");
    }

    // a case directory with a corrupt image fails in the phantom stage of that case
    CohortOptions o;
    o.grid = Geometry{{24, 24, 24}, {1, 1, 1}, {}};
    o.baseline_radius = 5;
    const auto cohort = make_cohort(2, {30, 30}, 4, o);
    const fs::path in = scratch("bad_input");
    for (const auto &pc : cohort) write_phantom_case(pc, (in / pc.case_id).string());
    std::ofstream(in / "case_001" / "followup_pet.mha") << "garbage";
    cfg.input_dir = in.string();
    try {
        run_pipeline(cfg, scratch("err2").string());
        FAIL("expected a PipelineError");
    } catch (const PipelineError &e) {
        CHECK(e.stage() == "phantom");
        CHECK(e.case_id() == "case_001");
    }
}

TEST_CASE("param sweep") {
    PipelineConfig cfg = small_config();
    cfg.cohort.cases = 3;
    const fs::path out = scratch("sweep");
    const auto cells = param_sweep(cfg, {16}, {0.15}, out.string());
    REQUIRE(cells.size() == 1);
    CHECK(cells[0].ok);
    CHECK(cells[0].best);
    RunOptions ro;
    ro.write_case_images = false;
    const RunSummary s = run_pipeline(cfg, scratch("sweep_ref").string(), ro);
    CHECK(cells[0].dsc_mean == s.evaluation.dsc_mean);
    CHECK(cells[0].pearson_r == s.evaluation.pearson_r);
    CHECK(read_csv((out / "sweep.csv").string()).rows.size() == 1);
    CHECK_THROWS_AS(param_sweep(cfg, {}, {0.1}, out.string()), ConfigError);
}
