#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stmmot/cli.hpp"
#include "stmmot/errors.hpp"
#include "stmmot/harness.hpp"

using namespace stmmot;
namespace fs = std::filesystem;

namespace {

Sequence parse(const std::string& text) {
    std::istringstream in(text);
    return parse_mot(in);
}

Sequence random_annotations(Rng& rng) {
    std::uniform_real_distribution<double> pos(-20.0, 600.0), size(1.0, 90.0), conf(0.0, 1.0);
    Sequence s;
    for (std::size_t f = 1; f <= 6; ++f) {
        if (f == 4) continue;
        FrameAnnotations fa{f, {}};
        for (TrackId id = 1; id <= 4; ++id) {
            if (conf(rng) < 0.3) continue;
            fa.rows.push_back({id, {pos(rng), pos(rng), size(rng), size(rng)}, std::round(conf(rng) * 1e6) / 1e6, {}});
        }
        if (!fa.rows.empty()) s.push_back(fa);
    }
    return s;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("stmmot_unit_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    if (err) *err = e.str();
    return code;
}

}  // namespace

TEST_CASE("parse a MOT line") {
    const Sequence s = parse("1,1,100,200,50,150,1,-1,-1,-1\n");
    REQUIRE(s.size() == 1);
    CHECK(s[0].frame == 1);
    REQUIRE(s[0].rows.size() == 1);
    CHECK(s[0].rows[0].id == 1);
    CHECK(s[0].rows[0].box == PixelBox{100, 200, 50, 150});
    CHECK(s[0].rows[0].confidence == 1.0);
    CHECK(parse("").empty());
}

TEST_CASE("parsing sorts frames and keeps trailing fields") {
    const Sequence s = parse("3,1,0,0,5,5,0.5,-1,-1,-1\n1,2,0,0,5,5,1,-1,-1,-1,0.25,-0.5\n");
    REQUIRE(s.size() == 2);
    CHECK(s[0].frame == 1);
    CHECK(s[0].rows[0].embedding == std::vector<double>{0.25, -0.5});
    CHECK(s[1].frame == 3);
}

TEST_CASE("parse errors carry the line number") {
    try {
        parse("1,1,0,0,5,5,1,-1,-1,-1\n2,1,0,zero,5,5,1,-1,-1,-1\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse("1,1,0,0,0,5,1,-1,-1,-1\n"), ParseError);
    CHECK_THROWS_AS(parse("1,1,0,0,5,-2,1,-1,-1,-1\n"), ParseError);
    CHECK_THROWS_AS(parse("1,1,0,0\n"), ParseError);
}

TEST_CASE("write and parse round-trip") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Sequence s = random_annotations(rng);
        const std::string once = format_mot(s);
        CHECK(parse(once) == s);
        CHECK(format_mot(parse(once)) == once);
    }
}

TEST_CASE("writing empty and single-row sequences") {
    TempDir dir;
    write_mot_results({}, dir.path / "empty.txt");
    CHECK(read_text(dir.path / "empty.txt").empty());
    write_mot_results({{2, {{4, {1.5, 2, 3, 4}, 0.5, {}}}}}, dir.path / "one.txt");
    CHECK(read_text(dir.path / "one.txt") == "2,4,1.5,2,3,4,0.500000,-1,-1,-1\n");
    CHECK_THROWS_AS(parse_mot_file(dir.path / "missing.txt"), std::runtime_error);
}

TEST_CASE("scene generation") {
    SceneConfig cfg;
    cfg.n_objects = 5;
    cfg.frame_count = 30;
    cfg.occlusions = {{3, 10, 10}};
    Rng a(cfg.seed), b(cfg.seed);
    const Scene s1 = generate_scene(cfg, a), s2 = generate_scene(cfg, b);
    CHECK(format_mot(s1.gt) == format_mot(s2.gt));

    for (const auto& f : s1.gt) {
        const bool seen = std::any_of(f.rows.begin(), f.rows.end(), [](const AnnotationRow& r) { return r.id == 3; });
        CHECK(seen == (f.frame < 10 || f.frame > 19));
        for (const auto& r : f.rows) {
            CHECK(r.box.left >= 0.0);
            CHECK(r.box.top >= 0.0);
            CHECK(r.box.left + r.box.width <= cfg.image_width);
            CHECK(r.box.top + r.box.height <= cfg.image_height);
        }
    }

    for (const auto& [i, ei] : s1.embeddings)
        for (const auto& [j, ej] : s1.embeddings) CHECK(std::abs(dot(ei.data(), ej.data()) - (i == j ? 1.0 : 0.0)) < 1e-12);

    cfg.n_objects = 70;
    Rng c(1);
    CHECK_THROWS_AS(generate_scene(cfg, c), std::invalid_argument);
}

TEST_CASE("oracle detections") {
    SceneConfig cfg;
    cfg.n_objects = 4;
    cfg.frame_count = 10;
    cfg.box_jitter = 0.0;
    cfg.embedding_noise = 0.0;
    Rng rng(cfg.seed);
    const Scene scene = generate_scene(cfg, rng);
    const Sequence dets = oracle_detections(scene, rng);
    REQUIRE(dets.size() == scene.gt.size());
    for (std::size_t f = 0; f < dets.size(); ++f) {
        for (const auto& d : dets[f].rows) {
            CHECK(d.id == -1);
            const auto match = std::find_if(scene.gt[f].rows.begin(), scene.gt[f].rows.end(),
                                             [&](const AnnotationRow& g) { return g.box == d.box; });
            REQUIRE(match != scene.gt[f].rows.end());
            CHECK(d.embedding == scene.embeddings.at(match->id).values());
        }
    }

    cfg.drop_prob = 1.0;
    Rng r2(cfg.seed);
    const Scene dropped = generate_scene(cfg, r2);
    CHECK(oracle_detections(dropped, r2).empty());
}

TEST_CASE("noisy embeddings stay close to their identity") {
    SceneConfig cfg;
    cfg.n_objects = 10;
    cfg.frame_count = 100;
    cfg.embedding_noise = 0.05;
    Rng rng(3);
    const Scene scene = generate_scene(cfg, rng);
    const Sequence dets = oracle_detections(scene, rng);
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& f : dets) {
        for (const auto& d : f.rows) {
            double best = -1.0;
            const double norm = std::sqrt(std::inner_product(d.embedding.begin(), d.embedding.end(), d.embedding.begin(), 0.0));
            for (const auto& [id, e] : scene.embeddings) best = std::max(best, dot(d.embedding, e.data()) / norm);
            total += best;
            ++n;
        }
    }
    CHECK(n >= 900);
    CHECK(total / static_cast<double>(n) > 0.99);
}

TEST_CASE("run configuration is strict") {
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"pipeline", "oracle"}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"schema_version", 1}, {"colour", "red"}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"schema_version", 2}}), std::invalid_argument);
    CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"schema_version", 1}, {"tracker", {{"t_short", 40}}}}),
                    std::invalid_argument);
    const RunConfig c = run_config_from_json(nlohmann::json{{"schema_version", 1}, {"aggregation", "avg-pool"}});
    CHECK(c.aggregation == Aggregation::avg_pool);
    const RunConfig back = run_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
}

TEST_CASE("command line usage errors") {
    CHECK(run_cli({}) == 2);
    CHECK(run_cli({"eval", "--gt", "x.txt"}) == 2);
    CHECK(run_cli({"track", "--bogus"}) == 2);
    CHECK(run_cli({"eval", "--gt", "/nonexistent/gt.txt", "--pred", "/nonexistent/p.txt"}) == 1);
}

TEST_CASE("eval names the first misaligned frame") {
    TempDir dir;
    write_text(dir.path / "gt.txt", "1,1,0,0,5,5,1,-1,-1,-1\n2,1,0,0,5,5,1,-1,-1,-1\n");
    write_text(dir.path / "pred.txt", "1,1,0,0,5,5,1,-1,-1,-1\n5,1,0,0,5,5,1,-1,-1,-1\n");
    std::string out, err;
    CHECK(run_cli({"eval", "--gt", (dir.path / "gt.txt").string(), "--pred", (dir.path / "pred.txt").string()}, &out,
                  &err) == 1);
    CHECK(err.find("frame 5") != std::string::npos);
}

TEST_CASE("synth, track and eval from the command line") {
    TempDir dir;
    SceneConfig sc;
    sc.n_objects = 3;
    sc.frame_count = 20;
    sc.embedding_dim = 16;
    write_text(dir.path / "scene.json", to_json(sc).dump());
    write_text(dir.path / "run.json",
               nlohmann::json{{"schema_version", 1}, {"scene_file", "scene.json"}}.dump());
    const std::string gt = (dir.path / "gt.txt").string(), det = (dir.path / "det.txt").string(),
                      res = (dir.path / "res.txt").string();
    REQUIRE(run_cli({"synth", "--scene", (dir.path / "scene.json").string(), "--out-gt", gt, "--out-det", det}) == 0);
    REQUIRE(run_cli({"track", "--config", (dir.path / "run.json").string(), "--detections", det, "--out", res}) == 0);
    std::string report;
    REQUIRE(run_cli({"eval", "--gt", gt, "--pred", res}, &report) == 0);
    const auto j = nlohmann::json::parse(report);
    CHECK(j["IDSW"] == 0);
    CHECK(j["MOTA"].get<double>() > 0.95);

    // the synthetic route sees the same detections
    const std::string res2 = (dir.path / "res2.txt").string();
    REQUIRE(run_cli({"track", "--config", (dir.path / "run.json").string(), "--detections", "synthetic", "--out", res2}) == 0);
    CHECK(read_text(res) == read_text(res2));
}
