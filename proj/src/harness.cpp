#include "stmmot/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include <nlohmann/json.hpp>

#include "stmmot/errors.hpp"

namespace stmmot {

namespace {

using nlohmann::json;

// ---- text helpers ----

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

double parse_number(std::string_view field, std::size_t line, const char* what) {
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || res.ec != std::errc() || res.ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw ParseError(line, std::string("bad ") + what + " '" + std::string(field) + "'");
    }
    return v;
}

std::int64_t parse_integral(std::string_view field, std::size_t line, const char* what) {
    const double v = parse_number(field, line, what);
    if (v != std::floor(v) || std::abs(v) > 9.0e15) {
        throw ParseError(line, std::string(what) + " '" + std::string(field) + "' is not an integer");
    }
    return static_cast<std::int64_t>(v);
}

void append_number(std::string& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

// ---- strict JSON helpers ----

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
    for (const auto& [k, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
            throw std::invalid_argument(where + ": unknown key '" + k + "'");
        }
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument(where + "." + key + ": " + e.what());
    }
}

void check_schema(const json& j, const std::string& where, bool required) {
    if (!j.contains("schema_version")) {
        if (required) throw std::invalid_argument(where + ": missing schema_version");
        return;
    }
    if (!j.at("schema_version").is_number_integer() || j.at("schema_version").get<int>() != 1) {
        throw std::invalid_argument(where + ": unsupported schema_version (expected 1)");
    }
}

json parse_json_file(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw std::runtime_error(path.string() + ": invalid JSON: " + e.what());
    }
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

bool occluded(const SceneConfig& cfg, TrackId id, std::size_t frame) {
    return std::any_of(cfg.occlusions.begin(), cfg.occlusions.end(), [&](const OcclusionEvent& o) {
        return o.object == id && frame >= o.start && frame < o.start + o.duration;
    });
}

}  // namespace

// ---- MOT-Challenge CSV ----

Sequence parse_mot(std::istream& in) {
    std::map<std::size_t, FrameAnnotations> frames;
    std::map<std::size_t, std::set<TrackId>> ids;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string_view line = trim(raw);
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() < 6) throw ParseError(line_no, "expected at least 6 comma-separated fields, got " + std::to_string(f.size()));
        const std::int64_t frame = parse_integral(f[0], line_no, "frame");
        if (frame < 1) throw ParseError(line_no, "frame must be >= 1");
        AnnotationRow row;
        row.id = parse_integral(f[1], line_no, "id");
        row.box = {parse_number(f[2], line_no, "bb_left"), parse_number(f[3], line_no, "bb_top"),
                   parse_number(f[4], line_no, "bb_width"), parse_number(f[5], line_no, "bb_height")};
        if (!(row.box.width > 0.0) || !(row.box.height > 0.0)) throw ParseError(line_no, "non-positive box width or height");
        if (f.size() > 6) {
            row.confidence = parse_number(f[6], line_no, "confidence");
            if (row.confidence < 0.0 || row.confidence > 1.0) throw ParseError(line_no, "confidence outside [0, 1]");
        }
        for (std::size_t i = 10; i < f.size(); ++i) row.embedding.push_back(parse_number(f[i], line_no, "embedding value"));
        const auto fr = static_cast<std::size_t>(frame);
        if (row.id >= 0 && !ids[fr].insert(row.id).second) {
            throw ParseError(line_no, "duplicate id " + std::to_string(row.id) + " in frame " + std::to_string(fr));
        }
        auto& fa = frames[fr];
        fa.frame = fr;
        fa.rows.push_back(std::move(row));
    }
    if (in.bad()) throw std::runtime_error("read error after line " + std::to_string(line_no));
    Sequence out;
    for (auto& [_, fa] : frames) out.push_back(std::move(fa));
    return out;
}

Sequence parse_mot_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return parse_mot(in);
    } catch (const ParseError& e) {
        throw ParseError(e.line(), path.string() + ": " + e.detail());
    }
}

std::string format_mot(const Sequence& seq) {
    std::vector<std::pair<std::size_t, const AnnotationRow*>> rows;
    for (const auto& f : seq)
        for (const auto& r : f.rows) rows.emplace_back(f.frame, &r);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
    });
    std::string out;
    char conf[32];
    for (const auto& [frame, r] : rows) {
        out += std::to_string(frame);
        out += ',';
        out += std::to_string(r->id);
        for (double v : {r->box.left, r->box.top, r->box.width, r->box.height}) {
            out += ',';
            append_number(out, v);
        }
        std::snprintf(conf, sizeof conf, ",%.6f", r->confidence);
        out += conf;
        out += ",-1,-1,-1";
        for (double v : r->embedding) {
            out += ',';
            append_number(out, v);
        }
        out += '\n';
    }
    return out;
}

void write_mot_results(const Sequence& seq, const std::filesystem::path& path) { write_text(path, format_mot(seq)); }

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::runtime_error("read error on " + path.string());
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write error on " + path.string());
}

// ---- synthetic scenes ----

void SceneConfig::validate() const {
    if (n_objects > embedding_dim) {
        throw std::invalid_argument("SceneConfig: " + std::to_string(n_objects) + " objects cannot have orthogonal " +
                                    std::to_string(embedding_dim) + "-d identity embeddings");
    }
    if (frame_count == 0) throw std::invalid_argument("SceneConfig: frame_count must be positive");
    if (!(image_width > 0.0 && image_height > 0.0)) throw std::invalid_argument("SceneConfig: image size must be positive");
    if (!(speed_min >= 0.0 && speed_max >= speed_min)) throw std::invalid_argument("SceneConfig: need 0 <= speed_min <= speed_max");
    if (!(box_width_min > 0.0 && box_width_max >= box_width_min && aspect > 0.0)) {
        throw std::invalid_argument("SceneConfig: need 0 < box_width_min <= box_width_max and aspect > 0");
    }
    if (box_width_max >= image_width || box_width_max * aspect >= image_height) {
        throw std::invalid_argument("SceneConfig: objects do not fit inside the image");
    }
    for (double s : {motion_noise, box_jitter, embedding_noise}) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument("SceneConfig: noise levels must be finite and >= 0");
    }
    if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw std::invalid_argument("SceneConfig: drop_prob must lie in [0, 1]");
    for (const auto& o : occlusions) {
        if (o.duration < 1) throw std::invalid_argument("SceneConfig: occlusion duration must be >= 1");
        if (o.object < 1 || static_cast<std::size_t>(o.object) > n_objects) {
            throw std::invalid_argument("SceneConfig: occlusion names unknown object " + std::to_string(o.object));
        }
        if (o.start < 1) throw std::invalid_argument("SceneConfig: occlusion start must be >= 1");
    }
}

SceneConfig scene_from_json(const json& j) {
    const std::string where = "scene";
    reject_unknown(j,
                   {"schema_version", "n_objects", "frame_count", "image_width", "image_height", "speed_min", "speed_max",
                    "box_width_min", "box_width_max", "aspect", "motion_noise", "occlusions", "box_jitter",
                    "embedding_noise", "drop_prob", "embedding_dim", "seed"},
                   where);
    check_schema(j, where, false);
    SceneConfig c;
    read(j, "n_objects", c.n_objects, where);
    read(j, "frame_count", c.frame_count, where);
    read(j, "image_width", c.image_width, where);
    read(j, "image_height", c.image_height, where);
    read(j, "speed_min", c.speed_min, where);
    read(j, "speed_max", c.speed_max, where);
    read(j, "box_width_min", c.box_width_min, where);
    read(j, "box_width_max", c.box_width_max, where);
    read(j, "aspect", c.aspect, where);
    read(j, "motion_noise", c.motion_noise, where);
    read(j, "box_jitter", c.box_jitter, where);
    read(j, "embedding_noise", c.embedding_noise, where);
    read(j, "drop_prob", c.drop_prob, where);
    read(j, "embedding_dim", c.embedding_dim, where);
    read(j, "seed", c.seed, where);
    if (j.contains("occlusions")) {
        if (!j.at("occlusions").is_array()) throw std::invalid_argument("scene.occlusions: expected an array");
        for (const auto& o : j.at("occlusions")) {
            reject_unknown(o, {"object", "start", "duration"}, "scene.occlusions[]");
            OcclusionEvent ev;
            read(o, "object", ev.object, "scene.occlusions[]");
            read(o, "start", ev.start, "scene.occlusions[]");
            read(o, "duration", ev.duration, "scene.occlusions[]");
            c.occlusions.push_back(ev);
        }
    }
    c.validate();
    return c;
}

json to_json(const SceneConfig& c) {
    json occ = json::array();
    for (const auto& o : c.occlusions) occ.push_back({{"object", o.object}, {"start", o.start}, {"duration", o.duration}});
    return {{"schema_version", 1},
            {"n_objects", c.n_objects},
            {"frame_count", c.frame_count},
            {"image_width", c.image_width},
            {"image_height", c.image_height},
            {"speed_min", c.speed_min},
            {"speed_max", c.speed_max},
            {"box_width_min", c.box_width_min},
            {"box_width_max", c.box_width_max},
            {"aspect", c.aspect},
            {"motion_noise", c.motion_noise},
            {"occlusions", occ},
            {"box_jitter", c.box_jitter},
            {"embedding_noise", c.embedding_noise},
            {"drop_prob", c.drop_prob},
            {"embedding_dim", c.embedding_dim},
            {"seed", c.seed}};
}

Scene generate_scene(const SceneConfig& cfg, Rng& rng) {
    cfg.validate();
    Scene scene;
    scene.config = cfg;
    const std::size_t d = cfg.embedding_dim;

    // Gram-Schmidt, applied twice for orthogonality at rounding level.
    std::vector<Tensor> basis;
    for (std::size_t i = 0; i < cfg.n_objects; ++i) {
        Tensor v;
        double norm = 0.0;
        do {
            v = random_normal({d}, 1.0, rng);
            for (int pass = 0; pass < 2; ++pass) {
                for (const auto& e : basis) v = v - dot(v.data(), e.data()) * e;
            }
            norm = l2_norm(v.data());
        } while (norm < 1e-6);
        v = (1.0 / norm) * v;
        basis.push_back(v);
        scene.embeddings.emplace(static_cast<TrackId>(i + 1), std::move(v));
    }

    struct Mover {
        double left, top, w, h, vx, vy;
    };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    std::vector<Mover> movers;
    for (std::size_t i = 0; i < cfg.n_objects; ++i) {
        Mover m{};
        m.w = uniform(cfg.box_width_min, cfg.box_width_max);
        m.h = cfg.aspect * m.w;
        m.left = uniform(0.0, cfg.image_width - m.w);
        m.top = uniform(0.0, cfg.image_height - m.h);
        const double speed = uniform(cfg.speed_min, cfg.speed_max);
        const double angle = uniform(0.0, 2.0 * std::numbers::pi);
        m.vx = speed * std::cos(angle);
        m.vy = speed * std::sin(angle);
        movers.push_back(m);
    }

    std::normal_distribution<double> jitter(0.0, 1.0);
    auto reflect = [](double& pos, double& vel, double hi) {
        if (pos < 0.0) {
            pos = -pos;
            vel = std::abs(vel);
        }
        if (pos > hi) {
            pos = 2.0 * hi - pos;
            vel = -std::abs(vel);
        }
        pos = std::clamp(pos, 0.0, hi);
    };
    for (std::size_t f = 1; f <= cfg.frame_count; ++f) {
        FrameAnnotations fa{f, {}};
        for (std::size_t i = 0; i < movers.size(); ++i) {
            const TrackId id = static_cast<TrackId>(i + 1);
            const Mover& m = movers[i];
            if (!occluded(cfg, id, f)) fa.rows.push_back({id, {m.left, m.top, m.w, m.h}, 1.0, {}});
        }
        if (!fa.rows.empty()) scene.gt.push_back(std::move(fa));
        for (auto& m : movers) {
            m.left += m.vx + cfg.motion_noise * jitter(rng);
            m.top += m.vy + cfg.motion_noise * jitter(rng);
            reflect(m.left, m.vx, cfg.image_width - m.w);
            reflect(m.top, m.vy, cfg.image_height - m.h);
        }
    }
    return scene;
}

Sequence oracle_detections(const Scene& scene, Rng& rng) {
    const SceneConfig& cfg = scene.config;
    const std::size_t d = cfg.embedding_dim;
    const double emb_std = cfg.embedding_noise / std::sqrt(static_cast<double>(d));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Sequence out;
    for (const auto& fa : scene.gt) {
        FrameAnnotations det{fa.frame, {}};
        for (const auto& row : fa.rows) {
            if (unit(rng) < cfg.drop_prob) continue;
            AnnotationRow r;
            r.id = -1;
            const double left = row.box.left + cfg.box_jitter * normal(rng);
            const double top = row.box.top + cfg.box_jitter * normal(rng);
            const double w = std::max(1.0, row.box.width + cfg.box_jitter * normal(rng));
            const double h = std::max(1.0, row.box.height + cfg.box_jitter * normal(rng));
            r.box = {left, top, w, h};
            const Tensor& e = scene.embeddings.at(row.id);
            r.embedding.resize(d);
            for (std::size_t c = 0; c < d; ++c) r.embedding[c] = e[c] + emb_std * normal(rng);
            r.confidence = round6(0.9 + 0.1 * unit(rng));
            det.rows.push_back(std::move(r));
        }
        std::shuffle(det.rows.begin(), det.rows.end(), rng);
        if (!det.rows.empty()) out.push_back(std::move(det));
    }
    return out;
}

std::vector<Proposal> to_proposals(const std::vector<AnnotationRow>& rows, const ImageSize& image,
                                   std::size_t embedding_dim) {
    std::vector<Proposal> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.embedding.size() != embedding_dim) {
            throw std::invalid_argument("detection row carries " + std::to_string(r.embedding.size()) +
                                        " embedding values, the model expects " + std::to_string(embedding_dim));
        }
        Box b = normalize(r.box, image);
        b = {std::clamp(b.cx, 0.0, 1.0), std::clamp(b.cy, 0.0, 1.0), std::clamp(b.w, 0.0, 1.0), std::clamp(b.h, 0.0, 1.0)};
        out.push_back({Tensor::vector(r.embedding), b, r.confidence});
    }
    return out;
}

// ---- learned-path features ----

SyntheticRenderer::SyntheticRenderer(const Scene& scene, std::size_t channels, std::size_t grid_h, std::size_t grid_w,
                                     Rng& rng)
    : scene_(scene),
      projection_(random_normal({channels, scene.config.embedding_dim}, 1.0 / std::sqrt(static_cast<double>(scene.config.embedding_dim)), rng)),
      grid_h_(grid_h),
      grid_w_(grid_w) {
    if (channels == 0 || grid_h == 0 || grid_w == 0) throw std::invalid_argument("SyntheticRenderer: empty feature grid");
}

Tensor SyntheticRenderer::features(std::size_t frame) const {
    if (frame < 1 || frame > frame_count()) throw std::out_of_range("SyntheticRenderer: frame " + std::to_string(frame));
    const std::size_t D = channels();
    Tensor out({D, grid_h_, grid_w_});
    const auto it = std::find_if(scene_.gt.begin(), scene_.gt.end(), [&](const FrameAnnotations& f) { return f.frame == frame; });
    if (it == scene_.gt.end()) return out;
    const double cell_w = scene_.config.image_width / static_cast<double>(grid_w_);
    const double cell_h = scene_.config.image_height / static_cast<double>(grid_h_);
    for (const auto& row : it->rows) {
        const Tensor code = take_row(linear(scene_.embeddings.at(row.id).reshaped({1, scene_.config.embedding_dim}), projection_), 0);
        for (std::size_t y = 0; y < grid_h_; ++y) {
            const double py = (static_cast<double>(y) + 0.5) * cell_h;
            if (py < row.box.top || py > row.box.top + row.box.height) continue;
            for (std::size_t x = 0; x < grid_w_; ++x) {
                const double px = (static_cast<double>(x) + 0.5) * cell_w;
                if (px < row.box.left || px > row.box.left + row.box.width) continue;
                for (std::size_t c = 0; c < D; ++c) out(c, y, x) += code[c];
            }
        }
    }
    return out;
}

// ---- run configuration ----

void RunConfig::validate() const {
    tracker.validate();
    losses.validate();
    scene.validate();
    if (pipeline != "oracle" && pipeline != "learned") {
        throw std::invalid_argument("RunConfig: pipeline must be 'oracle' or 'learned'");
    }
    if (model.kind != "identity" && model.kind != "random" && model.kind != "file") {
        throw std::invalid_argument("RunConfig: model.kind must be identity, random or file");
    }
    if (model.kind == "identity" && pipeline != "oracle") {
        throw std::invalid_argument("RunConfig: the identity model has no proposal network; use the oracle pipeline");
    }
    if (model.kind == "file" && model.path.empty()) throw std::invalid_argument("RunConfig: model.path is required");
    if (model.kind == "random") {
        if (model.dims.d_model % 4 != 0 || model.dims.d_model % model.dims.n_heads != 0) {
            throw std::invalid_argument("RunConfig: model.d_model must be divisible by 4 and by n_heads");
        }
        if (pipeline == "learned") {
            const std::size_t div = model.svp_levels > 0 ? std::size_t{1} << (model.svp_levels - 1) : 1;
            if (model.grid == 0 || model.grid % div != 0) {
                throw std::invalid_argument("RunConfig: model.grid must be divisible by 2^(svp_levels - 1)");
            }
        }
    }
    if (model.kind != "file" && pipeline == "oracle") {
        const std::size_t d = model.kind == "identity" ? scene.embedding_dim : model.dims.d_model;
        if (d != scene.embedding_dim) {
            throw std::invalid_argument("RunConfig: detection embeddings and model width differ");
        }
    }
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    reject_unknown(j, {"schema_version", "pipeline", "aggregation", "tracker", "losses", "model", "scene", "scene_file"},
                   "run config");
    check_schema(j, "run config", true);
    RunConfig c;
    read(j, "pipeline", c.pipeline, "run config");
    if (j.contains("aggregation")) c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    if (j.contains("tracker")) {
        const json& t = j.at("tracker");
        const std::string w = "tracker";
        reject_unknown(t, {"conf_threshold", "k_miss", "t_short", "t_long", "t_max", "n_max", "dup_iou", "birth_uniqueness"}, w);
        read(t, "conf_threshold", c.tracker.conf_threshold, w);
        read(t, "k_miss", c.tracker.k_miss, w);
        read(t, "t_short", c.tracker.t_short, w);
        read(t, "t_long", c.tracker.t_long, w);
        read(t, "t_max", c.tracker.t_max, w);
        read(t, "n_max", c.tracker.n_max, w);
        read(t, "dup_iou", c.tracker.dup_iou, w);
        read(t, "birth_uniqueness", c.tracker.birth_uniqueness, w);
    }
    if (j.contains("losses")) {
        const json& l = j.at("losses");
        const std::string w = "losses";
        reject_unknown(l, {"cls", "l1", "iou", "track", "det", "focal_alpha", "focal_gamma", "detach_aux"}, w);
        read(l, "cls", c.losses.cls, w);
        read(l, "l1", c.losses.l1, w);
        read(l, "iou", c.losses.iou, w);
        read(l, "track", c.losses.track, w);
        read(l, "det", c.losses.det, w);
        read(l, "focal_alpha", c.losses.focal_alpha, w);
        read(l, "focal_gamma", c.losses.focal_gamma, w);
        read(l, "detach_aux", c.losses.detach_aux, w);
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        const std::string w = "model";
        reject_unknown(m, {"kind", "path", "beta", "decoder_layers", "encoder_layers", "d_model", "n_heads", "ffn_hidden",
                           "feature_channels", "n_queries", "svp_levels", "pftls_per_level", "grid", "seed"},
                       w);
        read(m, "kind", c.model.kind, w);
        read(m, "path", c.model.path, w);
        read(m, "beta", c.model.beta, w);
        read(m, "decoder_layers", c.model.decoder_layers, w);
        c.model.dims.decoder_layers = c.model.decoder_layers;
        read(m, "encoder_layers", c.model.dims.encoder_layers, w);
        read(m, "d_model", c.model.dims.d_model, w);
        read(m, "n_heads", c.model.dims.n_heads, w);
        read(m, "ffn_hidden", c.model.dims.ffn_hidden, w);
        read(m, "feature_channels", c.model.dims.feature_channels, w);
        read(m, "n_queries", c.model.n_queries, w);
        read(m, "svp_levels", c.model.svp_levels, w);
        read(m, "pftls_per_level", c.model.pftls_per_level, w);
        read(m, "grid", c.model.grid, w);
        read(m, "seed", c.model.seed, w);
        if (!c.model.path.empty() && std::filesystem::path(c.model.path).is_relative() && !base_dir.empty()) {
            c.model.path = (base_dir / c.model.path).string();
        }
    }
    if (j.contains("scene") && j.contains("scene_file")) {
        throw std::invalid_argument("run config: give either scene or scene_file, not both");
    }
    if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
    if (j.contains("scene_file")) {
        std::filesystem::path p = j.at("scene_file").get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        c.scene = scene_from_json(parse_json_file(p));
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(parse_json_file(path), path.parent_path());
}

json to_json(const RunConfig& c) {
    return {{"schema_version", 1},
            {"pipeline", c.pipeline},
            {"aggregation", to_string(c.aggregation)},
            {"tracker",
             {{"conf_threshold", c.tracker.conf_threshold},
              {"k_miss", c.tracker.k_miss},
              {"t_short", c.tracker.t_short},
              {"t_long", c.tracker.t_long},
              {"t_max", c.tracker.t_max},
              {"n_max", c.tracker.n_max},
              {"dup_iou", c.tracker.dup_iou},
              {"birth_uniqueness", c.tracker.birth_uniqueness}}},
            {"losses",
             {{"cls", c.losses.cls},
              {"l1", c.losses.l1},
              {"iou", c.losses.iou},
              {"track", c.losses.track},
              {"det", c.losses.det},
              {"focal_alpha", c.losses.focal_alpha},
              {"focal_gamma", c.losses.focal_gamma},
              {"detach_aux", c.losses.detach_aux}}},
            {"model",
             {{"kind", c.model.kind},
              {"path", c.model.path},
              {"beta", c.model.beta},
              {"decoder_layers", c.model.decoder_layers},
              {"encoder_layers", c.model.dims.encoder_layers},
              {"d_model", c.model.dims.d_model},
              {"n_heads", c.model.dims.n_heads},
              {"ffn_hidden", c.model.dims.ffn_hidden},
              {"feature_channels", c.model.dims.feature_channels},
              {"n_queries", c.model.n_queries},
              {"svp_levels", c.model.svp_levels},
              {"pftls_per_level", c.model.pftls_per_level},
              {"grid", c.model.grid},
              {"seed", c.model.seed}}},
            {"scene", to_json(c.scene)}};
}

TrackerModel build_model(const RunConfig& cfg) {
    cfg.validate();
    TrackerModel m;
    if (cfg.model.kind == "identity") {
        m = identity_tracker_model(cfg.scene.embedding_dim, cfg.model.beta, cfg.model.decoder_layers);
    } else if (cfg.model.kind == "random") {
        Rng rng(cfg.model.seed);
        m = random_tracker_model(cfg.model.dims, cfg.model.n_queries, cfg.model.svp_levels, cfg.model.pftls_per_level, rng);
    } else {
        m = TrackerModel::load(ParamStore::load(cfg.model.path));
    }
    m.blocks.t_short = cfg.tracker.t_short;
    m.blocks.t_long = cfg.tracker.t_long;
    m.blocks.strategy = cfg.aggregation;
    m.validate();
    return m;
}

std::vector<AnnotationRow> to_rows(const std::vector<TrackOutput>& outputs, const ImageSize& image) {
    std::vector<AnnotationRow> rows;
    for (const auto& o : outputs) rows.push_back({o.id, denormalize(o.box, image), o.confidence, {}});
    return rows;
}

Sequence track_detections(const Sequence& detections, std::size_t frame_count, const RunConfig& cfg,
                          const TrackerModel& model) {
    std::map<std::size_t, const FrameAnnotations*> by_frame;
    for (const auto& f : detections) {
        if (f.frame < 1) throw std::invalid_argument("track_detections: frames are 1-based");
        by_frame[f.frame] = &f;
    }
    const std::size_t last = std::max(frame_count, by_frame.empty() ? std::size_t{0} : by_frame.rbegin()->first);
    const ImageSize image = cfg.scene.image();
    TrackerState state(cfg.tracker);
    Sequence out;
    const std::vector<AnnotationRow> none;
    for (std::size_t f = 1; f <= last; ++f) {
        const auto it = by_frame.find(f);
        const auto props = to_proposals(it == by_frame.end() ? none : it->second->rows, image, model.width());
        const StepResult r = step(props, state, cfg.tracker, model);
        if (!r.outputs.empty()) out.push_back({f, to_rows(r.outputs, image)});
    }
    return out;
}

Sequence track_features(const FeatureSource& source, const RunConfig& cfg, const TrackerModel& model) {
    const ImageSize image = cfg.scene.image();
    TrackerState state(cfg.tracker);
    Sequence out;
    Tensor previous;
    for (std::size_t f = 1; f <= source.frame_count(); ++f) {
        Tensor current = source.features(f);
        const StepResult r = step_features(current, f > 1 ? &previous : nullptr, state, cfg.tracker, model);
        if (!r.outputs.empty()) out.push_back({f, to_rows(r.outputs, image)});
        previous = std::move(current);
    }
    return out;
}

Sequence track_synthetic(const RunConfig& cfg, const TrackerModel& model) {
    Rng rng(cfg.scene.seed);
    const Scene scene = generate_scene(cfg.scene, rng);
    if (cfg.pipeline == "oracle") return track_detections(oracle_detections(scene, rng), cfg.scene.frame_count, cfg, model);
    if (!model.cpn) throw std::invalid_argument("track_synthetic: the learned pipeline needs a proposal network");
    const SyntheticRenderer renderer(scene, model.cpn->input_w.dim(1), cfg.model.grid, cfg.model.grid, rng);
    return track_features(renderer, cfg, model);
}

}  // namespace stmmot
