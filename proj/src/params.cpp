#include "stmmot/params.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace stmmot {

namespace {

std::string join(std::string_view prefix, std::string_view name) {
    std::string key(prefix);
    key += '.';
    key += name;
    return key;
}

}  // namespace

Tensor random_normal(Tensor::Shape shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

void ParamStore::put(const std::string& name, Tensor value) { tensors_.insert_or_assign(name, std::move(value)); }

const Tensor& ParamStore::get(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("ParamStore: missing parameter '" + name + "'");
    return it->second;
}

void ParamStore::save(const std::filesystem::path& path) const {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& [name, t] : tensors_) doc[name] = tensor_to_json(t);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write parameter file " + path.string());
    out << doc.dump() << '\n';
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read parameter file " + path.string());
    const nlohmann::json doc = nlohmann::json::parse(in);
    if (!doc.is_object()) throw std::invalid_argument("parameter file must hold a JSON object");
    ParamStore store;
    for (const auto& [name, value] : doc.items()) store.put(name, tensor_from_json(value));
    return store;
}

Ffn Ffn::random(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, double stddev) {
    return Ffn{random_normal({hidden, in}, stddev, rng), Tensor({hidden}), random_normal({out, hidden}, stddev, rng),
               Tensor({out})};
}

Ffn Ffn::identity(std::size_t width) {
    Ffn f{Tensor({2 * width, width}), Tensor({2 * width}), Tensor({width, 2 * width}), Tensor({width})};
    for (std::size_t i = 0; i < width; ++i) {
        f.w1(i, i) = 1.0;
        f.w1(width + i, i) = -1.0;
        f.w2(i, i) = 1.0;
        f.w2(i, width + i) = -1.0;
    }
    return f;
}

Tensor Ffn::forward(const Tensor& x) const { return linear(relu(linear(x, w1, &b1)), w2, &b2); }

void Ffn::save(ParamStore& store, std::string_view prefix) const {
    store.put(join(prefix, "w1"), w1);
    store.put(join(prefix, "b1"), b1);
    store.put(join(prefix, "w2"), w2);
    store.put(join(prefix, "b2"), b2);
}

Ffn Ffn::load(const ParamStore& store, std::string_view prefix) {
    return Ffn{store.get(join(prefix, "w1")), store.get(join(prefix, "b1")), store.get(join(prefix, "w2")),
               store.get(join(prefix, "b2"))};
}

LayerNormParams LayerNormParams::unit(std::size_t width) { return {Tensor({width}, 1.0), Tensor({width})}; }

Tensor LayerNormParams::forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

void LayerNormParams::save(ParamStore& store, std::string_view prefix) const {
    store.put(join(prefix, "gamma"), gamma);
    store.put(join(prefix, "beta"), beta);
}

LayerNormParams LayerNormParams::load(const ParamStore& store, std::string_view prefix) {
    return {store.get(join(prefix, "gamma")), store.get(join(prefix, "beta"))};
}

AttentionParams random_attention(std::size_t d_model, std::size_t n_heads, Rng& rng, double stddev) {
    AttentionParams p;
    p.d_model = d_model;
    p.n_heads = n_heads;
    p.w_q = random_normal({d_model, d_model}, stddev, rng);
    p.w_k = random_normal({d_model, d_model}, stddev, rng);
    p.w_v = random_normal({d_model, d_model}, stddev, rng);
    p.w_o = random_normal({d_model, d_model}, stddev, rng);
    p.validate();
    return p;
}

void save_attention(const AttentionParams& p, ParamStore& store, std::string_view prefix) {
    store.put(join(prefix, "w_q"), p.w_q);
    store.put(join(prefix, "w_k"), p.w_k);
    store.put(join(prefix, "w_v"), p.w_v);
    store.put(join(prefix, "w_o"), p.w_o);
    store.put(join(prefix, "config"), Tensor::vector({static_cast<double>(p.n_heads), p.logit_scale}));
    if (!p.sink_logits.empty()) store.put(join(prefix, "sink_logits"), Tensor::vector(p.sink_logits));
}

AttentionParams load_attention(const ParamStore& store, std::string_view prefix) {
    AttentionParams p;
    p.w_q = store.get(join(prefix, "w_q"));
    p.w_k = store.get(join(prefix, "w_k"));
    p.w_v = store.get(join(prefix, "w_v"));
    p.w_o = store.get(join(prefix, "w_o"));
    const Tensor& cfg = store.get(join(prefix, "config"));
    require_shape(cfg, {2}, "attention config");
    p.d_model = p.w_q.rank() == 2 ? p.w_q.dim(0) : 0;
    p.n_heads = static_cast<std::size_t>(cfg[0]);
    p.logit_scale = cfg[1];
    const std::string sink_key = join(prefix, "sink_logits");
    if (store.contains(sink_key)) p.sink_logits = store.get(sink_key).values();
    p.validate();
    return p;
}

}  // namespace stmmot
