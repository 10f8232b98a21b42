#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>

#include "stmmot/attention.hpp"
#include "stmmot/tensor.hpp"

namespace stmmot {

/// The single random engine type used everywhere; seeded once per run.
using Rng = std::mt19937_64;

/// Normal(0, stddev) entries.
Tensor random_normal(Tensor::Shape shape, double stddev, Rng& rng);

/// Named tensors, serialized as one JSON object `{name: {shape, data}}`.
class ParamStore {
public:
    void put(const std::string& name, Tensor value);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.contains(name); }
    std::size_t size() const noexcept { return tensors_.size(); }
    const std::map<std::string, Tensor>& tensors() const noexcept { return tensors_; }

    void save(const std::filesystem::path& path) const;
    static ParamStore load(const std::filesystem::path& path);

private:
    std::map<std::string, Tensor> tensors_;
};

/// Two-layer perceptron `w2 relu(w1 x + b1) + b2`.
struct Ffn {
    Tensor w1, b1, w2, b2;

    static Ffn random(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, double stddev = 0.02);
    /// Exact identity for any input: hidden = 2*width, w1 = [I; -I], w2 = [I, -I].
    static Ffn identity(std::size_t width);

    std::size_t in_width() const { return w1.dim(1); }
    std::size_t out_width() const { return w2.dim(0); }
    Tensor forward(const Tensor& x) const;

    void save(ParamStore& store, std::string_view prefix) const;
    static Ffn load(const ParamStore& store, std::string_view prefix);
};

struct LayerNormParams {
    Tensor gamma, beta;

    static LayerNormParams unit(std::size_t width);
    Tensor forward(const Tensor& x) const;

    void save(ParamStore& store, std::string_view prefix) const;
    static LayerNormParams load(const ParamStore& store, std::string_view prefix);
};

AttentionParams random_attention(std::size_t d_model, std::size_t n_heads, Rng& rng, double stddev = 0.02);
void save_attention(const AttentionParams& p, ParamStore& store, std::string_view prefix);
AttentionParams load_attention(const ParamStore& store, std::string_view prefix);

}  // namespace stmmot
