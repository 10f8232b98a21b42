#include "stmmot/memory.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "stmmot/errors.hpp"

namespace stmmot {

namespace {

void validate_state(const TrackState& s, const char* where) {
    if (s.embedding.rank() != 1) throw std::invalid_argument(std::string(where) + ": embedding must be rank 1");
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
        throw std::invalid_argument(std::string(where) + ": confidence outside [0, 1]");
    }
    if (!s.present) {
        const bool zero_box = s.box == Box{};
        const bool zero_emb = std::all_of(s.embedding.values().begin(), s.embedding.values().end(),
                                          [](double v) { return v == 0.0; });
        if (!zero_box || !zero_emb) {
            throw std::invalid_argument(std::string(where) + ": absent state must be zero-padded");
        }
    }
}

std::string id_string(TrackId id) { return std::to_string(id); }

}  // namespace

TrackState make_absent(std::size_t width, std::size_t frame_index) {
    return TrackState{Tensor({width}), Box{}, 0.0, frame_index, false};
}

MemoryBuffer::MemoryBuffer(std::size_t n_max, std::size_t t_max) : n_max_(n_max), t_max_(t_max) {
    if (n_max == 0 || t_max == 0) throw std::invalid_argument("MemoryBuffer: capacities must be positive");
}

std::optional<TrackId> MemoryBuffer::admit(TrackId id, TrackState initial) {
    if (contains(id)) throw std::invalid_argument("MemoryBuffer::admit: track " + id_string(id) + " already present");
    validate_state(initial, "MemoryBuffer::admit");
    std::optional<TrackId> evicted;
    if (order_.size() == n_max_) {
        evicted = order_.front();
        remove(*evicted);
    }
    order_.push_back(id);
    histories_[id].push_back(std::move(initial));
    return evicted;
}

void MemoryBuffer::append_frame(std::size_t frame_index, const std::map<TrackId, TrackState>& states) {
    for (const auto& [id, s] : states) {
        if (!contains(id)) throw std::out_of_range("MemoryBuffer::append_frame: unknown track " + id_string(id));
        validate_state(s, "MemoryBuffer::append_frame");
        if (s.frame_index != frame_index) {
            throw std::invalid_argument("MemoryBuffer::append_frame: state for track " + id_string(id) +
                                        " carries frame " + std::to_string(s.frame_index) + ", expected " +
                                        std::to_string(frame_index));
        }
    }
    for (TrackId id : order_) {
        const auto& q = histories_.at(id);
        if (q.back().frame_index + 1 != frame_index) {
            throw std::invalid_argument("MemoryBuffer::append_frame: track " + id_string(id) + " last saw frame " +
                                        std::to_string(q.back().frame_index) + ", cannot append frame " +
                                        std::to_string(frame_index));
        }
    }
    for (TrackId id : order_) {
        auto& q = histories_.at(id);
        const auto it = states.find(id);
        q.push_back(it != states.end() ? it->second : make_absent(q.back().embedding.size(), frame_index));
        while (q.size() > t_max_) q.pop_front();
    }
}

std::vector<TrackState> MemoryBuffer::window(TrackId id, std::size_t t) const {
    const auto& q = history(id);
    const std::size_t n = std::min(t, q.size());
    return {q.end() - static_cast<std::ptrdiff_t>(n), q.end()};
}

void MemoryBuffer::remove(TrackId id) {
    if (!contains(id)) throw std::out_of_range("MemoryBuffer::remove: unknown track " + id_string(id));
    histories_.erase(id);
    order_.erase(std::find(order_.begin(), order_.end(), id));
}

const std::deque<TrackState>& MemoryBuffer::history(TrackId id) const {
    const auto it = histories_.find(id);
    if (it == histories_.end()) throw std::out_of_range("MemoryBuffer: unknown track " + id_string(id));
    return it->second;
}

void MemoryBuffer::check_invariants() const {
    if (order_.size() > n_max_) throw InvariantError("MemoryBuffer: track count exceeds N_max");
    if (order_.size() != histories_.size()) throw InvariantError("MemoryBuffer: admission order out of sync");
    for (TrackId id : order_) {
        const auto it = histories_.find(id);
        if (it == histories_.end()) throw InvariantError("MemoryBuffer: ordered id without history");
        const auto& q = it->second;
        if (q.empty() || q.size() > t_max_) throw InvariantError("MemoryBuffer: queue length outside [1, T_max]");
        for (std::size_t i = 0; i < q.size(); ++i) {
            if (i > 0 && q[i].frame_index != q[i - 1].frame_index + 1) {
                throw InvariantError("MemoryBuffer: non-contiguous frames in track " + id_string(id));
            }
            if (!q[i].present && l2_norm(q[i].embedding.data()) != 0.0) {
                throw InvariantError("MemoryBuffer: absent state with nonzero embedding in track " + id_string(id));
            }
        }
    }
}

nlohmann::json MemoryBuffer::snapshot() const {
    nlohmann::json out = nlohmann::json::object();
    for (TrackId id : order_) {
        nlohmann::json states = nlohmann::json::array();
        for (const auto& s : histories_.at(id)) {
            states.push_back({{"frame", s.frame_index},
                              {"present", s.present},
                              {"box", s.box.as_array()},
                              {"confidence", s.confidence},
                              {"embedding", s.embedding.values()}});
        }
        out[id_string(id)] = std::move(states);
    }
    return out;
}

}  // namespace stmmot
