#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stmmot/box.hpp"
#include "stmmot/tensor.hpp"

namespace stmmot {

using TrackId = std::int64_t;

/// One time step of a tracked object.
struct TrackState {
    Tensor embedding;  ///< [d]; all zero when absent
    Box box;           ///< normalized; all zero when absent
    double confidence = 0.0;
    std::size_t frame_index = 0;
    bool present = false;
};

/// Zero-padded placeholder for a frame in which the object was not observed.
TrackState make_absent(std::size_t width, std::size_t frame_index);

/// Per-track FIFO histories, at most `n_max` tracks of at most `t_max` states.
///
/// Plain value type: copying a buffer snapshots it, and mutating the copy
/// leaves the original untouched.
class MemoryBuffer {
public:
    MemoryBuffer(std::size_t n_max = 350, std::size_t t_max = 30);

    /// Adds a track whose history starts with `initial`. When the buffer is
    /// full the oldest-admitted track is evicted first and its id returned.
    std::optional<TrackId> admit(TrackId id, TrackState initial);

    /// Appends frame `frame_index` to every live track. Tracks missing from
    /// `states` receive an absent state. Every live track's last frame must
    /// be `frame_index - 1`.
    void append_frame(std::size_t frame_index, const std::map<TrackId, TrackState>& states);

    /// Up to the last `t` states of a track, oldest first.
    std::vector<TrackState> window(TrackId id, std::size_t t) const;

    void remove(TrackId id);

    bool contains(TrackId id) const { return histories_.contains(id); }
    std::size_t size() const noexcept { return order_.size(); }
    bool empty() const noexcept { return order_.empty(); }
    std::size_t n_max() const noexcept { return n_max_; }
    std::size_t t_max() const noexcept { return t_max_; }

    /// Live ids in admission order.
    const std::vector<TrackId>& track_ids() const noexcept { return order_; }
    const std::deque<TrackState>& history(TrackId id) const;

    /// Throws InvariantError if capacity, horizon, contiguity or padding rules are broken.
    void check_invariants() const;

    /// `{ "<id>": [{frame, present, box, confidence, embedding}, ...] }`
    nlohmann::json snapshot() const;

private:
    std::size_t n_max_;
    std::size_t t_max_;
    std::vector<TrackId> order_;
    std::map<TrackId, std::deque<TrackState>> histories_;
};

}  // namespace stmmot
