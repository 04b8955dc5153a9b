#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cql/tensor.hpp"

namespace cql {

/// Column-oriented minibatch of (s, a, r, s', done) transitions as consumed by
/// the network and loss code.
struct TransitionBatch {
    Matrix states;
    std::vector<int> actions;
    std::vector<double> rewards;
    Matrix next_states;
    std::vector<std::uint8_t> terminal;

    std::size_t size() const noexcept { return actions.size(); }
    bool empty() const noexcept { return actions.empty(); }

    // Throws DimensionError when the columns disagree in length.
    void validate(std::size_t num_actions) const;
};

}  // namespace cql
