#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cql/clinical_mdp.hpp"
#include "cql/dataset.hpp"
#include "cql/trainer.hpp"

namespace cql {

/// Everything evaluation needs: online and target nets, optimizer state,
/// normalization, the action binner and an echo of the training config.
///
/// Binary layout (all integers u64 and floats f64, little-endian):
///   "CQN1"
///   input hidden actions
///   online net:  for layer in (trunk0, trunk1, value, advantage): weights row-major, biases
///   target generation, target net (same layout)
///   adam step, beta1, beta2, epsilon, first moments, second moments (same layout)
///   train step
///   feature count, means, stddevs
///   u8 has_binner [iv_q1 iv_q2 iv_q3 vp_q1 vp_q2 vp_q3 iv_count vp_count]
///   config text length, config text bytes
struct Checkpoint {
    TrainState state;
    NormStats norm;
    std::optional<QuartileBinner> binner;
    TrainConfig config;
};

inline constexpr char kCheckpointMagic[4] = {'C', 'Q', 'N', '1'};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError on bad magic, truncation or trailing bytes.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cql
