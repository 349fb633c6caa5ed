#ifndef AMENABLE_CHECKPOINT_HPP_
#define AMENABLE_CHECKPOINT_HPP_

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace amenable {

// Checkpoint file layout: [u32 LE header length][header JSON][f32 LE blob].
// Weights are stored as f32 in memory, so save/load round-trips bit-exactly.
void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      std::span<const float> weights);
std::pair<nlohmann::json, std::vector<float>> read_checkpoint(
    const std::string& path);

}  // namespace amenable

#endif  // AMENABLE_CHECKPOINT_HPP_
