#pragma once

#include "consensus_lens/telemetry.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace clens {

struct verify_report {
    std::size_t events = 0;
    std::size_t slots = 0;
    std::vector<std::string> violations; // first max_violations only
    std::size_t violation_count = 0;

    bool ok() const { return violation_count == 0; }
};

/// Replays a recorded JSONL stream against the protocol rules: sequence
/// continuity, schema, beacon chain, role election and topology
/// recomputation, routing, causality, vote counting, quorum, liveness and
/// message conservation.
verify_report verify_stream(std::span<const std::string> lines, std::size_t max_violations = 50);

/// Throws io_error when the file cannot be read.
verify_report verify_file(const std::filesystem::path& jsonl, std::size_t max_violations = 50);

} // namespace clens
