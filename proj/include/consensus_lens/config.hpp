#pragma once

#include "consensus_lens/records.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace clens {

/// Bad value or unknown key in a scenario file (CLI exit code 2).
class config_error : public invalid_configuration {
public:
    using invalid_configuration::invalid_configuration;
};

/// Scenario file missing or unreadable (CLI exit code 3).
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct sim_config {
    std::size_t n = 1;
    std::uint64_t slots = 1;
    seed beacon_seed;
    std::size_t committee_size = 0;
    std::size_t k = 1;
    clens::quorum quorum;
    std::int64_t slot_duration_ms = 1000;
    double base_latency_ms = 20.0;
    double per_unit_distance_ms = 50.0;
    double bandwidth_bytes_per_ms = 1000.0;
    std::int64_t jitter_max_ms = 10;
    std::uint64_t proposal_payload_bytes = 4096;
    std::uint64_t vote_payload_bytes = 96;
    std::uint64_t aggregate_payload_bytes = 256;
    std::uint64_t vdf_iterations = 1000;
    std::size_t kmeans_max_iters = 50;
    std::vector<fault_command> faults;

    /// Defaults for everything except the three required fields;
    /// committee_size and k are derived from n.
    static sim_config with_defaults(std::size_t n, std::uint64_t slots, const seed& beacon);

    /// Throws config_error describing the first violated invariant.
    void validate() const;

    friend bool operator==(const sim_config&, const sim_config&) = default;
};

/// Parses a YAML (or JSON) scenario document. Unknown keys are rejected.
sim_config parse_config_text(const std::string& text);

/// Throws io_error when the file cannot be read, config_error otherwise.
sim_config parse_config(const std::filesystem::path& path);

} // namespace clens
