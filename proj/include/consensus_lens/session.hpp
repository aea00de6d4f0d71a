#pragma once

#include "consensus_lens/event_store.hpp"
#include "consensus_lens/simulator.hpp"

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

namespace clens {

/// Malformed or out-of-range control request.
class control_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Request that is well formed but cannot apply in the current state.
class control_conflict : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class control_cmd { pause, resume, step_slot, kill_node, revive_node, set_latency_scale, speed };

std::string_view control_cmd_name(control_cmd c);

struct control_request {
    control_cmd cmd = control_cmd::pause;
    std::optional<std::uint32_t> target;
    std::optional<double> value;

    /// {"cmd": ..., "target"?: uint, "value"?: number}
    static control_request from_json(const json& j);
};

/// What the HTTP layer serves: a queryable history, an ordered stream for
/// push subscribers, status, and a control channel.
class session {
public:
    virtual ~session() = default;

    virtual const event_store& history() const = 0;
    virtual const event_store& stream() const = 0;
    virtual json meta() const = 0;
    /// Returns the updated meta document.
    virtual json control(const control_request& req) = 0;
};

/// Drives a simulation on its own thread, paced against the wall clock.
class live_session final : public session {
public:
    /// `speed` is simulated ms per wall-clock ms; 0 runs unpaced.
    live_session(sim_config cfg, std::optional<std::filesystem::path> sink, double speed, bool start_paused = false);
    ~live_session() override;

    void start();
    /// Blocks until the simulation has finished or stop() was called.
    void wait();
    void stop();

    const event_store& history() const override { return *store_; }
    const event_store& stream() const override { return *store_; }
    json meta() const override;
    json control(const control_request& req) override;

    bool finished() const;
    bool paused() const;
    std::optional<slot_index> current_slot() const;
    sim_stats stats() const;
    /// Simulated time as seen by the wall clock.
    std::int64_t clock_ms() const;

private:
    using wall_clock = std::chrono::steady_clock;

    void loop();
    std::int64_t clock_locked() const;
    void reanchor_locked();
    json meta_locked() const;

    std::unique_ptr<event_store> store_;
    simulation sim_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::thread thread_;
    bool paused_;
    bool stop_ = false;
    bool finished_ = false;
    double speed_;
    std::optional<slot_index> step_target_;
    std::int64_t anchor_sim_ = 0;
    wall_clock::time_point anchor_wall_;
};

/// Plays a recorded stream back to subscribers at its original pace
/// (scaled by `speed`). The whole recording stays queryable.
class replay_session final : public session {
public:
    replay_session(std::unique_ptr<event_store> recording, double speed);
    ~replay_session() override;

    void start();
    void wait();
    void stop();

    const event_store& history() const override { return *recording_; }
    const event_store& stream() const override { return stream_; }
    json meta() const override;
    json control(const control_request& req) override;

    bool finished() const;

private:
    using wall_clock = std::chrono::steady_clock;

    void loop();
    std::int64_t clock_locked() const;
    void reanchor_locked();
    json meta_locked() const;

    std::unique_ptr<event_store> recording_;
    event_store stream_;
    json config_;

    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::thread thread_;
    std::size_t played_ = 0;
    std::int64_t played_ts_ = 0;
    std::optional<slot_index> current_slot_;
    bool paused_ = false;
    bool stop_ = false;
    bool finished_ = false;
    double speed_;
    std::optional<slot_index> step_target_;
    std::int64_t anchor_sim_ = 0;
    wall_clock::time_point anchor_wall_;
};

/// Default pace when serving: one slot every two wall-clock seconds.
double default_serve_speed(const sim_config& cfg);

} // namespace clens
