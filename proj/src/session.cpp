#include "consensus_lens/session.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace clens {

std::string_view control_cmd_name(control_cmd c)
{
    switch (c) {
    case control_cmd::pause: return "pause";
    case control_cmd::resume: return "resume";
    case control_cmd::step_slot: return "step_slot";
    case control_cmd::kill_node: return "kill_node";
    case control_cmd::revive_node: return "revive_node";
    case control_cmd::set_latency_scale: return "set_latency_scale";
    case control_cmd::speed: return "speed";
    }
    return "unknown";
}

control_request control_request::from_json(const json& j)
{
    if (!j.is_object()) throw control_error("control body must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "cmd" && key != "target" && key != "value") throw control_error("unknown field '" + key + "'");
    auto it = j.find("cmd");
    if (it == j.end() || !it->is_string()) throw control_error("missing string field 'cmd'");

    control_request req;
    const auto name = it->get<std::string>();
    bool known = false;
    for (auto c : {control_cmd::pause, control_cmd::resume, control_cmd::step_slot, control_cmd::kill_node,
                   control_cmd::revive_node, control_cmd::set_latency_scale, control_cmd::speed}) {
        if (control_cmd_name(c) == name) {
            req.cmd = c;
            known = true;
        }
    }
    if (!known) throw control_error("unknown cmd '" + name + "'");

    if (auto t = j.find("target"); t != j.end() && !t->is_null()) {
        if (!t->is_number_integer() || t->get<std::int64_t>() < 0 || t->get<std::int64_t>() > UINT32_MAX)
            throw control_error("'target' must be a node index");
        req.target = t->get<std::uint32_t>();
    }
    if (auto v = j.find("value"); v != j.end() && !v->is_null()) {
        if (!v->is_number() || !std::isfinite(v->get<double>())) throw control_error("'value' must be a number");
        req.value = v->get<double>();
    }

    switch (req.cmd) {
    case control_cmd::kill_node:
    case control_cmd::revive_node:
        if (!req.target) throw control_error(name + " requires 'target'");
        break;
    case control_cmd::set_latency_scale:
    case control_cmd::speed:
        if (!req.value) throw control_error(name + " requires 'value'");
        if (*req.value < 0) throw control_error("'value' must be non-negative");
        break;
    default: break;
    }
    return req;
}

double default_serve_speed(const sim_config& cfg)
{
    return static_cast<double>(cfg.slot_duration_ms) / 2000.0;
}

namespace {

template <class Clock>
typename Clock::time_point due_at(typename Clock::time_point anchor_wall, std::int64_t anchor_sim, std::int64_t t,
                                  double speed)
{
    const double wall_ms = static_cast<double>(t - anchor_sim) / speed;
    return anchor_wall + std::chrono::duration_cast<typename Clock::duration>(
                             std::chrono::duration<double, std::milli>(wall_ms));
}

std::int64_t paced_clock(std::chrono::steady_clock::time_point anchor_wall, std::int64_t anchor_sim, double speed)
{
    const auto elapsed =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - anchor_wall).count();
    return anchor_sim + static_cast<std::int64_t>(std::floor(elapsed * speed));
}

} // namespace

// --- live -----------------------------------------------------------------

live_session::live_session(sim_config cfg, std::optional<std::filesystem::path> sink, double speed,
                           bool start_paused)
    : store_(sink ? std::make_unique<event_store>(*sink) : std::make_unique<event_store>()),
      sim_(std::move(cfg), [this](const telemetry_event& ev) { store_->append(ev); }), paused_(start_paused),
      speed_(speed)
{
    if (!(speed >= 0) || !std::isfinite(speed)) throw config_error("speed must be a non-negative number");
    anchor_wall_ = wall_clock::now();
}

live_session::~live_session()
{
    stop();
}

void live_session::start()
{
    std::lock_guard lock(mutex_);
    if (thread_.joinable()) return;
    anchor_wall_ = wall_clock::now();
    thread_ = std::thread([this] { loop(); });
}

void live_session::wait()
{
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return finished_ || stop_; });
}

void live_session::stop()
{
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    store_->close();
}

void live_session::loop()
{
    std::unique_lock lock(mutex_);
    try {
        while (!stop_ && !sim_.done()) {
            if (paused_ && !step_target_) {
                cv_.wait(lock);
                continue;
            }
            auto next = sim_.next_event_time();
            if (speed_ > 0 && next && !step_target_) {
                auto due = due_at<wall_clock>(anchor_wall_, anchor_sim_, *next, speed_);
                if (wall_clock::now() < due) {
                    cv_.wait_until(lock, due);
                    continue;
                }
            }
            auto ev = sim_.step();
            if (ev && step_target_ && ev->kind == sim_event_kind::slot_start && ev->slot >= *step_target_) {
                step_target_.reset();
                paused_ = true;
            }
            if (ev && ev->kind == sim_event_kind::slot_start) spdlog::debug("slot {} started at {} ms", ev->slot, ev->time_ms);
        }
    } catch (const std::exception& e) {
        spdlog::error("simulation aborted: {}", e.what());
    }
    store_->close();
    finished_ = true;
    spdlog::info("simulation finished: {} finalized, {} skipped", sim_.stats().finalized, sim_.stats().skipped);
    lock.unlock();
    cv_.notify_all();
}

std::int64_t live_session::clock_locked() const
{
    if (finished_ || paused_ || speed_ == 0) return sim_.now();
    auto t = std::max(sim_.now(), paced_clock(anchor_wall_, anchor_sim_, speed_));
    if (auto next = sim_.next_event_time()) t = std::min(t, *next);
    return t;
}

void live_session::reanchor_locked()
{
    anchor_sim_ = clock_locked();
    anchor_wall_ = wall_clock::now();
}

std::int64_t live_session::clock_ms() const
{
    std::lock_guard lock(mutex_);
    return clock_locked();
}

bool live_session::finished() const
{
    std::lock_guard lock(mutex_);
    return finished_;
}

bool live_session::paused() const
{
    std::lock_guard lock(mutex_);
    return paused_;
}

std::optional<slot_index> live_session::current_slot() const
{
    std::lock_guard lock(mutex_);
    return sim_.current_slot();
}

sim_stats live_session::stats() const
{
    std::lock_guard lock(mutex_);
    return sim_.stats();
}

json live_session::meta_locked() const
{
    json j;
    j["mode"] = "live";
    j["state"] = finished_ ? "finished" : (paused_ ? "paused" : "live");
    j["live"] = !finished_ && !paused_;
    j["paused"] = paused_;
    j["config"] = encode(sim_.config());
    auto cur = sim_.current_slot();
    j["current_slot"] = cur ? json(*cur) : json(nullptr);
    j["clock_ms"] = clock_locked();
    j["speed"] = speed_;
    j["events"] = store_->size();
    j["slots_finalized"] = sim_.stats().finalized;
    j["slots_skipped"] = sim_.stats().skipped;
    json dead = json::array();
    for (std::uint32_t i = 0; i < sim_.config().n; ++i)
        if (!sim_.is_live(node_id(i))) dead.push_back(i);
    j["dead_nodes"] = std::move(dead);
    return j;
}

json live_session::meta() const
{
    std::lock_guard lock(mutex_);
    return meta_locked();
}

json live_session::control(const control_request& req)
{
    std::unique_lock lock(mutex_);
    if (finished_ || stop_) throw control_conflict("simulation has finished");
    std::int64_t effective = clock_locked();
    switch (req.cmd) {
    case control_cmd::pause:
        if (!paused_) {
            reanchor_locked();
            paused_ = true;
        }
        step_target_.reset();
        break;
    case control_cmd::resume:
        step_target_.reset();
        if (paused_) {
            paused_ = false;
            reanchor_locked();
        }
        break;
    case control_cmd::step_slot: {
        auto cur = sim_.current_slot();
        step_target_ = cur ? *cur + 1 : 0;
        paused_ = true;
        break;
    }
    case control_cmd::kill_node:
    case control_cmd::revive_node:
    case control_cmd::set_latency_scale: {
        if (req.target && *req.target >= sim_.config().n)
            throw control_error("node " + std::to_string(*req.target) + " outside validator set");
        fault_command f;
        f.action = req.cmd == control_cmd::kill_node     ? fault_action::kill_node
                   : req.cmd == control_cmd::revive_node ? fault_action::revive_node
                                                         : fault_action::set_latency_scale;
        if (f.action == fault_action::set_latency_scale)
            f.scale = req.value;
        else
            f.target = node_id(*req.target);
        effective = sim_.inject(f, effective);
        break;
    }
    case control_cmd::speed:
        reanchor_locked();
        speed_ = *req.value;
        break;
    }
    spdlog::info("control: {} at {} ms", control_cmd_name(req.cmd), effective);
    auto out = meta_locked();
    out["effective_ms"] = effective;
    lock.unlock();
    cv_.notify_all();
    return out;
}

// --- replay ---------------------------------------------------------------

replay_session::replay_session(std::unique_ptr<event_store> recording, double speed)
    : recording_(std::move(recording)), speed_(speed)
{
    if (!(speed >= 0) || !std::isfinite(speed)) throw config_error("speed must be a non-negative number");
    if (auto first = recording_->at(0); first && first->kind == event_kind::counter && first->body.contains("config"))
        config_ = first->body["config"];
    if (auto first = recording_->at(0)) anchor_sim_ = played_ts_ = first->ts_ms;
    anchor_wall_ = wall_clock::now();
}

replay_session::~replay_session()
{
    stop();
}

void replay_session::start()
{
    std::lock_guard lock(mutex_);
    if (thread_.joinable()) return;
    anchor_wall_ = wall_clock::now();
    thread_ = std::thread([this] { loop(); });
}

void replay_session::wait()
{
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return finished_ || stop_; });
}

void replay_session::stop()
{
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable()) thread_.join();
    stream_.close();
}

void replay_session::loop()
{
    std::unique_lock lock(mutex_);
    const auto total = recording_->size();
    while (!stop_ && played_ < total) {
        if (paused_ && !step_target_) {
            cv_.wait(lock);
            continue;
        }
        auto ev = *recording_->at(played_);
        if (speed_ > 0 && !step_target_) {
            auto due = due_at<wall_clock>(anchor_wall_, anchor_sim_, ev.ts_ms, speed_);
            if (wall_clock::now() < due) {
                cv_.wait_until(lock, due);
                continue;
            }
        }
        stream_.append(ev);
        ++played_;
        played_ts_ = ev.ts_ms;
        if (ev.kind == event_kind::role_assignment) {
            current_slot_ = event_slot(ev);
            if (step_target_ && current_slot_ && *current_slot_ >= *step_target_) {
                step_target_.reset();
                paused_ = true;
            }
        }
    }
    stream_.close();
    finished_ = true;
    lock.unlock();
    cv_.notify_all();
}

std::int64_t replay_session::clock_locked() const
{
    if (finished_ || paused_ || speed_ == 0) return played_ts_;
    auto t = std::max(played_ts_, paced_clock(anchor_wall_, anchor_sim_, speed_));
    if (auto next = recording_->at(played_)) t = std::min(t, next->ts_ms);
    return t;
}

void replay_session::reanchor_locked()
{
    anchor_sim_ = clock_locked();
    anchor_wall_ = wall_clock::now();
}

bool replay_session::finished() const
{
    std::lock_guard lock(mutex_);
    return finished_;
}

json replay_session::meta_locked() const
{
    json j;
    j["mode"] = "replay";
    j["state"] = finished_ ? "finished" : (paused_ ? "paused" : "live");
    j["live"] = !finished_ && !paused_;
    j["paused"] = paused_;
    j["config"] = config_.is_null() ? json::object() : config_;
    j["current_slot"] = current_slot_ ? json(*current_slot_) : json(nullptr);
    j["clock_ms"] = clock_locked();
    j["speed"] = speed_;
    j["events"] = stream_.size();
    j["events_total"] = recording_->size();
    return j;
}

json replay_session::meta() const
{
    std::lock_guard lock(mutex_);
    return meta_locked();
}

json replay_session::control(const control_request& req)
{
    std::unique_lock lock(mutex_);
    switch (req.cmd) {
    case control_cmd::kill_node:
    case control_cmd::revive_node:
    case control_cmd::set_latency_scale:
        throw control_conflict("a recorded stream cannot take faults");
    default: break;
    }
    if (finished_ || stop_) throw control_conflict("playback has finished");
    const std::int64_t effective = clock_locked();
    switch (req.cmd) {
    case control_cmd::pause:
        if (!paused_) {
            reanchor_locked();
            paused_ = true;
        }
        step_target_.reset();
        break;
    case control_cmd::resume:
        step_target_.reset();
        if (paused_) {
            paused_ = false;
            reanchor_locked();
        }
        break;
    case control_cmd::step_slot:
        step_target_ = current_slot_ ? *current_slot_ + 1 : 0;
        paused_ = true;
        break;
    case control_cmd::speed:
        reanchor_locked();
        speed_ = *req.value;
        break;
    default: break;
    }
    auto out = meta_locked();
    out["effective_ms"] = effective;
    lock.unlock();
    cv_.notify_all();
    return out;
}

} // namespace clens
