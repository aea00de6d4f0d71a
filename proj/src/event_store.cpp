#include "consensus_lens/event_store.hpp"

#include "consensus_lens/config.hpp"

namespace clens {

void query_filter::validate() const
{
    if (from_ms && to_ms && *from_ms > *to_ms)
        throw query_error("from_ms " + std::to_string(*from_ms) + " is after to_ms " + std::to_string(*to_ms));
}

bool query_filter::matches(const telemetry_event& ev) const
{
    if (from_ms && ev.ts_ms < *from_ms) return false;
    if (to_ms && ev.ts_ms > *to_ms) return false;
    if (kinds && !kinds->count(ev.kind)) return false;
    if (slot) {
        auto s = event_slot(ev);
        if (!s || *s != *slot) return false;
    }
    if (node && !references_node(ev, *node)) return false;
    return true;
}

json encode(const slot_snapshot& snap)
{
    json j;
    j["slot"] = snap.slot;
    j["roles"] = encode(snap.roles);
    j["topology"] = encode(snap.topology, 0);
    j["topology"].erase("max_iters");
    j["outcome"] = snap.outcome ? encode(*snap.outcome) : json(nullptr);
    json msgs = json::array();
    for (const auto& m : snap.messages) msgs.push_back(encode(m));
    j["messages"] = std::move(msgs);
    return j;
}

event_store::event_store(const std::filesystem::path& sink)
{
    sink_.emplace(sink, std::ios::out | std::ios::trunc);
    if (!*sink_) throw io_error("cannot open telemetry sink '" + sink.string() + "'");
}

void event_store::append(telemetry_event ev)
{
    auto line = to_jsonl(ev);
    {
        std::unique_lock lock(mutex_);
        if (closed_) throw ordering_error("append to a closed event store");
        if (!log_.empty() && !log_.back().event.precedes(ev))
            throw ordering_error("event (" + std::to_string(ev.ts_ms) + ", " + std::to_string(ev.seq) +
                                 ") does not follow (" + std::to_string(log_.back().event.ts_ms) + ", " +
                                 std::to_string(log_.back().event.seq) + ")");
        if (sink_) {
            *sink_ << line << '\n';
            sink_->flush();
            if (!*sink_) throw io_error("write to telemetry sink failed");
        }
        log_.push_back({std::move(ev), std::move(line)});
    }
    std::lock_guard wake(wait_mutex_);
    cv_.notify_all();
}

std::size_t event_store::size() const
{
    std::shared_lock lock(mutex_);
    return log_.size();
}

std::vector<telemetry_event> event_store::query(const query_filter& filter) const
{
    filter.validate();
    std::shared_lock lock(mutex_);
    std::vector<telemetry_event> out;
    for (const auto& e : log_)
        if (filter.matches(e.event)) out.push_back(e.event);
    return out;
}

std::vector<std::string> event_store::query_lines(const query_filter& filter) const
{
    filter.validate();
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& e : log_)
        if (filter.matches(e.event)) out.push_back(e.line);
    return out;
}

std::vector<std::string> event_store::lines(std::size_t from, std::size_t max) const
{
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (auto i = from; i < log_.size() && out.size() < max; ++i) out.push_back(log_[i].line);
    return out;
}

std::optional<telemetry_event> event_store::at(std::size_t index) const
{
    std::shared_lock lock(mutex_);
    if (index >= log_.size()) return std::nullopt;
    return log_[index].event;
}

slot_snapshot event_store::snapshot(slot_index slot) const
{
    std::shared_lock lock(mutex_);
    slot_snapshot snap;
    snap.slot = slot;
    bool have_roles = false;
    bool have_topology = false;
    for (const auto& e : log_) {
        auto s = event_slot(e.event);
        if (!s || *s != slot) continue;
        switch (e.event.kind) {
        case event_kind::role_assignment:
            snap.roles = decode_role_event(e.event.body);
            have_roles = true;
            break;
        case event_kind::topology:
            snap.topology = decode_topology(e.event.body);
            have_topology = true;
            break;
        case event_kind::slot_outcome: snap.outcome = decode_outcome(e.event.body); break;
        case event_kind::message: snap.messages.push_back(decode_message(e.event.body)); break;
        default: break;
        }
    }
    if (!have_roles || !have_topology) throw unknown_slot("slot " + std::to_string(slot) + " has not started");
    return snap;
}

std::size_t event_store::wait_for_more(std::size_t known, std::chrono::milliseconds timeout) const
{
    std::unique_lock lock(wait_mutex_);
    cv_.wait_for(lock, timeout, [&] { return size() > known || closed(); });
    return size();
}

void event_store::close()
{
    {
        std::unique_lock lock(mutex_);
        closed_ = true;
        if (sink_) sink_->flush();
    }
    std::lock_guard wake(wait_mutex_);
    cv_.notify_all();
}

bool event_store::closed() const
{
    std::shared_lock lock(mutex_);
    return closed_;
}

std::unique_ptr<event_store> event_store::load(const std::filesystem::path& jsonl)
{
    std::ifstream in(jsonl);
    if (!in) throw io_error("cannot read telemetry stream '" + jsonl.string() + "'");
    auto store = std::make_unique<event_store>();
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            store->append(parse_event(line));
        } catch (const schema_error& e) {
            throw schema_error("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    store->close();
    return store;
}

} // namespace clens
