// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance <path to consensus-lens binary>

#include "consensus_lens/simulator.hpp"
#include "consensus_lens/verify.hpp"
#include "../unit/test_support.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

using namespace clens;
namespace fs = std::filesystem;

namespace {

struct failure {
    std::string what;
};

void expect(bool cond, const std::string& what)
{
    if (!cond) throw failure{what};
}

int failures = 0;

void criterion(const std::string& name, const std::function<std::string()>& body)
{
    std::string detail;
    bool ok = false;
    try {
        detail = body();
        ok = true;
    } catch (const failure& f) {
        detail = f.what;
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << std::endl;
}

std::string fmt_seconds(double s)
{
    std::ostringstream o;
    o.precision(3);
    o << s << " s";
    return o.str();
}

const sim_config& demo()
{
    static const sim_config cfg = test::demo_config(100);
    return cfg;
}

const std::vector<telemetry_event>& demo_events()
{
    static const std::vector<telemetry_event> events = run(demo());
    return events;
}

std::vector<std::string> lines_of(const std::vector<telemetry_event>& events)
{
    std::vector<std::string> out;
    for (const auto& e : events) out.push_back(to_jsonl(e));
    return out;
}

// --- criteria -------------------------------------------------------------

std::string replay_determinism()
{
    std::string streams[2];
    double secs[2];
    for (int i = 0; i < 2; ++i) {
        auto t0 = std::chrono::steady_clock::now();
        streams[i] = test::to_stream(run(demo()));
        secs[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    expect(!streams[0].empty(), "empty stream");
    expect(streams[0] == streams[1], "streams differ");
    expect(secs[0] < 5.0 && secs[1] < 5.0, "runtime " + fmt_seconds(std::max(secs[0], secs[1])) + " >= 5 s");
    return std::to_string(streams[0].size()) + " bytes, " + fmt_seconds(secs[0]) + " / " + fmt_seconds(secs[1]);
}

std::string local_view_consistency()
{
    const auto& cfg = demo();
    std::map<slot_index, role_event> roles;
    std::map<slot_index, topology_snapshot> topo;
    for (const auto& e : demo_events()) {
        if (e.kind == event_kind::role_assignment) {
            auto r = decode_role_event(e.body);
            roles.emplace(r.roles.slot, r);
        } else if (e.kind == event_kind::topology) {
            auto t = decode_topology(e.body);
            topo.emplace(t.slot, t);
        }
    }
    expect(roles.size() == cfg.slots && topo.size() == cfg.slots, "missing slots in stream");

    // Every node walks the beacon chain itself and derives the same view.
    std::vector<seed> beacon(cfg.n, cfg.beacon_seed);
    std::size_t checks = 0;
    for (slot_index s = 0; s < cfg.slots; ++s) {
        for (std::uint32_t node = 0; node < cfg.n; ++node) {
            beacon[node] = entropy_step(beacon[node], cfg.vdf_iterations).output;
            auto slot_seed = derive_slot_seed(beacon[node], s);
            auto r = elect_roles(slot_seed, test::node_range(cfg.n), cfg.committee_size, s);
            auto t = build_topology(slot_seed, s, cfg.n, cfg.k, cfg.kmeans_max_iters);
            expect(r == roles.at(s).roles, "node " + std::to_string(node) + " disagrees on roles in slot " + std::to_string(s));
            expect(t == topo.at(s), "node " + std::to_string(node) + " disagrees on topology in slot " + std::to_string(s));
            ++checks;
        }
    }
    return std::to_string(checks) + " independent recomputations";
}

std::string role_partition()
{
    std::size_t slots = 0;
    for (const auto& e : test::of_kind(demo_events(), event_kind::role_assignment)) {
        auto r = decode_role_event(e.body).roles;
        const auto tag = "slot " + std::to_string(r.slot);
        expect(r.committee.size() == 9, tag + ": committee size " + std::to_string(r.committee.size()));
        expect(r.validators.size() == 20, tag + ": validator count " + std::to_string(r.validators.size()));
        std::vector<bool> seen(30, false);
        auto mark = [&](node_id n) {
            expect(n.index < 30 && !seen[n.index], tag + ": node " + std::to_string(n.index) + " repeated");
            seen[n.index] = true;
        };
        mark(r.producer);
        for (auto n : r.committee) mark(n);
        for (auto n : r.validators) mark(n);
        expect(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }), tag + ": partition incomplete");
        ++slots;
    }
    expect(slots == 100, "expected 100 role assignments, saw " + std::to_string(slots));
    return "100 slots of 1 + 9 + 20";
}

std::string liveness()
{
    auto cfg = test::demo_config(200);
    std::mt19937_64 rng(20261016);
    std::bernoulli_distribution kill(0.2);
    std::set<slot_index> targeted;
    for (slot_index s = 0; s < cfg.slots; ++s) {
        if (!kill(rng)) continue;
        targeted.insert(s);
        auto producer = test::expected_roles(cfg, s).producer;
        const auto start = static_cast<std::int64_t>(s) * cfg.slot_duration_ms;
        // Alternate between dying before the slot and dying mid-slot.
        const auto at = targeted.size() % 2 ? start : start + 15;
        cfg.faults.push_back({at, fault_action::kill_node, producer, std::nullopt});
        cfg.faults.push_back({start + 500, fault_action::revive_node, producer, std::nullopt});
    }

    auto events = run(cfg);
    auto outcomes = test::outcomes_of(events);
    expect(outcomes.size() == 200, "saw " + std::to_string(outcomes.size()) + " outcomes");

    std::size_t finalized = 0, skipped = 0;
    std::vector<bool> seen(200, false);
    for (const auto& o : outcomes) {
        const auto s = o.outcome.slot;
        expect(s < 200 && !seen[s], "duplicate or out-of-range outcome for slot " + std::to_string(s));
        seen[s] = true;
        if (o.outcome.kind == outcome_kind::finalized) {
            ++finalized;
            expect(!targeted.count(s), "slot " + std::to_string(s) + " finalized with a dead producer");
            continue;
        }
        ++skipped;
        const bool dead_producer = targeted.count(s) > 0;
        const bool sub_quorum = o.outcome.vote_count < o.outcome.threshold;
        expect(dead_producer || sub_quorum, "slot " + std::to_string(s) + " skipped without cause");
        if (o.reason == skip_reason::producer_dead) expect(dead_producer, "producer_dead reported for a live producer");
    }
    expect(finalized + skipped == 200, "finalized + skipped != 200");
    expect(skipped == targeted.size(), "skips " + std::to_string(skipped) + " vs targeted " + std::to_string(targeted.size()));
    auto report = verify_stream(lines_of(events));
    expect(report.ok(), "stream fails verification: " + (report.violations.empty() ? "" : report.violations.front()));
    return std::to_string(finalized) + " finalized, " + std::to_string(skipped) + " skipped";
}

std::string quorum_boundary()
{
    std::size_t cases = 0;
    const auto digest = test::digest_of("boundary");
    std::vector<node_key> keys;
    for (std::uint32_t i = 0; i < 16; ++i) keys.push_back(derive_node_key(node_id(i)));
    for (auto q : {quorum{1, 2}, quorum{2, 3}, quorum{3, 4}}) {
        for (std::size_t c = 1; c <= 16; ++c) {
            // Smallest t with t/c >= num/den, found by scanning.
            std::size_t expected = 0;
            while (expected * q.denominator < q.numerator * c) ++expected;
            std::optional<std::size_t> flip;
            for (std::size_t v = 0; v <= c; ++v) {
                std::vector<vote> votes;
                for (std::uint32_t i = 0; i < v; ++i) votes.push_back(sign_vote(7, node_id(i), keys[i], digest));
                auto out = finalize_slot(7, digest, votes, c, q, 16);
                const bool fin = out.kind == outcome_kind::finalized;
                if (fin && !flip) flip = v;
                expect(fin == (v >= expected), "c=" + std::to_string(c) + " q=" + q.str() + " v=" + std::to_string(v));
                if (fin) expect(verify_aggregate(*out.aggregate, digest, keys), "aggregate does not verify");
                ++cases;
            }
            expect(flip == expected, "flip point off for c=" + std::to_string(c) + " q=" + q.str());
        }
    }
    return std::to_string(cases) + " cases";
}

std::string kmeans_oracle()
{
    // Desk instance frozen from the independent reference implementation.
    const std::vector<std::uint32_t> oracle_assignment{0, 1, 1, 1, 1};
    const std::vector<double> oracle_objectives{0.2667276329390974, 0.14693306077754678};
    const point2 oracle_c0(0.8984670355038019, 0.5581805363311019), oracle_c1(0.17145109040609902, 0.3347363769300508);

    auto points = embed_nodes(test::reference_seed(), test::node_range(5));
    auto res = kmeans_cluster(points, 2, test::reference_seed(), 50);
    expect(res.converged, "did not converge");
    expect(res.assignment == oracle_assignment, "assignment differs from oracle");
    expect(res.objectives == oracle_objectives, "objective sequence differs from oracle");
    expect(res.centroids[0] == oracle_c0 && res.centroids[1] == oracle_c1, "centroids differ from oracle");

    // Brute force over every 2-partition: the converged objective is optimal here.
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < 31; ++mask) {
        point2 sum[2] = {point2::Zero(), point2::Zero()};
        int count[2] = {0, 0};
        for (unsigned i = 0; i < 5; ++i) {
            int c = (mask >> i) & 1;
            sum[c] += points[i].pos;
            ++count[c];
        }
        double obj = 0;
        for (unsigned i = 0; i < 5; ++i) {
            int c = (mask >> i) & 1;
            obj += (points[i].pos - sum[c] / count[c]).squaredNorm();
        }
        best = std::min(best, obj);
    }
    expect(std::abs(res.objectives.back() - best) < 1e-12, "converged objective is not the partition optimum");

    std::size_t monotone = 0;
    for (const auto& e : test::of_kind(demo_events(), event_kind::topology)) {
        auto t = decode_topology(e.body);
        for (std::size_t i = 1; i < t.objectives.size(); ++i)
            expect(t.objectives[i] <= t.objectives[i - 1], "objective rose in slot " + std::to_string(t.slot));
        ++monotone;
    }
    expect(monotone == 100, "expected 100 topologies");
    return "oracle match, 100 monotone objective sequences";
}

std::string message_accounting()
{
    const auto& events = demo_events();
    const auto msgs = test::messages_of(events);
    const auto dropped = test::dropped_ids(events);
    std::map<slot_index, topology_snapshot> topo;
    std::map<slot_index, role_assignment> roles;
    for (const auto& e : events) {
        if (e.kind == event_kind::topology) {
            auto t = decode_topology(e.body);
            topo.emplace(t.slot, t);
        } else if (e.kind == event_kind::role_assignment) {
            auto r = decode_role_event(e.body);
            roles.emplace(r.roles.slot, r.roles);
        }
    }

    std::map<slot_index, std::vector<message_record>> by_slot;
    for (const auto& m : msgs) by_slot[m.slot].push_back(m);
    std::size_t hops_total = 0;
    for (slot_index s = 0; s < 100; ++s) {
        const auto tag = "slot " + std::to_string(s);
        const auto& r = roles.at(s);
        std::size_t proposals = 0, finals = 0;
        std::map<std::uint32_t, std::vector<std::pair<std::uint32_t, std::uint32_t>>> hops; // origin -> edges
        for (const auto& m : by_slot[s]) {
            if (dropped.count(m.id)) continue;
            switch (m.type) {
            case message_type::block_proposal: ++proposals; break;
            case message_type::final_broadcast: ++finals; break;
            case message_type::attestation:
                hops[m.src.index].emplace_back(m.src.index, m.dst.index);
                break;
            case message_type::attestation_forward:
                hops[m.origin->index].emplace_back(m.src.index, m.dst.index);
                break;
            }
        }
        expect(proposals == 9, tag + ": " + std::to_string(proposals) + " proposals delivered");
        expect(finals == 29, tag + ": " + std::to_string(finals) + " final broadcasts delivered");
        expect(hops.size() == r.committee.size(), tag + ": attestation origins differ from committee");
        for (auto member : r.committee) {
            auto path = route_attestation(member, r.producer, topo.at(s));
            std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
            for (std::size_t i = 1; i < path.size(); ++i) edges.emplace_back(path[i - 1].index, path[i].index);
            expect(hops[member.index] == edges, tag + ": hops of node " + std::to_string(member.index) + " differ from route");
            hops_total += edges.size();
        }
    }
    const auto sent = test::counter_value(events, "messages_sent");
    const auto delivered = test::counter_value(events, "messages_delivered");
    const auto lost = test::counter_value(events, "messages_dropped");
    expect(sent == static_cast<std::int64_t>(msgs.size()), "sent counter differs from message events");
    expect(sent == delivered + lost, "sent != delivered + dropped");
    return std::to_string(sent) + " sent, " + std::to_string(hops_total) + " attestation hops";
}

int run_cli(const std::string& cli, const std::string& args)
{
    const auto cmd = "'" + cli + "' " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status)) return -1;
    return WEXITSTATUS(status);
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines, std::size_t skip)
{
    std::ofstream out(p);
    for (std::size_t i = 0; i < lines.size(); ++i)
        if (i != skip) out << lines[i] << "\n";
}

std::vector<std::string> read_lines(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string verify_cli(const std::string& cli)
{
    const auto dir = fs::temp_directory_path() / ("clens-acceptance-" + std::to_string(::getpid()));
    fs::create_directories(dir);
    struct cleanup {
        fs::path d;
        ~cleanup() { fs::remove_all(d); }
    } guard{dir};

    const std::string seed_hex = test::reference_seed().hex();
    const auto demo_yaml = dir / "demo.yaml";
    std::ofstream(demo_yaml) << "n: 30\nslots: 100\nbeacon_seed: " << seed_hex << "\nk: 5\ncommittee_size: 9\n";
    const auto faulty_yaml = dir / "faulty.yaml";
    std::ofstream(faulty_yaml) << "n: 10\nslots: 6\nbeacon_seed: " << seed_hex
                               << "\nk: 3\njitter_max_ms: 40\nfaults:\n"
                                  "  - {at_ms: 0, action: kill_node, target: 9}\n"
                                  "  - {at_ms: 1003, action: kill_node, target: 2}\n"
                                  "  - {at_ms: 2500, action: revive_node, target: 2}\n"
                                  "  - {at_ms: 3000, action: set_latency_scale, scale: 4}\n"
                                  "  - {at_ms: 3020, action: kill_node, target: 5}\n";

    std::size_t deletions = 0;
    for (const auto& [name, yaml] : {std::pair{"demo", demo_yaml}, std::pair{"faulty", faulty_yaml}}) {
        const auto out = dir / (std::string(name) + ".jsonl");
        int rc = run_cli(cli, "run --config '" + yaml.string() + "' --out '" + out.string() + "'");
        expect(rc == 0, std::string(name) + ": run exited " + std::to_string(rc));
        rc = run_cli(cli, "verify --in '" + out.string() + "'");
        expect(rc == 0, std::string(name) + ": verify exited " + std::to_string(rc) + " on an untouched stream");

        const auto lines = read_lines(out);
        std::vector<std::size_t> victims;
        if (std::string(name) == "faulty") {
            for (std::size_t i = 0; i < lines.size(); ++i) victims.push_back(i); // every line
        } else {
            // One line of every event kind and counter name, plus an even spread.
            std::set<std::string> covered;
            for (std::size_t i = 0; i < lines.size(); ++i) {
                auto ev = parse_event(lines[i]);
                auto key = std::string(event_kind_name(ev.kind));
                if (ev.kind == event_kind::counter) key += ":" + ev.body["name"].get<std::string>();
                if (ev.kind == event_kind::message) key += ":" + ev.body["msg_type"].get<std::string>();
                if (covered.insert(key).second) victims.push_back(i);
            }
            for (std::size_t i = 0; i < lines.size(); i += lines.size() / 40) victims.push_back(i);
            victims.push_back(lines.size() - 1);
        }
        const auto cut = dir / "cut.jsonl";
        for (auto i : victims) {
            write_lines(cut, lines, i);
            rc = run_cli(cli, "verify --in '" + cut.string() + "'");
            expect(rc == 1, std::string(name) + ": removing line " + std::to_string(i + 1) + " gave exit " + std::to_string(rc));
            ++deletions;
        }
    }
    return std::to_string(deletions) + " single-line deletions rejected";
}

} // namespace

int main(int argc, char** argv)
{
    if (argc != 2) {
        std::cerr << "usage: acceptance <consensus-lens binary>\n";
        return 2;
    }
    const std::string cli = argv[1];

    criterion("replay_determinism", replay_determinism);
    criterion("local_view_consistency", local_view_consistency);
    criterion("role_partition", role_partition);
    criterion("liveness_skip_blocks", liveness);
    criterion("quorum_boundary", quorum_boundary);
    criterion("kmeans_oracle", kmeans_oracle);
    criterion("message_accounting", message_accounting);
    criterion("verify_cli", [&] { return verify_cli(cli); });

    std::cout << (failures ? "FAILED " : "ALL PASSED ") << failures << " failure(s)" << std::endl;
    return failures ? 1 : 0;
}
