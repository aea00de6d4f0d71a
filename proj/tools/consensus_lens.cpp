// consensus-lens: run, replay and verify consensus simulations.

#include "consensus_lens/config.hpp"
#include "consensus_lens/http_service.hpp"
#include "consensus_lens/session.hpp"
#include "consensus_lens/verify.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <iostream>

namespace {

using namespace clens;

enum exit_code : int { ok = 0, invariant_violation = 1, config_failure = 2, io_failure = 3 };

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("consensus-lens");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("CONSENSUS_LENS_LOG"); env && *env) {
        auto level = spdlog::level::from_str(env);
        // from_str maps unknown names to "off".
        if (level == spdlog::level::off && std::string_view(env) != "off")
            spdlog::warn("ignoring unknown CONSENSUS_LENS_LOG level '{}'", env);
        else
            spdlog::set_level(level);
    }
}

sigset_t shutdown_signals()
{
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    return set;
}

/// Polls for SIGINT/SIGTERM; true once one has arrived.
bool interrupted(std::chrono::milliseconds wait)
{
    auto set = shutdown_signals();
    timespec ts{static_cast<time_t>(wait.count() / 1000), static_cast<long>((wait.count() % 1000) * 1000000)};
    return sigtimedwait(&set, nullptr, &ts) > 0;
}

int report_verification(const std::vector<std::string>& lines)
{
    auto report = verify_stream(lines);
    if (report.ok()) return ok;
    for (const auto& v : report.violations) spdlog::error("invariant violated: {}", v);
    spdlog::error("{} invariant violation(s)", report.violation_count);
    return invariant_violation;
}

struct run_options {
    std::string config;
    std::string out;
    std::string serve;
    double speed = -1;
};

int cmd_run(const run_options& opt)
{
    auto cfg = parse_config(opt.config);
    const bool serving = !opt.serve.empty();
    std::optional<endpoint> where;
    if (serving) where = parse_endpoint(opt.serve);
    const double speed = opt.speed >= 0 ? opt.speed : (serving ? default_serve_speed(cfg) : 0.0);

    std::optional<std::filesystem::path> sink;
    if (!opt.out.empty()) sink = opt.out;
    live_session session(cfg, sink, speed);
    std::optional<http_service> service;
    if (where) {
        service.emplace(session, *where);
        service->start();
    }
    spdlog::info("running {} slots over {} nodes (speed {})", cfg.slots, cfg.n, speed);
    session.start();

    bool stopped = false;
    while (!session.finished()) {
        if (interrupted(std::chrono::milliseconds(100))) {
            spdlog::info("interrupted; stopping simulation");
            stopped = true;
            break;
        }
    }
    if (serving && !stopped) {
        spdlog::info("run complete; still serving, press Ctrl-C to exit");
        while (!interrupted(std::chrono::milliseconds(500))) {
        }
    }
    if (service) service->stop();
    session.stop();

    auto st = session.stats();
    std::cout << "slots finalized " << st.finalized << ", skipped " << st.skipped << "; messages sent "
              << st.messages_sent << ", delivered " << st.messages_delivered << ", dropped " << st.messages_dropped
              << ", late votes " << st.late_votes << "\n";
    if (stopped) return ok;
    return report_verification(session.stream().lines(0));
}

int cmd_replay(const std::string& in, const std::string& serve, double speed_opt)
{
    auto where = parse_endpoint(serve);
    std::unique_ptr<event_store> recording;
    try {
        recording = event_store::load(in);
    } catch (const io_error&) {
        throw;
    } catch (const std::exception& e) {
        throw io_error("cannot replay '" + in + "': " + e.what());
    }
    double speed = speed_opt;
    if (speed < 0) {
        speed = 0.5;
        if (auto first = recording->at(0); first && first->body.contains("config"))
            speed = static_cast<double>(first->body["config"].value("slot_duration_ms", 1000)) / 2000.0;
    }
    spdlog::info("replaying {} events (speed {})", recording->size(), speed);
    replay_session session(std::move(recording), speed);
    http_service service(session, where);
    service.start();
    session.start();
    while (!interrupted(std::chrono::milliseconds(500))) {
    }
    service.stop();
    session.stop();
    return ok;
}

int cmd_verify(const std::string& in, std::size_t max_violations)
{
    auto report = verify_file(in, max_violations);
    if (report.ok()) {
        std::cout << "OK: " << report.events << " events, " << report.slots << " slots\n";
        return ok;
    }
    for (const auto& v : report.violations) std::cout << "violation: " << v << "\n";
    if (report.violation_count > report.violations.size())
        std::cout << "... " << report.violation_count - report.violations.size() << " more\n";
    std::cout << "FAILED: " << report.violation_count << " violation(s) in " << report.events << " events\n";
    return invariant_violation;
}

} // namespace

int main(int argc, char** argv)
{
    setup_logging();
    // Threads inherit the mask; the main thread collects the signals.
    auto signals = shutdown_signals();
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    CLI::App app{"Simulate, serve and verify committee-based consensus runs."};
    app.name("consensus-lens");
    app.require_subcommand(1);

    run_options run_opt;
    auto* run = app.add_subcommand("run", "Simulate a scenario");
    run->add_option("--config", run_opt.config, "Scenario file (YAML or JSON)")->required();
    run->add_option("--out", run_opt.out, "Write telemetry as JSONL");
    run->add_option("--serve", run_opt.serve, "Serve the HTTP/WebSocket API on addr:port");
    run->add_option("--speed", run_opt.speed, "Simulated ms per wall-clock ms (0 = unpaced)")
        ->check(CLI::NonNegativeNumber);

    std::string replay_in, replay_serve;
    double replay_speed = -1;
    auto* replay = app.add_subcommand("replay", "Serve a recorded JSONL stream");
    replay->add_option("--in", replay_in, "Recorded JSONL")->required();
    replay->add_option("--serve", replay_serve, "addr:port")->required();
    replay->add_option("--speed", replay_speed, "Playback speed (0 = immediate)")->check(CLI::NonNegativeNumber);

    std::string verify_in;
    std::size_t max_violations = 20;
    auto* verify = app.add_subcommand("verify", "Check a recorded JSONL stream against the protocol invariants");
    verify->add_option("--in", verify_in, "Recorded JSONL")->required();
    verify->add_option("--max-violations", max_violations, "Violations to list")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : config_failure;
    }

    try {
        if (*run) return cmd_run(run_opt);
        if (*replay) return cmd_replay(replay_in, replay_serve, replay_speed);
        if (*verify) return cmd_verify(verify_in, max_violations);
    } catch (const config_error& e) {
        spdlog::error("configuration error: {}", e.what());
        return config_failure;
    } catch (const io_error& e) {
        spdlog::error("I/O error: {}", e.what());
        return io_failure;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return invariant_violation;
    }
    return ok;
}
