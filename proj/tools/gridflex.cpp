#include "gridflex/doms.hpp"
#include "gridflex/installation.hpp"
#include "gridflex/scenario.hpp"
#include "gridflex/scheduler.hpp"
#include "gridflex/service_api.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>

using namespace gridflex;

namespace {

std::optional<std::string> env(const char* name)
{
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

// NAME:MAGNITUDE[:START:MINUTES]
Injection parse_injection(const ScenarioSpec& spec, const std::string& text)
{
    // the start timestamp contains colons, so split on the first and the last separators only
    const auto first = text.find(':');
    if (first == std::string::npos) throw Error(ErrorCode::invalid_parameter, "injection needs NAME:MAGNITUDE", {text});
    const auto name = text.substr(0, first);
    const auto rest = text.substr(first + 1);
    const auto second = rest.find(':');
    if (second == std::string::npos) return peak_injection(spec, name, std::stod(rest));
    const auto magnitude = std::stod(rest.substr(0, second));
    const auto tail = rest.substr(second + 1);
    const auto last = tail.rfind(':');
    if (last == std::string::npos) throw Error(ErrorCode::invalid_parameter, "injection needs START:MINUTES", {text});
    return Injection{name, parse_instant(tail.substr(0, last)), Minutes{std::stol(tail.substr(last + 1))}, magnitude};
}

struct Services {
    Installation installation;
    TimeseriesStore store;
    ForecastingEngine engine;
    DomsService doms;

    explicit Services(const std::filesystem::path& dir)
        : installation(load_installation(InstallationPaths{dir}.config())),
          store(*installation.registry, open_sqlite_storage(InstallationPaths{dir}.store().string())),
          engine(store, installation.models), doms(installation, store, engine)
    {
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Grid flexibility decision support and scheduled forecasting"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("generate", "Write a synthetic installation (config.json, history.csv)");
    std::string preset = "germany", out_dir;
    std::uint64_t seed = 1;
    int days = 28;
    std::vector<std::string> injections;
    gen->add_option("--preset", preset, "cyprus, switzerland or germany")
        ->check(CLI::IsMember({"cyprus", "switzerland", "germany"}));
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--days", days, "Days of history")->check(CLI::PositiveNumber);
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--inject", injections,
                    "Congestion event NAME:MAGNITUDE (evening peak of the last day) or NAME:MAGNITUDE:START:MINUTES");

    auto* run = app.add_subcommand("run", "Replay an installation on a simulated hourly clock");
    std::string run_dir = env("GRIDFLEX_DATA_DIR").value_or(""), report_file;
    int hours = 24;
    unsigned workers = 8;
    if (auto w = env("GRIDFLEX_WORKERS")) workers = static_cast<unsigned>(std::stoul(*w));
    run->add_option("--dir", run_dir, "Installation directory");
    run->add_option("--hours", hours, "Simulated hours")->check(CLI::NonNegativeNumber);
    run->add_option("--report", report_file, "Report file (stdout when omitted)");
    run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

    auto* srv = app.add_subcommand("serve", "Serve the HTTP API over an installation");
    std::string serve_dir = env("GRIDFLEX_DATA_DIR").value_or(""), console_dir, host = "0.0.0.0";
    int port = env("GRIDFLEX_PORT") ? std::stoi(*env("GRIDFLEX_PORT")) : 8080;
    srv->add_option("--dir", serve_dir, "Installation directory");
    srv->add_option("--port", port, "TCP port (0 picks a free one)");
    srv->add_option("--host", host, "Bind address");
    srv->add_option("--console", console_dir, "Static console bundle served at /");

    auto* dump = app.add_subcommand("dump-graph", "Print the information form of one horizon step as triplets");
    std::string dump_dir = env("GRIDFLEX_DATA_DIR").value_or(""), issue;
    int step = 0;
    dump->add_option("--dir", dump_dir, "Installation directory");
    dump->add_option("--issue-time", issue, "Issue time (RFC 3339)")->required();
    dump->add_option("--step", step, "Horizon step in [0, 95]");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            auto spec = preset_spec(preset);
            spec.seed = seed;
            spec.days = days;
            for (const auto& text : injections) spec.injections.push_back(parse_injection(spec, text));
            generate(spec, out_dir);
            std::cerr << "wrote " << out_dir << '\n';
        } else if (*run) {
            if (run_dir.empty()) throw Error(ErrorCode::invalid_parameter, "--dir or GRIDFLEX_DATA_DIR is required");
            const auto report = run_scenario(run_dir, RunOptions{hours, workers});
            if (report_file.empty()) {
                std::cout << report.dump(2) << '\n';
            } else {
                std::ofstream(report_file) << report.dump(2) << '\n';
                std::cerr << "score jobs " << report["jobs"]["score"]["succeeded"] << " ok, "
                          << report["jobs"]["score"]["failed"] << " failed; violations " << report["violations_total"]
                          << "; wall " << report["timing"]["wall_seconds"] << " s\n";
            }
        } else if (*srv) {
            if (serve_dir.empty()) throw Error(ErrorCode::invalid_parameter, "--dir or GRIDFLEX_DATA_DIR is required");
            Services s(serve_dir);
            const ApiHandler handler(s.installation, s.store, s.engine, s.doms);
            ServerOptions opts;
            opts.host = host;
            opts.port = port;
            if (!console_dir.empty()) opts.console_dir = console_dir;
            opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
            std::signal(SIGINT, [](int) { stop_server(); });
            std::signal(SIGTERM, [](int) { stop_server(); });
            serve(handler, opts, [&](int bound) { std::cerr << "listening on " << host << ':' << bound << '\n'; });
        } else if (*dump) {
            if (dump_dir.empty()) throw Error(ErrorCode::invalid_parameter, "--dir or GRIDFLEX_DATA_DIR is required");
            Services s(dump_dir);
            const auto graph = s.doms.step_graph(parse_instant(issue), step);
            write_information_triplets(std::cout, graph.graph);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what();
        for (const auto& s : e.subjects()) std::cerr << " [" << s << ']';
        std::cerr << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
