#include "gridflex/service_api.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <mutex>

namespace gridflex {

namespace {

std::mutex server_mutex;
httplib::Server* active_server = nullptr;

} // namespace

void serve(const ApiHandler& handler, const ServerOptions& options, const std::function<void(int)>& on_ready)
{
    httplib::Server server;

    auto dispatch = [&handler, &options](const httplib::Request& req, httplib::Response& res) {
        const auto started = std::chrono::steady_clock::now();
        ApiRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query.emplace(k, v);
        r.body = req.body;
        r.content_type = req.get_header_value("Content-Type");
        const auto out = handler.handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
        if (options.log) {
            const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - started;
            nlohmann::json line{{"ts", format_instant(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()))},
                                {"method", req.method},
                                {"path", req.path},
                                {"status", out.status},
                                {"duration_ms", elapsed.count()},
                                {"remote", req.remote_addr}};
            options.log(line.dump());
        }
    };
    server.Get(R"(/api/.*)", dispatch);
    server.Post(R"(/api/.*)", dispatch);

    if (options.console_dir && std::filesystem::is_directory(*options.console_dir))
        server.set_mount_point("/", options.console_dir->string());

    int port = options.port;
    if (port == 0) {
        port = server.bind_to_any_port(options.host);
    } else if (!server.bind_to_port(options.host, port)) {
        throw Error(ErrorCode::invalid_config, "cannot bind port " + std::to_string(port), {std::to_string(port)});
    }
    if (port < 0) throw Error(ErrorCode::invalid_config, "cannot bind any port");
    {
        std::lock_guard lock(server_mutex);
        active_server = &server;
    }
    if (on_ready) on_ready(port);
    server.listen_after_bind();
    std::lock_guard lock(server_mutex);
    active_server = nullptr;
}

void stop_server()
{
    std::lock_guard lock(server_mutex);
    if (active_server) active_server->stop();
}

} // namespace gridflex
