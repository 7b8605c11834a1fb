#ifndef GRIDFLEX_SERVICE_API_HPP
#define GRIDFLEX_SERVICE_API_HPP

#include "gridflex/doms.hpp"
#include "gridflex/forecasting.hpp"
#include "gridflex/installation.hpp"
#include "gridflex/timeseries_store.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

namespace gridflex {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::string content_type;
};

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

int http_status(ErrorCode code);

/// Routes requests to the subsystems. Independent of any HTTP library so it
/// can be driven directly in tests.
class ApiHandler {
public:
    ApiHandler(const Installation& installation, TimeseriesStore& store, const ForecastingEngine& engine,
               const DomsService& doms);

    ApiResponse handle(const ApiRequest& request) const;

private:
    ApiResponse post_readings(const ApiRequest& r) const;
    ApiResponse get_forecast(const std::string& series, const ApiRequest& r) const;
    ApiResponse post_doms(const ApiRequest& r, bool whatif) const;
    ApiResponse get_topology() const;
    ApiResponse get_registry(const std::string& what, const ApiRequest& r) const;
    ApiResponse get_jobs(const ApiRequest& r) const;
    ApiResponse get_models() const;

    const Installation& installation_;
    TimeseriesStore& store_;
    const ForecastingEngine& engine_;
    const DomsService& doms_;
};

struct ServerOptions {
    std::string host = "0.0.0.0";
    int port = 8080;
    std::optional<std::filesystem::path> console_dir; // static bundle mounted at /
    std::function<void(const std::string&)> log;      // one JSON line per request
};

/// Serves the handler over HTTP/1.1 until stop_server() or process exit.
/// `on_ready` receives the bound port (useful with port 0).
void serve(const ApiHandler& handler, const ServerOptions& options, const std::function<void(int)>& on_ready = {});
void stop_server();

} // namespace gridflex

#endif // GRIDFLEX_SERVICE_API_HPP
