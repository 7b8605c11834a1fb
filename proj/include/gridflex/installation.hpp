#ifndef GRIDFLEX_INSTALLATION_HPP
#define GRIDFLEX_INSTALLATION_HPP

#include "gridflex/flexibility.hpp"
#include "gridflex/forecasting.hpp"
#include "gridflex/grid_model.hpp"
#include "gridflex/registry.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace gridflex {

inline constexpr const char* kConfigSchema = "gridflex/config/v1";

struct GridSettings {
    double p_threshold = 0.5;
    double dead_band = 0.1;
    double default_relative_sd = 0.1;
    double reading_relative_sd = 0.01; // noise of live readings
    double residual_floor = 1e-9;
    double target_margin = 1e-7;
    int fit_days = 14;
};

/// A relational model declaration: either fixed coefficients or a structure
/// whose coefficients are fitted from history.
struct RelationalModelSpec {
    RelationalModel model; // child and parents always set
    bool fit = false;
    double ridge = 0.0;
};

/// Everything one configuration file declares.
struct Installation {
    std::string name;
    std::unique_ptr<Registry> registry = std::make_unique<Registry>();
    GridTopology topology;
    std::vector<OperationalRange> ranges;
    ControllableSet controllables;
    std::vector<RelationalModelSpec> relational;
    std::vector<ModelConfig> models;
    GridSettings settings;
    nlohmann::json scenario; // generator parameters, when present

    BuildOptions build_options() const { return {settings.default_relative_sd, settings.residual_floor}; }
    FlexOptions flex_options() const { return {settings.dead_band, settings.target_margin}; }
};

/// Parses the declarative configuration. Grid nodes, ranges and models refer
/// to entities and signals by name; series ids are resolved through the
/// registry the file itself populates.
Installation parse_installation(const nlohmann::json& config);
Installation load_installation(const std::filesystem::path& config_file);

/// Installation directory layout.
struct InstallationPaths {
    std::filesystem::path root;

    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path history() const { return root / "history.csv"; }
    std::filesystem::path store() const { return root / "store.sqlite"; }
};

} // namespace gridflex

#endif // GRIDFLEX_INSTALLATION_HPP
