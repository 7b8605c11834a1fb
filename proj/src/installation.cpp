#include "gridflex/installation.hpp"

#include <fstream>
#include <map>

namespace gridflex {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& message, std::vector<std::string> subjects = {})
{
    throw Error(ErrorCode::invalid_config, message, std::move(subjects));
}

std::string series_of(const Registry& reg, const std::string& signal_name, const std::string& entity_name)
{
    const auto sig = reg.signal_by_name(signal_name);
    if (!sig) bad("unknown signal", {signal_name});
    const auto ent = reg.entity_by_name(entity_name);
    if (!ent) bad("unknown entity", {entity_name});
    const auto ts = reg.series_for(*sig, *ent);
    if (!ts) bad("no series declared for signal at entity", {signal_name, entity_name});
    return *ts;
}

std::string series_ref(const Registry& reg, const json& ref)
{
    if (ref.is_object()) return series_of(reg, ref.at("signal").get<std::string>(), ref.at("entity").get<std::string>());
    // bare string: an already-resolved series id
    const auto id = ref.get<std::string>();
    if (!reg.series(id)) bad("unknown series", {id});
    return id;
}

void register_entities(Registry& reg, const json& entities)
{
    std::vector<const json*> pending;
    for (const auto& e : entities) pending.push_back(&e);
    while (!pending.empty()) {
        std::vector<const json*> next;
        for (const auto* e : pending) {
            const auto name = e->at("name").get<std::string>();
            const auto kind = parse_entity_kind(e->value("kind", std::string("other")));
            std::optional<std::string> parent;
            if (e->contains("parent") && !e->at("parent").is_null()) {
                const auto parent_name = e->at("parent").get<std::string>();
                parent = reg.entity_by_name(parent_name);
                if (!parent) {
                    next.push_back(e);
                    continue;
                }
            }
            reg.register_entity(name, kind, parent);
        }
        if (next.size() == pending.size()) bad("entity parents are missing or cyclic", {next.front()->at("name").get<std::string>()});
        pending = std::move(next);
    }
}

} // namespace

Installation parse_installation(const json& config)
{
    if (config.value("schema", std::string()) != kConfigSchema)
        bad("unsupported configuration schema", {config.value("schema", std::string())});

    Installation inst;
    inst.name = config.value("installation", std::string("unnamed"));
    auto& reg = *inst.registry;

    try {
        for (const auto& s : config.at("signals"))
            reg.register_signal(s.at("name").get<std::string>(), s.value("unit", std::string()));
        register_entities(reg, config.at("entities"));
        for (const auto& s : config.at("series")) {
            const auto sig = reg.signal_by_name(s.at("signal").get<std::string>());
            const auto ent = reg.entity_by_name(s.at("entity").get<std::string>());
            if (!sig || !ent) bad("series refers to unknown signal or entity", {s.dump()});
            reg.declare_timeseries(*sig, *ent, Minutes{s.value("resolution_minutes", 15L)});
        }

        if (config.contains("grid")) {
            const auto& grid = config.at("grid");
            const auto load_signal = grid.value("load_signal", std::string("active power"));
            const auto voltage_signal = grid.value("voltage_signal", std::string("voltage"));

            std::map<std::string, std::string> node_series; // entity name -> series
            for (const auto& s : grid.at("substations")) {
                const auto name = s.get<std::string>();
                inst.topology.substations.push_back({name, series_of(reg, load_signal, name), ""});
                node_series[name] = inst.topology.substations.back().series;
            }
            for (const auto& f : grid.at("feeders")) {
                const auto name = f.at("entity").get<std::string>();
                inst.topology.feeders.push_back({name, series_of(reg, load_signal, name), f.at("substation").get<std::string>()});
                node_series[name] = inst.topology.feeders.back().series;
            }
            for (const auto& v : grid.value("voltage_points", json::array())) {
                const auto name = v.at("entity").get<std::string>();
                inst.topology.voltage_points.push_back(
                    {name, series_of(reg, voltage_signal, name), v.at("attached_to").get<std::string>()});
                node_series[name] = inst.topology.voltage_points.back().series;
            }
            inst.topology.validate();

            auto node = [&](const std::string& entity) {
                auto it = node_series.find(entity);
                if (it == node_series.end()) bad("not a grid node", {entity});
                return it->second;
            };

            for (const auto& r : grid.value("ranges", json::array())) {
                OperationalRange range{node(r.at("entity").get<std::string>()), r.at("low").get<double>(),
                                       r.at("high").get<double>()};
                if (!(range.low < range.high)) bad("range low must be below high", {r.at("entity").get<std::string>()});
                inst.ranges.push_back(range);
            }
            for (const auto& c : grid.value("controllable", json::array()))
                inst.controllables.insert(node(c.get<std::string>()));

            if (grid.contains("options")) {
                const auto& o = grid.at("options");
                auto& s = inst.settings;
                s.p_threshold = o.value("p_threshold", s.p_threshold);
                s.dead_band = o.value("dead_band", s.dead_band);
                s.default_relative_sd = o.value("default_relative_sd", s.default_relative_sd);
                s.reading_relative_sd = o.value("reading_relative_sd", s.reading_relative_sd);
                s.residual_floor = o.value("residual_floor", s.residual_floor);
                s.target_margin = o.value("target_margin", s.target_margin);
                s.fit_days = o.value("fit_days", s.fit_days);
            }

            for (const auto& m : grid.value("relational_models", json::array())) {
                RelationalModelSpec spec;
                spec.model.child = node(m.at("child").get<std::string>());
                for (const auto& p : m.at("parents")) spec.model.parents.push_back(node(p.get<std::string>()));
                const auto kind = m.value("kind", std::string("linear"));
                if (kind != "linear") bad("only linear relational models can be declared", {kind});
                if (m.contains("weights")) {
                    const auto w = m.at("weights").get<std::vector<double>>();
                    spec.model.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
                    spec.model.bias = m.value("bias", 0.0);
                    spec.model.residual_variance = m.value("residual_variance", inst.settings.residual_floor);
                    spec.model.validate();
                } else {
                    spec.fit = true;
                    spec.ridge = m.value("ridge", 0.0);
                    spec.model.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.model.parents.size()));
                }
                inst.relational.push_back(std::move(spec));
            }
        }

        for (const auto& m : config.value("models", json::array())) {
            json resolved = m;
            resolved["target"] = series_ref(reg, m.at("target"));
            json features = json::array();
            for (const auto& f : m.value("feature_series", json::array())) features.push_back(series_ref(reg, f));
            resolved["feature_series"] = features;
            auto mc = resolved.get<ModelConfig>();
            mc.validate();
            inst.models.push_back(std::move(mc));
        }
        inst.scenario = config.value("scenario", json::object());
    } catch (const json::exception& e) {
        bad(std::string("malformed configuration: ") + e.what());
    }
    return inst;
}

Installation load_installation(const std::filesystem::path& config_file)
{
    std::ifstream in(config_file);
    if (!in) throw Error(ErrorCode::invalid_config, "cannot open configuration", {config_file.string()});
    nlohmann::json config;
    try {
        in >> config;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("configuration is not valid JSON: ") + e.what(),
                    {config_file.string()});
    }
    return parse_installation(config);
}

} // namespace gridflex
