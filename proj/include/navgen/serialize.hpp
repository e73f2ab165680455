#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "navgen/common.hpp"
#include "navgen/world.hpp"

namespace navgen {

using nlohmann::json;

inline constexpr const char* kWorldsSchema = "navgen-worlds-v1";
inline constexpr const char* kCorpusSchema = "navgen-corpus-v1";

struct WorldBundle {
    std::string id;
    WorldGrid world;
    std::vector<Trajectory> trajectories;
};

struct Dataset {
    std::vector<WorldBundle> bundles;

    const WorldBundle* find_world(const std::string& id) const {
        for (const auto& b : bundles) {
            if (b.id == id) {
                return &b;
            }
        }
        return nullptr;
    }

    // trajectory ids are globally unique: "<world_id>/t<k>"
    std::pair<const WorldBundle*, const Trajectory*> find_trajectory(const std::string& traj_id) const {
        for (const auto& b : bundles) {
            for (const auto& t : b.trajectories) {
                if (t.id == traj_id) {
                    return {&b, &t};
                }
            }
        }
        return {nullptr, nullptr};
    }
};

inline json world_to_json(const WorldGrid& w) {
    json rooms = json::array();
    for (const Room& r : w.rooms) {
        rooms.push_back({{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}, {"type", r.type}});
    }
    std::vector<int> walls;
    for (int id = 0; id < w.width * w.height; ++id) {
        if (!w.walkable[static_cast<std::size_t>(id)]) {
            walls.push_back(id);
        }
    }
    json objects = json::array();
    for (const auto& [cell, name] : w.objects) {
        objects.push_back({{"cell", cell}, {"name", name}});
    }
    return json{{"width", w.width},
                {"height", w.height},
                {"seed", w.seed},
                {"k", w.sensor.k},
                {"d_raw", w.sensor.d_raw},
                {"vis_range", w.sensor.vis_range},
                {"rooms", rooms},
                {"walls", walls},
                {"objects", objects},
                {"vocab", w.vocab}};
}

inline WorldGrid world_from_json(const json& j) {
    WorldGrid w;
    w.width = j.at("width").get<int>();
    w.height = j.at("height").get<int>();
    w.seed = j.at("seed").get<std::uint64_t>();
    w.sensor.k = j.at("k").get<int>();
    w.sensor.d_raw = j.at("d_raw").get<int>();
    w.sensor.vis_range = j.at("vis_range").get<double>();
    for (const auto& r : j.at("rooms")) {
        w.rooms.push_back(Room{r.at("x0").get<int>(), r.at("y0").get<int>(), r.at("x1").get<int>(),
                               r.at("y1").get<int>(), r.at("type").get<std::string>()});
    }
    w.walkable.assign(static_cast<std::size_t>(w.width) * w.height, true);
    for (const auto& id : j.at("walls")) {
        w.walkable[id.get<std::size_t>()] = false;
    }
    for (const auto& o : j.at("objects")) {
        w.objects[o.at("cell").get<int>()] = o.at("name").get<std::string>();
    }
    w.vocab = j.at("vocab").get<std::vector<std::string>>();
    return w;
}

inline json trajectory_to_json(const Trajectory& t) {
    std::vector<int> cells;
    std::vector<int> actions;
    for (const auto& s : t.steps) {
        cells.push_back(s.viewpoint);
        actions.push_back(s.action);
    }
    return json{{"id", t.id}, {"cells", cells}, {"actions", actions}};
}

// Observations are pure functions of the world, so they are re-rendered on
// load instead of being stored.
inline Trajectory trajectory_from_json(const json& j, const WorldGrid& world) {
    Trajectory t;
    t.id = j.at("id").get<std::string>();
    const auto cells = j.at("cells").get<std::vector<int>>();
    const auto actions = j.at("actions").get<std::vector<int>>();
    if (cells.size() != actions.size() || cells.size() < 2) {
        throw DataError("trajectory " + t.id + ": malformed cells/actions");
    }
    t.steps.resize(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
        t.steps[i].viewpoint = cells[i];
        t.steps[i].action = actions[i];
        t.steps[i].observation = render_panorama(world, cells[i]);
        t.steps[i].navigable_views = world.navigable_subviews(cells[i]);
    }
    return t;
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
    json worlds = json::array();
    for (const auto& b : ds.bundles) {
        json trajs = json::array();
        for (const auto& t : b.trajectories) {
            trajs.push_back(trajectory_to_json(t));
        }
        json w = world_to_json(b.world);
        w["id"] = b.id;
        w["trajectories"] = trajs;
        worlds.push_back(std::move(w));
    }
    const json root{{"schema", kWorldsSchema}, {"worlds", worlds}};
    std::ofstream os(path);
    if (!os) {
        throw DataError("save_dataset: cannot open " + path);
    }
    os << root.dump(1) << '\n';
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("load_dataset: cannot open " + path);
    }
    json root;
    try {
        is >> root;
    } catch (const json::exception& e) {
        throw DataError("load_dataset: parse failure in " + path + ": " + e.what());
    }
    if (root.value("schema", "") != kWorldsSchema) {
        throw DataError("load_dataset: expected schema " + std::string(kWorldsSchema) + ", got '" +
                        root.value("schema", "<missing>") + "'");
    }
    Dataset ds;
    for (const auto& wj : root.at("worlds")) {
        WorldBundle b;
        b.id = wj.at("id").get<std::string>();
        b.world = world_from_json(wj);
        for (const auto& tj : wj.at("trajectories")) {
            b.trajectories.push_back(trajectory_from_json(tj, b.world));
        }
        ds.bundles.push_back(std::move(b));
    }
    return ds;
}

inline json instruction_to_json(const InstructionSample& s) {
    std::vector<std::string> refs;
    for (const auto& r : s.references) {
        refs.push_back(join_tokens(r));
    }
    return json{{"trajectory_id", s.trajectory_id},
                {"style", style_name(s.style)},
                {"text", join_tokens(s.text)},
                {"landmarks", s.linguistic_landmarks},
                {"references", refs}};
}

inline InstructionSample instruction_from_json(const json& j) {
    InstructionSample s;
    s.trajectory_id = j.at("trajectory_id").get<std::string>();
    const auto style = style_from_name(j.at("style").get<std::string>());
    if (!style) {
        throw DataError("instruction " + s.trajectory_id + ": unknown style");
    }
    s.style = *style;
    s.text = split_tokens(j.at("text").get<std::string>());
    s.linguistic_landmarks = j.at("landmarks").get<std::vector<std::string>>();
    for (const auto& r : j.at("references")) {
        s.references.push_back(split_tokens(r.get<std::string>()));
    }
    if (s.references.empty()) {
        throw DataError("instruction " + s.trajectory_id + ": needs at least one reference");
    }
    return s;
}

inline void save_corpus(const std::string& path, const std::vector<InstructionSample>& corpus) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("save_corpus: cannot open " + path);
    }
    for (const auto& s : corpus) {
        os << instruction_to_json(s).dump() << '\n';
    }
}

inline std::vector<InstructionSample> load_corpus(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("load_corpus: cannot open " + path);
    }
    std::vector<InstructionSample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(instruction_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("load_corpus: " + path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// Minimal prediction record for `evaluate` and `follow`.
struct Prediction {
    std::string trajectory_id;
    Style style = Style::kFineGrained;
    std::vector<std::string> text;
};

inline void save_predictions(const std::string& path, const std::vector<Prediction>& preds) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("save_predictions: cannot open " + path);
    }
    for (const auto& p : preds) {
        os << json{{"trajectory_id", p.trajectory_id},
                   {"style", style_name(p.style)},
                   {"text", join_tokens(p.text)}}
                  .dump()
           << '\n';
    }
}

inline std::vector<Prediction> load_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("load_predictions: cannot open " + path);
    }
    std::vector<Prediction> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("load_predictions: " + path + ": " + e.what());
        }
        Prediction p;
        p.trajectory_id = j.at("trajectory_id").get<std::string>();
        const auto style = style_from_name(j.value("style", "fine_grained"));
        if (!style) {
            throw DataError("load_predictions: unknown style for " + p.trajectory_id);
        }
        p.style = *style;
        p.text = split_tokens(j.at("text").get<std::string>());
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace navgen
