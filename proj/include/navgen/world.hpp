#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "navgen/common.hpp"
#include "navgen/grammar.hpp"
#include "navgen/rng.hpp"
#include "navgen/tensor.hpp"

namespace navgen {

// Procedural gridworld: rectangular rooms carved by recursive splits, walls
// with doors, objects on walkable cells, and deterministic panoramic features
// standing in for a visual backbone.

inline const std::vector<std::string>& default_object_vocab() {
    static const std::vector<std::string> v{"sofa",  "lamp",  "table", "chair", "plant", "mirror",
                                            "shelf", "piano", "rug",   "vase",  "clock", "bed"};
    return v;
}

inline const std::vector<std::string>& room_types() {
    static const std::vector<std::string> v{"kitchen", "bedroom", "bathroom", "hallway", "office",
                                            "lounge"};
    return v;
}

struct Room {
    int x0, y0, x1, y1;  // half-open [x0,x1) x [y0,y1)
    std::string type;

    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct PanoramaObservation {
    Tensor subviews;                                    // K x D_raw, unit-norm rows
    std::vector<double> subview_headings;               // radians, clockwise from north
    std::vector<std::vector<std::string>> visible_objects;  // per subview, sorted by distance
};

struct SensorParams {
    int k = 8;           // subviews per panorama; must be a multiple of 4
    int d_raw = 32;      // raw feature dimension
    double vis_range = 2.5;
};

class WorldGrid {
public:
    int width = 0;
    int height = 0;
    std::uint64_t seed = 0;
    SensorParams sensor;
    std::vector<Room> rooms;
    std::vector<bool> walkable;            // width*height, row-major by y
    std::map<int, std::string> objects;    // cell id -> object name
    std::vector<std::string> vocab;

    int cell_id(int x, int y) const { return y * width + x; }
    int cell_x(int id) const { return id % width; }
    int cell_y(int id) const { return id / width; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool is_walkable(int x, int y) const { return in_bounds(x, y) && walkable[cell_id(x, y)]; }
    bool is_walkable(int id) const { return id >= 0 && id < width * height && walkable[id]; }

    // y grows northward; headings are clockwise from north.
    // direction index d in {0:N, 1:E, 2:S, 3:W}
    static int dx_of(int d) { return d == 1 ? 1 : d == 3 ? -1 : 0; }
    static int dy_of(int d) { return d == 0 ? 1 : d == 2 ? -1 : 0; }

    std::vector<int> neighbors(int id) const {
        std::vector<int> out;
        const int x = cell_x(id);
        const int y = cell_y(id);
        for (int d = 0; d < 4; ++d) {
            const int nx = x + dx_of(d);
            const int ny = y + dy_of(d);
            if (is_walkable(nx, ny)) {
                out.push_back(cell_id(nx, ny));
            }
        }
        return out;
    }

    std::string room_type_at(int id) const {
        const int x = cell_x(id);
        const int y = cell_y(id);
        for (const Room& r : rooms) {
            if (r.contains(x, y)) {
                return r.type;
            }
        }
        return rooms.empty() ? std::string("room") : rooms.front().type;
    }

    // Subview index whose heading points from cell `from` to adjacent cell `to`.
    int subview_toward(int from, int to) const {
        const int dx = cell_x(to) - cell_x(from);
        const int dy = cell_y(to) - cell_y(from);
        int dir = -1;
        for (int d = 0; d < 4; ++d) {
            if (dx_of(d) == dx && dy_of(d) == dy) {
                dir = d;
            }
        }
        if (dir < 0) {
            throw DataError("subview_toward: cells are not 4-adjacent");
        }
        return dir * sensor.k / 4;
    }

    int stop_action() const { return sensor.k; }

    std::vector<int> navigable_subviews(int id) const {
        std::vector<int> out;
        for (int n : neighbors(id)) {
            out.push_back(subview_toward(id, n));
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    // BFS distances from a source over the nav graph; -1 for unreachable.
    std::vector<int> bfs_distances(int source) const {
        std::vector<int> dist(static_cast<std::size_t>(width) * height, -1);
        std::deque<int> queue;
        dist[source] = 0;
        queue.push_back(source);
        while (!queue.empty()) {
            const int c = queue.front();
            queue.pop_front();
            for (int n : neighbors(c)) {
                if (dist[n] < 0) {
                    dist[n] = dist[c] + 1;
                    queue.push_back(n);
                }
            }
        }
        return dist;
    }

    int shortest_distance(int from, int to) const { return bfs_distances(from)[to]; }

    // First move of a shortest path from -> to; ties broken in N,E,S,W order.
    std::optional<int> first_step_toward(int from, int to) const {
        if (from == to) {
            return std::nullopt;
        }
        const auto dist = bfs_distances(to);
        if (dist[from] < 0) {
            return std::nullopt;
        }
        const int x = cell_x(from);
        const int y = cell_y(from);
        for (int d = 0; d < 4; ++d) {
            const int nx = x + dx_of(d);
            const int ny = y + dy_of(d);
            if (is_walkable(nx, ny) && dist[cell_id(nx, ny)] == dist[from] - 1) {
                return cell_id(nx, ny);
            }
        }
        return std::nullopt;
    }

    std::vector<int> walkable_cells() const {
        std::vector<int> out;
        for (int id = 0; id < width * height; ++id) {
            if (walkable[id]) {
                out.push_back(id);
            }
        }
        return out;
    }

    grammar::Lexicon lexicon() const {
        grammar::Lexicon lex;
        for (const std::string& o : vocab) {
            lex.objects.insert(o);
        }
        for (const std::string& r : room_types()) {
            lex.rooms.insert(r);
        }
        return lex;
    }
};

namespace detail {

// Deterministic unit vector for a feature-space tag; shared across worlds so
// identical scenes always produce identical features.
inline Tensor feature_atom(const std::string& tag, int d_raw) {
    Rng rng(mix_seed(0x5eedfea75u, fnv1a64(tag)));
    Tensor v = Tensor::randn(1, static_cast<std::size_t>(d_raw), rng);
    v.scale_(1.0 / v.norm());
    return v;
}

inline void split_region(Rng& rng, std::vector<bool>& walkable, int width, int x0, int y0, int x1,
                         int y1, std::vector<Room>& rooms, int depth) {
    const int w = x1 - x0;
    const int h = y1 - y0;
    const bool can_v = w >= 7;
    const bool can_h = h >= 7;
    if (depth >= 3 || (!can_v && !can_h)) {
        Room r{x0, y0, x1, y1, ""};
        rooms.push_back(r);
        return;
    }
    const bool vertical = can_v && (!can_h || rng.uniform() < 0.5);
    if (vertical) {
        const int xs = x0 + 3 + static_cast<int>(rng.below(static_cast<std::size_t>(w - 6)));
        const int door_y = y0 + static_cast<int>(rng.below(static_cast<std::size_t>(h)));
        for (int y = y0; y < y1; ++y) {
            if (y != door_y) {
                walkable[static_cast<std::size_t>(y) * width + xs] = false;
            }
        }
        split_region(rng, walkable, width, x0, y0, xs, y1, rooms, depth + 1);
        split_region(rng, walkable, width, xs + 1, y0, x1, y1, rooms, depth + 1);
    } else {
        const int ys = y0 + 3 + static_cast<int>(rng.below(static_cast<std::size_t>(h - 6)));
        const int door_x = x0 + static_cast<int>(rng.below(static_cast<std::size_t>(w)));
        for (int x = x0; x < x1; ++x) {
            if (x != door_x) {
                walkable[static_cast<std::size_t>(ys) * width + x] = false;
            }
        }
        split_region(rng, walkable, width, x0, y0, x1, ys, rooms, depth + 1);
        split_region(rng, walkable, width, x0, ys + 1, x1, y1, rooms, depth + 1);
    }
}

// Carve walls until the walkable graph is a single component. Walls are one
// cell thick, so a BFS that is allowed to cross walls finds a carving path.
inline void repair_connectivity(WorldGrid& world) {
    while (true) {
        const auto cells = world.walkable_cells();
        if (cells.empty()) {
            throw DataError("repair_connectivity: no walkable cells");
        }
        const auto dist = world.bfs_distances(cells.front());
        int target = -1;
        for (int c : cells) {
            if (dist[c] < 0) {
                target = c;
                break;
            }
        }
        if (target < 0) {
            return;  // connected
        }
        // BFS from the main component over all cells, carving along the path
        // that first reaches the detached component.
        const int total = world.width * world.height;
        std::vector<int> prev(static_cast<std::size_t>(total), -2);
        std::deque<int> queue;
        for (int c : cells) {
            if (dist[c] >= 0) {
                prev[c] = -1;
                queue.push_back(c);
            }
        }
        int reached = -1;
        while (!queue.empty() && reached < 0) {
            const int c = queue.front();
            queue.pop_front();
            const int x = world.cell_x(c);
            const int y = world.cell_y(c);
            for (int d = 0; d < 4; ++d) {
                const int nx = x + WorldGrid::dx_of(d);
                const int ny = y + WorldGrid::dy_of(d);
                if (!world.in_bounds(nx, ny)) {
                    continue;
                }
                const int n = world.cell_id(nx, ny);
                if (prev[n] != -2) {
                    continue;
                }
                prev[n] = c;
                if (world.walkable[n] && dist[n] < 0) {
                    reached = n;
                    break;
                }
                queue.push_back(n);
            }
        }
        if (reached < 0) {
            throw DataError("repair_connectivity: could not reconnect components");
        }
        for (int c = reached; c >= 0 && prev[c] != -1; c = prev[c]) {
            world.walkable[c] = true;
        }
    }
}

}  // namespace detail

inline WorldGrid generate_world(std::uint64_t seed, int width, int height,
                                const std::vector<std::string>& vocab,
                                const SensorParams& sensor = SensorParams{}) {
    if (width < 4 || height < 4) {
        throw std::invalid_argument("generate_world: dimensions must be at least 4x4");
    }
    if (vocab.empty()) {
        throw std::invalid_argument("generate_world: object vocabulary must not be empty");
    }
    if (sensor.k < 4 || sensor.k % 4 != 0) {
        throw std::invalid_argument("generate_world: K must be a positive multiple of 4");
    }
    WorldGrid world;
    world.width = width;
    world.height = height;
    world.seed = seed;
    world.sensor = sensor;
    world.vocab = vocab;
    world.walkable.assign(static_cast<std::size_t>(width) * height, true);

    Rng rng(mix_seed(seed, 0x9042dUL));
    detail::split_region(rng, world.walkable, width, 0, 0, width, height, world.rooms, 0);
    for (Room& r : world.rooms) {
        r.type = room_types()[rng.below(room_types().size())];
    }
    detail::repair_connectivity(world);

    // object placement: distinct walkable cells, names drawn with replacement
    auto cells = world.walkable_cells();
    rng.shuffle(cells);
    const std::size_t n_objects =
        std::min(cells.size(), std::max<std::size_t>(3, cells.size() / 6));
    for (std::size_t i = 0; i < n_objects; ++i) {
        world.objects[cells[i]] = vocab[rng.below(vocab.size())];
    }
    return world;
}

inline PanoramaObservation render_panorama(const WorldGrid& world, int viewpoint) {
    if (!world.is_walkable(viewpoint)) {
        throw std::out_of_range("render_panorama: unknown or unwalkable viewpoint");
    }
    const int k = world.sensor.k;
    PanoramaObservation obs;
    obs.subview_headings.resize(static_cast<std::size_t>(k));
    obs.visible_objects.assign(static_cast<std::size_t>(k), {});
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (int i = 0; i < k; ++i) {
        obs.subview_headings[static_cast<std::size_t>(i)] = kTwoPi * i / k;
    }

    const int vx = world.cell_x(viewpoint);
    const int vy = world.cell_y(viewpoint);
    // (distance, name) per subview for deterministic near-to-far ordering
    std::vector<std::vector<std::pair<double, std::string>>> buckets(static_cast<std::size_t>(k));
    for (const auto& [cell, name] : world.objects) {
        const double dx = world.cell_x(cell) - vx;
        const double dy = world.cell_y(cell) - vy;
        const double dist = std::hypot(dx, dy);
        if (dist == 0.0 || dist > world.sensor.vis_range) {
            continue;  // same-cell objects are underfoot, not in any subview
        }
        double bearing = std::atan2(dx, dy);  // clockwise from north
        if (bearing < 0.0) {
            bearing += kTwoPi;
        }
        const int sub = static_cast<int>(std::lround(bearing / (kTwoPi / k))) % k;
        buckets[static_cast<std::size_t>(sub)].emplace_back(dist, name);
    }

    const std::string room = world.room_type_at(viewpoint);
    obs.subviews = Tensor(static_cast<std::size_t>(k), static_cast<std::size_t>(world.sensor.d_raw));
    for (int i = 0; i < k; ++i) {
        auto& bucket = buckets[static_cast<std::size_t>(i)];
        std::sort(bucket.begin(), bucket.end());
        Tensor f = detail::feature_atom("room:" + room, world.sensor.d_raw);
        f.add_(detail::feature_atom("hdg:" + std::to_string(i) + "/" + std::to_string(k),
                                    world.sensor.d_raw));
        for (const auto& [dist, name] : bucket) {
            obs.visible_objects[static_cast<std::size_t>(i)].push_back(name);
            f.add_(detail::feature_atom("obj:" + name, world.sensor.d_raw));
        }
        const double norm = f.norm();
        if (norm < 1e-12) {
            throw NumericError("render_panorama: degenerate subview feature");
        }
        f.scale_(1.0 / norm);
        std::copy(f.data(), f.data() + f.size(), obs.subviews.row_ptr(static_cast<std::size_t>(i)));
    }
    return obs;
}

struct TrajectoryStep {
    int viewpoint = 0;
    PanoramaObservation observation;
    int action = 0;                    // subview index toward next viewpoint; K = stop
    std::vector<int> navigable_views;  // subviews toward walkable neighbors
};

struct Trajectory {
    std::string id;
    std::vector<TrajectoryStep> steps;

    std::size_t length() const { return steps.size(); }
    int start() const { return steps.front().viewpoint; }
    int goal() const { return steps.back().viewpoint; }
};

// Samples a shortest-path trajectory with T in [min,max] viewpoints. Shortest
// paths keep the follower's SPL at 1.0 on ground-truth instructions.
inline Trajectory sample_trajectory(const WorldGrid& world, std::uint64_t seed,
                                    std::pair<int, int> len_range) {
    const auto [len_min, len_max] = len_range;
    if (len_min < 2 || len_max < len_min) {
        throw std::invalid_argument("sample_trajectory: need 2 <= min <= max");
    }
    Rng rng(mix_seed(seed, 0x77a1UL));
    const auto cells = world.walkable_cells();
    for (int attempt = 0; attempt < 400; ++attempt) {
        const int t_target = rng.range(len_min, len_max);
        const int start = cells[rng.below(cells.size())];
        const auto dist = world.bfs_distances(start);
        std::vector<int> goals;
        for (int c : cells) {
            if (dist[c] == t_target - 1) {
                goals.push_back(c);
            }
        }
        if (goals.empty()) {
            continue;
        }
        const int goal = goals[rng.below(goals.size())];
        // walk a random shortest path backward from goal to start
        std::vector<int> path{goal};
        int cur = goal;
        while (dist[cur] > 0) {
            std::vector<int> preds;
            for (int n : world.neighbors(cur)) {
                if (dist[n] == dist[cur] - 1) {
                    preds.push_back(n);
                }
            }
            cur = preds[rng.below(preds.size())];
            path.push_back(cur);
        }
        std::reverse(path.begin(), path.end());

        Trajectory traj;
        traj.steps.resize(path.size());
        for (std::size_t t = 0; t < path.size(); ++t) {
            TrajectoryStep& step = traj.steps[t];
            step.viewpoint = path[t];
            step.observation = render_panorama(world, path[t]);
            step.navigable_views = world.navigable_subviews(path[t]);
            step.action = (t + 1 < path.size()) ? world.subview_toward(path[t], path[t + 1])
                                                : world.stop_action();
        }
        return traj;
    }
    throw DataError("sample_trajectory: no path with requested length exists");
}

struct InstructionSample {
    std::string trajectory_id;
    Style style = Style::kFineGrained;
    std::vector<std::string> text;                   // token list
    std::vector<std::string> linguistic_landmarks;   // ordered, deduplicated nouns
    std::vector<std::vector<std::string>> references;  // alternate phrasings, >= 1
};

namespace detail {

// The follower moves toward the nearest visible object with a given name; the
// synthesizer only emits a "pass the <obj>" clause when that rule reproduces
// the trajectory's actual move, keeping templates and follower duals.
inline std::optional<int> chase_move(const WorldGrid& world, int from, const std::string& name) {
    const PanoramaObservation obs = render_panorama(world, from);
    double best_dist = 1e100;
    int best_cell = -1;
    for (const auto& [cell, obj] : world.objects) {
        if (obj != name || cell == from) {
            continue;
        }
        const double dx = world.cell_x(cell) - world.cell_x(from);
        const double dy = world.cell_y(cell) - world.cell_y(from);
        const double dist = std::hypot(dx, dy);
        if (dist > world.sensor.vis_range) {
            continue;
        }
        if (dist < best_dist || (dist == best_dist && cell < best_cell)) {
            best_dist = dist;
            best_cell = cell;
        }
    }
    if (best_cell < 0) {
        return std::nullopt;
    }
    return world.first_step_toward(from, best_cell);
}

}  // namespace detail

inline InstructionSample synthesize_instruction(const Trajectory& traj, const WorldGrid& world,
                                                Style style, std::uint64_t seed) {
    if (traj.length() < 2) {
        throw std::invalid_argument("synthesize_instruction: trajectory too short");
    }
    Rng rng(mix_seed(seed, 0x1757UL));
    InstructionSample sample;
    sample.trajectory_id = traj.id;
    sample.style = style;

    std::vector<grammar::Clause> clauses;
    std::vector<std::string> landmarks;
    auto add_landmark = [&landmarks](const std::string& noun) {
        if (std::find(landmarks.begin(), landmarks.end(), noun) == landmarks.end()) {
            landmarks.push_back(noun);
        }
    };

    if (style == Style::kFineGrained) {
        for (std::size_t t = 0; t + 1 < traj.length(); ++t) {
            const int from = traj.steps[t].viewpoint;
            const int to = traj.steps[t + 1].viewpoint;
            const int dir = traj.steps[t].action / (world.sensor.k / 4);
            bool emitted = false;
            const auto obj_it = world.objects.find(to);
            if (obj_it != world.objects.end() && rng.uniform() < 0.5) {
                const auto chase = detail::chase_move(world, from, obj_it->second);
                if (chase.has_value() && *chase == to) {
                    clauses.push_back({grammar::ClauseKind::kPass, obj_it->second});
                    add_landmark(obj_it->second);
                    emitted = true;
                }
            }
            if (!emitted) {
                clauses.push_back({grammar::ClauseKind::kGo, grammar::directions()[dir]});
            }
        }
        const auto goal_obj = world.objects.find(traj.goal());
        if (goal_obj != world.objects.end()) {
            clauses.push_back({grammar::ClauseKind::kStopAt, goal_obj->second});
            add_landmark(goal_obj->second);
        } else {
            clauses.push_back({grammar::ClauseKind::kStop, ""});
        }
        sample.text = grammar::emit_fine_grained(clauses);
    } else {
        const std::string room = world.room_type_at(traj.goal());
        clauses.push_back({grammar::ClauseKind::kGoToRoom, room});
        add_landmark(room);
        const auto goal_obj = world.objects.find(traj.goal());
        if (goal_obj != world.objects.end()) {
            clauses.push_back({grammar::ClauseKind::kFind, goal_obj->second});
            add_landmark(goal_obj->second);
        }
        sample.text = grammar::emit_high_level(clauses);
    }

    sample.linguistic_landmarks = landmarks;
    sample.references.push_back(sample.text);
    sample.references.push_back(grammar::paraphrase(sample.text));
    return sample;
}

}  // namespace navgen
