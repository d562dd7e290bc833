#include "trajrep/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <queue>

namespace trajrep {

double congestion_factor(int minute_of_day) {
    const double m = static_cast<double>(minute_of_day);
    const double morning = (m - 480.0) / 90.0;
    const double evening = (m - 1080.0) / 90.0;
    return 1.0 + 0.8 * std::exp(-morning * morning) + 0.8 * std::exp(-evening * evening);
}

bool in_peak_window(int minute_of_day) {
    return std::abs(minute_of_day - 480) <= 90 || std::abs(minute_of_day - 1080) <= 90;
}

RoadNetwork generate_synthetic_network(int grid_n, std::uint64_t seed) {
    if (grid_n < 3) throw ValidationError("generate_synthetic_network: grid_n must be >= 3");
    Rng rng = Rng(seed).derive("synthetic-network");

    struct Street {
        int a;  // intersection ids, a < b in scan order
        int b;
    };
    std::vector<Street> streets;
    auto isect = [grid_n](int r, int c) { return r * grid_n + c; };
    for (int r = 0; r < grid_n; ++r) {
        for (int c = 0; c < grid_n; ++c) {
            if (c + 1 < grid_n) streets.push_back({isect(r, c), isect(r, c + 1)});
            if (r + 1 < grid_n) streets.push_back({isect(r, c), isect(r + 1, c)});
        }
    }

    static const double kSpeeds[3] = {8.3, 13.9, 22.2};
    const int road_count = static_cast<int>(streets.size()) * 2;
    std::vector<RoadFeatures> features(static_cast<std::size_t>(road_count));
    std::vector<int> road_from(static_cast<std::size_t>(road_count));
    std::vector<int> road_to(static_cast<std::size_t>(road_count));

    for (std::size_t s = 0; s < streets.size(); ++s) {
        RoadFeatures f;
        f.road_type = static_cast<int>(rng.uniform_int(3));
        f.length_m = rng.uniform(50.0, 500.0);
        f.lanes = static_cast<int>(rng.uniform_int(4)) + 1;
        f.max_speed_mps = kSpeeds[f.road_type];
        // Both directions of a street share the same physical attributes.
        const int fwd = static_cast<int>(s) * 2;
        const int bwd = fwd + 1;
        features[static_cast<std::size_t>(fwd)] = f;
        features[static_cast<std::size_t>(bwd)] = f;
        road_from[static_cast<std::size_t>(fwd)] = streets[s].a;
        road_to[static_cast<std::size_t>(fwd)] = streets[s].b;
        road_from[static_cast<std::size_t>(bwd)] = streets[s].b;
        road_to[static_cast<std::size_t>(bwd)] = streets[s].a;
    }

    // Road r1 connects to r2 when r1 ends where r2 starts, U-turns excluded.
    std::vector<std::vector<int>> starting_at(static_cast<std::size_t>(grid_n * grid_n));
    for (int r = 0; r < road_count; ++r) {
        starting_at[static_cast<std::size_t>(road_from[static_cast<std::size_t>(r)])].push_back(r);
    }
    std::vector<std::pair<int, int>> edges;
    for (int r1 = 0; r1 < road_count; ++r1) {
        for (int r2 : starting_at[static_cast<std::size_t>(road_to[static_cast<std::size_t>(r1)])]) {
            if (road_to[static_cast<std::size_t>(r2)] == road_from[static_cast<std::size_t>(r1)]) {
                continue;
            }
            edges.emplace_back(r1, r2);
        }
    }
    return RoadNetwork(road_count, std::move(edges), std::move(features));
}

namespace {

/// Minimum road-weight sum from every road to `dst` (both endpoints counted).
std::vector<double> costs_to_destination(const RoadNetwork& net, int dst,
                                         const std::vector<double>& w) {
    const int v = net.vertex_count();
    std::vector<std::vector<int>> rev(static_cast<std::size_t>(v));
    for (const auto& [from, to] : net.edges()) rev[static_cast<std::size_t>(to)].push_back(from);

    std::vector<double> dist(static_cast<std::size_t>(v), std::numeric_limits<double>::infinity());
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<std::size_t>(dst)] = w[static_cast<std::size_t>(dst)];
    pq.emplace(dist[static_cast<std::size_t>(dst)], dst);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        for (int p : rev[static_cast<std::size_t>(u)]) {
            const double nd = w[static_cast<std::size_t>(p)] + d;
            if (nd < dist[static_cast<std::size_t>(p)]) {
                dist[static_cast<std::size_t>(p)] = nd;
                pq.emplace(nd, p);
            }
        }
    }
    return dist;
}

} // namespace

TrajectoryDataset generate_synthetic_trajectories(const RoadNetwork& network, int count,
                                                  std::uint64_t seed, const SyntheticConfig& cfg) {
    if (count < 1) throw ValidationError("generate_synthetic_trajectories: count must be >= 1");
    const int v = network.vertex_count();
    std::vector<double> freeflow(static_cast<std::size_t>(v));
    for (int r = 0; r < v; ++r) {
        const auto& f = network.feature(r);
        freeflow[static_cast<std::size_t>(r)] = f.length_m / f.max_speed_mps;
    }

    // Recover road endpoints for grid networks by replaying the street
    // enumeration; other networks fall back to id-based buckets.
    std::vector<int> road_origin(static_cast<std::size_t>(v));
    std::vector<int> road_dest(static_cast<std::size_t>(v));
    const bool grid_layout = v == 4 * cfg.grid_n * (cfg.grid_n - 1);
    if (grid_layout) {
        int s = 0;
        auto isect = [&](int r, int c) { return r * cfg.grid_n + c; };
        auto put = [&](int a, int b) {
            road_origin[static_cast<std::size_t>(2 * s)] = a;
            road_dest[static_cast<std::size_t>(2 * s)] = b;
            road_origin[static_cast<std::size_t>(2 * s + 1)] = b;
            road_dest[static_cast<std::size_t>(2 * s + 1)] = a;
            ++s;
        };
        for (int r = 0; r < cfg.grid_n; ++r) {
            for (int c = 0; c < cfg.grid_n; ++c) {
                if (c + 1 < cfg.grid_n) put(isect(r, c), isect(r, c + 1));
                if (r + 1 < cfg.grid_n) put(isect(r, c), isect(r + 1, c));
            }
        }
    } else {
        for (int r = 0; r < v; ++r) {
            road_origin[static_cast<std::size_t>(r)] = r % (cfg.grid_n * cfg.grid_n);
            road_dest[static_cast<std::size_t>(r)] = r % (cfg.grid_n * cfg.grid_n);
        }
    }

    TrajectoryDataset ds;
    ds.network = &network;
    Rng root = Rng(seed).derive("synthetic-corpus");

    int produced = 0;
    int attempt = 0;
    while (produced < count) {
        Rng rng = root.derive("traj", {static_cast<std::uint64_t>(attempt)});
        ++attempt;

        const int src = static_cast<int>(rng.uniform_int(v));
        const int dst = static_cast<int>(rng.uniform_int(v));
        if (src == dst) continue;
        const auto dist = costs_to_destination(network, dst, freeflow);
        if (!std::isfinite(dist[static_cast<std::size_t>(src)])) continue;  // disconnected OD

        std::vector<int> roads{src};
        bool ok = true;
        int cur = src;
        while (cur != dst) {
            const auto& nbrs = network.out_neighbors(cur);
            std::vector<int> viable;
            for (int n : nbrs) {
                if (std::isfinite(dist[static_cast<std::size_t>(n)])) viable.push_back(n);
            }
            if (viable.empty()) {
                ok = false;
                break;
            }
            int best = viable.front();
            for (int n : viable) {
                if (dist[static_cast<std::size_t>(n)] < dist[static_cast<std::size_t>(best)]) best = n;
            }
            int next = best;
            if (viable.size() > 1 && rng.bernoulli(cfg.step_detour_prob)) {
                int pick = static_cast<int>(rng.uniform_int(static_cast<std::int64_t>(viable.size()) - 1));
                for (int n : viable) {
                    if (n == best) continue;
                    if (pick == 0) {
                        next = n;
                        break;
                    }
                    --pick;
                }
            }
            roads.push_back(next);
            cur = next;
            if (static_cast<int>(roads.size()) > kMaxTrajectoryLen) {
                ok = false;
                break;
            }
        }
        if (!ok || static_cast<int>(roads.size()) < kMinTrajectoryLen) continue;
        if (roads.front() == roads.back()) continue;

        const std::int64_t departure =
            cfg.start_epoch + rng.uniform_int(static_cast<std::int64_t>(cfg.days) * 86400);
        Trajectory t;
        t.roads = roads;
        t.times.resize(roads.size());
        double cum = static_cast<double>(departure);
        for (std::size_t i = 0; i < roads.size(); ++i) {
            t.times[i] = std::llround(cum);
            if (i + 1 < roads.size()) {
                const int minute = static_cast<int>((std::llround(cum) % 86400 + 86400) % 86400 / 60);
                const double noise = rng.uniform(0.9, 1.1);
                cum += freeflow[static_cast<std::size_t>(roads[i])] * congestion_factor(minute) * noise;
            }
        }

        char id[32];
        std::snprintf(id, sizeof id, "t%06d", produced);
        t.traj_id = id;

        // Driver identity follows the OD geometry so that it is learnable.
        auto quadrant = [&](int cell) {
            const int r = cell / cfg.grid_n;
            const int c = cell % cfg.grid_n;
            return (r >= cfg.grid_n / 2 ? 2 : 0) + (c >= cfg.grid_n / 2 ? 1 : 0);
        };
        const int origin_cell = road_origin[static_cast<std::size_t>(src)];
        const int dest_cell = road_dest[static_cast<std::size_t>(dst)];
        const int driver =
            (quadrant(origin_cell) * 2 + (dest_cell % cfg.grid_n >= cfg.grid_n / 2 ? 1 : 0)) %
            cfg.driver_count;
        t.user_id = "d" + std::to_string(driver);

        const int dep_minute = static_cast<int>(((departure % 86400 + 86400) % 86400) / 60);
        t.label = in_peak_window(dep_minute) ? 1.0 : 0.0;

        ds.trajectories.push_back(std::move(t));
        ++produced;
    }
    return ds;
}

} // namespace trajrep
