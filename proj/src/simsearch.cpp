#include "trajrep/simsearch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

#include <json.hpp>

namespace trajrep {

namespace {

double canonical_cost(const std::vector<int>& roads, const std::vector<double>& w) {
    double c = 0.0;
    for (int r : roads) c += w[static_cast<std::size_t>(r)];
    return c;
}

struct Banned {
    std::set<std::pair<int, int>> edges;
    std::set<int> nodes;
};

/// Lexicographically-least minimum-cost path src -> dst in the filtered
/// graph, found by a reverse Dijkstra followed by a greedy walk. Node
/// weights; both endpoints count toward the cost.
std::optional<std::vector<int>> dijkstra_lex_path(const RoadNetwork& net, int src, int dst,
                                                  const std::vector<double>& w,
                                                  const Banned& banned) {
    const int v = net.vertex_count();
    if (banned.nodes.count(src) || banned.nodes.count(dst)) return std::nullopt;
    if (src == dst) return std::vector<int>{src};

    std::vector<std::vector<int>> rev(static_cast<std::size_t>(v));
    for (const auto& [from, to] : net.edges()) {
        if (banned.nodes.count(from) || banned.nodes.count(to)) continue;
        if (banned.edges.count({from, to})) continue;
        rev[static_cast<std::size_t>(to)].push_back(from);
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<std::size_t>(v), inf);
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
    if (!std::isfinite(dist[static_cast<std::size_t>(src)])) return std::nullopt;

    std::vector<int> path{src};
    int cur = src;
    while (cur != dst) {
        int next = -1;
        for (int n : net.out_neighbors(cur)) {  // ascending, so first hit is lex-least
            if (banned.nodes.count(n) || banned.edges.count({cur, n})) continue;
            if (!std::isfinite(dist[static_cast<std::size_t>(n)])) continue;
            if (w[static_cast<std::size_t>(cur)] + dist[static_cast<std::size_t>(n)] ==
                dist[static_cast<std::size_t>(cur)]) {
                next = n;
                break;
            }
        }
        if (next < 0) return std::nullopt;  // float edge case: no bit-exact successor
        path.push_back(next);
        cur = next;
    }
    return path;
}

struct CandidateLess {
    bool operator()(const PathCandidate& a, const PathCandidate& b) const {
        if (a.cost != b.cost) return a.cost < b.cost;
        return a.roads < b.roads;
    }
};

} // namespace

std::vector<PathCandidate> yen_k_shortest_paths(const RoadNetwork& network, int src, int dst,
                                                int k, const std::vector<double>& weights) {
    if (k < 1) throw ValidationError("yen_k_shortest_paths: k must be >= 1");
    if (static_cast<int>(weights.size()) != network.vertex_count()) {
        throw ValidationError("yen_k_shortest_paths: one weight per road required");
    }
    for (double w : weights) {
        if (!(w > 0.0)) throw ValidationError("yen_k_shortest_paths: weights must be positive");
    }

    std::vector<PathCandidate> found;
    auto first = dijkstra_lex_path(network, src, dst, weights, {});
    if (!first) return found;
    found.push_back({*first, canonical_cost(*first, weights)});

    std::set<PathCandidate, CandidateLess> candidates;
    std::set<std::vector<int>> seen{*first};

    while (static_cast<int>(found.size()) < k) {
        const std::vector<int>& prev = found.back().roads;
        for (std::size_t spur = 0; spur + 1 < prev.size(); ++spur) {
            Banned banned;
            const std::vector<int> root(prev.begin(), prev.begin() + static_cast<long>(spur) + 1);
            for (const auto& p : found) {
                if (p.roads.size() > spur + 1 &&
                    std::equal(root.begin(), root.end(), p.roads.begin())) {
                    banned.edges.insert({p.roads[spur], p.roads[spur + 1]});
                }
            }
            for (std::size_t i = 0; i < spur; ++i) banned.nodes.insert(prev[i]);

            auto spur_path = dijkstra_lex_path(network, prev[spur], dst, weights, banned);
            if (!spur_path) continue;
            std::vector<int> full(prev.begin(), prev.begin() + static_cast<long>(spur));
            full.insert(full.end(), spur_path->begin(), spur_path->end());
            if (seen.count(full)) continue;
            seen.insert(full);
            candidates.insert({full, canonical_cost(full, weights)});
        }
        if (candidates.empty()) break;
        found.push_back(*candidates.begin());
        candidates.erase(candidates.begin());
    }
    return found;
}

std::optional<Trajectory> generate_detour(const Trajectory& traj, const DetourParams& params,
                                          const RoadNetwork& network,
                                          const HistoricalTravelTimes& hist, Rng& rng) {
    const int len = traj.length();
    if (len < kMinTrajectoryLen) throw ValidationError("generate_detour: trajectory too short");
    if (params.p_d <= 0.0 || params.p_d >= 1.0) throw ValidationError("generate_detour: p_d in (0,1)");
    if (params.t_d <= 0.0) throw ValidationError("generate_detour: t_d must be positive");

    const int max_sub = std::max(2, static_cast<int>(std::floor(params.p_d * len)));
    const int sub_len = 2 + static_cast<int>(rng.uniform_int(std::max(1, max_sub - 1)));
    const int start = static_cast<int>(rng.uniform_int(len - sub_len + 1));
    const int end = start + sub_len - 1;  // inclusive

    const std::vector<int> sub(traj.roads.begin() + start, traj.roads.begin() + end + 1);
    double sub_time = 0.0;
    for (int r : sub) sub_time += hist.at(r);

    auto paths = yen_k_shortest_paths(network, sub.front(), sub.back(), params.k_max,
                                      hist.per_road);
    for (const auto& cand : paths) {
        if (cand.roads == sub) continue;
        const double rel = std::abs(cand.cost - sub_time) / sub_time;
        if (rel < params.t_d) continue;

        Trajectory detour;
        detour.traj_id = traj.traj_id + "'";
        detour.user_id = traj.user_id;
        detour.label = traj.label;
        detour.roads.assign(traj.roads.begin(), traj.roads.begin() + start);
        detour.roads.insert(detour.roads.end(), cand.roads.begin(), cand.roads.end());
        detour.roads.insert(detour.roads.end(), traj.roads.begin() + end + 1, traj.roads.end());
        const int new_len = static_cast<int>(detour.roads.size());
        if (new_len < kMinTrajectoryLen || new_len > kMaxTrajectoryLen) continue;

        detour.times.assign(traj.times.begin(), traj.times.begin() + start + 1);
        double cum = static_cast<double>(detour.times.back());
        for (int i = start; i + 1 < new_len; ++i) {
            cum += hist.at(detour.roads[static_cast<std::size_t>(i)]);
            detour.times.push_back(std::llround(cum));
        }
        return detour;
    }
    return std::nullopt;
}

DetourQuerySet build_query_sets(const TrajectoryDataset& test, int n_q, int n_neg,
                                const DetourParams& params, const RoadNetwork& network,
                                const HistoricalTravelTimes& hist, std::uint64_t seed) {
    const std::size_t need = static_cast<std::size_t>(n_q) + static_cast<std::size_t>(n_neg);
    if (test.trajectories.size() < need) {
        throw ValidationError("build_query_sets: need " + std::to_string(n_q) + " queries + " +
                              std::to_string(n_neg) + " negatives = " + std::to_string(need) +
                              " trajectories, test set has " +
                              std::to_string(test.trajectories.size()));
    }
    Rng root = Rng(seed).derive("simsearch");
    std::vector<std::size_t> order(test.trajectories.size());
    std::iota(order.begin(), order.end(), 0);
    root.shuffle(order);

    // Walk the shuffled test set; each trajectory that yields a detour joins
    // the query set (first n_q) or the negative set; failures are skipped.
    DetourQuerySet qs;
    qs.seed = seed;
    qs.n_q = n_q;
    qs.n_neg = n_neg;
    qs.params = params;
    std::vector<Trajectory> query_detours;
    std::vector<Trajectory> neg_detours;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const bool queries_done = static_cast<int>(qs.queries.size()) >= n_q;
        const bool negs_done = static_cast<int>(neg_detours.size()) >= n_neg;
        if (queries_done && negs_done) break;
        const Trajectory& traj = test.trajectories[order[pos]];
        if (traj.length() < kMinTrajectoryLen) continue;

        std::optional<Trajectory> detour;
        for (int attempt = 0; attempt < 10 && !detour; ++attempt) {
            Rng rng = root.derive("detour", {static_cast<std::uint64_t>(order[pos]),
                                             static_cast<std::uint64_t>(attempt)});
            detour = generate_detour(traj, params, network, hist, rng);
        }
        if (!detour) continue;
        if (!queries_done) {
            qs.queries.push_back(traj);
            query_detours.push_back(std::move(*detour));
        } else {
            neg_detours.push_back(std::move(*detour));
        }
    }
    if (static_cast<int>(qs.queries.size()) < n_q ||
        static_cast<int>(neg_detours.size()) < n_neg) {
        throw ValidationError("build_query_sets: could not build " + std::to_string(n_q) +
                              " queries and " + std::to_string(n_neg) +
                              " negatives from the test set (got " +
                              std::to_string(qs.queries.size()) + " / " +
                              std::to_string(neg_detours.size()) + ")");
    }
    qs.database = std::move(neg_detours);
    for (std::size_t i = 0; i < query_detours.size(); ++i) {
        qs.truth.push_back(static_cast<int>(qs.database.size()));
        qs.database.push_back(std::move(query_detours[i]));
    }
    return qs;
}

namespace {

std::vector<int> nearest_indices(const Eigen::RowVectorXd& q, const Mat& database, int k) {
    std::vector<std::pair<double, int>> d(static_cast<std::size_t>(database.rows()));
    for (Index j = 0; j < database.rows(); ++j) {
        d[static_cast<std::size_t>(j)] = {(database.row(j) - q).squaredNorm(),
                                          static_cast<int>(j)};
    }
    std::partial_sort(d.begin(), d.begin() + std::min<std::ptrdiff_t>(k, d.size()), d.end());
    std::vector<int> out;
    for (int j = 0; j < k && j < static_cast<int>(d.size()); ++j) {
        out.push_back(d[static_cast<std::size_t>(j)].second);
    }
    return out;
}

} // namespace

MetricsReport most_similar_eval(const Mat& query_reps, const Mat& database_reps,
                                const std::vector<int>& truth) {
    if (static_cast<Index>(truth.size()) != query_reps.rows()) {
        throw ValidationError("most_similar_eval: one truth index per query required");
    }
    double mr = 0.0;
    double hr1 = 0.0;
    double hr5 = 0.0;
    for (Index i = 0; i < query_reps.rows(); ++i) {
        const int gt = truth[static_cast<std::size_t>(i)];
        if (gt < 0 || gt >= database_reps.rows()) {
            throw ValidationError("most_similar_eval: truth index " + std::to_string(gt) +
                                  " missing from database");
        }
        const double gt_dist = (database_reps.row(gt) - query_reps.row(i)).squaredNorm();
        long rank = 1;
        for (Index j = 0; j < database_reps.rows(); ++j) {
            if (j == gt) continue;
            const double dj = (database_reps.row(j) - query_reps.row(i)).squaredNorm();
            if (dj < gt_dist || (dj == gt_dist && j < gt)) ++rank;
        }
        mr += static_cast<double>(rank);
        if (rank <= 1) hr1 += 1.0;
        if (rank <= 5) hr5 += 1.0;
    }
    const double n = static_cast<double>(query_reps.rows());
    MetricsReport r;
    r.task = "similarity-most";
    r.values["MR"] = mr / n;
    r.values["HR@1"] = hr1 / n;
    r.values["HR@5"] = hr5 / n;
    return r;
}

MetricsReport knn_eval(const Mat& query_reps, const Mat& detour_query_reps,
                       const Mat& database_reps, int k) {
    if (query_reps.rows() != detour_query_reps.rows()) {
        throw ValidationError("knn_eval: query/detour counts differ");
    }
    if (k < 1) throw ValidationError("knn_eval: k must be >= 1");
    double precision = 0.0;
    for (Index i = 0; i < query_reps.rows(); ++i) {
        const auto gt = nearest_indices(query_reps.row(i), database_reps, k);
        const auto res = nearest_indices(detour_query_reps.row(i), database_reps, k);
        double overlap = 0.0;
        for (int a : res) {
            if (std::find(gt.begin(), gt.end(), a) != gt.end()) overlap += 1.0;
        }
        precision += overlap / static_cast<double>(k);
    }
    MetricsReport r;
    r.task = "similarity-knn";
    r.values["Precision@" + std::to_string(k)] =
        precision / static_cast<double>(query_reps.rows());
    return r;
}

void save_query_set_jsonl(const DetourQuerySet& qs, const std::string& path,
                          const std::string& manifest_path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    auto traj_json = [](const Trajectory& t) {
        nlohmann::ordered_json j;
        j["traj_id"] = t.traj_id;
        j["user_id"] = t.user_id;
        j["roads"] = t.roads;
        j["times"] = t.times;
        return j;
    };
    for (std::size_t i = 0; i < qs.queries.size(); ++i) {
        nlohmann::ordered_json j;
        j["kind"] = "query";
        j["index"] = i;
        j["truth"] = qs.truth[i];
        j["traj"] = traj_json(qs.queries[i]);
        out << j.dump() << "\n";
    }
    for (std::size_t i = 0; i < qs.database.size(); ++i) {
        nlohmann::ordered_json j;
        j["kind"] = "db";
        j["index"] = i;
        j["traj"] = traj_json(qs.database[i]);
        out << j.dump() << "\n";
    }
    nlohmann::ordered_json manifest;
    manifest["seed"] = qs.seed;
    manifest["n_q"] = qs.n_q;
    manifest["n_neg"] = qs.n_neg;
    manifest["p_d"] = qs.params.p_d;
    manifest["t_d"] = qs.params.t_d;
    std::ofstream mf(manifest_path);
    if (!mf) throw ParseError("cannot open for writing: " + manifest_path);
    mf << manifest.dump(2) << "\n";
}

} // namespace trajrep
