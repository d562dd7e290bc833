#ifndef TRAJREP_SIMSEARCH_HPP
#define TRAJREP_SIMSEARCH_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trajrep/common.hpp"
#include "trajrep/downstream.hpp"
#include "trajrep/roadnet.hpp"
#include "trajrep/trajdata.hpp"

namespace trajrep {

/// Simple (loopless) road sequence with its accumulated travel seconds.
struct PathCandidate {
    std::vector<int> roads;
    double cost = 0.0;
};

/// Up to k loopless paths in non-decreasing cost order, ties broken by
/// lexicographic road sequence. Costs are per-road weights summed over the
/// whole sequence (both endpoints included). Unreachable dst -> empty list.
std::vector<PathCandidate> yen_k_shortest_paths(const RoadNetwork& network, int src, int dst,
                                                int k, const std::vector<double>& weights);

struct DetourParams {
    double p_d = 0.2;    // max sub-trajectory fraction
    double t_d = 0.2;    // min relative historical-travel-time difference
    int k_max = 10;
};

/// Replaces a random contiguous sub-trajectory with a k-shortest-path
/// alternative whose historical travel time differs by at least t_d
/// (relative). Returns nullopt when no candidate qualifies.
std::optional<Trajectory> generate_detour(const Trajectory& traj, const DetourParams& params,
                                          const RoadNetwork& network,
                                          const HistoricalTravelTimes& hist, Rng& rng);

struct DetourQuerySet {
    std::vector<Trajectory> queries;     // D_Q
    std::vector<Trajectory> database;    // D_D = D_N' followed by D_Q'
    std::vector<int> truth;              // query index -> ground-truth index in database
    std::uint64_t seed = 0;
    int n_q = 0;
    int n_neg = 0;
    DetourParams params;
};

DetourQuerySet build_query_sets(const TrajectoryDataset& test, int n_q, int n_neg,
                                const DetourParams& params, const RoadNetwork& network,
                                const HistoricalTravelTimes& hist, std::uint64_t seed);

/// MR / HR@1 / HR@5 under ascending Euclidean distance, ties by database index.
MetricsReport most_similar_eval(const Mat& query_reps, const Mat& database_reps,
                                const std::vector<int>& truth);

/// Mean overlap between the k-nearest of each true query and of its detoured
/// counterpart, both against the database.
MetricsReport knn_eval(const Mat& query_reps, const Mat& detour_query_reps,
                       const Mat& database_reps, int k);

void save_query_set_jsonl(const DetourQuerySet& qs, const std::string& path,
                          const std::string& manifest_path);

} // namespace trajrep

#endif // TRAJREP_SIMSEARCH_HPP
