#ifndef TRAJREP_TRAJDATA_HPP
#define TRAJREP_TRAJDATA_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trajrep/common.hpp"
#include "trajrep/roadnet.hpp"

namespace trajrep {

inline constexpr int kMinTrajectoryLen = 6;
inline constexpr int kMaxTrajectoryLen = 128;

/// Road-network constrained trajectory: adjacent road ids with visit timestamps.
class Trajectory {
public:
    std::string traj_id;
    std::string user_id;
    std::vector<int> roads;
    std::vector<std::int64_t> times;          // seconds since epoch
    std::optional<double> label;

    int length() const { return static_cast<int>(roads.size()); }
    std::int64_t departure() const { return times.front(); }
    std::int64_t duration() const { return times.back() - times.front(); }

    /// Throws ValidationError on any invariant violation (lengths, ordering,
    /// adjacency, road-id range). Length bounds are checked by preprocess, not here.
    void validate(const RoadNetwork& network) const;
};

struct TrajectoryDataset {
    std::vector<Trajectory> trajectories;
    const RoadNetwork* network = nullptr;

    std::size_t size() const { return trajectories.size(); }
    void validate() const;
};

struct HistoricalTravelTimes {
    std::vector<double> per_road;   // seconds, strictly positive
    double global_mean = 1.0;

    double at(int road) const { return per_road[static_cast<std::size_t>(road)]; }
};

TrajectoryDataset preprocess(const TrajectoryDataset& dataset, int min_user_trajectories = 1);

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

struct DatasetSplits {
    TrajectoryDataset train;
    TrajectoryDataset val;
    TrajectoryDataset test;
};

DatasetSplits chronological_split(const TrajectoryDataset& dataset, const SplitRatios& ratios);

/// Minute-of-day index in [1, 1440], UTC.
int minute_index(std::int64_t t);

/// ISO weekday index in [1, 7], Monday = 1, UTC.
int day_of_week_index(std::int64_t t);

HistoricalTravelTimes historical_travel_times(const TrajectoryDataset& train);

TrajectoryDataset load_corpus_jsonl(const std::string& path, const RoadNetwork& network);
void save_corpus_jsonl(const TrajectoryDataset& dataset, const std::string& path);

} // namespace trajrep

#endif // TRAJREP_TRAJDATA_HPP
