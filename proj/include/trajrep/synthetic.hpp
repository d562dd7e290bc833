#ifndef TRAJREP_SYNTHETIC_HPP
#define TRAJREP_SYNTHETIC_HPP

#include <cstdint>

#include "trajrep/roadnet.hpp"
#include "trajrep/trajdata.hpp"

namespace trajrep {

struct SyntheticConfig {
    int grid_n = 10;
    int trajectory_count = 2000;
    int days = 14;
    double step_detour_prob = 0.1;
    std::int64_t start_epoch = 1446422400;  // 2015-11-02T00:00:00Z, a Monday
    int driver_count = 8;
};

/// grid_n x grid_n street grid; every undirected street contributes two
/// directed roads. Road features are sampled deterministically from the seed.
RoadNetwork generate_synthetic_network(int grid_n, std::uint64_t seed);

/// Random OD trips routed along shortest paths with occasional detours;
/// timestamps follow free-flow travel times scaled by a twin-peak congestion
/// profile plus per-road noise. label = departed-in-peak, user_id = driver id.
TrajectoryDataset generate_synthetic_trajectories(const RoadNetwork& network, int count,
                                                  std::uint64_t seed,
                                                  const SyntheticConfig& cfg = {});

/// Congestion multiplier (>= 1) for a minute-of-day value, peaks at 08:00 and 18:00.
double congestion_factor(int minute_of_day);

/// True when the minute-of-day falls inside one of the two peak windows.
bool in_peak_window(int minute_of_day);

} // namespace trajrep

#endif // TRAJREP_SYNTHETIC_HPP
