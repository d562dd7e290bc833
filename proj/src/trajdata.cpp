#include "trajrep/trajdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

namespace trajrep {

void Trajectory::validate(const RoadNetwork& network) const {
    if (roads.size() != times.size()) {
        throw ValidationError("trajectory " + traj_id + ": roads/times length mismatch");
    }
    if (roads.empty()) throw ValidationError("trajectory " + traj_id + ": empty");
    for (std::size_t i = 0; i < roads.size(); ++i) {
        if (roads[i] < 0 || roads[i] >= network.vertex_count()) {
            throw ValidationError("trajectory " + traj_id + ": road " +
                                  std::to_string(roads[i]) + " out of range");
        }
        if (i > 0) {
            if (times[i] < times[i - 1]) {
                throw ValidationError("trajectory " + traj_id + ": timestamps decrease at position " +
                                      std::to_string(i));
            }
            if (!network.has_edge(roads[i - 1], roads[i])) {
                throw ValidationError("trajectory " + traj_id + ": roads (" +
                                      std::to_string(roads[i - 1]) + ", " + std::to_string(roads[i]) +
                                      ") are not adjacent");
            }
        }
    }
}

void TrajectoryDataset::validate() const {
    if (!network) throw ValidationError("dataset has no network");
    for (const auto& t : trajectories) t.validate(*network);
}

TrajectoryDataset preprocess(const TrajectoryDataset& dataset, int min_user_trajectories) {
    TrajectoryDataset out;
    out.network = dataset.network;

    // Truncation first so that all filters see the final road sequence;
    // this also makes the whole pass idempotent.
    std::vector<Trajectory> kept;
    for (Trajectory t : dataset.trajectories) {
        if (t.length() > kMaxTrajectoryLen) {
            t.roads.resize(kMaxTrajectoryLen);
            t.times.resize(kMaxTrajectoryLen);
        }
        if (t.length() < kMinTrajectoryLen) continue;
        if (t.roads.front() == t.roads.back()) continue;  // loop trajectory
        kept.push_back(std::move(t));
    }

    std::map<std::string, int> per_user;
    for (const auto& t : kept) per_user[t.user_id]++;
    for (auto& t : kept) {
        if (per_user[t.user_id] >= min_user_trajectories) out.trajectories.push_back(std::move(t));
    }
    return out;
}

DatasetSplits chronological_split(const TrajectoryDataset& dataset, const SplitRatios& ratios) {
    if (dataset.trajectories.empty()) throw ValidationError("chronological_split: empty dataset");
    if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
        throw ValidationError("chronological_split: ratios must be positive");
    }
    const double sum = ratios.train + ratios.val + ratios.test;
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ValidationError("chronological_split: ratios sum to " + std::to_string(sum) +
                              ", expected 1");
    }

    std::vector<std::size_t> order(dataset.trajectories.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ta = dataset.trajectories[a];
        const auto& tb = dataset.trajectories[b];
        if (ta.departure() != tb.departure()) return ta.departure() < tb.departure();
        return ta.traj_id < tb.traj_id;
    });

    const auto n = static_cast<double>(order.size());
    const auto train_end = static_cast<std::size_t>(std::llround(n * ratios.train));
    const auto val_end = static_cast<std::size_t>(std::llround(n * (ratios.train + ratios.val)));

    DatasetSplits s;
    s.train.network = s.val.network = s.test.network = dataset.network;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& t = dataset.trajectories[order[i]];
        if (i < train_end) s.train.trajectories.push_back(t);
        else if (i < val_end) s.val.trajectories.push_back(t);
        else s.test.trajectories.push_back(t);
    }
    return s;
}

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b) != 0 && ((a < 0) != (b < 0))) --q;
    return q;
}

std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

} // namespace

int minute_index(std::int64_t t) {
    const std::int64_t sec_of_day = floor_mod(t, 86400);
    return static_cast<int>(sec_of_day / 60) + 1;
}

int day_of_week_index(std::int64_t t) {
    const std::int64_t days = floor_div(t, 86400);
    // 1970-01-01 is a Thursday (ISO index 4).
    return static_cast<int>(floor_mod(days + 3, 7)) + 1;
}

HistoricalTravelTimes historical_travel_times(const TrajectoryDataset& train) {
    const int v = train.network ? train.network->vertex_count() : 0;
    std::vector<double> sum(static_cast<std::size_t>(v), 0.0);
    std::vector<double> cnt(static_cast<std::size_t>(v), 0.0);
    double total = 0.0;
    double total_cnt = 0.0;
    for (const auto& t : train.trajectories) {
        for (std::size_t i = 0; i + 1 < t.roads.size(); ++i) {
            const double gap = static_cast<double>(t.times[i + 1] - t.times[i]);
            sum[static_cast<std::size_t>(t.roads[i])] += gap;
            cnt[static_cast<std::size_t>(t.roads[i])] += 1.0;
            total += gap;
            total_cnt += 1.0;
        }
    }
    HistoricalTravelTimes h;
    h.global_mean = total_cnt > 0.0 ? total / total_cnt : 1.0;
    if (h.global_mean <= 0.0) h.global_mean = 1.0;
    h.per_road.assign(static_cast<std::size_t>(v), h.global_mean);
    for (int r = 0; r < v; ++r) {
        const auto ur = static_cast<std::size_t>(r);
        if (cnt[ur] > 0.0) {
            const double mean = sum[ur] / cnt[ur];
            h.per_road[ur] = mean > 0.0 ? mean : h.global_mean;
        }
    }
    return h;
}

TrajectoryDataset load_corpus_jsonl(const std::string& path, const RoadNetwork& network) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open corpus file: " + path);
    TrajectoryDataset ds;
    ds.network = &network;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        Trajectory t;
        try {
            t.traj_id = j.at("traj_id").get<std::string>();
            t.user_id = j.at("user_id").get<std::string>();
            t.roads = j.at("roads").get<std::vector<int>>();
            t.times = j.at("times").get<std::vector<std::int64_t>>();
            if (j.contains("label")) t.label = j.at("label").get<double>();
        } catch (const std::exception& e) {
            throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
        }
        t.validate(network);
        ds.trajectories.push_back(std::move(t));
    }
    return ds;
}

void save_corpus_jsonl(const TrajectoryDataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    for (const auto& t : dataset.trajectories) {
        nlohmann::json j;
        j["traj_id"] = t.traj_id;
        j["user_id"] = t.user_id;
        j["roads"] = t.roads;
        j["times"] = t.times;
        if (t.label) j["label"] = *t.label;
        out << j.dump() << "\n";
    }
}

} // namespace trajrep
