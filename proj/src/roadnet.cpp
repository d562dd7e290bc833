#include "trajrep/roadnet.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "trajrep/mathx.hpp"
#include "trajrep/trajdata.hpp"

namespace trajrep {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

long parse_long(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": expected integer, got '" + s + "'");
    }
}

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(where + ": expected number, got '" + s + "'");
    }
}

} // namespace

RoadNetwork::RoadNetwork(int vertex_count, std::vector<std::pair<int, int>> edges,
                         std::vector<RoadFeatures> features)
    : vertex_count_(vertex_count), edges_(std::move(edges)), features_(std::move(features)) {
    if (static_cast<int>(features_.size()) != vertex_count_) {
        throw ValidationError("RoadNetwork: feature count " + std::to_string(features_.size()) +
                              " != vertex count " + std::to_string(vertex_count_));
    }
    std::sort(edges_.begin(), edges_.end());
    edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

    out_.assign(static_cast<std::size_t>(vertex_count_), {});
    for (auto& f : features_) {
        f.in_degree = 0;
        f.out_degree = 0;
    }
    for (const auto& [from, to] : edges_) {
        if (from < 0 || from >= vertex_count_ || to < 0 || to >= vertex_count_) {
            throw ValidationError("edge (" + std::to_string(from) + ", " + std::to_string(to) +
                                  ") references unknown road (|V| = " +
                                  std::to_string(vertex_count_) + ")");
        }
        if (from == to) {
            throw ValidationError("self-loop edge (" + std::to_string(from) + ", " +
                                  std::to_string(to) + ") is not allowed");
        }
        out_[static_cast<std::size_t>(from)].push_back(to);
        features_[static_cast<std::size_t>(from)].out_degree++;
        features_[static_cast<std::size_t>(to)].in_degree++;
    }
}

bool RoadNetwork::has_edge(int from, int to) const {
    if (from < 0 || from >= vertex_count_) return false;
    const auto& n = out_[static_cast<std::size_t>(from)];
    return std::binary_search(n.begin(), n.end(), to);
}

std::vector<int> RoadNetwork::attention_neighborhood(int road) const {
    std::vector<int> n = out_[static_cast<std::size_t>(road)];
    auto it = std::lower_bound(n.begin(), n.end(), road);
    n.insert(it, road);
    return n;
}

Eigen::SparseMatrix<double> RoadNetwork::adjacency() const {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(edges_.size());
    for (const auto& [from, to] : edges_) trips.emplace_back(from, to, 1.0);
    Eigen::SparseMatrix<double> a(vertex_count_, vertex_count_);
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
}

RoadNetwork load_road_network(const std::string& nodes_path, const std::string& edges_path) {
    std::ifstream nodes(nodes_path);
    if (!nodes) throw ParseError("cannot open nodes file: " + nodes_path);
    std::string line;
    if (!std::getline(nodes, line)) throw ParseError(nodes_path + ": empty file");
    if (split_csv_line(line).size() < 5) {
        throw ParseError(nodes_path + " line 1: expected header "
                         "road_id,road_type,length_m,lanes,max_speed_mps");
    }

    std::vector<RoadFeatures> features;
    int line_no = 1;
    int expected_id = 0;
    while (std::getline(nodes, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = nodes_path + " line " + std::to_string(line_no);
        auto f = split_csv_line(line);
        if (f.size() != 5) throw ParseError(where + ": expected 5 fields, got " + std::to_string(f.size()));
        const long id = parse_long(f[0], where);
        if (id != expected_id) {
            throw ParseError(where + ": road_id must be dense 0-based (expected " +
                             std::to_string(expected_id) + ", got " + std::to_string(id) + ")");
        }
        ++expected_id;
        RoadFeatures rf;
        rf.road_type = static_cast<int>(parse_long(f[1], where));
        rf.length_m = parse_double(f[2], where);
        rf.lanes = static_cast<int>(parse_long(f[3], where));
        rf.max_speed_mps = parse_double(f[4], where);
        if (rf.road_type < 0) throw ValidationError(where + ": unknown road-type code " + f[1]);
        features.push_back(rf);
    }
    const int vcount = static_cast<int>(features.size());

    std::ifstream edges(edges_path);
    if (!edges) throw ParseError("cannot open edges file: " + edges_path);
    if (!std::getline(edges, line)) throw ParseError(edges_path + ": empty file");
    std::vector<std::pair<int, int>> edge_list;
    line_no = 1;
    while (std::getline(edges, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = edges_path + " line " + std::to_string(line_no);
        auto f = split_csv_line(line);
        if (f.size() != 2) throw ParseError(where + ": expected 2 fields, got " + std::to_string(f.size()));
        const long from = parse_long(f[0], where);
        const long to = parse_long(f[1], where);
        if (from < 0 || from >= vcount || to < 0 || to >= vcount) {
            throw ValidationError(where + ": edge (" + f[0] + ", " + f[1] +
                                  ") references unknown road (|V| = " + std::to_string(vcount) + ")");
        }
        edge_list.emplace_back(static_cast<int>(from), static_cast<int>(to));
    }
    return RoadNetwork(vcount, std::move(edge_list), std::move(features));
}

void save_road_network(const RoadNetwork& network, const std::string& nodes_path,
                       const std::string& edges_path) {
    std::ofstream nodes(nodes_path);
    nodes << "road_id,road_type,length_m,lanes,max_speed_mps\n";
    for (int i = 0; i < network.vertex_count(); ++i) {
        const auto& f = network.feature(i);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%d,%.9g\n", i, f.road_type, f.length_m,
                      f.lanes, f.max_speed_mps);
        nodes << buf;
    }
    std::ofstream edges(edges_path);
    edges << "from_id,to_id\n";
    for (const auto& [from, to] : network.edges()) edges << from << "," << to << "\n";
}

InitialFeatureMatrix encode_road_features(const RoadNetwork& network) {
    const int v = network.vertex_count();
    if (v < 2) throw ValidationError("encode_road_features: need at least 2 roads");

    int max_type = 0;
    for (const auto& f : network.features()) {
        if (f.road_type < 0) throw ValidationError("unknown road-type code " + std::to_string(f.road_type));
        max_type = std::max(max_type, f.road_type);
    }
    const int type_width = max_type + 1;

    InitialFeatureMatrix out;
    out.type_width = type_width;
    out.values = Mat::Zero(v, type_width + 5);
    Mat numeric(v, 5);
    for (int i = 0; i < v; ++i) {
        const auto& f = network.feature(i);
        out.values(i, f.road_type) = 1.0;
        numeric(i, 0) = f.length_m;
        numeric(i, 1) = static_cast<double>(f.lanes);
        numeric(i, 2) = f.max_speed_mps;
        numeric(i, 3) = static_cast<double>(f.in_degree);
        numeric(i, 4) = static_cast<double>(f.out_degree);
    }
    zscore_columns_inplace(numeric);
    out.values.rightCols(5) = numeric;
    return out;
}

TransferMatrix compute_transfer_probabilities(const RoadNetwork& network,
                                              const std::vector<Trajectory>& corpus) {
    const int v = network.vertex_count();
    std::vector<double> visit_count(static_cast<std::size_t>(v), 0.0);
    std::map<std::pair<int, int>, double> pair_count;

    for (const auto& traj : corpus) {
        for (std::size_t i = 0; i < traj.roads.size(); ++i) {
            const int r = traj.roads[i];
            if (r < 0 || r >= v) {
                throw ValidationError("trajectory " + traj.traj_id + ": road " +
                                      std::to_string(r) + " not in network");
            }
            visit_count[static_cast<std::size_t>(r)] += 1.0;
            if (i + 1 < traj.roads.size()) {
                const int nxt = traj.roads[i + 1];
                if (!network.has_edge(r, nxt)) {
                    throw ValidationError("trajectory " + traj.traj_id +
                                          ": consecutive roads (" + std::to_string(r) + ", " +
                                          std::to_string(nxt) + ") are not adjacent");
                }
                pair_count[{r, nxt}] += 1.0;
            }
        }
    }

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(pair_count.size());
    for (const auto& [edge, cnt] : pair_count) {
        trips.emplace_back(edge.first, edge.second,
                           cnt / visit_count[static_cast<std::size_t>(edge.first)]);
    }
    TransferMatrix tm;
    tm.probs = Eigen::SparseMatrix<double>(v, v);
    tm.probs.setFromTriplets(trips.begin(), trips.end());
    return tm;
}

} // namespace trajrep
