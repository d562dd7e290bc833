#ifndef TRAJREP_ROADNET_HPP
#define TRAJREP_ROADNET_HPP

#include <Eigen/SparseCore>

#include <string>
#include <vector>

#include "trajrep/common.hpp"

namespace trajrep {

struct RoadFeatures {
    int road_type = 0;
    double length_m = 0.0;
    int lanes = 1;
    double max_speed_mps = 1.0;
    int in_degree = 0;   // recomputed from edges, never trusted from input
    int out_degree = 0;
};

/// Directed road graph. Vertices are road segments; an edge (i, j) means a
/// vehicle can move from road i onto road j.
class RoadNetwork {
public:
    RoadNetwork() = default;
    RoadNetwork(int vertex_count, std::vector<std::pair<int, int>> edges,
                std::vector<RoadFeatures> features);

    int vertex_count() const { return vertex_count_; }
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<RoadFeatures>& features() const { return features_; }
    const RoadFeatures& feature(int road) const { return features_[static_cast<std::size_t>(road)]; }

    bool has_edge(int from, int to) const;

    /// Out-neighbors of `road`, sorted ascending (self not included).
    const std::vector<int>& out_neighbors(int road) const {
        return out_[static_cast<std::size_t>(road)];
    }

    /// Attention neighborhood: out-neighbors plus the road itself, sorted ascending.
    std::vector<int> attention_neighborhood(int road) const;

    Eigen::SparseMatrix<double> adjacency() const;

private:
    int vertex_count_ = 0;
    std::vector<std::pair<int, int>> edges_;
    std::vector<RoadFeatures> features_;
    std::vector<std::vector<int>> out_;
};

/// Sparse matrix of empirical transfer probabilities, nonzero only on edges.
struct TransferMatrix {
    Eigen::SparseMatrix<double> probs;

    double at(int from, int to) const { return probs.coeff(from, to); }
};

/// One-hot road-type block followed by z-scored numeric columns.
struct InitialFeatureMatrix {
    Mat values;       // |V| x d0
    int type_width = 0;

    Index d0() const { return values.cols(); }
};

class Trajectory;  // trajdata

RoadNetwork load_road_network(const std::string& nodes_path, const std::string& edges_path);

InitialFeatureMatrix encode_road_features(const RoadNetwork& network);

TransferMatrix compute_transfer_probabilities(const RoadNetwork& network,
                                              const std::vector<Trajectory>& corpus);

void save_road_network(const RoadNetwork& network, const std::string& nodes_path,
                       const std::string& edges_path);

} // namespace trajrep

#endif // TRAJREP_ROADNET_HPP
