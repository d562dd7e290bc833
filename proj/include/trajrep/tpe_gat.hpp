#ifndef TRAJREP_TPE_GAT_HPP
#define TRAJREP_TPE_GAT_HPP

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "trajrep/autodiff.hpp"
#include "trajrep/common.hpp"
#include "trajrep/roadnet.hpp"

namespace trajrep {

/// Neighborhood structure shared by all attention layers: CSR over
/// N_i = out-neighbors of i plus i itself, with transfer probabilities
/// aligned to the neighbor array (p_ii = 0).
struct GatNeighborhood {
    std::vector<int> offsets;     // size |V|+1
    std::vector<int> neighbors;   // sorted ascending within each row
    std::vector<double> transfer; // aligned with neighbors

    static GatNeighborhood build(const RoadNetwork& network, const TransferMatrix& transfer);
    int vertex_count() const { return static_cast<int>(offsets.size()) - 1; }
};

/// Weights of one attention head: W1, W2 map d_in -> d_out; W3, W4 are
/// 1 x d_out; W5 maps d_in -> d_out for the value aggregation.
struct GatHeadWeights {
    Mat w1;
    Mat w2;
    Mat w3;
    Mat w4;
    Mat w5;
};

struct GatConfig {
    std::vector<int> heads{8, 16, 1};
    std::vector<int> head_dims{8, 4, 64};

    int layer_count() const { return static_cast<int>(heads.size()); }
    int output_dim() const { return heads.back() * head_dims.back(); }
    void validate() const;
};

/// Per-edge attention weights for one head, aligned with GatNeighborhood.
std::vector<double> tpe_attention(const Mat& h, const GatNeighborhood& nbh,
                                  const GatHeadWeights& w, bool use_transfer = true);

/// ELU-activated neighborhood aggregation for one head, given attention weights.
Mat tpe_gat_layer_head(const Mat& h, const std::vector<double>& alpha,
                       const GatNeighborhood& nbh, const Mat& w5);

/// Parameter names for one stack, in registration order.
std::vector<std::pair<std::string, std::pair<Index, Index>>> gat_parameter_shapes(
    int input_dim, const GatConfig& cfg);

/// Tape node for one (layer, head): fused attention + aggregation + ELU.
ad::Var gat_head_node(ad::Tape& tape, ad::Var h, ad::Var w1, ad::Var w2, ad::Var w3,
                      ad::Var w4, ad::Var w5, const GatNeighborhood& nbh, bool use_transfer);

/// Full stack on tape: returns the |V| x d road-embedding variable.
/// `weights` must hold layer-major, head-minor leaf vars of the five matrices.
ad::Var encode_roads(ad::Tape& tape, ad::Var features,
                     const std::vector<std::vector<std::array<ad::Var, 5>>>& weights,
                     const GatNeighborhood& nbh, const GatConfig& cfg, bool use_transfer);

} // namespace trajrep

#endif // TRAJREP_TPE_GAT_HPP
