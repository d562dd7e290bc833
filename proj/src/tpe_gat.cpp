#include "trajrep/tpe_gat.hpp"

#include <array>
#include <memory>

#include "trajrep/mathx.hpp"

namespace trajrep {

void GatConfig::validate() const {
    if (heads.empty() || heads.size() != head_dims.size()) {
        throw ValidationError("GatConfig: heads and head_dims must be non-empty and aligned");
    }
    if (heads.back() != 1) {
        throw ValidationError("GatConfig: final layer must have exactly 1 head");
    }
    for (std::size_t l = 0; l < heads.size(); ++l) {
        if (heads[l] < 1 || head_dims[l] < 1) {
            throw ValidationError("GatConfig: non-positive head spec at layer " + std::to_string(l));
        }
    }
}

GatNeighborhood GatNeighborhood::build(const RoadNetwork& network, const TransferMatrix& transfer) {
    GatNeighborhood nbh;
    const int v = network.vertex_count();
    nbh.offsets.assign(static_cast<std::size_t>(v) + 1, 0);
    for (int i = 0; i < v; ++i) {
        auto n = network.attention_neighborhood(i);
        nbh.offsets[static_cast<std::size_t>(i) + 1] =
            nbh.offsets[static_cast<std::size_t>(i)] + static_cast<int>(n.size());
        for (int j : n) {
            nbh.neighbors.push_back(j);
            nbh.transfer.push_back(j == i ? 0.0 : transfer.at(i, j));
        }
    }
    return nbh;
}

std::vector<double> tpe_attention(const Mat& h, const GatNeighborhood& nbh,
                                  const GatHeadWeights& w, bool use_transfer) {
    if (h.cols() != w.w1.rows() || w.w1.cols() != w.w4.cols()) {
        throw ValidationError("tpe_attention: shape mismatch between h and head weights");
    }
    if (!h.allFinite()) throw ValidationError("tpe_attention: non-finite input features");
    const Vec a = (h * w.w1) * w.w4.row(0).transpose();
    const Vec b = (h * w.w2) * w.w4.row(0).transpose();
    const double c = use_transfer ? w.w3.row(0).dot(w.w4.row(0)) : 0.0;

    std::vector<double> alpha(nbh.neighbors.size());
    const int v = nbh.vertex_count();
    for (int i = 0; i < v; ++i) {
        const int beg = nbh.offsets[static_cast<std::size_t>(i)];
        const int end = nbh.offsets[static_cast<std::size_t>(i) + 1];
        for (int k = beg; k < end; ++k) {
            const int j = nbh.neighbors[static_cast<std::size_t>(k)];
            double e = a(i) + b(j);
            if (use_transfer) e += c * nbh.transfer[static_cast<std::size_t>(k)];
            alpha[static_cast<std::size_t>(k)] = e > 0.0 ? e : kLeakySlope * e;
        }
        softmax_span_inplace(alpha.data() + beg, end - beg);
    }
    return alpha;
}

Mat tpe_gat_layer_head(const Mat& h, const std::vector<double>& alpha,
                       const GatNeighborhood& nbh, const Mat& w5) {
    if (h.cols() != w5.rows()) throw ValidationError("tpe_gat_layer_head: shape mismatch");
    const Mat hw5 = h * w5;
    Mat out = Mat::Zero(h.rows(), w5.cols());
    const int v = nbh.vertex_count();
    for (int i = 0; i < v; ++i) {
        const int beg = nbh.offsets[static_cast<std::size_t>(i)];
        const int end = nbh.offsets[static_cast<std::size_t>(i) + 1];
        for (int k = beg; k < end; ++k) {
            out.row(i) += alpha[static_cast<std::size_t>(k)] *
                          hw5.row(nbh.neighbors[static_cast<std::size_t>(k)]);
        }
    }
    return elu(out);
}

std::vector<std::pair<std::string, std::pair<Index, Index>>> gat_parameter_shapes(
    int input_dim, const GatConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, std::pair<Index, Index>>> shapes;
    Index d_in = input_dim;
    for (int l = 0; l < cfg.layer_count(); ++l) {
        const Index d_out = cfg.head_dims[static_cast<std::size_t>(l)];
        for (int k = 0; k < cfg.heads[static_cast<std::size_t>(l)]; ++k) {
            const std::string p = "gat.l" + std::to_string(l) + ".h" + std::to_string(k) + ".";
            shapes.push_back({p + "w1", {d_in, d_out}});
            shapes.push_back({p + "w2", {d_in, d_out}});
            shapes.push_back({p + "w3", {1, d_out}});
            shapes.push_back({p + "w4", {1, d_out}});
            shapes.push_back({p + "w5", {d_in, d_out}});
        }
        d_in = static_cast<Index>(cfg.heads[static_cast<std::size_t>(l)]) * d_out;
    }
    return shapes;
}

namespace {

struct GatHeadContext {
    std::vector<double> e;       // pre-activation logits, aligned with neighbors
    std::vector<double> alpha;
    Mat hw5;
    Vec a;
    Vec b;
    Mat a1;
    Mat a2;
};

} // namespace

ad::Var gat_head_node(ad::Tape& tape, ad::Var h, ad::Var w1, ad::Var w2, ad::Var w3,
                      ad::Var w4, ad::Var w5, const GatNeighborhood& nbh, bool use_transfer) {
    const Mat& hv = tape.val(h);
    auto ctx = std::make_shared<GatHeadContext>();
    ctx->a1 = hv * tape.val(w1);
    ctx->a2 = hv * tape.val(w2);
    const Eigen::RowVectorXd w4row = tape.val(w4).row(0);
    ctx->a = ctx->a1 * w4row.transpose();
    ctx->b = ctx->a2 * w4row.transpose();
    const double c = use_transfer ? tape.val(w3).row(0).dot(w4row) : 0.0;

    const int v = nbh.vertex_count();
    ctx->e.resize(nbh.neighbors.size());
    ctx->alpha.resize(nbh.neighbors.size());
    for (int i = 0; i < v; ++i) {
        const int beg = nbh.offsets[static_cast<std::size_t>(i)];
        const int end = nbh.offsets[static_cast<std::size_t>(i) + 1];
        for (int k = beg; k < end; ++k) {
            const int j = nbh.neighbors[static_cast<std::size_t>(k)];
            double e = ctx->a(i) + ctx->b(j);
            if (use_transfer) e += c * nbh.transfer[static_cast<std::size_t>(k)];
            ctx->e[static_cast<std::size_t>(k)] = e;
            ctx->alpha[static_cast<std::size_t>(k)] = e > 0.0 ? e : kLeakySlope * e;
        }
        softmax_span_inplace(ctx->alpha.data() + beg, end - beg);
    }

    ctx->hw5 = hv * tape.val(w5);
    Mat out = Mat::Zero(hv.rows(), ctx->hw5.cols());
    for (int i = 0; i < v; ++i) {
        const int beg = nbh.offsets[static_cast<std::size_t>(i)];
        const int end = nbh.offsets[static_cast<std::size_t>(i) + 1];
        for (int k = beg; k < end; ++k) {
            out.row(i) += ctx->alpha[static_cast<std::size_t>(k)] *
                          ctx->hw5.row(nbh.neighbors[static_cast<std::size_t>(k)]);
        }
    }
    out = elu(out);

    const GatNeighborhood* nb = &nbh;
    auto back = [h, w1, w2, w3, w4, w5, ctx, nb, use_transfer](ad::Tape& t, ad::Var outv) {
        const Mat& g = t.grad_view(outv);
        const Mat& y = t.val(outv);
        const Mat& hv = t.val(h);
        const int v = nb->vertex_count();

        Mat gpre = g.binaryExpr(y, [](double gv, double yv) {
            return gv * elu_grad_from_output(yv);
        });

        Mat ghw5 = Mat::Zero(ctx->hw5.rows(), ctx->hw5.cols());
        std::vector<double> dalpha(nb->neighbors.size());
        for (int i = 0; i < v; ++i) {
            const int beg = nb->offsets[static_cast<std::size_t>(i)];
            const int end = nb->offsets[static_cast<std::size_t>(i) + 1];
            for (int k = beg; k < end; ++k) {
                const int j = nb->neighbors[static_cast<std::size_t>(k)];
                ghw5.row(j) += ctx->alpha[static_cast<std::size_t>(k)] * gpre.row(i);
                dalpha[static_cast<std::size_t>(k)] = gpre.row(i).dot(ctx->hw5.row(j));
            }
        }

        Vec da = Vec::Zero(v);
        Vec db = Vec::Zero(v);
        double dc = 0.0;
        for (int i = 0; i < v; ++i) {
            const int beg = nb->offsets[static_cast<std::size_t>(i)];
            const int end = nb->offsets[static_cast<std::size_t>(i) + 1];
            double dot = 0.0;
            for (int k = beg; k < end; ++k) {
                dot += ctx->alpha[static_cast<std::size_t>(k)] * dalpha[static_cast<std::size_t>(k)];
            }
            for (int k = beg; k < end; ++k) {
                const std::size_t uk = static_cast<std::size_t>(k);
                const double dz = ctx->alpha[uk] * (dalpha[uk] - dot);
                const double de = dz * leaky_relu_grad(ctx->e[uk]);
                da(i) += de;
                db(nb->neighbors[uk]) += de;
                if (use_transfer) dc += de * nb->transfer[uk];
            }
        }

        const Eigen::RowVectorXd w4row = t.val(w4).row(0);
        Mat da1 = da * w4row;
        Mat da2 = db * w4row;

        if (t.requires_grad(w4)) {
            Eigen::RowVectorXd gw4 = (ctx->a1.transpose() * da + ctx->a2.transpose() * db).transpose();
            if (use_transfer) gw4 += dc * t.val(w3).row(0);
            t.grad_accum(w4).row(0) += gw4;
        }
        if (use_transfer && t.requires_grad(w3)) t.grad_accum(w3).row(0) += dc * w4row;
        if (t.requires_grad(w1)) t.grad_accum(w1).noalias() += hv.transpose() * da1;
        if (t.requires_grad(w2)) t.grad_accum(w2).noalias() += hv.transpose() * da2;
        if (t.requires_grad(w5)) t.grad_accum(w5).noalias() += hv.transpose() * ghw5;
        if (t.requires_grad(h)) {
            Mat& gh = t.grad_accum(h);
            gh.noalias() += da1 * t.val(w1).transpose();
            gh.noalias() += da2 * t.val(w2).transpose();
            gh.noalias() += ghw5 * t.val(w5).transpose();
        }
    };
    return tape.custom({h, w1, w2, w3, w4, w5}, std::move(out), std::move(back));
}

ad::Var encode_roads(ad::Tape& tape, ad::Var features,
                     const std::vector<std::vector<std::array<ad::Var, 5>>>& weights,
                     const GatNeighborhood& nbh, const GatConfig& cfg, bool use_transfer) {
    cfg.validate();
    if (static_cast<int>(weights.size()) != cfg.layer_count()) {
        throw ValidationError("encode_roads: weight list does not match layer count");
    }
    ad::Var h = features;
    for (int l = 0; l < cfg.layer_count(); ++l) {
        const auto& layer = weights[static_cast<std::size_t>(l)];
        if (static_cast<int>(layer.size()) != cfg.heads[static_cast<std::size_t>(l)]) {
            throw ValidationError("encode_roads: head count mismatch at layer " + std::to_string(l));
        }
        if (tape.val(h).cols() != tape.val(layer[0][0]).rows()) {
            throw ValidationError("encode_roads: width chain mismatch at layer " + std::to_string(l));
        }
        std::vector<ad::Var> heads;
        heads.reserve(layer.size());
        for (const auto& w : layer) {
            heads.push_back(gat_head_node(tape, h, w[0], w[1], w[2], w[3], w[4], nbh, use_transfer));
        }
        h = heads.size() == 1 ? heads.front() : tape.concat_cols(heads);
    }
    return h;
}

} // namespace trajrep
