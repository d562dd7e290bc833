#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "trajrep/roadnet.hpp"
#include "trajrep/trajdata.hpp"
#include "testutil.hpp"

using namespace trajrep;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

RoadNetwork two_road_network() {
    std::vector<RoadFeatures> f(2);
    f[0].road_type = 0;
    f[0].length_m = 100;
    f[1].road_type = 1;
    f[1].length_m = 200;
    return RoadNetwork(2, {{0, 1}}, std::move(f));
}

Trajectory traj(const std::string& id, std::vector<int> roads) {
    Trajectory t;
    t.traj_id = id;
    t.user_id = "u";
    t.roads = std::move(roads);
    for (std::size_t i = 0; i < t.roads.size(); ++i) {
        t.times.push_back(static_cast<std::int64_t>(10 * i));
    }
    return t;
}

} // namespace

TEST_CASE("degrees are recomputed from edges") {
    RoadNetwork net = two_road_network();
    CHECK(net.feature(0).out_degree == 1);
    CHECK(net.feature(0).in_degree == 0);
    CHECK(net.feature(1).in_degree == 1);
    CHECK(net.feature(1).out_degree == 0);
}

TEST_CASE("self-loop edges are rejected") {
    std::vector<RoadFeatures> f(2);
    CHECK_THROWS_AS(RoadNetwork(2, {{0, 0}}, std::move(f)), ValidationError);
}

TEST_CASE("edge endpoints must be known roads") {
    std::vector<RoadFeatures> f(2);
    CHECK_THROWS_AS(RoadNetwork(2, {{0, 2}}, std::move(f)), ValidationError);
}

TEST_CASE("path graph adjacency has exactly the edge count") {
    std::vector<RoadFeatures> f(4);
    RoadNetwork net(4, {{0, 1}, {1, 2}, {2, 3}}, std::move(f));
    CHECK(net.adjacency().nonZeros() == 3);
}

TEST_CASE("csv round trip and parse errors") {
    const std::string dir = "/tmp/trajrep_roadnet_test";
    std::filesystem::create_directories(dir);
    write_file(dir + "/nodes.csv",
               "road_id,road_type,length_m,lanes,max_speed_mps\n"
               "0,0,100,2,8.3\n"
               "1,1,200,1,13.9\n");
    write_file(dir + "/edges.csv", "from_id,to_id\n0,1\n");
    RoadNetwork net = load_road_network(dir + "/nodes.csv", dir + "/edges.csv");
    CHECK(net.vertex_count() == 2);
    CHECK(net.feature(0).out_degree == 1);
    CHECK(net.feature(1).in_degree == 1);

    write_file(dir + "/bad_nodes.csv",
               "road_id,road_type,length_m,lanes,max_speed_mps\n"
               "0,0,abc,2,8.3\n");
    try {
        load_road_network(dir + "/bad_nodes.csv", dir + "/edges.csv");
        CHECK(false);
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_file(dir + "/bad_edges.csv", "from_id,to_id\n0,7\n");
    CHECK_THROWS_AS(load_road_network(dir + "/nodes.csv", dir + "/bad_edges.csv"),
                    ValidationError);

    write_file(dir + "/self_loop.csv", "from_id,to_id\n0,0\n");
    CHECK_THROWS_AS(load_road_network(dir + "/nodes.csv", dir + "/self_loop.csv"),
                    ValidationError);
}

TEST_CASE("feature encoding: one-hot block and z-scored numeric columns") {
    RoadNetwork net = two_road_network();
    InitialFeatureMatrix fm = encode_road_features(net);
    CHECK(fm.type_width == 2);
    CHECK(fm.d0() == 7);
    // One-hot block rows sum to 1.
    CHECK(fm.values.leftCols(2).rowwise().sum().isOnes());
    // lengths {100, 200} -> z-scores {-1, +1} with population std.
    CHECK(fm.values(0, 2) == doctest::Approx(-1.0));
    CHECK(fm.values(1, 2) == doctest::Approx(1.0));
}

TEST_CASE("constant columns z-score to zero") {
    std::vector<RoadFeatures> f(3);
    for (auto& rf : f) {
        rf.road_type = 0;
        rf.length_m = 50.0;
        rf.lanes = 2;
        rf.max_speed_mps = 8.3;
    }
    RoadNetwork net(3, {{0, 1}, {1, 2}, {2, 0}}, std::move(f));
    InitialFeatureMatrix fm = encode_road_features(net);
    CHECK(fm.values.col(1).isZero());  // length column (after 1-wide type block)
}

TEST_CASE("feature encoding is deterministic") {
    RoadNetwork net = test::ring_network(8);
    Mat a = encode_road_features(net).values;
    Mat b = encode_road_features(net).values;
    CHECK((a - b).norm() == 0.0);
}

TEST_CASE("transfer probabilities from direct counting") {
    // corpus [[A,B,C],[A,B,D]] on A=0,B=1,C=2,D=3.
    std::vector<RoadFeatures> f(4);
    RoadNetwork net(4, {{0, 1}, {1, 2}, {1, 3}}, std::move(f));
    std::vector<Trajectory> corpus{traj("a", {0, 1, 2}), traj("b", {0, 1, 3})};
    TransferMatrix tm = compute_transfer_probabilities(net, corpus);
    CHECK(tm.at(0, 1) == doctest::Approx(1.0));
    CHECK(tm.at(1, 2) == doctest::Approx(0.5));
    CHECK(tm.at(1, 3) == doctest::Approx(0.5));
}

TEST_CASE("transfer probabilities: empty corpus and single pair") {
    std::vector<RoadFeatures> f(2);
    RoadNetwork net(2, {{0, 1}}, std::move(f));
    CHECK(compute_transfer_probabilities(net, {}).probs.nonZeros() == 0);

    TransferMatrix tm = compute_transfer_probabilities(net, {traj("a", {0, 1})});
    CHECK(tm.at(0, 1) == doctest::Approx(1.0));
    CHECK(tm.at(1, 0) == 0.0);  // B appears only as a final road: all-zero row
    CHECK(tm.at(1, 1) == 0.0);
}

TEST_CASE("transfer probabilities reject non-adjacent consecutive roads") {
    std::vector<RoadFeatures> f(3);
    RoadNetwork net(3, {{0, 1}}, std::move(f));
    CHECK_THROWS_AS(compute_transfer_probabilities(net, {traj("a", {0, 2})}), ValidationError);
}

TEST_CASE("observed rows sum to one") {
    RoadNetwork net = test::ring_network(10);
    std::vector<Trajectory> corpus;
    Rng rng(11);
    for (int k = 0; k < 20; ++k) {
        Trajectory t;
        t.traj_id = "t" + std::to_string(k);
        t.user_id = "u";
        int cur = static_cast<int>(rng.uniform_int(10));
        for (int i = 0; i < 8; ++i) {
            t.roads.push_back(cur);
            t.times.push_back(i * 30);
            const auto& nbrs = net.out_neighbors(cur);
            cur = nbrs[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(nbrs.size())))];
        }
        corpus.push_back(std::move(t));
    }
    TransferMatrix tm = compute_transfer_probabilities(net, corpus);
    // count(v_i) includes final-position occurrences, which have no outgoing
    // transition: rows sum to <= 1, and to exactly 1 for roads never final.
    std::vector<bool> has_outgoing(10, false);
    std::vector<bool> ever_final(10, false);
    for (const auto& t : corpus) {
        for (std::size_t i = 0; i + 1 < t.roads.size(); ++i) {
            has_outgoing[static_cast<std::size_t>(t.roads[i])] = true;
        }
        ever_final[static_cast<std::size_t>(t.roads.back())] = true;
    }
    for (int i = 0; i < 10; ++i) {
        if (!has_outgoing[static_cast<std::size_t>(i)]) continue;
        double sum = 0.0;
        for (int j = 0; j < 10; ++j) sum += tm.at(i, j);
        CHECK(sum <= 1.0 + 1e-9);
        if (!ever_final[static_cast<std::size_t>(i)]) CHECK(std::abs(sum - 1.0) < 1e-9);
    }
    // Nonzero only where corpus transitions occur, and those lie on edges.
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            if (tm.at(i, j) > 0.0) CHECK(net.has_edge(i, j));
        }
    }
}

TEST_CASE("attention neighborhood includes self") {
    RoadNetwork net = two_road_network();
    CHECK(net.attention_neighborhood(0) == std::vector<int>{0, 1});
    CHECK(net.attention_neighborhood(1) == std::vector<int>{1});
}
