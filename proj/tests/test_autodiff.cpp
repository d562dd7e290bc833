#include <doctest.h>

#include "trajrep/autodiff.hpp"
#include "trajrep/mathx.hpp"
#include "testutil.hpp"

using namespace trajrep;
using trajrep::test::max_grad_error;
using trajrep::test::random_matrix;

namespace {

/// FD-checks d(sum of squares of graph output)/d(input) for a unary graph.
double check_unary(Mat& x, const std::function<ad::Var(ad::Tape&, ad::Var)>& build) {
    auto loss = [&]() {
        ad::Tape t;
        ad::Var in = t.leaf(&x);
        return t.val(t.sum_squares(build(t, in)))(0, 0);
    };
    ad::Tape t;
    ad::Var in = t.leaf(&x);
    t.backward(t.sum_squares(build(t, in)));
    return max_grad_error(x, t.grad_view(in), loss);
}

} // namespace

TEST_CASE("matmul forward and gradients") {
    Rng rng(1);
    Mat a = random_matrix(3, 4, rng);
    Mat b = random_matrix(4, 5, rng);
    ad::Tape t;
    ad::Var va = t.leaf(&a);
    ad::Var vb = t.leaf(&b);
    ad::Var prod = t.matmul(va, vb);
    CHECK((t.val(prod) - a * b).norm() == doctest::Approx(0.0));

    auto loss = [&]() {
        ad::Tape tt;
        return tt.val(tt.sum_squares(tt.matmul(tt.leaf(&a), tt.leaf(&b))))(0, 0);
    };
    t.backward(t.sum_squares(prod));
    CHECK(max_grad_error(a, t.grad_view(va), loss) < 1.0);
    CHECK(max_grad_error(b, t.grad_view(vb), loss) < 1.0);
}

TEST_CASE("elementwise activation gradients") {
    Rng rng(2);
    Mat x = random_matrix(4, 6, rng);
    CHECK(check_unary(x, [](ad::Tape& t, ad::Var v) { return t.leaky_relu(v, 0.2); }) < 1.0);
    CHECK(check_unary(x, [](ad::Tape& t, ad::Var v) { return t.elu(v); }) < 1.0);
    CHECK(check_unary(x, [](ad::Tape& t, ad::Var v) { return t.relu(v); }) < 1.0);
    CHECK(check_unary(x, [](ad::Tape& t, ad::Var v) { return t.softmax_rows(v); }) < 1.0);
    const Mat weights = random_matrix(4, 6, rng);
    CHECK(check_unary(x, [&](ad::Tape& t, ad::Var v) {
              return t.mul_mask(t.rows_l2_normalize(v), weights);
          }) < 1.0);
    CHECK(check_unary(x, [](ad::Tape& t, ad::Var v) { return t.scale(v, -1.7); }) < 1.0);
    CHECK(check_unary(x, [](ad::Tape& t, ad::Var v) { return t.slice_cols(v, 1, 3); }) < 1.0);
}

TEST_CASE("softmax rows sum to one") {
    Rng rng(3);
    Mat x = random_matrix(5, 7, rng, 3.0);
    ad::Tape t;
    ad::Var p = t.softmax_rows(t.leaf(&x));
    for (Index i = 0; i < 5; ++i) {
        CHECK(t.val(p).row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer norm gradients for input gain and bias") {
    Rng rng(4);
    Mat x = random_matrix(3, 8, rng);
    Mat g = random_matrix(1, 8, rng);
    Mat b = random_matrix(1, 8, rng);
    auto loss = [&]() {
        ad::Tape t;
        return t.val(t.sum_squares(t.layer_norm_rows(t.leaf(&x), t.leaf(&g), t.leaf(&b))))(0, 0);
    };
    ad::Tape t;
    ad::Var vx = t.leaf(&x);
    ad::Var vg = t.leaf(&g);
    ad::Var vb = t.leaf(&b);
    t.backward(t.sum_squares(t.layer_norm_rows(vx, vg, vb)));
    CHECK(max_grad_error(x, t.grad_view(vx), loss) < 1.0);
    CHECK(max_grad_error(g, t.grad_view(vg), loss) < 1.0);
    CHECK(max_grad_error(b, t.grad_view(vb), loss) < 1.0);
}

TEST_CASE("gather concat and rowvec gradients") {
    Rng rng(5);
    Mat table = random_matrix(6, 4, rng);
    Mat row = random_matrix(1, 4, rng);
    auto loss = [&]() {
        ad::Tape t;
        ad::Var g = t.gather_rows(t.leaf(&table), {0, 2, 2, 5});
        ad::Var s = t.add_rowvec(g, t.leaf(&row));
        return t.val(t.sum_squares(t.concat_rows({s, s})))(0, 0);
    };
    ad::Tape t;
    ad::Var vt = t.leaf(&table);
    ad::Var vr = t.leaf(&row);
    ad::Var g = t.gather_rows(vt, {0, 2, 2, 5});
    ad::Var s = t.add_rowvec(g, vr);
    t.backward(t.sum_squares(t.concat_rows({s, s})));
    CHECK(max_grad_error(table, t.grad_view(vt), loss) < 1.0);
    CHECK(max_grad_error(row, t.grad_view(vr), loss) < 1.0);
}

TEST_CASE("gather_rows rejects out-of-range indices") {
    Mat table = Mat::Zero(3, 2);
    ad::Tape t;
    CHECK_THROWS_AS(t.gather_rows(t.leaf(&table), {3}), ValidationError);
    CHECK_THROWS_AS(t.gather_rows(t.leaf(&table), {-1}), ValidationError);
}

TEST_CASE("cross entropy matches closed forms and gradients") {
    // Uniform logits over K classes -> ln K.
    Mat z = Mat::Zero(2, 24);
    ad::Tape t;
    ad::Var ce = t.cross_entropy_rows(t.leaf(&z), {0, 17});
    CHECK(t.val(ce)(0, 0) == doctest::Approx(std::log(24.0)).epsilon(1e-12));

    Rng rng(6);
    Mat logits = random_matrix(5, 7, rng, 2.0);
    std::vector<int> targets{0, 3, 6, 2, 2};
    auto loss = [&]() {
        ad::Tape tt;
        return tt.val(tt.cross_entropy_rows(tt.leaf(&logits), targets))(0, 0);
    };
    ad::Tape tt;
    ad::Var vl = tt.leaf(&logits);
    tt.backward(tt.cross_entropy_rows(vl, targets));
    CHECK(max_grad_error(logits, tt.grad_view(vl), loss) < 1.0);
}

TEST_CASE("mse matmul_nt mul_mask mean_of gradients") {
    Rng rng(7);
    Mat a = random_matrix(4, 3, rng);
    Mat b = random_matrix(5, 3, rng);
    Mat targets = random_matrix(4, 5, rng);
    Mat mask = Mat::Ones(4, 5);
    mask(0, 0) = 0.0;
    mask(2, 3) = 0.0;
    auto loss = [&]() {
        ad::Tape t;
        ad::Var prod = t.mul_mask(t.matmul_nt(t.leaf(&a), t.leaf(&b)), mask);
        ad::Var l1 = t.mse(prod, targets);
        ad::Var l2 = t.sum_squares(prod);
        return t.val(t.mean_of({l1, l2, l1}))(0, 0);
    };
    ad::Tape t;
    ad::Var va = t.leaf(&a);
    ad::Var vb = t.leaf(&b);
    ad::Var prod = t.mul_mask(t.matmul_nt(va, vb), mask);
    ad::Var l1 = t.mse(prod, targets);
    ad::Var l2 = t.sum_squares(prod);
    t.backward(t.mean_of({l1, l2, l1}));
    CHECK(max_grad_error(a, t.grad_view(va), loss) < 1.0);
    CHECK(max_grad_error(b, t.grad_view(vb), loss) < 1.0);
}

TEST_CASE("same leaf used twice accumulates both paths") {
    Mat x(1, 1);
    x(0, 0) = 3.0;
    ad::Tape t;
    ad::Var v = t.leaf(&x);
    ad::Var y = t.matmul(v, v);  // x^2
    t.backward(t.sum_squares(y));  // (x^2)^2 = x^4, d/dx = 4 x^3
    CHECK(t.grad_view(v)(0, 0) == doctest::Approx(4.0 * 27.0));
}

TEST_CASE("grad-disabled tape records values only") {
    Mat x = Mat::Ones(2, 2);
    ad::Tape t(/*grad_enabled=*/false);
    ad::Var v = t.leaf(&x);
    ad::Var y = t.matmul(v, v);
    CHECK_FALSE(t.requires_grad(y));
    CHECK(t.val(y)(0, 0) == doctest::Approx(2.0));
}
