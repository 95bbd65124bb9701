#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "npcnet/autodiff.hpp"
#include "npcnet/rng.hpp"

using namespace npcnet;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Var a = make_parameter(Tensor::row({1.0, -2.0, 3.0}), "a");
  Var b = make_parameter(Tensor::row({0.5, 4.0, -1.0}), "b");

  REQUIRE(add(a, b).value().at(1) == 2.0);
  REQUIRE(sub(a, b).value().at(0) == 0.5);
  REQUIRE(mul(a, b).value().at(2) == -3.0);
  REQUIRE(scale(a, -2.0).value().at(0) == -2.0);
  REQUIRE(add_const(a, 10.0).value().at(1) == 8.0);
  REQUIRE_THAT(vtanh(a).value().at(0), Catch::Matchers::WithinAbs(std::tanh(1.0), 1e-15));
  REQUIRE(vrelu(a).value().at(1) == 0.0);
  REQUIRE(vrelu(a).value().at(2) == 3.0);
  REQUIRE(sum_all(a).scalar_value() == 2.0);
  REQUIRE_THAT(mean_all(a).scalar_value(), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE(sq_norm(a).scalar_value() == 14.0);
  REQUIRE(max_all(a).scalar_value() == 3.0);

  REQUIRE_THROWS_AS(add(a, make_parameter(Tensor::matrix(2, 2), "c")),
                    std::invalid_argument);
}

TEST_CASE("matmul forward against hand result") {
  Var a = make_parameter(Tensor::row({1.0, 2.0}), "a");
  Tensor bm = Tensor::matrix(2, 3);
  bm(0, 0) = 1;
  bm(0, 1) = 2;
  bm(0, 2) = 3;
  bm(1, 0) = 4;
  bm(1, 1) = 5;
  bm(1, 2) = 6;
  Var b = make_parameter(bm, "b");
  Tensor c = matmul(a, b).value();
  REQUIRE(c(0, 0) == 9.0);
  REQUIRE(c(0, 1) == 12.0);
  REQUIRE(c(0, 2) == 15.0);
}

TEST_CASE("softmax rows sum to one and order is preserved") {
  Tensor logits = Tensor::matrix(2, 3);
  logits(0, 0) = 1.0;
  logits(0, 1) = 2.0;
  logits(0, 2) = 0.5;
  logits(1, 0) = -5.0;
  logits(1, 1) = 0.0;
  logits(1, 2) = 5.0;
  Var p = softmax_rows(make_parameter(logits, "l"));
  for (std::size_t i = 0; i < 2; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += p.value()(i, j);
    REQUIRE_THAT(s, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  REQUIRE(p.value()(0, 1) > p.value()(0, 0));
  REQUIRE(p.value()(1, 2) > 0.99);
}

TEST_CASE("gather, stack, slice, reshape plumbing") {
  Rng rng(11);
  Tensor table = random_matrix(rng, 5, 3);
  Var t = make_parameter(table, "t");

  Var g = gather_rows(t, {4, 0, 4});
  REQUIRE(g.value().rows() == 3);
  REQUIRE(g.value()(0, 1) == table(4, 1));
  REQUIRE(g.value()(2, 2) == table(4, 2));
  REQUIRE_THROWS_AS(gather_rows(t, {5}), std::out_of_range);

  Var s = slice_rows(t, 1, 3);
  REQUIRE(s.value().rows() == 2);
  REQUIRE(s.value()(0, 0) == table(1, 0));
  REQUIRE_THROWS_AS(slice_rows(t, 3, 2), std::invalid_argument);

  Var st = vstack({slice_rows(t, 0, 2), slice_rows(t, 2, 5)});
  REQUIRE(st.value().rows() == 5);
  REQUIRE(st.value()(4, 2) == table(4, 2));

  Var r = reshape(t, {3, 5});
  REQUIRE(r.value().rows() == 3);
  REQUIRE(r.value()(0, 4) == table.at(4));  // row-major data order kept
  REQUIRE_THROWS_AS(reshape(t, {4, 4}), std::invalid_argument);
}

TEST_CASE("backward accumulates through shared subexpressions") {
  // y = sum((a + a) * a) = sum(2 a^2), dy/da = 4a
  Var a = make_parameter(Tensor::row({1.0, -3.0}), "a");
  Var y = sum_all(mul(add(a, a), a));
  backward(y);
  REQUIRE_THAT(a.grad().at(0), Catch::Matchers::WithinAbs(4.0, 1e-12));
  REQUIRE_THAT(a.grad().at(1), Catch::Matchers::WithinAbs(-12.0, 1e-12));

  // leaf gradients accumulate across calls until zeroed
  backward(y);
  REQUIRE_THAT(a.grad().at(0), Catch::Matchers::WithinAbs(8.0, 1e-12));
  a.zero_grad();
  REQUIRE(a.grad().at(0) == 0.0);
}

TEST_CASE("gradient check per operation") {
  Rng rng(23);
  Var a = make_parameter(random_matrix(rng, 3, 4), "a");
  Var b = make_parameter(random_matrix(rng, 3, 4), "b");
  Var w = make_parameter(random_matrix(rng, 4, 2), "w");
  Var r = make_parameter(random_matrix(rng, 1, 4), "r");
  Tensor mask = random_matrix(rng, 3, 4);
  Tensor shift = random_matrix(rng, 3, 4);

  struct Case {
    const char* label;
    std::function<Var()> f;
  };
  const std::vector<Case> cases = {
      {"add", [&] { return sum_all(add(a, b)); }},
      {"sub+mul", [&] { return sum_all(mul(sub(a, b), a)); }},
      {"scale+add_const", [&] { return sum_all(scale(add_const(a, 0.3), -1.7)); }},
      {"mul_tensor", [&] { return sum_all(mul_tensor(a, mask)); }},
      {"add_tensor", [&] { return sq_norm(add_tensor(a, shift)); }},
      {"matmul", [&] { return sq_norm(matmul(a, w)); }},
      {"add_row", [&] { return sq_norm(add_row(a, r)); }},
      {"tanh", [&] { return sum_all(vtanh(a)); }},
      {"softmax", [&] { return sq_norm(softmax_rows(a)); }},
      {"gather", [&] { return sq_norm(gather_rows(a, {2, 0, 2})); }},
      {"vstack", [&] { return sq_norm(vstack({a, b})); }},
      {"slice", [&] { return sq_norm(slice_rows(a, 1, 3)); }},
      {"reshape", [&] { return sq_norm(reshape(a, {4, 3})); }},
      {"mean_rows", [&] { return sq_norm(mean_rows(a)); }},
      {"mean_all", [&] { return mean_all(mul(a, a)); }},
      {"sqrt", [&] { return sum_all(vsqrt(add_const(mul(a, a), 1.0))); }},
      {"log", [&] { return sum_all(vlog(add_const(mul(a, a), 1.0))); }},
      {"pow", [&] { return sum_all(pow_const(add_const(mul(a, a), 0.5), 1.7)); }},
      {"clamp", [&] { return sq_norm(clamp(a, -0.9, 0.9)); }},
  };

  for (const auto& c : cases) {
    INFO(c.label);
    GradCheckReport rep = grad_check(c.f, {a, b, w, r});
    INFO("worst " << rep.worst.param << "[" << rep.worst.index << "] analytic "
                  << rep.worst.analytic << " fd " << rep.worst.finite_diff);
    REQUIRE(rep.passed);
  }
}

TEST_CASE("relu and max gradients away from kinks") {
  Rng rng(31);
  Tensor t = random_matrix(rng, 3, 3);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (std::abs(t.at(i)) < 0.1) t.at(i) = 0.5;  // keep clear of the kink
  }
  Var a = make_parameter(t, "a");
  GradCheckReport rep = grad_check([&] { return sum_all(vrelu(a)); }, {a});
  REQUIRE(rep.passed);

  rep = grad_check([&] { return max_all(a); }, {a});
  REQUIRE(rep.passed);
}

TEST_CASE("constants receive no gradient") {
  Var a = make_parameter(Tensor::row({2.0}), "a");
  Var c = make_constant(Tensor::row({3.0}));
  Var y = sum_all(mul(a, c));
  backward(y);
  REQUIRE(a.grad().at(0) == 3.0);
  REQUIRE(c.grad().at(0) == 0.0);
}
