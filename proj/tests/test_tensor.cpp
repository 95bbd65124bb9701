#include <catch2/catch_amalgamated.hpp>

#include "npcnet/tensor.hpp"

using npcnet::Tensor;

TEST_CASE("tensor shapes and indexing") {
  Tensor m = Tensor::matrix(2, 3);
  REQUIRE(m.rank() == 2);
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 3);
  REQUIRE(m.size() == 6);

  m(1, 2) = 7.0;
  REQUIRE(m.at(5) == 7.0);  // row-major layout

  Tensor cube({2, 3, 4});
  cube(1, 2, 3) = -1.0;
  REQUIRE(cube.at(1 * 12 + 2 * 4 + 3) == -1.0);

  REQUIRE_THROWS_AS(Tensor({1, 2, 3, 4}), std::invalid_argument);
}

TEST_CASE("scalar tensors") {
  Tensor s = Tensor::scalar(3.5);
  REQUIRE(s.rank() == 0);
  REQUIRE(s.size() == 1);
  REQUIRE(s.scalar_value() == 3.5);

  Tensor m = Tensor::matrix(1, 2);
  REQUIRE_THROWS_AS(m.scalar_value(), std::logic_error);
}

TEST_CASE("row literal and equality") {
  Tensor r = Tensor::row({1.0, 2.0, 3.0});
  REQUIRE(r.rows() == 1);
  REQUIRE(r.cols() == 3);
  REQUIRE(r(0, 1) == 2.0);

  Tensor r2 = Tensor::row({1.0, 2.0, 3.0});
  REQUIRE(r == r2);
  r2(0, 0) = 9.0;
  REQUIRE(!(r == r2));

  Tensor different_shape = Tensor::matrix(3, 1);
  REQUIRE(!(r == different_shape));
}

TEST_CASE("finiteness and norms") {
  Tensor m = Tensor::matrix(2, 2, 2.0);
  REQUIRE(m.all_finite());
  REQUIRE(m.squared_norm() == 16.0);

  m(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE(!m.all_finite());
}
