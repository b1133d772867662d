#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "biasbench/rng.hpp"
#include "biasbench/tensor.hpp"

using bb::Rng;
using bb::Tensor;

TEST_SUITE("tensor") {

TEST_CASE("constructors establish shape/data invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  for (float x : t.data) CHECK(x == 0.0f);

  Tensor f = Tensor::full({4}, 2.5f);
  CHECK(f.numel() == 4);
  for (float x : f.data) CHECK(x == 2.5f);

  Tensor v = Tensor::from({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(v.at(0, 0) == 1.0f);
  CHECK(v.at(0, 1) == 2.0f);
  CHECK(v.at(1, 0) == 3.0f);
  CHECK(v.at(1, 1) == 4.0f);

  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0f, 2.0f}), std::invalid_argument);
}

TEST_CASE("default tensor is empty") {
  Tensor t;
  CHECK(t.numel() == 0);
  CHECK(t.shape.empty());
  CHECK_FALSE(t.is_scalar());
}

TEST_CASE("scalar detection") {
  CHECK(Tensor({1}).is_scalar());
  CHECK(Tensor({1, 1}).is_scalar());
  CHECK_FALSE(Tensor({2}).is_scalar());
}

TEST_CASE("at is row-major") {
  Tensor t({3, 4});
  t.at(2, 1) = 7.0f;
  CHECK(t.data[2 * 4 + 1] == 7.0f);
  CHECK_THROWS_AS(Tensor({4}).rows(), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2, 2, 2}).at(0, 0), std::invalid_argument);
}

TEST_CASE("same_shape compares shapes only") {
  CHECK(Tensor({2, 3}).same_shape(Tensor::full({2, 3}, 1.0f)));
  CHECK_FALSE(Tensor({2, 3}).same_shape(Tensor({3, 2})));
}

TEST_CASE("require_finite flags NaN and infinity at the right index") {
  Tensor t = Tensor::full({3}, 1.0f);
  CHECK_NOTHROW(t.require_finite("test"));
  t.data[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_WITH_AS(t.require_finite("test"), doctest::Contains("index 1"),
                       std::runtime_error);
  t.data[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(t.require_finite("test"), std::runtime_error);
  t.data[1] = -std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(t.require_finite("test"), std::runtime_error);
  // Large-but-finite values pass.
  t.data[1] = 3.0e38f;
  CHECK_NOTHROW(t.require_finite("test"));
}

TEST_CASE("randn has the requested scale") {
  Rng rng(17);
  Tensor t = Tensor::randn({100000}, rng, 0.02);
  double sum = 0.0, sq = 0.0;
  for (float x : t.data) {
    sum += x;
    sq += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(t.numel());
  const double m = sum / n;
  const double sd = std::sqrt(sq / n - m * m);
  CHECK(std::abs(m) < 4.0 * 0.02 / std::sqrt(n));
  CHECK(sd == doctest::Approx(0.02).epsilon(0.02));
}

TEST_CASE("shape_str formats dimensions") {
  CHECK(Tensor({2, 3}).shape_str() == "[2,3]");
  CHECK(Tensor({5}).shape_str() == "[5]");
  CHECK(Tensor::count({}) == 0);
  CHECK(Tensor::count({2, 3, 4}) == 24);
}

}  // TEST_SUITE("tensor")
