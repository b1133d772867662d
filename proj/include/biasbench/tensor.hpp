#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "biasbench/rng.hpp"

namespace bb {

// Dense row-major float tensor. Shapes are explicit; the invariant
// product(shape) == data.size() holds after every constructor and op.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shp) : shape(std::move(shp)) {
    data.assign(count(shape), 0.0f);
  }

  static Tensor zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<std::size_t> shp, float v) {
    Tensor t(std::move(shp));
    for (float& x : t.data) x = v;
    return t;
  }

  static Tensor from(std::vector<std::size_t> shp, std::vector<float> values) {
    Tensor t;
    t.shape = std::move(shp);
    t.data = std::move(values);
    if (count(t.shape) != t.data.size())
      throw std::invalid_argument("Tensor::from: shape " + shape_str(t.shape) + " does not match " +
                                  std::to_string(t.data.size()) + " values");
    return t;
  }

  static Tensor randn(std::vector<std::size_t> shp, Rng& rng, double scale) {
    Tensor t(std::move(shp));
    for (float& x : t.data) x = static_cast<float>(scale * rng.next_normal());
    return t;
  }

  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return numel() == 1; }

  std::size_t rows() const {
    require_2d("rows");
    return shape[0];
  }
  std::size_t cols() const {
    require_2d("cols");
    return shape[1];
  }

  float& at(std::size_t r, std::size_t c) {
    require_2d("at");
    return data[r * shape[1] + c];
  }
  float at(std::size_t r, std::size_t c) const {
    require_2d("at");
    return data[r * shape[1] + c];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // NaN/Inf anywhere is an error state; `who` names the producing op.
  void require_finite(const char* who) const {
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &data[i], sizeof(bits));
      if ((bits & 0x7f800000u) == 0x7f800000u)
        throw std::runtime_error(std::string(who) + ": non-finite value at flat index " +
                                 std::to_string(i));
    }
  }

  static std::size_t count(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (std::size_t e : shp) n *= e;
    return shp.empty() ? 0 : n;
  }

  static std::string shape_str(const std::vector<std::size_t>& shp) {
    std::string s = "[";
    for (std::size_t i = 0; i < shp.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shp[i]);
    }
    return s + "]";
  }
  std::string shape_str() const { return shape_str(shape); }

 private:
  void require_2d(const char* who) const {
    if (shape.size() != 2)
      throw std::invalid_argument(std::string("Tensor::") + who + ": need 2-D, have " + shape_str());
  }
};

}  // namespace bb
