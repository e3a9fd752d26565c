#include "cyc/tensor.hpp"

#include <cmath>
#include <sstream>

#include "cyc/error.hpp"

namespace cyc {

namespace {
std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}
}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  for (std::size_t e : shape_) {
    if (e == 0)
      throw Error(Error::Kind::shape, "zero extent in shape " + shape_str(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size())
    throw Error(Error::Kind::shape,
                "shape " + shape_str(shape_) + " does not match data length " +
                    std::to_string(data_.size()));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::vec(std::vector<double> data) {
  Shape shape{data.size()};
  return Tensor(std::move(shape), std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1)
    throw Error(Error::Kind::contract,
                "item() on tensor of size " + std::to_string(data_.size()));
  return data_[0];
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

bool Tensor::all_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

void check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite())
    throw Error(Error::Kind::contract,
                std::string("non-finite value produced by ") + where);
}

}  // namespace cyc
