#include "sttvc/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sttvc {

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::int64_t shape_numel(const Shape& shape)
{
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill)
{
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (shape_numel(shape_) != static_cast<std::int64_t>(data_.size()))
        throw ShapeError("data size does not match shape " + shape_str(shape_));
}

int Tensor::dim(int i) const
{
    if (i < 0) i += rank();
    if (i < 0 || i >= rank()) throw ShapeError("dimension index out of range for " + shape_str(shape_));
    return shape_[static_cast<std::size_t>(i)];
}

double Tensor::item() const
{
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const
{
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v)
{
    for (double& d : data_) d = v;
}

bool Tensor::all_finite() const
{
    for (double d : data_)
        if (!std::isfinite(d)) return false;
    return true;
}

Tensor& Tensor::operator+=(const Tensor& other)
{
    require_same_shape(*this, other, "Tensor::operator+=");
    const std::size_t n = data_.size();
    const double* src = other.data_.data();
    double* dst = data_.data();
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
    return *this;
}

Tensor& Tensor::operator*=(double s)
{
    for (double& d : data_) d *= s;
    return *this;
}

void require_shape(const Tensor& t, const Shape& shape, const char* what)
{
    if (t.shape() != shape)
        throw ShapeError(std::string(what) + ": expected " + shape_str(shape) + ", got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what)
{
    if (a.shape() != b.shape())
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace sttvc
