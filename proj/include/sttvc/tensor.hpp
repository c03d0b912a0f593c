#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sttvc {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor of doubles. Feature maps are C x H x W, token
// sequences are N x C.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // C x H x W accessors.
    double& at(int c, int y, int x) { return data_[index3(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index3(c, y, x)]; }
    // N x C accessors.
    double& at(int n, int c) { return data_[static_cast<std::size_t>(n) * shape_[1] + c]; }
    double at(int n, int c) const { return data_[static_cast<std::size_t>(n) * shape_[1] + c]; }

    double item() const;
    Tensor reshaped(Shape shape) const;
    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    Tensor& operator+=(const Tensor& other);
    Tensor& operator*=(double s);

private:
    std::size_t index3(int c, int y, int x) const
    {
        return (static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x;
    }

    Shape shape_;
    std::vector<double> data_;
};

void require_shape(const Tensor& t, const Shape& shape, const char* what);
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace sttvc
