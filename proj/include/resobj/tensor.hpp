#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace resobj {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles. An empty shape denotes a scalar.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() : data(1, 0.0) {}
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor vector(std::initializer_list<double> values);

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return shape.empty(); }
    double item() const;

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    std::span<double> values() { return data; }
    std::span<const double> values() const { return data; }

    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace resobj
