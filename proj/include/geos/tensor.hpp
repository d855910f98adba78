#pragma once

#include <cassert>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace geos {

uint64_t fnv1a_bytes(const void* p, size_t n, uint64_t h = 1469598103934665603ULL);

// Dense row-major tensor of doubles, rank 1..4.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        int64_t n = 1;
        for (int d : shape_) {
            assert(d > 0);
            n *= d;
        }
        data_.assign(static_cast<size_t>(n), 0.0);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& operator()(int a, int b) {
        return data_[static_cast<size_t>(a) * shape_[1] + b];
    }
    double operator()(int a, int b) const {
        return data_[static_cast<size_t>(a) * shape_[1] + b];
    }
    double& operator()(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    double operator()(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void add_(const Tensor& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }
    void scale_(double s) {
        for (double& v : data_) v *= s;
    }

    bool bitwise_equal(const Tensor& o) const {
        return shape_ == o.shape_ &&
               std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(double)) == 0;
    }

    uint64_t byte_checksum() const {
        return fnv1a_bytes(data_.data(), data_.size() * sizeof(double));
    }

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

}  // namespace geos
