#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace crystal {

// Row-major dense matrix of doubles. Rows are views into one contiguous buffer.
class RowMatrix {
 public:
  RowMatrix() = default;
  explicit RowMatrix(std::size_t cols) : cols_(cols) {}
  RowMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return cols_ == 0 ? 0 : data_.size() / cols_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> row(std::size_t r) noexcept {
    assert(r < rows());
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    assert(r < rows());
    return {data_.data() + r * cols_, cols_};
  }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  void append_row(std::span<const double> values) {
    assert(values.size() == cols_);
    data_.insert(data_.end(), values.begin(), values.end());
  }
  void reserve_rows(std::size_t rows) { data_.reserve(rows * cols_); }
  void clear() noexcept { data_.clear(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  // Copies rows [first, first + count) into a new matrix.
  RowMatrix slice(std::size_t first, std::size_t count) const {
    RowMatrix out(cols_);
    out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_),
                     data_.begin() + static_cast<std::ptrdiff_t>((first + count) * cols_));
    return out;
  }

  friend bool operator==(const RowMatrix&, const RowMatrix&) = default;

 private:
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace crystal
