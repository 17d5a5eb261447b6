#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "tbl/error.hpp"

namespace tbl {

/// Fixed-capacity FIFO that overwrites its oldest element when full.
/// Index 0 is the oldest element.
template <typename T>
class RingBuffer {
public:
    explicit RingBuffer(std::size_t capacity = 0) : data_(capacity) {}

    std::size_t capacity() const { return data_.size(); }
    std::size_t size() const { return count_; }
    bool empty() const { return count_ == 0; }
    bool full() const { return count_ == data_.size(); }

    void push_back(const T& v) {
        if (data_.empty()) return;
        data_[(head_ + count_) % data_.size()] = v;
        if (count_ < data_.size()) {
            ++count_;
        } else {
            head_ = (head_ + 1) % data_.size();
        }
    }

    const T& operator[](std::size_t i) const { return data_[(head_ + i) % data_.size()]; }

    const T& back() const {
        require(count_ > 0, ErrorKind::precondition, "ring buffer is empty");
        return (*this)[count_ - 1];
    }

    void clear() {
        head_ = 0;
        count_ = 0;
    }

    /// Oldest-first copy of the last `n` elements (all when n exceeds size).
    std::vector<T> tail(std::size_t n) const {
        n = std::min(n, count_);
        std::vector<T> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = (*this)[count_ - n + i];
        return out;
    }

    std::vector<T> to_vector() const { return tail(count_); }

private:
    std::vector<T> data_;
    std::size_t head_ = 0;
    std::size_t count_ = 0;
};

}  // namespace tbl
