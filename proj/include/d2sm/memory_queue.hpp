#pragma once

// Memorised historic sampling: paired FIFO queues of detached feature rows.
// Position 0 is the newest row. Enqueueing a batch of N rows puts them at
// positions 0..N-1 in batch order, shifts older rows back by N and drops
// whatever falls past the capacity.

#include <deque>
#include <vector>

#include "d2sm/divergence.hpp"
#include "d2sm/error.hpp"
#include "d2sm/tensor.hpp"

namespace d2sm {

template <typename T>
struct QueueSnapshot {
  FeatureBatch<T> x;  // restored side
  FeatureBatch<T> y;  // clear side
  LiveMask live;
};

template <typename T>
class FeatureQueuePair {
 public:
  FeatureQueuePair(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
    detail::require(capacity >= 2, "queue capacity must be >= 2");
    detail::require(dim >= 1, "queue feature dimension must be >= 1");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return x_.size(); }
  std::size_t live_count() const { return live_count_; }

  const std::vector<T>& x_row(std::size_t k) const { return x_[k]; }
  const std::vector<T>& y_row(std::size_t k) const { return y_[k]; }

  void enqueue(const FeatureBatch<T>& fx, const FeatureBatch<T>& fy) {
    detail::require(fx.n == fy.n, "enqueue: restored and clear batches differ in size");
    detail::require(fx.n >= 1, "enqueue: empty batch");
    detail::require(fx.n <= capacity_, "enqueue: batch larger than queue capacity");
    detail::require(fx.d == dim_ && fy.d == dim_, "enqueue: feature dimension mismatch");
    for (std::size_t i = fx.n; i-- > 0;) {
      x_.emplace_front(fx.row(i).begin(), fx.row(i).end());
      y_.emplace_front(fy.row(i).begin(), fy.row(i).end());
    }
    while (x_.size() > capacity_) {
      x_.pop_back();
      y_.pop_back();
    }
    live_count_ = fx.n;
  }

  /// Copies the current contents, newest first, with the latest batch marked live.
  QueueSnapshot<T> snapshot() const {
    detail::require(size() >= 2, "snapshot: queue holds fewer than 2 rows");
    QueueSnapshot<T> s{FeatureBatch<T>(size(), dim_, Origin::restored), FeatureBatch<T>(size(), dim_, Origin::clear),
                       LiveMask::first(size(), live_count_)};
    for (std::size_t k = 0; k < size(); ++k) {
      std::copy(x_[k].begin(), x_[k].end(), s.x.row(k).begin());
      std::copy(y_[k].begin(), y_[k].end(), s.y.row(k).begin());
    }
    return s;
  }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t live_count_ = 0;
  std::deque<std::vector<T>> x_;
  std::deque<std::vector<T>> y_;
};

}  // namespace d2sm
