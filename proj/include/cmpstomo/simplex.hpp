#pragma once

#include <span>
#include <vector>

#include "cmpstomo/types.hpp"

namespace cmpstomo {

/// Bijection between non-decreasing multi-indices i_1 <= ... <= i_n over
/// [0, count) and flat offsets in lexicographic order.
class SimplexIndexer {
public:
    SimplexIndexer(int order, Index count);

    int order() const { return order_; }
    Index count() const { return count_; }
    Index size() const { return size_; }

    Index rank(std::span<const int> index) const;
    void unrank(Index offset, std::span<int> index) const;

    /// Advances `index` to its lexicographic successor; returns false after
    /// the last element. Returns the first position that changed via
    /// `first_changed` when non-null.
    bool next(std::span<int> index, int* first_changed = nullptr) const;

    std::vector<int> first() const { return std::vector<int>(static_cast<std::size_t>(order_), 0); }

private:
    // Number of non-decreasing sequences of `length` values in [lo, count).
    Index tails(int length, Index lo) const;

    int order_;
    Index count_;
    Index size_;
    std::vector<Index> binom_;  // binom_[a * (order_ + 1) + b] = C(a, b)
};

/// C(count + order - 1, order): number of simplex entries.
Index simplex_size(int order, Index count);

}  // namespace cmpstomo
