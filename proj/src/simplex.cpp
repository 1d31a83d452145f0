#include "cmpstomo/simplex.hpp"

#include <string>

#include "cmpstomo/error.hpp"

namespace cmpstomo {

Index simplex_size(int order, Index count) {
    // C(count + order - 1, order), built up incrementally to stay exact.
    Index out = 1;
    for (int k = 1; k <= order; ++k) out = out * (count + k - 1) / k;
    return out;
}

SimplexIndexer::SimplexIndexer(int order, Index count)
    : order_(order), count_(count), size_(0) {
    if (order < 1 || count < 1) {
        fail(ErrorKind::InvalidArgument, "simplex needs positive order and grid count");
    }
    const Index rows = count + order + 1;
    binom_.assign(static_cast<std::size_t>(rows * (order + 1)), 0);
    for (Index a = 0; a < rows; ++a) {
        binom_[static_cast<std::size_t>(a * (order + 1))] = 1;
        for (int b = 1; b <= order && b <= a; ++b) {
            binom_[static_cast<std::size_t>(a * (order + 1) + b)] =
                binom_[static_cast<std::size_t>((a - 1) * (order + 1) + b - 1)] +
                (b <= a - 1 ? binom_[static_cast<std::size_t>((a - 1) * (order + 1) + b)] : 0);
        }
    }
    size_ = tails(order, 0);
}

Index SimplexIndexer::tails(int length, Index lo) const {
    if (length == 0) return 1;
    const Index values = count_ - lo;
    if (values <= 0) return 0;
    return binom_[static_cast<std::size_t>((values + length - 1) * (order_ + 1) + length)];
}

Index SimplexIndexer::rank(std::span<const int> index) const {
    if (static_cast<int>(index.size()) != order_) {
        fail(ErrorKind::DimensionMismatch, "multi-index has the wrong length");
    }
    Index offset = 0;
    Index lo = 0;
    for (int j = 0; j < order_; ++j) {
        const Index v = index[static_cast<std::size_t>(j)];
        if (v < lo || v >= count_) {
            fail(ErrorKind::SimplexViolation,
                 "multi-index is not non-decreasing inside the grid");
        }
        for (Index w = lo; w < v; ++w) offset += tails(order_ - j - 1, w);
        lo = v;
    }
    return offset;
}

void SimplexIndexer::unrank(Index offset, std::span<int> index) const {
    if (offset < 0 || offset >= size_) fail(ErrorKind::InvalidArgument, "simplex offset out of range");
    Index lo = 0;
    for (int j = 0; j < order_; ++j) {
        Index v = lo;
        for (;;) {
            const Index block = tails(order_ - j - 1, v);
            if (offset < block) break;
            offset -= block;
            ++v;
        }
        index[static_cast<std::size_t>(j)] = static_cast<int>(v);
        lo = v;
    }
}

bool SimplexIndexer::next(std::span<int> index, int* first_changed) const {
    int j = order_ - 1;
    while (j >= 0 && index[static_cast<std::size_t>(j)] == count_ - 1) --j;
    if (j < 0) return false;
    const int v = index[static_cast<std::size_t>(j)] + 1;
    for (int k = j; k < order_; ++k) index[static_cast<std::size_t>(k)] = v;
    if (first_changed) *first_changed = j;
    return true;
}

}  // namespace cmpstomo
