#pragma once

// Confusion-matrix metrics. Macro-F1 averages per-class F1 over the full
// label space: classes absent from both gold and predictions contribute 0,
// keeping the denominator at C.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace drill {

class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes)
        : C_(num_classes), m_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
        if (num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
    }

    void add(int gold, int pred) {
        if (gold < 0 || gold >= C_ || pred < 0 || pred >= C_)
            throw std::out_of_range("label outside [0, C)");
        ++m_[static_cast<std::size_t>(gold) * C_ + pred];
        ++total_;
    }

    std::int64_t count(int gold, int pred) const {
        return m_[static_cast<std::size_t>(gold) * C_ + pred];
    }
    int num_classes() const { return C_; }
    std::int64_t total() const { return total_; }

    double f1_for(int c) const {
        std::int64_t tp = count(c, c), fp = 0, fn = 0;
        for (int g = 0; g < C_; ++g)
            if (g != c) fp += count(g, c);
        for (int p = 0; p < C_; ++p)
            if (p != c) fn += count(c, p);
        std::int64_t denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }

    double macro_f1() const {
        double sum = 0.0;
        for (int c = 0; c < C_; ++c) sum += f1_for(c);
        return sum / C_;
    }

    // macro-F1 restricted to one dataset's class block [offset, offset+count)
    double macro_f1_block(int offset, int count) const {
        double sum = 0.0;
        for (int c = offset; c < offset + count; ++c) sum += f1_for(c);
        return sum / count;
    }

private:
    int C_;
    std::vector<std::int64_t> m_;  // gold-major
    std::int64_t total_ = 0;
};

inline double macro_f1(const std::vector<int>& predictions, const std::vector<int>& gold,
                       int num_classes) {
    if (predictions.empty() || gold.empty())
        throw std::invalid_argument("macro_f1: empty input");
    if (predictions.size() != gold.size())
        throw std::invalid_argument("macro_f1: length mismatch");
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predictions[i]);
    return cm.macro_f1();
}

}  // namespace drill
