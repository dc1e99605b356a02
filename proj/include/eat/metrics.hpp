#pragma once

// Ranking and classification metrics: per-class average precision / mAP for
// multilabel tasks, plain accuracy for single-label tasks.

#include <algorithm>
#include <numeric>
#include <vector>

#include "eat/tensor.hpp"

namespace eat {

// AP = mean over positives of precision at each positive, scores sorted
// descending (stable on ties). Returns -1 when the class has no positives.
inline double average_precision(const std::vector<double> &scores, const std::vector<int> &targets) {
    if (scores.size() != targets.size()) throw std::invalid_argument("average_precision: length mismatch");
    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });
    double hits = 0.0, ap = 0.0;
    int positives = 0;
    for (size_t rank = 0; rank < order.size(); ++rank) {
        if (targets[order[rank]] == 1) {
            hits += 1.0;
            ap += hits / static_cast<double>(rank + 1);
            ++positives;
        }
    }
    return positives == 0 ? -1.0 : ap / positives;
}

struct MapResult {
    double map = 0.0;
    std::vector<double> per_class_ap;   // -1 marks a skipped (positive-free) class
    std::vector<int> skipped_classes;
};

// scores / targets: row-major N x C. Classes without positives are skipped
// and reported; an entirely positive-free target matrix is an error.
inline MapResult map_multilabel(const std::vector<std::vector<double>> &scores,
                                const std::vector<std::vector<int>> &targets) {
    if (scores.empty() || scores.size() != targets.size()) {
        throw std::invalid_argument("map_multilabel: need matching non-empty score/target rows");
    }
    const size_t classes = scores[0].size();
    MapResult out;
    out.per_class_ap.assign(classes, -1.0);
    double sum = 0.0;
    int counted = 0;
    std::vector<double> col_scores(scores.size());
    std::vector<int> col_targets(scores.size());
    for (size_t c = 0; c < classes; ++c) {
        for (size_t r = 0; r < scores.size(); ++r) {
            col_scores[r] = scores[r][c];
            col_targets[r] = targets[r][c];
        }
        double ap = average_precision(col_scores, col_targets);
        out.per_class_ap[c] = ap;
        if (ap < 0.0) {
            out.skipped_classes.push_back(static_cast<int>(c));
        } else {
            sum += ap;
            ++counted;
        }
    }
    if (counted == 0) throw DataError("map_multilabel: every class is positive-free");
    out.map = sum / counted;
    return out;
}

inline double accuracy(const std::vector<int> &predicted, const std::vector<int> &truth) {
    if (predicted.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
    if (predicted.empty()) throw std::invalid_argument("accuracy: empty input");
    int correct = 0;
    for (size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == truth[i];
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace eat
