#pragma once

// Manifest: a CSV with columns `path,labels`. `labels` is a semicolon-
// separated list of class names, empty for unlabeled pre-training rows.
// Relative paths resolve against the manifest's own directory.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "eat/tensor.hpp"

namespace eat {

struct ManifestRow {
    std::string path;
    std::vector<std::string> labels;
};

enum class TaskKind { Unlabeled, SingleLabel, Multilabel };

struct Manifest {
    std::vector<ManifestRow> rows;
    std::vector<std::string> class_names;  // sorted; class index = position
    std::string base_dir;

    std::string full_path(size_t row) const {
        std::filesystem::path p(rows[row].path);
        if (p.is_absolute() || base_dir.empty()) return p.string();
        return (std::filesystem::path(base_dir) / p).string();
    }

    int class_index(const std::string &name) const {
        auto it = std::lower_bound(class_names.begin(), class_names.end(), name);
        if (it == class_names.end() || *it != name) return -1;
        return static_cast<int>(it - class_names.begin());
    }

    bool all_unlabeled() const {
        for (const auto &r : rows) {
            if (!r.labels.empty()) return false;
        }
        return true;
    }
};

inline Manifest load_manifest(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    Manifest m;
    m.base_dir = std::filesystem::path(path).parent_path().string();

    std::set<std::string> vocab;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first && line == "path,labels") {
            first = false;
            continue;
        }
        first = false;
        auto comma = line.find(',');
        ManifestRow row;
        if (comma == std::string::npos) {
            row.path = line;
        } else {
            row.path = line.substr(0, comma);
            std::string labels = line.substr(comma + 1);
            size_t start = 0;
            while (start <= labels.size() && !labels.empty()) {
                size_t semi = labels.find(';', start);
                std::string label =
                    semi == std::string::npos ? labels.substr(start) : labels.substr(start, semi - start);
                if (!label.empty()) {
                    row.labels.push_back(label);
                    vocab.insert(label);
                }
                if (semi == std::string::npos) break;
                start = semi + 1;
            }
        }
        if (row.path.empty()) throw DataError("manifest row with empty path in " + path);
        m.rows.push_back(std::move(row));
    }
    if (m.rows.empty()) throw DataError("manifest is empty: " + path);
    m.class_names.assign(vocab.begin(), vocab.end());
    return m;
}

}  // namespace eat
