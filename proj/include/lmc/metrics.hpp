#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lmc/errors.hpp"
#include "lmc/format.hpp"

namespace lmc {

/// Lower-triangular accuracy matrix B with 1-based (i, j) indexing.
/// Rows must fill in order: B_{i,j} may be written only when rows < i are
/// complete, and cells above the diagonal are rejected.
class AccuracyMatrix {
  public:
    AccuracyMatrix() = default;
    explicit AccuracyMatrix(int t) : cells_(static_cast<std::size_t>(t)) {
        if (t <= 0) throw ContractError("AccuracyMatrix: task count must be positive");
        for (int i = 0; i < t; ++i)
            cells_[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(i) + 1);
    }

    int task_count() const { return static_cast<int>(cells_.size()); }

    bool is_set(int i, int j) const {
        check_range(i, j);
        return cells_[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)].has_value();
    }

    double at(int i, int j) const {
        check_range(i, j);
        const auto& cell = cells_[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)];
        if (!cell) throw ContractError("AccuracyMatrix: cell unset");
        return *cell;
    }

    void set(int i, int j, double value) {
        check_range(i, j);
        if (value < 0.0 || value > 1.0)
            throw ContractError("AccuracyMatrix: accuracy outside [0,1]");
        for (int r = 1; r < i; ++r)
            if (!row_complete(r))
                throw ContractError("AccuracyMatrix: earlier row incomplete");
        cells_[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)] = value;
    }

    bool row_complete(int i) const {
        if (i < 1 || i > task_count()) throw ContractError("AccuracyMatrix: row out of range");
        for (const auto& cell : cells_[static_cast<std::size_t>(i - 1)])
            if (!cell) return false;
        return true;
    }

    bool operator==(const AccuracyMatrix& other) const { return cells_ == other.cells_; }

  private:
    void check_range(int i, int j) const {
        if (i < 1 || i > task_count()) throw ContractError("AccuracyMatrix: row out of range");
        if (j < 1) throw ContractError("AccuracyMatrix: column out of range");
        if (j > i) throw ContractError("AccuracyMatrix: upper-triangular cell rejected");
    }

    std::vector<std::vector<std::optional<double>>> cells_;
};

/// AA = mean of row t.
inline double average_accuracy(const AccuracyMatrix& B, int t) {
    if (t < 1 || t > B.task_count()) throw ContractError("average_accuracy: row out of range");
    if (!B.row_complete(t)) throw ContractError("average_accuracy: row incomplete");
    double sum = 0.0;
    for (int j = 1; j <= t; ++j) sum += B.at(t, j);
    return sum / static_cast<double>(t);
}

/// AF = (1/(t-1)) sum_{j<t} (B_{t,j} - B_{j,j}); negative means forgetting.
inline double average_forgetting(const AccuracyMatrix& B, int t) {
    if (t < 2) throw ContractError("average_forgetting: needs t >= 2");
    if (t > B.task_count()) throw ContractError("average_forgetting: row out of range");
    if (!B.row_complete(t)) throw ContractError("average_forgetting: row incomplete");
    double sum = 0.0;
    for (int j = 1; j < t; ++j) sum += B.at(t, j) - B.at(j, j);
    return sum / static_cast<double>(t - 1);
}

/// t x t grid, `NA` in unset cells, canonical 9-digit floats.
inline void save_matrix_csv(const AccuracyMatrix& B, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    int t = B.task_count();
    for (int i = 1; i <= t; ++i) {
        for (int j = 1; j <= t; ++j) {
            if (j > 1) os << ',';
            if (j <= i && B.is_set(i, j))
                os << g9(B.at(i, j));
            else
                os << "NA";
        }
        os << "\n";
    }
    if (!os) throw IoError("write failed: " + path);
}

inline AccuracyMatrix load_matrix_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> row;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("empty matrix csv: " + path);
    auto t = static_cast<int>(rows.size());
    AccuracyMatrix B(t);
    for (int i = 1; i <= t; ++i) {
        if (static_cast<int>(rows[static_cast<std::size_t>(i - 1)].size()) != t)
            throw IoError("ragged matrix csv: " + path);
        for (int j = 1; j <= t; ++j) {
            const std::string& cell = rows[static_cast<std::size_t>(i - 1)]
                                          [static_cast<std::size_t>(j - 1)];
            if (cell == "NA") {
                continue;
            }
            if (j > i) throw IoError("value above the diagonal in " + path);
            B.set(i, j, std::stod(cell));
        }
    }
    return B;
}

}  // namespace lmc
