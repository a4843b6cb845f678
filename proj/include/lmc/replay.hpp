#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <map>
#include <vector>

#include "lmc/data.hpp"
#include "lmc/errors.hpp"
#include "lmc/rng.hpp"

namespace lmc {

struct ReplayEntry {
    Eigen::VectorXd x;
    double y = 0.0;
    int task = 0;
};

/// Fixed-capacity buffer with even per-task quotas: capacity is split
/// floor-evenly across tasks seen, remainder slots to the earliest tasks.
/// Selection and downsampling are uniform without replacement.
class ReplayBuffer {
  public:
    explicit ReplayBuffer(Eigen::Index capacity = 500) : capacity_(capacity) {
        if (capacity <= 0) throw ConfigError("replay capacity must be positive");
    }

    Eigen::Index capacity() const { return capacity_; }

    Eigen::Index size() const {
        Eigen::Index n = 0;
        for (const auto& [task, entries] : per_task_) n += static_cast<Eigen::Index>(entries.size());
        return n;
    }

    bool contains_task(int task) const { return per_task_.count(task) > 0; }

    /// Flattened entries, ascending task id, stored order within a task.
    std::vector<ReplayEntry> entries() const {
        std::vector<ReplayEntry> out;
        for (const auto& [task, entries] : per_task_)
            out.insert(out.end(), entries.begin(), entries.end());
        return out;
    }

    Batch as_batch() const {
        Batch b;
        auto all = entries();
        if (all.empty()) return b;
        b.inputs.resize(all.front().x.size(), static_cast<Eigen::Index>(all.size()));
        b.labels.resize(static_cast<Eigen::Index>(all.size()));
        for (std::size_t k = 0; k < all.size(); ++k) {
            b.inputs.col(static_cast<Eigen::Index>(k)) = all[k].x;
            b.labels(static_cast<Eigen::Index>(k)) = all[k].y;
        }
        return b;
    }

    /// Rebalances quotas for the incoming task and stores its selection.
    /// Rng draws: downsampling of existing tasks in ascending id order first,
    /// then the new task's sample; tasks already within quota draw nothing.
    void update(const TaskDataset& task, Rng& rng) {
        if (per_task_.count(task.id)) throw ContractError("replay_update: task already stored");
        auto tasks_seen = static_cast<Eigen::Index>(per_task_.size()) + 1;
        Eigen::Index base = capacity_ / tasks_seen;
        Eigen::Index rem = capacity_ % tasks_seen;
        // quota by seniority rank: earliest task ids absorb the remainder
        std::vector<int> ids;
        for (const auto& [id, entries] : per_task_) ids.push_back(id);
        ids.push_back(task.id);
        std::sort(ids.begin(), ids.end());
        std::map<int, Eigen::Index> quota;
        for (std::size_t rank = 0; rank < ids.size(); ++rank)
            quota[ids[rank]] = base + (static_cast<Eigen::Index>(rank) < rem ? 1 : 0);
        for (auto& [id, entries] : per_task_) {
            auto n = static_cast<Eigen::Index>(entries.size());
            if (n > quota[id]) {
                auto keep = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                           static_cast<std::size_t>(quota[id]));
                std::vector<ReplayEntry> kept;
                kept.reserve(keep.size());
                for (std::size_t idx : keep) kept.push_back(entries[idx]);
                entries = std::move(kept);
            }
        }
        store_new(task, quota[task.id], rng);
    }

  private:
    void store_new(const TaskDataset& task, Eigen::Index quota, Rng& rng) {
        Eigen::Index n = task.train.size();
        std::vector<ReplayEntry>& slot = per_task_[task.id];
        if (n <= quota) {
            for (Eigen::Index j = 0; j < n; ++j)
                slot.push_back({task.train.inputs.col(j), task.train.labels(j), task.id});
        } else {
            auto pick = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                       static_cast<std::size_t>(quota));
            for (std::size_t idx : pick)
                slot.push_back({task.train.inputs.col(static_cast<Eigen::Index>(idx)),
                                task.train.labels(static_cast<Eigen::Index>(idx)), task.id});
        }
    }

    Eigen::Index capacity_;
    std::map<int, std::vector<ReplayEntry>> per_task_;
};

inline void replay_update(ReplayBuffer& buffer, const TaskDataset& task, Rng& rng) {
    buffer.update(task, rng);
}

}  // namespace lmc
