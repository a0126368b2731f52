#pragma once

// Per-recipient storage of neighbour predictions across time steps.

#include <algorithm>
#include <map>
#include <tuple>
#include <utility>
#include <vector>

#include "dnmpc/core_model.hpp"

namespace dnmpc {

template <class State>
class InfoStore {
 public:
  /// Stores `record` for `recipient` if it is strictly newer than what is
  /// held. Returns whether it was accepted.
  bool offer(AgentId recipient, const NeighborRecord<State>& record) {
    if (recipient == record.source) throw StructuralError("agent cannot hold a record about itself");
    const auto key = std::make_pair(recipient, record.source);
    auto it = latest_.find(key);
    if (it != latest_.end() && it->second.solved_at >= record.solved_at) return false;
    latest_.insert_or_assign(key, record);
    return true;
  }

  /// Queues a record that becomes available once advance() reaches `due`.
  void schedule(Time due, AgentId recipient, NeighborRecord<State> record) {
    pending_.push_back({due, recipient, std::move(record)});
  }

  /// Delivers every queued record with due time <= n.
  void advance(Time n) {
    std::stable_sort(pending_.begin(), pending_.end(), [](const InFlight& a, const InFlight& b) {
      return std::tie(a.due, a.recipient, a.record.source, a.record.solved_at) <
             std::tie(b.due, b.recipient, b.record.source, b.record.solved_at);
    });
    std::vector<InFlight> waiting;
    for (auto& f : pending_) {
      if (f.due <= n)
        offer(f.recipient, f.record);
      else
        waiting.push_back(std::move(f));
    }
    pending_ = std::move(waiting);
  }

  [[nodiscard]] const NeighborRecord<State>* find(AgentId recipient, AgentId source) const {
    auto it = latest_.find({recipient, source});
    return it == latest_.end() ? nullptr : &it->second;
  }

  [[nodiscard]] std::size_t in_flight() const { return pending_.size(); }

 private:
  struct InFlight {
    Time due;
    AgentId recipient;
    NeighborRecord<State> record;
  };
  std::map<std::pair<AgentId, AgentId>, NeighborRecord<State>> latest_;
  std::vector<InFlight> pending_;
};

}  // namespace dnmpc
