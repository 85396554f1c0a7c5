#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <span>
#include <vector>

#include "mdssl/numerics.hpp"

namespace mdssl {

enum class BankNegatives { all, in_domain };

struct BankEntry {
  Vector embedding;
  int domain_id = -1;
};

/// FIFO queue of detached key embeddings, tagged by domain.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t dim);

  /// Appends in order, then evicts from the front until size() <= capacity().
  void enqueue(std::span<const BankEntry> entries);

  /// Views into the bank in FIFO order (oldest first). Invalidated by enqueue/clear.
  std::vector<std::span<const double>> negatives(int domain_id, BankNegatives mode) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return entries_.empty(); }
  std::size_t count(int domain_id) const;

  const BankEntry& at(std::size_t i) const { return entries_.at(i); }
  /// Sequence number of the i-th entry; enqueue order is strictly increasing.
  std::uint64_t sequence_at(std::size_t i) const { return front_seq_ + i; }

  void clear();

  /// True when the per-domain index agrees with the queue contents.
  bool consistent() const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<BankEntry> entries_;
  std::uint64_t front_seq_ = 0;
  std::map<int, std::deque<std::uint64_t>> by_domain_;
};

}  // namespace mdssl
