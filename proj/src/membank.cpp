#include "mdssl/membank.hpp"

#include <string>

#include "mdssl/errors.hpp"

namespace mdssl {

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (dim == 0) throw ConfigError("memory bank dimension must be >= 1");
}

void MemoryBank::enqueue(std::span<const BankEntry> entries) {
  for (const auto& e : entries) {
    if (e.embedding.size() != dim_) {
      throw ShapeError("memory bank: embedding length " + std::to_string(e.embedding.size()) + " != " +
                       std::to_string(dim_));
    }
  }
  for (const auto& e : entries) {
    by_domain_[e.domain_id].push_back(front_seq_ + entries_.size());
    entries_.push_back(e);
  }
  while (entries_.size() > capacity_) {
    auto it = by_domain_.find(entries_.front().domain_id);
    it->second.pop_front();
    if (it->second.empty()) by_domain_.erase(it);
    entries_.pop_front();
    ++front_seq_;
  }
}

std::vector<std::span<const double>> MemoryBank::negatives(int domain_id, BankNegatives mode) const {
  std::vector<std::span<const double>> out;
  if (mode == BankNegatives::all) {
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.embedding);
    return out;
  }
  auto it = by_domain_.find(domain_id);
  if (it == by_domain_.end()) return out;
  out.reserve(it->second.size());
  for (std::uint64_t seq : it->second) out.emplace_back(entries_[static_cast<std::size_t>(seq - front_seq_)].embedding);
  return out;
}

std::size_t MemoryBank::count(int domain_id) const {
  auto it = by_domain_.find(domain_id);
  return it == by_domain_.end() ? 0 : it->second.size();
}

void MemoryBank::clear() {
  front_seq_ += entries_.size();
  entries_.clear();
  by_domain_.clear();
}

bool MemoryBank::consistent() const {
  if (entries_.size() > capacity_) return false;
  std::size_t total = 0;
  for (const auto& [domain, seqs] : by_domain_) {
    std::uint64_t prev = 0;
    bool first = true;
    for (std::uint64_t seq : seqs) {
      if (seq < front_seq_ || seq >= front_seq_ + entries_.size()) return false;
      if (!first && seq <= prev) return false;
      if (entries_[static_cast<std::size_t>(seq - front_seq_)].domain_id != domain) return false;
      prev = seq;
      first = false;
    }
    total += seqs.size();
  }
  return total == entries_.size();
}

}  // namespace mdssl
