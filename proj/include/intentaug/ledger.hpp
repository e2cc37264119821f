#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "intentaug/error.hpp"
#include "intentaug/providers.hpp"

namespace intentaug {

/// Append-only JSONL log of one augmentation run: provider calls, verdicts,
/// metrics. Entries hold no wall-clock data, so equal runs give equal ledgers;
/// call latencies go to a separate timings sink.
class RunLedger {
 public:
  RunLedger() = default;
  RunLedger(const std::filesystem::path& ledger_file, const std::filesystem::path& timings_file)
      : file_(std::make_unique<std::ofstream>(ledger_file, std::ios::binary | std::ios::trunc)),
        timings_(std::make_unique<std::ofstream>(timings_file, std::ios::binary | std::ios::trunc)) {
    if (!*file_) throw DataError("cannot open ledger file " + ledger_file.string());
    if (!*timings_) throw DataError("cannot open timings file " + timings_file.string());
  }

  void append(nlohmann::json entry) {
    std::lock_guard lock(mu_);
    if (file_) {
      *file_ << entry.dump() << '\n';
      file_->flush();
    }
    entries_.push_back(std::move(entry));
  }

  void append_call(const ProviderCallRecord& rec) {
    append(to_json(rec));
    std::lock_guard lock(mu_);
    if (timings_) {
      *timings_ << nlohmann::json{{"call_id", rec.call_id}, {"latency_us", rec.latency.count()}}.dump() << '\n';
      timings_->flush();
    }
  }

  void append_metric(const std::string& name, int iteration, double value) {
    append({{"type", "metric"}, {"name", name}, {"iteration", iteration}, {"value", value}});
  }

  std::vector<nlohmann::json> entries() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

  std::string dump() const {
    std::lock_guard lock(mu_);
    std::string out;
    for (const auto& e : entries_) out += e.dump() + '\n';
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::unique_ptr<std::ofstream> file_;
  std::unique_ptr<std::ofstream> timings_;
  std::vector<nlohmann::json> entries_;
};

inline std::vector<nlohmann::json> read_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing ledger: " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path.string() + " line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace intentaug
