#pragma once

// Event-trace writers and a streaming auditor that re-checks engine
// invariants from the trace alone.
//
// Trace lines: `time,event,txn_id,queue,detail`
//   arrive  type=<TxnType>
//   start   attempt=<n> seq=<commit seq at start>
//   commit  seq=<commit seq> ws=<key;key;...>
//   abort   by=<conflicting txn id> rws=<key;key;...>

#include <cstdint>
#include <deque>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mlsched/engine.hpp"

namespace mlsched {

class OstreamTraceSink final : public TraceSink {
 public:
  explicit OstreamTraceSink(std::ostream& out) : out_(out) {}
  void event(Micros time, std::string_view event, TxnId id, std::size_t queue,
             std::string_view detail) override;

 private:
  std::ostream& out_;
};

// gzip-compressed trace file.
class GzTraceSink final : public TraceSink {
 public:
  explicit GzTraceSink(const std::string& path);
  ~GzTraceSink() override;
  GzTraceSink(const GzTraceSink&) = delete;
  GzTraceSink& operator=(const GzTraceSink&) = delete;

  void event(Micros time, std::string_view event, TxnId id, std::size_t queue,
             std::string_view detail) override;
  void close();

 private:
  void flush();
  void* file_ = nullptr;
  std::string buffer_;
};

std::string format_trace_line(Micros time, std::string_view event, TxnId id, std::size_t queue,
                              std::string_view detail);

struct AuditReport {
  std::uint64_t lines = 0;
  std::uint64_t arrivals = 0;
  std::uint64_t starts = 0;
  std::uint64_t commits = 0;
  std::uint64_t aborts = 0;
  std::uint64_t violation_count = 0;
  std::vector<std::string> violations;  // first few, human readable

  bool ok() const { return violation_count == 0; }
};

class TraceAuditor {
 public:
  void feed(std::string_view line);
  AuditReport finish();

 private:
  struct Running {
    TxnId id = 0;
    Micros start = 0;
    std::uint64_t start_seq = 0;
  };
  struct CommitInfo {
    Micros time;
    std::uint64_t seq;
    std::vector<std::string> ws;
  };
  void violation(const std::string& what);
  void prune(Micros now);

  AuditReport report_;
  std::unordered_map<std::size_t, Running> running_;  // by queue
  std::unordered_set<TxnId> outstanding_;             // arrived, not committed
  std::unordered_set<TxnId> committed_;
  std::unordered_map<TxnId, CommitInfo> recent_commits_;
  std::deque<std::pair<Micros, TxnId>> commit_order_;
  Micros max_exec_ = 0;
  Micros last_time_ = 0;
};

// Reads a plain or gzip trace file.
AuditReport audit_trace_file(const std::string& path);

}  // namespace mlsched
