#include "mlsched/audit.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <sstream>

#include "mlsched/errors.hpp"

namespace mlsched {

std::string format_trace_line(Micros time, std::string_view event, TxnId id, std::size_t queue,
                              std::string_view detail) {
  std::string s;
  s.reserve(32 + event.size() + detail.size());
  s += std::to_string(time);
  s += ',';
  s += event;
  s += ',';
  s += std::to_string(id);
  s += ',';
  s += std::to_string(queue);
  s += ',';
  s += detail;
  s += '\n';
  return s;
}

void OstreamTraceSink::event(Micros time, std::string_view event, TxnId id, std::size_t queue,
                             std::string_view detail) {
  out_ << format_trace_line(time, event, id, queue, detail);
}

GzTraceSink::GzTraceSink(const std::string& path) {
  file_ = gzopen(path.c_str(), "wb6");
  if (!file_) throw std::runtime_error("cannot open trace file '" + path + "'");
  buffer_ = "# time,event,txn_id,queue,detail\n";
}

GzTraceSink::~GzTraceSink() {
  try {
    close();
  } catch (...) {
  }
}

void GzTraceSink::flush() {
  if (!file_ || buffer_.empty()) return;
  const int n = gzwrite(static_cast<gzFile>(file_), buffer_.data(), static_cast<unsigned>(buffer_.size()));
  if (n <= 0) throw std::runtime_error("trace write failed");
  buffer_.clear();
}

void GzTraceSink::event(Micros time, std::string_view event, TxnId id, std::size_t queue,
                        std::string_view detail) {
  buffer_ += format_trace_line(time, event, id, queue, detail);
  if (buffer_.size() > (1 << 20)) flush();
}

void GzTraceSink::close() {
  if (!file_) return;
  flush();
  gzclose(static_cast<gzFile>(file_));
  file_ = nullptr;
}

// Auditor ------------------------------------------------------------------------

namespace {

template <typename T>
bool parse_num(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

// Value of `name=` in a space-separated detail string.
std::string_view field(std::string_view detail, std::string_view name) {
  std::size_t pos = 0;
  while (pos < detail.size()) {
    auto end = detail.find(' ', pos);
    if (end == std::string_view::npos) end = detail.size();
    auto tok = detail.substr(pos, end - pos);
    if (tok.size() > name.size() && tok.substr(0, name.size()) == name && tok[name.size()] == '=') {
      return tok.substr(name.size() + 1);
    }
    pos = end + 1;
  }
  return {};
}

std::vector<std::string> split_keys(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == ';') {
      if (i > start) out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void TraceAuditor::violation(const std::string& what) {
  ++report_.violation_count;
  if (report_.violations.size() < 20) report_.violations.push_back(what);
}

void TraceAuditor::prune(Micros now) {
  while (!commit_order_.empty() && commit_order_.front().first < now - max_exec_) {
    recent_commits_.erase(commit_order_.front().second);
    commit_order_.pop_front();
  }
}

void TraceAuditor::feed(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  if (line.empty() || line.front() == '#') return;
  ++report_.lines;
  std::string_view f[5];
  std::size_t start = 0;
  for (int i = 0; i < 4; ++i) {
    const auto c = line.find(',', start);
    if (c == std::string_view::npos) {
      violation("malformed line: " + std::string(line));
      return;
    }
    f[i] = line.substr(start, c - start);
    start = c + 1;
  }
  f[4] = line.substr(start);
  Micros time = 0;
  TxnId id = 0;
  std::size_t queue = 0;
  if (!parse_num(f[0], time) || !parse_num(f[2], id) || !parse_num(f[3], queue)) {
    violation("malformed numbers: " + std::string(line));
    return;
  }
  if (time < last_time_) violation("time went backwards at txn " + std::to_string(id));
  last_time_ = time;
  const auto ev = f[1];
  const auto detail = f[4];
  const std::string who = "txn " + std::to_string(id) + " queue " + std::to_string(queue);

  if (ev == "arrive") {
    ++report_.arrivals;
    if (!outstanding_.insert(id).second || committed_.contains(id)) violation("duplicate arrival of " + who);
  } else if (ev == "start") {
    ++report_.starts;
    std::uint64_t seq = 0;
    if (!parse_num(field(detail, "seq"), seq)) violation("start without seq: " + who);
    auto it = running_.find(queue);
    if (it != running_.end()) {
      violation("overlapping execution on queue " + std::to_string(queue) + ": " +
                std::to_string(it->second.id) + " and " + std::to_string(id));
    }
    running_[queue] = {id, time, seq};
  } else if (ev == "commit" || ev == "abort") {
    auto it = running_.find(queue);
    if (it == running_.end() || it->second.id != id) {
      violation(std::string(ev) + " of a transaction that is not running: " + who);
      return;
    }
    const Running r = it->second;
    running_.erase(it);
    max_exec_ = std::max(max_exec_, time - r.start);
    if (time <= r.start) violation("empty execution interval: " + who);
    if (ev == "commit") {
      ++report_.commits;
      std::uint64_t seq = 0;
      if (!parse_num(field(detail, "seq"), seq)) violation("commit without seq: " + who);
      if (outstanding_.erase(id) == 0) violation("commit of unknown or already committed " + who);
      if (!committed_.insert(id).second) violation("double commit of " + who);
      prune(time);
      recent_commits_[id] = {time, seq, split_keys(field(detail, "ws"))};
      commit_order_.emplace_back(time, id);
    } else {
      ++report_.aborts;
      TxnId by = 0;
      if (!parse_num(field(detail, "by"), by)) {
        violation("abort without conflicter: " + who);
        return;
      }
      auto c = recent_commits_.find(by);
      if (c == recent_commits_.end()) {
        violation("abort of " + who + " names " + std::to_string(by) + ", which did not commit recently");
        return;
      }
      if (!(c->second.seq > r.start_seq && c->second.time >= r.start && c->second.time <= time)) {
        violation("conflicter " + std::to_string(by) + " committed outside the window of " + who);
      }
      const auto rws = split_keys(field(detail, "rws"));
      std::vector<std::string> shared;
      std::set_intersection(rws.begin(), rws.end(), c->second.ws.begin(), c->second.ws.end(),
                            std::back_inserter(shared));
      if (shared.empty()) violation("conflicter " + std::to_string(by) + " shares no key with " + who);
    }
  } else {
    violation("unknown event '" + std::string(ev) + "'");
  }
}

AuditReport TraceAuditor::finish() {
  if (!running_.empty()) violation(std::to_string(running_.size()) + " executions never finished");
  if (!outstanding_.empty()) violation(std::to_string(outstanding_.size()) + " arrivals never committed");
  if (report_.starts != report_.commits + report_.aborts) {
    violation("attempts (" + std::to_string(report_.starts) + ") != commits + aborts (" +
              std::to_string(report_.commits + report_.aborts) + ")");
  }
  return report_;
}

AuditReport audit_trace_file(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open trace '" + path + "'");
  TraceAuditor auditor;
  std::string line;
  char buf[1 << 16];
  while (gzgets(f, buf, sizeof buf) != nullptr) {
    line += buf;
    if (!line.empty() && line.back() == '\n') {
      auditor.feed(line);
      line.clear();
    }
  }
  int err = 0;
  const char* msg = gzerror(f, &err);
  const bool eof = gzeof(f);
  gzclose(f);
  if (err != Z_OK && err != Z_STREAM_END) throw FormatError(std::string("trace read error: ") + msg);
  if (!eof) throw FormatError("trace read stopped early");
  if (!line.empty()) auditor.feed(line);
  return auditor.finish();
}

}  // namespace mlsched
