#pragma once

// Run directory layout, exclusive lock and atomic file writes.
//
//   config.ini            effective configuration of the run
//   .lock                 flock()-held while a command runs
//   data/                 corpora as text, BPE model
//   translator/           model.ckpt, metrics.csv, summary.json
//   candidates/           dev.jsonl, test.jsonl (beam outputs of the translator)
//   rerank/n<N>/          data.jsonl, data_summary.json, reranker.ckpt,
//                         metrics.csv, alpha.csv, alpha.json, report_<split>.json,
//                         table_<split>.csv, pearson_<split>.csv
//   sweep/                bleu.csv, pearson.csv, failures.csv, *.svg

#include <sys/file.h>
#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "mtrerank/common.hpp"

namespace mtrerank::cli {

namespace fs = std::filesystem;

/// A required input artifact is absent; reported as a usage error.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

/// Another process holds the run directory.
class RunDirLocked : public Error {
 public:
  using Error::Error;
};

class RunDir {
 public:
  explicit RunDir(fs::path root) : root_(std::move(root)) {}

  const fs::path& root() const { return root_; }
  fs::path config() const { return root_ / "config.ini"; }
  fs::path lock() const { return root_ / ".lock"; }
  fs::path data() const { return root_ / "data"; }
  fs::path translator() const { return root_ / "translator"; }
  fs::path translator_ckpt() const { return translator() / "model.ckpt"; }
  fs::path candidates(const std::string& split) const { return root_ / "candidates" / (split + ".jsonl"); }
  fs::path rerank() const { return root_ / "rerank"; }
  fs::path rerank(int n) const { return rerank() / ("n" + std::to_string(n)); }
  fs::path dataset(int n) const { return rerank(n) / "data.jsonl"; }
  fs::path reranker_ckpt(int n) const { return rerank(n) / "reranker.ckpt"; }
  fs::path alpha(int n) const { return rerank(n) / "alpha.json"; }
  fs::path report(int n, const std::string& split) const { return rerank(n) / ("report_" + split + ".json"); }
  fs::path sweep() const { return root_ / "sweep"; }

 private:
  fs::path root_;
};

/// Exclusive advisory lock on <run-dir>/.lock, released on destruction or
/// process exit.
class RunLock {
 public:
  explicit RunLock(const RunDir& dir) {
    fs::create_directories(dir.root());
    const auto path = dir.lock().string();
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open lock file " + path + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw RunDirLocked("run directory is in use by another process: " + dir.root().string());
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    if (::ftruncate(fd_, 0) == 0) (void)!::write(fd_, pid.data(), pid.size());
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    if (fd_ >= 0) {
      ::flock(fd_, LOCK_UN);
      ::close(fd_);
    }
  }

 private:
  int fd_ = -1;
};

/// Writes through a temporary sibling and renames, so a file that exists is
/// always complete.
inline void write_atomic(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    body(out);
    out.flush();
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline void write_text(const fs::path& path, const std::string& text) {
  write_atomic(path, [&](std::ostream& out) { out << text; });
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("missing " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void require(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw MissingArtifact("missing " + path.string() + " (" + hint + ")");
}

}  // namespace mtrerank::cli
