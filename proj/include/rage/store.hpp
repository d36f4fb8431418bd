#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

struct sqlite3;

namespace rage {

// Namespaced string key-value store in a single SQLite file. Pass ":memory:"
// for a throwaway store. All methods are safe to call concurrently.
class KvStore {
 public:
  explicit KvStore(const std::string& path);
  ~KvStore();

  KvStore(const KvStore&) = delete;
  KvStore& operator=(const KvStore&) = delete;

  void Put(std::string_view ns, std::string_view key, std::string_view value);
  // Inserts only when the key is absent. Returns true if the row was written.
  bool PutIfAbsent(std::string_view ns, std::string_view key, std::string_view value);
  std::optional<std::string> Get(std::string_view ns, std::string_view key) const;
  std::vector<std::pair<std::string, std::string>> List(std::string_view ns) const;
  long Count(std::string_view ns) const;

 private:
  sqlite3* db_ = nullptr;
  mutable std::mutex mu_;
};

}  // namespace rage
