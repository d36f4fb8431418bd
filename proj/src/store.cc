#include "rage/store.hpp"

#include <sqlite3.h>

#include "rage/error.hpp"

namespace rage {

namespace {

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::kIoError, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& Bind(int idx, std::string_view text) {
    sqlite3_bind_text(stmt_, idx, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT);
    return *this;
  }
  // True while a row is available.
  bool Step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    throw Error(ErrorCode::kIoError, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  std::string Column(int idx) const {
    const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt_, idx));
    return text ? std::string(text, sqlite3_column_bytes(stmt_, idx)) : std::string();
  }
  long ColumnInt(int idx) const { return static_cast<long>(sqlite3_column_int64(stmt_, idx)); }

 private:
  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

KvStore::KvStore(const std::string& path) {
  if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(ErrorCode::kIoError, "cannot open store " + path + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  char* err = nullptr;
  const char* schema =
      "PRAGMA journal_mode=WAL;"
      "CREATE TABLE IF NOT EXISTS kv ("
      "  ns TEXT NOT NULL, key TEXT NOT NULL, value TEXT NOT NULL,"
      "  PRIMARY KEY (ns, key));";
  if (sqlite3_exec(db_, schema, nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(ErrorCode::kIoError, "cannot initialize store: " + msg);
  }
}

KvStore::~KvStore() { sqlite3_close(db_); }

void KvStore::Put(std::string_view ns, std::string_view key, std::string_view value) {
  std::lock_guard lock(mu_);
  Statement st(db_, "INSERT OR REPLACE INTO kv (ns, key, value) VALUES (?, ?, ?)");
  st.Bind(1, ns).Bind(2, key).Bind(3, value).Step();
}

bool KvStore::PutIfAbsent(std::string_view ns, std::string_view key, std::string_view value) {
  std::lock_guard lock(mu_);
  Statement st(db_, "INSERT OR IGNORE INTO kv (ns, key, value) VALUES (?, ?, ?)");
  st.Bind(1, ns).Bind(2, key).Bind(3, value).Step();
  return sqlite3_changes(db_) > 0;
}

std::optional<std::string> KvStore::Get(std::string_view ns, std::string_view key) const {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT value FROM kv WHERE ns = ? AND key = ?");
  st.Bind(1, ns).Bind(2, key);
  if (!st.Step()) return std::nullopt;
  return st.Column(0);
}

std::vector<std::pair<std::string, std::string>> KvStore::List(std::string_view ns) const {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT key, value FROM kv WHERE ns = ? ORDER BY key");
  st.Bind(1, ns);
  std::vector<std::pair<std::string, std::string>> out;
  while (st.Step()) out.emplace_back(st.Column(0), st.Column(1));
  return out;
}

long KvStore::Count(std::string_view ns) const {
  std::lock_guard lock(mu_);
  Statement st(db_, "SELECT COUNT(*) FROM kv WHERE ns = ?");
  st.Bind(1, ns);
  st.Step();
  return st.ColumnInt(0);
}

}  // namespace rage
