#include "gridflex/timeseries_store.hpp"

#include <sqlite3.h>

#include <cstring>
#include <mutex>

namespace gridflex {

namespace {

class Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db)
    {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK)
            throw Error(ErrorCode::storage_failure, std::string("prepare failed: ") + sqlite3_errmsg(db));
    }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;
    ~Statement() { sqlite3_finalize(stmt_); }

    Statement& bind(int i, const std::string& s)
    {
        check(sqlite3_bind_text(stmt_, i, s.data(), static_cast<int>(s.size()), SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int i, std::int64_t v)
    {
        check(sqlite3_bind_int64(stmt_, i, v));
        return *this;
    }
    Statement& bind(int i, double v)
    {
        check(sqlite3_bind_double(stmt_, i, v));
        return *this;
    }
    Statement& bind_blob(int i, const void* data, int size)
    {
        check(sqlite3_bind_blob(stmt_, i, data, size, SQLITE_TRANSIENT));
        return *this;
    }

    /// True while a row is available.
    bool step()
    {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw Error(ErrorCode::storage_failure, std::string("step failed: ") + sqlite3_errmsg(db_));
    }

    void reset()
    {
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

    std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
    double real(int col) const { return sqlite3_column_double(stmt_, col); }
    std::string text(int col) const
    {
        const auto* p = sqlite3_column_text(stmt_, col);
        return p ? std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)))
                 : std::string();
    }
    std::vector<double> doubles(int col) const
    {
        const auto bytes = static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col));
        std::vector<double> out(bytes / sizeof(double));
        if (bytes) std::memcpy(out.data(), sqlite3_column_blob(stmt_, col), out.size() * sizeof(double));
        return out;
    }

private:
    void check(int rc)
    {
        if (rc != SQLITE_OK) throw Error(ErrorCode::storage_failure, std::string("bind failed: ") + sqlite3_errmsg(db_));
    }

    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

Instant from_epoch(std::int64_t s) { return Instant{std::chrono::seconds{s}}; }
std::int64_t to_epoch(Instant t) { return t.time_since_epoch().count(); }

class SqliteStorage final : public Storage {
public:
    explicit SqliteStorage(const std::string& path)
    {
        if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX,
                            nullptr) != SQLITE_OK) {
            std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
            sqlite3_close(db_);
            throw Error(ErrorCode::storage_failure, "cannot open store: " + msg, {path});
        }
        if (path != ":memory:") exec("PRAGMA journal_mode=WAL; PRAGMA synchronous=NORMAL;");
        exec(R"sql(
            CREATE TABLE IF NOT EXISTS points (
                series TEXT NOT NULL, ts INTEGER NOT NULL, value REAL NOT NULL,
                PRIMARY KEY (series, ts)) WITHOUT ROWID;
            CREATE TABLE IF NOT EXISTS forecasts (
                id INTEGER PRIMARY KEY AUTOINCREMENT, series TEXT NOT NULL, model_version TEXT NOT NULL,
                issue_time INTEGER NOT NULL, first_ts INTEGER NOT NULL, spacing INTEGER NOT NULL, vals BLOB NOT NULL);
            CREATE INDEX IF NOT EXISTS forecasts_by_issue ON forecasts (series, issue_time, id);
            CREATE TABLE IF NOT EXISTS metadata (
                kind TEXT NOT NULL, key TEXT NOT NULL, version INTEGER NOT NULL, created INTEGER NOT NULL,
                body TEXT NOT NULL, PRIMARY KEY (kind, key, version));
            CREATE TABLE IF NOT EXISTS jobs (
                id INTEGER PRIMARY KEY AUTOINCREMENT, config TEXT NOT NULL, kind TEXT NOT NULL,
                scheduled INTEGER NOT NULL, status TEXT NOT NULL, detail TEXT NOT NULL, result TEXT NOT NULL);
        )sql");
    }

    ~SqliteStorage() override { sqlite3_close(db_); }

    std::size_t upsert_points(const std::string& series, std::span<const DataPoint> points) override
    {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        Statement st(db_, "INSERT INTO points (series, ts, value) VALUES (?, ?, ?) "
                          "ON CONFLICT (series, ts) DO UPDATE SET value = excluded.value "
                          "WHERE points.value IS NOT excluded.value");
        std::size_t changed = 0;
        for (const auto& p : points) {
            st.bind(1, series).bind(2, to_epoch(p.timestamp)).bind(3, p.value);
            st.step();
            changed += static_cast<std::size_t>(sqlite3_changes(db_));
            st.reset();
        }
        tx.commit();
        return changed;
    }

    std::vector<DataPoint> read_points(const std::string& series, Instant from, Instant to) const override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, "SELECT ts, value FROM points WHERE series = ? AND ts >= ? AND ts < ? ORDER BY ts");
        st.bind(1, series).bind(2, to_epoch(from)).bind(3, to_epoch(to));
        std::vector<DataPoint> out;
        while (st.step()) out.push_back(DataPoint{from_epoch(st.integer(0)), st.real(1)});
        return out;
    }

    std::int64_t insert_forecast(const ForecastRecord& record, Minutes spacing) override
    {
        std::vector<double> values;
        values.reserve(record.points.size());
        for (const auto& p : record.points) values.push_back(p.value);
        const auto first = to_epoch(record.points.front().timestamp);
        const auto step = std::chrono::duration_cast<std::chrono::seconds>(spacing).count();

        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        {
            Statement st(db_, "SELECT id, first_ts, spacing, vals FROM forecasts WHERE series = ? AND model_version = ? "
                              "AND issue_time = ? ORDER BY id DESC LIMIT 1");
            st.bind(1, record.series).bind(2, record.model_version).bind(3, to_epoch(record.issue_time));
            if (st.step() && st.integer(1) == first && st.integer(2) == step && st.doubles(3) == values) {
                const auto id = st.integer(0);
                tx.commit();
                return id;
            }
        }
        Statement ins(db_, "INSERT INTO forecasts (series, model_version, issue_time, first_ts, spacing, vals) "
                           "VALUES (?, ?, ?, ?, ?, ?)");
        ins.bind(1, record.series).bind(2, record.model_version).bind(3, to_epoch(record.issue_time));
        ins.bind(4, first).bind(5, static_cast<std::int64_t>(step));
        ins.bind_blob(6, values.data(), static_cast<int>(values.size() * sizeof(double)));
        ins.step();
        const auto id = sqlite3_last_insert_rowid(db_);
        tx.commit();
        return id;
    }

    std::optional<ForecastRecord> latest_forecast(const std::string& series, Instant as_of) const override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, "SELECT id, series, model_version, issue_time, first_ts, spacing, vals FROM forecasts "
                          "WHERE series = ? AND issue_time <= ? ORDER BY issue_time DESC, id DESC LIMIT 1");
        st.bind(1, series).bind(2, to_epoch(as_of));
        if (!st.step()) return std::nullopt;
        return read_forecast(st);
    }

    std::vector<ForecastRecord> forecasts(const std::string& series) const override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, "SELECT id, series, model_version, issue_time, first_ts, spacing, vals FROM forecasts "
                          "WHERE series = ? ORDER BY issue_time, id");
        st.bind(1, series);
        std::vector<ForecastRecord> out;
        while (st.step()) out.push_back(read_forecast(st));
        return out;
    }

    std::size_t forecast_count() const override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, "SELECT COUNT(*) FROM forecasts");
        st.step();
        return static_cast<std::size_t>(st.integer(0));
    }

    int put_metadata(const std::string& kind, const std::string& key, const std::string& body,
                     Instant created) override
    {
        std::lock_guard lock(mutex_);
        Transaction tx(*this);
        int version = 1;
        {
            Statement st(db_, "SELECT COALESCE(MAX(version), 0) FROM metadata WHERE kind = ? AND key = ?");
            st.bind(1, kind).bind(2, key);
            st.step();
            version = static_cast<int>(st.integer(0)) + 1;
        }
        Statement ins(db_, "INSERT INTO metadata (kind, key, version, created, body) VALUES (?, ?, ?, ?, ?)");
        ins.bind(1, kind).bind(2, key).bind(3, static_cast<std::int64_t>(version)).bind(4, to_epoch(created)).bind(5, body);
        ins.step();
        tx.commit();
        return version;
    }

    std::optional<MetadataRecord> metadata(const std::string& kind, const std::string& key,
                                           std::optional<int> version) const override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, version ? "SELECT kind, key, version, created, body FROM metadata WHERE kind = ? AND key = ? "
                                    "AND version = ?"
                                  : "SELECT kind, key, version, created, body FROM metadata WHERE kind = ? AND key = ? "
                                    "ORDER BY version DESC LIMIT 1");
        st.bind(1, kind).bind(2, key);
        if (version) st.bind(3, static_cast<std::int64_t>(*version));
        if (!st.step()) return std::nullopt;
        return read_metadata(st);
    }

    std::vector<MetadataRecord> latest_metadata(const std::string& kind) const override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, "SELECT m.kind, m.key, m.version, m.created, m.body FROM metadata m "
                          "WHERE m.kind = ? AND m.version = (SELECT MAX(version) FROM metadata x "
                          "WHERE x.kind = m.kind AND x.key = m.key) ORDER BY m.key");
        st.bind(1, kind);
        std::vector<MetadataRecord> out;
        while (st.step()) out.push_back(read_metadata(st));
        return out;
    }

    std::int64_t insert_job(const JobRecord& job) override
    {
        std::lock_guard lock(mutex_);
        Statement st(db_, "INSERT INTO jobs (config, kind, scheduled, status, detail, result) VALUES (?, ?, ?, ?, ?, ?)");
        st.bind(1, job.config_id).bind(2, to_string(job.kind)).bind(3, to_epoch(job.scheduled));
        st.bind(4, to_string(job.status)).bind(5, job.detail).bind(6, job.result);
        st.step();
        return sqlite3_last_insert_rowid(db_);
    }

    std::vector<JobRecord> jobs(const JobFilter& filter) const override
    {
        std::string sql = "SELECT id, config, kind, scheduled, status, detail, result FROM jobs WHERE 1 = 1";
        if (filter.config_id) sql += " AND config = ?1";
        if (filter.kind) sql += " AND kind = ?2";
        if (filter.status) sql += " AND status = ?3";
        sql += " ORDER BY id";
        std::lock_guard lock(mutex_);
        Statement st(db_, sql.c_str());
        if (filter.config_id) st.bind(1, *filter.config_id);
        if (filter.kind) st.bind(2, to_string(*filter.kind));
        if (filter.status) st.bind(3, to_string(*filter.status));
        std::vector<JobRecord> out;
        while (st.step()) {
            JobRecord j;
            j.id = st.integer(0);
            j.config_id = st.text(1);
            j.kind = st.text(2) == "train" ? JobKind::train : JobKind::score;
            j.scheduled = from_epoch(st.integer(3));
            j.status = st.text(4) == "succeeded" ? JobStatus::succeeded : JobStatus::failed;
            j.detail = st.text(5);
            j.result = st.text(6);
            out.push_back(std::move(j));
        }
        return out;
    }

private:
    class Transaction {
    public:
        explicit Transaction(SqliteStorage& s) : s_(s) { s_.exec("BEGIN IMMEDIATE"); }
        void commit()
        {
            s_.exec("COMMIT");
            done_ = true;
        }
        ~Transaction()
        {
            if (!done_) sqlite3_exec(s_.db_, "ROLLBACK", nullptr, nullptr, nullptr);
        }

    private:
        SqliteStorage& s_;
        bool done_ = false;
    };

    void exec(const char* sql)
    {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown";
            sqlite3_free(err);
            throw Error(ErrorCode::storage_failure, "sqlite: " + msg);
        }
    }

    static ForecastRecord read_forecast(const Statement& st)
    {
        ForecastRecord r;
        r.id = st.integer(0);
        r.series = st.text(1);
        r.model_version = st.text(2);
        r.issue_time = from_epoch(st.integer(3));
        const auto first = st.integer(4);
        const auto spacing = st.integer(5);
        const auto values = st.doubles(6);
        r.points.reserve(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            r.points.push_back(DataPoint{from_epoch(first + static_cast<std::int64_t>(i) * spacing), values[i]});
        return r;
    }

    static MetadataRecord read_metadata(const Statement& st)
    {
        return MetadataRecord{st.text(0), st.text(1), static_cast<int>(st.integer(2)), from_epoch(st.integer(3)),
                              st.text(4)};
    }

    sqlite3* db_ = nullptr;
    mutable std::mutex mutex_;
};

} // namespace

std::unique_ptr<Storage> open_sqlite_storage(const std::string& path)
{
    return std::make_unique<SqliteStorage>(path);
}

} // namespace gridflex
