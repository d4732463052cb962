#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "agentgate/common.hpp"
#include "agentgate/state.hpp"

namespace agentgate {

class CapacityExceeded : public Error {
public:
    using Error::Error;
};

class UnknownSession : public Error {
public:
    using Error::Error;
};

class SessionClosed : public Error {
public:
    using Error::Error;
};

/// 128-bit random identifier, rendered as 32 lowercase hex characters.
struct SessionId {
    std::string value;

    static SessionId generate() {
        auto bytes = secure_random_128();
        return SessionId{to_hex(bytes.data(), bytes.size())};
    }

    bool valid() const {
        if (value.size() != 32) return false;
        for (char c : value) {
            if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
        }
        return true;
    }

    friend bool operator==(const SessionId&, const SessionId&) = default;
};

struct ArchiveReceipt {
    std::uint64_t offset = 0;    // byte offset of the record in the archive file
    std::size_t entry_index = 0; // ordinal position in the archive
};

struct EpisodeRecord {
    std::string session_id;
    UnixSeconds closed_at = 0;
    std::vector<TranscriptEntry> transcript;
};

inline Role role_from_name(std::string_view name) {
    if (name == "assistant") return Role::assistant;
    if (name == "tool") return Role::tool;
    return Role::user;
}

// Append-only episodic archive, persisted as newline-delimited JSON records
// {session_id, closed_at, transcript:[{role,text}...]}. Entries are immutable
// once written and reload bit-exact across restarts.
class EpisodicStore {
public:
    /// In-memory only; nothing survives the process.
    EpisodicStore() = default;

    /// Loads an existing archive (if any) and appends to it.
    explicit EpisodicStore(std::filesystem::path path) : path_(std::move(path)), persist_(true) {
        std::ifstream in(path_);
        std::string line;
        std::uint64_t offset = 0;
        while (std::getline(in, line)) {
            std::uint64_t next_offset = offset + line.size() + 1;
            if (!trim(line).empty()) {
                entries_.push_back(parse_record(line));
                offsets_.push_back(offset);
            }
            offset = next_offset;
        }
        tail_offset_ = offset;
        out_.open(path_, std::ios::app);
        if (!out_) throw Error("cannot open episodic archive for append: " + path_.string());
    }

    ArchiveReceipt append(EpisodeRecord rec) {
        std::scoped_lock lock(mutex_);
        std::string line = render_record(rec);
        ArchiveReceipt receipt{tail_offset_, entries_.size()};
        if (persist_) {
            out_ << line << '\n';
            out_.flush();
            if (!out_) throw Error("episodic archive write failed");
        }
        tail_offset_ += line.size() + 1;
        offsets_.push_back(receipt.offset);
        entries_.push_back(std::move(rec));
        return receipt;
    }

    std::size_t size() const {
        std::scoped_lock lock(mutex_);
        return entries_.size();
    }

    std::vector<EpisodeRecord> entries() const {
        std::scoped_lock lock(mutex_);
        return entries_;
    }

    /// Snippets (one archived transcript entry each) from this session only,
    /// ranked by distinct-keyword overlap with the query, then recency.
    std::vector<std::string> recall(const SessionId& id, std::string_view query,
                                    std::size_t k) const {
        std::vector<std::string> keywords;
        for (auto& w : split_words(query)) keywords.push_back(to_lower(w));

        struct Hit {
            std::size_t overlap;
            std::size_t record_index;
            std::size_t entry_index;
            const std::string* text;
        };
        std::vector<Hit> hits;
        {
            std::scoped_lock lock(mutex_);
            for (std::size_t r = 0; r < entries_.size(); ++r) {
                if (entries_[r].session_id != id.value) continue;
                for (std::size_t e = 0; e < entries_[r].transcript.size(); ++e) {
                    const std::string& text = entries_[r].transcript[e].text;
                    std::string lowered = to_lower(text);
                    std::unordered_set<std::string> words;
                    for (auto& w : split_words(lowered)) words.insert(w);
                    std::size_t overlap = 0;
                    for (auto& kw : keywords) overlap += words.count(kw);
                    if (overlap > 0) hits.push_back({overlap, r, e, &text});
                }
            }
            std::stable_sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
                if (a.overlap != b.overlap) return a.overlap > b.overlap;
                if (a.record_index != b.record_index) return a.record_index > b.record_index;
                return a.entry_index > b.entry_index;
            });
            std::vector<std::string> out;
            for (const Hit& h : hits) {
                if (out.size() == k) break;
                out.push_back(*h.text);
            }
            return out;
        }
    }

    static std::string render_record(const EpisodeRecord& rec) {
        nlohmann::json j;
        j["session_id"] = rec.session_id;
        j["closed_at"] = rec.closed_at;
        auto& tr = j["transcript"] = nlohmann::json::array();
        for (const auto& entry : rec.transcript) {
            tr.push_back({{"role", std::string(role_name(entry.role))}, {"text", entry.text}});
        }
        return j.dump();
    }

    static EpisodeRecord parse_record(const std::string& line) {
        nlohmann::json j = nlohmann::json::parse(line);
        EpisodeRecord rec;
        rec.session_id = j.at("session_id").get<std::string>();
        rec.closed_at = j.at("closed_at").get<UnixSeconds>();
        for (const auto& entry : j.at("transcript")) {
            rec.transcript.push_back({role_from_name(entry.at("role").get<std::string>()),
                                      entry.at("text").get<std::string>()});
        }
        return rec;
    }

private:
    std::filesystem::path path_;
    bool persist_ = false;
    mutable std::mutex mutex_;
    std::ofstream out_;
    std::vector<EpisodeRecord> entries_;
    std::vector<std::uint64_t> offsets_;
    std::uint64_t tail_offset_ = 0;
};

struct SessionRecord {
    SessionId id;
    AgentState state;
    UnixSeconds created_at = 0;
    UnixSeconds last_active = 0;
    std::size_t credential_slot = 0;
};

struct SessionManagerConfig {
    std::size_t capacity = 1024;
    UnixSeconds idle_timeout = 1800;
    std::size_t credential_pool_size = 4;
    std::function<UnixSeconds()> clock = now_unix; // injectable for tests
};

struct SessionStats {
    std::uint64_t opens = 0;
    std::uint64_t closes = 0;
    std::size_t open_count = 0;
};

// Working store for open sessions. Concurrent callers are safe; a given
// session executes one step at a time; archival writes serialize in the
// episodic store. Exceeding capacity is an error, not a queue.
class SessionManager {
public:
    explicit SessionManager(SessionManagerConfig config = {},
                            std::shared_ptr<EpisodicStore> archive = nullptr)
        : config_(std::move(config)),
          archive_(archive ? std::move(archive) : std::make_shared<EpisodicStore>()) {
        if (config_.credential_pool_size == 0) config_.credential_pool_size = 1;
        slot_load_.assign(config_.credential_pool_size, 0);
    }

    SessionId open_session() {
        std::scoped_lock lock(mutex_);
        if (open_.size() >= config_.capacity) {
            throw CapacityExceeded("session capacity " + std::to_string(config_.capacity) +
                                   " reached");
        }
        SessionId id = SessionId::generate();
        while (open_.count(id.value) > 0) id = SessionId::generate();

        std::size_t slot = 0;
        for (std::size_t i = 1; i < slot_load_.size(); ++i) {
            if (slot_load_[i] < slot_load_[slot]) slot = i; // stable tie-break: lowest index
        }
        slot_load_[slot] += 1;

        auto entry = std::make_shared<Entry>();
        entry->rec.id = id;
        entry->rec.created_at = entry->rec.last_active = config_.clock();
        entry->rec.credential_slot = slot;
        open_.emplace(id.value, std::move(entry));
        ++opens_;
        return id;
    }

    /// Runs `step` against this session's state only and persists the next
    /// state atomically; a failed step leaves the stored state unchanged.
    Output with_session(const SessionId& id, const StateStep& step) {
        auto entry = lookup(id, /*closed_is_session_closed=*/true);
        std::scoped_lock exec(entry->exec);
        AgentState before;
        {
            std::scoped_lock lock(mutex_);
            if (entry->closed) throw SessionClosed("session " + id.value + " is closed");
            before = entry->rec.state;
        }
        StepResult result = run(step, before);
        if (!result.ok()) throw StepFailed(result.error->step_name, result.error->cause);
        {
            std::scoped_lock lock(mutex_);
            if (entry->closed) throw SessionClosed("session " + id.value + " is closed");
            entry->rec.state = std::move(result.state);
            entry->rec.last_active = config_.clock();
        }
        return result.output;
    }

    ArchiveReceipt close_session(const SessionId& id) {
        auto entry = lookup(id);
        std::scoped_lock exec(entry->exec);
        EpisodeRecord rec;
        {
            std::scoped_lock lock(mutex_);
            if (entry->closed) throw UnknownSession("unknown session " + id.value);
            entry->closed = true;
            rec.session_id = id.value;
            rec.closed_at = config_.clock();
            rec.transcript = entry->rec.state.transcript;
            slot_load_[entry->rec.credential_slot] -= 1;
            open_.erase(id.value);
            closed_ids_.insert(id.value);
            ++closes_;
        }
        return archive_->append(std::move(rec));
    }

    /// Closes (archiving) every session idle longer than the timeout.
    std::vector<SessionId> reap_idle(UnixSeconds now) {
        std::vector<SessionId> idle;
        {
            std::scoped_lock lock(mutex_);
            for (auto& [key, entry] : open_) {
                if (now - entry->rec.last_active > config_.idle_timeout) {
                    idle.push_back(entry->rec.id);
                }
            }
        }
        std::vector<SessionId> closed;
        for (auto& id : idle) {
            try {
                close_session(id);
                closed.push_back(id);
            } catch (const UnknownSession&) {
                // raced with an explicit close; nothing to do
            }
        }
        return closed;
    }

    std::vector<SessionId> reap_idle() { return reap_idle(config_.clock()); }

    /// Archives every open session (shutdown path). Returns how many closed.
    std::size_t close_all() {
        std::vector<SessionId> ids;
        {
            std::scoped_lock lock(mutex_);
            for (auto& [key, entry] : open_) ids.push_back(entry->rec.id);
        }
        std::size_t n = 0;
        for (auto& id : ids) {
            try {
                close_session(id);
                ++n;
            } catch (const UnknownSession&) {
            }
        }
        return n;
    }

    std::vector<std::string> recall(const SessionId& id, std::string_view query,
                                    std::size_t k) const {
        return archive_->recall(id, query, k);
    }

    /// Effectful step that appends a note for this session to the episodic
    /// store and records the archive reference in memory_refs.
    StateStep make_memory_note_step(const SessionId& id, std::string note) {
        return StateStep::make(
            "memory_note", true,
            [this, id, note = std::move(note)](const AgentState& s) {
                EpisodeRecord rec;
                rec.session_id = id.value;
                rec.closed_at = config_.clock();
                rec.transcript.push_back({Role::tool, note});
                ArchiveReceipt receipt = archive_->append(std::move(rec));
                AgentState next = s;
                next.memory_refs.push_back("episode:" + std::to_string(receipt.entry_index));
                return StepResult::success(Output{OutputKind::memory_write, note}, std::move(next));
            });
    }

    bool is_open(const SessionId& id) const {
        std::scoped_lock lock(mutex_);
        return open_.count(id.value) > 0;
    }

    AgentState snapshot(const SessionId& id) const {
        std::scoped_lock lock(mutex_);
        auto it = open_.find(id.value);
        if (it == open_.end()) throw UnknownSession("unknown session " + id.value);
        return it->second->rec.state;
    }

    std::size_t credential_slot(const SessionId& id) const {
        std::scoped_lock lock(mutex_);
        auto it = open_.find(id.value);
        if (it == open_.end()) throw UnknownSession("unknown session " + id.value);
        return it->second->rec.credential_slot;
    }

    std::vector<SessionRecord> list() const {
        std::scoped_lock lock(mutex_);
        std::vector<SessionRecord> out;
        out.reserve(open_.size());
        for (auto& [key, entry] : open_) out.push_back(entry->rec);
        std::sort(out.begin(), out.end(),
                  [](const SessionRecord& a, const SessionRecord& b) {
                      return a.created_at < b.created_at ||
                             (a.created_at == b.created_at && a.id.value < b.id.value);
                  });
        return out;
    }

    SessionStats stats() const {
        std::scoped_lock lock(mutex_);
        return SessionStats{opens_, closes_, open_.size()};
    }

    EpisodicStore& episodic() { return *archive_; }
    const SessionManagerConfig& config() const { return config_; }

private:
    struct Entry {
        SessionRecord rec;
        std::mutex exec; // serializes this session's step execution
        bool closed = false;
    };

    std::shared_ptr<Entry> lookup(const SessionId& id, bool closed_is_session_closed = false) const {
        std::scoped_lock lock(mutex_);
        auto it = open_.find(id.value);
        if (it == open_.end()) {
            if (closed_is_session_closed && closed_ids_.count(id.value) > 0) {
                throw SessionClosed("session " + id.value + " is closed");
            }
            throw UnknownSession("unknown session " + id.value);
        }
        return it->second;
    }

    SessionManagerConfig config_;
    std::shared_ptr<EpisodicStore> archive_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<Entry>> open_;
    std::unordered_set<std::string> closed_ids_;
    std::vector<std::size_t> slot_load_;
    std::uint64_t opens_ = 0;
    std::uint64_t closes_ = 0;
};

} // namespace agentgate
