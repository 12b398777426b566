#include "keyfort/store.hpp"

#include <filesystem>
#include <fstream>

#include "keyfort/wire.hpp"

namespace keyfort {

Bytes SecureStore::encode_snapshot(const Snapshot& s) {
    wire::Writer w;
    w.u64(s.write_counter);
    w.u32(uint32_t(s.entries.size()));
    for (const auto& [k, v] : s.entries) {
        w.str(k);
        w.bytes(v);
    }
    return w.take();
}

bool SecureStore::decode_snapshot(const Bytes& b, Snapshot& out) {
    wire::Reader r(b);
    out.entries.clear();
    out.write_counter = r.u64();
    uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) {
        std::string k = r.str();
        Bytes v = r.bytes();
        if (r.failed()) return false;
        out.entries[k] = std::move(v);
    }
    return !r.failed() && r.done();
}

Status SecureStore::put(const std::string& key, Bytes value) {
    if (io_fault_in_ == 0) {
        io_fault_in_ = -1;
        return Err::IoFault;
    }
    if (io_fault_in_ > 0) --io_fault_in_;

    bool crash_now = crash_put_in_ == 0;
    if (crash_put_in_ >= 0) --crash_put_in_;

    // Shadow commit: build the full new snapshot in the inactive slot.
    int shadow = 1 - active_;
    slots_[shadow] = slots_[active_];
    slots_[shadow].entries[key] = std::move(value);
    slots_[shadow].write_counter = slots_[active_].write_counter + 1;

    if (crash_now && crash_put_step_ == 0) {
        // Crash before the pointer flip: the old snapshot stays committed.
        return Err::IoFault;
    }

    active_ = shadow;
    hw_counter_ = slots_[active_].write_counter;

    if (crash_now && crash_put_step_ == 1) {
        // Crash after the flip: the new snapshot is already committed.
        return Err::IoFault;
    }
    return {};
}

Result<std::optional<Bytes>> SecureStore::get(const std::string& key) const {
    if (mode_ == StoreMode::RollbackResistant &&
        slots_[active_].write_counter != hw_counter_) {
        return Err::RollbackDetected;
    }
    auto it = slots_[active_].entries.find(key);
    if (it == slots_[active_].entries.end()) return std::optional<Bytes>{};
    return std::optional<Bytes>{it->second};
}

Bytes SecureStore::capture_snapshot() const { return encode_snapshot(slots_[active_]); }

void SecureStore::present_snapshot(const Bytes& snapshot) {
    Snapshot s;
    if (!decode_snapshot(snapshot, s)) return;
    slots_[active_] = std::move(s);
    if (mode_ == StoreMode::RollbackVulnerable) {
        // No independent replay counter: the stale snapshot passes as current.
        hw_counter_ = slots_[active_].write_counter;
    }
}

Status SecureStore::save_to_dir(const std::string& dir,
                                const crypto::KeyMaterial& storage_key) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return Err::IoFault;
    static const char* kFiles[] = {"versions.bin", "counters.bin", "migrations.bin"};
    static const char* kKeys[] = {"versions", "counters", "migrations"};
    for (int i = 0; i < 3; ++i) {
        Bytes payload;
        auto it = slots_[active_].entries.find(kKeys[i]);
        if (it != slots_[active_].entries.end()) payload = it->second;

        wire::Writer body;
        body.u64(slots_[active_].write_counter);
        body.raw(payload);
        Mac16 tag = crypto::mac_sign(storage_key, body.data());

        wire::Writer file;
        file.u64(slots_[active_].write_counter);
        file.fixed(tag);
        file.raw(payload);

        std::ofstream out(std::filesystem::path(dir) / kFiles[i], std::ios::binary);
        if (!out) return Err::IoFault;
        out.write(reinterpret_cast<const char*>(file.data().data()),
                  std::streamsize(file.data().size()));
        if (!out) return Err::IoFault;
    }
    return {};
}

Status SecureStore::load_from_dir(const std::string& dir,
                                  const crypto::KeyMaterial& storage_key) {
    static const char* kFiles[] = {"versions.bin", "counters.bin", "migrations.bin"};
    static const char* kKeys[] = {"versions", "counters", "migrations"};
    Snapshot s;
    uint64_t max_counter = 0;
    for (int i = 0; i < 3; ++i) {
        std::ifstream in(std::filesystem::path(dir) / kFiles[i],
                         std::ios::binary | std::ios::ate);
        if (!in) continue;  // absent file = absent key
        std::streamsize n = in.tellg();
        if (n < std::streamsize(8 + 16)) return Err::MalformedMessage;
        in.seekg(0);
        Bytes raw(size_t(n));
        in.read(reinterpret_cast<char*>(raw.data()), n);
        if (!in) return Err::IoFault;

        wire::Reader r(raw);
        uint64_t counter = r.u64();
        Mac16 tag = r.fixed<16>();
        Bytes payload(raw.begin() + 24, raw.end());

        wire::Writer body;
        body.u64(counter);
        body.raw(payload);
        if (!crypto::mac_verify(storage_key, body.data(), tag)) return Err::AuthFailure;
        max_counter = std::max(max_counter, counter);
        s.entries[kKeys[i]] = std::move(payload);
    }
    s.write_counter = max_counter;
    slots_[active_] = std::move(s);
    hw_counter_ = max_counter;
    return {};
}

template <typename T>
static Bytes encode_list(const std::vector<T>& v) {
    wire::Writer w;
    w.u32(uint32_t(v.size()));
    for (const auto& item : v) encode(w, item);
    return w.take();
}

template <typename T>
static Result<std::vector<T>> decode_list(const Bytes& b) {
    wire::Reader r(b);
    uint32_t n = r.u32();
    std::vector<T> out;
    out.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        T item;
        if (!decode(r, item)) return Err::MalformedMessage;
        out.push_back(std::move(item));
    }
    if (r.failed() || !r.done()) return Err::MalformedMessage;
    return out;
}

template <typename T>
static Result<std::vector<T>> load_list(const SecureStore& s, const std::string& key) {
    auto got = s.get(key);
    if (!got.ok()) return got.error();
    if (!got.value().has_value()) return std::vector<T>{};
    return decode_list<T>(*got.value());
}

Status persist_versions(SecureStore& s, const std::vector<VersionEntry>& v) {
    return s.put("versions", encode_list(v));
}

Result<std::vector<VersionEntry>> load_versions(const SecureStore& s) {
    return load_list<VersionEntry>(s, "versions");
}

Status persist_counters(SecureStore& s, const std::vector<MonotonicCounter>& v) {
    return s.put("counters", encode_list(v));
}

Result<std::vector<MonotonicCounter>> load_counters(const SecureStore& s) {
    return load_list<MonotonicCounter>(s, "counters");
}

Status persist_migration_metadata(SecureStore& s, const std::vector<MigrationRecord>& v) {
    return s.put("migrations", encode_list(v));
}

Result<std::vector<MigrationRecord>> load_migration_metadata(const SecureStore& s) {
    return load_list<MigrationRecord>(s, "migrations");
}

}  // namespace keyfort
