#include "keyfort/trace.hpp"

#include <json.hpp>
#include <sstream>

#include "keyfort/crypto.hpp"

namespace keyfort {

using nlohmann::json;

static json event_to_json(const TraceEvent& e) {
    json phases = json::object();
    for (const auto& [dev, list] : e.phases) {
        json arr = json::array();
        for (const auto& [eid, phase] : list) {
            arr.push_back(json::array({eid, to_string(phase)}));
        }
        phases[std::to_string(dev)] = std::move(arr);
    }
    return json{{"t", e.t},
                {"seq", e.seq},
                {"kind", e.kind},
                {"src", e.src},
                {"dst", e.dst},
                {"verdict", e.verdict},
                {"sm_state_digest", e.sm_state_digest},
                {"phases", std::move(phases)},
                {"note", e.note}};
}

std::string Trace::to_jsonl() const {
    std::ostringstream out;
    // Header row: run-level facts a bare trace file needs for re-checking,
    // chiefly the source/destination pairs of each operation.
    json jpairs = json::array();
    for (const auto& p : pairs) {
        jpairs.push_back(json{{"src_dev", p.src_dev},
                              {"eid_s", p.eid_s},
                              {"dst_dev", p.dst_dev},
                              {"eid_d", p.eid_d},
                              {"id", p.id_hex}});
    }
    out << json{{"t", 0},
                {"seq", 0},
                {"kind", "meta"},
                {"src", ""},
                {"dst", ""},
                {"verdict", "ok"},
                {"sm_state_digest", ""},
                {"pairs", std::move(jpairs)},
                {"note", ""}}
               .dump()
        << "\n";
    for (const auto& e : events) out << event_to_json(e).dump() << "\n";
    return out.str();
}

static bool phase_from_string(const std::string& name, Phase& out) {
    if (name == "Created") out = Phase::Created;
    else if (name == "Running") out = Phase::Running;
    else if (name == "Paused") out = Phase::Paused;
    else if (name == "Destroyed") out = Phase::Destroyed;
    else return false;
    return true;
}

bool Trace::from_jsonl(const std::string& text, Trace& out) {
    out.events.clear();
    out.pairs.clear();
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) return false;
        std::string kind = j.value("kind", "");
        if (kind == "meta") {
            for (const auto& p : j.value("pairs", json::array())) {
                OpPair pair;
                pair.src_dev = p.value("src_dev", 0);
                pair.eid_s = p.value("eid_s", uint64_t(0));
                pair.dst_dev = p.value("dst_dev", 0);
                pair.eid_d = p.value("eid_d", uint64_t(0));
                pair.id_hex = p.value("id", "");
                out.pairs.push_back(pair);
            }
            continue;
        }
        TraceEvent e;
        e.t = j.value("t", uint64_t(0));
        e.seq = j.value("seq", uint64_t(0));
        e.kind = kind;
        e.src = j.value("src", "");
        e.dst = j.value("dst", "");
        e.verdict = j.value("verdict", "");
        e.sm_state_digest = j.value("sm_state_digest", "");
        e.note = j.value("note", "");
        for (const auto& [dev, list] : j.value("phases", json::object()).items()) {
            std::vector<std::pair<EnclaveId, Phase>> entries;
            for (const auto& item : list) {
                if (!item.is_array() || item.size() != 2) return false;
                Phase phase;
                if (!phase_from_string(item[1].get<std::string>(), phase)) return false;
                entries.emplace_back(item[0].get<EnclaveId>(), phase);
            }
            e.phases[std::stoi(dev)] = std::move(entries);
        }
        out.events.push_back(std::move(e));
    }
    return true;
}

Digest32 Trace::digest() const {
    std::string text = to_jsonl();
    return crypto::digest(reinterpret_cast<const uint8_t*>(text.data()), text.size());
}

}  // namespace keyfort
