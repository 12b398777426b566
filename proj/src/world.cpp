#include "keyfort/world.hpp"

#include <algorithm>
#include <cstring>

#include "keyfort/predicates.hpp"
#include "keyfort/wire.hpp"

namespace keyfort {

namespace {

class DeviceHookAdapter : public DeviceHooks {
public:
    DeviceHookAdapter(World* world, int device) : world_(world), device_(device) {}
    void enclave_destroyed(EnclaveId eid) override {
        world_->on_enclave_destroyed(device_, eid);
    }
    void migration_failed_resume(EnclaveId eid) override {
        world_->on_migration_failed_resume(device_, eid);
    }

private:
    World* world_;
    int device_;
};

std::string device_key_str(int device, const SoftwareId& id) {
    return std::to_string(device) + ":" + to_string(id.id);
}

}  // namespace

World::World(const Scenario& scenario)
    : scenario_(scenario), fabric_(scenario.hop_latency), rng_(scenario.seed) {
    fabric_.set_fault_plan(&scenario_.faults);
    build_devices();
}

void World::build_devices() {
    party_pk_ = PublicKeyId{rng_.next_digest32()};
    names_[party_pk_.id] = "P";

    for (size_t i = 0; i < scenario_.devices.size(); ++i) {
        const DeviceSpec& spec = scenario_.devices[i];
        Device dev;
        dev.name = spec.name.empty() ? "sm" + std::to_string(i) : spec.name;

        PublicKeyId pk{rng_.next_digest32()};
        crypto::KeyMaterial device_key = rng_.next_key();
        MonitorConfig cfg;
        cfg.timeout_migration = spec.timeout_migration;
        cfg.timeout_ack = spec.timeout_ack;
        cfg.resend_limit = spec.resend_limit;
        cfg.rng_seed = rng_.next_u64();

        dev.sm = std::make_unique<SecurityMonitor>(pk, device_key, &clock_, cfg,
                                                   spec.store_mode);
        dev.hooks = std::make_unique<DeviceHookAdapter>(this, int(i));
        dev.sm->set_device_hooks(dev.hooks.get());
        dev.sm->authorize_party(party_pk_);

        int device = int(i);
        dev.sm->set_send_fn([this, pk](const PublicKeyId& dst, MsgKind kind, Bytes payload) {
            fabric_.send(pk, dst, kind, std::move(payload), clock_.rdtime());
        });
        dev.sm->set_session_seed_fn([this, pk](const PublicKeyId& peer) {
            return fabric_.session_seed(pk, peer);
        });
        dev.sm->set_alarm_sink([this, device](const SoftwareId& id) { on_alarm(device, id); });
        dev.sm->set_crash_checkpoint(
            [this, device](const char* pt) { on_mid_commit_checkpoint(device, pt); });

        names_[pk.id] = dev.name;
        sm_index_[pk.id] = device;
        devices_.push_back(std::move(dev));
    }

    // Pre-shared channel keys: party<->monitor and monitor<->monitor.
    for (size_t i = 0; i < devices_.size(); ++i) {
        fabric_.register_pair_key(party_pk_, devices_[i].sm->device_pk(), rng_.next_key());
        for (size_t j = i + 1; j < devices_.size(); ++j) {
            fabric_.register_pair_key(devices_[i].sm->device_pk(),
                                      devices_[j].sm->device_pk(), rng_.next_key());
            fabric_.set_session_seed(devices_[i].sm->device_pk(),
                                     devices_[j].sm->device_pk(), rng_.next_digest32());
        }
    }

    party_ = std::make_unique<Party>(party_pk_, [this](const PublicKeyId& dst, MsgKind kind,
                                                       Bytes payload) {
        fabric_.send(party_pk_, dst, kind, std::move(payload), clock_.rdtime());
    });
    party_->set_endpoint_resolver([this](const PublicKeyId& sm_pk, EnclaveId eid) {
        return enclave_endpoint_key(sm_pk, eid);
    });
}

SimEnclave* World::enclave(int device, EnclaveId eid) {
    auto& m = devices_[size_t(device)].enclaves;
    auto it = m.find(eid);
    return it == m.end() ? nullptr : it->second.get();
}

const SimEnclave* World::enclave(int device, EnclaveId eid) const {
    const auto& m = devices_[size_t(device)].enclaves;
    auto it = m.find(eid);
    return it == m.end() ? nullptr : it->second.get();
}

PublicKeyId World::enclave_endpoint(int device, EnclaveId eid) const {
    return enclave_endpoint_key(devices_[size_t(device)].sm->device_pk(), eid);
}

std::string World::component_name(const PublicKeyId& pk) const {
    auto it = names_.find(pk.id);
    return it == names_.end() ? "?" : it->second;
}

int World::device_index(const PublicKeyId& sm_pk) const {
    auto it = sm_index_.find(sm_pk.id);
    return it == sm_index_.end() ? -1 : it->second;
}

std::string World::enclave_name(int device, EnclaveId eid) const {
    return "e" + std::to_string(eid) + "@" + devices_[size_t(device)].name;
}

SimEnclave* World::register_enclave(int device, EnclaveId eid, const SoftwareId& id,
                                    const Measurement& m, Bytes initial_state,
                                    bool is_destination) {
    Device& dev = devices_[size_t(device)];
    auto enclave = std::make_unique<SimEnclave>(eid, id, m, dev.sm.get(),
                                                std::move(initial_state), is_destination);
    PublicKeyId endpoint = enclave_endpoint_key(dev.sm->device_pk(), eid);
    enclave->set_endpoint(endpoint, dev.sm->device_pk());
    enclave->set_send_fn([this, endpoint](const PublicKeyId& dst, MsgKind kind, Bytes payload) {
        fabric_.send(endpoint, dst, kind, std::move(payload), clock_.rdtime());
    });

    enclave_endpoints_[endpoint.id] = {device, eid};
    names_[endpoint.id] = enclave_name(device, eid);

    // SBI-style channel between enclave and its own monitor; derived, not
    // negotiated, since both ends live on one device.
    wire::Writer w;
    w.str("chan");
    w.fixed(dev.sm->device_pk().id);
    w.u64(eid);
    fabric_.register_pair_key(endpoint, dev.sm->device_pk(),
                              crypto::KeyMaterial{crypto::digest(w.data())});

    initial_states_[{device, eid}] = enclave->state();
    SimEnclave* out = enclave.get();
    dev.enclaves[eid] = std::move(enclave);
    return out;
}

const Bytes& World::initial_state(int device, EnclaveId eid) const {
    auto it = initial_states_.find({device, eid});
    return it == initial_states_.end() ? empty_ : it->second;
}

// Direct-call helpers ---------------------------------------------------------

Result<EnclaveId> World::host_init(int device, const SoftwareId& id, Version v,
                                   std::optional<uint64_t> clone_bound, const Bytes& binary,
                                   Bytes initial_state) {
    SecurityMonitor& monitor = sm(device);
    std::string key = device_key_str(device, id);
    uint64_t prior = max_latest_seen_.count(key) ? max_latest_seen_[key] : 0;

    auto got = monitor.init(id, v, clone_bound, binary);

    InitObservation obs;
    obs.device = device;
    obs.id = to_string(id.id);
    obs.v = v.v;
    obs.prior_max = prior;
    obs.ok = got.ok();
    init_observations_.push_back(obs);

    if (auto latest = monitor.latest_version(id)) {
        max_latest_seen_[key] = std::max(max_latest_seen_[key], latest->v);
    }

    std::string verdict = got.ok() ? "ok" : std::string("rejected_") + to_string(got.error());
    append_internal_event("init", "host", devices_[size_t(device)].name, verdict,
                          to_string(id.id) + "/v" + std::to_string(v.v));

    if (got.ok()) {
        const EnclaveRecord* rec = monitor.find_enclave(got.value());
        clone_observations_.push_back(
            CloneObservation{device, monitor.live_clone_count(rec->m), rec->clone_bound});
        if (!enclave(device, got.value())) {
            register_enclave(device, got.value(), id, rec->m, std::move(initial_state),
                             !rec->resume_ok);
        }
    }
    return got;
}

void World::host_input(int device, EnclaveId eid, const Bytes& data) {
    IssuedInput rec;
    rec.input_id = next_input_id_++;
    rec.device = device;
    rec.eid = eid;
    rec.data = data;
    rec.accepted = false;

    std::string verdict;
    SimEnclave* e = enclave(device, eid);
    SecurityMonitor& monitor = sm(device);
    const EnclaveRecord* er = monitor.find_enclave(eid);
    if (!e || e->destroyed() || !er || !er->live()) {
        verdict = "rejected_UnknownEnclave";
    } else if (monitor.is_down()) {
        verdict = "dropped_down";
    } else if (!er->resume_ok) {
        verdict = "rejected_NotRunnable";
    } else {
        if (er->phase != Phase::Running) monitor.run(eid);
        auto res = e->process_input(data);
        if (res.ok()) {
            rec.accepted = true;
            verdict = "ok";
        } else {
            verdict = std::string("rejected_") + to_string(res.error());
        }
    }
    issued_inputs_.push_back(rec);
    append_internal_event("input", "host", enclave_name(device, eid), verdict,
                          "input_id=" + std::to_string(rec.input_id));
}

void World::crash_device(int device, const std::string& why) {
    SecurityMonitor& monitor = sm(device);
    monitor.crash();
    append_internal_event("crash", devices_[size_t(device)].name,
                          devices_[size_t(device)].name, "ok", why);
    script_action(clock_.rdtime() + scenario_.recovery_delay, "recover",
                  [this, device](Ticks now) {
                      Status st = sm(device).recover(now);
                      append_internal_event(
                          "recover", devices_[size_t(device)].name,
                          devices_[size_t(device)].name,
                          st.ok() ? "ok" : std::string("rejected_") + to_string(st.error()),
                          "");
                      record_new_pairs();
                  });
}

// Scripting --------------------------------------------------------------------

void World::script_input(Ticks at, int device, EnclaveId eid, Bytes data) {
    script_action(at, "input", [this, device, eid, data = std::move(data)](Ticks) {
        host_input(device, eid, data);
    });
}

void World::script_crash(Ticks at, int device) {
    script_action(at, "crash", [this, device](Ticks) { crash_device(device, "scripted"); });
}

void World::script_action(Ticks at, std::string label, std::function<void(Ticks)> fn) {
    scripts_.push_back(ScriptEvent{at, script_order_++, std::move(label), std::move(fn)});
}

// Device callbacks ----------------------------------------------------------------

void World::on_enclave_destroyed(int device, EnclaveId eid) {
    if (SimEnclave* e = enclave(device, eid)) e->mark_destroyed();
}

void World::on_migration_failed_resume(int device, EnclaveId eid) {
    if (SimEnclave* e = enclave(device, eid)) e->on_migration_failed();
}

void World::on_alarm(int device, const SoftwareId& id) {
    ++alarms_raised_;
    append_internal_event("alarm_raised", devices_[size_t(device)].name, "P", "ok",
                          to_string(id.id));
}

void World::on_mid_commit_checkpoint(int device, const char* point) {
    if (mid_commit_armed_device_ == device && std::strcmp(point, "mid_commit") == 0) {
        mid_commit_armed_device_ = -1;
        throw CrashSignal{point};
    }
}

// Setup -----------------------------------------------------------------------------

Status World::setup() {
    for (const EnclaveSpec& spec : scenario_.enclaves) {
        if (spec.device < 0 || size_t(spec.device) >= devices_.size()) return Err::SchemaError;
        crypto::Rng binary_rng(spec.binary_seed);
        Bytes binary = binary_rng.next_bytes(spec.binary_size);
        crypto::Rng state_rng(spec.binary_seed * 7919 + 1);
        Bytes state = state_rng.next_bytes(spec.state_size);

        SoftwareId id{spec.id};
        auto got =
            host_init(spec.device, id, Version{spec.version}, spec.clone_bound, binary, state);
        if (!got.ok()) return Err::SchemaError;
        EnclaveId eid = got.value();
        sm(spec.device).run(eid);

        crypto::Rng input_rng(spec.binary_seed * 31 + 7);
        for (uint32_t i = 0; i < spec.inputs_before; ++i) {
            host_input(spec.device, eid, input_rng.next_bytes(spec.input_size));
        }

        if (to_string(id.id) == scenario_.operation.id &&
            spec.device == scenario_.operation.source_device) {
            op_source_device_ = spec.device;
            op_source_eid_ = eid;
            op_source_binary_ = binary;
        }
    }
    if (op_source_eid_ != 0) {
        setup_store_snapshot_ = sm(op_source_device_).store().capture_snapshot();
    }
    setup_done_ = true;
    return setup_operation();
}

Status World::setup_operation() {
    const OperationSpec& op = scenario_.operation;
    op_dest_device_ = op.dest_device;

    switch (op.kind) {
        case OpKind::Update:
        case OpKind::Migration:
        case OpKind::RollbackAttack: {
            if (op_source_eid_ == 0) return Err::SchemaError;
            const SimEnclave* src = enclave(op_source_device_, op_source_eid_);
            if (!src) return Err::SchemaError;

            Party::Plan plan;
            plan.id = SoftwareId{op.id};
            plan.sm_source = sm(op_source_device_).device_pk();
            plan.eid_source = op_source_eid_;
            plan.m_source = src->measurement();
            plan.enclave_source = enclave_endpoint(op_source_device_, op_source_eid_);
            plan.timeout = scenario_.party_timeout;

            bool is_migration = op.kind == OpKind::Migration;
            if (is_migration) {
                if (op.dest_device == op_source_device_ ||
                    size_t(op.dest_device) >= devices_.size()) {
                    return Err::SchemaError;
                }
                plan.is_update = false;
                plan.sm_dest = sm(op.dest_device).device_pk();
                plan.binary = op_source_binary_;
                plan.m_dest = plan.m_source;
                plan.version = sm(op_source_device_).find_enclave(op_source_eid_)->v;
                // Fresh inter-monitor session for this operation.
                fabric_.set_session_seed(plan.sm_source, plan.sm_dest, rng_.next_digest32());
            } else {
                op_dest_device_ = op_source_device_;
                plan.is_update = true;
                plan.sm_dest = plan.sm_source;
                uint32_t size = op.new_binary_size ? op.new_binary_size
                                                   : uint32_t(op_source_binary_.size());
                crypto::Rng binary_rng(op.new_binary_seed);
                plan.binary = binary_rng.next_bytes(size);
                plan.version = Version{op.new_version};
                auto measured = crypto::measure(plan.binary);
                if (!measured.ok()) return Err::SchemaError;
                plan.m_dest = measured.value();
            }

            party_->start(plan, clock_.rdtime());

            crypto::Rng during_rng(scenario_.seed * 131 + 17);
            for (uint32_t i = 0; i < op.inputs_during; ++i) {
                script_input(250 + 5 * i, op_source_device_, op_source_eid_,
                             during_rng.next_bytes(16));
            }
            return {};
        }
        case OpKind::CloneAttack:
        case OpKind::StateReplayAttack:
        case OpKind::TimeAccounting:
            return {};  // handled post-quiescence; no protocol traffic
    }
    return {};
}

// Scheduler --------------------------------------------------------------------------

std::optional<Ticks> World::next_timer() const {
    std::optional<Ticks> best;
    for (const auto& dev : devices_) {
        if (auto d = dev.sm->next_deadline()) {
            if (!best || *d < *best) best = *d;
        }
    }
    if (party_) {
        if (auto d = party_->next_deadline()) {
            if (!best || *d < *best) best = *d;
        }
    }
    return best;
}

Status World::run_until_quiescent(uint64_t step_budget) {
    for (uint64_t step = 0; step < step_budget; ++step) {
        std::optional<size_t> script_idx;
        for (size_t i = 0; i < scripts_.size(); ++i) {
            if (!script_idx || std::tie(scripts_[i].at, scripts_[i].order) <
                                   std::tie(scripts_[*script_idx].at,
                                            scripts_[*script_idx].order)) {
                script_idx = i;
            }
        }
        std::optional<Ticks> script_at =
            script_idx ? std::optional<Ticks>(scripts_[*script_idx].at) : std::nullopt;
        std::optional<Ticks> timer_at = next_timer();
        std::optional<Ticks> msg_at = fabric_.next_delivery();

        if (!script_at && !timer_at && !msg_at) return {};

        // Priority at equal instants: scripts, then timers, then messages.
        Ticks t = std::min({script_at.value_or(UINT64_MAX), timer_at.value_or(UINT64_MAX),
                            msg_at.value_or(UINT64_MAX)});
        if (t > clock_.rdtime()) clock_.advance(t - clock_.rdtime());

        if (script_at && *script_at == t) {
            ScriptEvent ev = std::move(scripts_[*script_idx]);
            scripts_.erase(scripts_.begin() + std::ptrdiff_t(*script_idx));
            ev.fn(t);
            continue;
        }
        if (timer_at && *timer_at == t) {
            for (auto& dev : devices_) dev.sm->timeout_tick(t);
            party_->timeout_tick(t);
            append_internal_event("timer", "", "", "ok", "");
            record_new_pairs();
            continue;
        }
        auto env = fabric_.pop_due();
        if (!env) return {};  // raced with nothing; treat as quiescent
        dispatch(std::move(*env));
    }
    append_internal_event("budget", "", "", "rejected_StepBudgetExceeded", "");
    return Err::StepBudgetExceeded;
}

void World::dispatch(Envelope env) {
    auto ep = enclave_endpoints_.find(env.dst.id);
    if (ep != enclave_endpoints_.end()) {
        deliver_to_enclave(ep->second.first, ep->second.second, env);
        record_new_pairs();
        return;
    }
    auto smi = sm_index_.find(env.dst.id);
    if (smi != sm_index_.end()) {
        deliver_to_sm(smi->second, env);
        record_new_pairs();
        return;
    }
    if (env.dst == party_pk_) {
        deliver_to_party(env);
        record_new_pairs();
        return;
    }
    append_envelope_event(env, -1, "dropped_unroutable");
}

void World::append_envelope_event(const Envelope& env, int acting_device,
                                  const std::string& verdict, const std::string& note) {
    TraceEvent e;
    e.t = clock_.rdtime();
    e.seq = env.seq;
    e.kind = to_string(env.kind);
    e.src = component_name(env.src);
    e.dst = component_name(env.dst);
    e.verdict = verdict;
    if (acting_device >= 0) {
        e.sm_state_digest = hex(devices_[size_t(acting_device)].sm->state_digest());
    }
    e.phases = snapshot_phases();
    e.note = note;
    trace_.events.push_back(std::move(e));
}

bool World::crash_armed(int device, uint64_t index, CrashWhen when) const {
    for (const auto& c : scenario_.faults.sm_crashes) {
        if (c.device == device && c.dispatch_index == index && c.when == when) return true;
    }
    return false;
}

void World::deliver_to_sm(int device, const Envelope& env) {
    SecurityMonitor& monitor = sm(device);
    if (monitor.is_down()) {
        append_envelope_event(env, -1, "dropped_down");
        return;
    }
    uint64_t index = sm_dispatch_counts_[device]++;

    if (crash_armed(device, index, CrashWhen::Before)) {
        crash_device(device, "crash_before_dispatch");
        append_envelope_event(env, device, "crashed_before");
        return;
    }

    if (kind_is_authenticated(env.kind)) {
        auto key = fabric_.pair_key(env.src, env.dst);
        if (!key || !crypto::mac_verify(*key, env.auth_bytes(), env.tag)) {
            append_envelope_event(env, device, "rejected_auth");
            if (crash_armed(device, index, CrashWhen::After)) {
                crash_device(device, "crash_after_dispatch");
            }
            return;
        }
    }

    if (crash_armed(device, index, CrashWhen::MidCommit)) mid_commit_armed_device_ = device;

    std::string verdict;
    std::string note;
    try {
        Status st = monitor.handle_message(env.src, env.kind, env.payload);
        verdict = st.ok() ? "ok" : std::string("rejected_") + to_string(st.error());
    } catch (const CrashSignal& sig) {
        crash_device(device, std::string("crash_") + sig.point);
        verdict = "crashed_mid_commit";
    }
    mid_commit_armed_device_ = -1;

    if (verdict != "crashed_mid_commit" && crash_armed(device, index, CrashWhen::After)) {
        crash_device(device, "crash_after_dispatch");
        note = "crashed_after";
    }

    // Track destination enclaves materialized by an init request.
    if (env.kind == MsgKind::Init && verdict == "ok") {
        PInit p;
        if (decode_payload(env.payload, p)) {
            for (const auto& [eid, rec] : monitor.enclaves()) {
                if (!enclave(device, eid)) {
                    std::string key = device_key_str(device, rec.id);
                    InitObservation obs;
                    obs.device = device;
                    obs.id = to_string(rec.id.id);
                    obs.v = rec.v.v;
                    obs.prior_max = max_latest_seen_.count(key) ? max_latest_seen_[key] : 0;
                    obs.ok = true;
                    init_observations_.push_back(obs);
                    clone_observations_.push_back(CloneObservation{
                        device, monitor.live_clone_count(rec.m), rec.clone_bound});
                    register_enclave(device, eid, rec.id, rec.m, {}, !rec.resume_ok);
                }
            }
            if (auto latest = monitor.latest_version(p.id)) {
                std::string key = device_key_str(device, p.id);
                max_latest_seen_[key] = std::max(max_latest_seen_[key], latest->v);
            }
        }
    }
    if (env.kind == MsgKind::Ok4o || env.kind == MsgKind::Commit) {
        // Commits bump v_latest; refresh the high-water marks.
        for (const auto& e : monitor.sw_versions()) {
            std::string key = device_key_str(device, e.id);
            max_latest_seen_[key] = std::max(max_latest_seen_[key], e.v_latest.v);
        }
    }

    append_envelope_event(env, device, verdict, note);
}

void World::deliver_to_enclave(int device, EnclaveId eid, const Envelope& env) {
    SecurityMonitor& monitor = sm(device);
    if (monitor.is_down()) {
        append_envelope_event(env, -1, "dropped_down");
        return;
    }
    SimEnclave* e = enclave(device, eid);
    if (!e || e->destroyed()) {
        append_envelope_event(env, device, "dropped_no_enclave");
        return;
    }
    uint64_t index = enclave_dispatch_counts_[{device, eid}]++;
    for (const auto& c : scenario_.faults.enclave_crashes) {
        if (c.device == device && c.eid == eid && c.dispatch_index == index) {
            append_envelope_event(env, device, "enclave_crashed");
            return;
        }
    }

    const EnclaveRecord* rec = monitor.find_enclave(eid);
    std::string verdict = "ok";
    switch (env.kind) {
        case MsgKind::ExportState: {
            if (!rec || !rec->live() || !rec->resume_ok) {
                verdict = "rejected_NotRunnable";
                break;
            }
            if (rec->phase != Phase::Running) monitor.run(eid);
            auto sealed = e->export_state();
            if (!sealed.ok()) {
                verdict = std::string("rejected_") + to_string(sealed.error());
                break;
            }
            if (device == op_source_device_ && eid == op_source_eid_) {
                source_state_at_export_ = e->state();
                source_log_size_at_export_ = e->input_log().size();
                export_seen_ = true;
            }
            fabric_.send(enclave_endpoint(device, eid), env.src, MsgKind::StateBlob,
                         encode_payload(PStateBlob{sealed.value().ciphertext,
                                                   sealed.value().tag}),
                         clock_.rdtime());
            break;
        }
        case MsgKind::ImportState: {
            if (!rec || !rec->live() || !rec->resume_ok) {
                verdict = "rejected_NotRunnable";
                break;
            }
            if (rec->phase != Phase::Running) monitor.run(eid);
            PStateBlob p;
            if (!decode_payload(env.payload, p)) {
                verdict = "rejected_MalformedMessage";
                break;
            }
            Status st = e->import_state(p.ciphertext, p.tag);
            if (st.ok()) {
                dest_state_at_import_ = e->state();
                import_seen_ = true;
            } else {
                verdict = std::string("rejected_") + to_string(st.error());
            }
            break;
        }
        case MsgKind::Ok4p: {
            e->on_success_signal();
            break;
        }
        default:
            verdict = "rejected_bad_target";
            break;
    }
    append_envelope_event(env, device, verdict);
}

void World::deliver_to_party(const Envelope& env) {
    party_->on_message(env.src, env.kind, env.payload, clock_.rdtime());
    append_envelope_event(env, -1, "ok");
}

void World::record_new_pairs() {
    for (size_t d = 0; d < devices_.size(); ++d) {
        for (const auto& rec : devices_[d].sm->migrations()) {
            Trace::OpPair pair;
            pair.id_hex = hex(rec.id.id);
            pair.eid_s = rec.eid_s;
            pair.eid_d = rec.eid_d;
            switch (rec.target_op) {
                case TargetOp::Update:
                    pair.src_dev = int(d);
                    pair.dst_dev = int(d);
                    break;
                case TargetOp::MigrationSource:
                    pair.src_dev = int(d);
                    pair.dst_dev = device_index(rec.pk_d);
                    break;
                case TargetOp::MigrationDestination:
                    pair.src_dev = device_index(rec.pk_s);
                    pair.dst_dev = int(d);
                    break;
            }
            if (pair.src_dev < 0 || pair.dst_dev < 0) continue;
            if (std::find_if(trace_.pairs.begin(), trace_.pairs.end(),
                             [&](const Trace::OpPair& p) {
                                 return !(p < pair) && !(pair < p);
                             }) == trace_.pairs.end()) {
                trace_.pairs.push_back(pair);
            }
        }
    }
}

PhaseSnapshot World::snapshot_phases() const {
    PhaseSnapshot snap;
    for (size_t d = 0; d < devices_.size(); ++d) {
        std::vector<std::pair<EnclaveId, Phase>> list;
        for (const auto& [eid, rec] : devices_[d].sm->enclaves()) {
            list.emplace_back(eid, rec.phase);
        }
        snap[int(d)] = std::move(list);
    }
    return snap;
}

void World::append_internal_event(const std::string& kind, const std::string& src,
                                  const std::string& dst, const std::string& verdict,
                                  const std::string& note) {
    TraceEvent e;
    e.t = clock_.rdtime();
    e.seq = 0;
    e.kind = kind;
    e.src = src;
    e.dst = dst;
    e.verdict = verdict;
    e.phases = snapshot_phases();
    e.note = note;
    trace_.events.push_back(std::move(e));
}

void World::observe_counter(int device, uint64_t ctr_id, uint64_t value) {
    counter_observations_.push_back(CounterObservation{device, ctr_id, value});
}

uint64_t World::dispatches_to_sm(int device) const {
    auto it = sm_dispatch_counts_.find(device);
    return it == sm_dispatch_counts_.end() ? 0 : it->second;
}

uint64_t World::dispatches_to_enclave(int device, EnclaveId eid) const {
    auto it = enclave_dispatch_counts_.find({device, eid});
    return it == enclave_dispatch_counts_.end() ? 0 : it->second;
}

// Outcome ---------------------------------------------------------------------------

OperationOutcome World::classify() const {
    OperationOutcome o;
    o.alarm_raised = alarms_raised_ > 0;
    for (const auto& dev : devices_) {
        for (const auto& e : dev.sm->sw_versions()) {
            std::string id = to_string(e.id.id);
            auto it = o.final_versions.find(id);
            if (it == o.final_versions.end() || it->second < e.v_latest.v) {
                o.final_versions[id] = e.v_latest.v;
            }
        }
    }

    OpKind k = scenario_.operation.kind;
    if (k == OpKind::CloneAttack || k == OpKind::StateReplayAttack ||
        k == OpKind::TimeAccounting) {
        if (k == OpKind::TimeAccounting) {
            o.kind = scripted_expectation_held_ ? OutcomeKind::Committed
                                                : OutcomeKind::AmbiguousTerminalState;
        } else {
            o.kind = scripted_expectation_held_ ? OutcomeKind::RejectedAtInit
                                                : OutcomeKind::AmbiguousTerminalState;
        }
        return o;
    }

    if (party_->rejected_error()) {
        o.kind = OutcomeKind::RejectedAtInit;
        o.rejected_error = party_->rejected_error();
        return o;
    }

    const EnclaveRecord* src = sm(op_source_device_).find_enclave(op_source_eid_);
    EnclaveId eid_d = party_->destination_eid();
    const EnclaveRecord* dst =
        eid_d ? sm(op_dest_device_).find_enclave(eid_d) : nullptr;

    bool s_active = src && src->phase == Phase::Running;
    bool d_active = dst && dst->phase == Phase::Running;
    bool s_gone = !src || src->phase == Phase::Destroyed;
    bool d_gone = !dst || dst->phase == Phase::Destroyed;

    if (d_active && !s_active && s_gone) {
        o.kind = OutcomeKind::Committed;
    } else if (s_active && !d_active && d_gone) {
        o.kind = OutcomeKind::AbortedSourceActive;
    } else if (!s_active && !d_active && o.alarm_raised) {
        o.kind = OutcomeKind::AlarmNeitherActive;
    } else {
        o.kind = OutcomeKind::AmbiguousTerminalState;
    }
    return o;
}

Result<OperationOutcome> World::run_operation(uint64_t step_budget) {
    Status st = setup();
    if (!st.ok()) return st.error();
    st = run_until_quiescent(step_budget);
    if (!st.ok()) return st.error();
    run_post_scripts();
    st = run_until_quiescent(step_budget);
    if (!st.ok()) return st.error();
    return classify();
}

void World::run_post_scripts() {
    const OperationSpec& op = scenario_.operation;
    auto fail_expectation = [this](const std::string& why) {
        scripted_expectation_held_ = false;
        scripted_failure_ = why;
        append_internal_event("expectation", "", "", "failed", why);
    };

    switch (op.kind) {
        case OpKind::Update:
        case OpKind::Migration: {
            OperationOutcome partial = classify();
            int dev = -1;
            EnclaveId eid = 0;
            if (partial.kind == OutcomeKind::Committed) {
                dev = op_dest_device_;
                eid = party_->destination_eid();
            } else if (partial.kind == OutcomeKind::AbortedSourceActive) {
                dev = op_source_device_;
                eid = op_source_eid_;
            }
            if (dev >= 0) {
                crypto::Rng after_rng(scenario_.seed * 977 + 3);
                for (uint32_t i = 0; i < op.inputs_after; ++i) {
                    host_input(dev, eid, after_rng.next_bytes(16));
                }
            }
            break;
        }
        case OpKind::RollbackAttack: {
            // After the committed update, the stale version must be dead.
            const SimEnclave* src = enclave(op_source_device_, op_source_eid_);
            uint64_t v_old = 0;
            for (const auto& spec : scenario_.enclaves) {
                if (spec.id == op.id && spec.device == op.source_device) v_old = spec.version;
            }
            (void)src;
            auto attempt = host_init(op_source_device_, SoftwareId{op.id}, Version{v_old},
                                     std::nullopt, op_source_binary_);
            if (attempt.ok() &&
                sm(op_source_device_).store().mode() == StoreMode::RollbackResistant) {
                fail_expectation("stale version accepted");
            }
            if (!attempt.ok() && attempt.error() != Err::VersionMismatch) {
                fail_expectation(std::string("unexpected error ") +
                                 to_string(attempt.error()));
            }

            // Crash, roll the store back to its pre-update snapshot, recover,
            // and try again. Rollback-resistant storage detects the stale
            // snapshot; the vulnerable mode demonstrates the re-admission.
            Bytes stale = setup_store_snapshot_;
            if (!stale.empty()) {
                crash_device(op_source_device_, "rollback_attack");
                sm(op_source_device_).store().present_snapshot(stale);
                run_until_quiescent(10000);  // lets the recovery script run
                host_init(op_source_device_, SoftwareId{op.id}, Version{v_old}, std::nullopt,
                          op_source_binary_);
            }
            break;
        }
        case OpKind::CloneAttack: {
            const EnclaveSpec* spec = scenario_.enclaves.empty() ? nullptr
                                                                 : &scenario_.enclaves[0];
            if (!spec) {
                fail_expectation("no enclave spec");
                break;
            }
            uint64_t bound = spec->clone_bound.value_or(1);
            uint64_t attempts = op.clone_attempts ? op.clone_attempts : bound + 1;
            crypto::Rng binary_rng(spec->binary_seed);
            Bytes binary = binary_rng.next_bytes(spec->binary_size);
            uint64_t successes = 0;
            for (uint64_t i = 0; i < attempts; ++i) {
                auto got = host_init(spec->device, SoftwareId{spec->id},
                                     Version{spec->version}, spec->clone_bound, binary);
                if (got.ok()) {
                    sm(spec->device).run(got.value());
                    ++successes;
                } else if (got.error() != Err::CloneLimitExceeded) {
                    fail_expectation(std::string("unexpected error ") +
                                     to_string(got.error()));
                }
            }
            if (successes != bound - 1) fail_expectation("clone count off");
            break;
        }
        case OpKind::StateReplayAttack: {
            SimEnclave* e = enclave(op_source_device_, op_source_eid_);
            if (!e) {
                fail_expectation("no enclave");
                break;
            }
            auto ctr = sm(op_source_device_).allocate_counter(op_source_eid_);
            if (!ctr.ok()) {
                fail_expectation("counter allocation failed");
                break;
            }
            auto stale_blob = e->seal_state(ctr.value());
            e->process_input(to_bytes("advance"));
            auto fresh_blob = e->seal_state(ctr.value());
            if (!stale_blob.ok() || !fresh_blob.ok()) {
                fail_expectation("seal failed");
                break;
            }
            auto fresh = e->unseal_state(ctr.value(), fresh_blob.value());
            if (!fresh.ok() || fresh.value() != e->state()) {
                fail_expectation("fresh blob did not restore");
            }
            auto stale = e->unseal_state(ctr.value(), stale_blob.value());
            if (stale.ok() || stale.error() != Err::RollbackDetected) {
                fail_expectation("stale blob not detected");
            }
            append_internal_event("seal_replay", "host",
                                  enclave_name(op_source_device_, op_source_eid_),
                                  scripted_expectation_held_ ? "ok" : "failed", "");
            break;
        }
        case OpKind::TimeAccounting: {
            SecurityMonitor& monitor = sm(op_source_device_);
            EnclaveId eid = op_source_eid_;
            crypto::Rng schedule_rng(scenario_.seed * 271 + 9);
            Ticks analytic = 0;
            for (uint32_t i = 0; i < op.switch_intervals; ++i) {
                clock_.advance(schedule_rng.below(997) + 1);
                on_context_switch(monitor, SwitchDirection::HostToEnclave, eid,
                                  clock_.rdtime());
                Ticks dur = schedule_rng.below(1399);
                clock_.advance(dur);
                on_context_switch(monitor, SwitchDirection::EnclaveToHost, eid,
                                  clock_.rdtime());
                analytic += dur;
            }
            auto total = enclave_local_time(monitor, eid, clock_.rdtime());
            if (!total.ok() || total.value() != analytic) {
                fail_expectation("accumulated time diverged");
            }
            append_internal_event("time_accounting", "host",
                                  enclave_name(op_source_device_, op_source_eid_),
                                  scripted_expectation_held_ ? "ok" : "failed",
                                  "ticks=" + std::to_string(analytic));
            break;
        }
    }
}

}  // namespace keyfort
