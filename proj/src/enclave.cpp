#include "keyfort/enclave.hpp"

#include "keyfort/wire.hpp"

namespace keyfort {

const char* to_string(EnclaveMode m) {
    switch (m) {
        case EnclaveMode::Normal: return "Normal";
        case EnclaveMode::ExportedHalted: return "ExportedHalted";
        case EnclaveMode::ImportedWaiting: return "ImportedWaiting";
    }
    return "?";
}

SimEnclave::SimEnclave(EnclaveId eid, SoftwareId id, Measurement m, SecurityMonitor* sm,
                       Bytes initial_state, bool is_destination)
    : eid_(eid),
      id_(std::move(id)),
      m_(m),
      sm_(sm),
      state_(std::move(initial_state)),
      is_destination_(is_destination) {
    if (is_destination_) mode_ = EnclaveMode::ImportedWaiting;
}

Result<Digest32> SimEnclave::process_input(const Bytes& input) {
    if (destroyed_) return Err::UnknownEnclave;
    if (mode_ != EnclaveMode::Normal) return Err::HaltedDuringMigration;
    wire::Writer w;
    w.bytes(state_);
    w.bytes(input);
    Digest32 chain = crypto::digest(w.data());
    state_ = crypto::xof(chain, state_.size());
    input_log_.push_back(input);
    return crypto::digest(state_);
}

Bytes SimEnclave::replay(Bytes initial, const std::vector<Bytes>& inputs) {
    Bytes state = std::move(initial);
    for (const auto& input : inputs) {
        wire::Writer w;
        w.bytes(state);
        w.bytes(input);
        state = crypto::xof(crypto::digest(w.data()), state.size());
    }
    return state;
}

Bytes SimEnclave::export_aad() const {
    const MigrationRecord* rec = sm_->migration_for_enclave(eid_);
    wire::Writer w;
    if (rec) {
        w.bytes(rec->id.id);
        w.u64(rec->eid_s);
        w.u64(rec->eid_d);
    }
    return w.take();
}

Result<crypto::AeadResult> SimEnclave::export_state() {
    if (destroyed_) return Err::UnknownEnclave;
    if (mode_ != EnclaveMode::Normal) return Err::HaltedDuringMigration;
    auto key = sm_->get_transport_key(eid_);
    if (!key.ok()) return key.error();
    Bytes aad = export_aad();
    auto sealed = crypto::aead_seal(key.value(), state_, aad);
    mode_ = EnclaveMode::ExportedHalted;
    return sealed;
}

Status SimEnclave::import_state(const Bytes& ciphertext, const Mac16& tag) {
    if (destroyed_) return Err::UnknownEnclave;
    if (!is_destination_ || imported_) return Err::NotDestination;
    auto key = sm_->get_transport_key(eid_);
    if (!key.ok()) return key.error();
    Bytes aad = export_aad();
    auto opened = crypto::aead_open(key.value(), ciphertext, tag, aad);
    if (!opened.ok()) return opened.error();
    state_ = std::move(opened.value());
    imported_ = true;
    mode_ = EnclaveMode::ImportedWaiting;
    if (send_) send_(sm_endpoint_, MsgKind::Commit, encode_payload(PCommit{eid_}));
    return {};
}

void SimEnclave::on_success_signal() {
    if (imported_ && mode_ == EnclaveMode::ImportedWaiting) mode_ = EnclaveMode::Normal;
}

void SimEnclave::on_migration_failed() {
    if (mode_ == EnclaveMode::ExportedHalted) mode_ = EnclaveMode::Normal;
}

Result<SealedBlob> SimEnclave::seal_state(uint64_t ctr_id) {
    if (destroyed_) return Err::UnknownEnclave;
    auto key = sm_->sealing_key(eid_);
    if (!key.ok()) return key.error();
    auto fresh = sm_->increment_counter(eid_, ctr_id);
    if (!fresh.ok()) return fresh.error();

    wire::Writer plain;
    plain.u64(fresh.value());
    plain.bytes(state_);

    wire::Writer aad;
    aad.bytes(id_.id);
    auto sealed = crypto::aead_seal(key.value(), plain.data(), aad.data());
    SealedBlob blob;
    blob.ciphertext = std::move(sealed.ciphertext);
    blob.tag = sealed.tag;
    return blob;
}

Result<Bytes> SimEnclave::unseal_state(uint64_t ctr_id, const SealedBlob& blob) {
    if (destroyed_) return Err::UnknownEnclave;
    auto key = sm_->sealing_key(eid_);
    if (!key.ok()) return key.error();

    wire::Writer aad;
    aad.bytes(id_.id);
    auto opened = crypto::aead_open(key.value(), blob.ciphertext, blob.tag, aad.data());
    if (!opened.ok()) return opened.error();

    wire::Reader r(opened.value());
    uint64_t embedded = r.u64();
    Bytes payload = r.bytes();
    if (r.failed() || !r.done()) return Err::AuthFailure;

    auto reference = sm_->counter_value(eid_, ctr_id);
    if (!reference.ok()) return reference.error();
    if (embedded != reference.value()) return Err::RollbackDetected;
    return payload;
}

}  // namespace keyfort
