//! Procedure III: role public-key upload, root only.
//!
//! A nonce challenge-response between owner and car, every step signed
//! with identity-based signatures: the owner opens with a nonce, the
//! car answers with the echoed nonce plus its own, the owner sends the
//! role key bound to both nonces, and the car confirms by signing the
//! exact upload message it installed.

use crate::ibs;
use crate::keyfile;
use crate::wire::{self, AuthSlot, Nonce, Procedure, Timestamp, WireMessage};

use super::parties::{CarState, OwnerState, RoleKeyRecord};
use super::{
    abort_on, check_skew, get_field, get_string, get_timestamp, tags, AbortReason, EngineCtx,
};

const ACT_CONFIRM: &[u8] = b"conf";

/// Owner-side state across the four steps.
pub struct OwnerUpload {
    state: State,
    car_id: String,
    role: String,
    gpk_bytes: Vec<u8>,
    valid_from: Timestamp,
    nonce_own: Nonce,
}

enum State {
    AwaitChallenge,
    AwaitConfirm { upload_encoded: Vec<u8> },
    Done,
}

impl OwnerUpload {
    /// Step III.1: open the challenge-response.
    pub fn start(
        owner: &OwnerState,
        car_id: &str,
        role: &str,
        gpk_bytes: Vec<u8>,
        valid_from: Timestamp,
        ctx: &mut EngineCtx,
    ) -> (OwnerUpload, WireMessage) {
        let nonce_own = Nonce::generate(ctx.rng);
        let mut msg = WireMessage::new(Procedure::UploadGpk, 1);
        msg.push_field(tags::NONCE_A, nonce_own.0.to_vec());
        msg.push_field(tags::IDENTITY, owner.pseudonym.as_bytes());
        msg.push_field(tags::CAR_ID, car_id.as_bytes());
        msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let sig = ibs::sign(&owner.signing, &msg.signing_bytes(), ctx.rng);
        msg.auth = AuthSlot::Ibs(sig.to_bytes());
        (
            OwnerUpload {
                state: State::AwaitChallenge,
                car_id: car_id.to_string(),
                role: role.to_string(),
                gpk_bytes,
                valid_from,
                nonce_own,
            },
            msg,
        )
    }

    /// Step III.3: answer the car's challenge with the role key bound
    /// to both nonces.
    pub fn on_challenge(
        &mut self,
        owner: &OwnerState,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if !matches!(self.state, State::AwaitChallenge)
            || msg.procedure != Procedure::UploadGpk
            || msg.step != 2
        {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[tags::NONCE_A, tags::NONCE_B, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            owner.signing.params(),
            self.car_id.as_bytes(),
            &msg.signing_bytes(),
            sig,
        ) {
            return Err(AbortReason::BadSignature);
        }
        if get_field(msg, tags::NONCE_A)? != self.nonce_own.0 {
            return Err(AbortReason::NonceMismatch);
        }
        let nonce_car = get_field(msg, tags::NONCE_B)?.to_vec();

        let mut upload = WireMessage::new(Procedure::UploadGpk, 3);
        upload.push_field(tags::NONCE_A, self.nonce_own.0.to_vec());
        upload.push_field(tags::NONCE_B, nonce_car);
        upload.push_field(tags::ROLE, self.role.as_bytes());
        upload.push_field(tags::GPK, self.gpk_bytes.clone());
        upload.push_field(tags::TSTART, self.valid_from.to_bytes().to_vec());
        upload.push_field(tags::TSTOP, Timestamp::INFINITY.to_bytes().to_vec());
        upload.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let sig = ibs::sign(&owner.signing, &upload.signing_bytes(), ctx.rng);
        upload.auth = AuthSlot::Ibs(sig.to_bytes());
        let encoded = wire::encode(&upload).map_err(|_| AbortReason::MalformedMessage)?;
        self.state = State::AwaitConfirm {
            upload_encoded: encoded,
        };
        Ok(upload)
    }

    /// Step III.4: the car must confirm the exact upload message.
    pub fn on_confirm(
        &mut self,
        owner: &OwnerState,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<(), AbortReason> {
        let State::AwaitConfirm { upload_encoded } = &self.state else {
            return Err(AbortReason::UnexpectedStep);
        };
        if msg.procedure != Procedure::UploadGpk || msg.step != 4 {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[tags::ACT, tags::EMBEDDED, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            owner.signing.params(),
            self.car_id.as_bytes(),
            &msg.signing_bytes(),
            sig,
        ) {
            return Err(AbortReason::BadSignature);
        }
        if get_field(msg, tags::ACT)? != ACT_CONFIRM {
            return Err(AbortReason::MalformedMessage);
        }
        if get_field(msg, tags::EMBEDDED)? != upload_encoded.as_slice() {
            return Err(AbortReason::CredentialMismatch);
        }
        self.state = State::Done;
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        matches!(self.state, State::Done)
    }
}

/// Car-side challenge state between steps 2 and 3.
pub struct CarUpload {
    nonce_own: Vec<u8>,
    nonce_car: Nonce,
}

impl CarState {
    /// Step III.1 at the car: only the installed root may upload, and
    /// the request must name this car.
    pub fn handle_upload_open(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        let result = self.upload_open_inner(msg, ctx);
        abort_on(self, Procedure::UploadGpk, 1, result)
    }

    fn upload_open_inner(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if msg.procedure != Procedure::UploadGpk || msg.step != 1 {
            return Err(AbortReason::UnexpectedStep);
        }
        let params = self.require_provisioned()?.params.clone();
        let owner = self.owner.as_ref().ok_or(AbortReason::NoOwner)?.clone();
        msg.expect_fields(&[tags::NONCE_A, tags::IDENTITY, tags::CAR_ID, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        if get_field(msg, tags::CAR_ID)? != self.car_id.as_bytes() {
            return Err(AbortReason::BadCarId);
        }
        let identity = get_string(msg, tags::IDENTITY)?;
        if identity != owner.pseudonym {
            return Err(AbortReason::NotOwner);
        }
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(&params, identity.as_bytes(), &msg.signing_bytes(), sig) {
            return Err(AbortReason::BadSignature);
        }

        let nonce_car = Nonce::generate(ctx.rng);
        let mut reply = WireMessage::new(Procedure::UploadGpk, 2);
        reply.push_field(tags::NONCE_A, get_field(msg, tags::NONCE_A)?.to_vec());
        reply.push_field(tags::NONCE_B, nonce_car.0.to_vec());
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let signing = &self.require_provisioned()?.signing;
        let sig = ibs::sign(signing, &reply.signing_bytes(), ctx.rng);
        reply.auth = AuthSlot::Ibs(sig.to_bytes());
        self.upload_session = Some(CarUpload {
            nonce_own: get_field(msg, tags::NONCE_A)?.to_vec(),
            nonce_car,
        });
        Ok(reply)
    }

    /// Step III.3 at the car: both nonces must echo exactly; the role
    /// key is installed and the confirmation signs the whole upload
    /// message.
    pub fn handle_upload_install(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        let result = self.upload_install_inner(msg, ctx);
        abort_on(self, Procedure::UploadGpk, 3, result)
    }

    fn upload_install_inner(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if msg.procedure != Procedure::UploadGpk || msg.step != 3 {
            return Err(AbortReason::UnexpectedStep);
        }
        let session = self.upload_session.take().ok_or(AbortReason::UnexpectedStep)?;
        let params = self.require_provisioned()?.params.clone();
        let owner = self.owner.as_ref().ok_or(AbortReason::NoOwner)?.clone();
        msg.expect_fields(&[
            tags::NONCE_A,
            tags::NONCE_B,
            tags::ROLE,
            tags::GPK,
            tags::TSTART,
            tags::TSTOP,
            tags::TIMESTAMP,
        ])
        .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(&params, owner.pseudonym.as_bytes(), &msg.signing_bytes(), sig) {
            return Err(AbortReason::BadSignature);
        }
        if get_field(msg, tags::NONCE_A)? != session.nonce_own.as_slice()
            || get_field(msg, tags::NONCE_B)? != session.nonce_car.0
        {
            return Err(AbortReason::NonceMismatch);
        }
        let role = get_string(msg, tags::ROLE)?;
        let gpk = keyfile::load_group_public(get_field(msg, tags::GPK)?, self.config.gs_backend)
            .map_err(|_| AbortReason::BadToken)?;
        let valid_from = Timestamp::from_slice(get_field(msg, tags::TSTART)?)
            .ok_or(AbortReason::MalformedMessage)?;
        let validity = Timestamp::from_slice(get_field(msg, tags::TSTOP)?)
            .ok_or(AbortReason::MalformedMessage)?;
        self.role_keys.insert(
            role,
            RoleKeyRecord {
                gpk,
                valid_from,
                validity,
            },
        );

        let mut confirm = WireMessage::new(Procedure::UploadGpk, 4);
        confirm.push_field(tags::ACT, ACT_CONFIRM);
        confirm.push_field(
            tags::EMBEDDED,
            wire::encode(msg).map_err(|_| AbortReason::MalformedMessage)?,
        );
        confirm.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let signing = &self.require_provisioned()?.signing;
        let sig = ibs::sign(signing, &confirm.signing_bytes(), ctx.rng);
        confirm.auth = AuthSlot::Ibs(sig.to_bytes());
        Ok(confirm)
    }
}
