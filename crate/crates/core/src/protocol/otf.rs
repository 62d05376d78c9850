//! Procedure VI: execute on-the-fly under an established session key.
//!
//! Three MAC-authenticated messages and no asymmetric operation at all:
//! the request names the session and carries the encrypted action, the
//! car challenges with a fresh nonce bound to the truncated request
//! MAC, and the user closes by MAC'ing the car's challenge MAC. The car
//! re-checks policy and executes only after the final MAC verifies, so
//! replaying an old request dies at the fresh challenge.

use crate::crypto::{self, MacTag};
use crate::policy;
use crate::wire::{self, AuthSlot, Nonce, Procedure, WireMessage};

use super::parties::{CarState, UserState};
use super::{
    abort_on, action_flag_byte, action_from_byte, check_skew, get_field, get_timestamp,
    tags, truncate_mac64, AbortReason, ActionRequest, EngineCtx,
};

/// The three user-side states, one per protocol message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserOtfState {
    Start,
    AwaitChallenge,
    Done,
}

impl UserOtfState {
    pub const COUNT: usize = 3;

    pub fn index(&self) -> usize {
        match self {
            UserOtfState::Start => 0,
            UserOtfState::AwaitChallenge => 1,
            UserOtfState::Done => 2,
        }
    }
}

/// User-side engine for one on-the-fly run.
pub struct UserOtf {
    state: UserOtfState,
    m1_mac: MacTag,
}

impl UserOtf {
    /// Step VI.1: encrypted action under the session key, MAC'd.
    pub fn start(
        user: &UserState,
        action: &ActionRequest,
        ctx: &mut EngineCtx,
    ) -> Result<(UserOtf, WireMessage), AbortReason> {
        let session = user.session.as_ref().ok_or(AbortReason::UnknownSession)?;
        let action_plain = wire::tuple_bytes(&[
            (tags::ACTION_OBJECT, action.object.as_bytes()),
            (tags::ACTION_FLAG, &[action_flag_byte(action.action)]),
        ]);
        let action_ct = crypto::sym_encrypt(&session.key, &action_plain, ctx.rng);
        let mut msg = WireMessage::new(Procedure::ExecuteOtf, 1);
        msg.push_field(tags::SID, session.sid.to_vec());
        msg.push_field(tags::ACTION_CT, action_ct);
        msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        let mac = crypto::mac_sign(&session.key, &msg.signing_bytes());
        msg.auth = AuthSlot::Mac(*mac.as_bytes());
        Ok((
            UserOtf {
                state: UserOtfState::AwaitChallenge,
                m1_mac: mac,
            },
            msg,
        ))
    }

    /// Step VI.3: verify the challenge and answer with a MAC over the
    /// car's challenge MAC.
    pub fn on_challenge(
        &mut self,
        user: &UserState,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if self.state != UserOtfState::AwaitChallenge
            || msg.procedure != Procedure::ExecuteOtf
            || msg.step != 2
        {
            return Err(AbortReason::UnexpectedStep);
        }
        let session = user.session.as_ref().ok_or(AbortReason::UnknownSession)?;
        msg.expect_fields(&[tags::NONCE_B, tags::TRUNC_SIG, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let AuthSlot::Mac(tag) = &msg.auth else {
            return Err(AbortReason::BadMac);
        };
        if !crypto::mac_verify(
            &session.key,
            &msg.signing_bytes(),
            &MacTag::from_bytes(*tag),
        ) {
            return Err(AbortReason::BadMac);
        }
        if get_field(msg, tags::TRUNC_SIG)? != truncate_mac64(&self.m1_mac) {
            return Err(AbortReason::TruncationMismatch);
        }

        let mut reply = WireMessage::new(Procedure::ExecuteOtf, 3);
        reply.push_field(tags::PEER_MAC, tag.to_vec());
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        let mac = crypto::mac_sign(&session.key, &reply.signing_bytes());
        reply.auth = AuthSlot::Mac(*mac.as_bytes());
        self.state = UserOtfState::Done;
        Ok(reply)
    }

    pub fn state(&self) -> UserOtfState {
        self.state
    }
}

/// Car-side state between challenge and the closing MAC.
pub struct CarOtf {
    sid: [u8; 8],
    pending: ActionRequest,
    m2_mac: MacTag,
}

impl CarState {
    /// Step VI.1 at the car: look up the session, verify the MAC,
    /// decrypt the action, and challenge. Nothing executes yet.
    pub fn handle_otf_request(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        let result = self.otf_request_inner(msg, ctx);
        abort_on(self, Procedure::ExecuteOtf, 1, result)
    }

    fn otf_request_inner(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if msg.procedure != Procedure::ExecuteOtf || msg.step != 1 {
            return Err(AbortReason::UnexpectedStep);
        }
        self.require_provisioned()?;
        msg.expect_fields(&[tags::SID, tags::ACTION_CT, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let sid: [u8; 8] = get_field(msg, tags::SID)?
            .try_into()
            .map_err(|_| AbortReason::MalformedMessage)?;
        let session = self
            .sessions
            .get(&sid)
            .ok_or(AbortReason::UnknownSession)?;
        if !session.is_valid_at(ctx.now) {
            return Err(AbortReason::SessionExpired);
        }
        let AuthSlot::Mac(tag) = &msg.auth else {
            return Err(AbortReason::BadMac);
        };
        if !crypto::mac_verify(
            &session.key,
            &msg.signing_bytes(),
            &MacTag::from_bytes(*tag),
        ) {
            return Err(AbortReason::BadMac);
        }
        let action_plain = crypto::sym_decrypt(&session.key, get_field(msg, tags::ACTION_CT)?)
            .map_err(|_| AbortReason::DecryptFailed)?;
        let fields = wire::parse_tuple(&action_plain).map_err(|_| AbortReason::MalformedMessage)?;
        if fields.len() != 2
            || fields[0].0 != tags::ACTION_OBJECT
            || fields[1].0 != tags::ACTION_FLAG
        {
            return Err(AbortReason::MalformedMessage);
        }
        let object =
            String::from_utf8(fields[0].1.clone()).map_err(|_| AbortReason::MalformedMessage)?;
        let action = action_from_byte(
            *fields[1]
                .1
                .first()
                .ok_or(AbortReason::MalformedMessage)?,
        )?;

        let mut reply = WireMessage::new(Procedure::ExecuteOtf, 2);
        reply.push_field(tags::NONCE_B, Nonce::generate(ctx.rng).0.to_vec());
        reply.push_field(
            tags::TRUNC_SIG,
            truncate_mac64(&MacTag::from_bytes(*tag)).to_vec(),
        );
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        let mac = crypto::mac_sign(&session.key, &reply.signing_bytes());
        reply.auth = AuthSlot::Mac(*mac.as_bytes());
        self.otf_session = Some(CarOtf {
            sid,
            pending: ActionRequest::new(&object, action),
            m2_mac: mac,
        });
        Ok(reply)
    }

    /// Step VI.3 at the car: the closing MAC must cover the exact
    /// challenge MAC; policy is re-checked per request before the
    /// pending action executes.
    pub fn handle_otf_final(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<ActionRequest, AbortReason> {
        let result = self.otf_final_inner(msg, ctx);
        abort_on(self, Procedure::ExecuteOtf, 3, result)
    }

    fn otf_final_inner(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<ActionRequest, AbortReason> {
        if msg.procedure != Procedure::ExecuteOtf || msg.step != 3 {
            return Err(AbortReason::UnexpectedStep);
        }
        let pending = self.otf_session.take().ok_or(AbortReason::UnexpectedStep)?;
        let session = self
            .sessions
            .get(&pending.sid)
            .ok_or(AbortReason::UnknownSession)?
            .clone();
        if !session.is_valid_at(ctx.now) {
            return Err(AbortReason::SessionExpired);
        }
        msg.expect_fields(&[tags::PEER_MAC, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let AuthSlot::Mac(tag) = &msg.auth else {
            return Err(AbortReason::BadMac);
        };
        if !crypto::mac_verify(
            &session.key,
            &msg.signing_bytes(),
            &MacTag::from_bytes(*tag),
        ) {
            return Err(AbortReason::BadMac);
        }
        if get_field(msg, tags::PEER_MAC)? != pending.m2_mac.as_bytes() {
            return Err(AbortReason::TruncationMismatch);
        }

        let decision = policy::policy_check(
            &self.require_provisioned()?.policy,
            &session.role,
            &pending.pending.object,
            pending.pending.action,
            &session.attributes,
            ctx.now,
        );
        match decision {
            policy::Decision::Allow => {
                self.audit.push(super::parties::AuditEntry {
                    procedure: "execute-otf",
                    role: session.role.clone(),
                    object: pending.pending.object.clone(),
                    action: pending.pending.action,
                    outcome: "executed".to_string(),
                });
                self.executed.push(pending.pending.clone());
                Ok(pending.pending)
            }
            policy::Decision::Deny(reason) => {
                self.audit.push(super::parties::AuditEntry {
                    procedure: "execute-otf",
                    role: session.role.clone(),
                    object: pending.pending.object.clone(),
                    action: pending.pending.action,
                    outcome: format!("deny:{reason}"),
                });
                Err(AbortReason::PolicyDeny(reason))
            }
        }
    }
}
