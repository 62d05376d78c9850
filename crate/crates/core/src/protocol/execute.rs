//! Procedure V: execute a vehicle function with asymmetric
//! authentication, establishing a session for later on-the-fly calls.
//!
//! A persistent user signs the request with their role group key and
//! stays anonymous; an ephemeral user signs with their identity key and
//! attaches the owner-signed credential they received at delegation.
//! The car answers with an ephemeral public key, a nonce, a fresh
//! session identifier and the truncated request signature; the user
//! returns the session key under the car's ephemeral key together with
//! the encrypted action bound to the truncated car signature, MAC'd
//! under the session key. Nothing executes unless the signature chain,
//! the revocation list, the delegation window and the policy all agree.

use crate::crypto::{self, DhGroup, DhShare, KemPublicKey, KemSecretKey};
use crate::groupsig;
use crate::ibs;
use crate::policy::{self, AttributeValue};
use crate::wire::{self, AuthSlot, Nonce, Procedure, WireMessage};

use super::parties::{CarState, SessionCipher, SessionHandle, SessionState, UserState, OWNER_ROLE};
use super::{
    abort_on, action_flag_byte, action_from_byte, check_skew, decode_attributes, get_field,
    get_string, get_timestamp, last8, tags, AbortReason, ActionRequest, DelegationToken,
    EngineCtx, RevocationTarget, TokenKind,
};

/// The three user-side states, one per protocol message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserExecuteState {
    Start,
    AwaitChallenge,
    Done,
}

impl UserExecuteState {
    pub const COUNT: usize = 3;

    pub fn index(&self) -> usize {
        match self {
            UserExecuteState::Start => 0,
            UserExecuteState::AwaitChallenge => 1,
            UserExecuteState::Done => 2,
        }
    }
}

/// User-side engine for one execute run.
pub struct UserExecute {
    state: UserExecuteState,
    action: ActionRequest,
    m1_auth: Vec<u8>,
}

impl UserExecute {
    /// Step V.1: request the action's role with a fresh nonce, signed
    /// according to the delegation kind.
    pub fn start(
        user: &UserState,
        action: ActionRequest,
        claimed_attributes: &[AttributeValue],
        ctx: &mut EngineCtx,
    ) -> Result<(UserExecute, WireMessage), AbortReason> {
        let token = user.token.as_ref().ok_or(AbortReason::BadToken)?;
        let nonce = Nonce::generate(ctx.rng);
        let mut msg = WireMessage::new(Procedure::Execute, 1);
        msg.push_field(tags::NONCE_A, nonce.0.to_vec());
        msg.push_field(tags::ROLE, token.role().as_bytes());
        msg.push_field(
            tags::ATTRIBUTES,
            super::encode_attributes(claimed_attributes),
        );
        msg.push_field(tags::TOKEN_KIND, vec![token.kind().byte()]);
        let auth = match token {
            DelegationToken::Persistent { role, member } => {
                msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
                let gpk = user.directory_gpk(role)?;
                ctx.ops.gs_sign += 1;
                let sig = groupsig::sign(&gpk, member, &msg.signing_bytes(), ctx.rng);
                AuthSlot::Group(sig.as_bytes().to_vec())
            }
            DelegationToken::Ephemeral {
                credential_msg,
                credential_sig,
                ..
            } => {
                msg.push_field(tags::PSEUDONYM, user.pseudonym.as_bytes());
                msg.push_field(tags::CREDENTIAL_MSG, credential_msg.clone());
                msg.push_field(tags::CREDENTIAL_SIG, credential_sig.clone());
                msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
                ctx.ops.ibs_sign += 1;
                let sig = ibs::sign(&user.signing, &msg.signing_bytes(), ctx.rng);
                AuthSlot::Ibs(sig.to_bytes())
            }
        };
        msg.auth = auth;
        Ok((
            UserExecute {
                state: UserExecuteState::AwaitChallenge,
                action,
                m1_auth: msg.auth.bytes().to_vec(),
            },
            msg,
        ))
    }

    /// Step V.3: verify the car's challenge, transport the session key
    /// and send the encrypted action bound to the car's signature.
    pub fn on_challenge(
        &mut self,
        user: &mut UserState,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if self.state != UserExecuteState::AwaitChallenge
            || msg.procedure != Procedure::Execute
            || msg.step != 2
        {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[
            tags::EPK,
            tags::CIPHER_KIND,
            tags::NONCE_B,
            tags::SID,
            tags::TRUNC_SIG,
            tags::TIMESTAMP,
        ])
        .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            user.signing.params(),
            user.car_id.as_bytes(),
            &msg.signing_bytes(),
            sig,
        ) {
            return Err(AbortReason::BadSignature);
        }
        if get_field(msg, tags::TRUNC_SIG)? != last8(&self.m1_auth)? {
            return Err(AbortReason::TruncationMismatch);
        }
        let sid: [u8; 8] = get_field(msg, tags::SID)?
            .try_into()
            .map_err(|_| AbortReason::MalformedMessage)?;
        let cipher = SessionCipher::from_byte(get_field(msg, tags::CIPHER_KIND)?[0])?;
        let (key, key_transport) = match cipher {
            SessionCipher::Kem => {
                let epk = KemPublicKey::from_bytes(get_field(msg, tags::EPK)?)
                    .map_err(|_| AbortReason::MalformedMessage)?;
                ctx.ops.kem += 1;
                crypto::kem_encapsulate(&epk, ctx.rng)
            }
            SessionCipher::Dh => {
                ctx.ops.dh += 1;
                let share = crypto::dh_keygen(DhGroup::Modp2048, ctx.rng);
                let key = crypto::dh_combine(&share, get_field(msg, tags::EPK)?)
                    .map_err(|_| AbortReason::MalformedMessage)?;
                (key, share.point_bytes())
            }
        };

        let action_plain = wire::tuple_bytes(&[
            (tags::ACTION_OBJECT, self.action.object.as_bytes()),
            (tags::ACTION_FLAG, &[action_flag_byte(self.action.action)]),
            (tags::TRUNC_SIG, &last8(sig)?),
        ]);
        let action_ct = crypto::sym_encrypt(&key, &action_plain, ctx.rng);

        let mut reply = WireMessage::new(Procedure::Execute, 3);
        reply.push_field(tags::KEY_TRANSPORT, key_transport);
        reply.push_field(tags::ACTION_CT, action_ct);
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        reply.auth = AuthSlot::Mac(*crypto::mac_sign(&key, &reply.signing_bytes()).as_bytes());

        user.session = Some(SessionHandle { sid, key });
        self.state = UserExecuteState::Done;
        Ok(reply)
    }

    pub fn state(&self) -> UserExecuteState {
        self.state
    }
}

enum EphemeralSecret {
    Kem(KemSecretKey),
    Dh(DhShare),
}

/// Car-side state between challenge and key arrival.
pub struct CarExecute {
    role: String,
    attributes: Vec<AttributeValue>,
    sid: [u8; 8],
    secret: EphemeralSecret,
    m2_auth_last8: [u8; 8],
}

impl CarState {
    /// Step V.1 at the car: verify the credential chain and the
    /// revocation list, then challenge with an ephemeral key and a
    /// fresh session identifier.
    pub fn handle_execute_request(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        let result = self.execute_request_inner(msg, ctx);
        abort_on(self, Procedure::Execute, 1, result)
    }

    fn execute_request_inner(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if msg.procedure != Procedure::Execute || msg.step != 1 {
            return Err(AbortReason::UnexpectedStep);
        }
        let params = self.require_provisioned()?.params.clone();
        self.owner.as_ref().ok_or(AbortReason::NoOwner)?;
        let kind = TokenKind::from_byte(
            get_field(msg, tags::TOKEN_KIND)?
                .first()
                .copied()
                .ok_or(AbortReason::MalformedMessage)?,
        )?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let role = get_string(msg, tags::ROLE)?;
        let claimed_attributes = decode_attributes(get_field(msg, tags::ATTRIBUTES)?)?;

        let attributes = match kind {
            TokenKind::Persistent => {
                msg.expect_fields(&[
                    tags::NONCE_A,
                    tags::ROLE,
                    tags::ATTRIBUTES,
                    tags::TOKEN_KIND,
                    tags::TIMESTAMP,
                ])
                .map_err(|_| AbortReason::MalformedMessage)?;
                let record = self.role_keys.get(&role).ok_or(AbortReason::UnknownRole)?;
                if record.valid_from > ctx.now || record.validity < ctx.now {
                    return Err(AbortReason::WindowExpired);
                }
                let AuthSlot::Group(sig) = &msg.auth else {
                    return Err(AbortReason::BadSignature);
                };
                ctx.ops.gs_verify += 1;
                if !groupsig::verify(
                    &record.gpk,
                    &msg.signing_bytes(),
                    &groupsig::GroupSignature::from_bytes(sig),
                ) {
                    return Err(AbortReason::BadSignature);
                }
                // persistent attributes are claimed, not owner-bound
                claimed_attributes
            }
            TokenKind::Ephemeral => {
                msg.expect_fields(&[
                    tags::NONCE_A,
                    tags::ROLE,
                    tags::ATTRIBUTES,
                    tags::TOKEN_KIND,
                    tags::PSEUDONYM,
                    tags::CREDENTIAL_MSG,
                    tags::CREDENTIAL_SIG,
                    tags::TIMESTAMP,
                ])
                .map_err(|_| AbortReason::MalformedMessage)?;
                let pseudonym = get_string(msg, tags::PSEUDONYM)?;
                let AuthSlot::Ibs(sig) = &msg.auth else {
                    return Err(AbortReason::BadSignature);
                };
                ctx.ops.ibs_verify += 1;
                if !ibs::verify_bytes(&params, pseudonym.as_bytes(), &msg.signing_bytes(), sig) {
                    return Err(AbortReason::BadSignature);
                }
                // the credential is the owner's group signature over the
                // delegated tuple; re-verify it against the owner-role key
                let owner_record = self
                    .role_keys
                    .get(OWNER_ROLE)
                    .ok_or(AbortReason::UnknownRole)?;
                let credential_msg = get_field(msg, tags::CREDENTIAL_MSG)?;
                let credential_sig = get_field(msg, tags::CREDENTIAL_SIG)?;
                ctx.ops.gs_verify += 1;
                if !groupsig::verify(
                    &owner_record.gpk,
                    credential_msg,
                    &groupsig::GroupSignature::from_bytes(credential_sig),
                ) {
                    return Err(AbortReason::BadSignature);
                }
                let (cred_pseudonym, cred_role, cred_attributes, window_start, window_stop) =
                    super::delegate::parse_credential_tuple(credential_msg)?;
                if cred_pseudonym != pseudonym || cred_role != role {
                    return Err(AbortReason::CredentialMismatch);
                }
                if ctx.now < window_start || ctx.now > window_stop {
                    return Err(AbortReason::WindowExpired);
                }
                let revocations = self.revocations.read().unwrap();
                if revocations.is_revoked(&RevocationTarget::Pseudonym(pseudonym.clone()), ctx.now)
                    || revocations.is_revoked(
                        &RevocationTarget::TokenDigest(crypto::hash(credential_sig)),
                        ctx.now,
                    )
                {
                    return Err(AbortReason::Revoked);
                }
                // ephemeral attributes come from the owner-signed credential
                cred_attributes
            }
        };

        let (secret, epk_bytes) = match self.config.cipher {
            SessionCipher::Kem => {
                ctx.ops.kem += 1;
                let pair = crypto::kem_keygen(self.config.ibs_bits, ctx.rng);
                (EphemeralSecret::Kem(pair.secret), pair.public.to_bytes())
            }
            SessionCipher::Dh => {
                ctx.ops.dh += 1;
                let share = crypto::dh_keygen(DhGroup::Modp2048, ctx.rng);
                let point = share.point_bytes();
                (EphemeralSecret::Dh(share), point)
            }
        };
        let sid = self.fresh_sid(ctx.rng);
        let mut reply = WireMessage::new(Procedure::Execute, 2);
        reply.push_field(tags::EPK, epk_bytes);
        reply.push_field(tags::CIPHER_KIND, vec![self.config.cipher.byte()]);
        reply.push_field(tags::NONCE_B, Nonce::generate(ctx.rng).0.to_vec());
        reply.push_field(tags::SID, sid.to_vec());
        reply.push_field(tags::TRUNC_SIG, last8(msg.auth.bytes())?.to_vec());
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let signing = &self.require_provisioned()?.signing;
        let sig = ibs::sign(signing, &reply.signing_bytes(), ctx.rng);
        reply.auth = AuthSlot::Ibs(sig.to_bytes());

        self.exec_session = Some(CarExecute {
            role,
            attributes,
            sid,
            secret,
            m2_auth_last8: last8(&sig.to_bytes())?,
        });
        Ok(reply)
    }

    /// Step V.3 at the car: recover the session key, check the MAC and
    /// the bound car-signature truncation, consult policy, and only
    /// then execute and establish the session.
    pub fn handle_execute_final(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<ActionRequest, AbortReason> {
        let result = self.execute_final_inner(msg, ctx);
        abort_on(self, Procedure::Execute, 3, result)
    }

    fn execute_final_inner(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<ActionRequest, AbortReason> {
        if msg.procedure != Procedure::Execute || msg.step != 3 {
            return Err(AbortReason::UnexpectedStep);
        }
        let session = self.exec_session.take().ok_or(AbortReason::UnexpectedStep)?;
        msg.expect_fields(&[tags::KEY_TRANSPORT, tags::ACTION_CT, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let transport = get_field(msg, tags::KEY_TRANSPORT)?;
        let key = match &session.secret {
            EphemeralSecret::Kem(secret) => {
                ctx.ops.kem += 1;
                crypto::kem_decapsulate(secret, transport)
                    .map_err(|_| AbortReason::DecryptFailed)?
            }
            EphemeralSecret::Dh(share) => {
                ctx.ops.dh += 1;
                crypto::dh_combine(share, transport).map_err(|_| AbortReason::DecryptFailed)?
            }
        };
        let AuthSlot::Mac(tag) = &msg.auth else {
            return Err(AbortReason::BadMac);
        };
        if !crypto::mac_verify(
            &key,
            &msg.signing_bytes(),
            &crypto::MacTag::from_bytes(*tag),
        ) {
            return Err(AbortReason::BadMac);
        }
        let action_plain = crypto::sym_decrypt(&key, get_field(msg, tags::ACTION_CT)?)
            .map_err(|_| AbortReason::DecryptFailed)?;
        let fields = wire::parse_tuple(&action_plain).map_err(|_| AbortReason::MalformedMessage)?;
        if fields.len() != 3
            || fields[0].0 != tags::ACTION_OBJECT
            || fields[1].0 != tags::ACTION_FLAG
            || fields[2].0 != tags::TRUNC_SIG
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
        if fields[2].1 != session.m2_auth_last8 {
            return Err(AbortReason::TruncationMismatch);
        }

        let decision = policy::policy_check(
            &self.require_provisioned()?.policy,
            &session.role,
            &object,
            action,
            &session.attributes,
            ctx.now,
        );
        let request = ActionRequest::new(&object, action);
        match decision {
            policy::Decision::Allow => {
                self.audit.push(super::parties::AuditEntry {
                    procedure: "execute",
                    role: session.role.clone(),
                    object: object.clone(),
                    action,
                    outcome: "executed".to_string(),
                });
                self.executed.push(request.clone());
                self.sessions.insert(
                    session.sid,
                    SessionState {
                        sid: session.sid,
                        key,
                        role: session.role,
                        attributes: session.attributes,
                        established_at: ctx.now,
                        lifetime: self.config.session_lifetime,
                    },
                );
                Ok(request)
            }
            policy::Decision::Deny(reason) => {
                self.audit.push(super::parties::AuditEntry {
                    procedure: "execute",
                    role: session.role.clone(),
                    object: object.clone(),
                    action,
                    outcome: format!("deny:{reason}"),
                });
                Err(AbortReason::PolicyDeny(reason))
            }
        }
    }
}
