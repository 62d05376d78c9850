//! Procedure IV: persistent or ephemeral rights delegation.
//!
//! Four messages between user and owner. The owner answers the signed
//! request with the authentication token encrypted under a fresh
//! session key — a persistent token is a role group-member key, an
//! ephemeral one is the owner's group signature over the requested
//! tuple — but withholds the session key until the user's signed
//! receipt over both prior messages arrives. Dropping the final
//! key-transport message therefore leaves the user with an unusable
//! ciphertext while the owner already holds the receipt.

use crate::crypto::{self, KemPublicKey, KemSecretKey, DhGroup, DhShare};
use crate::groupsig;
use crate::ibs;
use crate::keyfile;
use crate::policy::AttributeValue;
use crate::wire::{self, AuthSlot, Nonce, Procedure, Timestamp, WireMessage};

use super::parties::{OwnerState, SessionCipher, UserState, OWNER_ROLE};
use super::{
    check_skew, decode_attributes, encode_attributes, get_field, get_string, get_timestamp, last8,
    tags, AbortReason, DelegationToken, EngineCtx, RevocationTarget, TokenKind,
};

/// The four user-side states, one per protocol message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UserDelegateState {
    Start,
    AwaitToken,
    AwaitKey,
    Done,
}

impl UserDelegateState {
    pub const COUNT: usize = 4;

    pub fn index(&self) -> usize {
        match self {
            UserDelegateState::Start => 0,
            UserDelegateState::AwaitToken => 1,
            UserDelegateState::AwaitKey => 2,
            UserDelegateState::Done => 3,
        }
    }
}

enum EphemeralSecret {
    Kem(KemSecretKey),
    Dh(DhShare),
}

/// User-side engine for one delegation run.
pub struct UserDelegate {
    state: UserDelegateState,
    kind: TokenKind,
    role: String,
    nonce: Nonce,
    secret: EphemeralSecret,
    m1_signing: Vec<u8>,
    m1_auth: Vec<u8>,
    enc_token: Vec<u8>,
}

/// Canonical bytes of the signed request tuple (pseudonym, role,
/// attributes, window); the same bytes are what an ephemeral credential
/// certifies and what the car later re-verifies.
pub fn credential_tuple(
    pseudonym: &str,
    role: &str,
    attributes: &[AttributeValue],
    window_start: Timestamp,
    window_stop: Timestamp,
) -> Vec<u8> {
    wire::tuple_bytes(&[
        (tags::PSEUDONYM, pseudonym.as_bytes()),
        (tags::ROLE, role.as_bytes()),
        (tags::ATTRIBUTES, &encode_attributes(attributes)),
        (tags::TSTART, &window_start.to_bytes()),
        (tags::TSTOP, &window_stop.to_bytes()),
    ])
}

pub(crate) fn parse_credential_tuple(
    bytes: &[u8],
) -> Result<(String, String, Vec<AttributeValue>, Timestamp, Timestamp), AbortReason> {
    let fields = wire::parse_tuple(bytes).map_err(|_| AbortReason::MalformedMessage)?;
    let expected = [
        tags::PSEUDONYM,
        tags::ROLE,
        tags::ATTRIBUTES,
        tags::TSTART,
        tags::TSTOP,
    ];
    if fields.len() != expected.len()
        || fields.iter().map(|(t, _)| *t).ne(expected.iter().copied())
    {
        return Err(AbortReason::MalformedMessage);
    }
    let pseudonym =
        String::from_utf8(fields[0].1.clone()).map_err(|_| AbortReason::MalformedMessage)?;
    let role = String::from_utf8(fields[1].1.clone()).map_err(|_| AbortReason::MalformedMessage)?;
    let attributes = decode_attributes(&fields[2].1)?;
    let start = Timestamp::from_slice(&fields[3].1).ok_or(AbortReason::MalformedMessage)?;
    let stop = Timestamp::from_slice(&fields[4].1).ok_or(AbortReason::MalformedMessage)?;
    Ok((pseudonym, role, attributes, start, stop))
}

impl UserDelegate {
    /// Step IV.1: request rights, presenting a fresh ephemeral public
    /// key the owner will use to transport the session key.
    pub fn start(
        user: &UserState,
        kind: TokenKind,
        role: &str,
        attributes: &[AttributeValue],
        window_start: Timestamp,
        window_stop: Timestamp,
        ctx: &mut EngineCtx,
    ) -> (UserDelegate, WireMessage) {
        let (secret, epk_bytes) = match user.cipher {
            SessionCipher::Kem => {
                ctx.ops.kem += 1;
                // match the deployment's signature-modulus scale, rounded
                // up to the even size the KEM requires
                let bits = user.signing.params().modulus().bits();
                let pair = crypto::kem_keygen(bits + (bits & 1), ctx.rng);
                (EphemeralSecret::Kem(pair.secret), pair.public.to_bytes())
            }
            SessionCipher::Dh => {
                ctx.ops.dh += 1;
                let share = crypto::dh_keygen(DhGroup::Modp2048, ctx.rng);
                let point = share.point_bytes();
                (EphemeralSecret::Dh(share), point)
            }
        };
        let nonce = Nonce::generate(ctx.rng);
        let mut msg = WireMessage::new(Procedure::Delegate, 1);
        msg.push_field(tags::PSEUDONYM, user.pseudonym.as_bytes());
        msg.push_field(tags::ROLE, role.as_bytes());
        msg.push_field(tags::ATTRIBUTES, encode_attributes(attributes));
        msg.push_field(tags::TSTART, window_start.to_bytes().to_vec());
        msg.push_field(tags::TSTOP, window_stop.to_bytes().to_vec());
        msg.push_field(tags::TOKEN_KIND, vec![kind.byte()]);
        msg.push_field(tags::EPK, epk_bytes);
        msg.push_field(tags::CIPHER_KIND, vec![user.cipher.byte()]);
        msg.push_field(tags::NONCE_A, nonce.0.to_vec());
        msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let sig = ibs::sign(&user.signing, &msg.signing_bytes(), ctx.rng);
        msg.auth = AuthSlot::Ibs(sig.to_bytes());
        (
            UserDelegate {
                state: UserDelegateState::AwaitToken,
                kind,
                role: role.to_string(),
                nonce,
                secret,
                m1_signing: msg.signing_bytes(),
                m1_auth: sig.to_bytes(),
                enc_token: Vec::new(),
            },
            msg,
        )
    }

    /// Step IV.3: acknowledge the encrypted token with a signature over
    /// both prior messages.
    pub fn on_token(
        &mut self,
        user: &UserState,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if self.state != UserDelegateState::AwaitToken
            || msg.procedure != Procedure::Delegate
            || msg.step != 2
        {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[
            tags::NONCE_B,
            tags::NONCE_A,
            tags::ENC_TOKEN,
            tags::TRUNC_SIG,
            tags::TOKEN_KIND,
            tags::TIMESTAMP,
        ])
        .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        if get_field(msg, tags::NONCE_A)? != self.nonce.0 {
            return Err(AbortReason::NonceMismatch);
        }
        if get_field(msg, tags::TRUNC_SIG)? != last8(&self.m1_auth)? {
            return Err(AbortReason::TruncationMismatch);
        }
        if get_field(msg, tags::TOKEN_KIND)? != [self.kind.byte()] {
            return Err(AbortReason::CredentialMismatch);
        }
        let AuthSlot::Group(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        let owner_gpk = user.directory_gpk(OWNER_ROLE)?;
        ctx.ops.gs_verify += 1;
        if !groupsig::verify(
            &owner_gpk,
            &msg.signing_bytes(),
            &groupsig::GroupSignature::from_bytes(sig),
        ) {
            return Err(AbortReason::BadSignature);
        }
        self.enc_token = get_field(msg, tags::ENC_TOKEN)?.to_vec();

        let mut receipt = WireMessage::new(Procedure::Delegate, 3);
        receipt.push_field(tags::EMBEDDED, self.m1_signing.clone());
        receipt.push_field(tags::EMBEDDED_2, msg.signing_bytes());
        receipt.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let sig = ibs::sign(&user.signing, &receipt.signing_bytes(), ctx.rng);
        receipt.auth = AuthSlot::Ibs(sig.to_bytes());
        self.state = UserDelegateState::AwaitKey;
        Ok(receipt)
    }

    /// Step IV.4: receive the key transport, recover the session key
    /// and decrypt the token.
    pub fn on_key(
        &mut self,
        user: &UserState,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<DelegationToken, AbortReason> {
        if self.state != UserDelegateState::AwaitKey
            || msg.procedure != Procedure::Delegate
            || msg.step != 4
        {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[tags::KEY_TRANSPORT, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let transport = get_field(msg, tags::KEY_TRANSPORT)?;
        let key = match &self.secret {
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
        let token_bytes =
            crypto::sym_decrypt(&key, &self.enc_token).map_err(|_| AbortReason::DecryptFailed)?;
        let token = match self.kind {
            TokenKind::Persistent => {
                let backend = user.directory_gpk(&self.role)?.backend();
                let member = keyfile::load_group_member(&token_bytes, backend)
                    .map_err(|_| AbortReason::BadToken)?;
                DelegationToken::Persistent {
                    role: self.role.clone(),
                    member,
                }
            }
            TokenKind::Ephemeral => {
                let fields =
                    wire::parse_tuple(&token_bytes).map_err(|_| AbortReason::BadToken)?;
                if fields.len() != 2
                    || fields[0].0 != tags::CREDENTIAL_MSG
                    || fields[1].0 != tags::CREDENTIAL_SIG
                {
                    return Err(AbortReason::BadToken);
                }
                let credential_msg = fields[0].1.clone();
                let credential_sig = fields[1].1.clone();
                let (pseudonym, role, attributes, start, stop) =
                    parse_credential_tuple(&credential_msg)?;
                if pseudonym != user.pseudonym || role != self.role {
                    return Err(AbortReason::BadToken);
                }
                DelegationToken::Ephemeral {
                    role,
                    attributes,
                    window_start: start,
                    window_stop: stop,
                    credential_msg,
                    credential_sig,
                }
            }
        };
        self.state = UserDelegateState::Done;
        Ok(token)
    }

    pub fn state(&self) -> UserDelegateState {
        self.state
    }
}

/// Owner-side state between the token answer and the key release.
pub struct OwnerDelegate {
    user_pseudonym: String,
    role: String,
    kind: TokenKind,
    token_digest: Option<[u8; 32]>,
    key_transport: Vec<u8>,
    m1_signing: Vec<u8>,
    m2_signing: Vec<u8>,
}

impl OwnerState {
    /// Step IV.2: verify the request, encrypt the token under a fresh
    /// session key, echo the nonce and the truncated request signature,
    /// and sign the whole answer as an anonymous owner-group member.
    pub fn handle_delegate_request(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if msg.procedure != Procedure::Delegate || msg.step != 1 {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[
            tags::PSEUDONYM,
            tags::ROLE,
            tags::ATTRIBUTES,
            tags::TSTART,
            tags::TSTOP,
            tags::TOKEN_KIND,
            tags::EPK,
            tags::CIPHER_KIND,
            tags::NONCE_A,
            tags::TIMESTAMP,
        ])
        .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        let pseudonym = get_string(msg, tags::PSEUDONYM)?;
        let AuthSlot::Ibs(request_sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            self.signing.params(),
            pseudonym.as_bytes(),
            &msg.signing_bytes(),
            request_sig,
        ) {
            return Err(AbortReason::BadSignature);
        }
        let role = get_string(msg, tags::ROLE)?;
        let attributes = decode_attributes(get_field(msg, tags::ATTRIBUTES)?)?;
        let window_start = Timestamp::from_slice(get_field(msg, tags::TSTART)?)
            .ok_or(AbortReason::MalformedMessage)?;
        let window_stop = Timestamp::from_slice(get_field(msg, tags::TSTOP)?)
            .ok_or(AbortReason::MalformedMessage)?;
        let kind = TokenKind::from_byte(get_field(msg, tags::TOKEN_KIND)?[0])?;
        let cipher = SessionCipher::from_byte(get_field(msg, tags::CIPHER_KIND)?[0])?;

        // build the authentication token
        let (token_bytes, token_digest) = match kind {
            TokenKind::Persistent => {
                let (_gpk, member) = self
                    .take_member(&role, ctx.rng)
                    .ok_or(AbortReason::BadToken)?;
                (keyfile::save_group_member(&member), None)
            }
            TokenKind::Ephemeral => {
                let credential_msg = credential_tuple(
                    &pseudonym,
                    &role,
                    &attributes,
                    window_start,
                    window_stop,
                );
                let (owner_gpk, owner_member) = self.owner_membership(ctx.rng);
                ctx.ops.gs_sign += 1;
                let credential_sig =
                    groupsig::sign(&owner_gpk, &owner_member, &credential_msg, ctx.rng);
                let digest = crate::crypto::hash(credential_sig.as_bytes());
                (
                    wire::tuple_bytes(&[
                        (tags::CREDENTIAL_MSG, &credential_msg),
                        (tags::CREDENTIAL_SIG, credential_sig.as_bytes()),
                    ]),
                    Some(digest),
                )
            }
        };

        // fresh session key and its transport under the user's key
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

        let enc_token = crypto::sym_encrypt(&key, &token_bytes, ctx.rng);
        let mut reply = WireMessage::new(Procedure::Delegate, 2);
        reply.push_field(tags::NONCE_B, Nonce::generate(ctx.rng).0.to_vec());
        reply.push_field(tags::NONCE_A, get_field(msg, tags::NONCE_A)?.to_vec());
        reply.push_field(tags::ENC_TOKEN, enc_token);
        reply.push_field(tags::TRUNC_SIG, last8(request_sig)?.to_vec());
        reply.push_field(tags::TOKEN_KIND, vec![kind.byte()]);
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        let (owner_gpk, owner_member) = self.owner_membership(ctx.rng);
        ctx.ops.gs_sign += 1;
        let sig = groupsig::sign(&owner_gpk, &owner_member, &reply.signing_bytes(), ctx.rng);
        reply.auth = AuthSlot::Group(sig.as_bytes().to_vec());

        self.delegate_session = Some(OwnerDelegate {
            user_pseudonym: pseudonym,
            role,
            kind,
            token_digest,
            key_transport,
            m1_signing: msg.signing_bytes(),
            m2_signing: reply.signing_bytes(),
        });
        Ok(reply)
    }

    /// Step IV.4: release the session key only against a valid receipt
    /// over both prior messages, and keep the receipt.
    pub fn handle_delegate_receipt(
        &mut self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        let session = self
            .delegate_session
            .take()
            .ok_or(AbortReason::UnexpectedStep)?;
        if msg.procedure != Procedure::Delegate || msg.step != 3 {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[tags::EMBEDDED, tags::EMBEDDED_2, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        if get_field(msg, tags::EMBEDDED)? != session.m1_signing.as_slice()
            || get_field(msg, tags::EMBEDDED_2)? != session.m2_signing.as_slice()
        {
            return Err(AbortReason::CredentialMismatch);
        }
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            self.signing.params(),
            session.user_pseudonym.as_bytes(),
            &msg.signing_bytes(),
            sig,
        ) {
            return Err(AbortReason::BadSignature);
        }

        // non-repudiation evidence plus revocation bookkeeping
        self.receipts.push(super::parties::DelegationReceipt {
            user_pseudonym: session.user_pseudonym.clone(),
            role: session.role.clone(),
            kind: session.kind,
            token_digest: session.token_digest,
            receipt: wire::encode(msg).map_err(|_| AbortReason::MalformedMessage)?,
        });
        {
            let mut revocations = self.revocations.write().unwrap();
            revocations.register_delegation(
                RevocationTarget::Pseudonym(session.user_pseudonym.clone()),
                &self.pseudonym,
            );
            if let Some(digest) = session.token_digest {
                revocations
                    .register_delegation(RevocationTarget::TokenDigest(digest), &self.pseudonym);
            }
        }

        let mut release = WireMessage::new(Procedure::Delegate, 4);
        release.push_field(tags::KEY_TRANSPORT, session.key_transport);
        release.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        Ok(release)
    }
}
