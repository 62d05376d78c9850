//! Procedures I and II: factory setup and root installation.
//!
//! Both run over trusted channels (the simulator refuses them on open
//! ones). Setup installs the car's signing key, the global signature
//! parameters and the factory policy. Root installation binds an owner
//! pseudonym to the car: the seller presents the manufacturer's signed
//! authorization naming seller and car, plus the owner record signed by
//! the seller; the car verifies both signatures before any state
//! change.

use crate::ibs;
use crate::keyfile;
use crate::policy;
use crate::wire::{AuthSlot, Procedure, Timestamp, WireMessage};

use super::parties::{CarState, ManufacturerState, OwnerRecord, OwnerState, SellerState};
use super::{abort_on, check_skew, get_field, get_string, get_timestamp, tags, AbortReason, EngineCtx};

const ACT_SELLER: &[u8] = b"sel";

/// Step I.1: the factory message carrying the car's key material,
/// parameters and rights vector.
pub fn build_setup(
    manufacturer: &ManufacturerState,
    car_id: &str,
    policy_doc: &str,
    ctx: &mut EngineCtx,
) -> WireMessage {
    let car_key = manufacturer.issue(car_id);
    let mut msg = WireMessage::new(Procedure::Setup, 1);
    msg.push_field(tags::IDENTITY, manufacturer.identity.as_bytes());
    msg.push_field(tags::CAR_ID, car_id.as_bytes());
    msg.push_field(tags::USER_KEY, keyfile::save_ibs_user(&car_key));
    msg.push_field(tags::IBS_PARAMS, keyfile::save_ibs_params(manufacturer.params()));
    msg.push_field(tags::POLICY_DOC, policy_doc.as_bytes());
    msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
    msg
}

impl CarState {
    /// Install factory state. Only valid once, only over a trusted
    /// channel.
    pub fn handle_setup(
        &mut self,
        msg: &WireMessage,
        trusted: bool,
        ctx: &mut EngineCtx,
    ) -> Result<(), AbortReason> {
        let result = self.setup_inner(msg, trusted, ctx);
        abort_on(self, Procedure::Setup, 1, result)
    }

    fn setup_inner(
        &mut self,
        msg: &WireMessage,
        trusted: bool,
        ctx: &mut EngineCtx,
    ) -> Result<(), AbortReason> {
        if msg.procedure != Procedure::Setup || msg.step != 1 {
            return Err(AbortReason::UnexpectedStep);
        }
        if !trusted {
            return Err(AbortReason::UntrustedChannel);
        }
        if self.provisioned.is_some() {
            return Err(AbortReason::AlreadySetUp);
        }
        msg.expect_fields(&[
            tags::IDENTITY,
            tags::CAR_ID,
            tags::USER_KEY,
            tags::IBS_PARAMS,
            tags::POLICY_DOC,
            tags::TIMESTAMP,
        ])
        .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        if get_field(msg, tags::CAR_ID)? != self.car_id.as_bytes() {
            return Err(AbortReason::BadCarId);
        }
        let signing = keyfile::load_ibs_user(get_field(msg, tags::USER_KEY)?)
            .map_err(|_| AbortReason::MalformedMessage)?;
        let params = keyfile::load_ibs_params(get_field(msg, tags::IBS_PARAMS)?)
            .map_err(|_| AbortReason::MalformedMessage)?;
        if signing.identity() != self.car_id.as_bytes() || signing.params() != &params {
            return Err(AbortReason::MalformedMessage);
        }
        let doc = std::str::from_utf8(get_field(msg, tags::POLICY_DOC)?)
            .map_err(|_| AbortReason::MalformedMessage)?;
        let table = policy::policy_load(doc).map_err(|_| AbortReason::MalformedMessage)?;
        let manufacturer = get_string(msg, tags::IDENTITY)?;
        self.provisioned = Some(super::parties::ProvisionedCar {
            signing,
            params,
            policy: table,
            manufacturer,
        });
        Ok(())
    }
}

/// Step II.1: the seller asks the manufacturer for installation rights
/// on one car.
pub fn seller_request(
    seller: &SellerState,
    manufacturer_identity: &str,
    car_id: &str,
    ctx: &mut EngineCtx,
) -> WireMessage {
    let mut msg = WireMessage::new(Procedure::SetRoot, 1);
    msg.push_field(tags::IDENTITY, seller.identity.as_bytes());
    msg.push_field(tags::PEER_IDENTITY, manufacturer_identity.as_bytes());
    msg.push_field(tags::CAR_ID, car_id.as_bytes());
    msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
    ctx.ops.ibs_sign += 1;
    let sig = ibs::sign(&seller.signing, &msg.signing_bytes(), ctx.rng);
    msg.auth = AuthSlot::Ibs(sig.to_bytes());
    msg
}

impl ManufacturerState {
    /// Step II.2: authorize the seller for the named car.
    pub fn handle_seller_request(
        &self,
        msg: &WireMessage,
        ctx: &mut EngineCtx,
    ) -> Result<WireMessage, AbortReason> {
        if msg.procedure != Procedure::SetRoot || msg.step != 1 {
            return Err(AbortReason::UnexpectedStep);
        }
        msg.expect_fields(&[
            tags::IDENTITY,
            tags::PEER_IDENTITY,
            tags::CAR_ID,
            tags::TIMESTAMP,
        ])
        .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;
        if get_field(msg, tags::PEER_IDENTITY)? != self.identity.as_bytes() {
            return Err(AbortReason::CredentialMismatch);
        }
        let seller = get_string(msg, tags::IDENTITY)?;
        ctx.ops.ibs_verify += 1;
        let AuthSlot::Ibs(sig) = &msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        if !ibs::verify_bytes(self.params(), seller.as_bytes(), &msg.signing_bytes(), sig) {
            return Err(AbortReason::BadSignature);
        }
        let car_id = get_field(msg, tags::CAR_ID)?.to_vec();

        let mut reply = WireMessage::new(Procedure::SetRoot, 2);
        reply.push_field(tags::ACT, ACT_SELLER);
        reply.push_field(tags::IDENTITY, seller.as_bytes());
        reply.push_field(tags::CAR_ID, car_id);
        reply.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
        ctx.ops.ibs_sign += 1;
        let sig = ibs::sign(&self.signing, &reply.signing_bytes(), ctx.rng);
        reply.auth = AuthSlot::Ibs(sig.to_bytes());
        Ok(reply)
    }
}

/// Step II.3: the owner presents pseudonym, contract start and (out of
/// band) physical credentials; the purchase contract runs indefinitely.
pub fn owner_record(owner: &OwnerState, contract_start: Timestamp, ctx: &mut EngineCtx) -> WireMessage {
    let mut msg = WireMessage::new(Procedure::SetRoot, 3);
    msg.push_field(tags::PSEUDONYM, owner.pseudonym.as_bytes());
    msg.push_field(tags::TSTART, contract_start.to_bytes().to_vec());
    msg.push_field(tags::TSTOP, Timestamp::INFINITY.to_bytes().to_vec());
    msg.push_field(tags::OWNER_DATA, &b"physical-credentials-presented"[..]);
    msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
    msg
}

/// Step II.4: the seller countersigns the owner record and forwards it
/// to the car together with the manufacturer's authorization.
pub fn seller_install(
    seller: &SellerState,
    owner_msg: &WireMessage,
    manufacturer_msg: &WireMessage,
    ctx: &mut EngineCtx,
) -> Result<WireMessage, AbortReason> {
    if owner_msg.procedure != Procedure::SetRoot || owner_msg.step != 3 {
        return Err(AbortReason::UnexpectedStep);
    }
    if manufacturer_msg.procedure != Procedure::SetRoot || manufacturer_msg.step != 2 {
        return Err(AbortReason::UnexpectedStep);
    }
    let mut signed_owner = owner_msg.clone();
    ctx.ops.ibs_sign += 1;
    let sig = ibs::sign(&seller.signing, &signed_owner.signing_bytes(), ctx.rng);
    signed_owner.auth = AuthSlot::Ibs(sig.to_bytes());

    let mut msg = WireMessage::new(Procedure::SetRoot, 4);
    msg.push_field(
        tags::EMBEDDED,
        crate::wire::encode(&signed_owner).map_err(|_| AbortReason::MalformedMessage)?,
    );
    msg.push_field(
        tags::EMBEDDED_2,
        crate::wire::encode(manufacturer_msg).map_err(|_| AbortReason::MalformedMessage)?,
    );
    msg.push_field(tags::TIMESTAMP, ctx.now.to_bytes().to_vec());
    Ok(msg)
}

impl CarState {
    /// Step II.4 at the car: verify the manufacturer's authorization
    /// and the seller's signature over the owner record; only then
    /// install the owner. The owner is set exactly once.
    pub fn handle_set_root(
        &mut self,
        msg: &WireMessage,
        trusted: bool,
        ctx: &mut EngineCtx,
    ) -> Result<(), AbortReason> {
        let result = self.set_root_inner(msg, trusted, ctx);
        abort_on(self, Procedure::SetRoot, 4, result)
    }

    fn set_root_inner(
        &mut self,
        msg: &WireMessage,
        trusted: bool,
        ctx: &mut EngineCtx,
    ) -> Result<(), AbortReason> {
        if msg.procedure != Procedure::SetRoot || msg.step != 4 {
            return Err(AbortReason::UnexpectedStep);
        }
        if !trusted {
            return Err(AbortReason::UntrustedChannel);
        }
        let provisioned_manufacturer = self.require_provisioned()?.manufacturer.clone();
        let params = self.require_provisioned()?.params.clone();
        if self.owner.is_some() {
            return Err(AbortReason::OwnerAlreadySet);
        }
        msg.expect_fields(&[tags::EMBEDDED, tags::EMBEDDED_2, tags::TIMESTAMP])
            .map_err(|_| AbortReason::MalformedMessage)?;
        check_skew(get_timestamp(msg)?, ctx.now)?;

        // manufacturer authorization naming seller and this car
        let auth_msg = crate::wire::decode(get_field(msg, tags::EMBEDDED_2)?)
            .map_err(|_| AbortReason::MalformedMessage)?;
        if auth_msg.procedure != Procedure::SetRoot || auth_msg.step != 2 {
            return Err(AbortReason::UnexpectedStep);
        }
        check_skew(get_timestamp(&auth_msg)?, ctx.now)?;
        if get_field(&auth_msg, tags::ACT)? != ACT_SELLER {
            return Err(AbortReason::MalformedMessage);
        }
        if get_field(&auth_msg, tags::CAR_ID)? != self.car_id.as_bytes() {
            return Err(AbortReason::BadCarId);
        }
        let AuthSlot::Ibs(auth_sig) = &auth_msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            &params,
            provisioned_manufacturer.as_bytes(),
            &auth_msg.signing_bytes(),
            auth_sig,
        ) {
            return Err(AbortReason::BadSignature);
        }
        let seller = get_string(&auth_msg, tags::IDENTITY)?;

        // owner record signed by the authorized seller
        let owner_msg = crate::wire::decode(get_field(msg, tags::EMBEDDED)?)
            .map_err(|_| AbortReason::MalformedMessage)?;
        if owner_msg.procedure != Procedure::SetRoot || owner_msg.step != 3 {
            return Err(AbortReason::UnexpectedStep);
        }
        check_skew(get_timestamp(&owner_msg)?, ctx.now)?;
        let AuthSlot::Ibs(owner_sig) = &owner_msg.auth else {
            return Err(AbortReason::BadSignature);
        };
        ctx.ops.ibs_verify += 1;
        if !ibs::verify_bytes(
            &params,
            seller.as_bytes(),
            &owner_msg.signing_bytes(),
            owner_sig,
        ) {
            return Err(AbortReason::BadSignature);
        }
        let pseudonym = get_string(&owner_msg, tags::PSEUDONYM)?;
        let contract_start = Timestamp::from_slice(get_field(&owner_msg, tags::TSTART)?)
            .ok_or(AbortReason::MalformedMessage)?;
        let validity = Timestamp::from_slice(get_field(&owner_msg, tags::TSTOP)?)
            .ok_or(AbortReason::MalformedMessage)?;

        self.owner = Some(OwnerRecord {
            pseudonym: pseudonym.clone(),
            contract_start,
            validity,
        });
        self.seller = Some(seller);
        self.revocations.write().unwrap().set_root(&pseudonym);
        Ok(())
    }
}
