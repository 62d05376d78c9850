//! Party state for the five principals: manufacturer, seller, owner,
//! car, and delegated users, plus the [`Cast`] bundle that wires a
//! whole deployment together for the runner, the benches and the
//! simulator.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use rand_chacha::ChaCha20Rng;

use crate::crypto::SymmetricKey;
use crate::groupsig::{self, GroupMemberKey, GroupPublicKey, GsBackend, GsError};
use crate::ibs::{self, IbsMasterKey, IbsParams, IbsScheme, IbsUserKey};
use crate::policy::{Action, PermissionTable};
use crate::wire::{Procedure, Timestamp};

use super::{
    delegate, execute, otf, upload, AbortReason, ActionRequest, DelegationToken, SharedRevocations,
    TokenKind,
};

/// Which ephemeral-key mechanism a session uses for key transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionCipher {
    /// Session key transported under an RSA-style encapsulation key.
    Kem,
    /// Both sides contribute Diffie-Hellman shares.
    Dh,
}

impl SessionCipher {
    pub(crate) fn byte(&self) -> u8 {
        match self {
            SessionCipher::Kem => 1,
            SessionCipher::Dh => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Result<Self, AbortReason> {
        match b {
            1 => Ok(SessionCipher::Kem),
            2 => Ok(SessionCipher::Dh),
            _ => Err(AbortReason::MalformedMessage),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SessionCipher::Kem => "kem",
            SessionCipher::Dh => "dh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "kem" => Some(SessionCipher::Kem),
            "dh" => Some(SessionCipher::Dh),
            _ => None,
        }
    }
}

/// Deployment-wide configuration.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub ibs_scheme: IbsScheme,
    pub ibs_bits: u64,
    pub gs_backend: GsBackend,
    pub cipher: SessionCipher,
    /// Members per role group generated by the owner.
    pub group_capacity: u32,
    /// Session-key lifetime in seconds.
    pub session_lifetime: u64,
    pub mtu: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            ibs_scheme: IbsScheme::Shamir,
            ibs_bits: 512,
            gs_backend: GsBackend::Reference,
            cipher: SessionCipher::Kem,
            group_capacity: 8,
            session_lifetime: 3600,
            mtu: crate::wire::DEFAULT_MTU,
        }
    }
}

/// Public role-key directory users consult for group public keys; the
/// car's copy is installed only through the upload procedure.
pub type SharedDirectory = Arc<RwLock<BTreeMap<String, GroupPublicKey>>>;

/// Key-generation authority and factory.
pub struct ManufacturerState {
    pub identity: String,
    master: IbsMasterKey,
    pub(crate) signing: IbsUserKey,
}

impl ManufacturerState {
    pub fn new(identity: &str, master: IbsMasterKey) -> Self {
        let signing = ibs::keyder(&master, identity.as_bytes());
        ManufacturerState {
            identity: identity.to_string(),
            master,
            signing,
        }
    }

    pub fn params(&self) -> &IbsParams {
        self.master.params()
    }

    /// Derive the signing key for a principal identity.
    pub fn issue(&self, identity: &str) -> IbsUserKey {
        ibs::keyder(&self.master, identity.as_bytes())
    }
}

pub struct SellerState {
    pub identity: String,
    pub(crate) signing: IbsUserKey,
    /// Assembled during the root-installation run.
    pub(crate) pending_authorization: Option<Vec<u8>>,
    pub(crate) pending_owner: Option<crate::wire::WireMessage>,
}

impl SellerState {
    pub fn new(identity: &str, signing: IbsUserKey) -> Self {
        SellerState {
            identity: identity.to_string(),
            signing,
            pending_authorization: None,
            pending_owner: None,
        }
    }
}

pub(crate) struct RoleGroup {
    pub(crate) gpk: GroupPublicKey,
    pub(crate) gmsk: groupsig::GroupManagerKey,
    pub(crate) members: Vec<GroupMemberKey>,
    pub(crate) next: usize,
}

/// Evidence kept by the owner after a completed delegation: the user's
/// signed step-3 receipt acknowledging the encrypted token.
#[derive(Debug, Clone)]
pub struct DelegationReceipt {
    pub user_pseudonym: String,
    pub role: String,
    pub kind: TokenKind,
    pub token_digest: Option<[u8; 32]>,
    /// Encoded receipt message including the user's signature.
    pub receipt: Vec<u8>,
}

/// The root role: holds the group manager keys, delegates rights,
/// uploads role public keys, and may revoke.
pub struct OwnerState {
    pub pseudonym: String,
    pub(crate) signing: IbsUserKey,
    pub cipher: SessionCipher,
    gs_backend: GsBackend,
    group_capacity: u32,
    role_groups: BTreeMap<String, RoleGroup>,
    pub directory: SharedDirectory,
    pub revocations: SharedRevocations,
    pub receipts: Vec<DelegationReceipt>,
    pub(crate) delegate_session: Option<delegate::OwnerDelegate>,
    pub(crate) upload_session: Option<upload::OwnerUpload>,
}

/// The distinguished root role name.
pub const OWNER_ROLE: &str = "Owner";

impl OwnerState {
    pub fn new(
        pseudonym: &str,
        signing: IbsUserKey,
        cipher: SessionCipher,
        gs_backend: GsBackend,
        group_capacity: u32,
        directory: SharedDirectory,
        revocations: SharedRevocations,
    ) -> Self {
        OwnerState {
            pseudonym: pseudonym.to_string(),
            signing,
            cipher,
            gs_backend,
            group_capacity,
            role_groups: BTreeMap::new(),
            directory,
            revocations,
            receipts: Vec::new(),
            delegate_session: None,
            upload_session: None,
        }
    }

    /// Generate the role's group lazily and publish its public key to
    /// the directory. Member 1 of the owner-role group is the owner's
    /// own signing key.
    pub(crate) fn ensure_role_group(
        &mut self,
        role: &str,
        rng: &mut ChaCha20Rng,
    ) -> &mut RoleGroup {
        if !self.role_groups.contains_key(role) {
            let (gpk, gmsk, members) =
                groupsig::gen(self.gs_backend, self.group_capacity, rng)
                    .expect("group capacity is nonzero");
            self.directory
                .write()
                .unwrap()
                .insert(role.to_string(), gpk.clone());
            let next = if role == OWNER_ROLE { 1 } else { 0 };
            self.role_groups.insert(
                role.to_string(),
                RoleGroup {
                    gpk,
                    gmsk,
                    members,
                    next,
                },
            );
        }
        self.role_groups.get_mut(role).expect("inserted above")
    }

    /// The owner's own membership in the owner-role group.
    pub(crate) fn owner_membership(
        &mut self,
        rng: &mut ChaCha20Rng,
    ) -> (GroupPublicKey, GroupMemberKey) {
        let group = self.ensure_role_group(OWNER_ROLE, rng);
        (group.gpk.clone(), group.members[0].clone())
    }

    /// Hand out the next unassigned member key for a role.
    pub(crate) fn take_member(
        &mut self,
        role: &str,
        rng: &mut ChaCha20Rng,
    ) -> Option<(GroupPublicKey, GroupMemberKey)> {
        let group = self.ensure_role_group(role, rng);
        let member = group.members.get(group.next)?.clone();
        group.next += 1;
        Some((group.gpk.clone(), member))
    }

    pub fn role_gpk(&mut self, role: &str, rng: &mut ChaCha20Rng) -> GroupPublicKey {
        self.ensure_role_group(role, rng).gpk.clone()
    }

    /// Trace a group signature made under one of the owner's role
    /// groups; this is the dispute-resolution path.
    pub fn trace_role_signature(
        &self,
        role: &str,
        msg: &[u8],
        sig: &groupsig::GroupSignature,
    ) -> Result<u32, GsError> {
        let group = self
            .role_groups
            .get(role)
            .ok_or(GsError::Malformed("unknown role group"))?;
        groupsig::trace(&group.gpk, &group.gmsk, msg, sig)
    }
}

/// Record of the installed root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnerRecord {
    pub pseudonym: String,
    pub contract_start: Timestamp,
    pub validity: Timestamp,
}

/// A role public key installed in the car via the upload procedure.
#[derive(Debug, Clone)]
pub struct RoleKeyRecord {
    pub gpk: GroupPublicKey,
    pub valid_from: Timestamp,
    pub validity: Timestamp,
}

/// One established session at the car.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub sid: [u8; 8],
    pub key: SymmetricKey,
    pub role: String,
    pub attributes: Vec<crate::policy::AttributeValue>,
    pub established_at: Timestamp,
    pub lifetime: u64,
}

impl SessionState {
    /// On-the-fly requests are accepted strictly before the lifetime
    /// elapses.
    pub fn is_valid_at(&self, now: Timestamp) -> bool {
        now.0 < self.established_at.0.saturating_add(self.lifetime)
    }
}

/// Car-side audit record: deliberately free of identities, nonces and
/// session identifiers so persistent users stay indistinguishable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub procedure: &'static str,
    pub role: String,
    pub object: String,
    pub action: Action,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbortRecord {
    pub procedure: Procedure,
    pub step: u8,
    pub reason: AbortReason,
}

pub(crate) struct ProvisionedCar {
    pub(crate) signing: IbsUserKey,
    pub(crate) params: IbsParams,
    pub(crate) policy: PermissionTable,
    pub(crate) manufacturer: String,
}

/// The on-board endpoint: verifies every request, consults policy and
/// the revocation list, executes actions, and keeps the session table.
pub struct CarState {
    pub config: WorldConfig,
    pub car_id: String,
    pub(crate) provisioned: Option<ProvisionedCar>,
    pub owner: Option<OwnerRecord>,
    pub seller: Option<String>,
    pub(crate) role_keys: BTreeMap<String, RoleKeyRecord>,
    pub sessions: BTreeMap<[u8; 8], SessionState>,
    pub revocations: SharedRevocations,
    pub executed: Vec<ActionRequest>,
    pub audit: Vec<AuditEntry>,
    pub aborts: Vec<AbortRecord>,
    pub(crate) exec_session: Option<execute::CarExecute>,
    pub(crate) otf_session: Option<otf::CarOtf>,
    pub(crate) upload_session: Option<upload::CarUpload>,
}

impl CarState {
    /// A blank car knowing only its own immutable identity.
    pub fn new(car_id: &str, config: WorldConfig, revocations: SharedRevocations) -> Self {
        CarState {
            config,
            car_id: car_id.to_string(),
            provisioned: None,
            owner: None,
            seller: None,
            role_keys: BTreeMap::new(),
            sessions: BTreeMap::new(),
            revocations,
            executed: Vec::new(),
            audit: Vec::new(),
            aborts: Vec::new(),
            exec_session: None,
            otf_session: None,
            upload_session: None,
        }
    }

    pub(crate) fn require_provisioned(&self) -> Result<&ProvisionedCar, AbortReason> {
        self.provisioned.as_ref().ok_or(AbortReason::NotSetUp)
    }

    pub fn is_provisioned(&self) -> bool {
        self.provisioned.is_some()
    }

    pub fn installed_roles(&self) -> impl Iterator<Item = &str> {
        self.role_keys.keys().map(String::as_str)
    }

    pub fn role_key(&self, role: &str) -> Option<&RoleKeyRecord> {
        self.role_keys.get(role)
    }

    pub(crate) fn record_abort(
        &mut self,
        procedure: Procedure,
        step: u8,
        reason: AbortReason,
    ) -> AbortReason {
        self.aborts.push(AbortRecord {
            procedure,
            step,
            reason: reason.clone(),
        });
        reason
    }

    pub(crate) fn fresh_sid(&self, rng: &mut ChaCha20Rng) -> [u8; 8] {
        use rand::RngCore;
        loop {
            let mut sid = [0u8; 8];
            rng.fill_bytes(&mut sid);
            if !self.sessions.contains_key(&sid) {
                return sid;
            }
        }
    }
}

/// Session handle kept by a user after a successful execute run.
#[derive(Debug, Clone)]
pub struct SessionHandle {
    pub sid: [u8; 8],
    pub key: SymmetricKey,
}

/// A delegated user: requests rights from the owner and actions from
/// the car.
pub struct UserState {
    pub pseudonym: String,
    pub(crate) signing: IbsUserKey,
    pub cipher: SessionCipher,
    pub car_id: String,
    pub directory: SharedDirectory,
    pub token: Option<DelegationToken>,
    pub session: Option<SessionHandle>,
    pub(crate) delegate_session: Option<delegate::UserDelegate>,
    pub(crate) exec_session: Option<execute::UserExecute>,
    pub(crate) otf_session: Option<otf::UserOtf>,
}

impl UserState {
    pub fn new(
        pseudonym: &str,
        signing: IbsUserKey,
        cipher: SessionCipher,
        car_id: &str,
        directory: SharedDirectory,
    ) -> Self {
        UserState {
            pseudonym: pseudonym.to_string(),
            signing,
            cipher,
            car_id: car_id.to_string(),
            directory,
            token: None,
            session: None,
            delegate_session: None,
            exec_session: None,
            otf_session: None,
        }
    }

    pub(crate) fn directory_gpk(&self, role: &str) -> Result<GroupPublicKey, AbortReason> {
        self.directory
            .read()
            .unwrap()
            .get(role)
            .cloned()
            .ok_or(AbortReason::UnknownRole)
    }
}

/// A full deployment: one manufacturer, seller, owner, car, and any
/// number of users, sharing a revocation list and a public directory.
pub struct Cast {
    pub config: WorldConfig,
    pub manufacturer: ManufacturerState,
    pub seller: SellerState,
    pub owner: OwnerState,
    pub car: CarState,
    pub users: BTreeMap<String, UserState>,
    pub revocations: SharedRevocations,
    pub directory: SharedDirectory,
}

impl Cast {
    /// Build a deployment with freshly issued identity keys. `car_vin`
    /// must be a syntactically valid VIN.
    pub fn new(config: WorldConfig, car_vin: &str, rng: &mut ChaCha20Rng) -> Self {
        let car_id = crate::policy::validate_vin(car_vin).expect("valid VIN");
        let master = ibs::setup(config.ibs_scheme, config.ibs_bits, None, rng)
            .expect("supported modulus size");
        let manufacturer = ManufacturerState::new("manufacturer", master);
        let seller = SellerState::new("seller-01", manufacturer.issue("seller-01"));
        let revocations = super::new_shared_revocations();
        let directory: SharedDirectory = Arc::new(RwLock::new(BTreeMap::new()));
        let owner = OwnerState::new(
            "PsO-root",
            manufacturer.issue("PsO-root"),
            config.cipher,
            config.gs_backend,
            config.group_capacity,
            directory.clone(),
            revocations.clone(),
        );
        let car = CarState::new(&car_id, config.clone(), revocations.clone());
        Cast {
            config,
            manufacturer,
            seller,
            owner,
            car,
            users: BTreeMap::new(),
            revocations,
            directory,
        }
    }

    /// Register a user under pseudonym `PsU-<name>` with a fresh key.
    pub fn add_user(&mut self, name: &str) -> String {
        let pseudonym = format!("PsU-{name}");
        let user = UserState::new(
            &pseudonym,
            self.manufacturer.issue(&pseudonym),
            self.config.cipher,
            &self.car.car_id,
            self.directory.clone(),
        );
        self.users.insert(name.to_string(), user);
        pseudonym
    }

    pub fn user(&self, name: &str) -> &UserState {
        &self.users[name]
    }

    pub fn user_mut(&mut self, name: &str) -> &mut UserState {
        self.users.get_mut(name).expect("unknown user")
    }
}
