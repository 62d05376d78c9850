//! Vehicle access control suite.
//!
//! Smartphone-grade car access built from four layers:
//!
//! * [`crypto`] — symmetric and conventional asymmetric building blocks
//!   (hash, MAC, authenticated encryption, an RSA-style KEM and classic
//!   Diffie-Hellman agreement), all driven by an injected seedable RNG.
//! * [`ibs`] / [`groupsig`] — identity-based signatures (Shamir and
//!   Guillou-Quisquater schemes) and group signatures with manager
//!   traceability (a pairing backend and a dependency-free reference
//!   backend).
//! * [`policy`] — a role/attribute access-control engine over vehicle
//!   functions grouped into engine/chassis/body/infotainment domains,
//!   with read/write/execute grants rendered in the familiar `rwe`
//!   triplet notation.
//! * [`wire`] / [`protocol`] / [`sim`] — a deterministic TLV wire codec
//!   with MTU chunking, finite-state-machine engines for the six
//!   car-access procedures (setup, set-root, role-key upload, rights
//!   delegation, execute, execute on-the-fly), and a discrete-tick actor
//!   simulator with an active network adversary used to exercise the
//!   protocol under replay, mutation, drop, splice and key-leak
//!   strategies.

pub mod crypto;
pub mod groupsig;
pub mod ibs;
pub mod keyfile;
pub mod policy;
pub mod protocol;
pub mod sim;
pub mod wire;

mod numth;
