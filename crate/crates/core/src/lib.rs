//! Content delivery over a space-air-ground network to aircraft in flight.
//!
//! The crate builds a time-slotted world of LEO satellites, aircraft and
//! ground stations ([`scenario`]), evaluates link budgets ([`linkmodel`]) and
//! fading ([`fading`]), and solves two per-slot delay minimization problems:
//! association of cached files over inter-satellite links ([`cached`]) and
//! relay association plus ground-station bandwidth split for non-cached files
//! ([`noncached`]). [`baselines`] holds the reference schemes and
//! [`harness`] drives experiments end to end.

pub mod baselines;
pub mod cached;
pub mod fading;
pub mod harness;
pub mod linkmodel;
pub mod noncached;
pub mod optcore;
pub mod quad;
pub mod scenario;
