//! Simulator for the three-pass polarization-rotation protocol.
//!
//! Alice rotates each photon by a private angle, Bob adds his own, Alice
//! removes hers and Bob removes his, leaving Alice's state at Bob. The
//! classical variant measures the result as a bit; the quantum variant keeps
//! the state; the authenticated variant adds a pre-shared secret rotation.
//!
//! This is a simulation: photons travel as amplitudes. Attackers only see
//! them through [`statekit::measure`] and [`statekit::rotate`], and the
//! [`adversary::EveRecord`] provenance audit checks that discipline.

pub mod adversary;
pub mod config;
pub mod netsim;
pub mod oracle;
pub mod phases;
pub mod protocol;
pub mod report;
pub mod statekit;
