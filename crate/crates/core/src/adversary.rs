//! Eavesdropper models that sit on the quantum channel.
//!
//! Simulation boundary: the wire carries raw amplitudes, but attacker code
//! only ever touches a photon through [`statekit::measure`] and
//! [`statekit::rotate`]. Every datum an attacker records is tagged with the
//! [`Provenance`] that produced it so tests can audit the boundary.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Session;
use crate::oracle;
use crate::phases::{PhaseSet, SecretAngles, SeededStream, StreamId};
use crate::protocol::{Channel, ChannelError, Direction, Pass, PhotonMessage, Variant};
use crate::statekit::{self, Angle, PureState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("intercept/resend needs at least one pass to intercept")]
    NoPasses,
    #[error("analysis mode (secret known) is only meaningful for a man in the middle against the auth variant")]
    SecretKnownMisuse,
    #[error("analysis mode needs the session's secret angles")]
    SecretUnavailable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    InterceptResend,
    Mitm,
}

/// How an intercepting Eve picks her measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisStrategy {
    Fixed(Angle),
    /// Uniform over the session's lattice `{kπ/K}`.
    UniformLattice,
    /// Uniform over `[0, π)`. Not supported by the exact oracle.
    UniformContinuous,
}

/// What a man in the middle does with the state she decodes from Alice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// Measure in H/V and keep the bit.
    Bit,
    /// Keep the photon as is.
    State,
}

impl Readout {
    /// Bit readout for the classical variant and for bit-encoded messages.
    pub fn default_for(variant: Variant, bit_encoded: bool) -> Readout {
        if variant == Variant::Classical || bit_encoded {
            Readout::Bit
        } else {
            Readout::State
        }
    }
}

/// What a man in the middle sends on to Bob.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// Whatever she decoded from Alice.
    #[default]
    Decoded,
    Constant(PureState),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Intercepted passes (intercept/resend only), ascending.
    pub passes: Vec<Pass>,
    pub basis: BasisStrategy,
    pub eve_seed: u64,
    /// MITM readout; `None` picks [`Readout::default_for`].
    #[serde(default)]
    pub readout: Option<Readout>,
    /// MITM analysis mode: Eve is handed the secret angles.
    #[serde(default)]
    pub secret_known: bool,
    #[serde(default)]
    pub payload: Payload,
}

impl PartialEq for AttackSpec {
    fn eq(&self, other: &Self) -> bool {
        serde_json::to_value(self).ok() == serde_json::to_value(other).ok()
    }
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            kind: AttackKind::None,
            passes: Vec::new(),
            basis: BasisStrategy::Fixed(Angle::ZERO),
            eve_seed: 0,
            readout: None,
            secret_known: false,
            payload: Payload::Decoded,
        }
    }

    pub fn intercept(passes: &[Pass], basis: BasisStrategy, eve_seed: u64) -> Self {
        let mut passes = passes.to_vec();
        passes.sort();
        passes.dedup();
        AttackSpec {
            kind: AttackKind::InterceptResend,
            passes,
            basis,
            eve_seed,
            ..AttackSpec::none()
        }
    }

    pub fn mitm(eve_seed: u64) -> Self {
        AttackSpec {
            kind: AttackKind::Mitm,
            eve_seed,
            ..AttackSpec::none()
        }
    }

    pub fn with_secret_known(mut self) -> Self {
        self.secret_known = true;
        self
    }

    pub fn validate(&self, variant: Variant) -> Result<(), AdversaryError> {
        if self.kind == AttackKind::InterceptResend && self.passes.is_empty() {
            return Err(AdversaryError::NoPasses);
        }
        if self.secret_known && (self.kind != AttackKind::Mitm || variant != Variant::Authenticated) {
            return Err(AdversaryError::SecretKnownMisuse);
        }
        Ok(())
    }
}

/// Where a recorded value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Drawn from Eve's own random stream.
    EveStream,
    /// Fixed by the attack configuration.
    Configured,
    /// Outcome of a `statekit::measure` call.
    Measurement,
    /// State produced by `statekit::rotate` calls on an intercepted photon.
    Rotation,
    /// Computed from earlier recorded data by the documented guess rule.
    GuessRule,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Traced<T> {
    pub value: T,
    pub source: Provenance,
}

fn traced<T>(value: T, source: Provenance) -> Traced<T> {
    Traced { value, source }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EveGuess {
    Bit(bool),
    State(PureState),
}

impl EveGuess {
    pub fn bit(&self) -> Option<bool> {
        match self {
            EveGuess::Bit(b) => Some(*b),
            EveGuess::State(_) => None,
        }
    }

    /// The state Eve believes Alice sent (`|H>`/`|V>` for bit guesses).
    pub fn state(&self) -> PureState {
        match self {
            EveGuess::Bit(b) => PureState::from_bit(*b),
            EveGuess::State(s) => *s,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Intercept {
    pub pass: Pass,
    pub basis: Traced<Angle>,
    pub outcome: Traced<bool>,
}

/// Everything Eve did at one position.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvePosition {
    pub position: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intercepts: Vec<Intercept>,
    /// MITM: her Bob-role angle, then her Alice-role angle.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rotations: Vec<Traced<Angle>>,
    /// MITM: the photon she holds after completing the exchange with Alice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoded: Option<Traced<PureState>>,
    pub guess: Option<Traced<EveGuess>>,
}

impl EvePosition {
    fn new(position: u32) -> Self {
        EvePosition {
            position,
            intercepts: Vec::new(),
            rotations: Vec::new(),
            decoded: None,
            guess: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EveRecord {
    pub kind: AttackKind,
    pub secret_known: bool,
    pub measurements: u64,
    pub positions: Vec<EvePosition>,
}

impl EveRecord {
    pub fn new(kind: AttackKind, secret_known: bool) -> Self {
        EveRecord {
            kind,
            secret_known,
            measurements: 0,
            positions: Vec::new(),
        }
    }

    /// Every random choice Eve made, in order: bases and her own rotation
    /// angles. Independent of anything she observed.
    pub fn choice_stream(&self) -> Vec<f64> {
        self.positions
            .iter()
            .flat_map(|p| {
                p.intercepts
                    .iter()
                    .map(|i| i.basis.value.radians())
                    .chain(p.rotations.iter().map(|r| r.value.radians()))
            })
            .collect()
    }

    /// Recorded data whose provenance is not the one its slot allows.
    pub fn provenance_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for p in &self.positions {
            let i = p.position;
            for x in &p.intercepts {
                if !matches!(x.basis.source, Provenance::EveStream | Provenance::Configured) {
                    bad.push(format!("position {i}: basis from {:?}", x.basis.source));
                }
                if x.outcome.source != Provenance::Measurement {
                    bad.push(format!("position {i}: outcome from {:?}", x.outcome.source));
                }
            }
            for r in &p.rotations {
                if r.source != Provenance::EveStream {
                    bad.push(format!("position {i}: rotation from {:?}", r.source));
                }
            }
            if let Some(d) = &p.decoded {
                if d.source != Provenance::Rotation {
                    bad.push(format!("position {i}: decoded state from {:?}", d.source));
                }
            }
            match &p.guess {
                Some(g) => {
                    let ok = match g.value {
                        EveGuess::Bit(_) => matches!(g.source, Provenance::Measurement | Provenance::GuessRule),
                        EveGuess::State(_) => g.source == Provenance::Rotation,
                    };
                    if !ok {
                        bad.push(format!("position {i}: guess from {:?}", g.source));
                    }
                }
                None if self.kind != AttackKind::None => bad.push(format!("position {i}: no guess")),
                None => {}
            }
        }
        bad
    }
}

/// Forwards every photon untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityChannel;

pub fn identity_channel() -> IdentityChannel {
    IdentityChannel
}

impl Channel for IdentityChannel {
    fn deliver(&mut self, photon: PhotonMessage, _: Direction) -> Result<PhotonMessage, ChannelError> {
        Ok(photon)
    }
}

fn check_direction(photon: &PhotonMessage, direction: Direction) -> Result<(), ChannelError> {
    if photon.pass.direction() == direction {
        Ok(())
    } else {
        Err(ChannelError::Rejected(format!(
            "pass {} cannot travel {direction:?}",
            photon.pass.number()
        )))
    }
}

/// Key for memoized likelihoods: (pass, basis bits, outcome) per intercept.
type ObservationKey = Vec<(u8, u64, bool)>;

/// Eve's bit estimate from her logged intercepts.
///
/// One intercept: her outcome bit. Several: maximum likelihood over the
/// lattice (see [`oracle::bit_likelihoods`]), falling back to the first
/// outcome on ties.
#[derive(Debug, Clone)]
pub struct GuessRule {
    variant: Variant,
    set: PhaseSet,
    cache: HashMap<ObservationKey, bool>,
}

impl GuessRule {
    pub fn new(variant: Variant, set: PhaseSet) -> Self {
        GuessRule {
            variant,
            set,
            cache: HashMap::new(),
        }
    }

    pub fn guess(&mut self, intercepts: &[Intercept]) -> Traced<EveGuess> {
        assert!(!intercepts.is_empty(), "guess needs at least one intercept");
        let first = intercepts[0].outcome.value;
        if intercepts.len() == 1 {
            return traced(EveGuess::Bit(first), Provenance::Measurement);
        }
        let key: ObservationKey = intercepts
            .iter()
            .map(|i| (i.pass.number(), i.basis.value.radians().to_bits(), i.outcome.value))
            .collect();
        let (variant, set) = (self.variant, self.set);
        let bit = *self.cache.entry(key).or_insert_with(|| {
            let obs: Vec<_> = intercepts
                .iter()
                .map(|i| (i.pass, i.basis.value, i.outcome.value))
                .collect();
            let [l0, l1] = oracle::bit_likelihoods(variant, &set, &obs);
            let tie = (l0 - l1).abs() <= 1e-12 * l0.max(l1);
            if tie {
                first
            } else {
                l1 > l0
            }
        });
        traced(EveGuess::Bit(bit), Provenance::GuessRule)
    }
}

/// Measures selected passes and resends the collapsed eigenstate.
#[derive(Debug, Clone)]
pub struct InterceptResend {
    passes: Vec<Pass>,
    basis: BasisStrategy,
    set: PhaseSet,
    rng: SeededStream,
    rule: GuessRule,
    record: EveRecord,
}

pub fn intercept_resend(spec: &AttackSpec, variant: Variant, set: PhaseSet) -> Result<InterceptResend, AdversaryError> {
    let mut passes = spec.passes.clone();
    passes.sort();
    passes.dedup();
    if passes.is_empty() {
        return Err(AdversaryError::NoPasses);
    }
    Ok(InterceptResend {
        passes,
        basis: spec.basis,
        set,
        rng: SeededStream::new(spec.eve_seed, StreamId::Eve),
        rule: GuessRule::new(variant, set),
        record: EveRecord::new(AttackKind::InterceptResend, false),
    })
}

impl InterceptResend {
    fn choose_basis(&mut self) -> Traced<Angle> {
        match self.basis {
            BasisStrategy::Fixed(a) => traced(a, Provenance::Configured),
            BasisStrategy::UniformLattice => {
                let k = self.rng.below(self.set.k());
                let a = self.set.angle(self.set.index(k).expect("in range"));
                traced(a, Provenance::EveStream)
            }
            BasisStrategy::UniformContinuous => {
                let a = Angle::new(self.rng.uniform() * PI).expect("finite");
                traced(a, Provenance::EveStream)
            }
        }
    }
}

impl Channel for InterceptResend {
    fn deliver(&mut self, mut photon: PhotonMessage, direction: Direction) -> Result<PhotonMessage, ChannelError> {
        check_direction(&photon, direction)?;
        if !self.passes.contains(&photon.pass) {
            return Ok(photon);
        }
        if self.record.positions.last().map(|p| p.position) != Some(photon.position) {
            self.record.positions.push(EvePosition::new(photon.position));
        }
        let basis = self.choose_basis();
        let u = self.rng.uniform();
        let m = statekit::measure(&photon.state, basis.value, u)?;
        self.record.measurements += 1;
        photon.state = m.collapsed;

        let entry = self.record.positions.last_mut().expect("pushed above");
        entry.intercepts.push(Intercept {
            pass: photon.pass,
            basis,
            outcome: traced(m.outcome, Provenance::Measurement),
        });
        if Some(&photon.pass) == self.passes.last() {
            entry.guess = Some(self.rule.guess(&entry.intercepts));
        }
        Ok(photon)
    }

    fn record(&self) -> Option<&EveRecord> {
        Some(&self.record)
    }
}

/// Terminates the quantum channel in both directions: an honest Bob toward
/// Alice, then an honest Alice toward Bob (store and forward per position).
#[derive(Debug, Clone)]
pub struct Mitm {
    variant: Variant,
    set: PhaseSet,
    rng: SeededStream,
    secret: Option<SecretAngles>,
    readout: Readout,
    payload: Payload,
    bob_role: Option<Angle>,
    alice_role: Option<Angle>,
    record: EveRecord,
}

/// `secret` is `Some` only in analysis mode.
pub fn mitm(
    variant: Variant,
    set: PhaseSet,
    eve_seed: u64,
    secret: Option<SecretAngles>,
    readout: Readout,
    payload: Payload,
) -> Mitm {
    let readout = if variant == Variant::Classical {
        Readout::Bit
    } else {
        readout
    };
    Mitm {
        variant,
        set,
        rng: SeededStream::new(eve_seed, StreamId::Eve),
        record: EveRecord::new(AttackKind::Mitm, secret.is_some()),
        secret,
        readout,
        payload,
        bob_role: None,
        alice_role: None,
    }
}

impl Mitm {
    fn draw_angle(&mut self) -> Angle {
        let k = self.rng.below(self.set.k());
        self.set.angle(self.set.index(k).expect("in range"))
    }

    fn known_secret(&self, position: u32) -> Angle {
        match (&self.secret, self.variant) {
            (Some(s), Variant::Authenticated) => s.angle(position as usize - 1),
            _ => Angle::ZERO,
        }
    }

    fn rejected(photon: &PhotonMessage) -> ChannelError {
        ChannelError::Rejected(format!(
            "unexpected pass {} at position {}",
            photon.pass.number(),
            photon.position
        ))
    }
}

impl Channel for Mitm {
    fn deliver(&mut self, photon: PhotonMessage, direction: Direction) -> Result<PhotonMessage, ChannelError> {
        check_direction(&photon, direction)?;
        let i = photon.position;
        match photon.pass {
            // Alice's first pass: answer her as Bob would.
            Pass::First if self.bob_role.is_none() && self.alice_role.is_none() => {
                let phi = self.draw_angle();
                self.bob_role = Some(phi);
                let mut entry = EvePosition::new(i);
                entry.rotations.push(traced(phi, Provenance::EveStream));
                self.record.positions.push(entry);
                Ok(PhotonMessage {
                    pass: Pass::Second,
                    state: statekit::rotate(&photon.state, phi),
                    ..photon
                })
            }
            // Alice's third pass: finish as Bob, then open the exchange with
            // the real Bob as Alice.
            Pass::Third if self.bob_role.is_some() => {
                let phi = self.bob_role.take().expect("checked");
                let decoded = statekit::rotate(&photon.state, -(phi + self.known_secret(i)));
                let (guess, held) = match self.readout {
                    Readout::Bit => {
                        let u = self.rng.uniform();
                        let m = statekit::measure(&decoded, Angle::ZERO, u)?;
                        self.record.measurements += 1;
                        (traced(EveGuess::Bit(m.outcome), Provenance::Measurement), m.collapsed)
                    }
                    Readout::State => (traced(EveGuess::State(decoded), Provenance::Rotation), decoded),
                };
                let outgoing = match self.payload {
                    Payload::Decoded => held,
                    Payload::Constant(s) => s,
                };
                let psi = self.draw_angle();
                self.alice_role = Some(psi);
                let entry = self.record.positions.last_mut().expect("opened on pass 1");
                entry.decoded = Some(traced(decoded, Provenance::Rotation));
                entry.guess = Some(guess);
                entry.rotations.push(traced(psi, Provenance::EveStream));
                Ok(PhotonMessage {
                    pass: Pass::First,
                    state: statekit::rotate(&outgoing, psi + self.known_secret(i)),
                    ..photon
                })
            }
            // Bob's reply: remove her Alice-role rotation and hand it back.
            Pass::Second if self.alice_role.is_some() => {
                let psi = self.alice_role.take().expect("checked");
                Ok(PhotonMessage {
                    pass: Pass::Third,
                    state: statekit::rotate(&photon.state, -psi),
                    ..photon
                })
            }
            _ => Err(Mitm::rejected(&photon)),
        }
    }

    fn record(&self) -> Option<&EveRecord> {
        Some(&self.record)
    }
}

/// Builds the channel described by `spec` for a session with the given
/// public parameters. `secret` is consulted only in analysis mode.
pub fn channel_for(
    spec: &AttackSpec,
    variant: Variant,
    set: PhaseSet,
    bit_encoded: bool,
    secret: Option<&SecretAngles>,
) -> Result<Box<dyn Channel + Send>, AdversaryError> {
    spec.validate(variant)?;
    Ok(match spec.kind {
        AttackKind::None => Box::new(IdentityChannel),
        AttackKind::InterceptResend => Box::new(intercept_resend(spec, variant, set)?),
        AttackKind::Mitm => {
            let secret = if spec.secret_known {
                Some(secret.cloned().ok_or(AdversaryError::SecretUnavailable)?)
            } else {
                None
            };
            let readout = spec
                .readout
                .unwrap_or_else(|| Readout::default_for(variant, bit_encoded));
            Box::new(mitm(variant, set, spec.eve_seed, secret, readout, spec.payload))
        }
    })
}

/// The channel for a session's own attack configuration.
pub fn session_channel(session: &Session) -> Result<Box<dyn Channel + Send>, AdversaryError> {
    channel_for(
        &session.config().attack,
        session.variant(),
        session.set(),
        session.message().is_bit_encoded(),
        session.secret(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{SecretSource, Seeds, SessionConfig};
    use crate::protocol::{execute_session, Decoded, SessionId};
    use crate::statekit::fidelity;

    fn photon(position: u32, pass: Pass, state: PureState) -> PhotonMessage {
        PhotonMessage {
            session_id: SessionId::default(),
            position,
            pass,
            state,
        }
    }

    #[test]
    fn identity_returns_input() {
        let s = statekit::state_from_angle(Angle::new(0.3).unwrap());
        let out = identity_channel()
            .deliver(photon(4, Pass::Second, s), Direction::BobToAlice)
            .unwrap();
        assert_eq!(out.position, 4);
        assert_eq!(out.pass, Pass::Second);
        assert_eq!(out.state.amp_h(), s.amp_h());
        assert_eq!(out.state.amp_v(), s.amp_v());
    }

    #[test]
    fn intercept_needs_passes() {
        let spec = AttackSpec {
            passes: vec![],
            ..AttackSpec::intercept(&[Pass::First], BasisStrategy::UniformLattice, 1)
        };
        assert_eq!(spec.validate(Variant::Classical), Err(AdversaryError::NoPasses));
        assert!(intercept_resend(&spec, Variant::Classical, PhaseSet::new(4).unwrap()).is_err());
    }

    #[test]
    fn secret_known_only_for_mitm_on_auth() {
        let spec = AttackSpec::mitm(1).with_secret_known();
        assert!(spec.validate(Variant::Authenticated).is_ok());
        assert_eq!(spec.validate(Variant::Quantum), Err(AdversaryError::SecretKnownMisuse));
        let spec = AttackSpec {
            secret_known: true,
            ..AttackSpec::intercept(&[Pass::First], BasisStrategy::UniformLattice, 1)
        };
        assert_eq!(spec.validate(Variant::Authenticated), Err(AdversaryError::SecretKnownMisuse));
    }

    #[test]
    fn intercept_forwards_collapsed_eigenstate_and_skips_other_passes() {
        let set = PhaseSet::new(8).unwrap();
        let spec = AttackSpec::intercept(&[Pass::First], BasisStrategy::Fixed(Angle::ZERO), 3);
        let mut ch = intercept_resend(&spec, Variant::Classical, set).unwrap();
        let s = statekit::state_from_angle(Angle::new(0.7).unwrap());
        let out = ch.deliver(photon(1, Pass::First, s), Direction::AliceToBob).unwrap();
        assert!(out.state.same_state(&PureState::H) || out.state.same_state(&PureState::V));
        let untouched = ch.deliver(photon(1, Pass::Second, s), Direction::BobToAlice).unwrap();
        assert_eq!(untouched.state.amp_h(), s.amp_h());
        let rec = ch.record().unwrap();
        assert_eq!(rec.measurements, 1);
        assert_eq!(rec.positions.len(), 1);
        let pos = &rec.positions[0];
        let bit = pos.guess.unwrap().value.bit().unwrap();
        assert_eq!(bit, pos.intercepts[0].outcome.value);
        assert!(out.state.same_state(&PureState::from_bit(bit)));
    }

    #[test]
    fn direction_must_match_pass() {
        let mut ch = mitm(
            Variant::Quantum,
            PhaseSet::new(4).unwrap(),
            1,
            None,
            Readout::State,
            Payload::Decoded,
        );
        let r = ch.deliver(photon(1, Pass::First, PureState::H), Direction::BobToAlice);
        assert!(matches!(r, Err(ChannelError::Rejected(_))));
    }

    #[test]
    fn mitm_rejects_out_of_sequence_photons() {
        let mut ch = mitm(
            Variant::Quantum,
            PhaseSet::new(4).unwrap(),
            1,
            None,
            Readout::State,
            Payload::Decoded,
        );
        let r = ch.deliver(photon(1, Pass::Third, PureState::H), Direction::AliceToBob);
        assert!(matches!(r, Err(ChannelError::Rejected(_))));
        ch.deliver(photon(1, Pass::First, PureState::H), Direction::AliceToBob)
            .unwrap();
        let r = ch.deliver(photon(1, Pass::First, PureState::H), Direction::AliceToBob);
        assert!(matches!(r, Err(ChannelError::Rejected(_))));
    }

    fn mitm_session(variant: Variant, n: usize, secret_seed: u64) -> SessionConfig {
        let mut c = SessionConfig::new(variant, 8, n);
        c.seeds = Seeds::all(5);
        c.attack = AttackSpec::mitm(17);
        if variant == Variant::Authenticated {
            c.secret = Some(SecretSource::Seeded { seed: secret_seed });
        }
        c
    }

    #[test]
    fn mitm_recovers_quantum_states_exactly() {
        let mut c = mitm_session(Variant::Quantum, 100, 0);
        c.message = crate::config::MessageSource::RandomQubits { complex: true };
        let session = c.resolve().unwrap();
        let mut ch = session_channel(&session).unwrap();
        let out = execute_session(&session, &mut ch).unwrap();
        let rec = out.eve.unwrap();
        for (i, p) in rec.positions.iter().enumerate() {
            let guess = p.guess.unwrap().value;
            assert!(matches!(guess, EveGuess::State(_)));
            assert!((fidelity(&guess.state(), &session.message().state(i)) - 1.0).abs() < 1e-9);
        }
        // Bob still gets Alice's state because Eve forwards what she decoded.
        for (i, d) in out.outputs.iter().enumerate() {
            let Decoded::State(s) = d else { panic!() };
            assert!((fidelity(s, &session.message().state(i)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mitm_against_auth_is_blind_to_the_secret() {
        // Two sessions that differ only in the secret: Eve's random choices
        // are identical.
        let run = |secret_seed| {
            let session = mitm_session(Variant::Authenticated, 200, secret_seed).resolve().unwrap();
            let mut ch = session_channel(&session).unwrap();
            execute_session(&session, &mut ch).unwrap().eve.unwrap()
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.choice_stream(), b.choice_stream());
        assert_eq!(a.measurements, b.measurements);
        assert!(a.provenance_violations().is_empty());
    }

    #[test]
    fn intercept_choices_do_not_depend_on_the_secret() {
        let run = |secret_seed| {
            let mut c = mitm_session(Variant::Authenticated, 200, secret_seed);
            c.attack = AttackSpec::intercept(&[Pass::First, Pass::Third], BasisStrategy::UniformLattice, 4);
            let session = c.resolve().unwrap();
            let mut ch = session_channel(&session).unwrap();
            execute_session(&session, &mut ch).unwrap().eve.unwrap()
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.choice_stream(), b.choice_stream());
        assert!(a.provenance_violations().is_empty());
    }

    #[test]
    fn provenance_audit_flags_foreign_data() {
        let mut rec = EveRecord::new(AttackKind::Mitm, false);
        let mut p = EvePosition::new(1);
        p.rotations.push(traced(Angle::ZERO, Provenance::Measurement));
        p.guess = Some(traced(EveGuess::State(PureState::H), Provenance::EveStream));
        rec.positions.push(p);
        assert_eq!(rec.provenance_violations().len(), 2);
    }

    #[test]
    fn multi_pass_guess_breaks_ties_with_first_outcome() {
        let set = PhaseSet::new(4).unwrap();
        let mut rule = GuessRule::new(Variant::Classical, set);
        let obs = |pass, outcome| Intercept {
            pass,
            basis: traced(Angle::ZERO, Provenance::EveStream),
            outcome: traced(outcome, Provenance::Measurement),
        };
        // After collapsing on pass 1, later outcomes carry no information
        // about the bit, so the likelihoods tie.
        let g = rule.guess(&[obs(Pass::First, true), obs(Pass::Second, false)]);
        assert_eq!(g.value.bit(), Some(true));
        assert_eq!(g.source, Provenance::GuessRule);
    }
}
