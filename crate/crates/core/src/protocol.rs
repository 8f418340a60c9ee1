//! Alice and Bob for the three-pass rotation protocol and the in-process
//! session loop that drives them through a [`Channel`].
//!
//! Each position `i` travels A→B (pass 1), B→A (pass 2), A→B (pass 3).
//! Every leg adds or removes a lattice rotation; since rotations about the
//! propagation axis commute, Bob ends up with exactly Alice's input:
//!
//! | variant        | pass 1 on the wire        | pass 2            | pass 3          | Bob removes     |
//! |----------------|---------------------------|-------------------|-----------------|-----------------|
//! | classical      | `R(φA)|a>`                | `R(φA+φB)|a>`     | `R(φB)|a>`      | `φB`, measures  |
//! | quantum        | `R(φA)|ψ>`                | `R(φA+φB)|ψ>`     | `R(φB)|ψ>`      | `φB`            |
//! | authenticated  | `R(φC+φA)|ψ>`             | `R(φC+φA+φB)|ψ>`  | `R(φC+φB)|ψ>`   | `φB + φC`       |

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::EveRecord;
use crate::config::Session;
use crate::phases::{self, PhaseError, PhaseIndex, PhaseSet, SecretAngles, SeededStream, StreamId};
use crate::report::RunReport;
use crate::statekit::{self, Angle, PureState, StateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Classical bits, decoded by a final H/V measurement.
    Classical,
    /// Arbitrary qubits.
    Quantum,
    /// Arbitrary qubits blinded by pre-shared secret angles.
    Authenticated,
}

impl Variant {
    pub fn wire_code(self) -> u8 {
        match self {
            Variant::Classical => 1,
            Variant::Quantum => 2,
            Variant::Authenticated => 3,
        }
    }

    pub fn from_wire_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Variant::Classical),
            2 => Some(Variant::Quantum),
            3 => Some(Variant::Authenticated),
            _ => None,
        }
    }

    pub fn needs_secret(self) -> bool {
        self == Variant::Authenticated
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Classical => "classical",
            Variant::Quantum => "quantum",
            Variant::Authenticated => "auth",
        })
    }
}

/// What Alice sends.
///
/// `Bits` is valid for every variant. For the qubit variants each bit is
/// carried as `|H>` (0) or `|V>` (1), which lets attack statistics be
/// reported as bit-guess accuracy.
#[derive(Debug, Clone)]
pub enum Message {
    Bits(Vec<bool>),
    Qubits(Vec<PureState>),
}

impl Message {
    pub fn len(&self) -> usize {
        match self {
            Message::Bits(b) => b.len(),
            Message::Qubits(q) => q.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input state at 0-based index `i`.
    pub fn state(&self, i: usize) -> PureState {
        match self {
            Message::Bits(b) => PureState::from_bit(b[i]),
            Message::Qubits(q) => q[i],
        }
    }

    /// The classical bit at `i`, if the message is bit-encoded.
    pub fn bit(&self, i: usize) -> Option<bool> {
        match self {
            Message::Bits(b) => Some(b[i]),
            Message::Qubits(_) => None,
        }
    }

    pub fn is_bit_encoded(&self) -> bool {
        matches!(self, Message::Bits(_))
    }
}

/// Which leg of the three-pass exchange a photon is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Pass {
    First = 1,
    Second = 2,
    Third = 3,
}

impl Pass {
    pub const ALL: [Pass; 3] = [Pass::First, Pass::Second, Pass::Third];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Pass> {
        match n {
            1 => Some(Pass::First),
            2 => Some(Pass::Second),
            3 => Some(Pass::Third),
            _ => None,
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            Pass::First | Pass::Third => Direction::AliceToBob,
            Pass::Second => Direction::BobToAlice,
        }
    }
}

impl TryFrom<u8> for Pass {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Pass::from_number(n).ok_or_else(|| format!("pass number {n} is not in 1..=3"))
    }
}

impl From<Pass> for u8 {
    fn from(p: Pass) -> u8 {
        p.number()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AliceToBob,
    BobToAlice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SessionId(pub [u8; 16]);

impl SessionId {
    /// Derived from Alice's seed on a dedicated stream.
    pub fn from_seed(seed: u64) -> Self {
        let mut id = [0u8; 16];
        SeededStream::new(seed, StreamId::Session).fill_bytes(&mut id);
        SessionId(id)
    }
}

/// One photon in transit.
#[derive(Debug, Clone, Copy)]
pub struct PhotonMessage {
    pub session_id: SessionId,
    /// 1-based.
    pub position: u32,
    pub pass: Pass,
    pub state: PureState,
}

/// What Bob ends up with at one position.
#[derive(Debug, Clone, Copy)]
pub enum Decoded {
    Bit(bool),
    State(PureState),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("channel disconnected: {0}")]
    Disconnected(String),
    #[error("channel rejected photon: {0}")]
    Rejected(String),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Anything that carries photons between the two honest parties.
///
/// The returned photon is routed by its pass number: passes 1 and 3 go to
/// Bob, pass 2 goes to Alice. A transparent channel returns its input; a
/// man in the middle may answer the sender instead of forwarding.
pub trait Channel {
    fn deliver(&mut self, photon: PhotonMessage, direction: Direction) -> Result<PhotonMessage, ChannelError>;

    /// What an adversary sitting on this channel recorded, if any.
    fn record(&self) -> Option<&EveRecord> {
        None
    }
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn deliver(&mut self, photon: PhotonMessage, direction: Direction) -> Result<PhotonMessage, ChannelError> {
        (**self).deliver(photon, direction)
    }

    fn record(&self) -> Option<&EveRecord> {
        (**self).record()
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("out-of-order photon: expected position {expected_position} pass {expected_pass}, got position {position} pass {pass}")]
    Order {
        expected_position: u32,
        expected_pass: u8,
        position: u32,
        pass: u8,
    },
    #[error("photon belongs to a different session")]
    SessionMismatch,
    #[error("all {0} positions have already been processed")]
    Exhausted(u32),
    #[error("the authenticated variant needs pre-shared secret angles")]
    MissingSecret,
    #[error("secret angles only apply to the authenticated variant")]
    UnexpectedSecret,
    #[error("secret has {got} angles but the message has {expected} positions")]
    SecretLength { expected: usize, got: usize },
    #[error("secret was drawn for K = {secret_k} but the session uses K = {k}")]
    SecretLattice { secret_k: u32, k: u32 },
    #[error("the classical variant needs a bit message")]
    MessageKind,
    #[error("message length {got} does not match the session's n = {expected}")]
    MessageLength { expected: usize, got: usize },
    #[error("session aborted at position {position}: {source}")]
    SessionAbort { position: u32, source: ChannelError },
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Cursor {
    position: u32,
    pass: Pass,
}

impl Cursor {
    fn start() -> Self {
        Cursor {
            position: 1,
            pass: Pass::First,
        }
    }

    fn expect(&self, n: u32, photon: &PhotonMessage, pass: Pass) -> Result<(), ProtocolError> {
        if self.position > n {
            return Err(ProtocolError::Exhausted(n));
        }
        if self.pass != pass || photon.position != self.position || photon.pass != pass {
            return Err(ProtocolError::Order {
                expected_position: self.position,
                expected_pass: self.pass.number(),
                position: photon.position,
                pass: photon.pass.number(),
            });
        }
        Ok(())
    }
}

fn check_secret(
    variant: Variant,
    set: &PhaseSet,
    n: usize,
    secret: Option<&SecretAngles>,
) -> Result<(), ProtocolError> {
    match (variant.needs_secret(), secret) {
        (true, None) => Err(ProtocolError::MissingSecret),
        (false, Some(_)) => Err(ProtocolError::UnexpectedSecret),
        (true, Some(s)) if s.set() != *set => Err(ProtocolError::SecretLattice {
            secret_k: s.set().k(),
            k: set.k(),
        }),
        (true, Some(s)) if s.len() != n => Err(ProtocolError::SecretLength {
            expected: n,
            got: s.len(),
        }),
        _ => Ok(()),
    }
}

/// Alice's side: prepares each photon with `+φA` (and `+φC`), later
/// removes `φA`.
#[derive(Debug, Clone)]
pub struct Alice {
    variant: Variant,
    set: PhaseSet,
    local: Vec<PhaseIndex>,
    secret: Option<SecretAngles>,
    session_id: SessionId,
    cursor: Cursor,
}

impl Alice {
    /// Draws fresh local angles for `n` positions from `rng`.
    pub fn new(
        variant: Variant,
        set: PhaseSet,
        n: usize,
        rng: &mut SeededStream,
        secret: Option<SecretAngles>,
        session_id: SessionId,
    ) -> Result<Self, ProtocolError> {
        let local = phases::sample(&set, rng, n)?;
        Self::with_indices(variant, set, local, secret, session_id)
    }

    /// Uses caller-chosen local angles (exhaustive analyses).
    pub fn with_indices(
        variant: Variant,
        set: PhaseSet,
        local: Vec<PhaseIndex>,
        secret: Option<SecretAngles>,
        session_id: SessionId,
    ) -> Result<Self, ProtocolError> {
        if local.is_empty() {
            return Err(PhaseError::EmptyMessage.into());
        }
        for k in &local {
            set.index(k.value())?;
        }
        check_secret(variant, &set, local.len(), secret.as_ref())?;
        Ok(Alice {
            variant,
            set,
            local,
            secret,
            session_id,
            cursor: Cursor::start(),
        })
    }

    pub fn local_indices(&self) -> &[PhaseIndex] {
        &self.local
    }

    pub fn session_id(&self) -> SessionId {
        self.session_id
    }

    fn n(&self) -> u32 {
        self.local.len() as u32
    }

    fn local_angle(&self, position: u32) -> Angle {
        self.set.angle(self.local[position as usize - 1])
    }

    fn secret_angle(&self, position: u32) -> Angle {
        self.secret
            .as_ref()
            .map_or(Angle::ZERO, |s| s.angle(position as usize - 1))
    }

    /// Pass 1: the input state rotated by `φA` (plus `φC` when authenticated).
    pub fn prepare(&mut self, msg: &Message, position: u32) -> Result<PhotonMessage, ProtocolError> {
        if self.variant == Variant::Classical && !msg.is_bit_encoded() {
            return Err(ProtocolError::MessageKind);
        }
        if msg.len() != self.local.len() {
            return Err(ProtocolError::MessageLength {
                expected: self.local.len(),
                got: msg.len(),
            });
        }
        let probe = PhotonMessage {
            session_id: self.session_id,
            position,
            pass: Pass::First,
            state: PureState::H,
        };
        self.cursor.expect(self.n(), &probe, Pass::First)?;

        let input = msg.state(position as usize - 1);
        let rotation = self.secret_angle(position) + self.local_angle(position);
        self.cursor.pass = Pass::Second;
        Ok(PhotonMessage {
            state: statekit::rotate(&input, rotation),
            ..probe
        })
    }

    /// Pass 2 → pass 3: removes `φA`.
    pub fn pass2(&mut self, photon: PhotonMessage) -> Result<PhotonMessage, ProtocolError> {
        if photon.session_id != self.session_id {
            return Err(ProtocolError::SessionMismatch);
        }
        self.cursor.expect(self.n(), &photon, Pass::Second)?;
        let state = statekit::rotate(&photon.state, -self.local_angle(photon.position));
        self.cursor = Cursor {
            position: self.cursor.position + 1,
            pass: Pass::First,
        };
        Ok(PhotonMessage {
            pass: Pass::Third,
            state,
            ..photon
        })
    }
}

/// Bob's side: adds `φB` on pass 1, removes `φB` (and `φC`) on pass 3.
#[derive(Debug, Clone)]
pub struct Bob {
    variant: Variant,
    set: PhaseSet,
    local: Vec<PhaseIndex>,
    secret: Option<SecretAngles>,
    session_id: Option<SessionId>,
    cursor: Cursor,
    rng: SeededStream,
}

impl Bob {
    /// Draws `n` local angles from `rng`, then keeps `rng` for the
    /// classical variant's final measurement. With `session_id = None` Bob
    /// adopts the id of the first photon he sees.
    pub fn new(
        variant: Variant,
        set: PhaseSet,
        n: usize,
        mut rng: SeededStream,
        secret: Option<SecretAngles>,
        session_id: Option<SessionId>,
    ) -> Result<Self, ProtocolError> {
        let local = phases::sample(&set, &mut rng, n)?;
        Self::with_indices(variant, set, local, rng, secret, session_id)
    }

    pub fn with_indices(
        variant: Variant,
        set: PhaseSet,
        local: Vec<PhaseIndex>,
        rng: SeededStream,
        secret: Option<SecretAngles>,
        session_id: Option<SessionId>,
    ) -> Result<Self, ProtocolError> {
        if local.is_empty() {
            return Err(PhaseError::EmptyMessage.into());
        }
        for k in &local {
            set.index(k.value())?;
        }
        check_secret(variant, &set, local.len(), secret.as_ref())?;
        Ok(Bob {
            variant,
            set,
            local,
            secret,
            session_id,
            cursor: Cursor::start(),
            rng,
        })
    }

    pub fn local_indices(&self) -> &[PhaseIndex] {
        &self.local
    }

    fn n(&self) -> u32 {
        self.local.len() as u32
    }

    fn check_session(&mut self, photon: &PhotonMessage) -> Result<(), ProtocolError> {
        match self.session_id {
            Some(id) if id != photon.session_id => Err(ProtocolError::SessionMismatch),
            Some(_) => Ok(()),
            None => {
                self.session_id = Some(photon.session_id);
                Ok(())
            }
        }
    }

    fn local_angle(&self, position: u32) -> Angle {
        self.set.angle(self.local[position as usize - 1])
    }

    /// Pass 1 → pass 2: adds `φB`.
    pub fn pass1(&mut self, photon: PhotonMessage) -> Result<PhotonMessage, ProtocolError> {
        self.cursor.expect(self.n(), &photon, Pass::First)?;
        self.check_session(&photon)?;
        let state = statekit::rotate(&photon.state, self.local_angle(photon.position));
        self.cursor.pass = Pass::Third;
        Ok(PhotonMessage {
            pass: Pass::Second,
            state,
            ..photon
        })
    }

    /// Pass 3: removes `φB` (and `φC`), then measures in H/V for the
    /// classical variant.
    pub fn finish(&mut self, photon: PhotonMessage) -> Result<Decoded, ProtocolError> {
        self.cursor.expect(self.n(), &photon, Pass::Third)?;
        self.check_session(&photon)?;
        let i = photon.position;
        let secret = self
            .secret
            .as_ref()
            .map_or(Angle::ZERO, |s| s.angle(i as usize - 1));
        let state = statekit::rotate(&photon.state, -(self.local_angle(i) + secret));
        self.cursor = Cursor {
            position: i + 1,
            pass: Pass::First,
        };
        match self.variant {
            Variant::Classical => {
                let u = self.rng.uniform();
                let m = statekit::measure(&state, Angle::ZERO, u)?;
                Ok(Decoded::Bit(m.outcome))
            }
            Variant::Quantum | Variant::Authenticated => Ok(Decoded::State(state)),
        }
    }
}

/// Drives every position through the channel, routing each returned photon
/// by its pass number, and collects Bob's outputs.
pub fn run_exchange(
    alice: &mut Alice,
    bob: &mut Bob,
    msg: &Message,
    channel: &mut dyn Channel,
) -> Result<Vec<Decoded>, ProtocolError> {
    let n = alice.n();
    let mut outputs = Vec::with_capacity(n as usize);
    for position in 1..=n {
        let abort = |source| ProtocolError::SessionAbort { position, source };
        let mut photon = alice.prepare(msg, position)?;
        loop {
            let direction = photon.pass.direction();
            let arrived = channel.deliver(photon, direction).map_err(abort)?;
            match arrived.pass {
                Pass::First => photon = bob.pass1(arrived)?,
                Pass::Second => photon = alice.pass2(arrived)?,
                Pass::Third => {
                    outputs.push(bob.finish(arrived)?);
                    break;
                }
            }
        }
    }
    Ok(outputs)
}

/// Everything a session produced, for callers that need more than the
/// summary report.
#[derive(Debug)]
pub struct SessionOutcome {
    pub report: RunReport,
    pub outputs: Vec<Decoded>,
    pub eve: Option<EveRecord>,
}

/// Builds both honest parties from the session's seeds and runs them
/// end to end.
pub fn execute_session(session: &Session, channel: &mut dyn Channel) -> Result<SessionOutcome, ProtocolError> {
    let started = Instant::now();
    let (mut alice, mut bob) = session.parties()?;
    let outputs = run_exchange(&mut alice, &mut bob, session.message(), channel)?;
    let eve = channel.record().cloned();
    let mut report = RunReport::build(session, Some(&outputs), eve.as_ref());
    report.set_wall_clock(started.elapsed());
    Ok(SessionOutcome {
        report,
        outputs,
        eve,
    })
}

pub fn run_session(session: &Session, channel: &mut dyn Channel) -> Result<RunReport, ProtocolError> {
    execute_session(session, channel).map(|o| o.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::IdentityChannel;
    use crate::statekit::{fidelity, state_from_angle};
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn set(k: u32) -> PhaseSet {
        PhaseSet::new(k).unwrap()
    }

    fn idx(s: PhaseSet, k: u32) -> PhaseIndex {
        s.index(k).unwrap()
    }

    fn secret(s: PhaseSet, ks: &[u32]) -> SecretAngles {
        SecretAngles::new(s, ks.iter().map(|&k| idx(s, k)).collect()).unwrap()
    }

    fn alice(variant: Variant, s: PhaseSet, local: &[u32], sec: Option<SecretAngles>) -> Alice {
        let local = local.iter().map(|&k| idx(s, k)).collect();
        Alice::with_indices(variant, s, local, sec, SessionId::default()).unwrap()
    }

    fn bob(variant: Variant, s: PhaseSet, local: &[u32], sec: Option<SecretAngles>) -> Bob {
        let local = local.iter().map(|&k| idx(s, k)).collect();
        let rng = SeededStream::new(0, StreamId::Bob);
        Bob::with_indices(variant, s, local, rng, sec, Some(SessionId::default())).unwrap()
    }

    fn angle(x: f64) -> Angle {
        Angle::new(x).unwrap()
    }

    fn random_complex_state(rng: &mut SeededStream) -> PureState {
        PureState::normalized(
            Complex64::new(rng.standard_normal(), rng.standard_normal()),
            Complex64::new(rng.standard_normal(), rng.standard_normal()),
        )
        .unwrap()
    }

    #[test]
    fn prepare_classical_zero_without_rotation_is_h() {
        let mut a = alice(Variant::Classical, set(4), &[0], None);
        let p = a.prepare(&Message::Bits(vec![false]), 1).unwrap();
        assert_eq!(p.pass, Pass::First);
        assert!(p.state.same_state(&PureState::H));
    }

    #[test]
    fn prepare_classical_one_rotated_quarter_turn() {
        let mut a = alice(Variant::Classical, set(4), &[1], None);
        let p = a.prepare(&Message::Bits(vec![true]), 1).unwrap();
        assert!(p.state.same_state(&state_from_angle(angle(3.0 * FRAC_PI_4))));
    }

    #[test]
    fn prepare_authenticated_adds_secret_and_local() {
        let s = set(3);
        let mut a = alice(Variant::Authenticated, s, &[1], Some(secret(s, &[1])));
        let p = a.prepare(&Message::Qubits(vec![PureState::H]), 1).unwrap();
        assert!(p.state.same_state(&state_from_angle(angle(2.0 * FRAC_PI_3))));
    }

    #[test]
    fn authenticated_without_secret_is_rejected() {
        let s = set(4);
        let r = Alice::with_indices(Variant::Authenticated, s, vec![idx(s, 0)], None, SessionId::default());
        assert!(matches!(r, Err(ProtocolError::MissingSecret)));
        let r = Alice::with_indices(
            Variant::Authenticated,
            s,
            vec![idx(s, 0), idx(s, 1)],
            Some(secret(s, &[0])),
            SessionId::default(),
        );
        assert!(matches!(r, Err(ProtocolError::SecretLength { expected: 2, got: 1 })));
    }

    #[test]
    fn classical_needs_bits() {
        let mut a = alice(Variant::Classical, set(4), &[0], None);
        let r = a.prepare(&Message::Qubits(vec![PureState::H]), 1);
        assert!(matches!(r, Err(ProtocolError::MessageKind)));
    }

    #[test]
    fn bob_pass1_examples() {
        let s = set(4);
        let photon = |state| PhotonMessage {
            session_id: SessionId::default(),
            position: 1,
            pass: Pass::First,
            state,
        };
        let mut b = bob(Variant::Quantum, s, &[0], None);
        let out = b.pass1(photon(PureState::V)).unwrap();
        assert_eq!(out.pass, Pass::Second);
        assert!(out.state.same_state(&PureState::V));

        let mut b = bob(Variant::Quantum, s, &[1], None);
        let out = b.pass1(photon(state_from_angle(angle(FRAC_PI_4)))).unwrap();
        assert!(out.state.same_state(&state_from_angle(angle(FRAC_PI_2))));

        // The lattice stops short of π, so compose two K = 2 quarter turns.
        let z = PureState::normalized(Complex64::new(0.2, 0.7), Complex64::new(-0.4, 0.1)).unwrap();
        let mut b = bob(Variant::Quantum, set(2), &[1], None);
        let once = b.pass1(photon(z)).unwrap();
        let twice = statekit::rotate(&once.state, angle(FRAC_PI_2));
        assert!((fidelity(&twice, &z) - 1.0).abs() < 1e-12);
        assert!((twice.amp_h() + z.amp_h()).norm() < 1e-12);
        assert!((twice.amp_v() + z.amp_v()).norm() < 1e-12);
    }

    #[test]
    fn alice_pass2_leaves_only_bobs_rotation() {
        let s = set(3);
        let phi = PI / 5.0;
        let input = state_from_angle(angle(phi));
        let msg = Message::Qubits(vec![input]);
        let mut a = alice(Variant::Quantum, s, &[1], None);
        let mut b = bob(Variant::Quantum, s, &[2], None);
        let p1 = a.prepare(&msg, 1).unwrap();
        let p2 = b.pass1(p1).unwrap();
        let p3 = a.pass2(p2).unwrap();
        assert_eq!(p3.pass, Pass::Third);
        let expected = state_from_angle(angle(phi + 2.0 * PI / 3.0));
        assert!((fidelity(&p3.state, &expected) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alice_pass2_identity_when_local_angle_is_zero() {
        let s = set(4);
        let mut a = alice(Variant::Quantum, s, &[0], None);
        let _ = a.prepare(&Message::Qubits(vec![PureState::V]), 1).unwrap();
        let z = state_from_angle(angle(0.77));
        let p3 = a
            .pass2(PhotonMessage {
                session_id: SessionId::default(),
                position: 1,
                pass: Pass::Second,
                state: z,
            })
            .unwrap();
        assert!(p3.state.same_state(&z));
    }

    #[test]
    fn out_of_order_photons_are_rejected() {
        let s = set(4);
        let mut a = alice(Variant::Quantum, s, &[0, 1], None);
        let mut b = bob(Variant::Quantum, s, &[2, 3], None);
        let msg = Message::Qubits(vec![PureState::H, PureState::V]);
        let p1 = a.prepare(&msg, 1).unwrap();
        // Bob cannot finish before pass 1.
        let mut early = p1;
        early.pass = Pass::Third;
        assert!(matches!(b.finish(early), Err(ProtocolError::Order { .. })));
        // Alice cannot prepare position 2 while position 1 is open.
        assert!(matches!(a.prepare(&msg, 2), Err(ProtocolError::Order { .. })));
        // Wrong position.
        let mut wrong = p1;
        wrong.position = 2;
        assert!(matches!(b.pass1(wrong), Err(ProtocolError::Order { .. })));
        let p2 = b.pass1(p1).unwrap();
        assert!(matches!(b.pass1(p1), Err(ProtocolError::Order { .. })));
        let p3 = a.pass2(p2).unwrap();
        assert!(matches!(a.pass2(p2), Err(ProtocolError::Order { .. })));
        b.finish(p3).unwrap();
        assert!(matches!(b.finish(p3), Err(ProtocolError::Order { .. })));
    }

    #[test]
    fn foreign_session_is_rejected() {
        let s = set(4);
        let mut a = alice(Variant::Quantum, s, &[0], None);
        let mut b = bob(Variant::Quantum, s, &[0], None);
        let mut p1 = a.prepare(&Message::Qubits(vec![PureState::H]), 1).unwrap();
        p1.session_id = SessionId([9; 16]);
        assert!(matches!(b.pass1(p1), Err(ProtocolError::SessionMismatch)));
    }

    fn exchange_one(variant: Variant, s: PhaseSet, a_k: u32, b_k: u32, c_k: Option<u32>, msg: &Message) -> Decoded {
        let sec = c_k.map(|c| secret(s, &[c]));
        let mut a = alice(variant, s, &[a_k], sec.clone());
        let mut b = bob(variant, s, &[b_k], sec);
        let mut ch = IdentityChannel;
        run_exchange(&mut a, &mut b, msg, &mut ch).unwrap().remove(0)
    }

    #[test]
    fn classical_round_trip_is_exact_over_k3() {
        let s = set(3);
        for bit in [false, true] {
            for a_k in 0..3 {
                for b_k in 0..3 {
                    match exchange_one(Variant::Classical, s, a_k, b_k, None, &Message::Bits(vec![bit])) {
                        Decoded::Bit(got) => assert_eq!(got, bit),
                        other => panic!("{other:?}"),
                    }
                }
            }
        }
    }

    #[test]
    fn quantum_round_trip_random_complex_inputs() {
        let mut rng = SeededStream::new(21, StreamId::Message);
        let s = set(8);
        for _ in 0..100 {
            let input = random_complex_state(&mut rng);
            let (a_k, b_k) = (rng.below(8), rng.below(8));
            match exchange_one(Variant::Quantum, s, a_k, b_k, None, &Message::Qubits(vec![input])) {
                Decoded::State(out) => assert!((fidelity(&out, &input) - 1.0).abs() < 1e-9),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn authenticated_round_trip_exhaustive_k4() {
        let s = set(4);
        let input = PureState::normalized(Complex64::new(0.3, 0.5), Complex64::new(-0.6, 0.2)).unwrap();
        for a_k in 0..4 {
            for b_k in 0..4 {
                for c_k in 0..4 {
                    match exchange_one(Variant::Authenticated, s, a_k, b_k, Some(c_k), &Message::Qubits(vec![input])) {
                        Decoded::State(out) => assert!((fidelity(&out, &input) - 1.0).abs() < 1e-9),
                        other => panic!("{other:?}"),
                    }
                }
            }
        }
    }

    /// Records every state placed on the wire.
    struct Tap(Vec<PhotonMessage>);

    impl Channel for Tap {
        fn deliver(&mut self, photon: PhotonMessage, _: Direction) -> Result<PhotonMessage, ChannelError> {
            self.0.push(photon);
            Ok(photon)
        }
    }

    #[test]
    fn wire_rotations_are_secret_plus_a_then_b_then_minus_a() {
        let s = set(5);
        let input = state_from_angle(angle(0.123));
        let (a_k, b_k, c_k) = (2, 4, 3);
        let sec = Some(secret(s, &[c_k]));
        let mut a = alice(Variant::Authenticated, s, &[a_k], sec.clone());
        let mut b = bob(Variant::Authenticated, s, &[b_k], sec);
        let mut tap = Tap(Vec::new());
        run_exchange(&mut a, &mut b, &Message::Qubits(vec![input]), &mut tap).unwrap();
        let lat = |k: u32| f64::from(k) * PI / 5.0;
        let expected = [
            0.123 + lat(c_k) + lat(a_k),
            0.123 + lat(c_k) + lat(a_k) + lat(b_k),
            0.123 + lat(c_k) + lat(b_k),
        ];
        assert_eq!(tap.0.len(), 3);
        for (photon, (want, pass)) in tap.0.iter().zip(expected.iter().zip(Pass::ALL)) {
            assert_eq!(photon.pass, pass);
            assert!((fidelity(&photon.state, &state_from_angle(angle(*want))) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn every_split_of_the_secret_rotation_is_equivalent() {
        // Alice may apply φC before or after φA; Bob may remove φC before or
        // after φB. Commutation makes all four orders agree.
        let (c, a, b) = (angle(0.4), angle(1.3), angle(2.2));
        let input = PureState::normalized(Complex64::new(0.1, 0.2), Complex64::new(0.3, -0.9)).unwrap();
        let r = statekit::rotate;
        let wire3 = |first: Angle, second: Angle| r(&r(&r(&r(&input, first), second), b), -a);
        let finals = [
            r(&r(&wire3(c, a), -b), -c),
            r(&r(&wire3(a, c), -b), -c),
            r(&r(&wire3(c, a), -c), -b),
            r(&r(&wire3(a, c), -c), -b),
        ];
        for f in &finals {
            assert!((fidelity(f, &input) - 1.0).abs() < 1e-12);
        }
    }
}
