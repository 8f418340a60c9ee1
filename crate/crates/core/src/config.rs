//! Session configuration: the reproducible description of one experiment,
//! and its resolved form with the message and secret materialized.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryError, AttackSpec};
use crate::phases::{self, PhaseError, PhaseSet, SecretAngles, SeededStream, StreamId};
use crate::protocol::{Alice, Bob, Message, ProtocolError, SessionId, Variant};
use crate::statekit::{self, Angle, PureState};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("k must be at least 2 (got {0})")]
    LatticeTooSmall(u32),
    #[error("k must be at most 65535 (got {0})")]
    LatticeTooLarge(u32),
    #[error("n must be at least 1")]
    EmptyMessage,
    #[error("the auth variant requires a secret angles file")]
    MissingSecret,
    #[error("a secret is only valid with the auth variant")]
    UnexpectedSecret,
    #[error("qubit message sources require the quantum or auth variant")]
    QubitSourceForClassical,
    #[error("secret file was generated for k = {secret_k} but the session uses k = {k}")]
    SecretLattice { secret_k: u32, k: u32 },
    #[error("secret file has {got} angles but the session has n = {expected}")]
    SecretLength { expected: usize, got: usize },
    #[error("message source needs a file path")]
    MissingMessageFile,
    #[error("message file {path} holds {got} entries but n = {expected}")]
    MessageLength { path: PathBuf, expected: usize, got: usize },
    #[error("message file {path}: cannot parse {token:?}")]
    MessageParse { path: PathBuf, token: String },
    #[error("state set must not be empty")]
    EmptyStateSet,
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("secret angles: {0}")]
    Secret(#[from] PhaseError),
    #[error("attack: {0}")]
    Attack(#[from] AdversaryError),
}

/// Where Alice's message comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MessageSource {
    /// Uniform bits from the message stream. For the qubit variants each bit
    /// is sent as `|H>` or `|V>`.
    RandomBits,
    /// Text file of `0`/`1` characters; whitespace is ignored.
    BitFile { path: PathBuf },
    /// Real superpositions `|θ>` with θ uniform on `[0, π)`, or Haar-random
    /// complex states when `complex` is set.
    RandomQubits { complex: bool },
    /// Whitespace-separated angles in radians, one state `|θ>` each.
    QubitAngleFile { path: PathBuf },
    /// Each position picks uniformly from a fixed list of states.
    StateSet { states: Vec<PureState> },
}

/// State sets compare amplitude-for-amplitude, not up to global phase: two
/// configs are equal only if they serialize identically.
impl PartialEq for MessageSource {
    fn eq(&self, other: &Self) -> bool {
        use MessageSource::*;
        match (self, other) {
            (RandomBits, RandomBits) => true,
            (BitFile { path: a }, BitFile { path: b }) | (QubitAngleFile { path: a }, QubitAngleFile { path: b }) => a == b,
            (RandomQubits { complex: a }, RandomQubits { complex: b }) => a == b,
            (StateSet { states: a }, StateSet { states: b }) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .all(|(x, y)| x.amp_h() == y.amp_h() && x.amp_v() == y.amp_v())
            }
            _ => false,
        }
    }
}

impl MessageSource {
    fn is_qubit_source(&self) -> bool {
        !matches!(self, MessageSource::RandomBits | MessageSource::BitFile { .. })
    }
}

/// Where the pre-shared secret comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SecretSource {
    File { path: PathBuf },
    /// Derived from a seed on the dedicated secret stream.
    Seeded { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Seeds {
    pub alice: u64,
    pub bob: u64,
    pub message: u64,
}

impl Seeds {
    pub fn all(seed: u64) -> Self {
        Seeds {
            alice: seed,
            bob: seed,
            message: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub variant: Variant,
    pub k: u32,
    pub n: usize,
    pub message: MessageSource,
    pub seeds: Seeds,
    pub attack: AttackSpec,
    pub secret: Option<SecretSource>,
}

impl SessionConfig {
    /// Random bits, all seeds zero, no attack, no secret.
    pub fn new(variant: Variant, k: u32, n: usize) -> Self {
        SessionConfig {
            variant,
            k,
            n,
            message: MessageSource::RandomBits,
            seeds: Seeds::default(),
            attack: AttackSpec::none(),
            secret: None,
        }
    }

    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<PhaseSet, ConfigError> {
        if self.k < 2 {
            return Err(ConfigError::LatticeTooSmall(self.k));
        }
        let set = PhaseSet::new(self.k).map_err(|_| ConfigError::LatticeTooLarge(self.k))?;
        if self.n == 0 {
            return Err(ConfigError::EmptyMessage);
        }
        match (self.variant.needs_secret(), &self.secret) {
            (true, None) => return Err(ConfigError::MissingSecret),
            (false, Some(_)) => return Err(ConfigError::UnexpectedSecret),
            _ => {}
        }
        if self.variant == Variant::Classical && self.message.is_qubit_source() {
            return Err(ConfigError::QubitSourceForClassical);
        }
        if let MessageSource::StateSet { states } = &self.message {
            if states.is_empty() {
                return Err(ConfigError::EmptyStateSet);
            }
        }
        self.attack.validate(self.variant)?;
        Ok(set)
    }

    /// Validates, then loads or generates the message and secret.
    pub fn resolve(&self) -> Result<Session, ConfigError> {
        let set = self.validate()?;
        let message = self.build_message()?;
        let secret = match &self.secret {
            None => None,
            Some(SecretSource::File { path }) => Some(SecretAngles::load(path)?),
            Some(SecretSource::Seeded { seed }) => Some(phases::derive_secret(
                &set,
                &mut SeededStream::new(*seed, StreamId::Secret),
                self.n,
            )?),
        };
        if let Some(s) = &secret {
            if s.set() != set {
                return Err(ConfigError::SecretLattice {
                    secret_k: s.set().k(),
                    k: self.k,
                });
            }
            if s.len() != self.n {
                return Err(ConfigError::SecretLength {
                    expected: self.n,
                    got: s.len(),
                });
            }
        }
        Ok(Session {
            config: self.clone(),
            set,
            message,
            secret,
        })
    }

    fn build_message(&self) -> Result<Message, ConfigError> {
        let mut rng = SeededStream::new(self.seeds.message, StreamId::Message);
        let n = self.n;
        Ok(match &self.message {
            MessageSource::RandomBits => Message::Bits((0..n).map(|_| rng.bit()).collect()),
            MessageSource::BitFile { path } => {
                let text = read(path)?;
                let bits = text
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(ConfigError::MessageParse {
                            path: path.clone(),
                            token: other.to_string(),
                        }),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                check_len(path, n, bits.len())?;
                Message::Bits(bits)
            }
            MessageSource::RandomQubits { complex: false } => Message::Qubits(
                (0..n)
                    .map(|_| statekit::state_from_angle(Angle::new(rng.uniform() * PI).expect("finite")))
                    .collect(),
            ),
            MessageSource::RandomQubits { complex: true } => {
                Message::Qubits((0..n).map(|_| random_complex_state(&mut rng)).collect())
            }
            MessageSource::QubitAngleFile { path } => {
                let text = read(path)?;
                let states = text
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>()
                            .ok()
                            .and_then(|x| Angle::new(x).ok())
                            .map(statekit::state_from_angle)
                            .ok_or_else(|| ConfigError::MessageParse {
                                path: path.clone(),
                                token: tok.to_string(),
                            })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                check_len(path, n, states.len())?;
                Message::Qubits(states)
            }
            MessageSource::StateSet { states } => {
                let m = states.len() as u32;
                Message::Qubits((0..n).map(|_| states[rng.below(m) as usize]).collect())
            }
        })
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_len(path: &Path, expected: usize, got: usize) -> Result<(), ConfigError> {
    if expected == got {
        Ok(())
    } else {
        Err(ConfigError::MessageLength {
            path: path.to_path_buf(),
            expected,
            got,
        })
    }
}

/// Uniform on the Bloch sphere: four independent normals, normalized.
pub fn random_complex_state(rng: &mut SeededStream) -> PureState {
    loop {
        let h = Complex64::new(rng.standard_normal(), rng.standard_normal());
        let v = Complex64::new(rng.standard_normal(), rng.standard_normal());
        if let Ok(s) = PureState::normalized(h, v) {
            return s;
        }
    }
}

/// A validated configuration with its message and secret in memory.
#[derive(Debug, Clone)]
pub struct Session {
    config: SessionConfig,
    set: PhaseSet,
    message: Message,
    secret: Option<SecretAngles>,
}

impl Session {
    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn set(&self) -> PhaseSet {
        self.set
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn message(&self) -> &Message {
        &self.message
    }

    pub fn secret(&self) -> Option<&SecretAngles> {
        self.secret.as_ref()
    }

    pub fn session_id(&self) -> SessionId {
        SessionId::from_seed(self.config.seeds.alice)
    }

    pub fn alice(&self) -> Result<Alice, ProtocolError> {
        Alice::new(
            self.variant(),
            self.set,
            self.n(),
            &mut SeededStream::new(self.config.seeds.alice, StreamId::Alice),
            self.secret.clone(),
            self.session_id(),
        )
    }

    /// With `session_id = None`, Bob learns the id from the first photon.
    pub fn bob(&self, session_id: Option<SessionId>) -> Result<Bob, ProtocolError> {
        Bob::new(
            self.variant(),
            self.set,
            self.n(),
            SeededStream::new(self.config.seeds.bob, StreamId::Bob),
            self.secret.clone(),
            session_id,
        )
    }

    pub fn parties(&self) -> Result<(Alice, Bob), ProtocolError> {
        Ok((self.alice()?, self.bob(Some(self.session_id()))?))
    }
}
