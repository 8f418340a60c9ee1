//! Exact single-qubit polarization algebra.
//!
//! A polarization qubit is stored as two complex amplitudes over the
//! horizontal/vertical basis. Every protocol step is a real rotation about
//! the propagation axis, so all rotations commute and compose additively,
//! including on complex (elliptically polarized) states.
//!
//! Nothing in here holds randomness: [`measure`] takes the uniform variate
//! from the caller so that every run is replayable under its seeds.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accepted deviation of `|h|² + |v|²` from one when constructing a state.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Two states are the same physical state when their fidelity is at least
/// `1 - SAME_STATE_TOLERANCE`.
pub const SAME_STATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("invalid angle: {0} is not finite")]
    InvalidAngle(f64),
    #[error("amplitudes are not normalized: |h|^2 + |v|^2 = {0}")]
    NotNormalized(f64),
    #[error("uniform variate {0} is outside [0, 1)")]
    UniformOutOfRange(f64),
}

/// A finite rotation angle in radians. No range reduction is applied.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);
    pub const RIGHT: Angle = Angle(FRAC_PI_2);

    pub fn new(radians: f64) -> Result<Self, StateError> {
        if radians.is_finite() {
            Ok(Angle(radians))
        } else {
            Err(StateError::InvalidAngle(radians))
        }
    }

    pub fn radians(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Angle {
    type Error = StateError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Angle::new(value)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle(self.0 + rhs.0)
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle(self.0 - rhs.0)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle(-self.0)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} rad", self.0)
    }
}

/// A normalized pure polarization state `amp_h |H> + amp_v |V>`.
///
/// Deliberately not `PartialEq`: compare states with [`fidelity`] or
/// [`PureState::same_state`], since a global phase (including the sign flip
/// produced by a rotation by π) does not change the physical state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PureState {
    amp_h: Complex64,
    amp_v: Complex64,
}

impl PureState {
    pub const H: PureState = PureState {
        amp_h: Complex64::new(1.0, 0.0),
        amp_v: Complex64::new(0.0, 0.0),
    };
    pub const V: PureState = PureState {
        amp_h: Complex64::new(0.0, 0.0),
        amp_v: Complex64::new(1.0, 0.0),
    };

    pub fn new(amp_h: Complex64, amp_v: Complex64) -> Result<Self, StateError> {
        let norm = amp_h.norm_sqr() + amp_v.norm_sqr();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(PureState { amp_h, amp_v })
    }

    /// Scales arbitrary (non-zero, finite) amplitudes onto the unit sphere.
    pub fn normalized(amp_h: Complex64, amp_v: Complex64) -> Result<Self, StateError> {
        let norm = (amp_h.norm_sqr() + amp_v.norm_sqr()).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(StateError::NotNormalized(norm * norm));
        }
        Ok(PureState {
            amp_h: amp_h / norm,
            amp_v: amp_v / norm,
        })
    }

    /// `|H>` for `false`, `|V>` for `true`.
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            PureState::V
        } else {
            PureState::H
        }
    }

    pub fn amp_h(&self) -> Complex64 {
        self.amp_h
    }

    pub fn amp_v(&self) -> Complex64 {
        self.amp_v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp_h.norm_sqr() + self.amp_v.norm_sqr()
    }

    pub fn same_state(&self, other: &PureState) -> bool {
        fidelity(self, other) >= 1.0 - SAME_STATE_TOLERANCE
    }
}

/// `cos φ |H> + sin φ |V>`.
pub fn state_from_angle(phi: Angle) -> PureState {
    let (s, c) = phi.radians().sin_cos();
    PureState {
        amp_h: Complex64::new(c, 0.0),
        amp_v: Complex64::new(s, 0.0),
    }
}

/// Applies the real rotation `[[cos φ, -sin φ], [sin φ, cos φ]]`.
pub fn rotate(s: &PureState, phi: Angle) -> PureState {
    let (sin, cos) = phi.radians().sin_cos();
    PureState {
        amp_h: s.amp_h * cos - s.amp_v * sin,
        amp_v: s.amp_h * sin + s.amp_v * cos,
    }
}

/// `|<a|b>|²`, clamped into `[0, 1]`.
pub fn fidelity(a: &PureState, b: &PureState) -> f64 {
    let overlap = a.amp_h.conj() * b.amp_h + a.amp_v.conj() * b.amp_v;
    overlap.norm_sqr().clamp(0.0, 1.0)
}

/// Result of a projective measurement in a linear-polarization basis.
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    /// `false` for the basis state `|basis>`, `true` for `|basis + π/2>`.
    pub outcome: bool,
    pub collapsed: PureState,
    /// Born probability of outcome `false`.
    pub p0: f64,
}

/// Probability of finding `s` in `|basis>` rather than `|basis + π/2>`.
///
/// Normalized by the total of both branch weights so that rounding drift in
/// the amplitudes never leaks into the decision rule.
pub fn outcome_zero_probability(s: &PureState, basis: Angle) -> f64 {
    let (sin, cos) = basis.radians().sin_cos();
    let along = (s.amp_h * cos + s.amp_v * sin).norm_sqr();
    let across = (s.amp_v * cos - s.amp_h * sin).norm_sqr();
    (along / (along + across)).clamp(0.0, 1.0)
}

/// Measures `s` in the basis `{|basis>, |basis + π/2>}`.
///
/// Outcome `false` happens iff `u < p0`.
pub fn measure(s: &PureState, basis: Angle, u: f64) -> Result<Measurement, StateError> {
    if !(0.0..1.0).contains(&u) {
        return Err(StateError::UniformOutOfRange(u));
    }
    let p0 = outcome_zero_probability(s, basis);
    let outcome = u >= p0;
    let collapsed = if outcome {
        state_from_angle(basis + Angle::RIGHT)
    } else {
        state_from_angle(basis)
    };
    Ok(Measurement {
        outcome,
        collapsed,
        p0,
    })
}
