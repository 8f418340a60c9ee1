//! Exact analysis by exhaustive enumeration.
//!
//! Every lattice assignment of the honest parties' angles (and the secret,
//! for the authenticated variant) is enumerated with equal weight. At each
//! intercepted pass the enumeration branches on both measurement outcomes,
//! weighting each branch by its Born probability. Eve's own MITM rotations
//! cancel identically (`R(-φE)·R(φE)`), so they are fixed at zero here and
//! only the Monte Carlo path draws them.
//!
//! Sums use Neumaier compensation; results are exact to ~1e-12, not in
//! rational arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{
    self, AdversaryError, AttackKind, AttackSpec, BasisStrategy, EveGuess, GuessRule, Intercept, Payload, Provenance,
    Readout, Traced,
};
use crate::config::{ConfigError, MessageSource, SecretSource, Seeds, SessionConfig};
use crate::phases::PhaseSet;
use crate::protocol::{self, Pass, ProtocolError, Variant};
use crate::report::RunReport;
use crate::statekit::{self, fidelity, Angle, PureState};

/// Largest lattice the oracle accepts.
pub const MAX_K: u32 = 64;

/// Term-count guard: `MAX_K³` lattice combinations times eight outcome
/// branches.
pub const MAX_TERMS: u64 = (MAX_K as u64).pow(3) * 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("uniform_continuous bases cannot be enumerated; use Monte Carlo")]
    UnsupportedBasis,
    #[error("K = {0} exceeds the oracle limit of {MAX_K}")]
    LatticeTooLarge(u32),
    #[error("{terms} terms exceed the oracle guard of {MAX_TERMS}")]
    TooManyTerms { terms: u64 },
    #[error("the classical variant only accepts bit inputs")]
    StatesForClassical,
    #[error("input state set is empty")]
    EmptyInputs,
    #[error("K = {0} is not a valid lattice")]
    Lattice(u32),
    #[error(transparent)]
    Attack(#[from] AdversaryError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Alice's inputs, uniformly weighted.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSet {
    /// Uniform bits, carried as `|H>`/`|V>`.
    Bits,
    States(Vec<PureState>),
}

impl InputSet {
    fn entries(&self) -> Vec<(PureState, Option<bool>)> {
        match self {
            InputSet::Bits => vec![(PureState::H, Some(false)), (PureState::V, Some(true))],
            InputSet::States(v) => v.iter().map(|s| (*s, None)).collect(),
        }
    }

    pub fn is_bits(&self) -> bool {
        matches!(self, InputSet::Bits)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExactResult {
    pub schema: u32,
    pub variant: Variant,
    pub k: u32,
    pub attack: AttackSpec,
    pub inputs: InputSet,
    /// Probability Eve's bit guess is right (bit inputs under attack).
    pub eve_accuracy: Option<f64>,
    /// Expected fidelity of Eve's guessed state with Alice's input.
    pub eve_mean_fidelity: Option<f64>,
    /// Classical: probability Bob decodes the wrong bit. Qubit variants:
    /// `1 - mean_output_fidelity`.
    pub bob_error_rate: f64,
    pub mean_output_fidelity: f64,
    pub term_count: u64,
    /// Largest `|Σ branch probabilities - 1|` over enumerated combinations.
    pub max_branch_mass_error: f64,
}

/// Angles applied between passes: `before[p]` ahead of wire pass `p + 1`,
/// `after` by Bob at the end.
struct Legs {
    before: [Angle; 3],
    after: Angle,
}

impl Legs {
    fn honest(a: Angle, b: Angle, c: Angle) -> Self {
        Legs {
            before: [c + a, b, -a],
            after: -(b + c),
        }
    }
}

fn lattice_combos(variant: Variant, set: &PhaseSet) -> Vec<(Angle, Angle, Angle)> {
    let secrets: Vec<Angle> = if variant.needs_secret() {
        set.angles().collect()
    } else {
        vec![Angle::ZERO]
    };
    let mut out = Vec::new();
    for a in set.angles() {
        for b in set.angles() {
            for &c in &secrets {
                out.push((a, b, c));
            }
        }
    }
    out
}

fn free_angles(variant: Variant) -> u32 {
    if variant.needs_secret() {
        3
    } else {
        2
    }
}

fn collapsed(basis: Angle, outcome: bool) -> PureState {
    if outcome {
        statekit::state_from_angle(basis + Angle::RIGHT)
    } else {
        statekit::state_from_angle(basis)
    }
}

type Observation = (Pass, Angle, bool);

/// Walks the three wire passes, branching at every pass that has a basis.
fn walk(
    state: PureState,
    pass_idx: usize,
    prob: f64,
    legs: &Legs,
    bases: &[Option<Angle>; 3],
    obs: &mut Vec<Observation>,
    visit: &mut dyn FnMut(f64, &PureState, &[Observation]),
) {
    if pass_idx == 3 {
        visit(prob, &statekit::rotate(&state, legs.after), obs);
        return;
    }
    let on_wire = statekit::rotate(&state, legs.before[pass_idx]);
    match bases[pass_idx] {
        None => walk(on_wire, pass_idx + 1, prob, legs, bases, obs, visit),
        Some(basis) => {
            let p0 = statekit::outcome_zero_probability(&on_wire, basis);
            for (outcome, p) in [(false, p0), (true, 1.0 - p0)] {
                obs.push((Pass::ALL[pass_idx], basis, outcome));
                walk(collapsed(basis, outcome), pass_idx + 1, prob * p, legs, bases, obs, visit);
                obs.pop();
            }
        }
    }
}

/// Probability of exactly `obs` given the input and honest angles.
fn path_probability(input: &PureState, legs: &Legs, obs: &[Observation]) -> f64 {
    let mut state = *input;
    let mut prob = 1.0;
    for (idx, pass) in Pass::ALL.iter().enumerate() {
        state = statekit::rotate(&state, legs.before[idx]);
        if let Some(&(_, basis, outcome)) = obs.iter().find(|o| o.0 == *pass) {
            let p0 = statekit::outcome_zero_probability(&state, basis);
            prob *= if outcome { 1.0 - p0 } else { p0 };
            state = collapsed(basis, outcome);
        }
    }
    prob
}

/// `[P(obs | bit 0), P(obs | bit 1)]` for bit-encoded inputs, averaging
/// over every lattice assignment of the angles Eve does not know.
pub fn bit_likelihoods(variant: Variant, set: &PhaseSet, obs: &[(Pass, Angle, bool)]) -> [f64; 2] {
    let combos = lattice_combos(variant, set);
    let weight = 1.0 / combos.len() as f64;
    [false, true].map(|bit| {
        let input = PureState::from_bit(bit);
        let mut acc = CompensatedSum::default();
        for &(a, b, c) in &combos {
            acc.add(weight * path_probability(&input, &Legs::honest(a, b, c), obs));
        }
        acc.value()
    })
}

#[derive(Default)]
struct Accumulators {
    bob_fidelity: CompensatedSum,
    eve_correct: CompensatedSum,
    eve_fidelity: CompensatedSum,
    max_mass_error: f64,
}

impl Accumulators {
    fn leaf(&mut self, w: f64, out: &PureState, input: &PureState, reference: Option<bool>, guess: Option<EveGuess>) {
        self.bob_fidelity.add(w * fidelity(out, input));
        if let Some(g) = guess {
            self.eve_fidelity.add(w * fidelity(&g.state(), input));
            if let (Some(r), Some(gb)) = (reference, g.bit()) {
                if r == gb {
                    self.eve_correct.add(w);
                }
            }
        }
    }

    fn mass(&mut self, total: f64) {
        self.max_mass_error = self.max_mass_error.max((total - 1.0).abs());
    }
}

fn check_inputs(variant: Variant, k: u32, inputs: &InputSet) -> Result<PhaseSet, OracleError> {
    if k > MAX_K {
        return Err(OracleError::LatticeTooLarge(k));
    }
    let set = PhaseSet::new(k).map_err(|_| OracleError::Lattice(k))?;
    match inputs {
        InputSet::States(v) if v.is_empty() => Err(OracleError::EmptyInputs),
        InputSet::States(_) if variant == Variant::Classical => Err(OracleError::StatesForClassical),
        _ => Ok(set),
    }
}

fn guard(terms: u64) -> Result<u64, OracleError> {
    if terms > MAX_TERMS {
        Err(OracleError::TooManyTerms { terms })
    } else {
        Ok(terms)
    }
}

/// Honest three-pass exchange over every lattice assignment, bit inputs.
pub fn enumerate_honest(variant: Variant, k: u32) -> Result<ExactResult, OracleError> {
    enumerate_attack(variant, k, &AttackSpec::none(), &InputSet::Bits)
}

pub fn enumerate_attack(
    variant: Variant,
    k: u32,
    spec: &AttackSpec,
    inputs: &InputSet,
) -> Result<ExactResult, OracleError> {
    let set = check_inputs(variant, k, inputs)?;
    spec.validate(variant)?;
    let combos = lattice_combos(variant, &set);
    let entries = inputs.entries();
    let input_weight = 1.0 / entries.len() as f64;
    let combo_weight = 1.0 / combos.len() as f64;
    let lattice_terms = u64::from(k).pow(free_angles(variant));

    let mut acc = Accumulators::default();
    let attacked = spec.kind != AttackKind::None;

    let term_count = match spec.kind {
        AttackKind::None | AttackKind::InterceptResend => {
            let passes = if spec.kind == AttackKind::None {
                Vec::new()
            } else {
                spec.passes.clone()
            };
            let basis_choices: Vec<Angle> = match spec.basis {
                BasisStrategy::Fixed(a) => vec![a],
                BasisStrategy::UniformLattice => set.angles().collect(),
                BasisStrategy::UniformContinuous if spec.kind == AttackKind::None => vec![Angle::ZERO],
                BasisStrategy::UniformContinuous => return Err(OracleError::UnsupportedBasis),
            };
            let per_pass = basis_choices.len() as u64;
            let p = passes.len() as u32;
            let terms = guard(lattice_terms * per_pass.pow(p) * 2u64.pow(p))?;

            // Every assignment of a basis to each intercepted pass.
            let mut assignments: Vec<[Option<Angle>; 3]> = vec![[None; 3]];
            for pass in &passes {
                let idx = pass.number() as usize - 1;
                assignments = assignments
                    .into_iter()
                    .flat_map(|base| {
                        basis_choices.iter().map(move |&b| {
                            let mut next = base;
                            next[idx] = Some(b);
                            next
                        })
                    })
                    .collect();
            }
            let assignment_weight = 1.0 / assignments.len() as f64;
            let mut rule = GuessRule::new(variant, set);

            for &(input, reference) in &entries {
                for &(a, b, c) in &combos {
                    let legs = Legs::honest(a, b, c);
                    for bases in &assignments {
                        let w = input_weight * combo_weight * assignment_weight;
                        let mut mass = CompensatedSum::default();
                        walk(input, 0, 1.0, &legs, bases, &mut Vec::new(), &mut |prob, out, obs| {
                            mass.add(prob);
                            let guess = attacked.then(|| {
                                let intercepts: Vec<Intercept> = obs
                                    .iter()
                                    .map(|&(pass, basis, outcome)| Intercept {
                                        pass,
                                        basis: Traced {
                                            value: basis,
                                            source: Provenance::Configured,
                                        },
                                        outcome: Traced {
                                            value: outcome,
                                            source: Provenance::Measurement,
                                        },
                                    })
                                    .collect();
                                rule.guess(&intercepts).value
                            });
                            acc.leaf(w * prob, out, &input, reference, guess);
                        });
                        acc.mass(mass.value());
                    }
                }
            }
            terms
        }
        AttackKind::Mitm => {
            let readout = if variant == Variant::Classical {
                Readout::Bit
            } else {
                spec.readout
                    .unwrap_or_else(|| Readout::default_for(variant, inputs.is_bits()))
            };
            let branches = if readout == Readout::Bit { 2 } else { 1 };
            let terms = guard(lattice_terms * branches)?;
            for &(input, reference) in &entries {
                for &(a, b, c) in &combos {
                    let w = input_weight * combo_weight;
                    let eve_knows = if spec.secret_known { c } else { Angle::ZERO };
                    // Alice ↔ Eve: R(c+a), Eve's R(0), Alice's R(-a), Eve removes 0 (and c if known).
                    let at_eve = statekit::rotate(&statekit::rotate(&input, c + a), -a);
                    let decoded = statekit::rotate(&at_eve, -eve_knows);
                    let outcomes: Vec<(f64, EveGuess, PureState)> = match readout {
                        Readout::Bit => {
                            let p0 = statekit::outcome_zero_probability(&decoded, Angle::ZERO);
                            vec![
                                (p0, EveGuess::Bit(false), PureState::H),
                                (1.0 - p0, EveGuess::Bit(true), PureState::V),
                            ]
                        }
                        Readout::State => vec![(1.0, EveGuess::State(decoded), decoded)],
                    };
                    let mut mass = CompensatedSum::default();
                    for (p, guess, held) in outcomes {
                        mass.add(p);
                        let payload = match spec.payload {
                            Payload::Decoded => held,
                            Payload::Constant(s) => s,
                        };
                        // Eve ↔ Bob: Eve's R(0 + known c), Bob's R(b), Eve's R(0), Bob removes b + c.
                        let at_bob = statekit::rotate(&statekit::rotate(&payload, eve_knows), b);
                        let out = statekit::rotate(&at_bob, -(b + c));
                        acc.leaf(w * p, &out, &input, reference, Some(guess));
                    }
                    acc.mass(mass.value());
                }
            }
            terms
        }
    };

    let mean_output_fidelity = acc.bob_fidelity.value().clamp(0.0, 1.0);
    Ok(ExactResult {
        schema: 1,
        variant,
        k,
        attack: spec.clone(),
        inputs: inputs.clone(),
        eve_accuracy: (attacked && inputs.is_bits()).then(|| acc.eve_correct.value().clamp(0.0, 1.0)),
        eve_mean_fidelity: attacked.then(|| acc.eve_fidelity.value().clamp(0.0, 1.0)),
        bob_error_rate: (1.0 - mean_output_fidelity).clamp(0.0, 1.0),
        mean_output_fidelity,
        term_count,
        max_branch_mass_error: acc.max_mass_error,
    })
}

/// Runs `n` positions through the real protocol and attacker code.
///
/// Bit inputs come from the message stream; a state set is sampled
/// uniformly. The authenticated variant derives its secret from
/// `seeds.message` on the secret stream.
pub fn monte_carlo(
    variant: Variant,
    k: u32,
    spec: &AttackSpec,
    inputs: &InputSet,
    n: usize,
    seeds: &Seeds,
) -> Result<RunReport, OracleError> {
    let mut cfg = SessionConfig::new(variant, k, n);
    cfg.seeds = *seeds;
    cfg.attack = spec.clone();
    cfg.message = match inputs {
        InputSet::Bits => MessageSource::RandomBits,
        InputSet::States(states) => MessageSource::StateSet { states: states.clone() },
    };
    if variant.needs_secret() {
        cfg.secret = Some(SecretSource::Seeded { seed: seeds.message });
    }
    let session = cfg.resolve()?;
    let mut channel = adversary::session_channel(&session)?;
    Ok(protocol::run_session(&session, &mut channel)?)
}

/// One empirical statistic checked against its exact value.
#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub statistic: &'static str,
    pub exact: f64,
    pub empirical: f64,
    pub sigma: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Agreement {
    fn new(statistic: &'static str, exact: f64, empirical: f64, sigma: f64) -> Self {
        let tolerance = 4.0 * sigma + 1e-9;
        Agreement {
            statistic,
            exact,
            empirical,
            sigma,
            tolerance,
            pass: (empirical - exact).abs() <= tolerance,
        }
    }
}

fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n.max(1) as f64).sqrt()
}

/// Compares every statistic the report and the exact result share, at
/// 4σ. Rates use the binomial σ of the exact value; mean fidelities use the
/// report's sample standard error.
pub fn compare(exact: &ExactResult, report: &RunReport) -> Vec<Agreement> {
    let mut out = Vec::new();
    if let Some(rate) = report.bob_bit_error_rate {
        let n = report.positions as u64;
        out.push(Agreement::new(
            "bob_error_rate",
            exact.bob_error_rate,
            rate,
            binomial_sigma(exact.bob_error_rate, n),
        ));
    }
    if let Some(f) = &report.output_fidelity {
        out.push(Agreement::new(
            "mean_output_fidelity",
            exact.mean_output_fidelity,
            f.mean,
            f.stderr,
        ));
    }
    if let Some(eve) = &report.eve {
        if let (Some(p), Some(acc)) = (exact.eve_accuracy, eve.accuracy) {
            out.push(Agreement::new("eve_accuracy", p, acc, binomial_sigma(p, eve.guesses)));
        }
        if let (Some(f), Some(stats)) = (exact.eve_mean_fidelity, &eve.fidelity) {
            out.push(Agreement::new("eve_mean_fidelity", f, stats.mean, stats.stderr));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fixed0() -> BasisStrategy {
        BasisStrategy::Fixed(Angle::ZERO)
    }

    /// Lattice average of `f(kπ/K)`, written out independently of the
    /// enumeration engine.
    fn lattice_mean(k: u32, f: impl Fn(f64) -> f64) -> f64 {
        (0..k).map(|j| f(f64::from(j) * PI / f64::from(k))).sum::<f64>() / f64::from(k)
    }

    #[test]
    fn honest_term_counts_and_values() {
        let r = enumerate_honest(Variant::Classical, 2).unwrap();
        assert_eq!(r.term_count, 4);
        assert!(r.bob_error_rate.abs() < 1e-12);
        let r = enumerate_honest(Variant::Quantum, 3).unwrap();
        assert_eq!(r.term_count, 9);
        assert!((r.mean_output_fidelity - 1.0).abs() < 1e-12);
        let r = enumerate_honest(Variant::Authenticated, 4).unwrap();
        assert_eq!(r.term_count, 64);
        assert!((r.mean_output_fidelity - 1.0).abs() < 1e-12);
        assert!(r.eve_accuracy.is_none());
    }

    #[test]
    fn pass_one_basis_zero_matches_closed_forms() {
        for k in [2u32, 3, 4, 5, 8, 16] {
            let spec = AttackSpec::intercept(&[Pass::First], fixed0(), 0);
            let r = enumerate_attack(Variant::Classical, k, &spec, &InputSet::Bits).unwrap();
            // Eve is right with cos²φA; Bob errs with sin²(2φA)/2.
            let eve = lattice_mean(k, |x| x.cos().powi(2));
            let bob = lattice_mean(k, |x| (2.0 * x).sin().powi(2) / 2.0);
            assert!((r.eve_accuracy.unwrap() - eve).abs() < 1e-12, "K={k}");
            assert!((r.bob_error_rate - bob).abs() < 1e-12, "K={k}");
            assert_eq!(r.term_count, u64::from(k).pow(2) * 2);
        }
    }

    #[test]
    fn pass_one_frozen_values() {
        let spec = AttackSpec::intercept(&[Pass::First], fixed0(), 0);
        let r = enumerate_attack(Variant::Classical, 8, &spec, &InputSet::Bits).unwrap();
        assert!((r.eve_accuracy.unwrap() - 0.5).abs() < 1e-12);
        assert!((r.bob_error_rate - 0.25).abs() < 1e-12);
        let r = enumerate_attack(Variant::Classical, 2, &spec, &InputSet::Bits).unwrap();
        assert!((r.eve_accuracy.unwrap() - 0.5).abs() < 1e-12);
        // φA ∈ {0, π/2}: Eve's collapse lands on an eigenstate of Bob's
        // measurement after the remaining rotations.
        assert!(r.bob_error_rate.abs() < 1e-12);
    }

    #[test]
    fn lattice_basis_on_binary_lattice_is_a_coin() {
        let spec = AttackSpec::intercept(&[Pass::First], BasisStrategy::UniformLattice, 0);
        let r = enumerate_attack(Variant::Classical, 2, &spec, &InputSet::Bits).unwrap();
        assert!((r.eve_accuracy.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(r.term_count, 4 * 2 * 2);
    }

    #[test]
    fn disturbance_is_strictly_positive_from_k3() {
        for k in 3..=8 {
            for passes in [&[Pass::First][..], &[Pass::Second], &[Pass::Third], &[Pass::First, Pass::Third]] {
                let spec = AttackSpec::intercept(passes, fixed0(), 0);
                let r = enumerate_attack(Variant::Classical, k, &spec, &InputSet::Bits).unwrap();
                assert!(r.bob_error_rate > 1e-3, "K={k} passes={passes:?}: {}", r.bob_error_rate);
            }
        }
    }

    #[test]
    fn mitm_on_auth_without_secret_is_a_coin() {
        for k in [2, 3, 4, 8] {
            let r = enumerate_attack(Variant::Authenticated, k, &AttackSpec::mitm(0), &InputSet::Bits).unwrap();
            let expected = lattice_mean(k, |x| x.cos().powi(2));
            assert!((r.eve_accuracy.unwrap() - expected).abs() < 1e-12);
            assert!((r.eve_accuracy.unwrap() - 0.5).abs() < 1e-12);
        }
        let known = AttackSpec::mitm(0).with_secret_known();
        let r = enumerate_attack(Variant::Authenticated, 8, &known, &InputSet::Bits).unwrap();
        assert!((r.eve_accuracy.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mitm_reads_unauthenticated_variants_exactly() {
        for v in [Variant::Classical, Variant::Quantum] {
            let r = enumerate_attack(v, 8, &AttackSpec::mitm(0), &InputSet::Bits).unwrap();
            assert!((r.eve_accuracy.unwrap() - 1.0).abs() < 1e-12);
            assert!(r.bob_error_rate.abs() < 1e-12);
        }
        let states = InputSet::States(vec![
            statekit::state_from_angle(Angle::new(0.3).unwrap()),
            PureState::normalized(num_complex::Complex64::new(0.2, 0.4), num_complex::Complex64::new(0.5, -0.1))
                .unwrap(),
        ]);
        let r = enumerate_attack(Variant::Quantum, 4, &AttackSpec::mitm(0), &states).unwrap();
        assert!((r.eve_mean_fidelity.unwrap() - 1.0).abs() < 1e-12);
        assert!(r.eve_accuracy.is_none());
    }

    #[test]
    fn branch_probabilities_are_conserved() {
        let spec = AttackSpec::intercept(&Pass::ALL, BasisStrategy::UniformLattice, 0);
        let r = enumerate_attack(Variant::Authenticated, 4, &spec, &InputSet::Bits).unwrap();
        assert!(r.max_branch_mass_error < 1e-12);
    }

    #[test]
    fn eve_accuracy_is_bit_symmetric() {
        // With a single input |H> (or |V>) and bit guesses, Eve's mean
        // fidelity is her accuracy conditioned on that bit.
        let bases = [
            BasisStrategy::Fixed(Angle::ZERO),
            BasisStrategy::Fixed(Angle::new(0.3).unwrap()),
            BasisStrategy::UniformLattice,
        ];
        for k in [2, 3, 5, 8] {
            for passes in [&[Pass::First][..], &[Pass::Second], &[Pass::First, Pass::Third]] {
                for basis in bases {
                    let spec = AttackSpec::intercept(passes, basis, 0);
                    let given = |s| {
                        enumerate_attack(Variant::Quantum, k, &spec, &InputSet::States(vec![s]))
                            .unwrap()
                            .eve_mean_fidelity
                            .unwrap()
                    };
                    let (zero, one) = (given(PureState::H), given(PureState::V));
                    assert!((zero - one).abs() < 1e-12, "K={k} {passes:?} {basis:?}: {zero} vs {one}");
                    let both = enumerate_attack(Variant::Classical, k, &spec, &InputSet::Bits).unwrap();
                    assert!((both.eve_accuracy.unwrap() - zero).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn guards_and_unsupported_inputs() {
        let cont = AttackSpec::intercept(&[Pass::First], BasisStrategy::UniformContinuous, 0);
        assert!(matches!(
            enumerate_attack(Variant::Classical, 4, &cont, &InputSet::Bits),
            Err(OracleError::UnsupportedBasis)
        ));
        assert!(matches!(enumerate_honest(Variant::Classical, 65), Err(OracleError::LatticeTooLarge(65))));
        let heavy = AttackSpec::intercept(&Pass::ALL, BasisStrategy::UniformLattice, 0);
        assert!(matches!(
            enumerate_attack(Variant::Authenticated, 16, &heavy, &InputSet::Bits),
            Err(OracleError::TooManyTerms { .. })
        ));
        assert!(matches!(
            enumerate_attack(Variant::Classical, 4, &AttackSpec::none(), &InputSet::States(vec![PureState::H])),
            Err(OracleError::StatesForClassical)
        ));
    }

    #[test]
    fn likelihoods_of_single_pass_one_outcome_are_balanced() {
        let set = PhaseSet::new(8).unwrap();
        let [l0, l1] = bit_likelihoods(Variant::Classical, &set, &[(Pass::First, Angle::ZERO, false)]);
        assert!((l0 - 0.5).abs() < 1e-12);
        assert!((l1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-16).abs() < 1e-30);
    }
}
