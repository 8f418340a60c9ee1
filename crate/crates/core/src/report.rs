//! Machine-readable session reports.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{AttackKind, EveRecord};
use crate::config::{Session, SessionConfig};
use crate::phases::SeededStream;
use crate::protocol::{Decoded, Message, Variant};
use crate::statekit::{fidelity, PureState};

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: u64,
    pub mean: f64,
    pub min: f64,
    /// Standard error of the mean.
    pub stderr: f64,
}

impl SampleStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(SampleStats {
            count: values.len() as u64,
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            stderr: (var / n).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedProvenance {
    pub rng: String,
    pub alice: u64,
    pub bob: u64,
    pub message: u64,
    pub eve: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EveSummary {
    pub kind: AttackKind,
    /// Eve was handed the secret angles.
    pub analysis_mode: bool,
    pub measurements: u64,
    pub guesses: u64,
    pub correct: Option<u64>,
    pub accuracy: Option<f64>,
    pub accuracy_stderr: Option<f64>,
    /// Fidelity of Eve's guessed state with Alice's input.
    pub fidelity: Option<SampleStats>,
}

impl EveSummary {
    pub fn from_record(record: &EveRecord, message: &Message) -> Self {
        let mut guesses = 0u64;
        let mut bit_guesses = 0u64;
        let mut correct = 0u64;
        let mut fids = Vec::with_capacity(record.positions.len());
        for p in &record.positions {
            let Some(g) = p.guess else { continue };
            let i = p.position as usize - 1;
            guesses += 1;
            fids.push(fidelity(&g.value.state(), &message.state(i)));
            if let (Some(gb), Some(mb)) = (g.value.bit(), message.bit(i)) {
                bit_guesses += 1;
                correct += u64::from(gb == mb);
            }
        }
        let accuracy = (bit_guesses > 0).then(|| correct as f64 / bit_guesses as f64);
        EveSummary {
            kind: record.kind,
            analysis_mode: record.secret_known,
            measurements: record.measurements,
            guesses,
            correct: (bit_guesses > 0).then_some(correct),
            accuracy,
            accuracy_stderr: accuracy.map(|p| (p * (1.0 - p) / bit_guesses as f64).sqrt()),
            fidelity: SampleStats::from_values(&fids),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub config: SessionConfig,
    pub provenance: SeedProvenance,
    /// Positions Bob completed (or Alice sent, on Alice's side).
    pub positions: usize,
    pub message_digest: String,
    pub decoded_digest: Option<String>,
    pub bob_bit_errors: Option<u64>,
    pub bob_bit_error_rate: Option<f64>,
    pub bob_bit_error_stderr: Option<f64>,
    /// Fidelity of Bob's output with Alice's input (qubit variants).
    pub output_fidelity: Option<SampleStats>,
    pub eve: Option<EveSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
}

fn push_state(buf: &mut Vec<u8>, s: &PureState) {
    for x in [s.amp_h().re, s.amp_h().im, s.amp_v().re, s.amp_v().im] {
        buf.extend_from_slice(&x.to_be_bytes());
    }
}

/// SHA-256 over one byte per bit or 32 big-endian bytes per state.
pub fn message_digest(msg: &Message) -> String {
    let mut buf = Vec::new();
    match msg {
        Message::Bits(bits) => buf.extend(bits.iter().map(|&b| u8::from(b))),
        Message::Qubits(states) => states.iter().for_each(|s| push_state(&mut buf, s)),
    }
    hex::encode(Sha256::digest(&buf))
}

pub fn decoded_digest(outputs: &[Decoded]) -> String {
    let mut buf = Vec::new();
    for d in outputs {
        match d {
            Decoded::Bit(b) => buf.push(u8::from(*b)),
            Decoded::State(s) => push_state(&mut buf, s),
        }
    }
    hex::encode(Sha256::digest(&buf))
}

impl RunReport {
    /// `outputs` is `None` on Alice's side of a networked run.
    pub fn build(session: &Session, outputs: Option<&[Decoded]>, eve: Option<&EveRecord>) -> Self {
        let cfg = session.config();
        let msg = session.message();
        let mut report = RunReport {
            schema: REPORT_SCHEMA,
            config: cfg.clone(),
            provenance: SeedProvenance {
                rng: SeededStream::FAMILY.to_string(),
                alice: cfg.seeds.alice,
                bob: cfg.seeds.bob,
                message: cfg.seeds.message,
                eve: (cfg.attack.kind != AttackKind::None).then_some(cfg.attack.eve_seed),
            },
            positions: outputs.map_or(session.n(), <[_]>::len),
            message_digest: message_digest(msg),
            decoded_digest: outputs.map(decoded_digest),
            bob_bit_errors: None,
            bob_bit_error_rate: None,
            bob_bit_error_stderr: None,
            output_fidelity: None,
            eve: None,
            wall_clock_ms: None,
        };
        if let Some(outputs) = outputs {
            match session.variant() {
                Variant::Classical => {
                    let errors = outputs
                        .iter()
                        .enumerate()
                        .filter(|(i, d)| matches!(d, Decoded::Bit(b) if Some(*b) != msg.bit(*i)))
                        .count() as u64;
                    let n = outputs.len().max(1) as f64;
                    let rate = errors as f64 / n;
                    report.bob_bit_errors = Some(errors);
                    report.bob_bit_error_rate = Some(rate);
                    report.bob_bit_error_stderr = Some((rate * (1.0 - rate) / n).sqrt());
                }
                Variant::Quantum | Variant::Authenticated => {
                    let fids: Vec<f64> = outputs
                        .iter()
                        .enumerate()
                        .filter_map(|(i, d)| match d {
                            Decoded::State(s) => Some(fidelity(s, &msg.state(i))),
                            Decoded::Bit(_) => None,
                        })
                        .collect();
                    report.output_fidelity = SampleStats::from_values(&fids);
                }
            }
        }
        if let Some(record) = eve {
            report.attach_eve(record, msg);
        }
        report
    }

    pub fn attach_eve(&mut self, record: &EveRecord, message: &Message) {
        self.eve = Some(EveSummary::from_record(record, message));
    }

    pub fn set_wall_clock(&mut self, elapsed: Duration) {
        self.wall_clock_ms = Some(elapsed.as_secs_f64() * 1e3);
    }

    pub fn without_timestamp(mut self) -> Self {
        self.wall_clock_ms = None;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_stats_basics() {
        assert!(SampleStats::from_values(&[]).is_none());
        let s = SampleStats::from_values(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.min, s.stderr, s.count), (1.0, 1.0, 0.0, 3));
        let s = SampleStats::from_values(&[0.0, 1.0]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.min, 0.0);
        assert!((s.stderr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn digests_distinguish_messages() {
        let a = message_digest(&Message::Bits(vec![true, false]));
        let b = message_digest(&Message::Bits(vec![false, true]));
        assert_ne!(a, b);
        assert_eq!(a, decoded_digest(&[Decoded::Bit(true), Decoded::Bit(false)]));
        assert_eq!(a.len(), 64);
    }
}
