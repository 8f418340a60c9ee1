//! The K-element rotation lattice `{kπ/K}`, per-party seeded random
//! streams, and the pre-shared secret angle sequence.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::statekit::Angle;

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("K = {0} is not allowed: the lattice needs at least 2 angles")]
    DegenerateLattice(u32),
    #[error("K = {0} exceeds the supported maximum of {max}", max = u16::MAX)]
    LatticeTooLarge(u32),
    #[error("phase index {index} is out of range for K = {k}")]
    IndexOutOfRange { index: u32, k: u32 },
    #[error("cannot sample an empty sequence (n = 0)")]
    EmptyMessage,
    #[error("secret angles file: {0}")]
    Io(#[from] io::Error),
    #[error("secret angles file is malformed: {0}")]
    Malformed(#[from] serde_json::Error),
}

/// The lattice `{kπ/K : k = 0..K-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct PhaseSet {
    k_count: u32,
}

impl PhaseSet {
    pub fn new(k_count: u32) -> Result<Self, PhaseError> {
        if k_count < 2 {
            return Err(PhaseError::DegenerateLattice(k_count));
        }
        if k_count > u32::from(u16::MAX) {
            return Err(PhaseError::LatticeTooLarge(k_count));
        }
        Ok(PhaseSet { k_count })
    }

    pub fn k(&self) -> u32 {
        self.k_count
    }

    pub fn index(&self, index: u32) -> Result<PhaseIndex, PhaseError> {
        if index < self.k_count {
            Ok(PhaseIndex(index))
        } else {
            Err(PhaseError::IndexOutOfRange {
                index,
                k: self.k_count,
            })
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = PhaseIndex> + Clone {
        (0..self.k_count).map(PhaseIndex)
    }

    pub fn angles(&self) -> impl Iterator<Item = Angle> + Clone + '_ {
        self.indices().map(move |k| self.angle(k))
    }

    /// Infallible angle lookup for indices already known to be valid.
    pub(crate) fn angle(&self, k: PhaseIndex) -> Angle {
        debug_assert!(k.0 < self.k_count);
        Angle::new(f64::from(k.0) * PI / f64::from(self.k_count)).expect("finite lattice angle")
    }
}

impl TryFrom<u32> for PhaseSet {
    type Error = PhaseError;

    fn try_from(k: u32) -> Result<Self, Self::Error> {
        PhaseSet::new(k)
    }
}

impl From<PhaseSet> for u32 {
    fn from(set: PhaseSet) -> u32 {
        set.k_count
    }
}

/// An index `k` into a [`PhaseSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseIndex(u32);

impl PhaseIndex {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// `kπ/K`, computed in a single expression.
pub fn angle_of(set: &PhaseSet, k: PhaseIndex) -> Result<Angle, PhaseError> {
    set.index(k.0).map(|k| set.angle(k))
}

/// Named, independent random streams. Every party owns its own stream so
/// that adding or removing an attacker never shifts the honest parties'
/// random choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    Alice = 1,
    Bob = 2,
    Eve = 3,
    Message = 4,
    Secret = 5,
    Session = 6,
}

/// ChaCha20 keyed by `seed_from_u64(seed)` with the stream number set to the
/// [`StreamId`]. Reproducible across platforms.
#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha20Rng,
}

impl SeededStream {
    pub const FAMILY: &'static str = "chacha20/seed_from_u64/stream-per-party";

    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream as u64);
        SeededStream { rng }
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[0, bound)` by rejection over the smallest enclosing
    /// power-of-two range.
    pub fn below(&mut self, bound: u32) -> u32 {
        assert!(bound > 0, "empty range");
        let mask = (u64::from(bound).next_power_of_two() - 1) as u32;
        loop {
            let x = self.rng.next_u32() & mask;
            if x < bound {
                return x;
            }
        }
    }

    pub fn bit(&mut self) -> bool {
        self.rng.next_u32() & 1 == 1
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest);
    }
}

/// Draws `n` lattice indices, each uniform on `[0, K-1]`.
pub fn sample(set: &PhaseSet, rng: &mut SeededStream, n: usize) -> Result<Vec<PhaseIndex>, PhaseError> {
    if n == 0 {
        return Err(PhaseError::EmptyMessage);
    }
    Ok((0..n).map(|_| PhaseIndex(rng.below(set.k()))).collect())
}

/// The pre-shared rotation sequence held by both honest parties and never
/// sent over the quantum channel.
///
/// On disk: `{"k": K, "indices": [...]}`. Treat the file as key material.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SecretFile", into = "SecretFile")]
pub struct SecretAngles {
    set: PhaseSet,
    indices: Vec<PhaseIndex>,
}

#[derive(Serialize, Deserialize)]
struct SecretFile {
    k: u32,
    indices: Vec<u32>,
}

impl TryFrom<SecretFile> for SecretAngles {
    type Error = PhaseError;

    fn try_from(file: SecretFile) -> Result<Self, Self::Error> {
        let set = PhaseSet::new(file.k)?;
        let indices = file
            .indices
            .into_iter()
            .map(|i| set.index(i))
            .collect::<Result<Vec<_>, _>>()?;
        SecretAngles::new(set, indices)
    }
}

impl From<SecretAngles> for SecretFile {
    fn from(s: SecretAngles) -> Self {
        SecretFile {
            k: s.set.k(),
            indices: s.indices.iter().map(|i| i.value()).collect(),
        }
    }
}

impl SecretAngles {
    pub fn new(set: PhaseSet, indices: Vec<PhaseIndex>) -> Result<Self, PhaseError> {
        if indices.is_empty() {
            return Err(PhaseError::EmptyMessage);
        }
        for k in &indices {
            set.index(k.value())?;
        }
        Ok(SecretAngles { set, indices })
    }

    pub fn set(&self) -> PhaseSet {
        self.set
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[PhaseIndex] {
        &self.indices
    }

    /// Secret angle for 0-based position `i`.
    pub fn angle(&self, i: usize) -> Angle {
        self.set.angle(self.indices[i])
    }

    pub fn load(path: &Path) -> Result<Self, PhaseError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes the JSON file, owner read/write only on unix.
    pub fn save(&self, path: &Path) -> Result<(), PhaseError> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text + "\n")?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}

/// Generates a fresh secret sequence of length `n`.
pub fn derive_secret(set: &PhaseSet, rng: &mut SeededStream, n: usize) -> Result<SecretAngles, PhaseError> {
    SecretAngles::new(*set, sample(set, rng, n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn set(k: u32) -> PhaseSet {
        PhaseSet::new(k).unwrap()
    }

    #[test]
    fn angle_of_examples() {
        let four = set(4);
        assert_eq!(angle_of(&four, four.index(0).unwrap()).unwrap().radians(), 0.0);
        assert_eq!(angle_of(&four, four.index(2).unwrap()).unwrap().radians(), FRAC_PI_2);
        let three = set(3);
        let got = angle_of(&three, three.index(2).unwrap()).unwrap().radians();
        assert!((got - 2.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn angle_of_rejects_foreign_index() {
        let idx = set(8).index(5).unwrap();
        assert!(matches!(
            angle_of(&set(4), idx),
            Err(PhaseError::IndexOutOfRange { index: 5, k: 4 })
        ));
        assert!(set(4).index(4).is_err());
    }

    #[test]
    fn degenerate_lattices_are_rejected() {
        assert!(matches!(PhaseSet::new(0), Err(PhaseError::DegenerateLattice(0))));
        assert!(matches!(PhaseSet::new(1), Err(PhaseError::DegenerateLattice(1))));
        assert!(matches!(PhaseSet::new(70_000), Err(PhaseError::LatticeTooLarge(_))));
        assert!(serde_json::from_str::<PhaseSet>("1").is_err());
    }

    #[test]
    fn angle_of_is_injective() {
        for k in [2, 3, 5, 8, 64, 1000] {
            let s = set(k);
            let mut angles: Vec<f64> = s.angles().map(|a| a.radians()).collect();
            angles.dedup();
            assert_eq!(angles.len(), k as usize);
            assert!(angles.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn sample_requires_nonempty() {
        let mut rng = SeededStream::new(1, StreamId::Alice);
        assert!(matches!(sample(&set(4), &mut rng, 0), Err(PhaseError::EmptyMessage)));
    }

    #[test]
    fn sample_is_deterministic_per_seed_and_stream() {
        let a = sample(&set(8), &mut SeededStream::new(9, StreamId::Alice), 100).unwrap();
        let b = sample(&set(8), &mut SeededStream::new(9, StreamId::Alice), 100).unwrap();
        let c = sample(&set(8), &mut SeededStream::new(9, StreamId::Bob), 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn binary_lattice_is_balanced() {
        let n = 1_000_000;
        let idx = sample(&set(2), &mut SeededStream::new(3, StreamId::Alice), n).unwrap();
        let zeros = idx.iter().filter(|k| k.value() == 0).count() as f64;
        let sigma = (0.25 / n as f64).sqrt();
        assert!((zeros / n as f64 - 0.5).abs() < 4.0 * sigma);
    }

    #[test]
    fn eight_bin_chi_square() {
        // 0.999 quantile of chi-square with 7 degrees of freedom.
        const CHI2_7_999: f64 = 24.321_886;
        let n = 800_000;
        let idx = sample(&set(8), &mut SeededStream::new(11, StreamId::Bob), n).unwrap();
        let mut bins = [0u64; 8];
        for k in idx {
            bins[k.value() as usize] += 1;
        }
        let expected = n as f64 / 8.0;
        let stat: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected).powi(2) / expected)
            .sum();
        assert!(stat < CHI2_7_999, "chi2 = {stat}");
    }

    #[test]
    fn uniform_is_in_unit_interval() {
        let mut rng = SeededStream::new(5, StreamId::Eve);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn secret_forced_index() {
        let s = SecretAngles::new(set(2), vec![set(2).index(1).unwrap()]).unwrap();
        assert_eq!(s.angle(0).radians(), FRAC_PI_2);
    }

    #[test]
    fn secret_has_requested_length() {
        for n in [1, 7, 100] {
            let s = derive_secret(&set(16), &mut SeededStream::new(n as u64, StreamId::Secret), n).unwrap();
            assert_eq!(s.len(), n);
        }
    }

    #[test]
    fn distinct_seeds_give_distinct_secrets() {
        let a = derive_secret(&set(16), &mut SeededStream::new(1, StreamId::Secret), 100).unwrap();
        let b = derive_secret(&set(16), &mut SeededStream::new(2, StreamId::Secret), 100).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn secret_file_round_trip() {
        let dir = std::env::temp_dir().join(format!("qtp-secret-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.json");
        let s = derive_secret(&set(2), &mut SeededStream::new(4, StreamId::Secret), 3).unwrap();
        s.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("{\"k\":2,\"indices\":["));
        assert_eq!(SecretAngles::load(&path).unwrap(), s);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn malformed_secret_files_are_rejected() {
        assert!(serde_json::from_str::<SecretAngles>(r#"{"k":4,"indices":[0,4]}"#).is_err());
        assert!(serde_json::from_str::<SecretAngles>(r#"{"k":1,"indices":[0]}"#).is_err());
        assert!(serde_json::from_str::<SecretAngles>(r#"{"k":4,"indices":[]}"#).is_err());
    }

    proptest! {
        #[test]
        fn sampled_indices_stay_in_range(
            k in prop::sample::select(vec![2u32, 3, 4, 8, 16, 64]),
            seed in any::<u64>(),
        ) {
            let s = set(k);
            let idx = sample(&s, &mut SeededStream::new(seed, StreamId::Alice), 500).unwrap();
            prop_assert!(idx.iter().all(|i| i.value() < k));
        }
    }
}
