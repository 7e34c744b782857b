//! Named, independent random streams derived from a master seed.
//!
//! Each stream is a ChaCha8 generator keyed by `(master seed, run seed)` and
//! separated by its ChaCha stream id, so drawing from one stream never shifts
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Observation and silhouette noise during training.
    EnvNoise,
    /// Action sampling during training.
    PolicySampling,
    /// Parameter initialization.
    Init,
    /// Probe-set construction.
    Probe,
    /// Environment noise in frozen rollouts (shared by paired conditions).
    AssayEnv,
    /// Action sampling in frozen rollouts (shared by paired conditions).
    AssayPolicy,
    /// Environment noise for the calibration sample.
    CalibrationEnv,
    /// Action sampling for the calibration sample.
    CalibrationPolicy,
}

impl Stream {
    pub fn name(self) -> &'static str {
        match self {
            Stream::EnvNoise => "env-noise",
            Stream::PolicySampling => "policy-sampling",
            Stream::Init => "init",
            Stream::Probe => "probe",
            Stream::AssayEnv => "assay-env",
            Stream::AssayPolicy => "assay-policy",
            Stream::CalibrationEnv => "calibration-env",
            Stream::CalibrationPolicy => "calibration-policy",
        }
    }

    fn id(self) -> u64 {
        let h = Sha256::digest(self.name().as_bytes());
        u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    pub master_seed: u64,
    pub run_seed: u64,
}

impl RngStreams {
    pub fn new(master_seed: u64, run_seed: u64) -> Self {
        RngStreams {
            master_seed,
            run_seed,
        }
    }

    pub fn stream(&self, stream: Stream) -> StreamRng {
        let mut h = Sha256::new();
        h.update(b"somagrid-rng-v1");
        h.update(self.master_seed.to_le_bytes());
        h.update(self.run_seed.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream.id());
        rng
    }
}
