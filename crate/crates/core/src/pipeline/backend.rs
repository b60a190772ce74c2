use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::field::{ImageField, LatentField};
use crate::pipeline::schedule::DenoiseSchedule;

/// What a backend declares about itself during the handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub deterministic: bool,
    pub concurrency_safe: bool,
    /// Fixed latent shape, if the model only runs at one resolution.
    #[serde(default)]
    pub latent_shape: Option<[usize; 3]>,
    pub scale_factor: usize,
}

/// Opaque token minted by a backend for a prepared prompt + conditioning.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditioningHandle(pub String);

/// Denoiser + autoencoder.
///
/// Every operation must be deterministic given its inputs, and
/// `denoise(x, a, a, c)` must return `x`. Levels follow
/// [`DenoiseSchedule`]: `N` is pure noise, 0 is clean.
pub trait Backend {
    fn capabilities(&mut self) -> Result<Capabilities, BackendError>;
    fn encode(&mut self, image: &ImageField) -> Result<LatentField, BackendError>;
    fn decode(&mut self, latent: &LatentField) -> Result<ImageField, BackendError>;
    fn add_noise(
        &mut self,
        clean: &LatentField,
        noise: &LatentField,
        level: usize,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError>;
    fn denoise(
        &mut self,
        latent: &LatentField,
        from_level: usize,
        to_level: usize,
        cond: &ConditioningHandle,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError>;
    fn prepare_conditioning(
        &mut self,
        prompt: &str,
        segmap: Option<&ImageField>,
    ) -> Result<ConditioningHandle, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &mut B {
    fn capabilities(&mut self) -> Result<Capabilities, BackendError> {
        (**self).capabilities()
    }
    fn encode(&mut self, image: &ImageField) -> Result<LatentField, BackendError> {
        (**self).encode(image)
    }
    fn decode(&mut self, latent: &LatentField) -> Result<ImageField, BackendError> {
        (**self).decode(latent)
    }
    fn add_noise(
        &mut self,
        clean: &LatentField,
        noise: &LatentField,
        level: usize,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        (**self).add_noise(clean, noise, level, schedule)
    }
    fn denoise(
        &mut self,
        latent: &LatentField,
        from_level: usize,
        to_level: usize,
        cond: &ConditioningHandle,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        (**self).denoise(latent, from_level, to_level, cond, schedule)
    }
    fn prepare_conditioning(
        &mut self,
        prompt: &str,
        segmap: Option<&ImageField>,
    ) -> Result<ConditioningHandle, BackendError> {
        (**self).prepare_conditioning(prompt, segmap)
    }
}

/// Which part of a generation a denoise call belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    /// Shared steps before the switch, run once per generation.
    Prefix,
    /// Per-frame steps after the switch.
    Suffix,
    /// Whole-process or img2img denoising.
    Full,
    /// Determinism check.
    Probe,
}

/// Backend call counts, by operation and segment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLedger {
    pub prefix_calls: usize,
    pub suffix_calls: usize,
    pub full_calls: usize,
    pub probe_calls: usize,
    pub encode_calls: usize,
    pub decode_calls: usize,
    pub add_noise_calls: usize,
    pub conditioning_calls: usize,
}

impl CallLedger {
    pub fn denoise_calls(&self) -> usize {
        self.prefix_calls + self.suffix_calls + self.full_calls + self.probe_calls
    }
}

/// Backend wrapper that tallies every call in a [`CallLedger`].
pub struct Accounted<B> {
    inner: B,
    pub ledger: CallLedger,
}

impl<B: Backend> Accounted<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            ledger: CallLedger::default(),
        }
    }

    pub fn into_parts(self) -> (B, CallLedger) {
        (self.inner, self.ledger)
    }

    pub fn capabilities(&mut self) -> Result<Capabilities, BackendError> {
        self.inner.capabilities()
    }

    pub fn encode(&mut self, image: &ImageField) -> Result<LatentField, BackendError> {
        self.ledger.encode_calls += 1;
        self.inner.encode(image)
    }

    pub fn decode(&mut self, latent: &LatentField) -> Result<ImageField, BackendError> {
        self.ledger.decode_calls += 1;
        self.inner.decode(latent)
    }

    pub fn add_noise(
        &mut self,
        clean: &LatentField,
        noise: &LatentField,
        level: usize,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        self.ledger.add_noise_calls += 1;
        self.inner.add_noise(clean, noise, level, schedule)
    }

    pub fn denoise(
        &mut self,
        segment: Segment,
        latent: &LatentField,
        from_level: usize,
        to_level: usize,
        cond: &ConditioningHandle,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        match segment {
            Segment::Prefix => self.ledger.prefix_calls += 1,
            Segment::Suffix => self.ledger.suffix_calls += 1,
            Segment::Full => self.ledger.full_calls += 1,
            Segment::Probe => self.ledger.probe_calls += 1,
        }
        self.inner
            .denoise(latent, from_level, to_level, cond, schedule)
    }

    pub fn prepare_conditioning(
        &mut self,
        prompt: &str,
        segmap: Option<&ImageField>,
    ) -> Result<ConditioningHandle, BackendError> {
        self.ledger.conditioning_calls += 1;
        self.inner.prepare_conditioning(prompt, segmap)
    }
}
