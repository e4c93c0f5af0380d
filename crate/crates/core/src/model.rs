//! Complete networks, the variant registry and seeded construction.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdan_tensor::{Float, Graph, ParamStore, Scope, Tensor, Var};

use crate::align::AlignNet;
use crate::config::{ModelConfig, Variant};
use crate::reconstruct::SrNet;
use crate::{Error, Result};

/// Result of one forward pass.
pub struct ModelOutput<'g, T: Float> {
    pub hr: Var<'g, T>,
    /// Aligned supporting frames in temporal order, reference excluded.
    /// Empty for variants that do not align.
    pub aligned: Vec<Var<'g, T>>,
}

/// A network family. Every architecture receives the full clip
/// (`2 * radius + 1` frames, reference in the middle) and decides which
/// frames it reads.
pub trait Architecture<T: Float>: Send + Sync {
    fn variant(&self) -> Variant;

    fn forward<'g>(&self, s: Scope<'g, T>, clip: &[Var<'g, T>]) -> Result<ModelOutput<'g, T>>;
}

fn check_clip<T: Float>(clip: &[Var<'_, T>], frames: usize) -> Result<()> {
    if clip.len() != frames {
        return Err(Error::Data(format!("expected a {frames}-frame clip, got {}", clip.len())));
    }
    let shape = clip[0].shape();
    if let Some(bad) = clip.iter().find(|f| f.shape() != shape) {
        return Err(Error::Data(format!("clip frames differ in shape: {} vs {}", shape, bad.shape())));
    }
    Ok(())
}

/// Aligns every supporting frame, then reconstructs from
/// `[I'_{t-N}, .., I_t, .., I'_{t+N}]`.
pub struct TdanNet {
    radius: usize,
    align: AlignNet,
    sr: SrNet,
}

impl<T: Float> Architecture<T> for TdanNet {
    fn variant(&self) -> Variant {
        Variant::Tdan
    }

    fn forward<'g>(&self, s: Scope<'g, T>, clip: &[Var<'g, T>]) -> Result<ModelOutput<'g, T>> {
        check_clip(clip, 2 * self.radius + 1)?;
        let t = self.radius;
        let f_ref = self.align.extract_features(s, &clip[t])?;
        let mut aligned = Vec::with_capacity(2 * self.radius);
        let mut sr_in = Vec::with_capacity(clip.len());
        for (i, frame) in clip.iter().enumerate() {
            if i == t {
                sr_in.push(frame.clone());
            } else {
                let a = self.align.align_with(s, &f_ref, frame)?.frame;
                sr_in.push(a.clone());
                aligned.push(a);
            }
        }
        Ok(ModelOutput { hr: self.sr.forward(s, &sr_in)?, aligned })
    }
}

/// Raw frames concatenated without alignment.
pub struct MfsrNet {
    radius: usize,
    sr: SrNet,
}

impl<T: Float> Architecture<T> for MfsrNet {
    fn variant(&self) -> Variant {
        Variant::Mfsr
    }

    fn forward<'g>(&self, s: Scope<'g, T>, clip: &[Var<'g, T>]) -> Result<ModelOutput<'g, T>> {
        check_clip(clip, 2 * self.radius + 1)?;
        Ok(ModelOutput { hr: self.sr.forward(s, clip)?, aligned: Vec::new() })
    }
}

/// Reference frame only; supporting frames are never read.
pub struct SisrNet {
    radius: usize,
    sr: SrNet,
}

impl<T: Float> Architecture<T> for SisrNet {
    fn variant(&self) -> Variant {
        Variant::Sisr
    }

    fn forward<'g>(&self, s: Scope<'g, T>, clip: &[Var<'g, T>]) -> Result<ModelOutput<'g, T>> {
        check_clip(clip, 2 * self.radius + 1)?;
        let reference = clip[self.radius].clone();
        Ok(ModelOutput { hr: self.sr.forward(s, &[reference])?, aligned: Vec::new() })
    }
}

/// Registers the parameters for `config` and returns the matching network.
pub fn build_architecture<T: Float>(
    config: &ModelConfig,
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Architecture<T>>> {
    config.validate()?;
    let c = config;
    Ok(match c.variant {
        Variant::Tdan => {
            let align = AlignNet::register(store, c.k1, c.channels, c.depth, rng)?;
            let sr = SrNet::register(store, c.frames(), c.k2, c.channels, c.scale, rng)?;
            Box::new(TdanNet { radius: c.radius, align, sr })
        }
        Variant::Mfsr => {
            let sr = SrNet::register(store, c.frames(), c.k2, c.channels, c.scale, rng)?;
            Box::new(MfsrNet { radius: c.radius, sr })
        }
        Variant::Sisr => {
            let sr = SrNet::register(store, 1, c.k2, c.channels, c.scale, rng)?;
            Box::new(SisrNet { radius: c.radius, sr })
        }
    })
}

/// Parameters plus the network that reads them.
pub struct Model<T: Float> {
    config: ModelConfig,
    pub params: ParamStore<T>,
    arch: Box<dyn Architecture<T>>,
}

impl<T: Float> Model<T> {
    /// Deterministic in `seed`: conv weights fan-in uniform, biases zero,
    /// offset convs zero.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arch = build_architecture(&config, &mut params, &mut rng)?;
        Ok(Self { config, params, arch })
    }

    /// Wraps existing parameters; their names and shapes must be exactly
    /// those `config` registers.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut fresh = ParamStore::new();
        let arch = build_architecture(&config, &mut fresh, &mut ChaCha8Rng::seed_from_u64(0))?;
        if fresh.len() != params.len() {
            return Err(Error::Checkpoint(format!("expected {} parameters, found {}", fresh.len(), params.len())));
        }
        for ((_, want), (_, got)) in fresh.iter().zip(params.iter()) {
            if want.name() != got.name() || want.shape() != got.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected `{}` {}, found `{}` {}",
                    want.name(),
                    want.shape(),
                    got.name(),
                    got.shape()
                )));
            }
        }
        Ok(Self { config, params, arch })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.arch.variant()
    }

    pub fn forward<'g>(&'g self, graph: &'g Graph<T>, clip: &[Var<'g, T>]) -> Result<ModelOutput<'g, T>> {
        self.arch.forward(Scope::new(graph, &self.params), clip)
    }

    /// Forward pass without gradient bookkeeping. Returns the HR estimate
    /// and the aligned supporting frames.
    pub fn infer(&self, clip: &[Tensor<T>]) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        let g = Graph::no_grad();
        let vars: Vec<_> = clip.iter().map(|f| g.constant(f.clone())).collect();
        let out = self.forward(&g, &vars)?;
        Ok((out.hr.into_value(), out.aligned.into_iter().map(Var::into_value).collect()))
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    /// Scalar count per top-level group (`tdan.feat`, `sr.res3`, ...).
    pub fn param_breakdown(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (_, p) in self.params.iter() {
            let mut parts = p.name().split('.');
            let key = match (parts.next(), parts.next()) {
                (Some(a), Some(b)) if !matches!(b, "weight" | "bias") => format!("{a}.{b}"),
                (Some(a), _) => a.to_string(),
                _ => unreachable!(),
            };
            *out.entry(key).or_insert(0) += p.value().numel();
        }
        out
    }

    /// Same network with parameters converted to another precision.
    pub fn cast<U: Float>(&self) -> Model<U> {
        let mut scratch = ParamStore::new();
        let arch = build_architecture::<U>(&self.config, &mut scratch, &mut ChaCha8Rng::seed_from_u64(0))
            .expect("config was already validated");
        Model { config: self.config, params: self.params.cast(), arch }
    }
}

/// A named model configuration selectable at runtime.
pub trait VariantPreset: Send + Sync {
    fn name(&self) -> &str;
    fn describe(&self) -> String;
    /// Derives the preset's configuration from a base configuration.
    fn apply(&self, base: &ModelConfig) -> ModelConfig;
}

struct FamilyPreset(Variant);

impl VariantPreset for FamilyPreset {
    fn name(&self) -> &str {
        self.0.as_str()
    }

    fn describe(&self) -> String {
        match self.0 {
            Variant::Tdan => "deformable alignment, depth from the base config".into(),
            Variant::Mfsr => "raw frames concatenated, no alignment".into(),
            Variant::Sisr => "reference frame only".into(),
        }
    }

    fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig { variant: self.0, ..*base }
    }
}

struct DepthPreset {
    name: String,
    depth: usize,
}

impl VariantPreset for DepthPreset {
    fn name(&self) -> &str {
        &self.name
    }

    fn describe(&self) -> String {
        format!("deformable alignment with {} cascade layers", self.depth)
    }

    fn apply(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig { variant: Variant::Tdan, depth: self.depth, ..*base }
    }
}

/// Name -> preset lookup.
pub struct VariantRegistry {
    presets: Vec<Box<dyn VariantPreset>>,
}

impl Default for VariantRegistry {
    /// `tdan`, `mfsr`, `sisr` and `d2` .. `d5`.
    fn default() -> Self {
        let mut r = Self::empty();
        for v in Variant::ALL {
            r.register(Box::new(FamilyPreset(v)));
        }
        for depth in 2..=5 {
            r.register(Box::new(DepthPreset { name: format!("d{depth}"), depth }));
        }
        r
    }
}

impl VariantRegistry {
    pub fn empty() -> Self {
        Self { presets: Vec::new() }
    }

    /// Later registrations shadow earlier ones with the same name.
    pub fn register(&mut self, preset: Box<dyn VariantPreset>) {
        self.presets.retain(|p| p.name() != preset.name());
        self.presets.push(preset);
    }

    pub fn names(&self) -> Vec<&str> {
        self.presets.iter().map(|p| p.name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn VariantPreset> {
        self.presets
            .iter()
            .find(|p| p.name() == name)
            .map(|p| p.as_ref())
            .ok_or_else(|| Error::Config(format!("unknown variant `{name}` (known: {})", self.names().join(", "))))
    }

    /// Resolves and validates a preset against `base`.
    pub fn resolve(&self, name: &str, base: &ModelConfig) -> Result<ModelConfig> {
        let cfg = self.get(name)?.apply(base);
        cfg.validate()?;
        Ok(cfg)
    }
}
