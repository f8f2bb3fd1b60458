//! GAN backends for synthesizing extra training images.

mod checkpoint;
pub mod nets;

use std::path::Path;
use std::time::Instant;

use gutcheck_nn::{derive_seed, rng::normal_tensor, stream, Adam, AdamConfig, ForwardCtx, Graph, ParamStore, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use nets::{audit_dcgan_layers, Discriminator, Generator, NoiseSource};

use crate::augment::{diff_augment, DiffAugmentPolicy};
use crate::dataset::{ImageSample, Source};
use crate::fid::{extract_features, fit_gaussian, frechet_distance, FeatureExtractor, FeatureStats};
use crate::label::{ClassSet, LabelClass};
use crate::pixels::{batch_tensor, standardize_pixels, Pixels};
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Dcgan,
    Cgan,
    Stylegan2Diffaug,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Dcgan => "dcgan",
            Backend::Cgan => "cgan",
            Backend::Stylegan2Diffaug => "stylegan2_diffaug",
        }
    }

    pub fn parse(s: &str) -> Result<Self, Error> {
        match s {
            "dcgan" => Ok(Backend::Dcgan),
            "cgan" => Ok(Backend::Cgan),
            "stylegan2_diffaug" | "stylegan2" => Ok(Backend::Stylegan2Diffaug),
            other => Err(Error::InvalidInput(format!("unknown GAN backend `{other}`"))),
        }
    }

    pub fn is_conditional(self) -> bool {
        self == Backend::Cgan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub backend: Backend,
    /// Output side length: 32, 64 or 128.
    pub resolution: usize,
    pub latent_dim: usize,
    /// Base channel count of both networks.
    pub width: usize,
    pub batch_size: usize,
    pub lr_g: f32,
    pub lr_d: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub steps: u64,
    pub seed: u64,
    pub diffaugment: Option<DiffAugmentPolicy>,
    /// Classes of a conditional model, in label-index order.
    pub classes: ClassSet,
    pub embed_dim: usize,
    /// Weight of the real-data gradient penalty (style backend only).
    pub r1_gamma: f32,
    /// The penalty is applied every this many steps, scaled up accordingly.
    pub r1_interval: u64,
    pub ema_decay: f32,
    pub log_every: u64,
    pub checkpoint_every: u64,
}

impl GanConfig {
    pub fn new(backend: Backend) -> Self {
        let style = backend == Backend::Stylegan2Diffaug;
        GanConfig {
            backend,
            resolution: 64,
            latent_dim: if style { 64 } else { 100 },
            width: 32,
            batch_size: 32,
            lr_g: 2e-4,
            lr_d: 2e-4,
            beta1: if style { 0.0 } else { 0.5 },
            beta2: 0.99,
            steps: 1000,
            seed: 0,
            diffaugment: style.then(DiffAugmentPolicy::default),
            classes: ClassSet::three(),
            embed_dim: 16,
            r1_gamma: if style { 10.0 } else { 0.0 },
            r1_interval: 16,
            ema_decay: 0.999,
            log_every: 10,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if ![32, 64, 128].contains(&self.resolution) {
            return Err(Error::Config(format!("resolution must be 32, 64 or 128, got {}", self.resolution)));
        }
        if self.latent_dim == 0 || self.width == 0 || self.batch_size < 2 {
            return Err(Error::Config("latent_dim and width must be ≥ 1, batch_size ≥ 2".into()));
        }
        if self.backend == Backend::Stylegan2Diffaug && self.diffaugment.is_none() {
            return Err(Error::Config("the stylegan2_diffaug backend requires a DiffAugment policy".into()));
        }
        if self.r1_interval == 0 {
            return Err(Error::Config("r1_interval must be ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub d_loss: f32,
    pub g_loss: f32,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
    /// `(step, fid)` pairs from the optional probe.
    pub fid: Vec<(u64, f64)>,
    /// Steps whose update was skipped because a loss was not finite.
    pub skipped_steps: Vec<u64>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,d_loss,g_loss,seconds\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{:.3}\n", e.step, e.d_loss, e.g_loss, e.seconds));
        }
        s
    }

    pub fn losses(&self) -> Vec<(u64, f32, f32)> {
        self.entries.iter().map(|e| (e.step, e.d_loss, e.g_loss)).collect()
    }
}

/// A generator ready for sampling, plus what is needed to resume training.
#[derive(Debug, Clone)]
pub struct GeneratorState {
    pub config: GanConfig,
    pub step: u64,
    pub generator: ParamStore,
    /// Exponential moving average of the generator weights; used for sampling when present.
    pub ema: Option<ParamStore>,
    pub discriminator: Option<ParamStore>,
}

impl GeneratorState {
    /// Freshly initialized networks for `config`.
    pub fn init(config: &GanConfig) -> Result<(Self, Generator, Discriminator), Error> {
        config.validate()?;
        let mut gs = ParamStore::new();
        let mut ds = ParamStore::new();
        let gen = Generator::build(config, &mut gs, &mut stream(&[config.seed, 0x9e4]));
        let disc = Discriminator::build(config, &mut ds, &mut stream(&[config.seed, 0xd15]));
        let ema = (config.backend == Backend::Stylegan2Diffaug).then(|| gs.clone());
        Ok((
            GeneratorState {
                config: config.clone(),
                step: 0,
                generator: gs,
                ema,
                discriminator: Some(ds),
            },
            gen,
            disc,
        ))
    }

    /// The network structure matching `self.config`.
    pub fn networks(&self) -> Result<(Generator, Discriminator), Error> {
        let (_, g, d) = Self::init(&self.config)?;
        Ok((g, d))
    }
}

/// Non-saturating logistic losses averaged over the batch:
/// `d = softplus(d_fake) + softplus(-d_real)`, `g = softplus(-d_fake)`.
pub fn gan_losses(d_real: &[f32], d_fake: &[f32]) -> Result<(f64, f64), Error> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::InvalidInput("empty logit batch".into()));
    }
    if !d_real.iter().chain(d_fake).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite discriminator logits".into()));
    }
    let sp = |v: f64| if v > 30.0 { v } else { v.exp().ln_1p() };
    let mean = |v: &[f32], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x as f64)).sum::<f64>() / v.len() as f64;
    let d = mean(d_fake, &|x| sp(x)) + mean(d_real, &|x| sp(-x));
    let g = mean(d_fake, &|x| sp(-x));
    Ok((d, g))
}

fn mean_softplus(g: &mut Graph, x: Var, negate: bool) -> Var {
    let x = if negate { g.neg(x) } else { x };
    let s = g.softplus(x);
    g.mean(s)
}

/// Converts standardized images to the generator's resolution and range [-1, 1].
fn to_model_range(images: &[ImageSample], resolution: usize) -> Vec<Pixels> {
    images.iter().map(|s| area_downsample(&s.pixels, resolution)).collect()
}

/// Box-filter downsampling by an integer factor; falls back to bilinear otherwise.
pub fn area_downsample(p: &Pixels, side: usize) -> Pixels {
    if p.height == side && p.width == side {
        return p.clone();
    }
    if p.height % side != 0 || p.width % side != 0 {
        return p.resize(side, side);
    }
    let (fy, fx) = (p.height / side, p.width / side);
    let mut out = Pixels::filled(side, side, [0.0; 3]);
    let norm = 1.0 / (fy * fx) as f32;
    for y in 0..p.height {
        for x in 0..p.width {
            for c in 0..3 {
                let (oy, ox) = (y / fy, x / fx);
                let v = out.get(oy, ox, c) + p.get(y, x, c) * norm;
                out.set(oy, ox, c, v);
            }
        }
    }
    out
}

/// Optional FID measurement during training.
pub struct FidProbe<'a> {
    pub every: u64,
    pub n: usize,
    pub seed: u64,
    pub extractor: &'a dyn FeatureExtractor,
    pub real: FeatureStats,
}

impl FidProbe<'_> {
    fn measure(&self, state: &GeneratorState, gen: &Generator, label: Option<LabelClass>) -> Result<f64, Error> {
        let fakes = sample_with(state, gen, self.n, self.seed, label)?;
        let refs: Vec<&Pixels> = fakes.iter().map(|s| &s.pixels).collect();
        let stats = fit_gaussian(&extract_features(&refs, self.extractor)?)?;
        frechet_distance(&self.real, &stats)
    }
}

/// Trains with alternating discriminator and generator updates.
///
/// Conditional models take labels from the samples; unconditional ones ignore them.
pub fn train_gan(images: &[ImageSample], config: &GanConfig) -> Result<(GeneratorState, TrainingLog), Error> {
    train_gan_with(images, config, None, None)
}

pub fn train_gan_with(
    images: &[ImageSample],
    config: &GanConfig,
    probe: Option<&FidProbe>,
    checkpoint_dir: Option<&Path>,
) -> Result<(GeneratorState, TrainingLog), Error> {
    config.validate()?;
    if images.len() < 16 {
        return Err(Error::InvalidInput(format!("GAN training needs at least 16 images, got {}", images.len())));
    }
    let labels: Vec<usize> = if config.backend.is_conditional() {
        images
            .iter()
            .map(|s| {
                config
                    .classes
                    .index_of(s.label)
                    .ok_or_else(|| Error::InvalidInput(format!("label {} not in the GAN's classes", s.label)))
            })
            .collect::<Result<_, _>>()?
    } else {
        vec![0; images.len()]
    };
    let real: Vec<Pixels> = to_model_range(images, config.resolution);
    let (mut state, gen, disc) = GeneratorState::init(config)?;
    let mut dstore = state.discriminator.take().expect("fresh discriminator");
    let adam = |lr: f32| AdamConfig {
        lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: 1e-8,
    };
    let mut opt_g = Adam::new(adam(config.lr_g), &state.generator);
    let mut opt_d = Adam::new(adam(config.lr_d), &dstore);
    let policy = config.diffaugment.clone().filter(|p| !p.is_empty());
    let probe_label = config.backend.is_conditional().then(|| config.classes.get(0)).flatten();
    let mut log = TrainingLog::default();
    let started = Instant::now();
    let mut streak = 0u32;
    let bs = config.batch_size;
    let latent = config.latent_dim;

    if let Some(p) = probe {
        log.fid.push((0, p.measure(&state, &gen, probe_label)?));
    }

    for step in 0..config.steps {
        let s = config.seed;
        // discriminator update
        let mut rng = stream(&[s, step, 0x1d]);
        let idx: Vec<usize> = (0..bs).map(|_| rng.random_range(0..real.len())).collect();
        let batch_labels: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let cond = config.backend.is_conditional().then_some(batch_labels.as_slice());
        let pix: Vec<&Pixels> = idx.iter().map(|&i| &real[i]).collect();
        let real_t = batch_tensor(&pix, 1.0 / 127.5, -1.0);
        let z = normal_tensor(&mut stream(&[s, step, 0x2a]), &[bs, latent], 1.0);
        let aug_seed = derive_seed(&[s, step, 0xa06]);

        let mut g = Graph::new();
        let gp = state.generator.bind(&mut g, false);
        let dp = dstore.bind(&mut g, true);
        let zv = g.constant(z);
        let noise = NoiseSource {
            base: derive_seed(&[s, step, 0x4e1]),
            first_sample: 0,
        };
        let mut gctx = ForwardCtx::eval();
        gctx.train = true;
        let fake = gen.forward(&mut g, &gp, zv, cond, &noise, &mut gctx);
        let fake = g.constant(g.value(fake).clone());
        let real_v = g.constant(real_t.clone());
        let (real_in, fake_in) = match &policy {
            Some(p) => (
                diff_augment(&mut g, real_v, p, aug_seed)?,
                diff_augment(&mut g, fake, p, aug_seed)?,
            ),
            None => (real_v, fake),
        };
        let mut dctx = ForwardCtx::eval();
        dctx.train = true;
        let d_real = disc.forward(&mut g, &dp, real_in, cond, &mut dctx);
        let d_fake = disc.forward(&mut g, &dp, fake_in, cond, &mut dctx);
        let l_real = mean_softplus(&mut g, d_real, true);
        let l_fake = mean_softplus(&mut g, d_fake, false);
        let mut d_loss = g.add(l_real, l_fake);
        let d_loss_value = g.value(d_loss).item();
        if config.r1_gamma > 0.0 && step % config.r1_interval == 0 {
            let pen = r1_penalty(&mut g, &disc, &dp, &real_t, cond, policy.as_ref(), aug_seed, &mut rng, &mut dctx)?;
            let w = g.scale(pen, config.r1_gamma * 0.5 * config.r1_interval as f32);
            d_loss = g.add(d_loss, w);
        }
        let d_total = g.value(d_loss).item();
        let d_grads = d_total.is_finite().then(|| g.backward(d_loss));
        drop(gctx);

        // generator update
        let z2 = normal_tensor(&mut stream(&[s, step, 0x2b]), &[bs, latent], 1.0);
        let gen_labels: Vec<usize> = {
            let mut r = stream(&[s, step, 0x1e]);
            (0..bs).map(|_| labels[r.random_range(0..real.len())]).collect()
        };
        let cond2 = config.backend.is_conditional().then_some(gen_labels.as_slice());
        let mut g2 = Graph::new();
        let gp2 = state.generator.bind(&mut g2, true);
        let dp2 = dstore.bind(&mut g2, false);
        let zv2 = g2.constant(z2);
        let noise2 = NoiseSource {
            base: derive_seed(&[s, step, 0x4e2]),
            first_sample: 0,
        };
        let mut gctx2 = ForwardCtx::eval();
        gctx2.train = true;
        let fake2 = gen.forward(&mut g2, &gp2, zv2, cond2, &noise2, &mut gctx2);
        let fake2_in = match &policy {
            Some(p) => diff_augment(&mut g2, fake2, p, derive_seed(&[s, step, 0xa07]))?,
            None => fake2,
        };
        let mut dctx2 = ForwardCtx::eval();
        dctx2.train = true;
        let d_fake2 = disc.forward(&mut g2, &dp2, fake2_in, cond2, &mut dctx2);
        let g_loss = mean_softplus(&mut g2, d_fake2, true);
        let g_loss_value = g2.value(g_loss).item();

        if let Some(grads) = d_grads.filter(|_| g_loss_value.is_finite()) {
            opt_d.update(&mut dstore, &grads, &dp);
            dctx.commit(&mut dstore);
            let gg = g2.backward(g_loss);
            opt_g.update(&mut state.generator, &gg, &gp2);
            gctx2.commit(&mut state.generator);
            if let Some(ema) = state.ema.as_mut() {
                ema.ema_update(&state.generator, config.ema_decay);
            }
            streak = 0;
        } else {
            streak += 1;
            log.skipped_steps.push(step);
            if streak >= 100 {
                return Err(Error::GanDivergence {
                    step,
                    streak,
                    log: Box::new(log),
                });
            }
        }
        state.step = step + 1;

        if step % config.log_every.max(1) == 0 || step + 1 == config.steps {
            log.entries.push(LogEntry {
                step,
                d_loss: d_loss_value,
                g_loss: g_loss_value,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
        if let Some(p) = probe {
            if p.every > 0 && (step + 1) % p.every == 0 {
                log.fid.push((step + 1, p.measure(&state, &gen, probe_label)?));
            }
        }
        if let Some(dir) = checkpoint_dir {
            if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
                state.discriminator = Some(dstore.clone());
                save_checkpoint(dir, &state, &log)?;
                state.discriminator = None;
            }
        }
    }
    state.discriminator = Some(dstore);
    if let Some(dir) = checkpoint_dir {
        save_checkpoint(dir, &state, &log)?;
    }
    Ok((state, log))
}

/// Finite-difference estimate of the squared gradient norm of D at real images:
/// `mean(((D(x + εu) - D(x - εu)) / 2ε)²)` with `u ~ N(0, I)`, whose
/// expectation is `E‖∇D(x)‖²` up to O(ε²).
#[allow(clippy::too_many_arguments)]
fn r1_penalty(
    g: &mut Graph,
    disc: &Discriminator,
    dp: &gutcheck_nn::Bound,
    real: &gutcheck_nn::Tensor,
    cond: Option<&[usize]>,
    policy: Option<&DiffAugmentPolicy>,
    aug_seed: u64,
    rng: &mut gutcheck_nn::StreamRng,
    ctx: &mut ForwardCtx,
) -> Result<Var, Error> {
    const EPS: f32 = 1e-2;
    let u = normal_tensor(rng, real.shape(), EPS);
    let plus: Vec<f32> = real.data().iter().zip(u.data()).map(|(a, b)| a + b).collect();
    let minus: Vec<f32> = real.data().iter().zip(u.data()).map(|(a, b)| a - b).collect();
    let mut outs = Vec::with_capacity(2);
    for data in [plus, minus] {
        let v = g.constant(gutcheck_nn::Tensor::new(real.shape(), data));
        let v = match policy {
            Some(p) => diff_augment(g, v, p, aug_seed)?,
            None => v,
        };
        outs.push(disc.forward(g, dp, v, cond, ctx));
    }
    let diff = g.sub(outs[0], outs[1]);
    let slope = g.scale(diff, 1.0 / (2.0 * EPS));
    let sq = g.square(slope);
    Ok(g.mean(sq))
}

fn sample_with(
    state: &GeneratorState,
    gen: &Generator,
    n: usize,
    seed: u64,
    label: Option<LabelClass>,
) -> Result<Vec<ImageSample>, Error> {
    let cfg = &state.config;
    let label_idx = match (cfg.backend.is_conditional(), label) {
        (true, Some(l)) => Some(
            cfg.classes
                .index_of(l)
                .ok_or_else(|| Error::Usage(format!("the generator was not trained on class {l}")))?,
        ),
        (true, None) => return Err(Error::Usage("a conditional generator needs a label".into())),
        (false, Some(_)) => return Err(Error::Usage("labels only apply to the cgan backend".into())),
        (false, None) => None,
    };
    let params = state.ema.as_ref().unwrap_or(&state.generator);
    let res = cfg.resolution;
    let mut out = Vec::with_capacity(n);
    let mut zrng = stream(&[seed, 0x5a]);
    let z_all = normal_tensor(&mut zrng, &[n, cfg.latent_dim], 1.0);
    for start in (0..n).step_by(32) {
        let m = (n - start).min(32);
        let z = gutcheck_nn::Tensor::new(
            &[m, cfg.latent_dim],
            z_all.data()[start * cfg.latent_dim..(start + m) * cfg.latent_dim].to_vec(),
        );
        let labels = label_idx.map(|l| vec![l; m]);
        let mut g = Graph::new();
        let p = params.bind(&mut g, false);
        let zv = g.constant(z);
        let noise = NoiseSource {
            base: derive_seed(&[seed, 0x4e5]),
            first_sample: start,
        };
        let y = gen.forward(&mut g, &p, zv, labels.as_deref(), &noise, &mut ForwardCtx::eval());
        let t = g.value(y);
        let plane = 3 * res * res;
        for i in 0..m {
            let chw = &t.data()[i * plane..(i + 1) * plane];
            let mut px = Pixels::from_chw(res, res, chw, 127.5, 127.5);
            for v in &mut px.data {
                *v = v.clamp(0.0, 255.0);
            }
            out.push(ImageSample {
                id: format!("gan/{}/{seed}_{}", label.map_or("any", |l| l.as_str()), start + i),
                label: label.unwrap_or(LabelClass::Normal),
                source: Source::Gan,
                pixels: standardize_pixels(&px),
            });
        }
    }
    Ok(out)
}

/// `n` generated images mapped from [-1, 1] to [0, 255] and resized to 128×128.
///
/// `label` is required for the conditional backend and rejected otherwise.
/// Unconditional samples carry the label `normal` as a placeholder; callers
/// assign the class their generator was trained on.
pub fn sample(state: &GeneratorState, n: usize, seed: u64, label: Option<LabelClass>) -> Result<Vec<ImageSample>, Error> {
    let (gen, _) = state.networks()?;
    sample_with(state, &gen, n, seed, label)
}

/// Generator output in [-1, 1] at the native resolution, before mapping to pixels.
pub fn sample_raw(
    state: &GeneratorState,
    n: usize,
    seed: u64,
    label: Option<LabelClass>,
) -> Result<gutcheck_nn::Tensor, Error> {
    let (gen, _) = state.networks()?;
    let cfg = &state.config;
    let label_idx = label.and_then(|l| cfg.classes.index_of(l));
    let z = normal_tensor(&mut stream(&[seed, 0x5a]), &[n, cfg.latent_dim], 1.0);
    let mut g = Graph::new();
    let p = state.ema.as_ref().unwrap_or(&state.generator).bind(&mut g, false);
    let zv = g.constant(z);
    let labels = label_idx.map(|l| vec![l; n]);
    let noise = NoiseSource {
        base: derive_seed(&[seed, 0x4e5]),
        first_sample: 0,
    };
    let y = gen.forward(&mut g, &p, zv, labels.as_deref(), &noise, &mut ForwardCtx::eval());
    Ok(g.value(y).clone())
}
