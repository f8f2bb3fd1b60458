//! Generator and discriminator networks of the three backends.

use gutcheck_nn::{
    layers::Init, rng::normal_tensor, stream, Bound, ForwardCtx, Graph, LayerSpec, ParamId, ParamStore, Sequential,
    StreamRng, Tensor, Var,
};

use super::{Backend, GanConfig};
use crate::Error;

const SLOPE: f32 = 0.2;
const DCGAN_INIT: Init = Init::Normal(0.02);

/// Per-sample noise for noise-injection layers.
///
/// Each (layer, sample) pair has its own stream, so results do not depend on batching.
pub struct NoiseSource {
    pub base: u64,
    pub first_sample: usize,
}

impl NoiseSource {
    pub fn tensor(&self, layer: usize, n: usize, h: usize, w: usize) -> Tensor {
        let mut data = Vec::with_capacity(n * h * w);
        for s in 0..n {
            let mut rng = stream(&[self.base, layer as u64, (self.first_sample + s) as u64]);
            data.extend(normal_tensor(&mut rng, &[h * w], 1.0).into_data());
        }
        Tensor::new(&[n, 1, h, w], data)
    }
}

fn stages(resolution: usize) -> usize {
    resolution.trailing_zeros() as usize - 2
}

/// Transposed-convolution generator body: 1×1 → 4×4, then doubling up to the output resolution.
pub fn dcgan_generator_layers(in_features: usize, resolution: usize, width: usize) -> Vec<LayerSpec> {
    let s = stages(resolution);
    let ch = |i: usize| width << (s - 1 - i);
    let mut l = vec![
        LayerSpec::ConvTranspose2d {
            in_ch: in_features,
            out_ch: ch(0),
            kernel: 4,
            stride: 1,
            pad: 0,
            bias: false,
        },
        LayerSpec::BatchNorm2d {
            channels: ch(0),
            eps: 1e-5,
            momentum: 0.1,
        },
        LayerSpec::Relu,
    ];
    for i in 1..s {
        l.push(LayerSpec::ConvTranspose2d {
            in_ch: ch(i - 1),
            out_ch: ch(i),
            kernel: 4,
            stride: 2,
            pad: 1,
            bias: false,
        });
        l.push(LayerSpec::BatchNorm2d {
            channels: ch(i),
            eps: 1e-5,
            momentum: 0.1,
        });
        l.push(LayerSpec::Relu);
    }
    l.push(LayerSpec::ConvTranspose2d {
        in_ch: ch(s - 1),
        out_ch: 3,
        kernel: 4,
        stride: 2,
        pad: 1,
        bias: true,
    });
    l.push(LayerSpec::Tanh);
    l
}

/// Strided-convolution discriminator trunk down to 4×4, then a 4×4 valid convolution to `out` channels.
pub fn dcgan_discriminator_layers(resolution: usize, width: usize, out: usize) -> Vec<LayerSpec> {
    let mut l = vec![
        LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: width,
            kernel: 4,
            stride: 2,
            pad: 1,
            bias: true,
        },
        LayerSpec::LeakyRelu { slope: SLOPE },
    ];
    let (mut res, mut ch) = (resolution / 2, width);
    while res > 4 {
        l.push(LayerSpec::Conv2d {
            in_ch: ch,
            out_ch: ch * 2,
            kernel: 4,
            stride: 2,
            pad: 1,
            bias: false,
        });
        l.push(LayerSpec::BatchNorm2d {
            channels: ch * 2,
            eps: 1e-5,
            momentum: 0.1,
        });
        l.push(LayerSpec::LeakyRelu { slope: SLOPE });
        res /= 2;
        ch *= 2;
    }
    l.push(LayerSpec::Conv2d {
        in_ch: ch,
        out_ch: out,
        kernel: 4,
        stride: 1,
        pad: 0,
        bias: true,
    });
    l.push(LayerSpec::Flatten);
    l
}

/// Rejects pooling and dense layers; downsampling must be strided and upsampling transposed.
pub fn audit_dcgan_layers(layers: &[LayerSpec]) -> Result<(), Error> {
    for (i, l) in layers.iter().enumerate() {
        match l {
            LayerSpec::MaxPool2d { .. } => {
                return Err(Error::Unsupported(format!("layer {i} is a max-pool")));
            }
            LayerSpec::Dense { .. } => {
                return Err(Error::Unsupported(format!("layer {i} is fully connected")));
            }
            _ => {}
        }
    }
    Ok(())
}

pub enum Generator {
    /// DCGAN, or CGAN when `embed` is set.
    Conv {
        net: Sequential,
        embed: Option<ParamId>,
        num_classes: usize,
    },
    Style(StyleGenerator),
}

pub enum Discriminator {
    Conv(Sequential),
    /// Convolutional trunk with a linear head plus a label projection term.
    Projection {
        trunk: Sequential,
        head_w: ParamId,
        head_b: ParamId,
        embed: ParamId,
    },
    Style(StyleDiscriminator),
}

fn one_hot(labels: &[usize], n: usize) -> Tensor {
    let mut t = vec![0.0; labels.len() * n];
    for (i, &l) in labels.iter().enumerate() {
        t[i * n + l] = 1.0;
    }
    Tensor::new(&[labels.len(), n], t)
}

impl Generator {
    pub fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut StreamRng) -> Self {
        match cfg.backend {
            Backend::Dcgan => Generator::Conv {
                net: Sequential::build(
                    dcgan_generator_layers(cfg.latent_dim, cfg.resolution, cfg.width),
                    store,
                    "g",
                    DCGAN_INIT,
                    rng,
                ),
                embed: None,
                num_classes: 0,
            },
            Backend::Cgan => {
                let nc = cfg.classes.len();
                let embed = store.add("g.embed", normal_tensor(rng, &[nc, cfg.embed_dim], 1.0), true);
                let net = Sequential::build(
                    dcgan_generator_layers(cfg.latent_dim + cfg.embed_dim, cfg.resolution, cfg.width),
                    store,
                    "g",
                    DCGAN_INIT,
                    rng,
                );
                Generator::Conv {
                    net,
                    embed: Some(embed),
                    num_classes: nc,
                }
            }
            Backend::Stylegan2Diffaug => Generator::Style(StyleGenerator::build(cfg, store, rng)),
        }
    }

    /// Images in [-1, 1] of shape (N, 3, R, R) from latents (N, L).
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        labels: Option<&[usize]>,
        noise: &NoiseSource,
        ctx: &mut ForwardCtx,
    ) -> Var {
        match self {
            Generator::Conv { net, embed, num_classes } => {
                let mut h = z;
                if let Some(e) = embed {
                    let labels = labels.expect("conditional generator needs labels");
                    let oh = g.constant(one_hot(labels, *num_classes));
                    let emb = g.matmul(oh, p.var(*e));
                    h = g.concat(&[z, emb], 1);
                }
                let s = g.shape(h).to_vec();
                let h = g.reshape(h, &[s[0], s[1], 1, 1]);
                net.forward(g, p, h, ctx)
            }
            Generator::Style(sg) => sg.forward(g, p, z, noise),
        }
    }

    pub fn layer_specs(&self) -> Option<&[LayerSpec]> {
        match self {
            Generator::Conv { net, .. } => Some(net.specs()),
            Generator::Style(_) => None,
        }
    }
}

impl Discriminator {
    pub fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut StreamRng) -> Self {
        match cfg.backend {
            Backend::Dcgan => Discriminator::Conv(Sequential::build(
                dcgan_discriminator_layers(cfg.resolution, cfg.width, 1),
                store,
                "d",
                DCGAN_INIT,
                rng,
            )),
            Backend::Cgan => {
                let feat = cfg.width * 4;
                let mut layers = dcgan_discriminator_layers(cfg.resolution, cfg.width, feat);
                let flatten = layers.pop();
                layers.push(LayerSpec::LeakyRelu { slope: SLOPE });
                layers.extend(flatten);
                let trunk = Sequential::build(layers, store, "d", DCGAN_INIT, rng);
                let head_w = store.add("d.head.weight", normal_tensor(rng, &[feat, 1], 0.02), true);
                let head_b = store.add("d.head.bias", Tensor::zeros(&[1, 1]), true);
                let embed = store.add(
                    "d.embed",
                    normal_tensor(rng, &[cfg.classes.len(), feat], 0.02),
                    true,
                );
                Discriminator::Projection {
                    trunk,
                    head_w,
                    head_b,
                    embed,
                }
            }
            Backend::Stylegan2Diffaug => Discriminator::Style(StyleDiscriminator::build(cfg, store, rng)),
        }
    }

    /// One logit per image, shape (N, 1).
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, labels: Option<&[usize]>, ctx: &mut ForwardCtx) -> Var {
        match self {
            Discriminator::Conv(net) => net.forward(g, p, x, ctx),
            Discriminator::Projection {
                trunk,
                head_w,
                head_b,
                embed,
            } => {
                let h = trunk.forward(g, p, x, ctx);
                let lin = g.matmul(h, p.var(*head_w));
                let lin = g.add(lin, p.var(*head_b));
                let labels = labels.expect("conditional discriminator needs labels");
                let nc = g.shape(p.var(*embed))[0];
                let oh = g.constant(one_hot(labels, nc));
                let e = g.matmul(oh, p.var(*embed));
                let prod = g.mul(h, e);
                let proj = g.sum_axes(prod, &[1]);
                g.add(lin, proj)
            }
            Discriminator::Style(sd) => sd.forward(g, p, x),
        }
    }

    pub fn layer_specs(&self) -> Option<&[LayerSpec]> {
        match self {
            Discriminator::Conv(net) => Some(net.specs()),
            Discriminator::Projection { trunk, .. } => Some(trunk.specs()),
            Discriminator::Style(_) => None,
        }
    }
}

/// Weight `(out, in, k, k)` and bias `(1, out, 1, 1)` of a plain convolution.
struct Conv {
    w: ParamId,
    b: Option<ParamId>,
    pad: usize,
}

impl Conv {
    fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, bias: bool, rng: &mut StreamRng) -> Self {
        let std = (2.0 / (cin * k * k) as f32).sqrt();
        let w = store.add(format!("{name}.weight"), normal_tensor(rng, &[cout, cin, k, k], std), true);
        let b = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[1, cout, 1, 1]), true));
        Conv { w, b, pad: k / 2 }
    }

    fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        g.conv2d(x, p.var(self.w), self.b.map(|b| p.var(b)), 1, self.pad)
    }
}

struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn new(store: &mut ParamStore, name: &str, cin: usize, cout: usize, bias_init: f32, rng: &mut StreamRng) -> Self {
        let std = (1.0 / cin as f32).sqrt();
        Dense {
            w: store.add(format!("{name}.weight"), normal_tensor(rng, &[cin, cout], std), true),
            b: store.add(format!("{name}.bias"), Tensor::full(&[1, cout], bias_init), true),
        }
    }

    fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let y = g.matmul(x, p.var(self.w));
        g.add(y, p.var(self.b))
    }
}

/// Convolution whose input channels are scaled per sample by a style vector,
/// optionally followed by output demodulation.
struct ModConv {
    affine: Dense,
    w: ParamId,
    bias: ParamId,
    noise_strength: Option<ParamId>,
    demod: bool,
    k: usize,
}

impl ModConv {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        name: &str,
        wdim: usize,
        cin: usize,
        cout: usize,
        k: usize,
        demod: bool,
        noise: bool,
        rng: &mut StreamRng,
    ) -> Self {
        let affine = Dense::new(store, &format!("{name}.affine"), wdim, cin, 1.0, rng);
        let std = (1.0 / (cin * k * k) as f32).sqrt();
        let w = store.add(format!("{name}.weight"), normal_tensor(rng, &[cout, cin, k, k], std), true);
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[1, cout, 1, 1]), true);
        let noise_strength = noise.then(|| store.add(format!("{name}.noise_strength"), Tensor::zeros(&[1]), true));
        ModConv {
            affine,
            w,
            bias,
            noise_strength,
            demod,
            k,
        }
    }

    fn apply(&self, g: &mut Graph, p: &Bound, x: Var, w: Var, noise: Option<Tensor>) -> Var {
        let xs = g.shape(x).to_vec();
        let (n, cin) = (xs[0], xs[1]);
        let style = self.affine.apply(g, p, w);
        let s4 = g.reshape(style, &[n, cin, 1, 1]);
        let xm = g.mul(x, s4);
        let wv = p.var(self.w);
        let mut y = g.conv2d(xm, wv, None, 1, self.k / 2);
        if self.demod {
            let cout = g.shape(wv)[0];
            let wsq = g.square(wv);
            let wsum = g.sum_axes(wsq, &[2, 3]);
            let wsum = g.reshape(wsum, &[cout, cin]);
            let s2 = g.square(style);
            let d2 = g.matmul_t(s2, wsum, false, true);
            let d2 = g.add_scalar(d2, 1e-8);
            let d = g.powf(d2, -0.5);
            let d4 = g.reshape(d, &[n, cout, 1, 1]);
            y = g.mul(y, d4);
        }
        if let (Some(ns), Some(t)) = (self.noise_strength, noise) {
            let nv = g.constant(t);
            let scaled = g.mul(nv, p.var(ns));
            y = g.add(y, scaled);
        }
        g.add(y, p.var(self.bias))
    }
}

/// Mapping network, constant input, modulated convolutions with noise and skip-connected RGB outputs.
pub struct StyleGenerator {
    mapping: Vec<Dense>,
    constant: ParamId,
    blocks: Vec<(Option<ModConv>, ModConv)>,
    to_rgb: Vec<ModConv>,
}

impl StyleGenerator {
    fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut StreamRng) -> Self {
        let (l, c) = (cfg.latent_dim, cfg.width);
        let mapping = (0..4).map(|i| Dense::new(store, &format!("g.map{i}"), l, l, 0.0, rng)).collect();
        let constant = store.add("g.const", normal_tensor(rng, &[1, c, 4, 4], 1.0), true);
        let mut blocks = Vec::new();
        let mut to_rgb = Vec::new();
        for i in 0..=stages(cfg.resolution) {
            let first = (i > 0).then(|| ModConv::new(store, &format!("g.b{i}.conv0"), l, c, c, 3, true, true, rng));
            let second = ModConv::new(store, &format!("g.b{i}.conv1"), l, c, c, 3, true, true, rng);
            blocks.push((first, second));
            to_rgb.push(ModConv::new(store, &format!("g.b{i}.rgb"), l, c, 3, 1, false, false, rng));
        }
        StyleGenerator {
            mapping,
            constant,
            blocks,
            to_rgb,
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, z: Var, noise: &NoiseSource) -> Var {
        let n = g.shape(z)[0];
        // pixel norm
        let sq = g.square(z);
        let ms = g.mean_axes(sq, &[1]);
        let ms = g.add_scalar(ms, 1e-8);
        let inv = g.powf(ms, -0.5);
        let mut w = g.mul(z, inv);
        for d in &self.mapping {
            let h = d.apply(g, p, w);
            w = g.leaky_relu(h, SLOPE);
        }
        let c = g.shape(p.var(self.constant))[1];
        let zeros = g.constant(Tensor::zeros(&[n, c, 4, 4]));
        let mut x = g.add(zeros, p.var(self.constant));
        let mut rgb: Option<Var> = None;
        let mut layer = 0;
        for ((first, second), to_rgb) in self.blocks.iter().zip(&self.to_rgb) {
            if let Some(conv) = first {
                x = g.upsample_nearest(x, 2);
                let s = g.shape(x).to_vec();
                let nz = noise.tensor(layer, n, s[2], s[3]);
                layer += 1;
                let h = conv.apply(g, p, x, w, Some(nz));
                x = g.leaky_relu(h, SLOPE);
            }
            let s = g.shape(x).to_vec();
            let nz = noise.tensor(layer, n, s[2], s[3]);
            layer += 1;
            let h = second.apply(g, p, x, w, Some(nz));
            x = g.leaky_relu(h, SLOPE);
            let y = to_rgb.apply(g, p, x, w, None);
            rgb = Some(match rgb {
                Some(prev) => {
                    let up = g.upsample_nearest(prev, 2);
                    g.add(up, y)
                }
                None => y,
            });
        }
        g.tanh(rgb.expect("at least one block"))
    }
}

/// Residual discriminator with average-pool downsampling and a minibatch deviation feature.
pub struct StyleDiscriminator {
    from_rgb: Conv,
    blocks: Vec<(Conv, Conv, Conv)>,
    last: Conv,
    fc: Dense,
    out: Dense,
}

impl StyleDiscriminator {
    fn build(cfg: &GanConfig, store: &mut ParamStore, rng: &mut StreamRng) -> Self {
        let c = cfg.width;
        let from_rgb = Conv::new(store, "d.rgb", 3, c, 1, true, rng);
        let blocks = (0..stages(cfg.resolution))
            .map(|i| {
                (
                    Conv::new(store, &format!("d.b{i}.conv0"), c, c, 3, true, rng),
                    Conv::new(store, &format!("d.b{i}.conv1"), c, c, 3, true, rng),
                    Conv::new(store, &format!("d.b{i}.skip"), c, c, 1, false, rng),
                )
            })
            .collect();
        let last = Conv::new(store, "d.last", c + 1, c, 3, true, rng);
        let fc = Dense::new(store, "d.fc", c * 16, c, 0.0, rng);
        let out = Dense::new(store, "d.out", c, 1, 0.0, rng);
        StyleDiscriminator {
            from_rgb,
            blocks,
            last,
            fc,
            out,
        }
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Var {
        let h = self.from_rgb.apply(g, p, x);
        let mut x = g.leaky_relu(h, SLOPE);
        for (c0, c1, skip) in &self.blocks {
            let pooled_in = g.avg_pool2d(x, 2, 2, 0, true);
            let s = skip.apply(g, p, pooled_in);
            let h = c0.apply(g, p, x);
            let h = g.leaky_relu(h, SLOPE);
            let h = c1.apply(g, p, h);
            let h = g.leaky_relu(h, SLOPE);
            let h = g.avg_pool2d(h, 2, 2, 0, true);
            let sum = g.add(h, s);
            x = g.scale(sum, std::f32::consts::FRAC_1_SQRT_2);
        }
        let shape = g.shape(x).to_vec();
        let mu = g.mean_axes(x, &[0]);
        let dev = g.sub(x, mu);
        let sq = g.square(dev);
        let var = g.mean_axes(sq, &[0]);
        let var = g.add_scalar(var, 1e-8);
        let sd = g.sqrt(var);
        let sd = g.mean_axes(sd, &[1, 2, 3]);
        let zeros = g.constant(Tensor::zeros(&[shape[0], 1, shape[2], shape[3]]));
        let feat = g.add(zeros, sd);
        let x = g.concat(&[x, feat], 1);
        let h = self.last.apply(g, p, x);
        let h = g.leaky_relu(h, SLOPE);
        let h = g.flatten(h);
        let h = self.fc.apply(g, p, h);
        let h = g.leaky_relu(h, SLOPE);
        self.out.apply(g, p, h)
    }
}
