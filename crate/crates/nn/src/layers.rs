//! Declarative layer stacks.
//!
//! A network is described by a list of [`LayerSpec`]s that serializes to JSON;
//! [`Sequential::build`] registers the parameters in a [`ParamStore`] and the
//! same spec list can later be re-bound to a store loaded from disk.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::{normal_tensor, uniform_tensor, StreamRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform in ±1/sqrt(fan_in) for weights and biases.
    #[default]
    FanIn,
    /// Weights from N(0, std²), zero biases.
    Normal(f32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    ConvTranspose2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    BatchNorm2d {
        channels: usize,
        eps: f32,
        momentum: f32,
    },
    Relu,
    LeakyRelu {
        slope: f32,
    },
    Tanh,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        in_features: usize,
        out_features: usize,
    },
    Dropout {
        p: f32,
    },
}

impl LayerSpec {
    pub fn is_activation(&self) -> bool {
        matches!(self, LayerSpec::Relu | LayerSpec::LeakyRelu { .. } | LayerSpec::Tanh)
    }
}

#[derive(Debug, Clone)]
enum Bind {
    None,
    Affine { w: ParamId, b: Option<ParamId> },
    Norm { gamma: ParamId, beta: ParamId, mean: ParamId, var: ParamId },
}

/// Mutable state for one forward pass.
pub struct ForwardCtx<'a> {
    pub train: bool,
    pub rng: Option<&'a mut StreamRng>,
    /// Running-statistic updates produced by batch-norm layers in training mode.
    pub stat_updates: Vec<(ParamId, Tensor)>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval() -> Self {
        ForwardCtx {
            train: false,
            rng: None,
            stat_updates: Vec::new(),
        }
    }

    pub fn train(rng: &'a mut StreamRng) -> Self {
        ForwardCtx {
            train: true,
            rng: Some(rng),
            stat_updates: Vec::new(),
        }
    }

    /// Writes collected running statistics into `store`.
    pub fn commit(self, store: &mut ParamStore) {
        for (id, t) in self.stat_updates {
            *store.get_mut(id) = t;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sequential {
    specs: Vec<LayerSpec>,
    binds: Vec<Bind>,
}

impl Sequential {
    /// Registers fresh parameters named `{prefix}.{index}.{kind}` in `store`.
    pub fn build(
        specs: Vec<LayerSpec>,
        store: &mut ParamStore,
        prefix: &str,
        init: Init,
        rng: &mut StreamRng,
    ) -> Self {
        let binds = specs
            .iter()
            .enumerate()
            .map(|(i, spec)| register(spec, store, &format!("{prefix}.{i}"), init, rng))
            .collect();
        Sequential { specs, binds }
    }

    /// Re-binds a spec list to parameters already present in `store`.
    pub fn attach(specs: Vec<LayerSpec>, store: &ParamStore, prefix: &str) -> Result<Self, crate::NnError> {
        let mut binds = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let name = format!("{prefix}.{i}");
            let get = |suffix: &str, shape: Vec<usize>| -> Result<ParamId, crate::NnError> {
                let full = format!("{name}.{suffix}");
                let id = store.id(&full).ok_or_else(|| crate::NnError::MissingTensor(full.clone()))?;
                if store.get(id).shape() != shape.as_slice() {
                    return Err(crate::NnError::ShapeMismatch {
                        name: full,
                        expected: shape,
                        found: store.get(id).shape().to_vec(),
                    });
                }
                Ok(id)
            };
            let bind = match *spec {
                LayerSpec::Conv2d { in_ch, out_ch, kernel, bias, .. } => Bind::Affine {
                    w: get("weight", vec![out_ch, in_ch, kernel, kernel])?,
                    b: if bias { Some(get("bias", vec![1, out_ch, 1, 1])?) } else { None },
                },
                LayerSpec::ConvTranspose2d { in_ch, out_ch, kernel, bias, .. } => Bind::Affine {
                    w: get("weight", vec![in_ch, out_ch, kernel, kernel])?,
                    b: if bias { Some(get("bias", vec![1, out_ch, 1, 1])?) } else { None },
                },
                LayerSpec::Dense { in_features, out_features } => Bind::Affine {
                    w: get("weight", vec![in_features, out_features])?,
                    b: Some(get("bias", vec![1, out_features])?),
                },
                LayerSpec::BatchNorm2d { channels, .. } => {
                    let s = vec![1, channels, 1, 1];
                    Bind::Norm {
                        gamma: get("gamma", s.clone())?,
                        beta: get("beta", s.clone())?,
                        mean: get("running_mean", s.clone())?,
                        var: get("running_var", s)?,
                    }
                }
                _ => Bind::None,
            };
            binds.push(bind);
        }
        Ok(Sequential { specs, binds })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, ctx: &mut ForwardCtx) -> Var {
        *self.forward_trace(g, p, x, ctx).last().unwrap_or(&x)
    }

    /// Output of every layer in order.
    pub fn forward_trace(&self, g: &mut Graph, p: &Bound, x: Var, ctx: &mut ForwardCtx) -> Vec<Var> {
        let mut outs = Vec::with_capacity(self.specs.len());
        let mut h = x;
        for (spec, bind) in self.specs.iter().zip(&self.binds) {
            h = apply(spec, bind, g, p, h, ctx);
            outs.push(h);
        }
        outs
    }
}

fn register(spec: &LayerSpec, store: &mut ParamStore, name: &str, init: Init, rng: &mut StreamRng) -> Bind {
    let weight = |shape: &[usize], fan_in: usize, rng: &mut StreamRng| match init {
        Init::FanIn => uniform_tensor(rng, shape, 1.0 / (fan_in as f32).sqrt()),
        Init::Normal(std) => normal_tensor(rng, shape, std),
    };
    let bias = |shape: &[usize], fan_in: usize, rng: &mut StreamRng| match init {
        Init::FanIn => uniform_tensor(rng, shape, 1.0 / (fan_in as f32).sqrt()),
        Init::Normal(_) => Tensor::zeros(shape),
    };
    match *spec {
        LayerSpec::Conv2d { in_ch, out_ch, kernel, bias: has_bias, .. } => {
            let fan_in = in_ch * kernel * kernel;
            let w = store.add(format!("{name}.weight"), weight(&[out_ch, in_ch, kernel, kernel], fan_in, rng), true);
            let b = has_bias.then(|| store.add(format!("{name}.bias"), bias(&[1, out_ch, 1, 1], fan_in, rng), true));
            Bind::Affine { w, b }
        }
        LayerSpec::ConvTranspose2d { in_ch, out_ch, kernel, bias: has_bias, .. } => {
            let fan_in = out_ch * kernel * kernel;
            let w = store.add(format!("{name}.weight"), weight(&[in_ch, out_ch, kernel, kernel], fan_in, rng), true);
            let b = has_bias.then(|| store.add(format!("{name}.bias"), bias(&[1, out_ch, 1, 1], fan_in, rng), true));
            Bind::Affine { w, b }
        }
        LayerSpec::Dense { in_features, out_features } => {
            let w = store.add(format!("{name}.weight"), weight(&[in_features, out_features], in_features, rng), true);
            let b = store.add(format!("{name}.bias"), bias(&[1, out_features], in_features, rng), true);
            Bind::Affine { w, b: Some(b) }
        }
        LayerSpec::BatchNorm2d { channels, .. } => {
            let s = [1, channels, 1, 1];
            let gamma = match init {
                Init::Normal(std) => {
                    let noise = normal_tensor(rng, &s, std);
                    noise.map(|v| 1.0 + v)
                }
                Init::FanIn => Tensor::ones(&s),
            };
            Bind::Norm {
                gamma: store.add(format!("{name}.gamma"), gamma, true),
                beta: store.add(format!("{name}.beta"), Tensor::zeros(&s), true),
                mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&s), false),
                var: store.add(format!("{name}.running_var"), Tensor::ones(&s), false),
            }
        }
        _ => Bind::None,
    }
}

fn apply(spec: &LayerSpec, bind: &Bind, g: &mut Graph, p: &Bound, x: Var, ctx: &mut ForwardCtx) -> Var {
    match (spec, bind) {
        (LayerSpec::Conv2d { stride, pad, .. }, Bind::Affine { w, b }) => {
            g.conv2d(x, p.var(*w), b.map(|b| p.var(b)), *stride, *pad)
        }
        (LayerSpec::ConvTranspose2d { stride, pad, .. }, Bind::Affine { w, b }) => {
            g.conv_transpose2d(x, p.var(*w), b.map(|b| p.var(b)), *stride, *pad)
        }
        (LayerSpec::Dense { .. }, Bind::Affine { w, b }) => {
            let y = g.matmul(x, p.var(*w));
            match b {
                Some(b) => g.add(y, p.var(*b)),
                None => y,
            }
        }
        (LayerSpec::BatchNorm2d { eps, momentum, .. }, Bind::Norm { gamma, beta, mean, var }) => {
            batch_norm(g, p, x, (*gamma, *beta, *mean, *var), *eps, *momentum, ctx)
        }
        (LayerSpec::Relu, _) => g.relu(x),
        (LayerSpec::LeakyRelu { slope }, _) => g.leaky_relu(x, *slope),
        (LayerSpec::Tanh, _) => g.tanh(x),
        (LayerSpec::MaxPool2d { kernel, stride }, _) => g.max_pool2d(x, *kernel, *stride, 0),
        (LayerSpec::Flatten, _) => g.flatten(x),
        (LayerSpec::Dropout { p: rate }, _) => {
            if !ctx.train || *rate <= 0.0 {
                return x;
            }
            let rng = ctx.rng.as_mut().expect("dropout in training mode needs an rng");
            let keep = 1.0 - rate;
            let shape = g.shape(x).to_vec();
            let n: usize = shape.iter().product();
            let mask: Vec<f32> = (0..n)
                .map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            let m = g.constant(Tensor::new(&shape, mask));
            g.mul(x, m)
        }
        (spec, _) => panic!("layer {spec:?} is not bound to parameters"),
    }
}

fn batch_norm(
    g: &mut Graph,
    p: &Bound,
    x: Var,
    (gamma, beta, mean, var): (ParamId, ParamId, ParamId, ParamId),
    eps: f32,
    momentum: f32,
    ctx: &mut ForwardCtx,
) -> Var {
    let (gv, bv) = (p.var(gamma), p.var(beta));
    if ctx.train {
        let mu = g.mean_axes(x, &[0, 2, 3]);
        let xc = g.sub(x, mu);
        let sq = g.square(xc);
        let v = g.mean_axes(sq, &[0, 2, 3]);
        let ve = g.add_scalar(v, eps);
        let inv = g.powf(ve, -0.5);
        let xn = g.mul(xc, inv);
        let scaled = g.mul(xn, gv);
        let out = g.add(scaled, bv);
        let s = g.shape(x);
        let count = (s[0] * s[2] * s[3]) as f32;
        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let (rm, rv) = (g.value(p.var(mean)), g.value(p.var(var)));
        let new_mean = Tensor::new(
            rm.shape(),
            rm.data()
                .iter()
                .zip(g.value(mu).data())
                .map(|(&r, &m)| (1.0 - momentum) * r + momentum * m)
                .collect(),
        );
        let new_var = Tensor::new(
            rv.shape(),
            rv.data()
                .iter()
                .zip(g.value(v).data())
                .map(|(&r, &b)| (1.0 - momentum) * r + momentum * b * unbias)
                .collect(),
        );
        ctx.stat_updates.push((mean, new_mean));
        ctx.stat_updates.push((var, new_var));
        out
    } else {
        let (rm, rv) = (p.var(mean), p.var(var));
        let ve = g.add_scalar(rv, eps);
        let inv = g.powf(ve, -0.5);
        let xc = g.sub(x, rm);
        let xn = g.mul(xc, inv);
        let scaled = g.mul(xn, gv);
        g.add(scaled, bv)
    }
}

/// Samples an index permutation of `0..n`.
pub fn permutation(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
