//! Inception-V3 feature extractor (2048-d pooled features) reading a
//! torchvision-layout `state_dict` exported as safetensors.
//!
//! Batch norms are folded into the preceding convolutions at load time.
//! Images are resized to 299×299 with the bilinear filter used everywhere
//! else and mapped from [0, 255] to [-1, 1].

use std::collections::HashMap;
use std::path::Path;

use gutcheck_nn::{Graph, Tensor, Var};
use safetensors::{Dtype, SafeTensors};

use crate::fid::FeatureExtractor;
use crate::pixels::{batch_tensor, Pixels};
use crate::Error;

pub const INPUT_SIDE: usize = 299;
pub const FEATURE_DIM: usize = 2048;
const BN_EPS: f32 = 1e-3;

struct FoldedConv {
    weight: Tensor,
    bias: Tensor,
}

pub struct InceptionV3 {
    convs: HashMap<String, FoldedConv>,
    name: String,
    batch: usize,
}

fn read_f32(st: &SafeTensors, name: &str) -> Result<Tensor, Error> {
    let view = st
        .tensor(name)
        .map_err(|e| Error::InvalidInput(format!("inception weights: `{name}`: {e}")))?;
    let bytes = view.data();
    let data: Vec<f32> = match view.dtype() {
        Dtype::F32 => bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect(),
        Dtype::F64 => bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")) as f32)
            .collect(),
        other => return Err(Error::InvalidInput(format!("inception weights: `{name}` has dtype {other:?}"))),
    };
    Ok(Tensor::new(view.shape(), data))
}

/// Module prefixes of every BasicConv2d, in execution order.
fn conv_names() -> Vec<String> {
    let mut v: Vec<String> = [
        "Conv2d_1a_3x3",
        "Conv2d_2a_3x3",
        "Conv2d_2b_3x3",
        "Conv2d_3b_1x1",
        "Conv2d_4a_3x3",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let a = [
        "branch1x1",
        "branch5x5_1",
        "branch5x5_2",
        "branch3x3dbl_1",
        "branch3x3dbl_2",
        "branch3x3dbl_3",
        "branch_pool",
    ];
    let b = ["branch3x3", "branch3x3dbl_1", "branch3x3dbl_2", "branch3x3dbl_3"];
    let c = [
        "branch1x1",
        "branch7x7_1",
        "branch7x7_2",
        "branch7x7_3",
        "branch7x7dbl_1",
        "branch7x7dbl_2",
        "branch7x7dbl_3",
        "branch7x7dbl_4",
        "branch7x7dbl_5",
        "branch_pool",
    ];
    let d = [
        "branch3x3_1",
        "branch3x3_2",
        "branch7x7x3_1",
        "branch7x7x3_2",
        "branch7x7x3_3",
        "branch7x7x3_4",
    ];
    let e = [
        "branch1x1",
        "branch3x3_1",
        "branch3x3_2a",
        "branch3x3_2b",
        "branch3x3dbl_1",
        "branch3x3dbl_2",
        "branch3x3dbl_3a",
        "branch3x3dbl_3b",
        "branch_pool",
    ];
    let blocks: [(&str, &[&str]); 11] = [
        ("Mixed_5b", &a),
        ("Mixed_5c", &a),
        ("Mixed_5d", &a),
        ("Mixed_6a", &b),
        ("Mixed_6b", &c),
        ("Mixed_6c", &c),
        ("Mixed_6d", &c),
        ("Mixed_6e", &c),
        ("Mixed_7a", &d),
        ("Mixed_7b", &e),
        ("Mixed_7c", &e),
    ];
    for (block, branches) in blocks {
        v.extend(branches.iter().map(|br| format!("{block}.{br}")));
    }
    v
}

impl InceptionV3 {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let bytes = std::fs::read(path)?;
        let mut ex = Self::from_bytes(&bytes)?;
        ex.name = format!("inception_v3:{}", path.file_name().and_then(|n| n.to_str()).unwrap_or("weights"));
        Ok(ex)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        let st = SafeTensors::deserialize(bytes)
            .map_err(|e| Error::InvalidInput(format!("inception weights are not safetensors: {e}")))?;
        let mut convs = HashMap::new();
        for name in conv_names() {
            let w = read_f32(&st, &format!("{name}.conv.weight"))?;
            let gamma = read_f32(&st, &format!("{name}.bn.weight"))?;
            let beta = read_f32(&st, &format!("{name}.bn.bias"))?;
            let mean = read_f32(&st, &format!("{name}.bn.running_mean"))?;
            let var = read_f32(&st, &format!("{name}.bn.running_var"))?;
            let cout = w.shape()[0];
            if [&gamma, &beta, &mean, &var].iter().any(|t| t.len() != cout) {
                return Err(Error::InvalidInput(format!("inception weights: batch norm of `{name}` mismatched")));
            }
            let per = w.len() / cout;
            let mut wd = w.data().to_vec();
            let mut bias = vec![0.0f32; cout];
            for o in 0..cout {
                let s = gamma.data()[o] / (var.data()[o] + BN_EPS).sqrt();
                wd[o * per..(o + 1) * per].iter_mut().for_each(|v| *v *= s);
                bias[o] = beta.data()[o] - mean.data()[o] * s;
            }
            convs.insert(
                name,
                FoldedConv {
                    weight: Tensor::new(w.shape(), wd),
                    bias: Tensor::new(&[1, cout, 1, 1], bias),
                },
            );
        }
        Ok(InceptionV3 {
            convs,
            name: "inception_v3".into(),
            batch: 4,
        })
    }

    fn conv(&self, g: &mut Graph, x: Var, name: &str, stride: usize, pad: (usize, usize)) -> Var {
        let c = &self.convs[name];
        let w = g.constant(c.weight.clone());
        let b = g.constant(c.bias.clone());
        let y = g.conv2d_rect(x, w, Some(b), stride, pad);
        g.relu(y)
    }

    fn block_a(&self, g: &mut Graph, x: Var, p: &str) -> Var {
        let n = |s: &str| format!("{p}.{s}");
        let b1 = self.conv(g, x, &n("branch1x1"), 1, (0, 0));
        let b5 = self.conv(g, x, &n("branch5x5_1"), 1, (0, 0));
        let b5 = self.conv(g, b5, &n("branch5x5_2"), 1, (2, 2));
        let b3 = self.conv(g, x, &n("branch3x3dbl_1"), 1, (0, 0));
        let b3 = self.conv(g, b3, &n("branch3x3dbl_2"), 1, (1, 1));
        let b3 = self.conv(g, b3, &n("branch3x3dbl_3"), 1, (1, 1));
        let bp = g.avg_pool2d(x, 3, 1, 1, true);
        let bp = self.conv(g, bp, &n("branch_pool"), 1, (0, 0));
        g.concat(&[b1, b5, b3, bp], 1)
    }

    fn block_b(&self, g: &mut Graph, x: Var, p: &str) -> Var {
        let n = |s: &str| format!("{p}.{s}");
        let b3 = self.conv(g, x, &n("branch3x3"), 2, (0, 0));
        let bd = self.conv(g, x, &n("branch3x3dbl_1"), 1, (0, 0));
        let bd = self.conv(g, bd, &n("branch3x3dbl_2"), 1, (1, 1));
        let bd = self.conv(g, bd, &n("branch3x3dbl_3"), 2, (0, 0));
        let bp = g.max_pool2d(x, 3, 2, 0);
        g.concat(&[b3, bd, bp], 1)
    }

    fn block_c(&self, g: &mut Graph, x: Var, p: &str) -> Var {
        let n = |s: &str| format!("{p}.{s}");
        let (row, col) = ((0, 3), (3, 0));
        let b1 = self.conv(g, x, &n("branch1x1"), 1, (0, 0));
        let b7 = self.conv(g, x, &n("branch7x7_1"), 1, (0, 0));
        let b7 = self.conv(g, b7, &n("branch7x7_2"), 1, row);
        let b7 = self.conv(g, b7, &n("branch7x7_3"), 1, col);
        let bd = self.conv(g, x, &n("branch7x7dbl_1"), 1, (0, 0));
        let bd = self.conv(g, bd, &n("branch7x7dbl_2"), 1, col);
        let bd = self.conv(g, bd, &n("branch7x7dbl_3"), 1, row);
        let bd = self.conv(g, bd, &n("branch7x7dbl_4"), 1, col);
        let bd = self.conv(g, bd, &n("branch7x7dbl_5"), 1, row);
        let bp = g.avg_pool2d(x, 3, 1, 1, true);
        let bp = self.conv(g, bp, &n("branch_pool"), 1, (0, 0));
        g.concat(&[b1, b7, bd, bp], 1)
    }

    fn block_d(&self, g: &mut Graph, x: Var, p: &str) -> Var {
        let n = |s: &str| format!("{p}.{s}");
        let b3 = self.conv(g, x, &n("branch3x3_1"), 1, (0, 0));
        let b3 = self.conv(g, b3, &n("branch3x3_2"), 2, (0, 0));
        let b7 = self.conv(g, x, &n("branch7x7x3_1"), 1, (0, 0));
        let b7 = self.conv(g, b7, &n("branch7x7x3_2"), 1, (0, 3));
        let b7 = self.conv(g, b7, &n("branch7x7x3_3"), 1, (3, 0));
        let b7 = self.conv(g, b7, &n("branch7x7x3_4"), 2, (0, 0));
        let bp = g.max_pool2d(x, 3, 2, 0);
        g.concat(&[b3, b7, bp], 1)
    }

    fn block_e(&self, g: &mut Graph, x: Var, p: &str) -> Var {
        let n = |s: &str| format!("{p}.{s}");
        let b1 = self.conv(g, x, &n("branch1x1"), 1, (0, 0));
        let b3 = self.conv(g, x, &n("branch3x3_1"), 1, (0, 0));
        let b3a = self.conv(g, b3, &n("branch3x3_2a"), 1, (0, 1));
        let b3b = self.conv(g, b3, &n("branch3x3_2b"), 1, (1, 0));
        let b3 = g.concat(&[b3a, b3b], 1);
        let bd = self.conv(g, x, &n("branch3x3dbl_1"), 1, (0, 0));
        let bd = self.conv(g, bd, &n("branch3x3dbl_2"), 1, (1, 1));
        let bda = self.conv(g, bd, &n("branch3x3dbl_3a"), 1, (0, 1));
        let bdb = self.conv(g, bd, &n("branch3x3dbl_3b"), 1, (1, 0));
        let bd = g.concat(&[bda, bdb], 1);
        let bp = g.avg_pool2d(x, 3, 1, 1, true);
        let bp = self.conv(g, bp, &n("branch_pool"), 1, (0, 0));
        g.concat(&[b1, b3, bd, bp], 1)
    }

    /// Pooled features for a `[N, 3, 299, 299]` batch already in [-1, 1].
    pub fn forward(&self, x: Tensor) -> Tensor {
        let mut g = Graph::new();
        let x = g.constant(x);
        let x = self.conv(&mut g, x, "Conv2d_1a_3x3", 2, (0, 0));
        let x = self.conv(&mut g, x, "Conv2d_2a_3x3", 1, (0, 0));
        let x = self.conv(&mut g, x, "Conv2d_2b_3x3", 1, (1, 1));
        let x = g.max_pool2d(x, 3, 2, 0);
        let x = self.conv(&mut g, x, "Conv2d_3b_1x1", 1, (0, 0));
        let x = self.conv(&mut g, x, "Conv2d_4a_3x3", 1, (0, 0));
        let mut x = g.max_pool2d(x, 3, 2, 0);
        for p in ["Mixed_5b", "Mixed_5c", "Mixed_5d"] {
            x = self.block_a(&mut g, x, p);
        }
        x = self.block_b(&mut g, x, "Mixed_6a");
        for p in ["Mixed_6b", "Mixed_6c", "Mixed_6d", "Mixed_6e"] {
            x = self.block_c(&mut g, x, p);
        }
        x = self.block_d(&mut g, x, "Mixed_7a");
        for p in ["Mixed_7b", "Mixed_7c"] {
            x = self.block_e(&mut g, x, p);
        }
        let pooled = g.mean_axes(x, &[2, 3]);
        let n = g.shape(pooled)[0];
        g.value(pooled).clone().reshape(&[n, FEATURE_DIM])
    }
}

/// Resized to 299×299 and scaled from [0, 255] to [-1, 1], as `[N, 3, 299, 299]`.
pub fn preprocess(images: &[&Pixels]) -> Tensor {
    let resized: Vec<Pixels> = images.iter().map(|p| p.resize(INPUT_SIDE, INPUT_SIDE)).collect();
    let refs: Vec<&Pixels> = resized.iter().collect();
    batch_tensor(&refs, 2.0 / 255.0, -1.0)
}

impl FeatureExtractor for InceptionV3 {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn output_dim(&self) -> usize {
        FEATURE_DIM
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed(&self, images: &[&Pixels]) -> Result<Vec<Vec<f32>>, Error> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(self.batch) {
            let f = self.forward(preprocess(chunk));
            out.extend(f.data().chunks(FEATURE_DIM).map(|r| r.to_vec()));
        }
        Ok(out)
    }
}
