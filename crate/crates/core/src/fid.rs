//! Fréchet distance between Gaussian fits of image embeddings.

use std::collections::BTreeMap;

use gutcheck_nn::{layers::Init, stream, ForwardCtx, Graph, LayerSpec, ParamStore, Sequential};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::label::LabelClass;
use crate::pixels::{batch_tensor, Pixels};
use crate::Error;

/// Negative eigenvalues no larger than this fraction of the largest one are treated as zero.
pub const EIG_CLAMP_REL: f64 = 1e-6;

pub trait FeatureExtractor {
    fn name(&self) -> String;
    fn output_dim(&self) -> usize;
    fn deterministic(&self) -> bool {
        true
    }
    /// Embeds a batch of images; one row per image.
    fn embed(&self, images: &[&Pixels]) -> Result<Vec<Vec<f32>>, Error>;
}

/// Embeds every image; row `i` belongs to `images[i]`.
pub fn extract_features(images: &[&Pixels], ex: &dyn FeatureExtractor) -> Result<DMatrix<f64>, Error> {
    if images.is_empty() {
        return Err(Error::InvalidInput("cannot embed an empty image set".into()));
    }
    let d = ex.output_dim();
    let mut m = DMatrix::zeros(images.len(), d);
    let mut row = 0;
    for chunk in images.chunks(32) {
        for f in ex.embed(chunk)? {
            if f.len() != d {
                return Err(Error::Numerical(format!("extractor returned {} features, expected {d}", f.len())));
            }
            for (j, v) in f.into_iter().enumerate() {
                m[(row, j)] = v as f64;
            }
            row += 1;
        }
    }
    Ok(m)
}

/// Gray levels area-averaged onto a `grid × grid` raster, row-major.
#[derive(Debug, Clone)]
pub struct PixelGrid {
    pub grid: usize,
}

impl FeatureExtractor for PixelGrid {
    fn name(&self) -> String {
        format!("pixel-grid-{}", self.grid)
    }

    fn output_dim(&self) -> usize {
        self.grid * self.grid
    }

    fn embed(&self, images: &[&Pixels]) -> Result<Vec<Vec<f32>>, Error> {
        let g = self.grid;
        images
            .iter()
            .map(|p| {
                if g == 0 || p.height % g != 0 || p.width % g != 0 {
                    return Err(Error::InvalidInput(format!(
                        "{}×{} image is not divisible into a {g}×{g} grid",
                        p.height, p.width
                    )));
                }
                let (bh, bw) = (p.height / g, p.width / g);
                let mut out = vec![0.0f64; g * g];
                for y in 0..p.height {
                    for x in 0..p.width {
                        let gray = (p.get(y, x, 0) as f64 + p.get(y, x, 1) as f64 + p.get(y, x, 2) as f64) / 3.0;
                        out[(y / bh) * g + x / bw] += gray;
                    }
                }
                let area = (bh * bw) as f64;
                Ok(out.into_iter().map(|v| (v / area) as f32).collect())
            })
            .collect()
    }
}

/// A frozen random convolutional encoder; 64 globally averaged channels.
///
/// Input is scaled to [0, 1] and average-pooled to 32×32 first, so the
/// embedding only depends on coarse structure and colour.
pub struct ToyEncoder {
    seed: u64,
    net: Sequential,
    store: ParamStore,
}

impl ToyEncoder {
    pub const DIM: usize = 64;

    pub fn new(seed: u64) -> Self {
        let conv = |i, o| LayerSpec::Conv2d {
            in_ch: i,
            out_ch: o,
            kernel: 3,
            stride: 2,
            pad: 1,
            bias: true,
        };
        let specs = vec![
            conv(3, 16),
            LayerSpec::LeakyRelu { slope: 0.2 },
            conv(16, 32),
            LayerSpec::LeakyRelu { slope: 0.2 },
            conv(32, Self::DIM),
            LayerSpec::LeakyRelu { slope: 0.2 },
        ];
        let mut store = ParamStore::new();
        let mut rng = stream(&[seed, 0xf1d]);
        let net = Sequential::build(specs, &mut store, "toy", Init::FanIn, &mut rng);
        ToyEncoder { seed, net, store }
    }
}

impl FeatureExtractor for ToyEncoder {
    fn name(&self) -> String {
        format!("toy-encoder-{}", self.seed)
    }

    fn output_dim(&self) -> usize {
        Self::DIM
    }

    fn embed(&self, images: &[&Pixels]) -> Result<Vec<Vec<f32>>, Error> {
        let x = batch_tensor(images, 2.0 / 255.0, -1.0);
        let side = x.shape()[2];
        let factor = (side / 32).max(1);
        let mut g = Graph::new();
        let p = self.store.bind(&mut g, false);
        let mut h = g.constant(x);
        if factor > 1 {
            h = g.avg_pool2d(h, factor, factor, 0, true);
        }
        let h = self.net.forward(&mut g, &p, h, &mut ForwardCtx::eval());
        let pooled = g.mean_axes(h, &[2, 3]);
        let v = g.value(pooled);
        Ok(v.data().chunks(Self::DIM).map(<[f32]>::to_vec).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub n: usize,
}

/// Column means and the unbiased sample covariance, symmetrized.
pub fn fit_gaussian(features: &DMatrix<f64>) -> Result<FeatureStats, Error> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 feature rows, got {n}")));
    }
    let mu = features.row_mean().transpose();
    let mut centred = features.clone();
    for mut row in centred.row_iter_mut() {
        row -= mu.transpose();
    }
    let s = centred.transpose() * &centred / (n as f64 - 1.0);
    let sigma = (&s + s.transpose()) * 0.5;
    Ok(FeatureStats { mu, sigma, n })
}

/// Eigen-decomposes a symmetric matrix, clamping tiny negative eigenvalues.
fn psd_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, Error> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    let mut e = SymmetricEigen::new(m.clone());
    let max = e.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = EIG_CLAMP_REL * max + 1e-12;
    for v in e.eigenvalues.iter_mut() {
        if *v < -tol {
            let min = m.nrows();
            return Err(Error::Numerical(format!(
                "{what} is not positive semi-definite: eigenvalue {v:e} (largest {max:e}, dimension {min})"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(e)
}

fn sym_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>, Error> {
    let e = psd_eigen(m, what)?;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(f64::sqrt));
    let r = &e.eigenvectors * d * e.eigenvectors.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2 (Σa Σb)^½)`, with the trace of the root taken
/// from the symmetric product `√Σa Σb √Σa`.
pub fn frechet_distance(a: &FeatureStats, b: &FeatureStats) -> Result<f64, Error> {
    let d = a.mu.len();
    if b.mu.len() != d || a.sigma.shape() != (d, d) || b.sigma.shape() != (d, d) {
        return Err(Error::InvalidInput(format!(
            "feature dimensions differ: {} vs {}",
            a.mu.len(),
            b.mu.len()
        )));
    }
    let diff = (&a.mu - &b.mu).norm_squared();
    let ra = sym_sqrt(&a.sigma, "first covariance")?;
    let m = &ra * &b.sigma * &ra;
    let m = (&m + m.transpose()) * 0.5;
    let e = psd_eigen(&m, "covariance product")?;
    let tr_root: f64 = e.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let fid = diff + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_root;
    if !fid.is_finite() {
        return Err(Error::Numerical("Fréchet distance is not finite".into()));
    }
    Ok(fid.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidRow {
    pub class: LabelClass,
    pub backend: String,
    pub fid: f64,
    pub n_real: usize,
    pub n_fake: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidResult {
    pub extractor: String,
    pub rows: Vec<FidRow>,
    /// Relative eigenvalue clamping threshold used for every row.
    #[serde(default)]
    pub eig_clamp_rel: f64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// FID for every `(class, backend)` set of fakes against that class's real images.
///
/// Rows are sorted by class, then by ascending distance.
pub fn fid_report(
    real: &BTreeMap<LabelClass, Vec<Pixels>>,
    fakes: &BTreeMap<(LabelClass, String), Vec<Pixels>>,
    ex: &dyn FeatureExtractor,
) -> Result<FidResult, Error> {
    let d = ex.output_dim();
    let mut warnings = Vec::new();
    let mut note_small = |what: String, n: usize| {
        if n < 10 * d {
            let w = format!("{what}: {n} images for {d}-dimensional features; covariance is poorly conditioned");
            log::warn!("{w}");
            warnings.push(w);
        }
    };
    let mut real_stats = BTreeMap::new();
    for (class, imgs) in real {
        note_small(format!("real {class}"), imgs.len());
        let refs: Vec<&Pixels> = imgs.iter().collect();
        real_stats.insert(*class, fit_gaussian(&extract_features(&refs, ex)?)?);
    }
    let mut rows = Vec::new();
    for ((class, backend), imgs) in fakes {
        let rs = real_stats
            .get(class)
            .ok_or_else(|| Error::InvalidInput(format!("no real images for class {class}")))?;
        note_small(format!("{backend} {class}"), imgs.len());
        let refs: Vec<&Pixels> = imgs.iter().collect();
        let fs = fit_gaussian(&extract_features(&refs, ex)?)?;
        rows.push(FidRow {
            class: *class,
            backend: backend.clone(),
            fid: frechet_distance(rs, &fs)?,
            n_real: rs.n,
            n_fake: fs.n,
        });
    }
    rows.sort_by(|a, b| a.class.cmp(&b.class).then(a.fid.total_cmp(&b.fid)));
    Ok(FidResult {
        extractor: ex.name(),
        rows,
        eig_clamp_rel: EIG_CLAMP_REL,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mu: &[f64], sigma: &[f64]) -> FeatureStats {
        let d = mu.len();
        FeatureStats {
            mu: DVector::from_column_slice(mu),
            sigma: DMatrix::from_row_slice(d, d, sigma),
            n: 100,
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        let b = stats(&[0.0], &[1.0]);
        assert!(matches!(frechet_distance(&a, &b), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let a = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, -0.5]);
        let b = stats(&[0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(frechet_distance(&a, &b), Err(Error::Numerical(_))));
    }

    #[test]
    fn toy_encoder_is_deterministic() {
        let img = crate::synth::two_mode_image(0, 1);
        let e = ToyEncoder::new(3);
        let a = e.embed(&[&img, &img]).unwrap();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[0], ToyEncoder::new(3).embed(&[&img]).unwrap()[0]);
        assert_eq!(a[0].len(), 64);
    }
}
