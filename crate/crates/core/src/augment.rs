//! Classic geometric augmentation for classifier training and differentiable
//! augmentation for GAN discriminators.

use gutcheck_nn::{stream, Graph, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pixels::Pixels;
use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicPolicy {
    /// Maximum absolute rotation in degrees.
    pub rotation_deg: f32,
    /// Maximum shift as a fraction of each dimension.
    pub shift_frac: f32,
    pub hflip: bool,
    pub vflip: bool,
}

impl Default for ClassicPolicy {
    fn default() -> Self {
        ClassicPolicy {
            rotation_deg: 10.0,
            shift_frac: 0.1,
            hflip: true,
            vflip: false,
        }
    }
}

impl ClassicPolicy {
    pub fn identity() -> Self {
        ClassicPolicy {
            rotation_deg: 0.0,
            shift_frac: 0.0,
            hflip: false,
            vflip: false,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rotation_deg >= 0.0) || !(0.0..1.0).contains(&self.shift_frac) {
            return Err(Error::InvalidInput(format!("invalid classic policy {self:?}")));
        }
        Ok(())
    }

    /// The transform parameters for one image.
    pub fn draw(&self, width: usize, height: usize, seed: u64) -> ClassicDraw {
        let mut rng = stream(&[seed, 0xc1a5]);
        let angle = rng.random_range(-1.0f32..=1.0) * self.rotation_deg;
        let tx = rng.random_range(-1.0f32..=1.0) * self.shift_frac * width as f32;
        let ty = rng.random_range(-1.0f32..=1.0) * self.shift_frac * height as f32;
        let hf = rng.random::<bool>();
        let vf = rng.random::<bool>();
        ClassicDraw {
            angle_deg: angle,
            shift_x: tx,
            shift_y: ty,
            hflip: self.hflip && hf,
            vflip: self.vflip && vf,
        }
    }
}

/// One concrete affine transform: flip, then rotate about the centre, then shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicDraw {
    pub angle_deg: f32,
    pub shift_x: f32,
    pub shift_y: f32,
    pub hflip: bool,
    pub vflip: bool,
}

impl ClassicDraw {
    pub fn identity() -> Self {
        ClassicDraw {
            angle_deg: 0.0,
            shift_x: 0.0,
            shift_y: 0.0,
            hflip: false,
            vflip: false,
        }
    }

    /// Source coordinate sampled for output pixel `(x, y)`.
    pub fn source_of(&self, x: f32, y: f32, width: usize, height: usize) -> (f32, f32) {
        let (cx, cy) = ((width as f32 - 1.0) / 2.0, (height as f32 - 1.0) / 2.0);
        let (dx, dy) = (x - cx - self.shift_x, y - cy - self.shift_y);
        let (s, c) = (-self.angle_deg.to_radians()).sin_cos();
        let (mut sx, mut sy) = (c * dx - s * dy + cx, s * dx + c * dy + cy);
        if self.hflip {
            sx = width as f32 - 1.0 - sx;
        }
        if self.vflip {
            sy = height as f32 - 1.0 - sy;
        }
        (sx, sy)
    }

    /// Warps with bilinear sampling; coordinates outside the frame take the nearest edge pixel.
    pub fn apply(&self, img: &Pixels) -> Pixels {
        let (w, h) = (img.width, img.height);
        let mut out = Pixels::filled(h, w, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = self.source_of(x as f32, y as f32, w, h);
                let sx = sx.clamp(0.0, (w - 1) as f32);
                let sy = sy.clamp(0.0, (h - 1) as f32);
                let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
                for c in 0..3 {
                    let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                    let bot = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                    out.set(y, x, c, (top * (1.0 - fy) + bot * fy).clamp(0.0, 255.0));
                }
            }
        }
        out
    }
}

/// Random rotation, shift and flips with one draw per transform.
pub fn classic_augment(img: &Pixels, policy: &ClassicPolicy, seed: u64) -> Result<Pixels, Error> {
    policy.validate()?;
    if img.data.len() != img.width * img.height * 3 || img.width == 0 || img.height == 0 {
        return Err(Error::InvalidInput("malformed pixel buffer".into()));
    }
    Ok(policy.draw(img.width, img.height, seed).apply(img))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffTransform {
    /// Brightness, saturation and contrast jitter.
    Color,
    Translation,
    Cutout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffAugmentPolicy {
    /// Applied in this order.
    pub transforms: Vec<DiffTransform>,
    pub translation_frac: f32,
    pub cutout_frac: f32,
    /// Additive offset drawn from U(-b/2, b/2).
    pub brightness: f32,
    /// Channel-spread factor drawn from U(1 - s/2, 1 + s/2).
    pub saturation: f32,
    /// Contrast factor drawn from U(1 - c/2, 1 + c/2).
    pub contrast: f32,
}

impl Default for DiffAugmentPolicy {
    fn default() -> Self {
        DiffAugmentPolicy {
            transforms: vec![DiffTransform::Color, DiffTransform::Translation, DiffTransform::Cutout],
            translation_frac: 0.125,
            cutout_frac: 0.5,
            brightness: 1.0,
            saturation: 2.0,
            contrast: 1.0,
        }
    }
}

impl DiffAugmentPolicy {
    /// Parses a comma list such as `translation,cutout,color`; magnitudes keep their defaults.
    pub fn parse(list: &str) -> Result<Self, Error> {
        let mut transforms = Vec::new();
        for part in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let t = match part {
                "color" | "colour" => DiffTransform::Color,
                "translation" => DiffTransform::Translation,
                "cutout" => DiffTransform::Cutout,
                other => return Err(Error::InvalidInput(format!("unknown DiffAugment transform `{other}`"))),
            };
            if !transforms.contains(&t) {
                transforms.push(t);
            }
        }
        Ok(DiffAugmentPolicy {
            transforms,
            ..Default::default()
        })
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// Per-sample parameters, drawn from the stream keyed by `(seed, sample)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffDraw {
    pub brightness: f32,
    pub saturation: f32,
    pub contrast: f32,
    pub shift_x: i32,
    pub shift_y: i32,
    pub cutout_x: usize,
    pub cutout_y: usize,
}

impl DiffAugmentPolicy {
    pub fn draw(&self, seed: u64, sample: usize, height: usize, width: usize) -> DiffDraw {
        let mut rng = stream(&[seed, 0xd1ff, sample as u64]);
        let mut centred = |r: f32| rng.random_range(-0.5f32..0.5) * r;
        let brightness = centred(self.brightness);
        let saturation = 1.0 + centred(self.saturation);
        let contrast = 1.0 + centred(self.contrast);
        let sx = (self.translation_frac * width as f32 + 0.5) as i32;
        let sy = (self.translation_frac * height as f32 + 0.5) as i32;
        let shift_x = rng.random_range(-sx..=sx);
        let shift_y = rng.random_range(-sy..=sy);
        let (cw, ch) = self.cutout_size(height, width);
        let cutout_x = rng.random_range(0..=width - cw);
        let cutout_y = rng.random_range(0..=height - ch);
        DiffDraw {
            brightness,
            saturation,
            contrast,
            shift_x,
            shift_y,
            cutout_x,
            cutout_y,
        }
    }

    /// Cutout square side along (height, width); the square always lies inside the image.
    pub fn cutout_size(&self, height: usize, width: usize) -> (usize, usize) {
        let side = |n: usize| ((self.cutout_frac * n as f32 + 0.5) as usize).min(n);
        (side(width), side(height))
    }
}

/// Applies the policy to an NCHW batch on the graph.
///
/// The same `seed` yields the same per-sample transforms, so calling this on a
/// real batch and a fake batch with one seed augments both identically.
pub fn diff_augment(g: &mut Graph, x: Var, policy: &DiffAugmentPolicy, seed: u64) -> Result<Var, Error> {
    if !g.value(x).all_finite() {
        return Err(Error::InvalidInput("non-finite values in DiffAugment input".into()));
    }
    let shape = g.shape(x).to_vec();
    if shape.len() != 4 || shape[1] != 3 {
        return Err(Error::InvalidInput(format!("expected an N×3×H×W batch, got {shape:?}")));
    }
    let (n, h, w) = (shape[0], shape[2], shape[3]);
    let draws: Vec<DiffDraw> = (0..n).map(|i| policy.draw(seed, i, h, w)).collect();
    let per_sample = |f: &dyn Fn(&DiffDraw) -> f32| Tensor::new(&[n, 1, 1, 1], draws.iter().map(f).collect());
    let mut y = x;
    for t in &policy.transforms {
        match t {
            DiffTransform::Color => {
                if policy.brightness != 0.0 {
                    let b = g.constant(per_sample(&|d| d.brightness));
                    y = g.add(y, b);
                }
                if policy.saturation != 0.0 {
                    let m = g.mean_axes(y, &[1]);
                    let f = g.constant(per_sample(&|d| d.saturation));
                    y = spread(g, y, m, f);
                }
                if policy.contrast != 0.0 {
                    let m = g.mean_axes(y, &[1, 2, 3]);
                    let f = g.constant(per_sample(&|d| d.contrast));
                    y = spread(g, y, m, f);
                }
            }
            DiffTransform::Translation => {
                if draws.iter().all(|d| d.shift_x == 0 && d.shift_y == 0) {
                    continue;
                }
                let mut map = vec![-1i32; n * 3 * h * w];
                for (s, d) in draws.iter().enumerate() {
                    for c in 0..3 {
                        let base = (s * 3 + c) * h * w;
                        for oy in 0..h {
                            let iy = oy as i32 - d.shift_y;
                            if iy < 0 || iy >= h as i32 {
                                continue;
                            }
                            for ox in 0..w {
                                let ix = ox as i32 - d.shift_x;
                                if ix >= 0 && ix < w as i32 {
                                    map[base + oy * w + ox] = (base + iy as usize * w + ix as usize) as i32;
                                }
                            }
                        }
                    }
                }
                y = g.gather(y, &shape, map);
            }
            DiffTransform::Cutout => {
                let (cw, ch) = policy.cutout_size(h, w);
                if cw == 0 || ch == 0 {
                    continue;
                }
                let mut mask = vec![1.0f32; n * h * w];
                for (s, d) in draws.iter().enumerate() {
                    for yy in d.cutout_y..d.cutout_y + ch {
                        let row = s * h * w + yy * w;
                        mask[row + d.cutout_x..row + d.cutout_x + cw].fill(0.0);
                    }
                }
                let m = g.constant(Tensor::new(&[n, 1, h, w], mask));
                y = g.mul(y, m);
            }
        }
    }
    Ok(y)
}

fn spread(g: &mut Graph, y: Var, mean: Var, factor: Var) -> Var {
    let centred = g.sub(y, mean);
    let scaled = g.mul(centred, factor);
    g.add(scaled, mean)
}

/// Convenience wrapper evaluating [`diff_augment`] on a plain tensor.
pub fn diff_augment_tensor(x: &Tensor, policy: &DiffAugmentPolicy, seed: u64) -> Result<Tensor, Error> {
    let mut g = Graph::new();
    let v = g.constant(x.clone());
    let y = diff_augment(&mut g, v, policy, seed)?;
    Ok(g.value(y).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_policy_list() {
        let p = DiffAugmentPolicy::parse("translation, cutout,color").unwrap();
        assert_eq!(
            p.transforms,
            vec![DiffTransform::Translation, DiffTransform::Cutout, DiffTransform::Color]
        );
        assert!(DiffAugmentPolicy::parse("blur").is_err());
        assert!(DiffAugmentPolicy::parse("").unwrap().is_empty());
    }

    #[test]
    fn default_factors_match_reference_ranges() {
        let p = DiffAugmentPolicy::default();
        for i in 0..200 {
            let d = p.draw(3, i, 64, 64);
            assert!((-0.5..0.5).contains(&d.brightness));
            assert!((0.0..2.0).contains(&d.saturation));
            assert!((0.5..1.5).contains(&d.contrast));
            assert!(d.shift_x.abs() <= 8 && d.shift_y.abs() <= 8);
            assert!(d.cutout_x <= 32 && d.cutout_y <= 32);
        }
    }
}
