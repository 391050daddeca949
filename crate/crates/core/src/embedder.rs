//! Appearance embedding model: crops detection boxes out of a frame, resizes
//! them to a fixed patch, and maps each patch through a small MLP to a
//! D-dimensional embedding. Gradients are written out by hand so the model
//! can be trained without an autodiff dependency.

use crate::error::{Error, Result};
use crate::pixmap::RgbImage;
use crate::rng::Prng;
use crate::types::BBox;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Model hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub patch_w: usize,
    pub patch_h: usize,
    /// Hidden layer width.
    pub hidden: usize,
    /// Embedding dimension.
    pub dim: usize,
    /// Scale outputs to unit Euclidean norm, so dot products are cosines.
    pub l2_normalize: bool,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            patch_w: 16,
            patch_h: 16,
            hidden: 64,
            dim: 32,
            l2_normalize: true,
        }
    }
}

impl EmbedderConfig {
    /// Flattened input length: patch pixels times three channels.
    pub fn input_len(&self) -> usize {
        self.patch_w * self.patch_h * 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_w == 0 || self.patch_h == 0 || self.hidden == 0 || self.dim == 0 {
            return Err(Error::Config("embedder dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// A flattened, resized, [0,1]-normalized RGB patch — the model input for one
/// detection box.
#[derive(Debug, Clone, PartialEq)]
pub struct CropFeature {
    /// Row-major RGB values, length `patch_w * patch_h * 3`.
    pub values: Vec<f64>,
}

/// Embeddings of all detections of one frame, one row per detection.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub frame: u32,
    /// K×D, row order = detection order.
    pub rows: Array2<f64>,
}

/// Trainable MLP parameters: input → tanh hidden → linear output, with
/// optional output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderParams {
    pub config: EmbedderConfig,
    /// hidden × input
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// dim × hidden
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl EmbedderParams {
    /// Seeded initialization: each tensor uniform in ±1/√fan_in.
    pub fn init(config: EmbedderConfig, rng: &mut Prng) -> Result<Self> {
        config.validate()?;
        let p = config.input_len();
        let (h, d) = (config.hidden, config.dim);
        let bound1 = 1.0 / (p as f64).sqrt();
        let bound2 = 1.0 / (h as f64).sqrt();
        let mut draw = |bound: f64| rng.uniform_range(-bound, bound);
        let w1 = Array2::from_shape_fn((h, p), |_| draw(bound1));
        let b1 = Array1::from_shape_fn(h, |_| draw(bound1));
        let w2 = Array2::from_shape_fn((d, h), |_| draw(bound2));
        let b2 = Array1::from_shape_fn(d, |_| draw(bound2));
        Ok(EmbedderParams {
            config,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn zeros(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let p = config.input_len();
        Ok(EmbedderParams {
            config,
            w1: Array2::zeros((config.hidden, p)),
            b1: Array1::zeros(config.hidden),
            w2: Array2::zeros((config.dim, config.hidden)),
            b2: Array1::zeros(config.dim),
        })
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters as one vector: w1 row-major, b1, w2 row-major, b2.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out
    }

    /// Overwrite parameters from a [`flatten`](Self::flatten)-ordered vector.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat vector length {} does not match {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter();
        for v in self.w1.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in self.b1.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in self.w2.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in self.b2.iter_mut() {
            *v = *it.next().unwrap();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            patch_w: self.config.patch_w,
            patch_h: self.config.patch_h,
            hidden: self.config.hidden,
            dim: self.config.dim,
            l2_normalize: self.config.l2_normalize,
            w1: self.w1.iter().copied().collect(),
            b1: self.b1.to_vec(),
            w2: self.w2.iter().copied().collect(),
            b2: self.b2.to_vec(),
        };
        let json = serde_json::to_string(&file)
            .map_err(|e| Error::Invalid(format!("checkpoint serialization failed: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CheckpointFile = serde_json::from_str(&text)
            .map_err(|e| Error::parse(path, 0, format!("bad checkpoint: {e}")))?;
        let config = EmbedderConfig {
            patch_w: file.patch_w,
            patch_h: file.patch_h,
            hidden: file.hidden,
            dim: file.dim,
            l2_normalize: file.l2_normalize,
        };
        config.validate()?;
        let p = config.input_len();
        let expect = |name: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::parse(
                    path,
                    0,
                    format!("{name} has {got} values, expected {want}"),
                ));
            }
            Ok(())
        };
        expect("w1", file.w1.len(), config.hidden * p)?;
        expect("b1", file.b1.len(), config.hidden)?;
        expect("w2", file.w2.len(), config.dim * config.hidden)?;
        expect("b2", file.b2.len(), config.dim)?;
        let params = EmbedderParams {
            config,
            w1: Array2::from_shape_vec((config.hidden, p), file.w1).expect("length checked"),
            b1: Array1::from_vec(file.b1),
            w2: Array2::from_shape_vec((config.dim, config.hidden), file.w2)
                .expect("length checked"),
            b2: Array1::from_vec(file.b2),
        };
        if params.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(path, 0, "non-finite parameter values"));
        }
        Ok(params)
    }
}

/// On-disk checkpoint layout: hyperparameters plus flat weight arrays in
/// full-precision decimal.
#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    patch_w: usize,
    patch_h: usize,
    hidden: usize,
    dim: usize,
    l2_normalize: bool,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl EmbedderGrads {
    pub fn zeros(params: &EmbedderParams) -> Self {
        EmbedderGrads {
            w1: Array2::zeros(params.w1.dim()),
            b1: Array1::zeros(params.b1.len()),
            w2: Array2::zeros(params.w2.dim()),
            b2: Array1::zeros(params.b2.len()),
        }
    }

    pub fn add_assign(&mut self, other: &EmbedderGrads) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }

    pub fn scale(&mut self, factor: f64) {
        self.w1 *= factor;
        self.b1 *= factor;
        self.w2 *= factor;
        self.b2 *= factor;
    }

    /// Same ordering as [`EmbedderParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out =
            Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len());
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out
    }
}

/// Cut `bbox` out of `image`, bilinear-resize it to the patch size, and
/// flatten to normalized RGB values.
///
/// The box is clipped to the image first; a box whose intersection with the
/// image has zero area is an error. Sample coordinates use half-pixel centers
/// and are clamped to the clipped region, so a box covering exactly one pixel
/// yields that pixel's color everywhere.
pub fn extract_crop(
    image: &RgbImage,
    bbox: &BBox,
    patch_w: usize,
    patch_h: usize,
) -> Result<CropFeature> {
    let x0 = bbox.x.max(0.0);
    let y0 = bbox.y.max(0.0);
    let x1 = bbox.right().min(image.width as f64);
    let y1 = bbox.bottom().min(image.height as f64);
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::Invalid(format!(
            "box ({}, {}, {}x{}) does not intersect {}x{} image",
            bbox.x, bbox.y, bbox.width, bbox.height, image.width, image.height
        )));
    }
    let mut values = Vec::with_capacity(patch_w * patch_h * 3);
    // Pixel-index-space clamp range of the clipped region.
    let sx_lo = x0;
    let sx_hi = (x1 - 1.0).max(x0);
    let sy_lo = y0;
    let sy_hi = (y1 - 1.0).max(y0);
    for py in 0..patch_h {
        let sy = (y0 + (py as f64 + 0.5) * (y1 - y0) / patch_h as f64 - 0.5)
            .clamp(sy_lo, sy_hi)
            .clamp(0.0, image.height as f64 - 1.0);
        let yl = sy.floor() as usize;
        let yh = (yl + 1).min(image.height - 1);
        let ty = sy - yl as f64;
        for px in 0..patch_w {
            let sx = (x0 + (px as f64 + 0.5) * (x1 - x0) / patch_w as f64 - 0.5)
                .clamp(sx_lo, sx_hi)
                .clamp(0.0, image.width as f64 - 1.0);
            let xl = sx.floor() as usize;
            let xh = (xl + 1).min(image.width - 1);
            let tx = sx - xl as f64;
            let c00 = image.get(xl, yl);
            let c10 = image.get(xh, yl);
            let c01 = image.get(xl, yh);
            let c11 = image.get(xh, yh);
            for ch in 0..3 {
                let top = (1.0 - tx) * c00[ch] as f64 + tx * c10[ch] as f64;
                let bot = (1.0 - tx) * c01[ch] as f64 + tx * c11[ch] as f64;
                values.push(((1.0 - ty) * top + ty * bot) / 255.0);
            }
        }
    }
    Ok(CropFeature { values })
}

fn forward_one(params: &EmbedderParams, crop: &[f64]) -> (Array1<f64>, Array1<f64>) {
    let x = ndarray::ArrayView1::from(crop);
    let hidden = (params.w1.dot(&x) + &params.b1).mapv(f64::tanh);
    let out = params.w2.dot(&hidden) + &params.b2;
    (hidden, out)
}

const NORM_GUARD: f64 = 1e-12;

/// Map crops to embeddings, one row each; empty input yields a 0×D matrix.
pub fn embed(params: &EmbedderParams, crops: &[CropFeature]) -> Result<Array2<f64>> {
    let p = params.config.input_len();
    let d = params.config.dim;
    let mut rows = Array2::zeros((crops.len(), d));
    for (i, crop) in crops.iter().enumerate() {
        if crop.values.len() != p {
            return Err(Error::Shape(format!(
                "crop {} has {} values, model expects {}",
                i,
                crop.values.len(),
                p
            )));
        }
        let (_, mut out) = forward_one(params, &crop.values);
        if params.config.l2_normalize {
            let norm = out.dot(&out).sqrt();
            if norm > NORM_GUARD {
                out /= norm;
            }
        }
        rows.row_mut(i).assign(&out);
    }
    Ok(rows)
}

/// Parameter gradients of `sum(upstream ⊙ embed(params, crops))`.
///
/// Crops are treated as constants, so no input gradient is produced. The
/// normalization Jacobian is included when the model normalizes outputs.
pub fn embed_backward(
    params: &EmbedderParams,
    crops: &[CropFeature],
    upstream: &Array2<f64>,
) -> Result<EmbedderGrads> {
    let p = params.config.input_len();
    let d = params.config.dim;
    if upstream.dim() != (crops.len(), d) {
        return Err(Error::Shape(format!(
            "upstream gradient {:?} does not match {} crops x dim {}",
            upstream.dim(),
            crops.len(),
            d
        )));
    }
    let mut grads = EmbedderGrads::zeros(params);
    for (i, crop) in crops.iter().enumerate() {
        if crop.values.len() != p {
            return Err(Error::Shape(format!(
                "crop {} has {} values, model expects {}",
                i,
                crop.values.len(),
                p
            )));
        }
        let x = ndarray::ArrayView1::from(&crop.values[..]);
        let (hidden, out) = forward_one(params, &crop.values);
        let g = upstream.row(i);

        // Through normalization y = v/‖v‖: dv = (g − y (y·g)) / ‖v‖.
        let g_out: Array1<f64> = if params.config.l2_normalize {
            let norm = out.dot(&out).sqrt();
            if norm > NORM_GUARD {
                let y = &out / norm;
                let proj = y.dot(&g);
                (&g.to_owned() - &(y * proj)) / norm
            } else {
                g.to_owned()
            }
        } else {
            g.to_owned()
        };

        grads.b2 += &g_out;
        for r in 0..d {
            let gr = g_out[r];
            if gr != 0.0 {
                grads.w2.row_mut(r).scaled_add(gr, &hidden);
            }
        }
        let g_hidden = params.w2.t().dot(&g_out);
        let g_pre = g_hidden * hidden.mapv(|h| 1.0 - h * h);
        grads.b1 += &g_pre;
        for r in 0..params.config.hidden {
            let gr = g_pre[r];
            if gr != 0.0 {
                grads.w1.row_mut(r).scaled_add(gr, &x);
            }
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> EmbedderConfig {
        EmbedderConfig {
            patch_w: 2,
            patch_h: 2,
            hidden: 4,
            dim: 3,
            l2_normalize: false,
        }
    }

    fn random_crop(rng: &mut Prng, len: usize) -> CropFeature {
        CropFeature {
            values: (0..len).map(|_| rng.uniform()).collect(),
        }
    }

    #[test]
    fn crop_of_constant_image_is_constant() {
        let img = RgbImage::filled(20, 10, [200, 100, 50]);
        let bbox = BBox::new(0.0, 0.0, 20.0, 10.0).unwrap();
        let crop = extract_crop(&img, &bbox, 4, 4).unwrap();
        assert_eq!(crop.values.len(), 48);
        for px in crop.values.chunks_exact(3) {
            assert!((px[0] - 200.0 / 255.0).abs() < 1e-12);
            assert!((px[1] - 100.0 / 255.0).abs() < 1e-12);
            assert!((px[2] - 50.0 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_pixel_box_replicates_that_pixel() {
        let mut img = RgbImage::filled(8, 8, [0, 0, 0]);
        img.put(3, 4, [10, 20, 30]);
        // Area [3,4) x [4,5) covers exactly pixel (3,4).
        let bbox = BBox::new(3.0, 4.0, 1.0, 1.0).unwrap();
        let crop = extract_crop(&img, &bbox, 3, 3).unwrap();
        for px in crop.values.chunks_exact(3) {
            assert_eq!(px, [10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
        }
    }

    #[test]
    fn checkerboard_upsample_matches_hand_bilinear() {
        // 2x2 checkerboard: white at (0,0) and (1,1).
        let mut img = RgbImage::new(2, 2);
        img.put(0, 0, [255, 255, 255]);
        img.put(1, 1, [255, 255, 255]);
        let bbox = BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let crop = extract_crop(&img, &bbox, 4, 4).unwrap();
        // Sample positions are [0, 0.25, 0.75, 1] on each axis; with
        // f(x,y) = (1-x)(1-y) + xy the expected grid is:
        #[rustfmt::skip]
        let expected = [
            1.0,   0.75,  0.25,  0.0,
            0.75,  0.625, 0.375, 0.25,
            0.25,  0.375, 0.625, 0.75,
            0.0,   0.25,  0.75,  1.0,
        ];
        for (i, &e) in expected.iter().enumerate() {
            for ch in 0..3 {
                let got = crop.values[i * 3 + ch];
                assert!((got - e).abs() < 1e-12, "pixel {i} channel {ch}: {got} vs {e}");
            }
        }
    }

    #[test]
    fn box_outside_image_is_an_error_and_partial_overlap_clips() {
        let img = RgbImage::filled(10, 10, [100, 100, 100]);
        let outside = BBox::new(20.0, 20.0, 5.0, 5.0).unwrap();
        assert!(extract_crop(&img, &outside, 4, 4).is_err());
        let touching = BBox::new(10.0, 0.0, 5.0, 5.0).unwrap();
        assert!(extract_crop(&img, &touching, 4, 4).is_err());
        let partial = BBox::new(-5.0, -5.0, 10.0, 10.0).unwrap();
        let crop = extract_crop(&img, &partial, 4, 4).unwrap();
        for v in &crop.values {
            assert!((v - 100.0 / 255.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_give_zero_embeddings() {
        let params = EmbedderParams::zeros(tiny_config()).unwrap();
        let mut rng = Prng::seed_from_u64(3);
        let crops = vec![random_crop(&mut rng, 12), random_crop(&mut rng, 12)];
        let out = embed(&params, &crops).unwrap();
        assert_eq!(out, Array2::<f64>::zeros((2, 3)));
    }

    #[test]
    fn identical_crops_embed_identically() {
        let mut rng = Prng::seed_from_u64(4);
        let params = EmbedderParams::init(tiny_config(), &mut rng).unwrap();
        let crop = random_crop(&mut rng, 12);
        let out = embed(&params, &[crop.clone(), crop]).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn forward_matches_scalar_loop_oracle() {
        let mut rng = Prng::seed_from_u64(8);
        let params = EmbedderParams::init(tiny_config(), &mut rng).unwrap();
        let crop = random_crop(&mut rng, 12);
        let out = embed(&params, &[crop.clone()]).unwrap();
        // Independent scalar evaluation.
        let mut hidden = [0.0f64; 4];
        for i in 0..4 {
            let mut acc = params.b1[i];
            for p in 0..12 {
                acc += params.w1[[i, p]] * crop.values[p];
            }
            hidden[i] = acc.tanh();
        }
        for r in 0..3 {
            let mut acc = params.b2[r];
            for i in 0..4 {
                acc += params.w2[[r, i]] * hidden[i];
            }
            assert!((out[[0, r]] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_rows_have_unit_norm() {
        let mut config = tiny_config();
        config.l2_normalize = true;
        let mut rng = Prng::seed_from_u64(12);
        let params = EmbedderParams::init(config, &mut rng).unwrap();
        let crops: Vec<CropFeature> = (0..5).map(|_| random_crop(&mut rng, 12)).collect();
        let out = embed(&params, &crops).unwrap();
        for i in 0..5 {
            let norm = out.row(i).dot(&out.row(i)).sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "row {i} norm {norm}");
        }
    }

    #[test]
    fn empty_input_gives_empty_matrix() {
        let params = EmbedderParams::zeros(tiny_config()).unwrap();
        let out = embed(&params, &[]).unwrap();
        assert_eq!(out.dim(), (0, 3));
    }

    #[test]
    fn wrong_crop_length_rejected() {
        let params = EmbedderParams::zeros(tiny_config()).unwrap();
        let crop = CropFeature {
            values: vec![0.0; 13],
        };
        assert!(embed(&params, &[crop.clone()]).is_err());
        assert!(embed_backward(&params, &[crop], &Array2::zeros((1, 3))).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_param_gradients() {
        let mut rng = Prng::seed_from_u64(5);
        let params = EmbedderParams::init(tiny_config(), &mut rng).unwrap();
        let crops = vec![random_crop(&mut rng, 12)];
        let grads = embed_backward(&params, &crops, &Array2::zeros((1, 3))).unwrap();
        assert!(grads.flatten().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_upstream() {
        let mut rng = Prng::seed_from_u64(6);
        let mut config = tiny_config();
        config.l2_normalize = true;
        let params = EmbedderParams::init(config, &mut rng).unwrap();
        let crops = vec![random_crop(&mut rng, 12), random_crop(&mut rng, 12)];
        let g = Array2::from_shape_fn((2, 3), |_| rng.uniform_range(-1.0, 1.0));
        let base = embed_backward(&params, &crops, &g).unwrap();
        let scaled = embed_backward(&params, &crops, &(&g * 2.5)).unwrap();
        for (a, b) in base.flatten().iter().zip(scaled.flatten()) {
            assert!((a * 2.5 - b).abs() < 1e-12);
        }
    }

    /// Central finite differences over every parameter of a tiny model, with
    /// and without output normalization, across many seeds.
    #[test]
    fn backward_matches_finite_differences_over_seeds() {
        for seed in 0..20 {
            let mut rng = Prng::seed_from_u64(1000 + seed);
            let mut config = tiny_config();
            config.l2_normalize = seed % 2 == 0;
            let params = EmbedderParams::init(config, &mut rng).unwrap();
            let crops = vec![random_crop(&mut rng, 12), random_crop(&mut rng, 12)];
            let upstream = Array2::from_shape_fn((2, 3), |_| rng.uniform_range(-1.0, 1.0));
            let analytic = embed_backward(&params, &crops, &upstream).unwrap().flatten();

            let scalar = |flat: &[f64]| -> f64 {
                let mut p = params.clone();
                p.assign_from_flat(flat).unwrap();
                (embed(&p, &crops).unwrap() * &upstream).sum()
            };
            let base = params.flatten();
            let h = 1e-4;
            for idx in 0..base.len() {
                let mut plus = base.clone();
                plus[idx] += h;
                let mut minus = base.clone();
                minus[idx] -= h;
                let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
                let a = analytic[idx];
                let denom = a.abs().max(fd.abs()).max(1e-3);
                assert!(
                    (a - fd).abs() / denom < 1e-5,
                    "seed {seed} param {idx}: analytic {a} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = Prng::seed_from_u64(9);
        let params = EmbedderParams::init(EmbedderConfig::default(), &mut rng).unwrap();
        params.save(&path).unwrap();
        let loaded = EmbedderParams::load(&path).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn checkpoint_rejects_inconsistent_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let json = r#"{"patch_w":2,"patch_h":2,"hidden":4,"dim":3,"l2_normalize":false,
            "w1":[0.0],"b1":[0,0,0,0],"w2":[0,0,0,0,0,0,0,0,0,0,0,0],"b2":[0,0,0]}"#;
        std::fs::write(&path, json).unwrap();
        assert!(EmbedderParams::load(&path).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = Prng::seed_from_u64(14);
        let params = EmbedderParams::init(tiny_config(), &mut rng).unwrap();
        let flat = params.flatten();
        assert_eq!(flat.len(), params.num_params());
        let mut other = EmbedderParams::zeros(tiny_config()).unwrap();
        other.assign_from_flat(&flat).unwrap();
        assert_eq!(other, params);
    }
}
