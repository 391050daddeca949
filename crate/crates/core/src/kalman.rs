//! Constant-velocity Kalman filter over box state (cx, cy, aspect, height).
//!
//! The 8-dimensional state carries the box center, aspect ratio (width/height),
//! height, and their per-frame velocities. Noise standard deviations scale with
//! the box height, following the convention of the DeepSORT/ByteTrack tracker
//! family. Updates use the Joseph form so covariances stay positive
//! semidefinite even with zero measurement noise.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::types::BBox;

/// Number of state dimensions: (cx, cy, aspect, height) plus velocities.
pub const STATE_DIM: usize = 8;
/// Number of measured dimensions: (cx, cy, aspect, height).
pub const MEASURE_DIM: usize = 4;

/// Lower bound applied to aspect ratio and height so states stay convertible
/// to valid boxes.
const GEOMETRY_FLOOR: f64 = 1e-6;

/// Gaussian belief over one track's motion state.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    /// State mean: (cx, cy, aspect, height, vcx, vcy, va, vh).
    pub mean: Array1<f64>,
    /// 8×8 symmetric positive-semidefinite covariance.
    pub covariance: Array2<f64>,
}

/// Noise model shared by every track of one tracker instance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanFilter {
    /// Process/initiation position std per unit of box height.
    pub std_weight_position: f64,
    /// Process/initiation velocity std per unit of box height.
    pub std_weight_velocity: f64,
    /// Measurement position std per unit of box height.
    pub std_weight_measurement: f64,
    /// Aspect-ratio std used at initiation and in the process noise.
    pub aspect_std: f64,
    /// Aspect-velocity std used at initiation and in the process noise.
    pub aspect_velocity_std: f64,
    /// Aspect-ratio std of the measurement noise.
    pub aspect_measurement_std: f64,
}

impl Default for KalmanFilter {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
            aspect_std: 1e-2,
            aspect_velocity_std: 1e-5,
            aspect_measurement_std: 1e-1,
        }
    }
}

/// Converts a box to its (cx, cy, aspect, height) measurement vector.
pub fn bbox_to_measurement(bbox: &BBox) -> Array1<f64> {
    let (cx, cy) = bbox.center();
    Array1::from(vec![cx, cy, bbox.width / bbox.height, bbox.height])
}

/// Converts a (cx, cy, aspect, height) vector back to a box, flooring the
/// geometry so the result is always valid.
pub fn measurement_to_bbox(m: &Array1<f64>) -> BBox {
    let height = m[3].max(GEOMETRY_FLOOR);
    let width = (m[2] * height).max(GEOMETRY_FLOOR);
    BBox::new(m[0] - width / 2.0, m[1] - height / 2.0, width, height)
        .expect("floored geometry is always positive")
}

/// The box described by a state's mean.
pub fn state_bbox(state: &KalmanState) -> BBox {
    let m = state.mean.slice(ndarray::s![0..MEASURE_DIM]).to_owned();
    measurement_to_bbox(&m)
}

/// True when `covariance + 1e-9·I` admits a Cholesky factorization, i.e. the
/// covariance is positive semidefinite up to numerical slack.
pub fn covariance_is_psd(state: &KalmanState) -> bool {
    let n = state.covariance.nrows();
    let mut shifted = state.covariance.clone();
    for i in 0..n {
        shifted[[i, i]] += 1e-9;
    }
    cholesky(&shifted).is_some()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix,
/// or `None` when a pivot is not strictly positive.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solves `A x = b` given the Cholesky factor `L` of `A` (forward then
/// backward substitution).
fn solve_cholesky(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in (i + 1)..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Constant-velocity transition matrix (dt = 1).
fn transition_matrix() -> Array2<f64> {
    let mut f = Array2::<f64>::eye(STATE_DIM);
    for i in 0..MEASURE_DIM {
        f[[i, i + MEASURE_DIM]] = 1.0;
    }
    f
}

impl KalmanFilter {
    /// Filter with explicit noise weights; zeros give an exact noiseless model.
    pub fn with_weights(
        std_weight_position: f64,
        std_weight_velocity: f64,
        std_weight_measurement: f64,
        aspect_std: f64,
        aspect_velocity_std: f64,
        aspect_measurement_std: f64,
    ) -> Self {
        Self {
            std_weight_position,
            std_weight_velocity,
            std_weight_measurement,
            aspect_std,
            aspect_velocity_std,
            aspect_measurement_std,
        }
    }

    /// New-track belief from a first measured box: zero velocities and a
    /// diagonal covariance scaled to the box height.
    pub fn initiate(&self, bbox: &BBox) -> KalmanState {
        let m = bbox_to_measurement(bbox);
        let mut mean = Array1::<f64>::zeros(STATE_DIM);
        for i in 0..MEASURE_DIM {
            mean[i] = m[i];
        }
        let h = m[3];
        let std = [
            2.0 * self.std_weight_position * h,
            2.0 * self.std_weight_position * h,
            self.aspect_std,
            2.0 * self.std_weight_position * h,
            10.0 * self.std_weight_velocity * h,
            10.0 * self.std_weight_velocity * h,
            self.aspect_velocity_std,
            10.0 * self.std_weight_velocity * h,
        ];
        let mut covariance = Array2::<f64>::zeros((STATE_DIM, STATE_DIM));
        for i in 0..STATE_DIM {
            covariance[[i, i]] = std[i] * std[i];
        }
        KalmanState { mean, covariance }
    }

    /// Process-noise covariance for the current belief (scaled to its height).
    fn process_noise(&self, height: f64) -> Array2<f64> {
        let std = [
            self.std_weight_position * height,
            self.std_weight_position * height,
            self.aspect_std,
            self.std_weight_position * height,
            self.std_weight_velocity * height,
            self.std_weight_velocity * height,
            self.aspect_velocity_std,
            self.std_weight_velocity * height,
        ];
        let mut q = Array2::<f64>::zeros((STATE_DIM, STATE_DIM));
        for i in 0..STATE_DIM {
            q[[i, i]] = std[i] * std[i];
        }
        q
    }

    /// Measurement-noise covariance for the current belief.
    fn measurement_noise(&self, height: f64) -> Array2<f64> {
        let std = [
            self.std_weight_measurement * height,
            self.std_weight_measurement * height,
            self.aspect_measurement_std,
            self.std_weight_measurement * height,
        ];
        let mut r = Array2::<f64>::zeros((MEASURE_DIM, MEASURE_DIM));
        for i in 0..MEASURE_DIM {
            r[[i, i]] = std[i] * std[i];
        }
        r
    }

    /// Advances the belief one frame under the constant-velocity model.
    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let f = transition_matrix();
        let q = self.process_noise(state.mean[3]);
        let mut mean = f.dot(&state.mean);
        mean[2] = mean[2].max(GEOMETRY_FLOOR);
        mean[3] = mean[3].max(GEOMETRY_FLOOR);
        let covariance = f.dot(&state.covariance).dot(&f.t()) + q;
        KalmanState { mean, covariance }
    }

    /// Projects the belief into measurement space: `(H·mean, H·P·Hᵀ + R)`.
    pub fn project(&self, state: &KalmanState) -> (Array1<f64>, Array2<f64>) {
        let mean = state.mean.slice(ndarray::s![0..MEASURE_DIM]).to_owned();
        let mut s = state
            .covariance
            .slice(ndarray::s![0..MEASURE_DIM, 0..MEASURE_DIM])
            .to_owned();
        s += &self.measurement_noise(state.mean[3]);
        (mean, s)
    }

    /// Folds a measured box into the belief with the standard Kalman gain;
    /// the covariance update uses the Joseph form to preserve PSD.
    pub fn update(&self, state: &KalmanState, bbox: &BBox) -> Result<KalmanState> {
        let z = bbox_to_measurement(bbox);
        let (projected_mean, s) = self.project(state);
        let l = cholesky(&s).ok_or_else(|| {
            Error::Invalid("singular innovation covariance in Kalman update".into())
        })?;
        // Gain K = P·Hᵀ·S⁻¹, solved row-by-row from S·Kᵀ = (P·Hᵀ)ᵀ.
        let b = state
            .covariance
            .slice(ndarray::s![.., 0..MEASURE_DIM])
            .to_owned();
        let mut gain = Array2::<f64>::zeros((STATE_DIM, MEASURE_DIM));
        for i in 0..STATE_DIM {
            let row = solve_cholesky(&l, &b.row(i).to_owned());
            for j in 0..MEASURE_DIM {
                gain[[i, j]] = row[j];
            }
        }
        let innovation = &z - &projected_mean;
        let mut mean = &state.mean + &gain.dot(&innovation);
        mean[2] = mean[2].max(GEOMETRY_FLOOR);
        mean[3] = mean[3].max(GEOMETRY_FLOOR);
        // Joseph form: (I − K·H)·P·(I − K·H)ᵀ + K·R·Kᵀ.
        let mut i_kh = Array2::<f64>::eye(STATE_DIM);
        for i in 0..STATE_DIM {
            for j in 0..MEASURE_DIM {
                i_kh[[i, j]] -= gain[[i, j]];
            }
        }
        let r = self.measurement_noise(state.mean[3]);
        let mut covariance =
            i_kh.dot(&state.covariance).dot(&i_kh.t()) + gain.dot(&r).dot(&gain.t());
        // Symmetrize to cancel accumulated round-off drift.
        let transposed = covariance.t().to_owned();
        covariance = (&covariance + &transposed) * 0.5;
        Ok(KalmanState { mean, covariance })
    }
}
