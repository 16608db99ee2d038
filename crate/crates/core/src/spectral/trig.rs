//! FFT-backed trigonometric sums on the interior nodes of a type-I sine grid.
//!
//! For a grid with `m` interior nodes the angles are `theta_p = pi * p / (m + 1)`.
//! Every transform in the crate reduces to evaluating
//!
//! ```text
//! out[p] = sum_{j=1}^{J} a[j] * trig(j * theta_p),   p = 1..=Q
//! ```
//!
//! with `trig` either `sin` or `cos`. With `P = 2 (m + 1)` the complex sum
//! `sum_j a[j] exp(2 pi i j p / P)` carries the cosine sum in its real part and
//! the sine sum in its imaginary part, so a single inverse FFT of length `P`
//! covers both. Sine synthesis and sine analysis (DST-I) are the same
//! operation because the DST-I matrix is symmetric.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Lanes transformed per batch (an even number, so pairs never straddle batches).
const LANE_BLOCK: usize = 32;

/// Which trigonometric function a sum is taken against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trig {
    Sin,
    Cos,
}

/// Planned trigonometric sums for one grid size.
pub struct TrigPlan {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TrigPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrigPlan").field("m", &self.m).finish()
    }
}

impl TrigPlan {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_inverse(2 * (m + 1));
        Self { m, fft }
    }

    /// Number of interior nodes per axis.
    pub fn nodes(&self) -> usize {
        self.m
    }

    fn fft_len(&self) -> usize {
        2 * (self.m + 1)
    }

    /// Applies the trigonometric sum along `axis` of `input`.
    ///
    /// Lanes along `axis` are read as `a[1..=J]` (J = lane length) and replaced by
    /// `q` outputs evaluated at `p = 1..=q`. Both `J` and `q` must not exceed `m + 1`.
    /// Lanes are packed in pairs as real and imaginary parts of one complex
    /// transform and separated afterwards by conjugate symmetry.
    pub fn sum_along(&self, input: ArrayView2<f64>, axis: Axis, trig: Trig, q: usize) -> Array2<f64> {
        let len = self.fft_len();
        let lane_len = input.len_of(axis);
        assert!(lane_len < len / 2 + 1 && q <= self.m + 1, "trig sum exceeds grid");

        let other = Axis(1 - axis.index());
        let n_lanes = input.len_of(other);
        let shape = if axis.index() == 0 { (q, n_lanes) } else { (n_lanes, q) };
        let mut out = Array2::<f64>::zeros(shape);
        let mut buf = vec![Complex::new(0.0, 0.0); LANE_BLOCK.div_ceil(2) * len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        // Blocks of lanes keep the work buffer cache-resident.
        for first in (0..n_lanes).step_by(LANE_BLOCK) {
            let count = LANE_BLOCK.min(n_lanes - first);
            let buf = &mut buf[..count.div_ceil(2) * len];
            buf.fill(Complex::new(0.0, 0.0));
            let lanes = input.slice_axis(other, ndarray::Slice::from(first..first + count));
            for (lane_idx, lane) in lanes.lanes(axis).into_iter().enumerate() {
                let chunk = &mut buf[(lane_idx / 2) * len..(lane_idx / 2 + 1) * len];
                if lane_idx % 2 == 0 {
                    for (c, &a) in chunk[1..].iter_mut().zip(lane.iter()) {
                        c.re = a;
                    }
                } else {
                    for (c, &a) in chunk[1..].iter_mut().zip(lane.iter()) {
                        c.im = a;
                    }
                }
            }
            self.fft.process_with_scratch(buf, &mut scratch);

            let mut dest = out.slice_axis_mut(other, ndarray::Slice::from(first..first + count));
            for (lane_idx, mut lane) in dest.lanes_mut(axis).into_iter().enumerate() {
                let chunk = &buf[(lane_idx / 2) * len..(lane_idx / 2 + 1) * len];
                let second = lane_idx % 2 == 1;
                for (i, o) in lane.iter_mut().enumerate() {
                    let (x, y) = (chunk[i + 1], chunk[len - i - 1]);
                    *o = 0.5
                        * match (trig, second) {
                            (Trig::Sin, false) => x.im - y.im,
                            (Trig::Cos, false) => x.re + y.re,
                            (Trig::Sin, true) => y.re - x.re,
                            (Trig::Cos, true) => x.im + y.im,
                        };
                }
            }
        }
        out
    }

    /// Two-dimensional sum: first along axis 1 with `trig_y`, then along axis 0 with `trig_x`.
    /// Output shape is `(qx, qy)`.
    pub fn sum_2d(
        &self,
        input: ArrayView2<f64>,
        trig_x: Trig,
        trig_y: Trig,
        qx: usize,
        qy: usize,
    ) -> Array2<f64> {
        let stage = self.sum_along(input, Axis(1), trig_y, qy);
        self.sum_along(stage.view(), Axis(0), trig_x, qx)
    }
}

/// Shared plan for `m` interior nodes; plans are cached process-wide.
pub fn plan(m: usize) -> Arc<TrigPlan> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<TrigPlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("plan cache poisoned");
    guard.entry(m).or_insert_with(|| Arc::new(TrigPlan::new(m))).clone()
}

/// Smallest `m >= min_nodes` such that `m + 1` has no prime factor above 5,
/// which keeps the FFT length `2 (m + 1)` on the fast mixed-radix path.
pub fn fft_friendly_nodes(min_nodes: usize) -> usize {
    let mut m = min_nodes.max(1);
    loop {
        let mut r = m + 1;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
