use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::GridSpec;

/// Cubic nonlinearity `f(r) = a3 r^3 + a2 r^2 + a1 r` with potential
/// `F(r) = a3 r^4 / 4 + a2 r^3 / 3 + a1 r^2 / 2` and its structural constants:
/// `f' >= -lambda_bound`, `|f''(r)| <= m_bound (1 + |r|)`, `f(r) r >= 0` for `|r| >= r0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub a3: f64,
    pub a2: f64,
    pub a1: f64,
    pub lambda_bound: f64,
    pub m_bound: f64,
    pub r0: f64,
}

impl Nonlinearity {
    /// Builds `f` and derives its constants. `a3 = 0` is accepted only for the
    /// linear case `a2 = 0`, which the oracle problems use.
    pub fn new(a3: f64, a2: f64, a1: f64) -> Result<Self> {
        if ![a3, a2, a1].iter().all(|c| c.is_finite()) {
            return Err(Error::UnsupportedNonlinearity("coefficients must be finite".into()));
        }
        if a3 < 0.0 || (a3 == 0.0 && a2 != 0.0) {
            return Err(Error::UnsupportedNonlinearity(format!(
                "need a3 > 0 (or a linear f), got a3 = {a3}, a2 = {a2}"
            )));
        }
        Ok(Self {
            a3,
            a2,
            a1,
            lambda_bound: derived_lambda(a3, a2, a1),
            m_bound: (2.0 * a2).abs().max(6.0 * a3.abs()),
            r0: derived_r0(a3, a2, a1),
        })
    }

    /// `f = 0`.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0).expect("zero nonlinearity is valid")
    }

    pub fn linear(a1: f64) -> Result<Self> {
        Self::new(0.0, 0.0, a1)
    }

    /// Replaces the recorded lower bound of `f'` (used to exercise the assumption checker).
    pub fn with_lambda_bound(mut self, lambda_bound: f64) -> Self {
        self.lambda_bound = lambda_bound;
        self
    }

    pub fn with_m_bound(mut self, m_bound: f64) -> Self {
        self.m_bound = m_bound;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.a3 == 0.0 && self.a2 == 0.0 && self.a1 == 0.0
    }

    pub fn is_linear(&self) -> bool {
        self.a3 == 0.0 && self.a2 == 0.0
    }

    /// Whether `f` has a quadratic part, which makes some products cosine-type.
    pub fn has_quadratic(&self) -> bool {
        self.a2 != 0.0
    }

    #[inline]
    pub fn f(&self, r: f64) -> f64 {
        r * (self.a1 + r * (self.a2 + r * self.a3))
    }

    #[inline]
    pub fn df(&self, r: f64) -> f64 {
        self.a1 + r * (2.0 * self.a2 + 3.0 * self.a3 * r)
    }

    #[inline]
    pub fn d2f(&self, r: f64) -> f64 {
        2.0 * self.a2 + 6.0 * self.a3 * r
    }

    #[inline]
    pub fn potential(&self, r: f64) -> f64 {
        r * r * (0.5 * self.a1 + r * (self.a2 / 3.0 + 0.25 * self.a3 * r))
    }

    /// Global minimum of `F` (the quartic is coercive when `a3 > 0`).
    pub fn potential_min(&self) -> f64 {
        if self.a3 == 0.0 {
            return if self.a1 >= 0.0 { 0.0 } else { f64::NEG_INFINITY };
        }
        // critical points: r = 0 and roots of a3 r^2 + a2 r + a1
        let mut best = 0.0f64;
        let disc = self.a2 * self.a2 - 4.0 * self.a3 * self.a1;
        if disc >= 0.0 {
            for sgn in [-1.0, 1.0] {
                let r = (-self.a2 + sgn * disc.sqrt()) / (2.0 * self.a3);
                best = best.min(self.potential(r));
            }
        }
        best
    }

    /// Largest `|f'|` on `[-radius, radius]`.
    pub fn df_max_abs_on(&self, radius: f64) -> f64 {
        let mut best = self.df(radius).abs().max(self.df(-radius).abs());
        if self.a3 > 0.0 {
            let vertex = -self.a2 / (3.0 * self.a3);
            if vertex.abs() <= radius {
                best = best.max(self.df(vertex).abs());
            }
        }
        best
    }

    /// Largest `f'` on `[-radius, radius]`.
    pub fn df_max_on(&self, radius: f64) -> f64 {
        self.df(radius).max(self.df(-radius))
    }

    /// `liminf_{|r| -> inf} f(r) / r`.
    pub fn growth_liminf(&self) -> f64 {
        if self.a3 > 0.0 {
            f64::INFINITY
        } else {
            self.a1
        }
    }
}

fn derived_lambda(a3: f64, a2: f64, a1: f64) -> f64 {
    if a3 > 0.0 {
        (a2 * a2 / (3.0 * a3) - a1).max(0.0)
    } else {
        (-a1).max(0.0)
    }
}

fn derived_r0(a3: f64, a2: f64, a1: f64) -> f64 {
    // f(r) r = r^2 (a3 r^2 + a2 r + a1)
    if a3 == 0.0 {
        return if a1 >= 0.0 { 0.0 } else { f64::INFINITY };
    }
    let disc = a2 * a2 - 4.0 * a3 * a1;
    if disc < 0.0 {
        return 0.0;
    }
    let s = disc.sqrt();
    let lo = (-a2 - s) / (2.0 * a3);
    let hi = (-a2 + s) / (2.0 * a3);
    hi.max(-lo).max(0.0)
}

/// Outcome of checking the structural hypotheses on `f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Closed-form `max(0, a2^2 / (3 a3) - a1)`.
    pub lambda: f64,
    /// `max(|2 a2|, 6 a3)`.
    pub m_bound: f64,
    /// Smallest `r0` with `f(r) r >= 0` for `|r| >= r0`.
    pub r0: f64,
    /// First eigenvalue of `A` on the grid.
    pub lambda_1: f64,
    /// `liminf f(r)/r > -lambda_1`.
    pub relaxed_condition: bool,
    /// The recorded `lambda_bound` really bounds `f'` from below.
    pub lambda_bound_ok: bool,
    /// The recorded `m_bound` really bounds `|f''| / (1 + |r|)`.
    pub m_bound_ok: bool,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.lambda_bound_ok && self.m_bound_ok && self.r0.is_finite()
    }
}

/// Checks (f1)-(f3) for the cubic class and the relaxed growth condition against `lambda_1`.
pub fn check_assumptions(nl: &Nonlinearity, grid: &GridSpec) -> Result<AssumptionReport> {
    if nl.a3 <= 0.0 {
        return Err(Error::UnsupportedNonlinearity(format!(
            "assumption check needs a3 > 0, got {}",
            nl.a3
        )));
    }
    let lambda = derived_lambda(nl.a3, nl.a2, nl.a1);
    let m_bound = (2.0 * nl.a2).abs().max(6.0 * nl.a3);
    let lambda_1 = grid.lambda_1();
    let tol = 1e-12 * (1.0 + lambda);
    Ok(AssumptionReport {
        lambda,
        m_bound,
        r0: derived_r0(nl.a3, nl.a2, nl.a1),
        lambda_1,
        relaxed_condition: nl.growth_liminf() > -lambda_1,
        lambda_bound_ok: nl.lambda_bound + tol >= lambda,
        m_bound_ok: nl.m_bound + 1e-12 * m_bound >= m_bound,
    })
}
