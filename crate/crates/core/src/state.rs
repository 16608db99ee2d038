use crate::error::{Error, Result};
use crate::spectral::{norm_pair, GridSpec, ModalField};

/// Phase-space point `U = (u, u_t)` at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub u: ModalField,
    pub v: ModalField,
    pub time: f64,
}

impl State {
    pub fn new(u: ModalField, v: ModalField, time: f64) -> Result<Self> {
        u.grid.check_same(&v.grid)?;
        if !(time >= 0.0 && time.is_finite()) {
            return Err(Error::InvalidParameter(format!("state time must be finite and >= 0, got {time}")));
        }
        Ok(Self { u, v, time })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            u: ModalField::zeros(grid),
            v: ModalField::zeros(grid),
            time: 0.0,
        }
    }

    /// `(u0, 0)` at time zero.
    pub fn at_rest(u: ModalField) -> Self {
        let v = ModalField::zeros(u.grid);
        Self { u, v, time: 0.0 }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.u.grid
    }

    /// `||U||_s` in the graph norm of `V_s`.
    pub fn norm(&self, s: f64) -> f64 {
        norm_pair(&self.u, &self.v, s).expect("state grids agree")
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.time.is_finite()
    }

    /// Same state embedded into (or truncated to) `n` modes.
    pub fn resized(&self, n: usize) -> Result<State> {
        Ok(State {
            u: self.u.resized(n)?,
            v: self.v.resized(n)?,
            time: self.time,
        })
    }
}
