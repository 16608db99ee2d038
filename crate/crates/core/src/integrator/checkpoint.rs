//! `.ckpt` files: one JSON header line, then little-endian `f64` coefficient
//! blocks of `n_modes^2` values each: `u`, `u_t`, `g` and, once a step has been
//! taken, the previous `u` and `P_N f(u)` needed by the Adams-Bashforth history.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{History, SchemeConfig, Stepper};
use crate::error::{Error, Result};
use crate::model::{Model, Nonlinearity, SourceTerm};
use crate::spectral::{GridSpec, ModalField};
use crate::state::State;

pub const CHECKPOINT_EXTENSION: &str = "ckpt";
pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "hyperch-checkpoint";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    n_modes: usize,
    side: f64,
    time: f64,
    start_time: f64,
    steps: u64,
    config: SchemeConfig,
    stabilization: f64,
    /// Absent when the stabilization is fixed.
    stabilization_radius: Option<f64>,
    nonlinearity: Nonlinearity,
    seed: Option<u64>,
    dissipation: f64,
    max_energy_increase: f64,
    has_history: bool,
}

/// Everything needed to continue a run bitwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: State,
    pub config: SchemeConfig,
    pub nl: Nonlinearity,
    pub source: SourceTerm,
    pub steps: u64,
    /// Time at which the run started; step `k` ends at `start_time + k dt`.
    pub start_time: f64,
    pub seed: Option<u64>,
    pub stabilization: f64,
    /// Range of `u` covered by the automatic stabilization (infinite when fixed).
    pub stabilization_radius: f64,
    pub dissipation: f64,
    pub max_energy_increase: f64,
    history: Option<History>,
}

impl Checkpoint {
    pub fn from_stepper(s: &Stepper, seed: Option<u64>) -> Self {
        Self {
            state: s.state.clone(),
            config: s.cfg,
            nl: s.model.nl,
            source: s.model.source.clone(),
            steps: s.steps,
            start_time: s.t0,
            seed,
            stabilization: s.stab,
            stabilization_radius: s.radius,
            dissipation: s.dissipation,
            max_energy_increase: s.max_increase,
            history: s.history.clone(),
        }
    }

    /// Rebuilds the stepper with the stored model.
    pub fn into_stepper(self) -> Stepper {
        let model = Model::new(self.nl, self.source.clone());
        self.build(model)
    }

    /// Rebuilds the stepper, refusing a model that differs from the stored one.
    pub fn resume(self, model: &Model) -> Result<Stepper> {
        if model.grid() != self.state.grid() {
            return Err(Error::CheckpointMismatch(format!(
                "grid {:?} vs stored {:?}",
                model.grid(),
                self.state.grid()
            )));
        }
        if model.nl != self.nl {
            return Err(Error::CheckpointMismatch(format!("nonlinearity {:?} vs stored {:?}", model.nl, self.nl)));
        }
        let same_g = model
            .source
            .g_modal
            .coeff
            .iter()
            .zip(self.source.g_modal.coeff.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !same_g {
            return Err(Error::CheckpointMismatch("source term differs".into()));
        }
        Ok(self.build(model.clone()))
    }

    fn build(self, model: Model) -> Stepper {
        let uu = model.values(&self.state.u);
        Stepper::assemble(
            model,
            self.config,
            self.stabilization,
            self.stabilization_radius,
            self.state,
            uu,
            self.history,
            self.steps,
            self.start_time,
            self.dissipation,
            self.max_energy_increase,
        )
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let grid = self.state.grid();
        let header = Header {
            format: FORMAT.into(),
            version: CHECKPOINT_VERSION,
            n_modes: grid.n_modes,
            side: grid.side,
            time: self.state.time,
            start_time: self.start_time,
            steps: self.steps,
            config: self.config,
            stabilization: self.stabilization,
            stabilization_radius: Some(self.stabilization_radius).filter(|r| r.is_finite()),
            nonlinearity: self.nl,
            seed: self.seed,
            dissipation: self.dissipation,
            max_energy_increase: self.max_energy_increase,
            has_history: self.history.is_some(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut blocks = vec![&self.state.u, &self.state.v, &self.source.g_modal];
        if let Some(h) = &self.history {
            blocks.push(&h.u);
            blocks.push(&h.f);
        }
        for b in blocks {
            let bytes: Vec<u8> = b.coeff.iter().flat_map(|c| c.to_le_bytes()).collect();
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let mut line = Vec::new();
        r.read_until(b'\n', &mut line)?;
        if line.last() != Some(&b'\n') {
            return Err(Error::CorruptFile("missing checkpoint header".into()));
        }
        let value: serde_json::Value = serde_json::from_slice(&line[..line.len() - 1])
            .map_err(|e| Error::CorruptFile(format!("bad checkpoint header: {e}")))?;
        if value.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
            return Err(Error::CorruptFile("not a checkpoint file".into()));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let h: Header =
            serde_json::from_value(value).map_err(|e| Error::CorruptFile(format!("bad checkpoint header: {e}")))?;
        let grid =
            GridSpec::new(h.n_modes, h.side).map_err(|e| Error::CorruptFile(format!("bad checkpoint grid: {e}")))?;
        let mut block = |what: &str| -> Result<ModalField> {
            let n = grid.n_modes;
            let mut bytes = vec![0u8; 8 * n * n];
            r.read_exact(&mut bytes)
                .map_err(|_| Error::CorruptFile(format!("truncated checkpoint block `{what}`")))?;
            let vals: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Ok(ModalField {
                grid,
                coeff: Array2::from_shape_vec((n, n), vals).expect("shape matches length"),
            })
        };
        let u = block("u")?;
        let v = block("u_t")?;
        let g = block("g")?;
        let history = if h.has_history {
            Some(History {
                u: block("u_prev")?,
                f: block("f_prev")?,
            })
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::CorruptFile("trailing bytes after checkpoint".into()));
        }
        h.config.validate().map_err(|e| Error::CorruptFile(e.to_string()))?;
        Ok(Self {
            state: State { u, v, time: h.time },
            config: h.config,
            nl: h.nonlinearity,
            source: SourceTerm::new(g),
            steps: h.steps,
            start_time: h.start_time,
            seed: h.seed,
            stabilization: h.stabilization,
            stabilization_radius: h.stabilization_radius.unwrap_or(f64::INFINITY),
            dissipation: h.dissipation,
            max_energy_increase: h.max_energy_increase,
            history,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, stepper: &Stepper, seed: Option<u64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    Checkpoint::from_stepper(stepper, seed).write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::read(BufReader::new(File::open(path)?))
}
