use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Stepper;
use crate::error::{Error, Result};
use crate::model::DiagnosticParams;
use crate::spectral::norm_hs;

/// One logged instant. Field names follow the CSV header.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    /// `||U||_0`.
    pub norm0: f64,
    /// `||U||_2`.
    pub norm2: f64,
    #[serde(rename = "ut_Vprime")]
    pub ut_vprime: f64,
    pub energy: f64,
    #[serde(rename = "calF")]
    pub cal_f: f64,
    #[serde(rename = "calG")]
    pub cal_g: f64,
    #[serde(rename = "calH")]
    pub cal_h: f64,
    /// Trapezoid-rule `int_0^t ||u_t||_{V'}^2` over every step.
    pub dissip_cum: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrajectoryLog {
    pub samples: Vec<Sample>,
    /// Step size used.
    pub dt: f64,
    pub sample_every: usize,
    /// Largest single-step energy increase over the whole run.
    pub max_energy_increase: f64,
}

impl TrajectoryLog {
    pub fn new(dt: f64, sample_every: usize) -> Self {
        Self {
            samples: Vec::new(),
            dt,
            sample_every,
            max_energy_increase: 0.0,
        }
    }

    /// Appends the stepper's current state; `diag = None` leaves F, G, H as NaN.
    pub fn record(&mut self, s: &Stepper, diag: Option<&DiagnosticParams>) -> Result<()> {
        let state = s.state();
        let model = s.model();
        let (cal_f, cal_g, cal_h) = match diag {
            Some(p) => {
                let acc = s.acceleration();
                let f = model.diagnostic_f_parts(&state.u, &state.v, &acc, p)?;
                let h = model.higher_functionals(state)?;
                (f, h.g, h.h)
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        if let Some(last) = self.samples.last() {
            if !(state.time > last.t) {
                return Err(Error::InvalidParameter("log times must increase".into()));
            }
        }
        self.samples.push(Sample {
            t: state.time,
            norm0: state.norm(0.0),
            norm2: state.norm(2.0),
            ut_vprime: norm_hs(&state.v, -0.5),
            energy: s.energy().total,
            cal_f,
            cal_g,
            cal_h,
            dissip_cum: s.dissipation(),
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.energy).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for s in &self.samples {
            wr.serialize(s).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads samples back; `dt` and `sample_every` are inferred from the times.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let samples = rd
            .deserialize()
            .collect::<std::result::Result<Vec<Sample>, _>>()
            .map_err(|e| Error::CorruptFile(format!("bad trajectory csv: {e}")))?;
        let dt = if samples.len() > 1 { samples[1].t - samples[0].t } else { 0.0 };
        Ok(Self {
            samples,
            dt,
            sample_every: 1,
            max_energy_increase: f64::NAN,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::CorruptFile(format!("{other:?}")),
    }
}

/// `|E(t) - E(s) + int_s^t ||u_t||_{V'}^2|` between two samples.
pub fn energy_equality_residual(log: &TrajectoryLog, s_idx: usize, t_idx: usize) -> Result<f64> {
    let n = log.samples.len();
    for (what, v) in [("s_idx", s_idx), ("t_idx", t_idx)] {
        if v >= n {
            return Err(Error::Index {
                what,
                value: v,
                lo: 0,
                hi: n.saturating_sub(1),
            });
        }
    }
    if s_idx > t_idx {
        return Err(Error::Index {
            what: "s_idx",
            value: s_idx,
            lo: 0,
            hi: t_idx,
        });
    }
    let (a, b) = (&log.samples[s_idx], &log.samples[t_idx]);
    Ok((b.energy - a.energy + (b.dissip_cum - a.dissip_cum)).abs())
}

/// Largest `|dG/dt + G - H|` over interior samples, `dG/dt` by central differences.
pub fn higher_energy_residual(log: &TrajectoryLog) -> Result<f64> {
    let s = &log.samples;
    if s.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "higher energy residual needs at least 3 samples, got {}",
            s.len()
        )));
    }
    if s.iter().any(|x| x.cal_g.is_nan() || x.cal_h.is_nan()) {
        return Err(Error::InsufficientData("log was recorded without G and H".into()));
    }
    let h = s[1].t - s[0].t;
    for w in s.windows(2) {
        if ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::InsufficientData("samples are not uniformly spaced".into()));
        }
    }
    let mut worst = 0.0f64;
    for i in 1..s.len() - 1 {
        let dg = (s[i + 1].cal_g - s[i - 1].cal_g) / (2.0 * h);
        worst = worst.max((dg + s[i].cal_g - s[i].cal_h).abs());
    }
    Ok(worst)
}
