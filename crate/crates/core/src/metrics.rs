//! Lyapunov functionals, error norms and the per-step metrics log.

use serde::Serialize;
use std::io::Write;

use crate::control::ControlStep;
use crate::error::Result;
use crate::field::{ScalarField, VectorField};

/// `V1 = int rho~^2 dx`.
pub fn lyapunov_v1(rho_tilde: &ScalarField) -> f64 {
    rho_tilde.map(|v| v * v).integral()
}

/// `V2 = int (rho~^2 / 2 + |v~|^2 / 2) dx`.
pub fn lyapunov_v2(rho_tilde: &ScalarField, v_tilde: &VectorField) -> f64 {
    let vv = v_tilde.dot(v_tilde);
    rho_tilde
        .zip_with(&vv, |r, v| 0.5 * r * r + 0.5 * v)
        .integral()
}

/// Least-squares slope of `ln(err)` against `t`, using samples with
/// `err > 1e-6`. Returns 0 when fewer than two samples qualify.
pub fn fit_decay_rate(series: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|(_, e)| *e > 1e-6 && e.is_finite())
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (t, y) in &pts {
        sty += (t - mt) * (y - my);
        stt += (t - mt) * (t - mt);
    }
    if stt == 0.0 {
        0.0
    } else {
        sty / stt
    }
}

/// One row of the metrics log, recorded at every control step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub t: f64,
    pub err_l2: f64,
    pub v1: f64,
    pub v2: f64,
    pub vtilde_l2: f64,
    /// Coupling integral `S`.
    pub s: f64,
    pub fallback: bool,
    pub u_norm: Vec<f64>,
    pub w: Vec<f64>,
    pub beta: Vec<[f64; 2]>,
    pub gamma: Vec<f64>,
}

impl MetricsRecord {
    /// Builds a record from a controller evaluation.
    pub fn from_control(step: u64, t: f64, ctl: &ControlStep) -> Self {
        let v1 = lyapunov_v1(&ctl.rho_tilde);
        Self {
            step,
            t,
            err_l2: ctl.rho_tilde.l2_norm(),
            v1,
            v2: lyapunov_v2(&ctl.rho_tilde, &ctl.v_tilde),
            vtilde_l2: ctl.v_tilde.l2_norm(),
            s: ctl.integrals.s,
            fallback: ctl.allocation.is_fallback(),
            u_norm: ctl.command.u.iter().map(|u| u.norm()).collect(),
            w: ctl.command.w.clone(),
            beta: ctl.allocation.beta.clone(),
            gamma: ctl.allocation.gamma.clone(),
        }
    }

    /// A record without controller activity (`robots` zero commands).
    pub fn passive(step: u64, t: f64, rho_tilde: &ScalarField, v_tilde: &VectorField, robots: usize) -> Self {
        Self {
            step,
            t,
            err_l2: rho_tilde.l2_norm(),
            v1: lyapunov_v1(rho_tilde),
            v2: lyapunov_v2(rho_tilde, v_tilde),
            vtilde_l2: v_tilde.l2_norm(),
            s: 0.0,
            fallback: true,
            u_norm: vec![0.0; robots],
            w: vec![0.0; robots],
            beta: vec![[0.0; 2]; robots],
            gamma: vec![0.0; robots],
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.err_l2, self.v1, self.v2, self.vtilde_l2, self.s]
            .iter()
            .chain(&self.u_norm)
            .chain(&self.w)
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub records: Vec<MetricsRecord>,
}

impl MetricsLog {
    pub fn push(&mut self, r: MetricsRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&MetricsRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&MetricsRecord> {
        self.records.last()
    }

    pub fn err_series(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.t, r.err_l2)).collect()
    }

    pub fn decay_rate(&self) -> f64 {
        fit_decay_rate(&self.err_series())
    }

    /// Fraction of consecutive record pairs where `key` strictly decreases.
    pub fn fraction_decreasing(&self, key: impl Fn(&MetricsRecord) -> f64) -> f64 {
        self.fraction_pairs(|a, b| key(b) < key(a))
    }

    /// Fraction of consecutive record pairs where `key` does not increase.
    pub fn fraction_non_increasing(&self, key: impl Fn(&MetricsRecord) -> f64) -> f64 {
        self.fraction_pairs(|a, b| key(b) <= key(a))
    }

    fn fraction_pairs(&self, ok: impl Fn(&MetricsRecord, &MetricsRecord) -> bool) -> f64 {
        let pairs = self.records.len().saturating_sub(1);
        if pairs == 0 {
            return 1.0;
        }
        let good = self.records.windows(2).filter(|w| ok(&w[0], &w[1])).count();
        good as f64 / pairs as f64
    }

    pub fn max_err(&self) -> f64 {
        self.records.iter().map(|r| r.err_l2).fold(0.0, f64::max)
    }

    /// Writes the log as CSV with a header row. Per-robot columns follow the
    /// scalar columns, grouped by quantity and ordered by robot index.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let robots = self.records.first().map_or(0, |r| r.w.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = ["step", "t", "err_l2", "v1", "v2", "vtilde_l2", "s", "fallback"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for prefix in ["u_norm", "w", "beta_x", "beta_y", "gamma"] {
            header.extend((0..robots).map(|i| format!("{prefix}_{i}")));
        }
        out.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.step.to_string(),
                r.t.to_string(),
                r.err_l2.to_string(),
                r.v1.to_string(),
                r.v2.to_string(),
                r.vtilde_l2.to_string(),
                r.s.to_string(),
                u8::from(r.fallback).to_string(),
            ];
            row.extend(r.u_norm.iter().map(f64::to_string));
            row.extend(r.w.iter().map(f64::to_string));
            row.extend(r.beta.iter().map(|b| b[0].to_string()));
            row.extend(r.beta.iter().map(|b| b[1].to_string()));
            row.extend(r.gamma.iter().map(f64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}
