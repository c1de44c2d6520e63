//! Spreading-speed estimates and the least-squares fit shared by the
//! front and flux estimators.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedMethod {
    /// `μ` times the window average of the semi-wave boundary flux.
    SemiWaveFlux,
    /// Least-squares slope of a front position.
    FrontSlope,
    /// Autonomous phase-plane shooting.
    Shooting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedEstimate {
    pub value: f64,
    pub window: (f64, f64),
    /// Method-specific residual (RMS fit residual, window drift, or solver
    /// tolerance).
    pub residual: f64,
    pub method: SpeedMethod,
}

/// Least-squares line `y ≈ slope·t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
}

pub fn fit_line(ts: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = ts.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    // center for conditioning
    let tm = ts.iter().sum::<f64>() / nf;
    let ym = ys.iter().sum::<f64>() / nf;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
    }
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let ss = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| {
            let r = y - (slope * t + intercept);
            r * r
        })
        .sum::<f64>();
    Some(LineFit {
        slope,
        intercept,
        rms_residual: (ss / nf).sqrt(),
    })
}
