use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{MorlError, Result};

/// Empirical quantile with linear interpolation between order statistics
/// (`h = (n - 1) p`). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileSeries {
    pub levels: Vec<f64>,
    /// `rows[t][k]` is quantile `levels[k]` at epoch `t`.
    pub rows: Vec<Vec<f64>>,
}

impl QuantileSeries {
    pub fn column(&self, level: f64) -> Option<Vec<f64>> {
        let k = self.levels.iter().position(|l| *l == level)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// `epoch,q25,median,q75`; requires levels `[0.25, 0.5, 0.75]`.
    pub fn to_csv(&self) -> Result<String> {
        if self.levels != [0.25, 0.5, 0.75] {
            return Err(MorlError::Usage(
                "quantiles.csv needs levels 0.25, 0.5, 0.75".into(),
            ));
        }
        let mut out = String::from("epoch,q25,median,q75\n");
        for (t, r) in self.rows.iter().enumerate() {
            writeln!(out, "{t},{},{},{}", r[0], r[1], r[2]).expect("writing to a String");
        }
        Ok(out)
    }
}

/// Per-epoch quantiles across runs. `series[run][epoch]`; runs must have
/// equal length.
pub fn aggregate_quantiles(series: &[Vec<f64>], levels: &[f64]) -> Result<QuantileSeries> {
    let first = series
        .first()
        .ok_or_else(|| MorlError::Usage("cannot aggregate an empty run set".into()))?;
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(MorlError::Usage(
            "runs have different numbers of epochs".into(),
        ));
    }
    if let Some(l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(MorlError::Usage(format!(
            "quantile level {l} outside [0, 1]"
        )));
    }
    let mut column = vec![0.0; series.len()];
    let rows = (0..first.len())
        .map(|t| {
            for (c, s) in column.iter_mut().zip(series) {
                *c = s[t];
            }
            column.sort_by(f64::total_cmp);
            levels.iter().map(|&p| quantile(&column, p)).collect()
        })
        .collect();
    Ok(QuantileSeries {
        levels: levels.to_vec(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub f_star: f64,
    pub floor: f64,
    /// `f* - median_t`, clipped below at `floor`.
    pub gaps: Vec<f64>,
    pub at_floor: Vec<bool>,
}

impl GapSeries {
    /// `epoch,gap,at_floor`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,gap,at_floor\n");
        for (t, (g, f)) in self.gaps.iter().zip(&self.at_floor).enumerate() {
            writeln!(out, "{t},{g},{}", u8::from(*f)).expect("writing to a String");
        }
        out
    }
}

/// Default relative gap floor.
pub const DEFAULT_FLOOR_REL: f64 = 1e-6;

/// Optimality gaps of `median` against `f_star`, the best value observed
/// over all runs and epochs. The floor is `floor_rel * |f*|`, or `1e-12`
/// when that is zero.
pub fn optimality_gap_series(median: &[f64], f_star: f64, floor_rel: f64) -> GapSeries {
    let mut floor = floor_rel * f_star.abs();
    if !(floor > 0.0) {
        floor = 1e-12;
    }
    let raw: Vec<f64> = median.iter().map(|m| f_star - m).collect();
    GapSeries {
        f_star,
        floor,
        at_floor: raw.iter().map(|g| *g <= floor).collect(),
        gaps: raw.iter().map(|g| g.max(floor)).collect(),
    }
}

/// Maximum over every run and epoch.
pub fn best_observed(series: &[Vec<f64>]) -> f64 {
    series
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `ln t = q - b ln(eps)` fitted by ordinary least squares.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub q: f64,
    pub b: f64,
    pub points: usize,
    pub rms_residual: f64,
}

/// OLS of `y` on `x`: `(intercept, slope, rms residual)`.
fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(MorlError::DegenerateFit(format!(
            "{} usable points, need 2",
            x.len()
        )));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(MorlError::DegenerateFit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    Ok((intercept, slope, (rss / n).sqrt()))
}

/// Fits `ln t = q - b ln(gap_t)` on the given points.
pub fn fit_loglog(epochs: &[f64], gaps: &[f64]) -> Result<LogLogFit> {
    if epochs.len() != gaps.len() {
        return Err(MorlError::Usage("epochs and gaps differ in length".into()));
    }
    if let Some(bad) = epochs.iter().chain(gaps).find(|v| !(**v > 0.0)) {
        return Err(MorlError::DegenerateFit(format!(
            "non-positive value {bad} in a log fit"
        )));
    }
    let x: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let y: Vec<f64> = epochs.iter().map(|t| t.ln()).collect();
    let (q, slope, rms_residual) = ols(&x, &y)?;
    Ok(LogLogFit {
        q,
        b: -slope,
        points: x.len(),
        rms_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fraction of leading epochs left out of the fit.
    pub burn_in: f64,
    pub floor_rel: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            burn_in: 0.1,
            floor_rel: DEFAULT_FLOOR_REL,
        }
    }
}

/// Fits the gap curve with epoch `t` counted from one, skipping the burn-in
/// window and every floor-clipped point.
pub fn fit_gap_series(gap: &GapSeries, options: &FitOptions) -> Result<LogLogFit> {
    let skip = (options.burn_in * gap.gaps.len() as f64).floor() as usize;
    let (t, g): (Vec<f64>, Vec<f64>) = gap
        .gaps
        .iter()
        .zip(&gap.at_floor)
        .enumerate()
        .skip(skip)
        .filter(|(_, (_, floor))| !**floor)
        .map(|(i, (g, _))| ((i + 1) as f64, *g))
        .unzip();
    if t.is_empty() && gap.at_floor.iter().skip(skip).all(|f| *f) {
        return Err(MorlError::DegenerateFit(
            "every gap sits at the floor".into(),
        ));
    }
    fit_loglog(&t, &g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerObjectiveFit {
    #[serde(rename = "M")]
    pub m: usize,
    pub q_m: f64,
    pub b_m: f64,
    pub points: usize,
    pub rms_residual: f64,
    /// Residual of `q_M` against the fitted line in `ln M`.
    pub q_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    #[serde(rename = "per_M")]
    pub per_m: Vec<PerObjectiveFit>,
    pub a_hat: f64,
    pub b_hat: f64,
}

/// `b_hat` is the mean of the `b_M`; `a_hat` the OLS slope of `q_M` on
/// `ln M`.
pub fn fit_exponents(fits: &[(usize, LogLogFit)]) -> Result<ExponentFit> {
    let mut distinct: Vec<usize> = fits.iter().map(|(m, _)| *m).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(MorlError::Usage(
            "exponent fit needs at least two distinct M values".into(),
        ));
    }
    if distinct[0] == 0 {
        return Err(MorlError::Usage("M must be >= 1".into()));
    }
    let x: Vec<f64> = fits.iter().map(|(m, _)| (*m as f64).ln()).collect();
    let y: Vec<f64> = fits.iter().map(|(_, f)| f.q).collect();
    let (intercept, a_hat, _) = ols(&x, &y)?;
    let b_hat = fits.iter().map(|(_, f)| f.b).sum::<f64>() / fits.len() as f64;
    let per_m = fits
        .iter()
        .zip(&x)
        .map(|((m, f), lx)| PerObjectiveFit {
            m: *m,
            q_m: f.q,
            b_m: f.b,
            points: f.points,
            rms_residual: f.rms_residual,
            q_residual: f.q - intercept - a_hat * lx,
        })
        .collect();
    Ok(ExponentFit {
        per_m,
        a_hat,
        b_hat,
    })
}
