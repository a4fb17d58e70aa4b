//! Closed-form sample complexities and scaling exponents, and power-law fits
//! of measured loss curves.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RhmError};
use crate::params::RhmParams;

/// How a learner uses tuple statistics across positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Per-position statistics (transformer-like, "general").
    Positional,
    /// Statistics pooled over positions (weight sharing, CNN-like).
    Shared,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Positional => "positional",
            Mode::Shared => "shared",
        })
    }
}

impl FromStr for Mode {
    type Err = RhmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positional" | "general" => Ok(Mode::Positional),
            "shared" => Ok(Mode::Shared),
            other => Err(RhmError::Parameter(format!("unknown mode {other:?}"))),
        }
    }
}

fn require_correlated(params: &RhmParams) -> Result<()> {
    params.validate()?;
    if params.f() >= 1.0 {
        return Err(RhmError::Theory("correlations vanish at f=1, theory inapplicable".into()));
    }
    Ok(())
}

/// Training-set size needed to resolve depth-`level` latents:
/// `v m^(2ℓ+1) / (1-f)` per position, `v m^(ℓ+2) / (1-f)` with pooling.
pub fn sample_complexity(params: &RhmParams, level: u32, mode: Mode) -> Result<f64> {
    require_correlated(params)?;
    if level < 1 || level >= params.depth {
        return Err(RhmError::Index(format!(
            "level {level} outside 1..={}",
            params.depth.saturating_sub(1)
        )));
    }
    let (v, m) = (params.v as f64, params.m as f64);
    let exponent = match mode {
        Mode::Positional => 2 * level + 1,
        Mode::Shared => level + 2,
    };
    Ok(v * m.powi(exponent as i32) / (1.0 - params.f()))
}

/// Exponent of `L(P) - L_∞ ~ P^β`: `log f / (2 log m)` or `log f / log m`.
pub fn scaling_exponent(params: &RhmParams, mode: Mode) -> Result<f64> {
    require_correlated(params)?;
    if params.m < 2 {
        return Err(RhmError::Theory("scaling exponent needs m >= 2".into()));
    }
    let ratio = params.f().ln() / (params.m as f64).ln();
    Ok(match mode {
        Mode::Positional => ratio / 2.0,
        Mode::Shared => ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelComplexity {
    pub level: u32,
    pub general: f64,
    pub shared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPrediction {
    pub params: RhmParams,
    pub levels: Vec<LevelComplexity>,
    pub beta_general: f64,
    pub beta_shared: f64,
}

pub fn scaling_prediction(params: &RhmParams) -> Result<ScalingPrediction> {
    let levels = (1..params.depth)
        .map(|l| {
            Ok(LevelComplexity {
                level: l,
                general: sample_complexity(params, l, Mode::Positional)?,
                shared: sample_complexity(params, l, Mode::Shared)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingPrediction {
        params: *params,
        levels,
        beta_general: scaling_exponent(params, Mode::Positional)?,
        beta_shared: scaling_exponent(params, Mode::Shared)?,
    })
}

/// Test loss (nats) against training steps or samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub architecture: String,
    pub params_hash: String,
    pub batch_size: Option<u32>,
}

impl LossCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(RhmError::Validation("x and y lengths differ".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(RhmError::Validation("x must be strictly increasing".into()));
        }
        if y.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(RhmError::Validation("curve values must be finite".into()));
        }
        Ok(LossCurve {
            x,
            y,
            architecture: String::new(),
            params_hash: String::new(),
            batch_size: None,
        })
    }

    pub fn with_metadata(mut self, architecture: &str, params_hash: &str, batch_size: Option<u32>) -> Self {
        self.architecture = architecture.to_string();
        self.params_hash = params_hash.to_string();
        self.batch_size = batch_size;
        self
    }

    /// Parse `step,loss[,stderr]` CSV. Lines starting with `#` are skipped
    /// except `# key=value` metadata for `architecture`, `params_hash` and
    /// `batch_size`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        let (mut arch, mut hash, mut batch) = (String::new(), String::new(), None);
        let mut header_seen = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "architecture" => arch = v.trim().to_string(),
                        "params_hash" => hash = v.trim().to_string(),
                        "batch_size" => batch = v.trim().parse().ok(),
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if !header_seen {
                header_seen = true;
                if fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
                    if fields.len() < 2 || fields[0] != "step" || fields[1] != "loss" {
                        return Err(RhmError::Format(format!("expected header step,loss[,stderr], got {line:?}")));
                    }
                    continue;
                }
            }
            if fields.len() < 2 {
                return Err(RhmError::Format(format!("expected step,loss: {line:?}")));
            }
            let parse = |f: &str| f.parse::<f64>().map_err(|_| RhmError::Format(format!("bad number {f:?}")));
            x.push(parse(fields[0])?);
            y.push(parse(fields[1])?);
        }
        Ok(LossCurve::new(x, y)?.with_metadata(&arch, &hash, batch))
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Which points of a curve enter the log-log fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WindowPolicy {
    All,
    XRange { min: f64, max: f64 },
    /// Points whose excess `y - floor` lies in `[lo, hi] * (plateau - floor)`;
    /// `plateau` is normally the random-guess loss `log v`.
    ExcessFraction { lo: f64, hi: f64, plateau: f64 },
}

impl WindowPolicy {
    /// The default mid-decay window, `[0.05, 0.6]` of the excess at `log v`.
    pub fn mid_decay(v: u32) -> Self {
        WindowPolicy::ExcessFraction {
            lo: 0.05,
            hi: 0.6,
            plateau: (v as f64).ln(),
        }
    }
}

pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    pub floor: f64,
    pub policy: WindowPolicy,
    pub target: Option<f64>,
    /// `|exponent - target|` when a target is attached.
    pub margin: Option<f64>,
}

impl ScalingFit {
    pub fn with_target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self.margin = Some((self.exponent - target).abs());
        self
    }
}

/// Ordinary least squares; returns `(slope, intercept, slope stderr)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return Err(RhmError::Window("need at least two points".into()));
    }
    let nf = n as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / nf, ys.iter().sum::<f64>() / nf);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RhmError::Window("all x values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, stderr))
}

/// Least-squares slope of `log(y - floor)` against `log x` over the window.
pub fn fit_power_law(curve: &LossCurve, floor: f64, policy: WindowPolicy) -> Result<ScalingFit> {
    let selected: Vec<(f64, f64)> = curve
        .x
        .iter()
        .zip(&curve.y)
        .map(|(&x, &y)| (x, y))
        .filter(|&(x, y)| match policy {
            WindowPolicy::All => true,
            WindowPolicy::XRange { min, max } => x >= min && x <= max,
            WindowPolicy::ExcessFraction { lo, hi, plateau } => {
                let excess = y - floor;
                let scale = plateau - floor;
                excess >= lo * scale && excess <= hi * scale
            }
        })
        .collect();
    if let Some(&(x, y)) = selected.iter().find(|&&(_, y)| y <= floor) {
        return Err(RhmError::Window(format!(
            "loss {y} at x = {x} is not above the floor {floor}"
        )));
    }
    if selected.len() < MIN_FIT_POINTS {
        return Err(RhmError::Window(format!(
            "{} points in the fit window, need at least {MIN_FIT_POINTS}",
            selected.len()
        )));
    }
    if selected.iter().any(|&(x, _)| x <= 0.0) {
        return Err(RhmError::Window("x must be positive for a log-log fit".into()));
    }
    let lx: Vec<f64> = selected.iter().map(|(x, _)| x.ln()).collect();
    let ly: Vec<f64> = selected.iter().map(|(_, y)| (y - floor).ln()).collect();
    let (slope, _, stderr) = linear_fit(&lx, &ly)?;
    Ok(ScalingFit {
        exponent: slope,
        stderr,
        window: (selected[0].0, selected[selected.len() - 1].0),
        n_points: selected.len(),
        floor,
        policy,
        target: None,
        margin: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Geometric rate `r` in `L_ℓ - L_∞ ~ r^ℓ`.
    pub rate: f64,
    pub log_rate_stderr: f64,
    pub levels_used: Vec<u32>,
    /// Whether the excess losses decrease strictly with level.
    pub monotone: bool,
}

/// Fit `log(L_ℓ - L_∞)` linearly in `ℓ` over levels with positive excess.
pub fn ngram_decay_fit(losses: &[f64], floor: f64) -> Result<DecayFit> {
    let usable: Vec<(u32, f64)> = losses
        .iter()
        .enumerate()
        .filter(|&(_, &y)| y - floor > 1e-12 * floor.abs().max(1.0))
        .map(|(l, &y)| (l as u32, y - floor))
        .collect();
    if usable.len() < 3 {
        return Err(RhmError::Window(format!(
            "{} levels above the floor, need at least 3",
            usable.len()
        )));
    }
    let xs: Vec<f64> = usable.iter().map(|&(l, _)| l as f64).collect();
    let ys: Vec<f64> = usable.iter().map(|&(_, e)| e.ln()).collect();
    let (slope, _, stderr) = linear_fit(&xs, &ys)?;
    Ok(DecayFit {
        rate: slope.exp(),
        log_rate_stderr: stderr,
        levels_used: usable.iter().map(|&(l, _)| l).collect(),
        monotone: usable.windows(2).all(|w| w[1].1 < w[0].1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(v: u32, m: u32, l: u32) -> RhmParams {
        RhmParams::new(v, m, 2, l, 0).unwrap()
    }

    #[test]
    fn sample_complexity_values() {
        let p = params(24, 6, 4);
        for mode in [Mode::Positional, Mode::Shared] {
            assert!((sample_complexity(&p, 1, mode).unwrap() - 6912.0).abs() < 1e-9);
        }
        assert!((sample_complexity(&p, 2, Mode::Positional).unwrap() - 248_832.0).abs() < 1e-6);
        assert!((sample_complexity(&p, 2, Mode::Shared).unwrap() - 41_472.0).abs() < 1e-6);
        for l in 1..3 {
            let g = sample_complexity(&p, l, Mode::Positional).unwrap();
            let s = sample_complexity(&p, l, Mode::Shared).unwrap();
            assert!((g / s - 6f64.powi(l as i32 - 1)).abs() < 1e-9);
            let g1 = sample_complexity(&p, l + 1, Mode::Positional).unwrap();
            let s1 = sample_complexity(&p, l + 1, Mode::Shared).unwrap();
            assert!((g / g1 - 1.0 / 36.0).abs() < 1e-12);
            assert!((s / s1 - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn theory_rejects_full_density_and_bad_levels() {
        let full = RhmParams::new(4, 4, 2, 3, 0).unwrap();
        assert!(matches!(sample_complexity(&full, 1, Mode::Shared), Err(RhmError::Theory(_))));
        assert!(matches!(scaling_exponent(&full, Mode::Shared), Err(RhmError::Theory(_))));
        let p = params(16, 4, 3);
        assert!(sample_complexity(&p, 0, Mode::Shared).is_err());
        assert!(sample_complexity(&p, 3, Mode::Shared).is_err());
        assert!(scaling_exponent(&params(16, 1, 3), Mode::Shared).is_err());
    }

    #[test]
    fn exponent_values() {
        let p = params(16, 4, 4);
        assert!((scaling_exponent(&p, Mode::Positional).unwrap() + 0.5).abs() < 1e-12);
        assert!((scaling_exponent(&p, Mode::Shared).unwrap() + 1.0).abs() < 1e-12);
        let q = params(24, 6, 4);
        assert!((scaling_exponent(&q, Mode::Positional).unwrap() + 0.386_852_807).abs() < 1e-4);
        assert!((scaling_exponent(&q, Mode::Shared).unwrap() + 0.773_705_614).abs() < 1e-4);
    }

    #[test]
    fn exponents_depend_on_v_only_through_f() {
        // same f = 1/4 and m = 4 reached with s = 2 and s = 3
        let a = RhmParams::new(16, 4, 2, 3, 0).unwrap();
        let b = RhmParams::new(4, 4, 3, 3, 0).unwrap();
        assert_eq!(a.f(), b.f());
        assert_eq!(scaling_exponent(&a, Mode::Shared).unwrap(), scaling_exponent(&b, Mode::Shared).unwrap());
    }

    #[test]
    fn prediction_invariants() {
        let pred = scaling_prediction(&params(16, 4, 5)).unwrap();
        assert_eq!(pred.levels.len(), 4);
        assert_eq!(pred.beta_shared, 2.0 * pred.beta_general);
        for lc in &pred.levels {
            assert!(lc.shared <= lc.general);
            assert_eq!(lc.shared == lc.general, lc.level == 1);
        }
    }

    fn synthetic(xs: &[f64], f: impl Fn(f64) -> f64) -> LossCurve {
        LossCurve::new(xs.to_vec(), xs.iter().map(|&x| f(x)).collect()).unwrap()
    }

    fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let xs = geometric_grid(1.0, 1e6, 40);
        let curve = synthetic(&xs, |x| 3.0 * x.powf(-0.5) + 0.2);
        let fit = fit_power_law(&curve, 0.2, WindowPolicy::All).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-6);
        assert!(fit.stderr < 1e-6);
    }

    #[test]
    fn window_selects_the_second_regime() {
        let xs = geometric_grid(1.0, 1e8, 80);
        // x^-0.25 up to 1e4, then x^-1 (continuous at the break)
        let curve = synthetic(&xs, |x| {
            if x < 1e4 {
                x.powf(-0.25)
            } else {
                10f64.powf(-1.0) * (x / 1e4).powf(-1.0)
            }
        });
        let fit = fit_power_law(&curve, 0.0, WindowPolicy::XRange { min: 1e4, max: 1e8 }).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-9);
    }

    #[test]
    fn window_errors() {
        let xs = geometric_grid(1.0, 100.0, 20);
        let curve = synthetic(&xs, |x| 1.0 / x);
        assert!(matches!(fit_power_law(&curve, 0.5, WindowPolicy::All), Err(RhmError::Window(_))));
        let short = synthetic(&xs[..5], |x| 1.0 / x);
        assert!(fit_power_law(&short, 0.0, WindowPolicy::All).is_err());
    }

    #[test]
    fn mid_decay_window_excludes_plateau_and_floor() {
        let v = 16u32;
        let plateau = (v as f64).ln();
        let floor = 0.3;
        let xs = geometric_grid(1.0, 1e7, 120);
        let curve = synthetic(&xs, |x| floor + (plateau - floor) * (1.0 + x / 100.0).powf(-0.5));
        let fit = fit_power_law(&curve, floor, WindowPolicy::mid_decay(v)).unwrap();
        assert!(fit.window.0 > 100.0);
        assert!((fit.exponent + 0.5).abs() < 0.05, "{}", fit.exponent);
    }

    #[test]
    fn decay_rate_of_geometric_ladder() {
        let f = 0.25;
        let losses: Vec<f64> = (0..5).map(|l| 0.4 + 2.0 * f64::powi(f, l)).collect();
        let fit = ngram_decay_fit(&losses, 0.4).unwrap();
        assert!((fit.rate - f).abs() < 1e-12);
        assert!(fit.monotone);
        assert!(ngram_decay_fit(&[1.0, 0.5, 0.4], 0.4).is_err());
    }

    #[test]
    fn loss_curve_csv() {
        let text = "# architecture=transformer\n# batch_size=128\nstep,loss,stderr\n1,2.0,0.1\n2,1.5,0.1\n";
        let c = LossCurve::from_csv(text).unwrap();
        assert_eq!(c.x, vec![1.0, 2.0]);
        assert_eq!(c.architecture, "transformer");
        assert_eq!(c.batch_size, Some(128));
        assert!(LossCurve::from_csv("step,loss\n2,1\n1,1\n").is_err());
        assert!(LossCurve::new(vec![1.0], vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_invariant_to_rescaling(a in 0.1f64..10.0, b in 0.1f64..10.0, beta in -2.0f64..-0.1) {
            // x stays below 1e3 so `floor + y - floor` keeps its digits at beta = -2
            let xs = geometric_grid(1.0, 1e3, 30);
            // a noisy-looking but deterministic wiggle so the fit is not exact
            let y = |x: f64| x.powf(beta) * (1.0 + 0.1 * (x.ln() * 3.0).sin());
            let base = fit_power_law(&synthetic(&xs, |x| 0.1 + y(x)), 0.1, WindowPolicy::All).unwrap();
            let scaled_y = fit_power_law(&synthetic(&xs, |x| 0.1 + a * y(x)), 0.1, WindowPolicy::All).unwrap();
            let xs_b: Vec<f64> = xs.iter().map(|x| x * b).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| 0.1 + y(x)).collect();
            let scaled_x = fit_power_law(&LossCurve::new(xs_b, ys).unwrap(), 0.1, WindowPolicy::All).unwrap();
            prop_assert!((base.exponent - scaled_y.exponent).abs() < 1e-9);
            prop_assert!((base.exponent - scaled_x.exponent).abs() < 1e-9);
        }
    }
}
