//! Analytic two-slit model: plane-wave amplitudes from each slit to a point
//! `y` on a screen, the extended probability density for passing through the
//! upper slit, and its coarse graining into equal-width bins.
//!
//! Densities are unnormalized (the amplitude scale `a` is arbitrary), so only
//! signs and ratios are meaningful.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::coarsegrain::{greedy_search_functional, GreedyOutcome};
use crate::error::{Error, Result};
use crate::hilbert::CMatrix;

pub const DEFAULT_PANELS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSlitConfig {
    /// Wave number.
    pub k: f64,
    /// Slit separation d.
    pub slit_separation: f64,
    /// Distance D from the slits to the screen.
    pub screen_distance: f64,
    /// Amplitude scale a.
    pub amplitude: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Bin width Δ; bins tile `[y_min, y_max]` from `y_min`.
    pub bin_width: f64,
    /// Quadrature panels per bin (a multiple of 8).
    pub panels: usize,
}

impl Default for TwoSlitConfig {
    /// k = 1, D = d = 60, kΔ = 5, screen span [−48, 52]. The span is 100 so
    /// both kΔ = 5 and kΔ = 20 tile it, and the left edge puts one kΔ = 5 bin
    /// over the deepest negative lobe of ℘(y,U).
    fn default() -> Self {
        TwoSlitConfig {
            k: 1.0,
            slit_separation: 60.0,
            screen_distance: 60.0,
            amplitude: 1.0,
            y_min: -48.0,
            y_max: 52.0,
            bin_width: 5.0,
            panels: DEFAULT_PANELS,
        }
    }
}

impl TwoSlitConfig {
    /// Default geometry with bin width Δ = kΔ / k.
    pub fn with_k_delta(k_delta: f64) -> Self {
        let base = TwoSlitConfig::default();
        TwoSlitConfig {
            bin_width: k_delta / base.k,
            ..base
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("k", self.k),
            ("slit_separation", self.slit_separation),
            ("screen_distance", self.screen_distance),
            ("bin_width", self.bin_width),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.y_max > self.y_min) {
            return Err(Error::InvalidConfig("y_max must exceed y_min".into()));
        }
        check_panels(self.panels)?;
        self.bin_count().map(|_| ())
    }

    fn bin_count(&self) -> Result<usize> {
        let ratio = (self.y_max - self.y_min) / self.bin_width;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "bin width {} does not tile [{}, {}]",
                self.bin_width, self.y_min, self.y_max
            )));
        }
        Ok(n as usize)
    }

    /// Bin edges `(lo, hi)`, left to right.
    pub fn bins(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let n = self.bin_count()?;
        Ok((0..n)
            .map(|i| {
                let lo = self.y_min + i as f64 * self.bin_width;
                let hi = if i + 1 == n {
                    self.y_max
                } else {
                    self.y_min + (i + 1) as f64 * self.bin_width
                };
                (lo, hi)
            })
            .collect())
    }
}

/// S_U(y) = [(d/2 − y)² + D²]^{1/2}.
pub fn path_length_upper(cfg: &TwoSlitConfig, y: f64) -> f64 {
    (cfg.slit_separation / 2.0 - y).hypot(cfg.screen_distance)
}

/// S_L(y) = [(d/2 + y)² + D²]^{1/2}.
pub fn path_length_lower(cfg: &TwoSlitConfig, y: f64) -> f64 {
    (cfg.slit_separation / 2.0 + y).hypot(cfg.screen_distance)
}

/// Ψ_U(y) = a e^{ikS_U}/S_U.
pub fn amplitude_upper(cfg: &TwoSlitConfig, y: f64) -> Complex64 {
    let s = path_length_upper(cfg, y);
    Complex64::from_polar(cfg.amplitude / s, cfg.k * s)
}

pub fn amplitude_lower(cfg: &TwoSlitConfig, y: f64) -> Complex64 {
    let s = path_length_lower(cfg, y);
    Complex64::from_polar(cfg.amplitude / s, cfg.k * s)
}

/// ℘(y,U) = (|a|²/S_U){1/S_U + cos[k(S_L − S_U)]/S_L}.
pub fn extended_density(cfg: &TwoSlitConfig, y: f64) -> f64 {
    let su = path_length_upper(cfg, y);
    let sl = path_length_lower(cfg, y);
    let a2 = cfg.amplitude * cfg.amplitude;
    a2 / su * (1.0 / su + (cfg.k * (sl - su)).cos() / sl)
}

/// ℘(y,L), the mirror image of [`extended_density`].
pub fn extended_density_lower(cfg: &TwoSlitConfig, y: f64) -> f64 {
    let su = path_length_upper(cfg, y);
    let sl = path_length_lower(cfg, y);
    let a2 = cfg.amplitude * cfg.amplitude;
    a2 / sl * (1.0 / sl + (cfg.k * (su - sl)).cos() / su)
}

/// Re[Ψ*(y) Ψ_U(y)] with Ψ = Ψ_U + Ψ_L, evaluated from the amplitudes.
pub fn extended_density_from_amplitudes(cfg: &TwoSlitConfig, y: f64) -> f64 {
    let up = amplitude_upper(cfg, y);
    let total = up + amplitude_lower(cfg, y);
    (total.conj() * up).re
}

/// |Ψ(y)|².
pub fn total_density(cfg: &TwoSlitConfig, y: f64) -> f64 {
    (amplitude_upper(cfg, y) + amplitude_lower(cfg, y)).norm_sqr()
}

/// Composite Simpson rule with `panels` (even) sub-intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> Result<f64> {
    if panels == 0 || panels % 2 != 0 {
        return Err(Error::OddPanelCount(panels));
    }
    let h = (hi - lo) / panels as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    Ok(acc * h / 3.0)
}

fn simpson_on_samples(samples: &[f64], stride: usize, h: f64) -> f64 {
    let n = (samples.len() - 1) / stride;
    let mut acc = samples[0] + samples[n * stride];
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * samples[i * stride];
    }
    acc * h * stride as f64 / 3.0
}

/// Composite Simpson on `panels` sub-intervals plus two Richardson steps
/// (Simpson at `panels`, `panels/2`, `panels/4` from the same samples).
/// Needs a multiple of 8 panels. Fixed grid, no adaptivity.
pub fn bin_integral<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> Result<f64> {
    check_panels(panels)?;
    let h = (hi - lo) / panels as f64;
    let samples: Vec<f64> = (0..=panels).map(|i| f(lo + i as f64 * h)).collect();
    let s1 = simpson_on_samples(&samples, 1, h);
    let s2 = simpson_on_samples(&samples, 2, h);
    let s4 = simpson_on_samples(&samples, 4, h);
    let b1 = s1 + (s1 - s2) / 15.0;
    let b2 = s2 + (s2 - s4) / 15.0;
    Ok(b1 + (b1 - b2) / 63.0)
}

fn check_panels(panels: usize) -> Result<()> {
    if panels == 0 || panels % 2 != 0 {
        return Err(Error::OddPanelCount(panels));
    }
    if panels % 8 != 0 {
        return Err(Error::InvalidConfig(format!("panel count {panels} is not a multiple of 8")));
    }
    Ok(())
}

fn bin_integral_complex<F: Fn(f64) -> Complex64>(f: F, lo: f64, hi: f64, panels: usize) -> Result<Complex64> {
    let re = bin_integral(|y| f(y).re, lo, hi, panels)?;
    let im = bin_integral(|y| f(y).im, lo, hi, panels)?;
    Ok(Complex64::new(re, im))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinRow {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    /// p(i,U).
    pub upper: f64,
    /// p(i,L).
    pub lower: f64,
}

/// p(i,U) = ∫_{Δ_i} ℘(y,U) dy and p(i,L) per bin.
pub fn binned_extended_probabilities(cfg: &TwoSlitConfig) -> Result<Vec<BinRow>> {
    cfg.bins()?
        .into_iter()
        .map(|(lo, hi)| {
            Ok(BinRow {
                lo,
                hi,
                center: 0.5 * (lo + hi),
                upper: bin_integral(|y| extended_density(cfg, y), lo, hi, cfg.panels)?,
                lower: bin_integral(|y| extended_density_lower(cfg, y), lo, hi, cfg.panels)?,
            })
        })
        .collect()
}

/// ∫_{lo}^{hi} Re[Ψ_L*(y) Ψ_U(y)] dy.
pub fn interference_integral(cfg: &TwoSlitConfig, lo: f64, hi: f64) -> Result<f64> {
    cfg.validate()?;
    if lo < cfg.y_min || hi > cfg.y_max || !(hi > lo) {
        return Err(Error::InvalidConfig(format!(
            "bin [{lo}, {hi}] outside [{}, {}]",
            cfg.y_min, cfg.y_max
        )));
    }
    bin_integral(
        |y| (amplitude_lower(cfg, y).conj() * amplitude_upper(cfg, y)).re,
        lo,
        hi,
        cfg.panels,
    )
}

/// Normalized interference |∫Re Ψ_L*Ψ_U| / (∫|Ψ_U|² ∫|Ψ_L|²)^{1/2} over one bin.
pub fn interference_ratio(cfg: &TwoSlitConfig, lo: f64, hi: f64) -> Result<f64> {
    let i = interference_integral(cfg, lo, hi)?;
    let nu = bin_integral(|y| amplitude_upper(cfg, y).norm_sqr(), lo, hi, cfg.panels)?;
    let nl = bin_integral(|y| amplitude_lower(cfg, y).norm_sqr(), lo, hi, cfg.panels)?;
    Ok(i.abs() / (nu * nl).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k_delta: f64,
    pub bins: usize,
    pub max_interference_ratio: f64,
    pub min_bin_value: f64,
}

/// For each kΔ: the worst normalized interference and the smallest p(i,U).
pub fn delta_sweep(base: &TwoSlitConfig, k_deltas: &[f64]) -> Result<Vec<SweepRow>> {
    k_deltas
        .iter()
        .map(|&kd| {
            let cfg = TwoSlitConfig {
                bin_width: kd / base.k,
                ..base.clone()
            };
            let bins = binned_extended_probabilities(&cfg)?;
            let mut max_ratio: f64 = 0.0;
            for b in &bins {
                max_ratio = max_ratio.max(interference_ratio(&cfg, b.lo, b.hi)?);
            }
            Ok(SweepRow {
                k_delta: kd,
                bins: bins.len(),
                max_interference_ratio: max_ratio,
                min_bin_value: bins.iter().map(|b| b.upper).fold(f64::INFINITY, f64::min),
            })
        })
        .collect()
}

/// Decoherence functional of the binned histories (slit, bin), slit varying
/// fastest: D((i,s),(j,s')) = δ_ij ∫_{Δ_i} Ψ_s* Ψ_s'.
pub fn binned_functional(cfg: &TwoSlitConfig) -> Result<CMatrix> {
    let bins = cfg.bins()?;
    let m = 2 * bins.len();
    let mut d = CMatrix::zeros(m, m);
    let amp = |s: usize, y: f64| {
        if s == 0 {
            amplitude_upper(cfg, y)
        } else {
            amplitude_lower(cfg, y)
        }
    };
    for (i, &(lo, hi)) in bins.iter().enumerate() {
        for s in 0..2 {
            for t in 0..2 {
                d[(2 * i + s, 2 * i + t)] =
                    bin_integral_complex(|y| amp(s, y).conj() * amp(t, y), lo, hi, cfg.panels)?;
            }
        }
    }
    Ok(d)
}

/// Greedy coarse graining of the binned histories that only merges classes
/// of the same slit whose bins are adjacent, so every class is (slit, wider bin).
pub fn decohering_bin_search(cfg: &TwoSlitConfig, target: f64) -> Result<GreedyOutcome> {
    let d = binned_functional(cfg)?;
    Ok(greedy_search_functional(&d, target, |a, b| {
        let slit = a[0] % 2;
        if b.iter().chain(a).any(|&h| h % 2 != slit) {
            return false;
        }
        let (amin, amax) = bin_span(a);
        let (bmin, bmax) = bin_span(b);
        amax + 1 == bmin || bmax + 1 == amin
    }))
}

fn bin_span(class: &[usize]) -> (usize, usize) {
    let bins = class.iter().map(|&h| h / 2);
    (bins.clone().min().unwrap_or(0), bins.max().unwrap_or(0))
}

/// CSV `y,density_upper` on `samples` evenly spaced points.
pub fn density_curve_csv(cfg: &TwoSlitConfig, samples: usize) -> Result<String> {
    cfg.validate()?;
    if samples < 2 {
        return Err(Error::InvalidConfig("need at least two samples".into()));
    }
    let mut out = String::from("y,density_upper\n");
    for i in 0..samples {
        let y = cfg.y_min + (cfg.y_max - cfg.y_min) * i as f64 / (samples - 1) as f64;
        let _ = writeln!(out, "{},{}", y, extended_density(cfg, y));
    }
    Ok(out)
}

pub fn bins_csv(rows: &[BinRow]) -> String {
    let mut out = String::from("bin_center,lo,hi,p_upper,p_lower\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.center, r.lo, r.hi, r.upper, r.lower);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("k_delta,bins,max_interference_ratio,min_bin_value\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.k_delta, r.bins, r.max_interference_ratio, r.min_bin_value
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_lengths() {
        let cfg = TwoSlitConfig::default();
        let s0 = (60f64 * 60.0 / 4.0 + 3600.0).sqrt();
        assert!((path_length_upper(&cfg, 0.0) - s0).abs() < 1e-12);
        assert!((path_length_lower(&cfg, 0.0) - s0).abs() < 1e-12);
        assert!((path_length_upper(&cfg, 30.0) - 60.0).abs() < 1e-12);
        assert!((path_length_upper(&cfg, 10.0) - 4000f64.sqrt()).abs() < 1e-12);
        assert!((path_length_upper(&cfg, 10.0) - 63.2456).abs() < 1e-4);
    }

    #[test]
    fn central_density_is_positive_maximum() {
        let cfg = TwoSlitConfig::default();
        let s = path_length_upper(&cfg, 0.0);
        assert!((extended_density(&cfg, 0.0) - 2.0 / (s * s)).abs() < 1e-16);
    }

    #[test]
    fn closed_form_matches_amplitudes() {
        let cfg = TwoSlitConfig::default();
        for i in 0..=1000 {
            let y = cfg.y_min + 0.1 * i as f64;
            let a = extended_density(&cfg, y);
            let b = extended_density_from_amplitudes(&cfg, y);
            assert!((a - b).abs() < 1e-12 * a.abs().max(1e-3), "y = {y}");
            let sum = a + extended_density_lower(&cfg, y);
            assert!((sum - total_density(&cfg, y)).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_bin_interference_is_cosine_integral() {
        let cfg = TwoSlitConfig::default();
        let i = interference_integral(&cfg, -2.0, 2.0).unwrap();
        let direct = bin_integral(
            |y| {
                let (su, sl) = (path_length_upper(&cfg, y), path_length_lower(&cfg, y));
                (cfg.k * (su - sl)).cos() / (su * sl)
            },
            -2.0,
            2.0,
            cfg.panels,
        )
        .unwrap();
        assert!((i - direct).abs() < 1e-15);
    }

    #[test]
    fn simpson_is_exact_for_cubics_and_rejects_odd_panels() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 2).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        assert!(matches!(simpson(|x| x, 0.0, 1.0, 3), Err(Error::OddPanelCount(3))));
        assert!(matches!(bin_integral(|x| x, 0.0, 1.0, 12), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn extrapolated_rule_is_exact_to_degree_seven() {
        let p = |x: f64| x.powi(7) - 3.0 * x.powi(5) + x;
        let exact = 2f64.powi(8) / 8.0 - 2f64.powi(6) / 2.0 + 2.0;
        assert!((bin_integral(p, 0.0, 2.0, 8).unwrap() - exact).abs() < 1e-12);
        let v = bin_integral(f64::cos, 0.0, 1.0, 64).unwrap();
        assert!((v - 1f64.sin()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_self_convergence() {
        for kd in [5.0, 20.0] {
            let a = TwoSlitConfig::with_k_delta(kd);
            let b = TwoSlitConfig { panels: 512, ..a.clone() };
            let ra = binned_extended_probabilities(&a).unwrap();
            let rb = binned_extended_probabilities(&b).unwrap();
            for (x, y) in ra.iter().zip(&rb) {
                assert!((x.upper - y.upper).abs() <= 1e-10 * y.upper.abs(), "kd {kd}");
                assert!((x.lower - y.lower).abs() <= 1e-10 * y.lower.abs(), "kd {kd}");
            }
        }
    }

    #[test]
    fn bins_must_tile() {
        let cfg = TwoSlitConfig::with_k_delta(7.0);
        assert!(cfg.bins().is_err());
        assert_eq!(TwoSlitConfig::with_k_delta(5.0).bins().unwrap().len(), 20);
        assert_eq!(TwoSlitConfig::with_k_delta(20.0).bins().unwrap().len(), 5);
    }

    #[test]
    fn narrow_bin_shows_interference_wide_bin_less() {
        let cfg = TwoSlitConfig::default();
        let narrow = interference_ratio(&cfg, -0.05, 0.05).unwrap();
        let wide = interference_ratio(&cfg, -30.0, 30.0).unwrap();
        assert!(wide < 0.1);
        assert!(narrow > 0.99);
        assert!(wide < narrow);
    }

    #[test]
    fn functional_matches_interference_integral() {
        let cfg = TwoSlitConfig::with_k_delta(20.0);
        let d = binned_functional(&cfg).unwrap();
        let bins = cfg.bins().unwrap();
        for (i, &(lo, hi)) in bins.iter().enumerate() {
            let re = interference_integral(&cfg, lo, hi).unwrap();
            // D((i,L),(i,U)) = ∫ Ψ_L* Ψ_U
            assert!((d[(2 * i + 1, 2 * i)].re - re).abs() < 1e-15);
        }
    }

    #[test]
    fn coarser_bins_remove_negative_values() {
        let fine = binned_extended_probabilities(&TwoSlitConfig::with_k_delta(5.0)).unwrap();
        assert!(fine.iter().any(|b| b.upper < 0.0));
        let coarse = binned_extended_probabilities(&TwoSlitConfig::with_k_delta(20.0)).unwrap();
        assert!(coarse.iter().all(|b| b.upper > 0.0 && b.lower > 0.0));
        let y = -26.08;
        assert!(extended_density(&TwoSlitConfig::default(), y) < 0.0);
    }
}
