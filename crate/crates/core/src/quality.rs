//! Quality models: WS-PSNR, logarithmic quality-rate curves, and the two
//! temporal-lapse corrections (rate increase for inter coding and quality
//! decay for stale content).
//!
//! A region's quality-rate behaviour is summarized as Q(R) = a + b ln R with
//! Q in WS-PSNR dB and R a normalized rate in bits per square degree. Inter
//! coding a tile whose reference is tau frames old costs more bits for the
//! same quality; that inflation is rho(tau) = 1 + c (1 - e^(-d (tau - 1))).
//! Undisplayed-but-stale content loses quality by kappa(tau) = e^(-g tau^h).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Rates below this floor (bits per square degree) are clamped before any
/// logarithm is taken.
pub const RATE_FLOOR: f64 = 1e-4;

/// WS-PSNR cap reported for a zero-error frame, dB.
pub const WS_PSNR_CAP: f64 = 100.0;

/// Weighted mean squared error from per-pixel squared errors and their
/// latitude weights.
pub fn ws_mse(squared_errors: &[f64], weights: &[f64]) -> Result<f64> {
    if squared_errors.is_empty() || squared_errors.len() != weights.len() {
        return Err(Error::invalid(
            "squared errors and weights must be equal-length and nonempty",
        ));
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(Error::invalid("weights must have positive sum"));
    }
    Ok(squared_errors
        .iter()
        .zip(weights)
        .map(|(e, w)| e * w)
        .sum::<f64>()
        / wsum)
}

/// WS-PSNR in dB for a weighted MSE and a peak intensity (for example 255
/// for 8-bit video). A zero MSE reports the cap.
pub fn ws_psnr(ws_mse: f64, peak_intensity: f64) -> Result<f64> {
    if ws_mse < 0.0 || peak_intensity <= 0.0 {
        return Err(Error::invalid("ws_psnr needs mse >= 0 and peak > 0"));
    }
    if ws_mse == 0.0 {
        return Ok(WS_PSNR_CAP);
    }
    Ok((10.0 * (peak_intensity * peak_intensity / ws_mse).log10()).min(WS_PSNR_CAP))
}

/// Logarithmic quality-rate curve Q(R) = a + b ln R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogQrModel {
    pub a: f64,
    pub b: f64,
}

impl LogQrModel {
    pub fn new(a: f64, b: f64) -> Result<LogQrModel> {
        if !(b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid(format!(
                "log Q-R model needs finite a and b > 0, got a={} b={}",
                a, b
            )));
        }
        Ok(LogQrModel { a, b })
    }

    /// Quality at a normalized rate; rates below the floor are clamped.
    pub fn quality_at_rate(&self, rate: f64) -> f64 {
        self.a + self.b * rate.max(RATE_FLOOR).ln()
    }

    /// Rate achieving the given quality (exact inverse of quality_at_rate
    /// above the floor).
    pub fn rate_at_quality(&self, quality: f64) -> f64 {
        ((quality - self.a) / self.b).exp()
    }

    /// The curve seen when every coded rate is inflated by `factor`: the
    /// same budget buys quality as if the rate were rate/factor.
    pub fn with_rate_inflation(&self, factor: f64) -> Result<LogQrModel> {
        if !(factor >= 1.0) || !factor.is_finite() {
            return Err(Error::invalid(format!(
                "rate inflation factor must be >= 1, got {}",
                factor
            )));
        }
        Ok(LogQrModel {
            a: self.a - self.b * factor.ln(),
            b: self.b,
        })
    }
}

/// Rate-increase curve rho(tau) = 1 + c (1 - e^(-d (tau - 1))) for inter
/// coding against a reference tau frames old (tau >= 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateIncreaseModel {
    pub c: f64,
    pub d: f64,
}

impl RateIncreaseModel {
    pub fn new(c: f64, d: f64) -> Result<RateIncreaseModel> {
        if !(c >= 0.0) || !(d >= 0.0) {
            return Err(Error::invalid(format!(
                "rate increase model needs c, d >= 0, got c={} d={}",
                c, d
            )));
        }
        Ok(RateIncreaseModel { c, d })
    }

    pub fn rho(&self, tau: u32) -> Result<f64> {
        if tau < 1 {
            return Err(Error::invalid("rho is defined for tau >= 1"));
        }
        Ok(1.0 + self.c * (1.0 - (-self.d * (tau as f64 - 1.0)).exp()))
    }

    /// Average inflation under a lapse distribution: sum p(tau) rho(tau).
    /// The distribution must be a probability (nonnegative, sums to 1).
    pub fn expected_rho(&self, lapse: &BTreeMap<u32, f64>) -> Result<f64> {
        validate_distribution(lapse)?;
        let mut acc = 0.0;
        for (&tau, &p) in lapse {
            acc += p * self.rho(tau)?;
        }
        Ok(acc)
    }
}

/// Quality-decay curve kappa(tau) = e^(-g tau^h) for content tau frames
/// stale (tau >= 0, kappa(0) = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityDecayModel {
    pub g: f64,
    pub h: f64,
}

impl QualityDecayModel {
    pub fn new(g: f64, h: f64) -> Result<QualityDecayModel> {
        if !(g >= 0.0) || !(h > 0.0) {
            return Err(Error::invalid(format!(
                "quality decay model needs g >= 0 and h > 0, got g={} h={}",
                g, h
            )));
        }
        Ok(QualityDecayModel { g, h })
    }

    pub fn kappa(&self, tau: u32) -> f64 {
        if tau == 0 {
            return 1.0;
        }
        (-self.g * (tau as f64).powf(self.h)).exp()
    }

    /// Quality of stale content: the decay factor applied to the quality it
    /// had when coded.
    pub fn decayed_quality(&self, quality_db: f64, tau: u32) -> f64 {
        self.kappa(tau) * quality_db
    }
}

/// Ideal rate scaled by the expected inter-coding inflation under a lapse
/// distribution.
pub fn adjusted_rate(
    ideal_rate: f64,
    lapse: &BTreeMap<u32, f64>,
    model: &RateIncreaseModel,
) -> Result<f64> {
    if ideal_rate < 0.0 {
        return Err(Error::invalid("rate must be nonnegative"));
    }
    Ok(model.expected_rho(lapse)? * ideal_rate)
}

fn validate_distribution(lapse: &BTreeMap<u32, f64>) -> Result<()> {
    if lapse.is_empty() {
        return Err(Error::invalid("lapse distribution is empty"));
    }
    let mut sum = 0.0;
    for (&tau, &p) in lapse {
        if tau < 1 {
            return Err(Error::invalid("lapse values start at tau = 1"));
        }
        if p < 0.0 {
            return Err(Error::invalid("lapse probabilities must be nonnegative"));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "lapse probabilities sum to {}, expected 1",
            sum
        )));
    }
    Ok(())
}

/// Fit Q = a + b ln R by least squares over (rate, quality) points.
/// Needs at least two distinct positive rates and a positive slope.
pub fn fit_log_model(points: &[(f64, f64)]) -> Result<LogQrModel> {
    if points.len() < 2 {
        return Err(Error::Fit("need at least two points".into()));
    }
    if points.iter().any(|(r, _)| *r <= 0.0) {
        return Err(Error::Fit("rates must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, q)| *q).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx < 1e-12 {
        return Err(Error::Fit("rates are not distinct".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    if !(b > 0.0) {
        return Err(Error::Fit(format!(
            "fitted slope {} is not positive; quality must grow with rate",
            b
        )));
    }
    Ok(LogQrModel { a, b })
}

/// Fit rho(tau) = 1 + c (1 - e^(-d (tau - 1))) to (tau, ratio) points by
/// least squares: a scan over d with the conditionally-optimal c in closed
/// form, refined by Gauss-Newton.
pub fn fit_rho_model(points: &[(u32, f64)]) -> Result<RateIncreaseModel> {
    if points.len() < 3 {
        return Err(Error::Fit("need at least three points".into()));
    }
    let taus: Vec<f64> = points.iter().map(|(t, _)| *t as f64).collect();
    if points.iter().any(|(t, _)| *t < 1) {
        return Err(Error::Fit("tau values start at 1".into()));
    }
    if points.iter().any(|(_, y)| *y < 1.0) {
        return Err(Error::Fit("rate ratios must be >= 1".into()));
    }
    let distinct = {
        let mut t = taus.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t.len()
    };
    if distinct < 2 {
        return Err(Error::Fit("need at least two distinct tau values".into()));
    }

    let ys: Vec<f64> = points.iter().map(|(_, y)| y - 1.0).collect();
    let best_c_for = |d: f64| -> (f64, f64) {
        // phi_i = 1 - e^(-d (tau_i - 1)); optimal c = sum y phi / sum phi^2.
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, y) in taus.iter().zip(&ys) {
            let phi = 1.0 - (-d * (t - 1.0)).exp();
            num += y * phi;
            den += phi * phi;
        }
        let c = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        let mut sse = 0.0;
        for (t, y) in taus.iter().zip(&ys) {
            let phi = 1.0 - (-d * (t - 1.0)).exp();
            let e = c * phi - y;
            sse += e * e;
        }
        (c, sse)
    };

    let mut best = (0.0f64, 1e-3f64, f64::INFINITY);
    let mut d = 1e-3;
    while d <= 10.0 {
        let (c, sse) = best_c_for(d);
        if sse < best.2 {
            best = (c, d, sse);
        }
        d *= 1.15;
    }
    let (mut c, mut d, _) = best;

    // Gauss-Newton on (c, d) with simple step damping.
    for _ in 0..200 {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for (t, y) in taus.iter().zip(&ys) {
            let e = (-d * (t - 1.0)).exp();
            let phi = 1.0 - e;
            let resid = c * phi - y;
            let jc = phi;
            let jd = c * (t - 1.0) * e;
            jtj[0][0] += jc * jc;
            jtj[0][1] += jc * jd;
            jtj[1][1] += jd * jd;
            jtr[0] += jc * resid;
            jtr[1] += jd * resid;
        }
        jtj[1][0] = jtj[0][1];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-18 {
            break;
        }
        let dc = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dd = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        c -= dc;
        d -= dd;
        if !c.is_finite() || !d.is_finite() {
            return Err(Error::Fit("rate-increase fit diverged".into()));
        }
        c = c.max(0.0);
        d = d.clamp(1e-9, 100.0);
        if dc.abs() < 1e-14 && dd.abs() < 1e-14 {
            break;
        }
    }
    RateIncreaseModel::new(c, d)
}

/// Fit kappa(tau) = e^(-g tau^h) to (tau, ratio) points, ratios in (0, 1].
/// Seeded by a scan over h with the log-domain closed-form g, refined by
/// Gauss-Newton in the original domain.
pub fn fit_kappa_model(points: &[(u32, f64)]) -> Result<QualityDecayModel> {
    if points.len() < 3 {
        return Err(Error::Fit("need at least three points".into()));
    }
    if points.iter().any(|(t, _)| *t < 1) {
        return Err(Error::Fit("tau values start at 1".into()));
    }
    if points.iter().any(|(_, y)| !(*y > 0.0 && *y <= 1.0)) {
        return Err(Error::Fit("decay ratios must lie in (0, 1]".into()));
    }
    let taus: Vec<f64> = points.iter().map(|(t, _)| *t as f64).collect();
    let distinct = {
        let mut t = taus.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t.len()
    };
    if distinct < 2 {
        return Err(Error::Fit("need at least two distinct tau values".into()));
    }
    let lys: Vec<f64> = points.iter().map(|(_, y)| -y.ln()).collect();

    // In log domain -ln kappa = g tau^h, linear in g for fixed h.
    let best_g_for = |h: f64| -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, ly) in taus.iter().zip(&lys) {
            let u = t.powf(h);
            num += ly * u;
            den += u * u;
        }
        let g = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
        let mut sse = 0.0;
        for ((t, ly), _) in taus.iter().zip(&lys).zip(points) {
            let e = g * t.powf(h) - ly;
            sse += e * e;
        }
        (g, sse)
    };

    let mut best = (1e-3f64, 1.0f64, f64::INFINITY);
    let mut h = 0.05;
    while h <= 4.0 {
        let (g, sse) = best_g_for(h);
        if sse < best.2 {
            best = (g, h, sse);
        }
        h += 0.05;
    }
    let (mut g, mut h, _) = best;

    for _ in 0..200 {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for ((t, _), (_, y)) in taus.iter().zip(&lys).zip(points) {
            let u = t.powf(h);
            let k = (-g * u).exp();
            let resid = k - y;
            let jg = -u * k;
            let jh = -g * u * t.ln() * k;
            jtj[0][0] += jg * jg;
            jtj[0][1] += jg * jh;
            jtj[1][1] += jh * jh;
            jtr[0] += jg * resid;
            jtr[1] += jh * resid;
        }
        jtj[1][0] = jtj[0][1];
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-24 {
            break;
        }
        let dg = (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]) / det;
        let dh = (jtj[0][0] * jtr[1] - jtj[1][0] * jtr[0]) / det;
        g -= dg;
        h -= dh;
        if !g.is_finite() || !h.is_finite() {
            return Err(Error::Fit("quality-decay fit diverged".into()));
        }
        g = g.max(0.0);
        h = h.clamp(1e-6, 10.0);
        if dg.abs() < 1e-15 && dh.abs() < 1e-15 {
            break;
        }
    }
    QualityDecayModel::new(g, h)
}

/// Probability-weighted average of orientation Q-R curves: qualities are
/// averaged at a set of probe rates and a fresh log model is fitted through
/// the averaged points.
pub fn weighted_average_qr(models: &[LogQrModel], weights: &[f64]) -> Result<LogQrModel> {
    if models.is_empty() || models.len() != weights.len() {
        return Err(Error::invalid(
            "need equal-length nonempty model and weight lists",
        ));
    }
    if weights.iter().any(|w| *w < 0.0) {
        return Err(Error::invalid("weights must be nonnegative"));
    }
    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "orientation weights sum to {}, expected 1",
            wsum
        )));
    }
    let probe_rates = [1.0, 10.0, 100.0, 1000.0];
    let points: Vec<(f64, f64)> = probe_rates
        .iter()
        .map(|&r| {
            let q = models
                .iter()
                .zip(weights)
                .map(|(m, w)| w * m.quality_at_rate(r))
                .sum::<f64>();
            (r, q)
        })
        .collect();
    fit_log_model(&points)
}

/// The full model family for one content preset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityModelSet {
    /// Inter-coded predicted-FoV region.
    pub pf: LogQrModel,
    /// Inter-coded border region, by border candidate (degrees).
    pub pfplus: BTreeMap<u32, LogQrModel>,
    /// Intra-coded rotating region (also used for any full-intra coding).
    pub ri: LogQrModel,
    pub rate_increase: RateIncreaseModel,
    pub quality_decay: QualityDecayModel,
    pub peak_intensity: f64,
}

impl QualityModelSet {
    pub fn pfplus_model(&self, border_deg: u32) -> Result<&LogQrModel> {
        self.pfplus.get(&border_deg).ok_or_else(|| {
            Error::invalid(format!("no border Q-R model for {} degrees", border_deg))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_ws_psnr_reference_point() {
        // 255^2 / 65.025 = 1000, and 10 log10(1000) = 30 dB.
        let q = ws_psnr(65.025, 255.0).unwrap();
        assert!((q - 30.0).abs() < 1e-9);
    }

    #[test]
    fn test_ws_psnr_zero_mse_caps() {
        assert_eq!(ws_psnr(0.0, 255.0).unwrap(), WS_PSNR_CAP);
        assert!(ws_psnr(-1.0, 255.0).is_err());
        assert!(ws_psnr(1.0, 0.0).is_err());
    }

    #[test]
    fn test_ws_mse_weighting() {
        // Equator-weighted errors dominate pole-weighted ones.
        let mse = ws_mse(&[100.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(mse, 100.0);
        let mse = ws_mse(&[100.0, 50.0], &[1.0, 1.0]).unwrap();
        assert_eq!(mse, 75.0);
        assert!(ws_mse(&[], &[]).is_err());
    }

    #[test]
    fn test_quality_rate_round_trip() {
        let m = LogQrModel::new(30.0, 3.0).unwrap();
        for r in [0.01, 1.0, 42.0, 900.0] {
            let q = m.quality_at_rate(r);
            assert!((m.rate_at_quality(q) - r).abs() / r < 1e-12);
        }
        // Below the floor the curve flattens.
        assert_eq!(m.quality_at_rate(0.0), m.quality_at_rate(RATE_FLOOR));
    }

    #[test]
    fn test_model_rejects_nonpositive_slope() {
        assert!(LogQrModel::new(30.0, 0.0).is_err());
        assert!(LogQrModel::new(30.0, -1.0).is_err());
    }

    #[test]
    fn test_rho_at_one_and_asymptote() {
        let m = RateIncreaseModel::new(1.0, 0.5).unwrap();
        assert_eq!(m.rho(1).unwrap(), 1.0);
        let r3 = m.rho(3).unwrap();
        assert!((r3 - (2.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((m.rho(200).unwrap() - 2.0).abs() < 1e-6);
        assert!(m.rho(0).is_err());
    }

    #[test]
    fn test_rho_monotone() {
        let m = RateIncreaseModel::new(0.8, 0.3).unwrap();
        let mut prev = 0.0;
        for tau in 1..50 {
            let r = m.rho(tau).unwrap();
            assert!(r >= prev);
            assert!(r <= 1.8 + 1e-12);
            prev = r;
        }
    }

    #[test]
    fn test_kappa_basics() {
        let m = QualityDecayModel::new(0.01, 1.0).unwrap();
        assert_eq!(m.kappa(0), 1.0);
        assert!((m.kappa(100) - (-1.0f64).exp()).abs() < 1e-12);
        let mut prev = 1.0;
        for tau in 1..200 {
            let k = m.kappa(tau);
            assert!(k <= prev);
            prev = k;
        }
    }

    #[test]
    fn test_adjusted_rate_mixture() {
        let m = RateIncreaseModel::new(1.0, 0.5).unwrap();
        let mut lapse = BTreeMap::new();
        lapse.insert(1, 0.5);
        lapse.insert(3, 0.5);
        let adj = adjusted_rate(10.0, &lapse, &m).unwrap();
        let expect = 10.0 * (0.5 * 1.0 + 0.5 * (2.0 - (-1.0f64).exp()));
        assert!((adj - expect).abs() < 1e-9);
        // Degenerate distribution at tau = 1 leaves the rate unchanged.
        let mut unit = BTreeMap::new();
        unit.insert(1, 1.0);
        assert!((adjusted_rate(10.0, &unit, &m).unwrap() - 10.0).abs() < 1e-12);
        // A non-normalized distribution is rejected.
        let mut bad = BTreeMap::new();
        bad.insert(1, 0.7);
        assert!(adjusted_rate(10.0, &bad, &m).is_err());
    }

    #[test]
    fn test_fit_log_model_recovers_exact_points() {
        let truth = LogQrModel::new(31.5, 2.75).unwrap();
        let pts: Vec<(f64, f64)> = [0.5, 2.0, 8.0, 64.0]
            .iter()
            .map(|&r| (r, truth.quality_at_rate(r)))
            .collect();
        let fit = fit_log_model(&pts).unwrap();
        assert!((fit.a - truth.a).abs() < 1e-9);
        assert!((fit.b - truth.b).abs() < 1e-9);
    }

    #[test]
    fn test_fit_log_model_rejects_degenerate_input() {
        assert!(fit_log_model(&[(1.0, 30.0)]).is_err());
        assert!(fit_log_model(&[(1.0, 30.0), (1.0, 31.0)]).is_err());
        assert!(fit_log_model(&[(-1.0, 30.0), (2.0, 31.0)]).is_err());
        // Constant quality has zero slope.
        assert!(fit_log_model(&[(1.0, 30.0), (2.0, 30.0), (4.0, 30.0)]).is_err());
    }

    #[test]
    fn test_fit_rho_recovers_noiseless_curve() {
        let truth = RateIncreaseModel::new(1.3, 0.4).unwrap();
        let pts: Vec<(u32, f64)> = (1..=12).map(|t| (t, truth.rho(t).unwrap())).collect();
        let fit = fit_rho_model(&pts).unwrap();
        assert!((fit.c - truth.c).abs() < 1e-6, "c = {}", fit.c);
        assert!((fit.d - truth.d).abs() < 1e-6, "d = {}", fit.d);
    }

    #[test]
    fn test_fit_rho_rejects_single_tau() {
        let pts = vec![(3u32, 1.5), (3, 1.6), (3, 1.55)];
        assert!(fit_rho_model(&pts).is_err());
    }

    #[test]
    fn test_fit_kappa_recovers_noiseless_curve() {
        let truth = QualityDecayModel::new(0.02, 0.9).unwrap();
        let pts: Vec<(u32, f64)> = [1u32, 2, 4, 8, 16, 32, 64]
            .iter()
            .map(|&t| (t, truth.kappa(t)))
            .collect();
        let fit = fit_kappa_model(&pts).unwrap();
        assert!((fit.g - truth.g).abs() < 1e-6, "g = {}", fit.g);
        assert!((fit.h - truth.h).abs() < 1e-6, "h = {}", fit.h);
    }

    #[test]
    fn test_weighted_average_is_parameter_mixture() {
        let m1 = LogQrModel::new(30.0, 3.0).unwrap();
        let m2 = LogQrModel::new(26.0, 2.0).unwrap();
        let avg = weighted_average_qr(&[m1, m2], &[0.25, 0.75]).unwrap();
        assert!((avg.a - (0.25 * 30.0 + 0.75 * 26.0)).abs() < 1e-9);
        assert!((avg.b - (0.25 * 3.0 + 0.75 * 2.0)).abs() < 1e-9);
        // Unit weight on one model returns that model.
        let same = weighted_average_qr(&[m1, m2], &[1.0, 0.0]).unwrap();
        assert!((same.a - m1.a).abs() < 1e-9 && (same.b - m1.b).abs() < 1e-9);
    }

    #[test]
    fn test_rate_inflation_shifts_curve_down() {
        let m = LogQrModel::new(30.0, 3.0).unwrap();
        let adj = m.with_rate_inflation(1.5).unwrap();
        // Quality at rate R on the adjusted curve equals quality at R/1.5
        // on the original.
        for r in [1.0, 10.0, 300.0] {
            assert!((adj.quality_at_rate(r) - m.quality_at_rate(r / 1.5)).abs() < 1e-9);
        }
        assert!(m.with_rate_inflation(0.9).is_err());
    }
}
