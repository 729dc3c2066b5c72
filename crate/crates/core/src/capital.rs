//! Regulatory capital and the cost-of-capital adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::margining::EAD_MULTIPLIER;
use crate::math::{norm_cdf, norm_ppf};

/// Capital parameters. Defaults are the regulatory base values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapitalParams {
    pub risk_weight: f64,
    pub cap_ratio: f64,
    pub hurdle: f64,
    /// Floor of `K^cm` as a fraction of the DFC.
    pub cm_floor: f64,
    /// `(DP threshold, weight)` pairs, thresholds increasing.
    pub rating_weights: Vec<(f64, f64)>,
}

impl Default for CapitalParams {
    fn default() -> Self {
        Self {
            risk_weight: 0.20,
            cap_ratio: 0.08,
            hurdle: 0.10,
            cm_floor: 0.08 * 0.02,
            rating_weights: vec![
                (0.0, 0.007),
                (0.0002, 0.007),
                (0.0006, 0.008),
                (0.0017, 0.010),
                (0.0106, 0.020),
                (0.0371, 0.030),
                (0.1281, 0.100),
            ],
        }
    }
}

impl CapitalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hurdle > 0.0) {
            return Err(invalid("hurdle rate must be positive"));
        }
        if !(self.cap_ratio >= 0.08) {
            return Err(invalid("capital ratio must be at least 8%"));
        }
        if self.rating_weights.is_empty() || self.rating_weights.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("rating thresholds must be nonempty and increasing"));
        }
        Ok(())
    }

    /// Standardized CVA weight of the rating band containing `dp`.
    pub fn rating_weight(&self, dp: f64) -> f64 {
        let k = self.rating_weights.partition_point(|&(thr, _)| thr <= dp);
        self.rating_weights[k.saturating_sub(1)].1
    }
}

/// Hypothetical capital of the clearing house.
pub fn k_ccp(eads: &[f64], params: &CapitalParams) -> f64 {
    params.risk_weight * params.cap_ratio * eads.iter().sum::<f64>()
}

/// Capital of a member for its exposure to the clearing house.
pub fn k_cm(dfc: f64, equity: f64, dfc_all: f64, k_ccp_value: f64, params: &CapitalParams) -> Result<f64> {
    let floor = params.cm_floor * dfc;
    if k_ccp_value == 0.0 || dfc == 0.0 {
        return Ok(floor);
    }
    let denom = equity + dfc_all;
    if !(denom > 0.0) {
        return Err(invalid("equity plus default fund is zero while K^ccp is positive"));
    }
    Ok((k_ccp_value * dfc / denom).max(floor))
}

/// Basel asset correlation interpolated between 0.12 and 0.24.
pub fn irb_correlation(dp: f64) -> f64 {
    let x = (1.0 - (-50.0 * dp).exp()) / (1.0 - (-50.0_f64).exp());
    0.12 * x + 0.24 * (1.0 - x)
}

/// IRB risk weight `w` for default probability `dp`, recovery and effective maturity.
pub fn irb_weight(dp: f64, recovery: f64, maturity: f64) -> Result<f64> {
    if !(dp > 0.0 && dp < 1.0) {
        return Err(invalid(format!("default probability must lie in (0, 1), got {dp}")));
    }
    if !(maturity > 0.0) {
        return Err(invalid("effective maturity must be positive"));
    }
    let corr = irb_correlation(dp);
    let b = (0.11852 - 0.05478 * dp.ln()).powi(2);
    let stressed = norm_cdf(norm_ppf(dp) / (1.0 - corr).sqrt() + (corr / (1.0 - corr)).sqrt() * norm_ppf(0.999));
    let adj = (1.0 + (maturity - 2.5) * b) / (1.0 - 1.5 * b);
    Ok((1.0 - recovery) * (stressed - dp) * adj)
}

/// One bilateral netting set for the capital charges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NettingSet {
    pub dp: f64,
    pub recovery: f64,
    pub maturity: f64,
    pub ead: f64,
}

/// Counterparty credit risk capital.
pub fn k_ccr(sets: &[NettingSet], params: &CapitalParams) -> Result<f64> {
    let mut weighted = Vec::with_capacity(sets.len());
    for s in sets {
        if !(s.ead >= 0.0) {
            return Err(invalid("EAD must be nonnegative"));
        }
        let w = if s.ead > 0.0 { irb_weight(s.dp, s.recovery, s.maturity)? } else { 0.0 };
        weighted.push((w, s.ead));
    }
    Ok(k_ccr_weighted(&weighted, params))
}

/// `Cap_Ratio · Σ 12.5 · w · 1.4 · EAD` over `(w, EAD)` pairs.
pub fn k_ccr_weighted(weighted: &[(f64, f64)], params: &CapitalParams) -> f64 {
    params.cap_ratio * weighted.iter().map(|&(w, ead)| 12.5 * w * EAD_MULTIPLIER * ead).sum::<f64>()
}

/// Maturity-discounted EAD `EAD·(1 − e^{−0.05 T})/(0.05 T)`.
pub fn discounted_ead(ead: f64, maturity: f64) -> f64 {
    let x = 0.05 * maturity;
    if x < 1e-12 {
        ead
    } else {
        ead * (1.0 - (-x).exp()) / x
    }
}

/// Standardized CVA charge, single-name approximation `(2.33/2)·Σ w·T·ẼAD` over a one-year horizon.
pub fn k_cva(sets: &[NettingSet], params: &CapitalParams) -> f64 {
    0.5 * 2.33
        * sets
            .iter()
            .map(|s| params.rating_weight(s.dp) * s.maturity * discounted_ead(s.ead, s.maturity))
            .sum::<f64>()
}

/// Unapproximated standardized CVA charge `2.33·√((½Σx)² + ¾Σx²)`.
pub fn k_cva_exact(sets: &[NettingSet], params: &CapitalParams) -> f64 {
    let xs: Vec<f64> = sets
        .iter()
        .map(|s| params.rating_weight(s.dp) * s.maturity * discounted_ead(s.ead, s.maturity))
        .collect();
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    2.33 * (0.25 * sum * sum + 0.75 * sq).sqrt()
}

/// One-path randomized sample of `k ∫_0^{τ̄} e^{−(r+k)s} K_s ds` evaluated at `ζ`.
pub fn kva_sample(zeta: f64, weight: f64, tau_bar: f64, hurdle: f64, rate: f64, capital: f64) -> f64 {
    if zeta < tau_bar {
        weight * hurdle * (-(rate + hurdle) * zeta).exp() * capital
    } else {
        0.0
    }
}

/// `k ∫_0^T e^{−(r+k)s} K ds` for constant capital `K`.
pub fn kva_constant(capital: f64, hurdle: f64, rate: f64, horizon: f64) -> f64 {
    let c = rate + hurdle;
    hurdle * capital * (1.0 - (-c * horizon).exp()) / c
}
