//! Margins, default fund and the default waterfall.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::market_model::{swap_mtm, unpaid_dividends, DriverLevels, SwapSpec};
use crate::math::{compensated_sum, norm_cdf, norm_ppf, pos};

/// Wrong-way risk multiplier of the regulatory EAD.
pub const EAD_MULTIPLIER: f64 = 1.4;
/// Step of the expected-exposure grid inside the EAD (one month).
pub const EAD_STEP: f64 = 1.0 / 12.0;

/// Margin and waterfall settings of one setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    /// Margin-call step `h` (years).
    pub call_step: f64,
    /// Default-fund reset step (years).
    pub df_reset: f64,
    /// Equity reset step (years).
    pub equity_reset: f64,
    /// Liquidation period `δ` (years).
    pub liquidation: f64,
    pub quantile: f64,
    /// Fee rate on IM + DFC (per year).
    pub fee: f64,
    /// Target equity as a fraction of `K^ccp`.
    pub equity_fraction: f64,
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(invalid(format!("IM quantile must lie in (0, 1), got {}", self.quantile)));
        }
        if !(self.call_step > 0.0 && self.df_reset > 0.0 && self.equity_reset > 0.0) {
            return Err(invalid("margin, default-fund and equity steps must be positive"));
        }
        if !(self.liquidation >= 0.0 && self.fee >= 0.0 && self.equity_fraction >= 0.0) {
            return Err(invalid("liquidation period, fee and equity fraction must be nonnegative"));
        }
        Ok(())
    }

    /// Margin period of risk `δ′ = δ + h`.
    pub fn mpor(&self) -> f64 {
        self.liquidation + self.call_step
    }

    /// Last margin call at or before `t`.
    pub fn last_call(&self, t: f64) -> f64 {
        ((t / self.call_step) + 1e-9).floor() * self.call_step
    }
}

/// Direction in which a position loses value for its holder's counterparty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExposureSide {
    /// Exposure grows when the driver rises (`ω > 0`).
    Up,
    /// Exposure grows when the driver falls (`ω < 0`).
    Down,
}

impl ExposureSide {
    pub fn of(omega: f64) -> Self {
        if omega >= 0.0 {
            ExposureSide::Up
        } else {
            ExposureSide::Down
        }
    }
}

/// Mark-to-market multiplier of a member with position `ω`, seen from the clearing house.
#[inline]
pub fn ccp_weight(omega: f64) -> f64 {
    -omega
}

/// Initial margin proxy at level `a` over the margin period `δ′`.
pub fn initial_margin_proxy(spec: &SwapSpec, omega: f64, t: f64, s: f64, a: f64, delta_prime: f64) -> f64 {
    if omega == 0.0 || delta_prime <= 0.0 {
        return 0.0;
    }
    let vol = spec.sigma * delta_prime.sqrt();
    let drift = (spec.kappa - 0.5 * spec.sigma * spec.sigma) * delta_prime;
    let sens = spec.driver_sensitivity(t) * s;
    let im = match ExposureSide::of(omega) {
        ExposureSide::Up => sens * ((vol * norm_ppf(a) + drift).exp() - 1.0),
        ExposureSide::Down => sens * (1.0 - (vol * norm_ppf(1.0 - a) + drift).exp()),
    };
    omega.abs() * pos(im)
}

/// Closed-form EAD factors at horizon `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EadFactors {
    pub f: f64,
    pub g: f64,
}

fn factors_unchecked(spec: &SwapSpec, v: f64, a: f64, delta_prime: f64) -> EadFactors {
    let annuity = spec.ead_annuity(v + delta_prime);
    if annuity == 0.0 {
        return EadFactors { f: 0.0, g: 0.0 };
    }
    let s = spec.sigma * delta_prime.sqrt();
    let z = norm_ppf(a);
    let tail = 1.0 - a;
    // lognormal expected shortfall minus value-at-risk, per unit of tail mass
    let f = norm_cdf(s - z) / tail - (s * z - 0.5 * s * s).exp();
    let g = (-s * z - 0.5 * s * s).exp() - norm_cdf(-z - s) / tail;
    EadFactors {
        f: annuity * pos(f),
        g: annuity * pos(g),
    }
}

/// EAD factors `(f_v, g_v)` such that the expected exposure beyond IM at
/// horizon `v`, seen from `t ≤ v`, is `Nom·|ω|·factor·(1−a)·e^{−κt}·S_t`.
pub fn ead_factors(spec: &SwapSpec, v: f64, a: f64, delta_prime: f64) -> Result<EadFactors> {
    if !(a > 0.0 && a < 1.0) {
        return Err(invalid("quantile must lie in (0, 1)"));
    }
    if v < 0.0 || v + delta_prime > spec.maturity() + 1e-12 {
        return Err(invalid(format!(
            "horizon {v} plus margin period {delta_prime} exceeds maturity {}",
            spec.maturity()
        )));
    }
    Ok(factors_unchecked(spec, v, a, delta_prime))
}

/// Expected exposure beyond IM at horizon `v` seen from `(t, s)`.
pub fn expected_residual_exposure(spec: &SwapSpec, omega: f64, t: f64, s: f64, v: f64, a: f64, delta_prime: f64) -> Result<f64> {
    let fg = ead_factors(spec, v, a, delta_prime)?;
    let factor = match ExposureSide::of(omega) {
        ExposureSide::Up => fg.f,
        ExposureSide::Down => fg.g,
    };
    Ok(spec.notional * omega.abs() * factor * (1.0 - a) * (-spec.kappa * t).exp() * s)
}

/// Position-free EAD building block at `(t, s)`: multiply by `|ω|` to get a member's EAD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitEad {
    pub up: f64,
    pub down: f64,
}

impl UnitEad {
    pub fn for_position(&self, omega: f64) -> f64 {
        omega.abs()
            * match ExposureSide::of(omega) {
                ExposureSide::Up => self.up,
                ExposureSide::Down => self.down,
            }
    }
}

/// Regulatory EAD per unit position at `(t, s)` for both exposure sides.
pub fn unit_ead(spec: &SwapSpec, t: f64, s: f64, a: f64, delta_prime: f64) -> UnitEad {
    let horizon = 1.0_f64.min(spec.maturity() - t);
    if horizon <= 0.0 {
        return UnitEad { up: 0.0, down: 0.0 };
    }
    let (mut run_f, mut run_g) = (0.0_f64, 0.0_f64);
    let (mut sum_f, mut sum_g) = (0.0, 0.0);
    let mut p = 0;
    while (p as f64) * EAD_STEP < horizon - 1e-12 {
        let v = t + p as f64 * EAD_STEP;
        let fg = if v + delta_prime <= spec.maturity() + 1e-12 {
            factors_unchecked(spec, v, a, delta_prime)
        } else {
            EadFactors { f: 0.0, g: 0.0 }
        };
        run_f = run_f.max(fg.f);
        run_g = run_g.max(fg.g);
        sum_f += run_f;
        sum_g += run_g;
        p += 1;
    }
    let scale = EAD_MULTIPLIER * EAD_STEP * spec.notional * (1.0 - a) * (-spec.kappa * t).exp() * s;
    UnitEad {
        up: scale * sum_f,
        down: scale * sum_g,
    }
}

/// Regulatory EAD of a position `ω` at `(t, s)`.
pub fn regulatory_ead(spec: &SwapSpec, omega: f64, t: f64, s: f64, a: f64, delta_prime: f64) -> f64 {
    if t >= spec.maturity() || omega == 0.0 {
        return 0.0;
    }
    unit_ead(spec, t, s, a, delta_prime).for_position(omega)
}

/// Cover-two default fund: sum of the two largest EADs.
pub fn default_fund_total(eads: &[f64]) -> f64 {
    let (mut first, mut second) = (0.0_f64, 0.0_f64);
    for &e in eads {
        if e > first {
            second = first;
            first = e;
        } else if e > second {
            second = e;
        }
    }
    first + second
}

/// Default-fund contributions proportional to IMs, or an equal split when all IMs vanish.
pub fn allocate_default_fund(total: f64, ims: &[f64]) -> Vec<f64> {
    if ims.is_empty() {
        return Vec::new();
    }
    let sum_im = compensated_sum(ims.iter().copied());
    let mut dfc: Vec<f64> = if sum_im > 0.0 {
        ims.iter().map(|&im| total * im / sum_im).collect()
    } else {
        vec![total / ims.len() as f64; ims.len()]
    };
    // put the rounding residue on the largest share so the contributions add up to the total
    let big = (0..dfc.len()).max_by(|&a, &b| dfc[a].total_cmp(&dfc[b])).unwrap_or(0);
    let rest = compensated_sum(dfc.iter().enumerate().filter(|&(k, _)| k != big).map(|(_, &v)| v));
    dfc[big] = total - rest;
    dfc
}

/// Collateral of one member.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MemberAccounts {
    pub vm: f64,
    pub im: f64,
    pub dfc: f64,
    pub alive: bool,
}

impl MemberAccounts {
    pub fn collateral(&self) -> f64 {
        self.vm + self.im + self.dfc
    }

    /// Collateral without the default fund contribution.
    pub fn margins(&self) -> f64 {
        self.vm + self.im
    }
}

/// Raw exposure, loss and close-out cash flow of a liquidated member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breach {
    pub raw: f64,
    pub loss: f64,
    pub close_out: f64,
}

/// Breach given the liquidation value `q` and the frozen collateral.
pub fn breach_from_values(q: f64, collateral: f64, recovery: f64) -> Breach {
    let raw = pos(q - collateral);
    let close_out = if raw == 0.0 { -q } else { -(collateral + recovery * raw) };
    Breach {
        raw,
        loss: (1.0 - recovery) * raw,
        close_out,
    }
}

/// Breach of a member with position `ω` defaulting at `tau`, liquidated at `tau + δ`,
/// with collateral frozen at the last margin call.
pub fn member_breach_exposure<D: DriverLevels + ?Sized>(
    spec: &SwapSpec,
    omega: f64,
    recovery: f64,
    accounts: &MemberAccounts,
    tau: f64,
    liquidation: f64,
    path: &D,
) -> Result<Breach> {
    let end = tau + liquidation;
    let w = ccp_weight(omega);
    let q = swap_mtm(spec, end, path, w)? + unpaid_dividends(spec, tau, end, path, w)?;
    Ok(breach_from_values(q, accounts.collateral(), recovery))
}

/// Unfunded part of a member's refills over one default-fund period.
pub fn unfunded_contribution(period_refills: f64, dfc_at_start: f64) -> f64 {
    pos(period_refills - dfc_at_start)
}

/// Result of running one aggregate breach through the waterfall.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfallOutcome {
    pub equity_burn: f64,
    /// Refill owed by each member (zero for non-survivors).
    pub refills: Vec<f64>,
    /// Residual loss with no survivor default fund to absorb it.
    pub uncovered: f64,
}

/// Per-path state of the clearing house's loss-absorbing resources.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfallState {
    pub equity: f64,
    pub accounts: Vec<MemberAccounts>,
    pub cumulative_refills: Vec<f64>,
    period_start_dfc: Vec<f64>,
    pub uncovered_events: usize,
}

impl WaterfallState {
    pub fn new(n_members: usize) -> Self {
        Self {
            equity: 0.0,
            accounts: vec![
                MemberAccounts {
                    alive: true,
                    ..Default::default()
                };
                n_members
            ],
            cumulative_refills: vec![0.0; n_members],
            period_start_dfc: vec![0.0; n_members],
            uncovered_events: 0,
        }
    }

    pub fn reset_equity(&mut self, target: f64) {
        self.equity = target.max(0.0);
    }

    /// Install new contributions, returning each member's unfunded amount for the closing period.
    pub fn reset_default_fund(&mut self, dfc: &[f64]) -> Vec<f64> {
        let unfunded = self
            .cumulative_refills
            .iter()
            .zip(&self.period_start_dfc)
            .map(|(&r, &d)| unfunded_contribution(r, d))
            .collect();
        for (acc, &d) in self.accounts.iter_mut().zip(dfc) {
            acc.dfc = if acc.alive { d } else { 0.0 };
        }
        self.period_start_dfc = self.accounts.iter().map(|a| a.dfc).collect();
        self.cumulative_refills.iter_mut().for_each(|r| *r = 0.0);
        unfunded
    }

    pub fn mark_default(&mut self, member: usize) {
        if let Some(acc) = self.accounts.get_mut(member) {
            acc.alive = false;
        }
    }

    /// Burn equity first, then split the residual across survivors by DFC.
    pub fn apply(&mut self, breach: f64) -> WaterfallOutcome {
        let breach = pos(breach);
        let burn = breach.min(self.equity);
        self.equity -= burn;
        let residual = breach - burn;
        let weights: Vec<f64> = self.accounts.iter().map(|a| if a.alive { a.dfc } else { 0.0 }).collect();
        let total = compensated_sum(weights.iter().copied());
        let mut refills = vec![0.0; weights.len()];
        let mut uncovered = 0.0;
        if residual > 0.0 {
            if total > 0.0 {
                refills = allocate_default_fund(residual, &weights);
                for (c, r) in self.cumulative_refills.iter_mut().zip(&refills) {
                    *c += r;
                }
            } else {
                uncovered = residual;
                self.uncovered_events += 1;
            }
        }
        WaterfallOutcome {
            equity_burn: burn,
            refills,
            uncovered,
        }
    }
}
