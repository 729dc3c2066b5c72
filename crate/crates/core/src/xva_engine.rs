//! Randomized Monte Carlo estimators of the clearing (CCP) and bilateral (CSA) adjustments.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capital::{k_ccp, k_ccr, k_cm, k_cva, kva_sample, CapitalParams, NettingSet};
use crate::credit_model::{sample_default_times, DefaultDraw, ShockModel};
use crate::error::{invalid, Result};
use crate::margining::{
    allocate_default_fund, ccp_weight, default_fund_total, initial_margin_proxy, member_breach_exposure, unit_ead,
    MarginConfig, MemberAccounts, WaterfallState,
};
use crate::market_model::{swap_mtm, swap_mtm_left, unpaid_dividends, DriverLevels, DriverSampler, SwapSpec};
use crate::math::{neg, pos, BP};
use crate::rng::{substream, Purpose};

/// Which adjustment is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setup {
    Ccp,
    Csa,
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setup::Ccp => "ccp",
            Setup::Csa => "csa",
        })
    }
}

impl std::str::FromStr for Setup {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccp" => Ok(Setup::Ccp),
            "csa" => Ok(Setup::Csa),
            other => Err(invalid(format!("unknown setup '{other}', expected ccp or csa"))),
        }
    }
}

/// Funding and randomization parameters of the reference member.
#[derive(Debug, Clone, PartialEq)]
pub struct FundingConfig {
    /// Unsecured borrowing spread `λ̄`.
    pub lambda_bar: f64,
    /// Investing spread `λ`.
    pub lambda: f64,
    /// Own-funding recovery `R̄`.
    pub r_bar: f64,
    /// Rate of the exponential randomization time.
    pub mu: f64,
}

/// Everything a run needs, already resolved from a scenario.
#[derive(Debug, Clone)]
pub struct XvaProblem {
    pub setup: Setup,
    pub swap: SwapSpec,
    pub shocks: ShockModel,
    pub omegas: Vec<f64>,
    pub reference: usize,
    /// Loss recovery of each member in this setup.
    pub recoveries: Vec<f64>,
    /// One-year default probabilities used by the capital formulas.
    pub default_probs: Vec<f64>,
    pub margin: MarginConfig,
    pub funding: FundingConfig,
    pub capital: CapitalParams,
}

impl XvaProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.omegas.len();
        if self.shocks.n_members() != n || self.recoveries.len() != n || self.default_probs.len() != n {
            return Err(invalid("member vectors have inconsistent lengths"));
        }
        if self.reference >= n {
            return Err(invalid("reference member out of range"));
        }
        let net: f64 = self.omegas.iter().sum();
        let gross: f64 = self.omegas.iter().map(|w| w.abs()).sum();
        if net.abs() > 1e-9 * gross.max(1.0) {
            return Err(invalid(format!("positions do not net to zero (sum {net:e})")));
        }
        if !(self.funding.mu > 0.0) {
            return Err(invalid("randomization rate must be positive"));
        }
        self.margin.validate()?;
        self.capital.validate()
    }
}

/// Path count, seed and worker count of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

/// Exponential randomization time and its importance weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizationDraw {
    pub zeta: f64,
    pub weight: f64,
}

pub fn draw_randomization<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> Result<RandomizationDraw> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(invalid("randomization rate must be positive"));
    }
    let exp = Exp::new(mu).map_err(|_| invalid("randomization rate must be positive"))?;
    let zeta = exp.sample(rng);
    Ok(RandomizationDraw {
        zeta,
        weight: (mu * zeta).exp() / mu,
    })
}

/// Per-path contributions, in currency units of the unit swap.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathSample {
    pub cva: f64,
    pub dva: f64,
    pub mva: f64,
    pub mla: f64,
    pub kva: f64,
    pub uncovered_events: u32,
    pub clearing_residual: f64,
}

impl PathSample {
    /// Entry-price total: everything except the DVA.
    pub fn total(&self) -> f64 {
        self.cva + self.mva + self.mla + self.kva
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// Standard error as a percentage of the absolute mean.
    pub fn relative_se(&self) -> f64 {
        if self.mean == 0.0 {
            0.0
        } else {
            100.0 * self.se / self.mean.abs()
        }
    }
}

/// Standard error of the mean of `samples`.
pub fn standard_error(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(invalid("a standard error needs at least two samples"));
    }
    Ok(estimate(samples).se)
}

fn estimate(samples: &[f64]) -> Estimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate {
        mean,
        se: (var / n).sqrt(),
    }
}

/// Component estimates in basis points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XvaReport {
    pub setup: Setup,
    pub cva: Estimate,
    pub dva: Estimate,
    pub mva: Estimate,
    /// Present in the clearing setup only.
    pub mla: Option<Estimate>,
    pub kva: Estimate,
    pub total: Estimate,
    pub n_paths: usize,
    pub uncovered_events: u64,
    pub max_clearing_residual: f64,
}

impl XvaReport {
    /// Every component scaled by `1/factor` (the per-unit view of a bilateral book).
    pub fn divided_by(&self, factor: f64) -> Self {
        let d = |e: Estimate| Estimate {
            mean: e.mean / factor,
            se: e.se / factor,
        };
        Self {
            cva: d(self.cva),
            dva: d(self.dva),
            mva: d(self.mva),
            mla: self.mla.map(d),
            kva: d(self.kva),
            total: d(self.total),
            ..self.clone()
        }
    }
}

/// Build a report from per-path samples, reduced in path order.
pub fn assemble_report(setup: Setup, samples: &[PathSample]) -> XvaReport {
    let col = |f: &dyn Fn(&PathSample) -> f64| -> Estimate {
        let v: Vec<f64> = samples.iter().map(|s| f(s) * BP).collect();
        estimate(&v)
    };
    XvaReport {
        setup,
        cva: col(&|s| s.cva),
        dva: col(&|s| s.dva),
        mva: col(&|s| s.mva),
        mla: (setup == Setup::Ccp).then(|| col(&|s| s.mla)),
        kva: col(&|s| s.kva),
        total: col(&|s| s.total()),
        n_paths: samples.len(),
        uncovered_events: samples.iter().map(|s| u64::from(s.uncovered_events)).sum(),
        max_clearing_residual: samples.iter().map(|s| s.clearing_residual).fold(0.0, f64::max),
    }
}

fn run_paths<F>(run: &RunConfig, f: F) -> Result<Vec<PathSample>>
where
    F: Fn(u64) -> Result<PathSample> + Sync,
{
    let job = || (0..run.n_paths as u64).into_par_iter().map(&f).collect::<Result<Vec<_>>>();
    match run.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| invalid(format!("cannot build worker pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Per-path samples of the clearing adjustment.
pub fn ccva_samples(problem: &XvaProblem, run: &RunConfig) -> Result<Vec<PathSample>> {
    problem.validate()?;
    run_paths(run, |p| ccp_path(problem, run.seed, p))
}

/// Per-path samples of the bilateral adjustment, summed over counterparties.
pub fn bva_samples(problem: &XvaProblem, run: &RunConfig) -> Result<Vec<PathSample>> {
    problem.validate()?;
    run_paths(run, |p| csa_path(problem, run.seed, p))
}

pub fn ccva_estimate(problem: &XvaProblem, run: &RunConfig) -> Result<XvaReport> {
    Ok(assemble_report(Setup::Ccp, &ccva_samples(problem, run)?))
}

pub fn bva_estimate(problem: &XvaProblem, run: &RunConfig) -> Result<XvaReport> {
    Ok(assemble_report(Setup::Csa, &bva_samples(problem, run)?))
}

/// Dispatch on the problem's setup.
pub fn estimate_xva(problem: &XvaProblem, run: &RunConfig) -> Result<XvaReport> {
    match problem.setup {
        Setup::Ccp => ccva_estimate(problem, run),
        Setup::Csa => bva_estimate(problem, run),
    }
}

struct PathInputs<'a> {
    draw: DefaultDraw,
    rz: RandomizationDraw,
    driver: DriverSampler<'a>,
}

fn path_inputs<'a>(problem: &'a XvaProblem, seed: u64, path: u64) -> Result<PathInputs<'a>> {
    let draw = sample_default_times(&problem.shocks, &mut substream(seed, Purpose::Defaults, path));
    let rz = draw_randomization(problem.funding.mu, &mut substream(seed, Purpose::Randomization, path))?;
    let m = &problem.margin;
    let horizon = problem.swap.maturity() + m.liquidation + 2.0 * m.call_step;
    let driver = DriverSampler::new(&problem.swap, horizon, m.call_step, seed, path);
    Ok(PathInputs { draw, rz, driver })
}

/// Default fund as set at one reset date.
#[derive(Debug, Clone)]
struct FundSnapshot {
    dfc: Vec<f64>,
}

/// Lazily built default-fund and equity resets along one path.
struct ClearingResets<'a> {
    problem: &'a XvaProblem,
    draw: &'a DefaultDraw,
    funds: Vec<Option<FundSnapshot>>,
}

impl<'a> ClearingResets<'a> {
    fn new(problem: &'a XvaProblem, draw: &'a DefaultDraw) -> Self {
        let n = (problem.swap.maturity() / problem.margin.df_reset).ceil() as usize + 2;
        Self {
            problem,
            draw,
            funds: vec![None; n],
        }
    }

    fn fund_index(&self, t: f64) -> usize {
        ((t / self.problem.margin.df_reset) + 1e-9).floor() as usize
    }

    fn equity_index(&self, t: f64) -> usize {
        ((t / self.problem.margin.equity_reset) + 1e-9).floor() as usize
    }

    fn live_eads(&self, t: f64, s: f64) -> Vec<(usize, f64)> {
        let p = self.problem;
        let unit = unit_ead(&p.swap, t, s, p.margin.quantile, p.margin.mpor());
        p.omegas
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.draw.alive(i, t))
            .map(|(i, &w)| (i, unit.for_position(w)))
            .collect()
    }

    fn fund<D: DriverLevels>(&mut self, k: usize, driver: &D) -> Result<&FundSnapshot> {
        if self.funds[k].is_none() {
            let p = self.problem;
            let u = k as f64 * p.margin.df_reset;
            let s = driver.level(u)?;
            let eads = self.live_eads(u, s);
            let total = default_fund_total(&eads.iter().map(|e| e.1).collect::<Vec<_>>());
            let ims: Vec<f64> = eads
                .iter()
                .map(|&(i, _)| initial_margin_proxy(&p.swap, p.omegas[i], u, s, p.margin.quantile, p.margin.mpor()))
                .collect();
            let shares = allocate_default_fund(total, &ims);
            let mut dfc = vec![0.0; p.omegas.len()];
            for (&(i, _), d) in eads.iter().zip(shares) {
                dfc[i] = d;
            }
            self.funds[k] = Some(FundSnapshot { dfc });
        }
        Ok(self.funds[k].as_ref().expect("filled above"))
    }

    fn equity_target<D: DriverLevels>(&self, y: usize, driver: &D) -> Result<f64> {
        let p = self.problem;
        let u = y as f64 * p.margin.equity_reset;
        let s = driver.level(u)?;
        let eads: Vec<f64> = self.live_eads(u, s).into_iter().map(|e| e.1).collect();
        Ok(p.margin.equity_fraction * k_ccp(&eads, &p.capital))
    }
}

/// Waterfall state kept in step with the reset calendar.
struct ClearingBook<'a> {
    resets: ClearingResets<'a>,
    state: WaterfallState,
    fund_k: Option<usize>,
    equity_y: Option<usize>,
}

impl<'a> ClearingBook<'a> {
    fn new(problem: &'a XvaProblem, draw: &'a DefaultDraw) -> Self {
        Self {
            resets: ClearingResets::new(problem, draw),
            state: WaterfallState::new(problem.omegas.len()),
            fund_k: None,
            equity_y: None,
        }
    }

    /// Bring resets and survival flags up to time `t`.
    fn advance<D: DriverLevels>(&mut self, t: f64, driver: &D) -> Result<()> {
        let y = self.resets.equity_index(t);
        if self.equity_y != Some(y) {
            let target = self.resets.equity_target(y, driver)?;
            self.state.reset_equity(target);
            self.equity_y = Some(y);
        }
        let k = self.resets.fund_index(t);
        if self.fund_k != Some(k) {
            let dfc = self.resets.fund(k, driver)?.dfc.clone();
            for (i, acc) in self.state.accounts.iter_mut().enumerate() {
                acc.alive = self.resets.draw.alive(i, k as f64 * self.resets.problem.margin.df_reset);
            }
            self.state.reset_default_fund(&dfc);
            self.fund_k = Some(k);
        }
        for i in 0..self.state.accounts.len() {
            if !self.resets.draw.alive(i, t) {
                self.state.mark_default(i);
            }
        }
        Ok(())
    }
}

fn ccp_path(problem: &XvaProblem, seed: u64, path: u64) -> Result<PathSample> {
    let PathInputs { draw, rz, driver } = path_inputs(problem, seed, path)?;
    let spec = &problem.swap;
    let m = &problem.margin;
    let f = &problem.funding;
    let r = problem.reference;
    let dp = m.mpor();
    let tau_bar = draw.member_times[r].min(spec.maturity());
    let mut out = PathSample::default();
    let mut book = ClearingBook::new(problem, &draw);

    // (a) default events liquidated while the reference member is alive
    let mut zeta_state: Option<(f64, f64, f64)> = None;
    let want_zeta = rz.zeta < tau_bar;
    for ev in draw.events_before(spec.maturity()) {
        let liq = ev.time + m.liquidation;
        if liq >= tau_bar {
            break;
        }
        if want_zeta && zeta_state.is_none() && rz.zeta < liq {
            zeta_state = Some(snapshot_at_zeta(&mut book, rz.zeta, r, &driver)?);
        }
        let call = m.last_call(ev.time);
        let k_call = book.resets.fund_index(call);
        let s_call = driver.level(call)?;
        let mut breach = 0.0;
        for &i in &ev.members {
            let w = ccp_weight(problem.omegas[i]);
            let acc = MemberAccounts {
                vm: swap_mtm_left(spec, call, &driver, w)?,
                im: initial_margin_proxy(spec, problem.omegas[i], call, s_call, m.quantile, dp),
                dfc: book.resets.fund(k_call, &driver)?.dfc[i],
                alive: false,
            };
            let b = member_breach_exposure(spec, problem.omegas[i], problem.recoveries[i], &acc, ev.time, m.liquidation, &driver)?;
            breach += b.loss;
        }
        book.advance(liq, &driver)?;
        let outcome = book.state.apply(breach);
        if outcome.uncovered > 0.0 {
            out.uncovered_events += 1;
        }
        out.cva += spec.discount(liq) * outcome.refills[r];
    }

    if !want_zeta {
        return Ok(out);
    }
    let (equity, dfc_ref, dfc_live) = match zeta_state {
        Some(z) => z,
        None => snapshot_at_zeta(&mut book, rz.zeta, r, &driver)?,
    };

    // (b)-(e) randomized terms at ζ
    let zeta = rz.zeta;
    let omega = problem.omegas[r];
    let w = ccp_weight(omega);
    let s = driver.level(zeta)?;
    let p_now = swap_mtm(spec, zeta, &driver, w)?;
    let vm = swap_mtm_left(spec, m.last_call(zeta), &driver, w)?;
    let im = initial_margin_proxy(spec, omega, zeta, s, m.quantile, dp);
    let margins = vm + im;
    let collateral = margins + dfc_ref;
    let end = zeta + m.liquidation;
    let q = swap_mtm(spec, end, &driver, w)? + unpaid_dividends(spec, zeta, end, &driver, w)?;
    let gamma = problem.shocks.member_total_intensity(r, zeta)?;

    out.dva = -rz.weight * spec.discount(end) * gamma * (1.0 - problem.recoveries[r]) * pos(q - collateral);
    let lambda_tilde = f.lambda_bar - (1.0 - f.r_bar) * gamma;
    let gap = margins - p_now;
    out.mva = rz.weight * spec.discount(zeta) * (lambda_tilde * pos(gap) - f.lambda * neg(gap));
    out.mla = rz.weight * spec.discount(zeta) * m.fee * (collateral - vm);

    let live_eads: Vec<f64> = book.resets.live_eads(zeta, s).into_iter().map(|e| e.1).collect();
    let kccp = k_ccp(&live_eads, &problem.capital);
    let kcm = k_cm(dfc_ref, equity, dfc_live, kccp, &problem.capital)?;
    out.kva = kva_sample(zeta, rz.weight, tau_bar, problem.capital.hurdle, spec.rate, dfc_ref + kcm);

    let p_unit = swap_mtm(spec, zeta, &driver, 1.0)?;
    let net: f64 = problem.omegas.iter().map(|&o| ccp_weight(o) * p_unit).sum();
    out.clearing_residual = net.abs();
    Ok(out)
}

/// Equity, reference DFC and total live DFC at `zeta`.
fn snapshot_at_zeta<D: DriverLevels>(book: &mut ClearingBook<'_>, zeta: f64, r: usize, driver: &D) -> Result<(f64, f64, f64)> {
    book.advance(zeta, driver)?;
    let live: f64 = book.state.accounts.iter().filter(|a| a.alive).map(|a| a.dfc).sum();
    Ok((book.state.equity, book.state.accounts[r].dfc, live))
}

fn csa_path(problem: &XvaProblem, seed: u64, path: u64) -> Result<PathSample> {
    let PathInputs { draw, rz, driver } = path_inputs(problem, seed, path)?;
    let spec = &problem.swap;
    let m = &problem.margin;
    let f = &problem.funding;
    let b = problem.reference;
    let zeta = rz.zeta;
    let tau_b = draw.member_times[b];
    let bank_horizon = tau_b.min(spec.maturity());
    let mut out = PathSample::default();
    if zeta >= bank_horizon {
        return Ok(out);
    }
    let dp = m.mpor();
    let s = driver.level(zeta)?;
    let call = m.last_call(zeta);
    let end = zeta + m.liquidation;
    let p_unit = swap_mtm(spec, zeta, &driver, 1.0)?;
    let vm_unit = swap_mtm_left(spec, call, &driver, 1.0)?;
    let q_unit = swap_mtm(spec, end, &driver, 1.0)? + unpaid_dividends(spec, zeta, end, &driver, 1.0)?;
    let unit = unit_ead(spec, zeta, s, m.quantile, dp);
    let (disc_end, disc_now) = (spec.discount(end), spec.discount(zeta));
    let r_b = problem.recoveries[b];
    let mut sets = Vec::new();

    for (c, &omega) in problem.omegas.iter().enumerate() {
        if c == b || omega == 0.0 || zeta >= draw.member_times[c] {
            continue;
        }
        // values owed by the bank to counterparty c
        let p = omega * p_unit;
        let vm = omega * vm_unit;
        let q = omega * q_unit;
        let im_cpty = initial_margin_proxy(spec, omega, zeta, s, m.quantile, dp);
        let im_bank = initial_margin_proxy(spec, -omega, zeta, s, m.quantile, dp);
        let c_b = vm + im_bank;
        let c_c = vm - im_cpty;
        let g = problem.shocks.group_intensities(b, c, zeta)?;
        let cpty_rate = g.cpty_all + if draw.member_times[c] <= end { g.bank_not_cpty } else { 0.0 };
        let bank_rate = g.bank_all + if tau_b <= end { g.cpty_not_bank } else { 0.0 };
        out.cva += rz.weight * disc_end * cpty_rate * (1.0 - problem.recoveries[c]) * neg(q - c_c);
        out.dva -= rz.weight * disc_end * bank_rate * (1.0 - r_b) * pos(q - c_b);
        let lambda_tilde = f.lambda_bar - (1.0 - f.r_bar) * g.bank_all;
        let gap = c_b - p;
        out.mva += rz.weight * disc_now * (lambda_tilde * pos(gap) - f.lambda * neg(gap));
        sets.push(NettingSet {
            dp: problem.default_probs[c],
            recovery: problem.recoveries[c],
            maturity: spec.maturity() - zeta,
            ead: unit.for_position(omega),
        });
    }
    let capital = k_ccr(&sets, &problem.capital)? + k_cva(&sets, &problem.capital);
    out.kva = kva_sample(zeta, rz.weight, bank_horizon, problem.capital.hurdle, spec.rate, capital);
    Ok(out)
}
