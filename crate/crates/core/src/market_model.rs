//! Driver dynamics, the stylized swap and its cash-flow bookkeeping.

use std::cell::RefCell;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::norm_ppf;
use crate::rng::{substream, uniform_at, Purpose};

/// Business days per year used by the daily margin grid.
pub const DAYS_PER_YEAR: f64 = 250.0;

const TIME_EPS: f64 = 1e-10;

/// Discount factor under a constant rate.
pub fn discount_factor(r: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid(format!("discount time must be nonnegative, got {t}")));
    }
    Ok((-r * t).exp())
}

/// Ordered payment dates `T_1 < ... < T_d`, with `T_0 = 0` implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    dates: Vec<f64>,
}

impl Schedule {
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.is_empty() {
            return Err(invalid("payment schedule is empty"));
        }
        let mut prev = 0.0;
        for &d in &dates {
            if !(d > prev) {
                return Err(invalid("payment dates must be strictly increasing and positive"));
            }
            prev = d;
        }
        Ok(Self { dates })
    }

    /// Evenly spaced schedule, e.g. quarterly over five years.
    pub fn regular(maturity: f64, period: f64) -> Result<Self> {
        if !(maturity > 0.0 && period > 0.0) {
            return Err(invalid("maturity and period must be positive"));
        }
        let n = (maturity / period).round() as usize;
        if n == 0 || ((n as f64) * period - maturity).abs() > 1e-9 {
            return Err(invalid("maturity must be a whole number of periods"));
        }
        Self::new((1..=n).map(|l| l as f64 * period).collect())
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn maturity(&self) -> f64 {
        *self.dates.last().expect("nonempty schedule")
    }

    /// Fixing date `T_{l-1}` of payment `l` (0-based).
    pub fn fixing_date(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.dates[l - 1]
        }
    }

    pub fn accrual(&self, l: usize) -> f64 {
        self.dates[l] - self.fixing_date(l)
    }

    /// Index of the first payment date strictly after `t`, if any.
    pub fn running_period(&self, t: f64) -> Option<usize> {
        let k = self.dates.partition_point(|&d| d <= t + TIME_EPS);
        (k < self.dates.len()).then_some(k)
    }

    /// Index of the payment date equal to `t`, if `t` is one.
    pub fn payment_at(&self, t: f64) -> Option<usize> {
        let k = self.dates.partition_point(|&d| d < t - TIME_EPS);
        (k < self.dates.len() && (self.dates[k] - t).abs() <= TIME_EPS).then_some(k)
    }
}

/// Calibrate notional and strike so that both legs are worth one at time zero.
pub fn calibrate_swap(s0: f64, r: f64, kappa: f64, schedule: &Schedule) -> Result<(f64, f64)> {
    if !(s0 > 0.0) {
        return Err(invalid("initial driver level must be positive"));
    }
    let mut fixed = 0.0;
    let mut floating = 0.0;
    for l in 0..schedule.len() {
        let w = (-r * schedule.dates()[l]).exp() * schedule.accrual(l);
        fixed += w;
        floating += w * (kappa * schedule.fixing_date(l)).exp();
    }
    if !(fixed > 0.0 && floating > 0.0) {
        return Err(invalid("degenerate schedule: zero annuity"));
    }
    let notional = 1.0 / (s0 * floating);
    let strike = 1.0 / (notional * fixed);
    Ok((notional, strike))
}

/// Market parameters of the swap as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapParams {
    pub s0: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub rate: f64,
    pub maturity: f64,
    pub period: f64,
}

impl Default for SwapParams {
    fn default() -> Self {
        Self {
            s0: 100.0,
            kappa: 0.12,
            sigma: 0.20,
            rate: 0.02,
            maturity: 5.0,
            period: 0.25,
        }
    }
}

/// The calibrated stylized swap. Values are those of the party receiving
/// `h_l (S̄ − S_{T_{l-1}})` at each `T_l`, scaled by the notional.
#[derive(Debug, Clone)]
pub struct SwapSpec {
    pub s0: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub rate: f64,
    pub schedule: Schedule,
    pub notional: f64,
    pub strike: f64,
    // suffix sums over payments l.. of β_{T_l} h_l and β_{T_l} h_l e^{κ T_{l-1}}
    fixed_suffix: Vec<f64>,
    float_suffix: Vec<f64>,
}

impl SwapSpec {
    pub fn new(params: &SwapParams) -> Result<Self> {
        let schedule = Schedule::regular(params.maturity, params.period)?;
        Self::with_schedule(params.s0, params.kappa, params.sigma, params.rate, schedule)
    }

    pub fn with_schedule(s0: f64, kappa: f64, sigma: f64, rate: f64, schedule: Schedule) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(invalid("volatility must be nonnegative"));
        }
        let (notional, strike) = calibrate_swap(s0, rate, kappa, &schedule)?;
        let d = schedule.len();
        let mut fixed_suffix = vec![0.0; d + 1];
        let mut float_suffix = vec![0.0; d + 1];
        for l in (0..d).rev() {
            let w = (-rate * schedule.dates()[l]).exp() * schedule.accrual(l);
            fixed_suffix[l] = fixed_suffix[l + 1] + w;
            float_suffix[l] = float_suffix[l + 1] + w * (kappa * schedule.fixing_date(l)).exp();
        }
        Ok(Self {
            s0,
            kappa,
            sigma,
            rate,
            schedule,
            notional,
            strike,
            fixed_suffix,
            float_suffix,
        })
    }

    pub fn maturity(&self) -> f64 {
        self.schedule.maturity()
    }

    pub fn discount(&self, t: f64) -> f64 {
        (-self.rate * t).exp()
    }

    /// Time-zero values of the fixed and floating legs.
    pub fn leg_values(&self) -> (f64, f64) {
        (
            self.notional * self.strike * self.fixed_suffix[0],
            self.notional * self.s0 * self.float_suffix[0],
        )
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < 0.0 || t > self.maturity() + TIME_EPS {
            return Err(Error::TimeOutOfRange {
                t,
                maturity: self.maturity(),
            });
        }
        Ok(())
    }

    /// Clean value `P*(t, s)`: the payments not yet fixed at `t`.
    pub fn clean_value(&self, t: f64, s: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.clean_value_unchecked(t, s))
    }

    pub(crate) fn clean_value_unchecked(&self, t: f64, s: f64) -> f64 {
        match self.schedule.running_period(t) {
            None => 0.0,
            Some(k) => {
                let fixed = self.strike * self.fixed_suffix[k + 1];
                let float = s * (-self.kappa * t).exp() * self.float_suffix[k + 1];
                self.notional * (self.rate * t).exp() * (fixed - float)
            }
        }
    }

    /// Sensitivity of the clean value to the driver: `P*(t, s) = A(t) − s·B(t)`; returns `B(t)`.
    pub fn driver_sensitivity(&self, t: f64) -> f64 {
        match self.schedule.running_period(t) {
            None => 0.0,
            Some(k) => self.notional * ((self.rate - self.kappa) * t).exp() * self.float_suffix[k + 1],
        }
    }

    /// `β_u^{-1} Σ_{l ≥ l_u} β_{T_l} h_l e^{κ T_{l-1}}`, the annuity entering the EAD closed forms.
    pub fn ead_annuity(&self, u: f64) -> f64 {
        match self.schedule.running_period(u) {
            None => 0.0,
            Some(k) => (self.rate * u).exp() * self.float_suffix[k],
        }
    }

    /// Unit coupon of payment `l` given its fixing.
    pub fn coupon(&self, l: usize, fixing: f64) -> f64 {
        self.notional * self.schedule.accrual(l) * (self.strike - fixing)
    }

    /// Value at `t` of the already fixed running coupon.
    pub fn accrued(&self, t: f64, l: usize, fixing: f64) -> f64 {
        ((-self.rate * (self.schedule.dates()[l] - t)).exp()) * self.coupon(l, fixing)
    }
}

/// Anything that can report the driver level at a time.
pub trait DriverLevels {
    fn level(&self, t: f64) -> Result<f64>;
}

/// Full mark-to-market `position · P_t` (zero once the swap has matured).
pub fn swap_mtm<D: DriverLevels + ?Sized>(spec: &SwapSpec, t: f64, path: &D, position: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::TimeOutOfRange {
            t,
            maturity: spec.maturity(),
        });
    }
    if position == 0.0 {
        return Ok(0.0);
    }
    let Some(k) = spec.schedule.running_period(t) else {
        return Ok(0.0);
    };
    let fixing = path.level(spec.schedule.fixing_date(k))?;
    let s = path.level(t)?;
    Ok(position * (spec.accrued(t, k, fixing) + spec.clean_value_unchecked(t, s)))
}

/// Left limit `position · P_{t−}`: on a payment date this still contains the coupon due.
pub fn swap_mtm_left<D: DriverLevels + ?Sized>(spec: &SwapSpec, t: f64, path: &D, position: f64) -> Result<f64> {
    let mut v = swap_mtm(spec, t, path, position)?;
    if let Some(l) = spec.schedule.payment_at(t) {
        let fixing = path.level(spec.schedule.fixing_date(l))?;
        v += position * spec.coupon(l, fixing);
    }
    Ok(v)
}

/// Missed coupons on `[tau, t]`, capitalized at the risk-free rate to `t`.
pub fn unpaid_dividends<D: DriverLevels + ?Sized>(
    spec: &SwapSpec,
    tau: f64,
    t: f64,
    path: &D,
    position: f64,
) -> Result<f64> {
    if t < tau {
        return Err(invalid(format!("dividend window end {t} precedes default time {tau}")));
    }
    if position == 0.0 {
        return Ok(0.0);
    }
    let dates = spec.schedule.dates();
    let first = dates.partition_point(|&d| d < tau - TIME_EPS);
    let mut total = 0.0;
    for (l, &tl) in dates.iter().enumerate().skip(first) {
        if tl > t + TIME_EPS {
            break;
        }
        let fixing = path.level(spec.schedule.fixing_date(l))?;
        total += (spec.rate * (t - tl)).exp() * spec.coupon(l, fixing);
    }
    Ok(position * total)
}

/// Lazily evaluated driver trajectory for one path.
///
/// The Brownian motion is sampled on a fixed daily grid. Off-grid times are
/// filled by a Brownian bridge whose normal is keyed by the grid interval, so
/// the level at any time depends only on (seed, path, time). Two off-grid
/// times in the same daily interval share that normal.
pub struct DriverSampler<'a> {
    spec: &'a SwapSpec,
    step: f64,
    w: Vec<f64>,
    log_s0: f64,
    drift: f64,
    bridge: RefCell<ChaCha8Rng>,
}

impl<'a> DriverSampler<'a> {
    pub fn new(spec: &'a SwapSpec, horizon: f64, step: f64, seed: u64, path: u64) -> Self {
        let n = (horizon / step).ceil() as usize + 1;
        let mut rng = substream(seed, Purpose::Driver, path);
        let sd = step.sqrt();
        let mut w = Vec::with_capacity(n + 1);
        w.push(0.0);
        let mut acc = 0.0;
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            acc += sd * z;
            w.push(acc);
        }
        Self {
            spec,
            step,
            w,
            log_s0: spec.s0.ln(),
            drift: spec.kappa - 0.5 * spec.sigma * spec.sigma,
            bridge: RefCell::new(substream(seed, Purpose::Bridge, path)),
        }
    }

    pub fn horizon(&self) -> f64 {
        (self.w.len() - 1) as f64 * self.step
    }

    fn brownian(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.horizon() + TIME_EPS {
            return Err(Error::MissingLevel(t));
        }
        let x = t / self.step;
        let j = (x + 1e-9).floor() as usize;
        let frac = t - j as f64 * self.step;
        if frac <= TIME_EPS || j + 1 >= self.w.len() {
            return Ok(self.w[j.min(self.w.len() - 1)]);
        }
        let u = uniform_at(&mut self.bridge.borrow_mut(), j as u64);
        let xi = norm_ppf(u);
        let (w0, w1) = (self.w[j], self.w[j + 1]);
        let mean = w0 + frac / self.step * (w1 - w0);
        let var = frac * (self.step - frac) / self.step;
        Ok(mean + var.sqrt() * xi)
    }
}

impl DriverLevels for DriverSampler<'_> {
    fn level(&self, t: f64) -> Result<f64> {
        let w = self.brownian(t)?;
        Ok((self.log_s0 + self.drift * t + self.spec.sigma * w).exp())
    }
}

/// Driver levels on an explicit grid plus every fixing date of the schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub fixings: Vec<f64>,
    fixing_dates: Vec<f64>,
}

/// Simulate the driver on `grid` for path `path` of the run keyed by `seed`.
pub fn simulate_driver(spec: &SwapSpec, grid: &[f64], seed: u64, path: u64) -> Result<DriverPath> {
    if grid.first().copied() != Some(0.0) {
        return Err(invalid("driver grid must start at 0"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("driver grid must be strictly increasing"));
    }
    let horizon = grid.last().copied().unwrap_or(0.0).max(spec.maturity());
    let sampler = DriverSampler::new(spec, horizon, 1.0 / DAYS_PER_YEAR, seed, path);
    let values = grid.iter().map(|&t| sampler.level(t)).collect::<Result<Vec<_>>>()?;
    let fixing_dates: Vec<f64> = (0..spec.schedule.len()).map(|l| spec.schedule.fixing_date(l)).collect();
    let fixings = fixing_dates.iter().map(|&t| sampler.level(t)).collect::<Result<Vec<_>>>()?;
    Ok(DriverPath {
        times: grid.to_vec(),
        values,
        fixings,
        fixing_dates,
    })
}

impl DriverPath {
    /// Path built from given levels; used for hand-constructed scenarios in tests.
    pub fn from_levels(spec: &SwapSpec, times: Vec<f64>, values: Vec<f64>, fixings: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || fixings.len() != spec.schedule.len() {
            return Err(invalid("level vectors do not match grid and schedule"));
        }
        if values.iter().chain(&fixings).any(|&v| !(v > 0.0)) {
            return Err(invalid("driver levels must be positive"));
        }
        let fixing_dates = (0..spec.schedule.len()).map(|l| spec.schedule.fixing_date(l)).collect();
        Ok(Self {
            times,
            values,
            fixings,
            fixing_dates,
        })
    }
}

fn lookup(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let k = times.partition_point(|&x| x < t - TIME_EPS);
    (k < times.len() && (times[k] - t).abs() <= TIME_EPS).then(|| values[k])
}

impl DriverLevels for DriverPath {
    fn level(&self, t: f64) -> Result<f64> {
        lookup(&self.times, &self.values, t)
            .or_else(|| lookup(&self.fixing_dates, &self.fixings, t))
            .ok_or(Error::MissingLevel(t))
    }
}
