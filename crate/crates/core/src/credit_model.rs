//! Common-shock (Marshall–Olkin) default model with piecewise-constant intensities.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Right-continuous piecewise-constant function of time.
///
/// `levels[k]` applies on `[breaks[k-1], breaks[k])`; the last level extends to infinity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    breaks: Vec<f64>,
    levels: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breaks.len() + 1 {
            return Err(invalid("need exactly one more level than breakpoints"));
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) || breaks.first().is_some_and(|&b| !(b > 0.0)) {
            return Err(invalid("breakpoints must be positive and strictly increasing"));
        }
        if levels.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(invalid("intensity levels must be finite and nonnegative"));
        }
        Ok(Self { breaks, levels })
    }

    pub fn constant(level: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![level])
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn segment(&self, t: f64) -> usize {
        self.breaks.partition_point(|&b| b <= t)
    }

    pub fn value(&self, t: f64) -> f64 {
        self.levels[self.segment(t)]
    }

    /// `∫_0^t γ(s) ds`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for (k, &lvl) in self.levels.iter().enumerate() {
            let end = self.breaks.get(k).copied().unwrap_or(f64::INFINITY);
            if t <= end {
                return acc + lvl * (t - start);
            }
            acc += lvl * (end - start);
            start = end;
        }
        acc
    }

    /// `inf{t : ∫_0^t γ > e}`, infinite when the hazard never gets there.
    pub fn inverse_cumulative(&self, e: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for (k, &lvl) in self.levels.iter().enumerate() {
            let end = self.breaks.get(k).copied().unwrap_or(f64::INFINITY);
            let mass = lvl * (end - start);
            if acc + mass > e {
                return start + (e - acc) / lvl;
            }
            acc += mass;
            start = end;
        }
        f64::INFINITY
    }

    /// Same function expressed on a finer set of breakpoints.
    fn refine(&self, breaks: &[f64]) -> Vec<f64> {
        let mut starts = vec![0.0];
        starts.extend_from_slice(breaks);
        starts.iter().map(|&s| self.value(s)).collect()
    }

    /// Pointwise `self − Σ others`, returned as raw levels on merged breakpoints.
    fn minus_all(&self, others: &[&PiecewiseConstant]) -> (Vec<f64>, Vec<f64>) {
        let mut breaks: Vec<f64> = self.breaks.clone();
        for o in others {
            breaks.extend_from_slice(&o.breaks);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut levels = self.refine(&breaks);
        for o in others {
            for (l, v) in levels.iter_mut().zip(o.refine(&breaks)) {
                *l -= v;
            }
        }
        (breaks, levels)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.breaks.clone(), self.levels.iter().map(|l| l * factor).collect())
    }

    /// Pointwise minimum of several functions.
    pub fn pointwise_min(fs: &[&PiecewiseConstant]) -> Result<Self> {
        let mut breaks: Vec<f64> = fs.iter().flat_map(|f| f.breaks.iter().copied()).collect();
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let mut starts = vec![0.0];
        starts.extend_from_slice(&breaks);
        let levels = starts
            .iter()
            .map(|&s| fs.iter().map(|f| f.value(s)).fold(f64::INFINITY, f64::min))
            .collect();
        Self::new(breaks, levels)
    }
}

/// Hazard bootstrapped from 3y and 5y CDS spreads (bp), flat on `[0,3)` and `[3,∞)`.
///
/// The 3y segment uses the credit triangle. The second segment solves the
/// undiscounted continuous-premium par condition
/// `(1−R)(1 − S(5)) = s_5 ∫_0^5 S(t) dt`.
pub fn bootstrap_marginal_intensity(spread_3y: f64, spread_5y: f64, recovery: f64) -> Result<PiecewiseConstant> {
    if !(spread_3y > 0.0 && spread_5y > 0.0) {
        return Err(invalid("CDS spreads must be positive"));
    }
    if !(0.0..1.0).contains(&recovery) {
        return Err(invalid(format!("recovery must lie in [0, 1), got {recovery}")));
    }
    let lgd = 1.0 - recovery;
    let (s3, s5) = (spread_3y * 1e-4, spread_5y * 1e-4);
    let l1 = s3 / lgd;
    let surv3 = (-3.0 * l1).exp();
    let int3 = (1.0 - surv3) / l1;
    let par_gap = |l2: f64| {
        let int35 = if l2 > 0.0 {
            surv3 * (1.0 - (-2.0 * l2).exp()) / l2
        } else {
            2.0 * surv3
        };
        let surv5 = surv3 * (-2.0 * l2).exp();
        lgd * (1.0 - surv5) - s5 * (int3 + int35)
    };
    if par_gap(0.0) > 0.0 {
        return Err(invalid("5y spread too low for a nonnegative forward hazard"));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while par_gap(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(invalid("5y spread cannot be matched"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if par_gap(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    PiecewiseConstant::new(vec![3.0], vec![l1, 0.5 * (lo + hi)])
}

/// One shock: the set of members it kills and its intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub members: Vec<usize>,
    pub intensity: PiecewiseConstant,
}

#[derive(Debug, Clone)]
pub struct ShockModel {
    n_members: usize,
    shocks: Vec<ShockSpec>,
    by_member: Vec<Vec<usize>>,
}

impl ShockModel {
    pub fn new(n_members: usize, shocks: Vec<ShockSpec>) -> Result<Self> {
        let mut by_member = vec![Vec::new(); n_members];
        for (k, s) in shocks.iter().enumerate() {
            if s.members.is_empty() {
                return Err(invalid(format!("shock {k} has no members")));
            }
            for &m in &s.members {
                if m >= n_members {
                    return Err(Error::UnknownMember(m));
                }
                if by_member[m].contains(&k) {
                    return Err(invalid(format!("member {m} listed twice in shock {k}")));
                }
                by_member[m].push(k);
            }
        }
        if let Some(m) = by_member.iter().position(Vec::is_empty) {
            return Err(invalid(format!("member {m} belongs to no shock")));
        }
        Ok(Self {
            n_members,
            shocks,
            by_member,
        })
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn shocks(&self) -> &[ShockSpec] {
        &self.shocks
    }

    /// Indices of the shocks containing member `i`.
    pub fn shocks_of(&self, i: usize) -> Result<&[usize]> {
        self.by_member.get(i).map(Vec::as_slice).ok_or(Error::UnknownMember(i))
    }

    /// `γ_•^i(t)`: sum of the intensities of the shocks containing `i`.
    pub fn member_total_intensity(&self, i: usize, t: f64) -> Result<f64> {
        Ok(self.shocks_of(i)?.iter().map(|&k| self.shocks[k].intensity.value(t)).sum())
    }

    /// The four shock-group sums used by the bilateral estimator.
    pub fn group_intensities(&self, bank: usize, cpty: usize, t: f64) -> Result<GroupIntensities> {
        if bank == cpty {
            return Err(invalid("bank and counterparty must differ"));
        }
        let b = self.shocks_of(bank)?;
        let c = self.shocks_of(cpty)?;
        let mut g = GroupIntensities::default();
        for &k in c {
            let v = self.shocks[k].intensity.value(t);
            g.cpty_all += v;
            if !b.contains(&k) {
                g.cpty_not_bank += v;
            }
        }
        for &k in b {
            let v = self.shocks[k].intensity.value(t);
            g.bank_all += v;
            if !c.contains(&k) {
                g.bank_not_cpty += v;
            }
        }
        Ok(g)
    }
}

/// Shock-group intensity sums at one time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GroupIntensities {
    /// Over shocks containing the counterparty.
    pub cpty_all: f64,
    /// Over shocks containing the bank but not the counterparty.
    pub bank_not_cpty: f64,
    /// Over shocks containing the bank.
    pub bank_all: f64,
    /// Over shocks containing the counterparty but not the bank.
    pub cpty_not_bank: f64,
}

/// Singleton shocks carrying whatever marginal intensity the common shocks leave over.
///
/// Shock `i` of the result is the idiosyncratic shock of member `i`; the
/// common shocks follow in the given order.
pub fn build_shock_model(marginals: &[PiecewiseConstant], common: &[ShockSpec]) -> Result<ShockModel> {
    let n = marginals.len();
    let mut shocks = Vec::with_capacity(n + common.len());
    for (i, m) in marginals.iter().enumerate() {
        let mine: Vec<&PiecewiseConstant> = common
            .iter()
            .filter(|s| s.members.contains(&i))
            .map(|s| &s.intensity)
            .collect();
        let (breaks, mut levels) = m.minus_all(&mine);
        let scale = m.levels().iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-300);
        for (seg, l) in levels.iter_mut().enumerate() {
            if *l < -1e-12 * scale {
                return Err(Error::ShockExceedsMarginal {
                    member: i,
                    segment: seg,
                    excess: -*l,
                });
            }
            *l = l.max(0.0);
        }
        shocks.push(ShockSpec {
            members: vec![i],
            intensity: PiecewiseConstant::new(breaks, levels)?,
        });
    }
    shocks.extend(common.iter().cloned());
    ShockModel::new(n, shocks)
}

/// Nested common shocks: shock `k` hits the `sizes[k]` riskiest members and
/// carries `fractions[k]` times the smallest marginal in that set.
pub fn nested_common_shocks(marginals: &[PiecewiseConstant], sizes: &[usize], fractions: &[f64]) -> Result<Vec<ShockSpec>> {
    if sizes.len() != fractions.len() {
        return Err(invalid("one fraction per nested shock is required"));
    }
    let mut order: Vec<usize> = (0..marginals.len()).collect();
    // riskiest first, ranking by the hazard mass over five years
    order.sort_by(|&a, &b| marginals[b].cumulative(5.0).total_cmp(&marginals[a].cumulative(5.0)).then(a.cmp(&b)));
    sizes
        .iter()
        .zip(fractions)
        .map(|(&size, &frac)| {
            if size == 0 || size > marginals.len() {
                return Err(invalid(format!("nested shock size {size} out of range")));
            }
            if !(0.0..=1.0).contains(&frac) {
                return Err(invalid(format!("shock fraction {frac} outside [0, 1]")));
            }
            let mut members: Vec<usize> = order[..size].to_vec();
            members.sort_unstable();
            let fs: Vec<&PiecewiseConstant> = members.iter().map(|&m| &marginals[m]).collect();
            let intensity = PiecewiseConstant::pointwise_min(&fs)?.scaled(frac)?;
            Ok(ShockSpec { members, intensity })
        })
        .collect()
}

/// One joint draw of shock and member default times.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultDraw {
    pub shock_times: Vec<f64>,
    pub member_times: Vec<f64>,
    /// Index of the shock that realizes each member's default.
    pub first_shock: Vec<usize>,
}

/// A shock arrival that kills at least one member.
#[derive(Debug, Clone, PartialEq)]
pub struct DefaultEvent {
    pub time: f64,
    pub shock: usize,
    pub members: Vec<usize>,
}

pub fn sample_default_times<R: Rng + ?Sized>(model: &ShockModel, rng: &mut R) -> DefaultDraw {
    let shock_times: Vec<f64> = model
        .shocks
        .iter()
        .map(|s| {
            let e: f64 = Exp1.sample(rng);
            s.intensity.inverse_cumulative(e)
        })
        .collect();
    let mut member_times = Vec::with_capacity(model.n_members);
    let mut first_shock = Vec::with_capacity(model.n_members);
    for ks in &model.by_member {
        let k = *ks
            .iter()
            .min_by(|&&a, &&b| shock_times[a].total_cmp(&shock_times[b]))
            .expect("every member has a shock");
        member_times.push(shock_times[k]);
        first_shock.push(k);
    }
    DefaultDraw {
        shock_times,
        member_times,
        first_shock,
    }
}

impl DefaultDraw {
    /// Default events strictly before `horizon`, in time order.
    pub fn events_before(&self, horizon: f64) -> Vec<DefaultEvent> {
        let mut events: Vec<DefaultEvent> = Vec::new();
        for (k, &t) in self.shock_times.iter().enumerate() {
            if t >= horizon {
                continue;
            }
            let members: Vec<usize> = (0..self.member_times.len())
                .filter(|&i| self.first_shock[i] == k && self.member_times[i] == t)
                .collect();
            if !members.is_empty() {
                events.push(DefaultEvent { time: t, shock: k, members });
            }
        }
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.shock.cmp(&b.shock)));
        events
    }

    pub fn alive(&self, i: usize, t: f64) -> bool {
        t < self.member_times[i]
    }
}
