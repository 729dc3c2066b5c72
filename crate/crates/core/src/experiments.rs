//! Scenario files, table reproduction and the quantile sweep.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capital::CapitalParams;
use crate::credit_model::{bootstrap_marginal_intensity, build_shock_model, nested_common_shocks, PiecewiseConstant};
use crate::error::{invalid, Error, Result};
use crate::margining::MarginConfig;
use crate::market_model::{SwapParams, SwapSpec, DAYS_PER_YEAR};
use crate::xva_engine::{estimate_xva, FundingConfig, RunConfig, Setup, XvaProblem, XvaReport};

/// Scenario format understood by this version.
pub const FORMAT_VERSION: u32 = 1;

/// The shipped nine-member base scenario.
pub const BASE_SCENARIO: &str = include_str!("../../../scenarios/base.toml");

/// One clearing member as described in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberProfile {
    pub label: String,
    /// 3y and 5y CDS spreads in basis points.
    pub spread_3y: f64,
    pub spread_5y: f64,
    /// Recovery assumed when bootstrapping hazards from the CDS quotes.
    pub cds_recovery: f64,
    pub alpha: f64,
}

impl MemberProfile {
    /// Average of the two CDS quotes, in basis points.
    pub fn spread(&self) -> f64 {
        0.5 * (self.spread_3y + self.spread_5y)
    }
}

/// Nested common shocks layered over the idiosyncratic ones.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockConfig {
    /// Each shock hits this many of the riskiest members.
    pub sizes: Vec<usize>,
    /// Fraction of the smallest marginal hazard in the set carried by each shock.
    pub fractions: Vec<f64>,
}

/// Margin, waterfall and loss-recovery settings of one setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupParams {
    pub call_step_days: f64,
    pub liquidation_days: f64,
    pub df_reset_months: f64,
    pub equity_reset_years: f64,
    pub quantile: f64,
    pub fee: f64,
    pub equity_fraction: f64,
    /// Recovery of the reference member on its own default.
    pub recovery_self: f64,
    /// Recovery on the other members' defaults.
    pub recovery_others: f64,
}

impl SetupParams {
    pub fn margin(&self) -> MarginConfig {
        MarginConfig {
            call_step: self.call_step_days / DAYS_PER_YEAR,
            df_reset: self.df_reset_months / 12.0,
            equity_reset: self.equity_reset_years,
            liquidation: self.liquidation_days / DAYS_PER_YEAR,
            quantile: self.quantile,
            fee: self.fee,
            equity_fraction: self.equity_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FundingParams {
    /// Borrowing spread; half the reference member's CDS spread when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    pub lambda: f64,
    pub r_bar: f64,
    /// Randomization rate; `2 / maturity` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

/// A complete, versioned scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    pub setup: Setup,
    /// Index of the reference member in `members`.
    pub reference: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub swap: SwapParams,
    pub members: Vec<MemberProfile>,
    #[serde(default)]
    pub shocks: ShockConfig,
    pub funding: FundingParams,
    pub ccp: SetupParams,
    pub csa: SetupParams,
    #[serde(default)]
    pub capital: CapitalParams,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn base() -> Self {
        Self::from_toml(BASE_SCENARIO).expect("shipped base scenario is valid")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Check every invariant that does not need a simulation.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.format_version != FORMAT_VERSION {
            return cfg(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            ));
        }
        if self.members.len() < 2 {
            return cfg("at least two members are required".into());
        }
        if self.reference >= self.members.len() {
            return cfg(format!("reference index {} out of range", self.reference));
        }
        if self.n_paths < 2 {
            return cfg("n_paths must be at least 2".into());
        }
        for m in &self.members {
            if !(m.spread_3y > 0.0 && m.spread_5y > 0.0) {
                return cfg(format!("member {}: spreads must be positive", m.label));
            }
        }
        let alphas: Vec<f64> = self.members.iter().map(|m| m.alpha).collect();
        let sum: f64 = alphas.iter().sum();
        let gross: f64 = alphas.iter().map(|a| a.abs()).sum();
        if sum.abs() > 1e-9 * gross.max(1.0) {
            return cfg(format!("clearing consistency violated: alphas sum to {sum:.6}, not 0"));
        }
        if self.members[self.reference].alpha == 0.0 {
            return cfg("reference member has alpha = 0".into());
        }
        for (name, p) in [("ccp", &self.ccp), ("csa", &self.csa)] {
            p.margin().validate().map_err(|e| Error::Config(format!("[{name}] {e}")))?;
            for r in [p.recovery_self, p.recovery_others] {
                if !(0.0..=1.0).contains(&r) {
                    return cfg(format!("[{name}] recoveries must lie in [0, 1]"));
                }
            }
        }
        self.capital.validate().map_err(|e| Error::Config(e.to_string()))?;
        SwapSpec::new(&self.swap).map_err(|e| Error::Config(e.to_string()))?;
        self.marginals()
            .and_then(|m| {
                let common = nested_common_shocks(&m, &self.shocks.sizes, &self.shocks.fractions)?;
                build_shock_model(&m, &common).map(|_| ())
            })
            .map_err(|e| Error::Config(format!("[shocks] {e}")))
    }

    pub fn with_reference(&self, reference: usize) -> Self {
        Self {
            reference,
            ..self.clone()
        }
    }

    fn marginals(&self) -> Result<Vec<PiecewiseConstant>> {
        self.members
            .iter()
            .map(|m| bootstrap_marginal_intensity(m.spread_3y, m.spread_5y, m.cds_recovery))
            .collect()
    }

    fn params(&self, setup: Setup) -> &SetupParams {
        match setup {
            Setup::Ccp => &self.ccp,
            Setup::Csa => &self.csa,
        }
    }

    /// Positions and compression factor for the current reference member.
    pub fn positions(&self) -> Result<(Vec<f64>, f64)> {
        let alphas: Vec<f64> = self.members.iter().map(|m| m.alpha).collect();
        positions_from_alphas(&alphas, self.reference)
    }

    /// Resolve the scenario into an engine problem for `setup`.
    pub fn problem(&self, setup: Setup) -> Result<XvaProblem> {
        let swap = SwapSpec::new(&self.swap)?;
        let marginals = self.marginals()?;
        let common = nested_common_shocks(&marginals, &self.shocks.sizes, &self.shocks.fractions)?;
        let shocks = build_shock_model(&marginals, &common)?;
        let (omegas, _) = self.positions()?;
        let p = self.params(setup);
        let recoveries = (0..self.members.len())
            .map(|i| if i == self.reference { p.recovery_self } else { p.recovery_others })
            .collect();
        let default_probs = marginals.iter().map(|m| 1.0 - (-m.cumulative(1.0)).exp()).collect();
        let ref_spread = self.members[self.reference].spread() * 1e-4;
        let funding = FundingConfig {
            lambda_bar: self.funding.lambda_bar.unwrap_or(0.5 * ref_spread),
            lambda: self.funding.lambda,
            r_bar: self.funding.r_bar,
            mu: self.funding.mu.unwrap_or(2.0 / swap.maturity()),
        };
        let problem = XvaProblem {
            setup,
            swap,
            shocks,
            omegas,
            reference: self.reference,
            recoveries,
            default_probs,
            margin: p.margin(),
            funding,
            capital: self.capital.clone(),
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn run_config(&self, workers: Option<usize>) -> RunConfig {
        RunConfig {
            n_paths: self.n_paths,
            seed: self.seed,
            workers,
        }
    }
}

/// Positions `ω_i = −α_i/α_ref` and the compression factor `Σ_{i≠ref} |ω_i|`.
pub fn positions_from_alphas(alphas: &[f64], reference: usize) -> Result<(Vec<f64>, f64)> {
    let a0 = *alphas.get(reference).ok_or(Error::UnknownMember(reference))?;
    if a0 == 0.0 {
        return Err(invalid("reference member must have a nonzero alpha"));
    }
    let omegas: Vec<f64> = alphas
        .iter()
        .enumerate()
        .map(|(i, &a)| if i == reference { -1.0 } else { -a / a0 })
        .collect();
    let nu0 = omegas.iter().enumerate().filter(|&(i, _)| i != reference).map(|(_, w)| w.abs()).sum();
    Ok((omegas, nu0))
}

/// Tables that can be regenerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableId {
    /// Every member as reference, both setups.
    T0,
    /// `T0` with bilateral figures per unit of compression, ordered by spread.
    T0Bis,
    /// Liquidation period 5 versus 15 days.
    Days,
    /// Initial-margin quantile levels.
    Quantiles,
}

impl std::str::FromStr for TableId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t0" => Ok(TableId::T0),
            "t0bis" => Ok(TableId::T0Bis),
            "days" => Ok(TableId::Days),
            "quantiles" => Ok(TableId::Quantiles),
            other => Err(Error::Config(format!(
                "unknown table '{other}', expected t0, t0bis, days or quantiles"
            ))),
        }
    }
}

impl TableId {
    pub fn name(self) -> &'static str {
        match self {
            TableId::T0 => "t0",
            TableId::T0Bis => "t0bis",
            TableId::Days => "days",
            TableId::Quantiles => "quantiles",
        }
    }
}

/// One cell of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub setup: Setup,
    pub reference: String,
    pub spread_bp: f64,
    pub alpha: f64,
    pub nu0: f64,
    pub liquidation_days: f64,
    pub quantile: f64,
    /// Divisor applied to the report (1, or `nu0` for per-unit bilateral rows).
    pub scale: f64,
    pub report: XvaReport,
}

impl TableRow {
    /// Same row divided by the compression factor.
    pub fn per_unit(&self) -> Self {
        Self {
            scale: self.nu0,
            report: self.report.divided_by(self.nu0),
            ..self.clone()
        }
    }
}

/// Run one cell.
pub fn run_cell(scenario: &Scenario, setup: Setup, workers: Option<usize>) -> Result<TableRow> {
    let problem = scenario.problem(setup)?;
    let report = estimate_xva(&problem, &scenario.run_config(workers))?;
    let (_, nu0) = scenario.positions()?;
    let m = &scenario.members[scenario.reference];
    let p = scenario.params(setup);
    Ok(TableRow {
        setup,
        reference: m.label.clone(),
        spread_bp: m.spread(),
        alpha: m.alpha,
        nu0,
        liquidation_days: p.liquidation_days,
        quantile: p.quantile,
        scale: 1.0,
        report,
    })
}

/// Reference members used by the sensitivity tables: the 61bp and 367bp names.
fn safe_and_risky(base: &Scenario) -> Result<[usize; 2]> {
    let find = |spread: f64| {
        base.members
            .iter()
            .position(|m| (m.spread() - spread).abs() < 0.5)
            .ok_or_else(|| Error::Config(format!("no member with a {spread} bp spread")))
    };
    Ok([find(61.0)?, find(367.0)?])
}

/// Compute the rows of a table.
pub fn table_rows(id: TableId, base: &Scenario, workers: Option<usize>) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    match id {
        TableId::T0 => {
            let mut refs: Vec<usize> = (0..base.members.len()).collect();
            // increasing compression factor
            refs.sort_by(|&a, &b| base.members[b].alpha.abs().total_cmp(&base.members[a].alpha.abs()));
            for setup in [Setup::Csa, Setup::Ccp] {
                for &r in &refs {
                    rows.push(run_cell(&base.with_reference(r), setup, workers)?);
                }
            }
        }
        TableId::T0Bis => return Ok(t0bis_view(&table_rows(TableId::T0, base, workers)?)),
        TableId::Days => {
            for r in safe_and_risky(base)? {
                for setup in [Setup::Csa, Setup::Ccp] {
                    for days in [5.0, 15.0] {
                        let mut s = base.with_reference(r);
                        match setup {
                            Setup::Ccp => s.ccp.liquidation_days = days,
                            Setup::Csa => s.csa.liquidation_days = days,
                        }
                        rows.push(per_unit_if_csa(run_cell(&s, setup, workers)?));
                    }
                }
            }
        }
        TableId::Quantiles => {
            for r in safe_and_risky(base)? {
                for (setup, levels) in [(Setup::Csa, [0.80, 0.90, 0.99]), (Setup::Ccp, [0.70, 0.80, 0.95])] {
                    for a in levels {
                        let mut s = base.with_reference(r);
                        match setup {
                            Setup::Ccp => s.ccp.quantile = a,
                            Setup::Csa => s.csa.quantile = a,
                        }
                        rows.push(per_unit_if_csa(run_cell(&s, setup, workers)?));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn per_unit_if_csa(row: TableRow) -> TableRow {
    match row.setup {
        Setup::Csa => row.per_unit(),
        Setup::Ccp => row,
    }
}

/// Bilateral rows divided by the compression factor, everything ordered by spread.
pub fn t0bis_view(rows: &[TableRow]) -> Vec<TableRow> {
    let mut out: Vec<TableRow> = rows.iter().cloned().map(per_unit_if_csa).collect();
    out.sort_by(|a, b| {
        let rank = |s: Setup| matches!(s, Setup::Ccp) as u8;
        rank(a.setup).cmp(&rank(b.setup)).then(a.spread_bp.total_cmp(&b.spread_bp))
    });
    out
}

/// Column names of table CSV files.
pub const TABLE_COLUMNS: [&str; 22] = [
    "setup",
    "reference",
    "spread_bp",
    "alpha",
    "nu0",
    "liquidation_days",
    "quantile",
    "scale",
    "cva",
    "cva_se",
    "dva",
    "dva_se",
    "mva",
    "mva_se",
    "mla",
    "mla_se",
    "kva",
    "kva_se",
    "total",
    "total_se",
    "n_paths",
    "uncovered_events",
];

fn bp(x: f64) -> String {
    format!("{x:.2}")
}

fn se(x: f64) -> String {
    format!("{x:.4}")
}

fn row_record(row: &TableRow) -> Vec<String> {
    let r = &row.report;
    vec![
        row.setup.to_string(),
        row.reference.clone(),
        format!("{:.1}", row.spread_bp),
        format!("{:.4}", row.alpha),
        format!("{:.4}", row.nu0),
        format!("{}", row.liquidation_days),
        format!("{}", row.quantile),
        format!("{:.4}", row.scale),
        bp(r.cva.mean),
        se(r.cva.se),
        bp(r.dva.mean),
        se(r.dva.se),
        bp(r.mva.mean),
        se(r.mva.se),
        r.mla.map(|e| bp(e.mean)).unwrap_or_default(),
        r.mla.map(|e| se(e.se)).unwrap_or_default(),
        bp(r.kva.mean),
        se(r.kva.se),
        bp(r.total.mean),
        se(r.total.se),
        r.n_paths.to_string(),
        r.uncovered_events.to_string(),
    ]
}

/// Render table rows as CSV text.
pub fn rows_to_csv(rows: &[TableRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TABLE_COLUMNS)?;
    for row in rows {
        w.write_record(row_record(row))?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(text.as_bytes()).map_err(io)
}

/// Compute a table and write `<dir>/<id>.csv`.
pub fn run_table(id: TableId, base: &Scenario, out_dir: &Path, workers: Option<usize>) -> Result<Vec<TableRow>> {
    let rows = table_rows(id, base, workers)?;
    write_text(&out_dir.join(format!("{}.csv", id.name())), &rows_to_csv(&rows)?)?;
    Ok(rows)
}

/// One point of the quantile sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub quantile: f64,
    pub report: XvaReport,
}

/// Evenly spaced quantile grid from `a_min` to `a_max` inclusive.
pub fn quantile_grid(a_min: f64, a_max: f64, steps: usize) -> Result<Vec<f64>> {
    if !(a_min > 0.0 && a_max < 1.0 && a_min <= a_max) {
        return Err(Error::Config(format!(
            "quantile grid must satisfy 0 < a_min <= a_max < 1, got [{a_min}, {a_max}]"
        )));
    }
    if steps < 2 {
        return Ok(vec![a_min]);
    }
    Ok((0..steps)
        .map(|k| a_min + (a_max - a_min) * k as f64 / (steps - 1) as f64)
        .collect())
}

/// Re-run the scenario's setup at every quantile, with the same random inputs.
pub fn sweep_quantile(scenario: &Scenario, grid: &[f64], workers: Option<usize>) -> Result<Vec<SweepPoint>> {
    grid.iter()
        .map(|&a| {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::Config(format!("quantile {a} outside (0, 1)")));
            }
            let mut s = scenario.clone();
            match s.setup {
                Setup::Ccp => s.ccp.quantile = a,
                Setup::Csa => s.csa.quantile = a,
            }
            let report = estimate_xva(&s.problem(s.setup)?, &s.run_config(workers))?;
            Ok(SweepPoint { quantile: a, report })
        })
        .collect()
}

pub fn sweep_to_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["a", "cva", "dva", "mva", "mla", "kva", "total"])?;
    for p in points {
        let r = &p.report;
        w.write_record([
            format!("{:.4}", p.quantile),
            bp(r.cva.mean),
            bp(r.dva.mean),
            bp(r.mva.mean),
            r.mla.map(|e| bp(e.mean)).unwrap_or_default(),
            bp(r.kva.mean),
            bp(r.total.mean),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
