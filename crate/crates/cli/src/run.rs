//! Subcommand dispatch.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use pdmp_core::bounds::{fixed_rate_sweep, pair_grid, solve_bounds, solve_min_cost_bounds};
use pdmp_core::cdf_solver::{solve_cdf, solve_expected, solve_min_cost, SolveOptions};
use pdmp_core::control::{
    evaluate_policy_cdf, solve_hjb_expectation, solve_threshold, synthesize_policy, Policy, PolicyKind, ThresholdOptions,
};
use pdmp_core::simulate::{dkw_epsilon, mean_and_se, EmpiricalCdf, Simulator};
use pdmp_core::{build_grid, CdfField, Grid, Rates};
use serde_json::{json, Map, Value};

use crate::config::{parse_list, parse_slices, Config, Format, Resolved, Slice};
use crate::error::CliError;
use crate::export::{sha256_hex, Output, Table};

#[derive(Debug, Parser)]
#[command(name = "pdmp", version, about = "Cost distributions and threshold-optimal control for PDMPs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// CDF of the exit cost for an uncontrolled problem.
    SolveCdf(Common),
    /// Minimal exit cost s0 and the probability w0 of attaining it.
    MinCost(Common),
    /// Upper and lower CDFs under interval rates.
    Bounds(Common),
    /// Fixed-rate CDFs for every rate pair in a list, checked against the bounds.
    Sweep(Common),
    /// Expected cost and its optimal feedback policy.
    Hjb(Common),
    /// Threshold-optimal success probability and policy.
    Threshold(Common),
    /// Monte-Carlo sampling of the exit cost.
    Simulate(Common),
    /// CDF of the exit cost under a stored s-independent policy.
    EvaluatePolicy(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Builtin name (example1..example6) or path to a config file.
    #[arg(long)]
    pub problem: String,
    #[arg(long)]
    pub dx: Option<f64>,
    #[arg(long)]
    pub ds: Option<f64>,
    #[arg(long = "s-max")]
    pub s_max: Option<f64>,
    /// `s=0.25,0.5` for snapshots, `x=0.3` or `x=0.4:0.3` for curves. Repeatable.
    #[arg(long)]
    pub slice: Vec<String>,
    /// Comma-separated cost thresholds.
    #[arg(long, alias = "threshold")]
    pub thresholds: Option<String>,
    /// `l` for uniform fixed rates or `a:b` for uniform interval rates.
    #[arg(long)]
    pub rates: Option<String>,
    /// Comma-separated rate values for the fixed-rate sweep.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start point for simulation, coordinates joined by `:`.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub mode: Option<usize>,
    /// Solve on the whole domain instead of above the minimal-cost front.
    #[arg(long)]
    pub no_restrict: bool,
    #[arg(long = "policy-out")]
    pub policy_out: Option<PathBuf>,
    #[arg(long = "policy-in", alias = "policy")]
    pub policy_in: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::SolveCdf(c) => ("solve-cdf", c),
            Command::MinCost(c) => ("min-cost", c),
            Command::Bounds(c) => ("bounds", c),
            Command::Sweep(c) => ("sweep", c),
            Command::Hjb(c) => ("hjb", c),
            Command::Threshold(c) => ("threshold", c),
            Command::Simulate(c) => ("simulate", c),
            Command::EvaluatePolicy(c) => ("evaluate-policy", c),
        }
    }
}

/// Loads the config named by `--problem` and applies flag overrides.
pub fn build_config(c: &Common) -> Result<Config, CliError> {
    let mut cfg = Config::load(&c.problem)?;
    let n = &mut cfg.numerics;
    n.dx = c.dx.or(n.dx);
    n.ds = c.ds.or(n.ds);
    n.s_max = c.s_max.or(n.s_max);
    let r = &mut cfg.run;
    if !c.slice.is_empty() {
        r.slices = c.slice.clone();
    }
    if let Some(t) = &c.thresholds {
        r.thresholds = parse_list(t)?;
    }
    if let Some(s) = &c.sweep {
        r.sweep = parse_list(s)?;
    }
    r.rates = c.rates.clone().or(r.rates.take());
    r.n = c.n.or(r.n);
    r.seed = c.seed.or(r.seed);
    r.mode = c.mode.or(r.mode);
    if c.no_restrict {
        r.restrict = Some(false);
    }
    if let Some(s) = &c.start {
        let pt = match parse_slices(&format!("x={s}"), s.split(':').count())?.pop() {
            Some(Slice::Point(p)) => p,
            _ => return Err(CliError::Config(format!("bad start `{s}`"))),
        };
        r.start = Some(pt);
    }
    cfg.output.dir = c.out.clone().or(cfg.output.dir.take());
    cfg.output.format = c.format.or(cfg.output.format);
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let t0 = Instant::now();
    let (name, common) = cli.command.parts();
    let res = build_config(common)?.resolve()?;
    let config_bytes = serde_json::to_vec_pretty(&res.config).expect("config serializes");
    let mut out = Output::new(
        res.config.output.dir.clone().unwrap_or_else(|| PathBuf::from("out")),
        res.config.output.format.unwrap_or_default(),
    )?;
    out.raw("config.json", &config_bytes, 0)?;
    let grid = build_grid(&res.spec, res.numerics.dx, res.numerics.ds, res.numerics.s_max)?;
    let ctx = Ctx { res: &res, grid: &grid, common };
    let summary = match &cli.command {
        Command::SolveCdf(_) => ctx.solve_cdf(&mut out)?,
        Command::MinCost(_) => ctx.min_cost(&mut out)?,
        Command::Bounds(_) => ctx.bounds(&mut out)?,
        Command::Sweep(_) => ctx.sweep(&mut out)?,
        Command::Hjb(_) => ctx.hjb(&mut out)?,
        Command::Threshold(_) => ctx.threshold(&mut out)?,
        Command::Simulate(_) => ctx.simulate(&mut out)?,
        Command::EvaluatePolicy(_) => ctx.evaluate_policy(&mut out)?,
    };
    let mut m = Map::new();
    m.insert("command".into(), json!(name));
    m.insert("config_sha256".into(), json!(sha256_hex(&config_bytes)));
    m.insert("grid".into(), serde_json::to_value(grid.descriptor()).expect("grid serializes"));
    m.insert("wall_time_s".into(), json!(t0.elapsed().as_secs_f64()));
    m.insert("summary".into(), Value::Object(summary));
    out.manifest(m)
}

struct Ctx<'a> {
    res: &'a Resolved,
    grid: &'a Grid,
    common: &'a Common,
}

type Column<'a> = (String, Box<dyn Fn(usize, usize, usize) -> f64 + 'a>);

impl Ctx<'_> {
    fn opts(&self) -> SolveOptions {
        SolveOptions::with_policy(self.res.numerics.tau_policy)
    }

    fn restrict(&self) -> bool {
        self.res.config.run.restrict.unwrap_or(true)
    }

    fn slices(&self) -> Result<Vec<Slice>, CliError> {
        let mut out = Vec::new();
        for s in &self.res.config.run.slices {
            out.extend(parse_slices(s, self.grid.dim())?);
        }
        if out.is_empty() {
            out.push(Slice::Cost(self.grid.s(self.grid.levels() - 1)));
        }
        Ok(out)
    }

    fn coord_columns(&self) -> Vec<String> {
        let names: &[&str] = if self.grid.dim() == 2 { &["x", "y"] } else { &["x"] };
        names.iter().map(|s| s.to_string()).collect()
    }

    fn coords(&self, k: usize) -> Vec<f64> {
        self.grid.coords(k)[..self.grid.dim()].to_vec()
    }

    fn level(&self, s: f64) -> Result<usize, CliError> {
        let n = (s / self.grid.ds()).round();
        if s < 0.0 || n as usize >= self.grid.levels() {
            return Err(CliError::Config(format!("slice s = {s} lies outside [0, {}]", self.res.numerics.s_max)));
        }
        Ok(n as usize)
    }

    fn node(&self, p: &[f64]) -> Result<usize, CliError> {
        let g = self.grid;
        let dom = g.domain();
        if !dom.contains(p, 1e-12) {
            return Err(CliError::Config(format!("point {p:?} lies outside the domain")));
        }
        let [nx, _] = g.shape();
        let idx: Vec<usize> = (0..g.dim()).map(|a| ((p[a] - dom.lo[a]) / g.dx()).round() as usize).collect();
        let k = if g.dim() == 2 { g.index(idx[0], idx[1]) } else { idx[0].min(nx - 1) };
        Ok(k)
    }

    /// Writes one table per slice; columns are evaluated at (level, mode, node).
    fn export(&self, out: &mut Output, prefix: &str, columns: &[Column]) -> Result<(), CliError> {
        let m = self.res.spec.mode_count();
        for slice in self.slices()? {
            match slice {
                Slice::Cost(s) => {
                    let n = self.level(s)?;
                    let mut names = self.coord_columns();
                    names.extend(["mode".to_string(), "s".to_string()]);
                    names.extend(columns.iter().map(|c| c.0.clone()));
                    let mut t = Table::new(names);
                    for i in 0..m {
                        for k in 0..self.grid.node_count() {
                            let mut row = self.coords(k);
                            row.extend([i as f64, self.grid.s(n)]);
                            row.extend(columns.iter().map(|c| (c.1)(n, i, k)));
                            t.push(row);
                        }
                    }
                    out.table(&format!("{prefix}_s{s}"), &t)?;
                }
                Slice::Point(p) => {
                    let k = self.node(&p)?;
                    let mut names = self.coord_columns();
                    names.extend(["mode".to_string(), "s".to_string()]);
                    names.extend(columns.iter().map(|c| c.0.clone()));
                    let mut t = Table::new(names);
                    for i in 0..m {
                        for n in 0..self.grid.levels() {
                            let mut row = self.coords(k);
                            row.extend([i as f64, self.grid.s(n)]);
                            row.extend(columns.iter().map(|c| (c.1)(n, i, k)));
                            t.push(row);
                        }
                    }
                    let tag: Vec<String> = p.iter().map(|v| v.to_string()).collect();
                    out.table(&format!("{prefix}_x{}", tag.join("_")), &t)?;
                }
            }
        }
        Ok(())
    }

    fn field_column<'a>(name: &str, w: &'a CdfField) -> Column<'a> {
        (name.to_string(), Box::new(move |n, i, k| w.get(n, i, k)))
    }

    fn solve_cdf(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let mc = if self.restrict() { Some(solve_min_cost(spec, self.grid)?) } else { None };
        let w = solve_cdf(spec, self.grid, &self.opts(), mc.as_ref())?;
        self.export(out, "cdf", &[Self::field_column("value", &w)])?;
        Ok(Map::from_iter([("tau".into(), json!(w.tau))]))
    }

    fn min_cost(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let mc = match spec.rates {
            Rates::Fixed(_) => solve_min_cost(spec, self.grid)?,
            Rates::Bounded(_) => solve_min_cost_bounds(spec, self.grid)?.upper,
        };
        let mut names = self.coord_columns();
        names.extend(["mode", "s0", "w0"].map(String::from));
        let mut t = Table::new(names);
        for i in 0..spec.mode_count() {
            for k in 0..self.grid.node_count() {
                let mut row = self.coords(k);
                row.extend([i as f64, mc.s0(k).unwrap_or(f64::INFINITY), mc.w0(i, k)]);
                t.push(row);
            }
        }
        out.table("min_cost", &t)?;
        Ok(Map::from_iter([("sweeps".into(), json!(mc.sweeps))]))
    }

    fn bounds(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let mcb = if self.restrict() { Some(solve_min_cost_bounds(spec, self.grid)?) } else { None };
        let pair = solve_bounds(spec, self.grid, &self.opts(), mcb.as_ref())?;
        self.export(
            out,
            "bounds",
            &[Self::field_column("value_lo", &pair.lower), Self::field_column("value_hi", &pair.upper)],
        )?;
        Ok(Map::from_iter([("max_inversion".into(), json!(pair.max_inversion()))]))
    }

    fn sweep(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let values = &self.res.config.run.sweep;
        if values.is_empty() {
            return Err(CliError::Config("sweep needs a list of rate values (--sweep)".into()));
        }
        let members = pair_grid(values)?;
        let restrict = self.restrict();
        let fields = fixed_rate_sweep(spec, self.grid, &self.opts(), &members, restrict)?;
        let mcb = if restrict { Some(solve_min_cost_bounds(spec, self.grid)?) } else { None };
        let pair = solve_bounds(spec, self.grid, &self.opts(), mcb.as_ref())?;
        let mut rates = Table::new(vec!["member", "from", "to", "rate"]);
        for (r, m) in members.iter().enumerate() {
            for i in 0..m.modes() {
                for j in (0..m.modes()).filter(|&j| j != i) {
                    rates.push(vec![r as f64, i as f64, j as f64, m.rate(i, j)]);
                }
            }
        }
        out.table("sweep_members", &rates)?;
        let mut columns = vec![Self::field_column("value_lo", &pair.lower), Self::field_column("value_hi", &pair.upper)];
        for (r, f) in fields.iter().enumerate() {
            columns.push(Self::field_column(&format!("member{r}"), f));
        }
        self.export(out, "sweep", &columns)?;
        let worst = fields.iter().map(|f| pair.bracket_violation(f)).fold(f64::NEG_INFINITY, f64::max);
        Ok(Map::from_iter([("members".into(), json!(members.len())), ("max_bracket_violation".into(), json!(worst))]))
    }

    fn save_policy(&self, p: &Policy) -> Result<(), CliError> {
        if let Some(path) = &self.common.policy_out {
            p.save(path)?;
        }
        Ok(())
    }

    fn hjb(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let (u, policy) = if spec.is_controlled() {
            let (u, p) = solve_hjb_expectation(spec, self.grid, self.res.tol, self.res.max_iter)?;
            (u, Some(p))
        } else {
            (solve_expected(spec, self.grid, self.res.tol, self.res.max_iter)?, None)
        };
        let mut names = self.coord_columns();
        names.extend(["mode", "value"].map(String::from));
        if policy.is_some() {
            names.push("action".into());
        }
        let mut t = Table::new(names);
        for i in 0..spec.mode_count() {
            for k in 0..self.grid.node_count() {
                let mut row = self.coords(k);
                row.extend([i as f64, u.get(i, k)]);
                if let Some(p) = &policy {
                    row.push(p.action(0, i, k) as f64);
                }
                t.push(row);
            }
        }
        out.table("expected", &t)?;
        if let Some(p) = &policy {
            self.save_policy(p)?;
        }
        Ok(Map::from_iter([("iterations".into(), json!(u.iterations)), ("residual".into(), json!(u.residual))]))
    }

    fn threshold(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let opts = ThresholdOptions {
            solve: self.opts(),
            restrict: self.restrict(),
            hjb_tol: self.res.tol,
            hjb_max_iter: self.res.max_iter,
        };
        let tv = solve_threshold(spec, self.grid, &opts)?;
        let policy = synthesize_policy(&tv, spec, self.grid)?;
        self.export(
            out,
            "threshold",
            &[
                Self::field_column("value", &tv.w),
                ("cost".to_string(), Box::new(|n, i, k| tv.v(n, i, k))),
                ("action".to_string(), Box::new(|n, i, k| policy.action(n, i, k) as f64)),
            ],
        )?;
        self.save_policy(&policy)?;
        Ok(Map::from_iter([("hjb_iterations".into(), json!(tv.expectation.iterations))]))
    }

    fn load_policy(&self) -> Result<Option<Policy>, CliError> {
        match &self.common.policy_in {
            Some(p) => Ok(Some(Policy::load(p)?)),
            None => Ok(None),
        }
    }

    fn simulate(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let spec = &self.res.spec;
        let run = &self.res.config.run;
        let policy = self.load_policy()?;
        let dom = &spec.domain;
        let start = run.start.clone().unwrap_or_else(|| (0..spec.dim()).map(|a| 0.5 * (dom.lo[a] + dom.hi[a])).collect());
        if start.len() != spec.dim() {
            return Err(CliError::Config(format!("start needs {} coordinate(s)", spec.dim())));
        }
        let mode = run.mode.unwrap_or(0);
        let n = run.n.unwrap_or(10_000);
        let seed = run.seed.unwrap_or(0);
        let thresholds: Vec<Option<f64>> = match (&policy, run.thresholds.is_empty()) {
            (Some(p), true) if p.kind == PolicyKind::Threshold => {
                return Err(CliError::Config("a threshold policy needs --thresholds".into()));
            }
            (Some(p), false) if p.kind == PolicyKind::Threshold => run.thresholds.iter().map(|&t| Some(t)).collect(),
            _ => vec![None],
        };
        let eps = dkw_epsilon(n, 0.01);
        let mut runs = Vec::new();
        for thr in thresholds {
            let mut sim = Simulator::new(spec, seed)?;
            if let Some(p) = &policy {
                sim = sim.with_policy(p, thr)?;
            }
            let samples = sim.run(&start, mode, n);
            let tag = thr.map(|t| format!("_t{t}")).unwrap_or_default();
            let mut names = vec!["index".to_string()];
            names.extend(self.coord_columns());
            names.extend(["exited", "cost", "switches"].map(String::from));
            let mut t = Table::new(names);
            for s in &samples {
                let mut row = vec![s.index as f64];
                row.extend(&start);
                row.extend([s.exited() as u8 as f64, s.cost, s.switch_count() as f64]);
                t.push(row);
            }
            out.table(&format!("samples{tag}"), &t)?;
            let emp = EmpiricalCdf::from_samples(&samples)?;
            let mut c = Table::new(vec!["s", "value", "value_lo", "value_hi"]);
            for l in 0..self.grid.levels() {
                let s = self.grid.s(l);
                let f = emp.eval(s);
                c.push(vec![s, f, (f - eps).max(0.0), (f + eps).min(1.0)]);
            }
            out.table(&format!("mc_cdf{tag}"), &c)?;
            let costs: Vec<f64> = samples.iter().filter(|s| s.exited()).map(|s| s.cost).collect();
            let (mean, se) = mean_and_se(&costs).unwrap_or((f64::NAN, f64::NAN));
            runs.push(json!({
                "threshold": thr,
                "mean": if mean.is_finite() { json!(mean) } else { Value::Null },
                "stderr": if se.is_finite() { json!(se) } else { Value::Null },
                "censored": emp.censored(),
                "success": thr.map(|t| emp.eval(t)),
            }));
        }
        Ok(Map::from_iter([("samples".into(), json!(n)), ("dkw_epsilon".into(), json!(eps)), ("runs".into(), json!(runs))]))
    }

    fn evaluate_policy(&self, out: &mut Output) -> Result<Map<String, Value>, CliError> {
        let policy = self.load_policy()?.ok_or_else(|| CliError::Config("evaluate-policy needs --policy-in".into()))?;
        let w = evaluate_policy_cdf(&policy, &self.res.spec, self.grid, &self.opts())?;
        self.export(out, "policy_cdf", &[Self::field_column("value", &w)])?;
        Ok(Map::from_iter([("tau".into(), json!(w.tau))]))
    }
}
