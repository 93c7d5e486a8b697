use super::config::*;
use super::{exit_code, run, tool_version, Status, EXIT_OK, EXIT_VIOLATION};
use crate::analysis::{envelope, verify_term_chain, ControlPair};
use crate::error::Result;
use crate::grid::SpaceTimeGrid;
use crate::kernels::{KernelDensity, Potential, State, StateSpace};
use crate::quadrature::{Quadrature, QuadratureScheme, SpaceRule, TimeRule};
use crate::series::{beta_kernel_closed_form, RecursionPlan, SeriesEngine};
use crate::weyl::WeylScheme;
use serde::Serialize;
use serde_json::{json, Value};
use std::time::Instant;

/// Environment variable holding a quadrature scale factor (e.g. `0.25`)
/// applied to every suite item; used as a negative control.
pub const COARSEN_ENV: &str = "KPERTURB_COARSEN";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SuiteOptions {
    pub seed: u64,
    /// multiplies node and panel counts of all quadrature schemes
    pub coarsen: Option<f64>,
}

impl SuiteOptions {
    /// Reads the coarsening factor from [`COARSEN_ENV`].
    pub fn from_env(seed: u64) -> Self {
        let coarsen = std::env::var(COARSEN_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<f64>().ok())
            .filter(|f| *f > 0.0 && *f != 1.0);
        Self { seed, coarsen }
    }

    fn quad(&self, q: QuadratureScheme) -> QuadratureScheme {
        match self.coarsen {
            Some(f) => q.scaled(f),
            None => q,
        }
    }

    fn weyl(&self, w: WeylScheme) -> WeylScheme {
        match self.coarsen {
            Some(f) => WeylScheme {
                panels: ((w.panels as f64 * f).round() as usize).max(1),
                nodes: ((w.nodes as f64 * f).round() as usize).max(2),
            },
            None => w,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteItem {
    pub criterion: usize,
    pub name: String,
    pub passed: bool,
    pub exit_code: i32,
    pub detail: Value,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub version: String,
    pub options: SuiteOptions,
    pub items: Vec<SuiteItem>,
    pub wall_clock_s: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    /// 0 when every item passed, otherwise the largest item code.
    pub fn exit_code(&self) -> i32 {
        self.items.iter().map(|i| i.exit_code).max().unwrap_or(EXIT_OK)
    }

    /// The pass/fail matrix without timings; byte-stable across runs.
    pub fn deterministic_json(&self) -> Value {
        json!({
            "version": self.version,
            "seed": self.options.seed,
            "coarsen": self.options.coarsen,
            "passed": self.passed(),
            "exit_code": self.exit_code(),
            "items": self.items,
        })
    }

    pub fn to_json(&self) -> Value {
        let mut v = self.deterministic_json();
        v["wall_clock_s"] = json!(self.wall_clock_s);
        v["item_wall_clock_s"] = json!(self.items.iter().map(|i| i.wall_clock_s).collect::<Vec<_>>());
        v
    }
}

type Check = (bool, i32, Value);

/// Runs the fixed acceptance configurations and collects a pass/fail matrix.
pub fn reproduce_paper_suite(opts: SuiteOptions) -> SuiteReport {
    let start = Instant::now();
    let items: [(usize, &str, fn(&SuiteOptions) -> Result<Check>); 9] = [
        (1, "beta-series-oracle", beta_series_oracle),
        (2, "splitting-identity", splitting_identity),
        (3, "term-chain", term_chain),
        (4, "envelope", envelope_item),
        (5, "gauss-constant-potential", gauss_example),
        (6, "three-p", three_p),
        (7, "kato-scans", kato_scans),
        (8, "weyl-left-inverse", weyl_left_inverse),
        (8, "weyl-perturbed", weyl_perturbed),
    ];
    let items = items
        .iter()
        .map(|&(criterion, name, f)| {
            let t = Instant::now();
            let (passed, code, detail) = match f(&opts) {
                Ok(c) => c,
                Err(e) => (false, exit_code(&e), json!({ "error": e.to_string() })),
            };
            SuiteItem {
                criterion,
                name: name.to_string(),
                passed,
                exit_code: if passed { EXIT_OK } else { code },
                detail,
                wall_clock_s: t.elapsed().as_secs_f64(),
            }
        })
        .collect();
    SuiteReport {
        version: tool_version(),
        options: opts,
        items,
        wall_clock_s: start.elapsed().as_secs_f64(),
    }
}

fn verdict(ok: bool) -> i32 {
    if ok {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    }
}

fn base(command: Command, opts: &SuiteOptions) -> ExperimentConfig {
    ExperimentConfig {
        command,
        seed: opts.seed,
        order: None,
        output: None,
        format: OutputFormat::Json,
        kernel: None,
        potential: None,
        space: None,
        grid: None,
        quadrature: opts.quad(QuadratureScheme::default()),
        plan: RecursionPlan::default(),
        control: ControlSpec::default(),
        kato: None,
        weyl: None,
        tolerance: None,
    }
}

fn times(spec: &[f64]) -> Option<GridSpec> {
    Some(GridSpec {
        times: spec.to_vec(),
        states: vec![],
    })
}

fn light_gauss_quad(opts: &SuiteOptions) -> QuadratureScheme {
    opts.quad(QuadratureScheme {
        time: TimeRule::JacobiWeighted { nodes: 24 },
        space: SpaceRule::GaussLegendre {
            nodes_per_panel: 6,
            panels: 8,
        },
        tolerance: 1e-8,
    })
}

fn light_gauss_plan(order: usize) -> RecursionPlan {
    RecursionPlan {
        order,
        table_time_nodes: 8,
        table_space_nodes: 32,
        ..RecursionPlan::default()
    }
}

/// k_n of the β-kernel against the closed form, n ≤ 8.
fn beta_series_oracle(opts: &SuiteOptions) -> Result<Check> {
    let mut worst = 0.0f64;
    let mut at = Value::Null;
    for beta in [0.25, 0.5, 0.75] {
        for q in [0.5, 1.0, 2.0] {
            let mut cfg = base(Command::Series, opts);
            cfg.kernel = Some(KernelSpec::Beta { beta });
            cfg.potential = Some(PotentialSpec::Constant { value: q });
            cfg.grid = times(&[0.0, 0.25, 1.0, 4.0]);
            cfg.order = Some(8);
            let rep = run(&cfg)?;
            for row in &rep.table.rows {
                let (s, t, n, v) = (row[0], row[1], row[2] as usize, row[3]);
                if ![0.25, 1.0, 4.0].contains(&(t - s)) {
                    continue;
                }
                let want = beta_kernel_closed_form(beta, q, n, s, t)?;
                let rel = (v - want).abs() / want;
                if rel > worst {
                    worst = rel;
                    at = json!({ "beta": beta, "q": q, "dt": t - s, "n": n });
                }
            }
        }
    }
    let ok = worst <= 1e-6;
    Ok((ok, verdict(ok), json!({ "max_relative": worst, "at": at, "tolerance": 1e-6 })))
}

/// Split (n-1-m, m) against the primary recursion.
fn splitting_identity(opts: &SuiteOptions) -> Result<Check> {
    let beta = SeriesEngine::new(
        &KernelDensity::beta(0.5)?,
        &Potential::constant(1.0)?,
        &StateSpace::single_point(),
        &RecursionPlan::with_order(4),
        &Quadrature::new(opts.quad(QuadratureScheme::default()))?,
    )?;
    let gauss = SeriesEngine::new(
        &KernelDensity::gauss(1)?,
        &Potential::bump(1.0, 1.0)?,
        &StateSpace::real_line(10.0, 64)?,
        &light_gauss_plan(3),
        &Quadrature::new(light_gauss_quad(opts))?,
    )?;
    let bgrid = SpaceTimeGrid::times_only(vec![0.0, 0.5, 2.0])?;
    let ggrid = SpaceTimeGrid::new(vec![0.0, 1.0], vec![State::on_line(-0.5), State::on_line(1.0)])?;
    let mut worst = 0.0f64;
    let mut rows = Vec::new();
    for (label, eng, grid, nmax) in [("beta(0.5)", &beta, &bgrid, 4), ("gauss(1)", &gauss, &ggrid, 3)] {
        for n in 1..=nmax {
            for m in 0..n {
                let r = eng.splitting_check(n, m, grid)?;
                worst = worst.max(r.max_error_ratio);
                rows.push(json!({ "kernel": label, "n": n, "m": m, "max_relative": r.max_relative, "error_ratio": r.max_error_ratio }));
            }
        }
    }
    let ok = worst <= 10.0;
    Ok((ok, verdict(ok), json!({ "max_error_ratio": worst, "checks": rows })))
}

/// Fitted chain passes; an undersized control is caught.
fn term_chain(opts: &SuiteOptions) -> Result<Check> {
    let mut cfg = base(Command::Chain, opts);
    cfg.kernel = Some(KernelSpec::Beta { beta: 0.5 });
    cfg.potential = Some(PotentialSpec::Constant { value: 1.0 });
    cfg.grid = times(&[0.0, 0.25, 0.5, 0.75, 1.0]);
    cfg.order = Some(8);
    let fitted = run(&cfg)?;

    let eng = SeriesEngine::new(
        &KernelDensity::beta(0.5)?,
        &Potential::constant(1.0)?,
        &StateSpace::single_point(),
        &RecursionPlan::with_order(4),
        &Quadrature::new(cfg.quadrature)?,
    )?;
    let table = eng.eval_series(&SpaceTimeGrid::times_only(vec![0.0, 0.25, 0.5, 0.75, 1.0])?, None)?;
    let small = ControlPair::linear(0.0, 0.1 * std::f64::consts::PI.sqrt())?;
    let negative = verify_term_chain(&table, &small)?;
    let caught = !negative.step_violations.is_empty();
    let ok = fitted.status == Status::Ok && caught;
    let code = if fitted.status != Status::Ok { fitted.exit_code() } else { verdict(caught) };
    Ok((
        ok,
        code,
        json!({
            "fitted": { "status": fitted.status, "checked": fitted.payload["checked"], "worst_ratio": fitted.payload["worst_ratio"], "violations": fitted.payload["violations"] },
            "undersized": { "step_violations": negative.step_violations.len(), "product_violations": negative.product_violations.len() },
        }),
    ))
}

fn envelope_item(opts: &SuiteOptions) -> Result<Check> {
    let e = std::f64::consts::E;
    let closed = [
        ((envelope(0.0, 1.0)? - e).abs() <= 1e-12, "envelope(0,1) = e"),
        (envelope(0.5, 0.0)? == 2.0, "envelope(0.5,0) = 2"),
        ((envelope(1e-3, 1.0)? - e).abs() <= 2e-3 * e, "envelope(1e-3,1) ≈ e"),
    ];
    let mut cfg = base(Command::Envelope, opts);
    cfg.kernel = Some(KernelSpec::Beta { beta: 0.5 });
    cfg.potential = Some(PotentialSpec::Constant { value: 1.0 });
    cfg.grid = times(&[0.0, 0.25, 0.5, 0.75, 1.0]);
    cfg.order = Some(8);
    let rep = run(&cfg)?;
    let closed_ok = closed.iter().all(|c| c.0);
    let ok = closed_ok && rep.status == Status::Ok;
    let code = if rep.status != Status::Ok { rep.exit_code() } else { verdict(ok) };
    Ok((
        ok,
        code,
        json!({
            "closed_forms": closed.iter().map(|c| json!({ "check": c.1, "passed": c.0 })).collect::<Vec<_>>(),
            "status": rep.status,
            "worst_ratio": rep.payload["worst_ratio"],
            "violations": rep.payload["violations"],
        }),
    ))
}

/// Gaussian kernel with q ≡ 0.3: k̃_N ≤ k·e^{0.3(t-s)}.
fn gauss_example(opts: &SuiteOptions) -> Result<Check> {
    let mut cfg = base(Command::Envelope, opts);
    cfg.kernel = Some(KernelSpec::Gauss { dim: 1 });
    cfg.potential = Some(PotentialSpec::Constant { value: 0.3 });
    cfg.space = Some(SpaceSpec::Line { radius: 10.0, mesh: 64 });
    cfg.grid = Some(GridSpec {
        times: vec![0.0, 0.5, 2.0],
        states: vec![vec![0.0], vec![1.0]],
    });
    cfg.quadrature = light_gauss_quad(opts);
    cfg.plan = light_gauss_plan(4);
    cfg.control = ControlSpec {
        etas: vec![0.0],
        eta: None,
        c: None,
    };
    let rep = run(&cfg)?;
    let c = rep.payload["certificate"]["c"].as_f64().unwrap_or(f64::NAN);
    let c_ok = (c - 0.3).abs() <= 1e-4;
    let ok = rep.status == Status::Ok && c_ok;
    let code = if rep.status != Status::Ok { rep.exit_code() } else { verdict(ok) };
    Ok((
        ok,
        code,
        json!({
            "fitted_c": c,
            "status": rep.status,
            "worst_ratio": rep.payload["worst_ratio"],
            "violations": rep.payload["violations"],
        }),
    ))
}

fn three_p(opts: &SuiteOptions) -> Result<Check> {
    let mut rows = Vec::new();
    let mut ok = true;
    for beta in [0.25, 0.5, 0.75] {
        let mut cfg = base(Command::Threep, opts);
        cfg.kernel = Some(KernelSpec::Beta { beta });
        cfg.grid = times(&[0.0, 1.0, 2.0]);
        let rep = run(&cfg)?;
        let sup = rep.payload["sup"].as_f64().unwrap_or(f64::NAN);
        let want = 2f64.powf(1.0 - beta);
        let tr = &rep.payload["triple"];
        let mid = tr["u"].as_f64() == Some(0.5 * (tr["s"].as_f64().unwrap_or(0.0) + tr["t"].as_f64().unwrap_or(0.0)));
        let sampled = rep.payload["sampled"]["sup"].as_f64().unwrap_or(f64::NAN);
        let item_ok = (sup - want).abs() <= 1e-9 * want && mid && sampled <= want * (1.0 + 1e-12);
        ok &= item_ok;
        rows.push(json!({ "beta": beta, "sup": sup, "expected": want, "midpoint": mid, "sampled_sup": sampled, "passed": item_ok }));
    }
    let mut cfg = base(Command::Threep, opts);
    cfg.kernel = Some(KernelSpec::Gauss { dim: 1 });
    cfg.grid = Some(GridSpec {
        times: vec![0.0, 1.0, 2.0],
        states: vec![vec![0.0], vec![5.0], vec![10.0]],
    });
    let rep = run(&cfg)?;
    let gauss = rep.payload["sup"].as_f64().unwrap_or(f64::NAN);
    ok &= gauss > 500.0;
    Ok((ok, verdict(ok), json!({ "beta": rows, "gauss_sup_r10": gauss })))
}

fn kato_scans(opts: &SuiteOptions) -> Result<Check> {
    let mut cfg = base(Command::Kato, opts);
    cfg.kernel = Some(KernelSpec::Beta { beta: 0.5 });
    cfg.potential = Some(PotentialSpec::Power { beta: 0.5, eps: 0.25 });
    cfg.grid = times(&(0..=8).map(|i| -0.5 + i as f64 * 0.1875).collect::<Vec<_>>());
    cfg.order = Some(1);
    cfg.kato = Some(KatoSpec {
        h: vec![1.0, 0.5, 0.25, 0.125],
        mode: KatoRun::Both,
        constant: None,
    });
    let rep = run(&cfg)?;
    let monotone = rep.payload["plain"]["monotone"].as_bool() == Some(true);
    let ok = rep.status == Status::Ok && monotone;
    let code = if rep.status != Status::Ok { rep.exit_code() } else { verdict(ok) };
    let col = |i: usize| rep.table.rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    Ok((
        ok,
        code,
        json!({
            "constant": rep.payload["constant"],
            "h": col(0),
            "relative_sup": col(1),
            "plain_sup": col(3),
            "plain_monotone": monotone,
            "holds": rep.payload["holds"],
        }),
    ))
}

const BUMPS: [[f64; 2]; 3] = [[-1.0, 1.0], [0.0, 2.0], [-3.0, -1.0]];

/// Residual bound at the default mesh, and ≥4× decay from a coarse mesh.
fn weyl_left_inverse(opts: &SuiteOptions) -> Result<Check> {
    let mut rows = Vec::new();
    let mut ok = true;
    for support in BUMPS {
        for beta in [0.25, 0.5, 0.75] {
            let mut cfg = base(Command::Weyl, opts);
            cfg.weyl = Some(WeylSpec {
                beta,
                support,
                s: vec![],
                scheme: opts.weyl(WeylScheme::default()),
                tolerance: Some(1e-3),
                convergence: false,
            });
            let bound = run(&cfg)?;
            if let Some(w) = cfg.weyl.as_mut() {
                w.scheme = opts.weyl(WeylScheme { panels: 2, nodes: 4 });
                w.tolerance = Some(f64::INFINITY);
                w.convergence = true;
            }
            let conv = run(&cfg)?;
            let item_ok = bound.status == Status::Ok && conv.status == Status::Ok;
            ok &= item_ok;
            rows.push(json!({
                "support": support,
                "beta": beta,
                "max_residual": bound.payload["max_residual"],
                "coarse_residual": conv.payload["max_residual"],
                "refined_residual": conv.payload["refined"]["max_residual"],
                "passed": item_ok,
            }));
        }
    }
    Ok((ok, verdict(ok), json!({ "tolerance": 1e-3, "cases": rows })))
}

fn weyl_perturbed(opts: &SuiteOptions) -> Result<Check> {
    let mut cfg = base(Command::PerturbedWeyl, opts);
    cfg.potential = Some(PotentialSpec::Constant { value: 0.2 });
    cfg.order = Some(12);
    cfg.quadrature = opts.quad(QuadratureScheme {
        time: TimeRule::JacobiWeighted { nodes: 24 },
        ..QuadratureScheme::default()
    });
    cfg.weyl = Some(WeylSpec {
        beta: 0.5,
        support: [-1.0, 1.0],
        s: vec![],
        scheme: opts.weyl(WeylScheme::default()),
        tolerance: Some(5e-3),
        convergence: false,
    });
    let rep = run(&cfg)?;
    let ok = rep.status == Status::Ok;
    Ok((
        ok,
        rep.exit_code(),
        json!({
            "max_residual": rep.payload["max_residual"],
            "tail": rep.payload["tail"],
            "envelope_ratio": rep.payload["envelope_ratio"],
            "envelope_violations": rep.payload["envelope_violations"],
            "control": { "eta": rep.payload["certificate"]["eta"], "c": rep.payload["certificate"]["c"] },
        }),
    ))
}
