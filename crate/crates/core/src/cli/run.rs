use super::config::*;
use super::{tool_version, Report, Status, Table};
use crate::analysis::{
    check_condition, envelope, fit_affine_control, kato_implication, kato_scan, three_p_constant, three_p_ratio,
    verify_envelope, verify_term_chain, Certificate, ChainViolation, ControlPair, KatoScan, Triple,
};
use crate::error::{Error, Result};
use crate::grid::{GridPair, SpaceTimeGrid};
use crate::kernels::{ck_residual, KernelDensity, KernelFamily, Potential, State, StateSpace, TabulatedKernel};
use crate::quadrature::Quadrature;
use crate::series::{RecursionPlan, SeriesEngine};
use crate::weyl::{default_s_grid, left_inverse_residual, perturbed_inverse_residual, FracOrder, TestFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::time::Instant;

/// Executes the configured command. Errors map to exit codes through
/// [`super::exit_code`]; certificate failures and verified violations come
/// back as a report with the matching [`Status`].
pub fn run(config: &ExperimentConfig) -> Result<Report> {
    config.validate()?;
    let start = Instant::now();
    let out = match config.command {
        Command::Series => series(config),
        Command::Certify => certify(config),
        Command::Chain => chain(config, false),
        Command::Envelope => chain(config, true),
        Command::Threep => threep(config),
        Command::Kato => kato(config),
        Command::Weyl => weyl(config),
        Command::PerturbedWeyl => perturbed_weyl(config),
        Command::CkCheck => ck_check(config),
    }?;
    Ok(Report {
        version: tool_version(),
        config: config.clone(),
        status: out.status,
        payload: out.payload,
        table: out.table,
        evaluations: out.evaluations,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

struct Outcome {
    status: Status,
    payload: Value,
    table: Table,
    evaluations: Option<u64>,
}

fn build_kernel(spec: &KernelSpec) -> Result<KernelDensity<f64>> {
    match spec {
        KernelSpec::Beta { beta } => KernelDensity::beta(*beta),
        KernelSpec::Gauss { dim } => KernelDensity::gauss(*dim),
        KernelSpec::Cauchy => Ok(KernelDensity::cauchy()),
        KernelSpec::Tabulated { path, time_exponent } => {
            KernelDensity::tabulated(TabulatedKernel::from_path(path)?, *time_exponent)
        }
    }
}

fn build_potential(spec: &PotentialSpec) -> Result<Potential<f64>> {
    match spec {
        PotentialSpec::Zero => Ok(Potential::zero()),
        PotentialSpec::Constant { value } => Potential::constant(*value),
        PotentialSpec::Power { beta, eps } => Potential::power(*beta, *eps),
        PotentialSpec::Bump { amplitude, width } => Potential::bump(*amplitude, *width),
    }
}

/// Configured space, or a default matching the kernel's dimension.
fn build_space(spec: Option<&SpaceSpec>, kernel: &KernelDensity<f64>) -> Result<StateSpace<f64>> {
    match spec {
        Some(SpaceSpec::Point) => Ok(StateSpace::single_point()),
        Some(SpaceSpec::Interval { lo, hi, mesh }) => StateSpace::interval(*lo, *hi, *mesh),
        Some(SpaceSpec::Line { radius, mesh }) => StateSpace::real_line(*radius, *mesh),
        Some(SpaceSpec::Plane { radius, mesh }) => StateSpace::plane(*radius, *mesh),
        None => match kernel.dim() {
            0 => Ok(StateSpace::single_point()),
            1 => StateSpace::real_line(10.0, 64),
            _ => StateSpace::plane(6.0, 32),
        },
    }
}

fn build_grid(spec: &GridSpec, dim: usize) -> Result<SpaceTimeGrid<f64>> {
    let states = if spec.states.is_empty() {
        vec![State::origin()]
    } else {
        spec.states
            .iter()
            .map(|c| match (dim, c.as_slice()) {
                (0, []) => Ok(State::origin()),
                (1, [x]) => Ok(State::on_line(*x)),
                (2, [x, y]) => Ok(State::in_plane(*x, *y)),
                _ => Err(Error::Config(format!("grid state {c:?} does not have {dim} coordinate(s)"))),
            })
            .collect::<Result<Vec<_>>>()?
    };
    SpaceTimeGrid::new(spec.times.clone(), states)
}

fn plan(config: &ExperimentConfig) -> RecursionPlan {
    let mut p = config.plan.clone();
    if let Some(n) = config.order {
        p.order = n;
    }
    p
}

struct Setup {
    engine: SeriesEngine<f64>,
    grid: SpaceTimeGrid<f64>,
    dim: usize,
}

fn setup(config: &ExperimentConfig) -> Result<Setup> {
    let kernel = build_kernel(config.kernel.as_ref().expect("validated"))?;
    let potential = build_potential(config.potential.as_ref().expect("validated"))?;
    let space = build_space(config.space.as_ref(), &kernel)?;
    let dim = space.dim();
    let grid = build_grid(config.grid.as_ref().expect("validated"), dim)?;
    let engine = SeriesEngine::new(&kernel, &potential, &space, &plan(config), &Quadrature::new(config.quadrature)?)?;
    Ok(Setup { engine, grid, dim })
}

fn coords(z: &State<f64>, dim: usize) -> Vec<f64> {
    z.0[..dim].to_vec()
}

fn state_columns(name: &str, dim: usize) -> Vec<String> {
    match dim {
        0 => vec![],
        1 => vec![name.to_string()],
        _ => vec![format!("{name}0"), format!("{name}1")],
    }
}

fn columns(parts: &[&str], dim: usize) -> Table {
    let mut cols = Vec::new();
    for p in parts {
        match p.strip_prefix('@') {
            Some(state) => cols.extend(state_columns(state, dim)),
            None => cols.push(p.to_string()),
        }
    }
    Table {
        columns: cols,
        rows: Vec::new(),
    }
}

fn pair_row(p: &GridPair<f64>, dim: usize) -> Vec<f64> {
    let mut r = vec![p.s];
    r.extend(coords(&p.x, dim));
    r.push(p.t);
    r.extend(coords(&p.y, dim));
    r
}

fn pair_json(p: &GridPair<f64>, dim: usize) -> Value {
    json!({ "s": p.s, "x": coords(&p.x, dim), "t": p.t, "y": coords(&p.y, dim) })
}

fn triple_json(tr: &Triple<f64>, dim: usize) -> Value {
    json!({
        "s": tr.s, "x": coords(&tr.x, dim),
        "u": tr.u, "z": coords(&tr.z, dim),
        "t": tr.t, "y": coords(&tr.y, dim),
    })
}

fn linear_c(control: &ControlPair<f64>) -> Option<f64> {
    match control.q {
        crate::analysis::Superadditive::Linear { c } => Some(c),
        _ => None,
    }
}

fn certificate_json(cert: &Certificate<f64>, dim: usize) -> Value {
    let c = linear_c(&cert.control);
    json!({
        "eta": cert.control.eta,
        "c": c,
        "valid": cert.valid,
        "slack": cert.slack,
        "location": cert.location.as_ref().map(|p| pair_json(p, dim)),
        "skipped": cert.skipped,
        "horizon": cert.grid.horizon(),
        "envelope_at_horizon": c.and_then(|c| envelope(cert.control.eta, c * cert.grid.horizon()).ok()),
        "truncation_radius": cert.truncation_radius,
    })
}

/// Certificate from an explicit control pair, or the affine fit.
fn obtain_certificate(config: &ExperimentConfig, st: &Setup) -> Result<(Certificate<f64>, Value, Table)> {
    let mut table = Table::new(&["eta", "c", "converged", "envelope"]);
    if let (Some(eta), Some(c)) = (config.control.eta, config.control.c) {
        let cert = check_condition(&st.engine, &ControlPair::linear(eta, c)?, &st.grid)?;
        table.push(vec![eta, c, 1.0, envelope(eta, c * st.grid.horizon()).unwrap_or(f64::INFINITY)]);
        return Ok((cert, json!({ "source": "explicit" }), table));
    }
    let fit = fit_affine_control(&st.engine, &st.grid, &config.control.etas)?;
    let candidates: Vec<Value> = fit
        .candidates
        .iter()
        .map(|c| json!({ "eta": c.eta, "c": c.c, "converged": c.converged, "envelope": c.envelope }))
        .collect();
    for c in &fit.candidates {
        table.push(vec![c.eta, c.c, if c.converged { 1.0 } else { 0.0 }, c.envelope.unwrap_or(f64::INFINITY)]);
    }
    let info = json!({ "source": "fit", "refinements": fit.refinements, "candidates": candidates });
    Ok((fit.best, info, table))
}

fn series(config: &ExperimentConfig) -> Result<Outcome> {
    let st = setup(config)?;
    let table = st.engine.eval_series(&st.grid, None)?;
    let mut out = columns(&["s", "@x", "t", "@y", "n", "value", "err"], st.dim);
    let mut flagged = 0;
    for e in &table.entries {
        let pair = GridPair {
            s: e.s,
            x: e.x,
            t: e.t,
            y: e.y,
        };
        flagged += e.divergence_flag as usize;
        for n in 0..e.terms.len() {
            let mut row = pair_row(&pair, st.dim);
            row.extend([n as f64, e.terms[n], e.errors[n]]);
            out.push(row);
        }
    }
    let payload = json!({
        "kernel": table.kernel,
        "potential": table.potential,
        "order": table.order,
        "stopped_early": table.stopped_early,
        "divergence_flags": flagged,
        "truncation_radius": table.truncation_radius,
        "sums": table.entries.iter().map(|e| e.sum()).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        status: Status::Ok,
        payload,
        table: out,
        evaluations: Some(st.engine.evaluations()),
    })
}

fn certify(config: &ExperimentConfig) -> Result<Outcome> {
    let st = setup(config)?;
    let (cert, info, table) = obtain_certificate(config, &st)?;
    let status = if cert.valid { Status::Ok } else { Status::CertificateInvalid };
    Ok(Outcome {
        status,
        payload: json!({ "certificate": certificate_json(&cert, st.dim), "control": info }),
        table,
        evaluations: Some(st.engine.evaluations()),
    })
}

fn violation_json(v: &ChainViolation<f64>, kind: &str, dim: usize) -> Value {
    json!({ "kind": kind, "n": v.n, "pair": pair_json(&v.pair, dim), "excess": v.excess, "noise": v.noise })
}

/// `chain` and `envelope`: both need a valid certificate first.
fn chain(config: &ExperimentConfig, envelope_only: bool) -> Result<Outcome> {
    let st = setup(config)?;
    let (cert, info, _) = obtain_certificate(config, &st)?;
    let cert_json = certificate_json(&cert, st.dim);
    if !cert.valid {
        return Ok(Outcome {
            status: Status::CertificateInvalid,
            payload: json!({ "certificate": cert_json, "control": info }),
            table: Table::default(),
            evaluations: Some(st.engine.evaluations()),
        });
    }
    let ctl = &cert.control;
    let series = st.engine.eval_series(&st.grid, Some(ctl))?;
    let (payload, table, ok) = if envelope_only {
        let rep = verify_envelope(&series, ctl)?;
        let mut table = columns(&["s", "@x", "t", "@y", "sum", "bound", "ratio"], st.dim);
        for e in &series.entries {
            let bound = e.terms[0] * envelope(ctl.eta, ctl.q.eval(e.s, e.t))?;
            let pair = GridPair {
                s: e.s,
                x: e.x,
                t: e.t,
                y: e.y,
            };
            let mut row = pair_row(&pair, st.dim);
            let ratio = if bound > 0.0 { e.sum() / bound } else { f64::NAN };
            row.extend([e.sum(), bound, ratio]);
            table.push(row);
        }
        let payload = json!({
            "certificate": cert_json,
            "control": info,
            "order": rep.order,
            "worst_ratio": rep.worst_ratio,
            "location": rep.location.as_ref().map(|p| pair_json(p, st.dim)),
            "tail_bound": rep.tail_bound,
            "violations": rep.violations.iter().map(|p| pair_json(p, st.dim)).collect::<Vec<_>>(),
        });
        (payload, table, rep.violations.is_empty())
    } else {
        let rep = verify_term_chain(&series, ctl)?;
        let mut table = columns(&["kind", "n", "s", "@x", "t", "@y", "excess", "noise"], st.dim);
        let tagged = rep
            .step_violations
            .iter()
            .map(|v| (0.0, "step", v))
            .chain(rep.product_violations.iter().map(|v| (1.0, "product", v)));
        let mut listed = Vec::new();
        for (code, kind, v) in tagged {
            let mut row = vec![code, v.n as f64];
            row.extend(pair_row(&v.pair, st.dim));
            row.extend([v.excess, v.noise]);
            table.push(row);
            listed.push(violation_json(v, kind, st.dim));
        }
        let payload = json!({
            "certificate": cert_json,
            "control": info,
            "order": series.order,
            "checked": rep.checked,
            "worst_ratio": rep.worst_ratio,
            "worst": rep.worst.as_ref().map(|(n, p)| json!({ "n": n, "pair": pair_json(p, st.dim) })),
            "violations": listed,
        });
        (payload, table, rep.passed())
    };
    Ok(Outcome {
        status: if ok { Status::Ok } else { Status::Violations },
        payload,
        table,
        evaluations: Some(st.engine.evaluations()),
    })
}

const SAMPLED_TRIPLES: usize = 1000;

fn threep(config: &ExperimentConfig) -> Result<Outcome> {
    let kernel = build_kernel(config.kernel.as_ref().expect("validated"))?;
    let dim = build_space(config.space.as_ref(), &kernel)?.dim();
    let grid = build_grid(config.grid.as_ref().expect("validated"), dim)?;
    let rep = three_p_constant(&kernel, &grid)?;

    // seeded off-grid spot-check of the same ratio
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (t0, t1) = (grid.times()[0], *grid.times().last().expect("grid has times"));
    let bounds: Vec<(f64, f64)> = (0..dim)
        .map(|i| {
            grid.states()
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| (lo.min(z.0[i]), hi.max(z.0[i])))
        })
        .collect();
    let draw_state = |rng: &mut ChaCha8Rng| {
        let mut z = State::origin();
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            z.0[i] = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        }
        z
    };
    let mut sampled_sup = 0.0f64;
    let mut sampled_at = None;
    for _ in 0..SAMPLED_TRIPLES {
        let mut ts = [rng.gen_range(t0..=t1), rng.gen_range(t0..=t1), rng.gen_range(t0..=t1)];
        ts.sort_by(f64::total_cmp);
        let tr = Triple {
            s: ts[0],
            x: draw_state(&mut rng),
            u: ts[1],
            z: draw_state(&mut rng),
            t: ts[2],
            y: draw_state(&mut rng),
        };
        if let Some(r) = three_p_ratio(&kernel, &tr) {
            if r > sampled_sup {
                sampled_sup = r;
                sampled_at = Some(tr);
            }
        }
    }

    let mut table = columns(&["sup", "s", "@x", "u", "@z", "t", "@y"], dim);
    if let Some(tr) = &rep.triple {
        let mut row = vec![rep.sup, tr.s];
        row.extend(coords(&tr.x, dim));
        row.push(tr.u);
        row.extend(coords(&tr.z, dim));
        row.push(tr.t);
        row.extend(coords(&tr.y, dim));
        table.push(row);
    }
    let payload = json!({
        "kernel": kernel.label(),
        "sup": rep.sup,
        "triple": rep.triple.as_ref().map(|t| triple_json(t, dim)),
        "excluded": rep.excluded,
        "refinements": rep.refinements,
        "sampled": {
            "seed": config.seed,
            "draws": SAMPLED_TRIPLES,
            "sup": sampled_sup,
            "triple": sampled_at.as_ref().map(|t| triple_json(t, dim)),
        },
    });
    Ok(Outcome {
        status: Status::Ok,
        payload,
        table,
        evaluations: None,
    })
}

fn scan_json(scan: &KatoScan<f64>, dim: usize) -> Value {
    let points: Vec<Value> = scan
        .points
        .iter()
        .map(|p| json!({ "h": p.h, "sup": p.sup, "err": p.err, "location": p.location.as_ref().map(|l| pair_json(l, dim)) }))
        .collect();
    json!({
        "mode": scan.mode,
        "monotone": scan.is_monotone(),
        "refinements": scan.refinements,
        "truncation_radius": scan.truncation_radius,
        "points": points,
    })
}

fn kato(config: &ExperimentConfig) -> Result<Outcome> {
    let st = setup(config)?;
    let spec = config.kato.as_ref().expect("validated");
    if let Some(mode) = spec.mode.single() {
        let scan = kato_scan(&st.engine, &spec.h, &st.grid, mode)?;
        let mut table = Table::new(&["h", "sup", "err"]);
        for p in &scan.points {
            table.push(vec![p.h, p.sup, p.err]);
        }
        return Ok(Outcome {
            status: Status::Ok,
            payload: json!({ "scan": scan_json(&scan, st.dim) }),
            table,
            evaluations: Some(st.engine.evaluations()),
        });
    }
    let constant = match (spec.constant, st.engine.kernel().family()) {
        (Some(c), _) => c,
        (None, KernelFamily::Beta { beta, .. }) => 2f64.powf(1.0 - beta),
        (None, _) => three_p_constant(st.engine.kernel(), &st.grid)?.sup,
    };
    let imp = kato_implication(&st.engine, &spec.h, &st.grid, constant)?;
    let mut table = Table::new(&["h", "relative_sup", "relative_err", "plain_sup", "plain_err", "holds"]);
    for ((r, p), ok) in imp.relative.points.iter().zip(&imp.plain.points).zip(&imp.holds) {
        table.push(vec![r.h, r.sup, r.err, p.sup, p.err, if *ok { 1.0 } else { 0.0 }]);
    }
    let failing: Vec<f64> = imp
        .relative
        .points
        .iter()
        .zip(&imp.holds)
        .filter(|(_, ok)| !**ok)
        .map(|(p, _)| p.h)
        .collect();
    let payload = json!({
        "constant": constant,
        "relative": scan_json(&imp.relative, st.dim),
        "plain": scan_json(&imp.plain, st.dim),
        "holds": imp.holds,
        "violations": failing,
    });
    Ok(Outcome {
        status: if imp.passed() { Status::Ok } else { Status::Violations },
        payload,
        table,
        evaluations: Some(st.engine.evaluations()),
    })
}

fn weyl_setup(spec: &WeylSpec) -> Result<(TestFunction<f64>, FracOrder<f64>, Vec<f64>)> {
    let phi = TestFunction::bump(spec.support[0], spec.support[1])?;
    let beta = FracOrder::new(spec.beta)?;
    let s = if spec.s.is_empty() { default_s_grid(&phi) } else { spec.s.clone() };
    Ok((phi, beta, s))
}

fn weyl(config: &ExperimentConfig) -> Result<Outcome> {
    let spec = config.weyl.as_ref().expect("validated");
    let (phi, beta, s) = weyl_setup(spec)?;
    let tol = spec.tolerance.unwrap_or(1e-3);
    let rep = left_inverse_residual(&phi, beta, &s, &spec.scheme)?;
    let mut ok = rep.max_residual <= tol;
    let mut payload = json!({
        "beta": spec.beta,
        "support": spec.support,
        "scheme": spec.scheme,
        "sup_norm": phi.sup_norm(),
        "max_residual": rep.max_residual,
        "tolerance": tol,
    });
    let mut table;
    if spec.convergence {
        let fine = left_inverse_residual(&phi, beta, &s, &spec.scheme.refined())?;
        let converges = fine.max_residual <= rep.max_residual / 4.0 || fine.max_residual < 1e-12;
        ok &= converges;
        payload["refined"] = json!({
            "scheme": spec.scheme.refined(),
            "max_residual": fine.max_residual,
            "converges": converges,
        });
        table = Table::new(&["s", "residual", "refined_residual"]);
        for (a, b) in rep.per_s.iter().zip(&fine.per_s) {
            table.push(vec![a.0, a.1, b.1]);
        }
    } else {
        table = Table::new(&["s", "residual"]);
        for &(s, r) in &rep.per_s {
            table.push(vec![s, r]);
        }
    }
    Ok(Outcome {
        status: if ok { Status::Ok } else { Status::Violations },
        payload,
        table,
        evaluations: None,
    })
}

fn perturbed_weyl(config: &ExperimentConfig) -> Result<Outcome> {
    let spec = config.weyl.as_ref().expect("validated");
    let (phi, beta, s) = weyl_setup(spec)?;
    let tol = spec.tolerance.unwrap_or(5e-3);
    let potential = build_potential(config.potential.as_ref().expect("validated"))?;
    let plan = plan(config);
    let order = plan.order;
    let engine = SeriesEngine::new(
        &KernelDensity::beta(spec.beta)?,
        &potential,
        &StateSpace::single_point(),
        &plan,
        &Quadrature::new(config.quadrature)?,
    )?;
    // the certificate has to cover every gap the outer integral reaches
    let span = s.iter().map(|&x| spec.support[1] - x).fold(0.0, f64::max);
    let times = match &config.grid {
        Some(g) => g.times.clone(),
        None => (0..=8).map(|i| span * i as f64 / 8.0).collect(),
    };
    let st = Setup {
        engine,
        grid: SpaceTimeGrid::times_only(times)?,
        dim: 0,
    };
    let (cert, info, _) = obtain_certificate(config, &st)?;
    let cert_json = certificate_json(&cert, 0);
    if !cert.valid {
        return Ok(Outcome {
            status: Status::CertificateInvalid,
            payload: json!({ "certificate": cert_json, "control": info }),
            table: Table::default(),
            evaluations: Some(st.engine.evaluations()),
        });
    }
    let rep = perturbed_inverse_residual(&phi, beta, &st.engine, &cert, order, &s, &spec.scheme)?;
    let ok = rep.max_residual <= tol && rep.envelope_violations == 0;
    let mut table = Table::new(&["s", "residual"]);
    for &(s, r) in &rep.per_s {
        table.push(vec![s, r]);
    }
    let payload = json!({
        "beta": spec.beta,
        "support": spec.support,
        "scheme": spec.scheme,
        "order": rep.order,
        "sup_norm": phi.sup_norm(),
        "max_residual": rep.max_residual,
        "tail": rep.tail,
        "tolerance": tol,
        "envelope_ratio": rep.envelope_ratio,
        "envelope_violations": rep.envelope_violations,
        "certificate": cert_json,
        "control": info,
    });
    Ok(Outcome {
        status: if ok { Status::Ok } else { Status::Violations },
        payload,
        table,
        evaluations: Some(st.engine.evaluations()),
    })
}

fn ck_check(config: &ExperimentConfig) -> Result<Outcome> {
    let kernel = build_kernel(config.kernel.as_ref().expect("validated"))?;
    let space = build_space(config.space.as_ref(), &kernel)?;
    let dim = space.dim();
    let grid = build_grid(config.grid.as_ref().expect("validated"), dim)?;
    let rep = ck_residual(&kernel, &space, &grid, &Quadrature::new(config.quadrature)?)?;
    let tol = config.tolerance.unwrap_or(1e-6);
    let ok = rep.max_relative <= tol.max(10.0 * rep.error_estimate);
    let mut table = columns(&["max_relative", "error_estimate", "s", "@x", "u", "t", "@y"], dim);
    let location = rep.location.map(|(s, x, u, t, y)| {
        let mut row = vec![rep.max_relative, rep.error_estimate, s];
        row.extend(coords(&x, dim));
        row.extend([u, t]);
        row.extend(coords(&y, dim));
        table.push(row);
        json!({ "s": s, "x": coords(&x, dim), "u": u, "t": t, "y": coords(&y, dim) })
    });
    let payload = json!({
        "kernel": kernel.label(),
        "max_relative": rep.max_relative,
        "error_estimate": rep.error_estimate,
        "tolerance": tol,
        "location": location,
        "truncation_radius": rep.truncation_radius,
    });
    Ok(Outcome {
        status: if ok { Status::Ok } else { Status::Violations },
        payload,
        table,
        evaluations: Some(rep.evaluations),
    })
}
