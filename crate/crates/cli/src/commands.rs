//! Subcommand implementations. Every run-style command loads the same config
//! format, executes one module contract, writes its outputs under `--out`,
//! and finishes with a manifest naming each output and its checksum.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde_json::{json, Value};

use stripfront::coupling::{decomposition_report, solve_fbp, CouplingOptions};
use stripfront::elliptic::{self, EllipticProblem, Family};
use stripfront::fft::XTransform;
use stripfront::fit::loglog_slope;
use stripfront::grids::{make_grids, StripField, TimeGrid, XGrid, YGrid};
use stripfront::hamilton_jacobi::{hj_solve, VelocityField};
use stripfront::io::{
    export_strip_csv, export_surface_csv, read_strip, read_surface, write_strip, write_surface,
    FieldHeader,
};
use stripfront::sh_spaces::singular_holder_norm;
use stripfront::symbols::{
    resolvent_decay_slope, symbol_a, symbol_class_estimate, symbol_identity_errors, OperatorC,
};
use stripfront::verify::{solve_elliptic_oracle, system_residual};
use stripfront::{EllipticPath, Error, Preset, Result, SolverConfigF64};

use crate::manifest::{sha256_hex, RunManifest, Tolerances, MANIFEST_VERSION};
use crate::{NormArgs, RunArgs};

/// Shared state of a run-style command: parsed config, output directory,
/// and the manifest under construction.
pub struct Ctx<'a> {
    pub args: &'a RunArgs,
    pub cfg: SolverConfigF64,
    manifest: RunManifest,
    started: Instant,
}

impl<'a> Ctx<'a> {
    pub fn new(command: &str, args: &'a RunArgs) -> Result<Self> {
        let text = std::fs::read_to_string(&args.config)?;
        let cfg = SolverConfigF64::parse_str(&text)?;
        let threads = args.threads.unwrap_or(cfg.threads);
        if threads > 0 {
            // Ignore the error from re-initializing in one process (tests).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
        std::fs::create_dir_all(&args.out)?;
        let manifest = RunManifest {
            version: MANIFEST_VERSION,
            command: command.into(),
            config_path: args.config.to_string_lossy().into_owned(),
            config_sha256: sha256_hex(text.as_bytes()),
            seed: cfg.seed,
            threads,
            grid: json!({
                "n_dim": cfg.n_dim,
                "nx": cfg.nx,
                "m": cfg.m,
                "len": cfg.len,
                "t0": cfg.t0,
                "t_final": cfg.t_final,
                "n_levels": cfg.n_levels,
                "grading": cfg.grading,
            }),
            tolerances: Tolerances {
                outer: cfg.tol_outer,
                inner: cfg.tol_inner,
                linear: cfg.tol_linear,
            },
            wall_seconds: 0.0,
            outputs: Vec::new(),
            details: Value::Null,
        };
        Ok(Ctx {
            args,
            cfg,
            manifest,
            started: Instant::now(),
        })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.args.out.join(name)
    }

    pub fn record(&mut self, path: &Path) -> Result<()> {
        self.manifest.record_output(&self.args.out, path)
    }

    pub fn finish(mut self, details: Value) -> Result<()> {
        self.manifest.details = details;
        self.manifest.wall_seconds = self.started.elapsed().as_secs_f64();
        self.manifest.write(&self.args.out)
    }
}

fn sample_preset(preset: &Preset<f64>, xgrid: &XGrid<f64>, len: f64, t: f64) -> Array1<f64> {
    Array1::from_iter(xgrid.points.iter().map(|p| preset.eval(*p, len, t)))
}

fn family_of(epsilon: u8) -> Family {
    if epsilon == 1 {
        Family::Modified
    } else {
        Family::Plain
    }
}

/// Full coupled solve: bulk field, front, iterate log, residual summary.
pub fn solve(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new("solve", args)?;
    let cfg = ctx.cfg.clone();
    if !cfg.g.is_time_constant() {
        return Err(Error::Config(
            "solve requires a time-constant bottom datum preset (rate = 0)".into(),
        ));
    }
    let grids = make_grids(&cfg)?;
    let xtf = XTransform::new(&grids.x);
    let g = sample_preset(&cfg.g, &grids.x, cfg.len, 0.0);
    let opts = CouplingOptions::from_config(&cfg);
    let state = solve_fbp(&grids.x, &grids.y, &xtf, &g, &grids.time.levels, &opts)?;

    let u_path = ctx.out_path("u.bin");
    write_strip(&u_path, cfg.n_dim, cfg.nx, cfg.len, cfg.m, &state.u)?;
    ctx.record(&u_path)?;
    let s_path = ctx.out_path("s.bin");
    write_surface(&s_path, cfg.n_dim, cfg.nx, cfg.len, &state.s)?;
    ctx.record(&s_path)?;

    let log_path = ctx.out_path("log.jsonl");
    {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
        for rec in &state.log.records {
            writeln!(w, "{}", serde_json::to_string(rec)?)?;
        }
    }
    ctx.record(&log_path)?;

    if args.csv {
        let uc = ctx.out_path("u.csv");
        export_strip_csv(&uc, &grids.x, &grids.y, &state.u)?;
        ctx.record(&uc)?;
        let sc = ctx.out_path("s.csv");
        export_surface_csv(&sc, &grids.x, &state.s)?;
        ctx.record(&sc)?;
    }

    let ratios: Vec<f64> = state.log.records.iter().filter_map(|r| r.ratio).collect();
    let residual = if state.s.levels.len() >= 3 {
        let g_series: Vec<Array1<f64>> = state.s.levels.iter().map(|_| g.clone()).collect();
        let res = system_residual(
            &grids.x,
            &grids.y,
            &xtf,
            cfg.epsilon,
            &state.u,
            &state.s,
            &g_series,
        );
        json!({
            "interior": res.sup_interior(),
            "bottom": res.sup_bottom(),
            "flux": res.sup_flux(),
            "front": res.sup_front(),
        })
    } else {
        Value::Null
    };
    let details = json!({
        "epsilon": cfg.epsilon,
        "outer_iterations": state.log.records.len(),
        "retries": state.log.retries,
        "horizon": state.log.horizon,
        "contraction_ratios": ratios,
        "ratios_below_one": ratios.iter().all(|r| *r < 1.0),
        "log": state.log,
        "decomposition_slopes": decomposition_report(&state),
        "residual": residual,
    });
    ctx.finish(details)
}

/// One degenerate elliptic solve at the initial level, via the configured
/// path; the bottom datum also serves as the transverse coefficient, as it
/// does at onset.
pub fn solve_elliptic(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new("solve-elliptic", args)?;
    let cfg = ctx.cfg.clone();
    let xgrid = XGrid::new(cfg.n_dim, cfg.nx, cfg.len)?;
    let ygrid = YGrid::new(cfg.m)?;
    let xtf = XTransform::new(&xgrid);
    let c = sample_preset(&cfg.g, &xgrid, cfg.len, 0.0);
    let g = c.clone();
    let h = sample_preset(&cfg.h, &xgrid, cfg.len, 0.0);
    let f = Array2::zeros((xgrid.x_len(), ygrid.ny()));
    let family = family_of(cfg.epsilon);
    let prob = EllipticProblem {
        family,
        sigma: 0.0,
        t: cfg.t0,
        c: &c,
        f: &f,
        g: &g,
        h: &h,
    };
    let (u, details) = match cfg.elliptic_path {
        EllipticPath::Oracle => {
            let u = solve_elliptic_oracle(
                &xgrid, &ygrid, family, prob.sigma, prob.t, prob.c, prob.f, prob.g, prob.h,
            )?;
            (u, json!({ "path": "oracle" }))
        }
        path => {
            let constant = path == EllipticPath::Constant;
            let (u, stats) =
                elliptic::solve(&xgrid, &ygrid, &xtf, constant, &prob, cfg.tol_linear, cfg.max_sweeps)?;
            (
                u,
                json!({
                    "path": if constant { "constant" } else { "variable" },
                    "sweeps": stats.sweeps,
                    "contraction_rate": stats.rate,
                    "converged": stats.converged,
                    "residuals": stats.residuals,
                }),
            )
        }
    };
    let field = StripField {
        levels: vec![cfg.t0],
        slices: vec![u],
    };
    let u_path = ctx.out_path("u.bin");
    write_strip(&u_path, cfg.n_dim, cfg.nx, cfg.len, cfg.m, &field)?;
    ctx.record(&u_path)?;
    if args.csv {
        let uc = ctx.out_path("u.csv");
        export_strip_csv(&uc, &xgrid, &ygrid, &field)?;
        ctx.record(&uc)?;
    }
    ctx.finish(details)
}

/// Stand-alone front propagation with the configured closed-form velocity.
pub fn hj_solve_front(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new("hj-solve", args)?;
    let cfg = ctx.cfg.clone();
    let xgrid = XGrid::new(cfg.n_dim, cfg.nx, cfg.len)?;
    let tg = TimeGrid::new(cfg.t0, cfg.t_final, cfg.n_levels, cfg.grading)?;
    let v = VelocityField::closed_form(cfg.v.clone(), cfg.len);
    let sol = hj_solve(&xgrid, &v, &tg.levels, cfg.substeps)?;
    let s_path = ctx.out_path("s.bin");
    write_surface(&s_path, cfg.n_dim, cfg.nx, cfg.len, &sol.s)?;
    ctx.record(&s_path)?;
    if args.csv {
        let sc = ctx.out_path("s.csv");
        export_surface_csv(&sc, &xgrid, &sol.s)?;
        ctx.record(&sc)?;
    }
    let (mut s_min, mut s_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for vals in &sol.s.values {
        for &x in vals {
            s_min = s_min.min(x);
            s_max = s_max.max(x);
        }
    }
    ctx.finish(json!({
        "levels": sol.s.levels.len(),
        "substeps": cfg.substeps,
        "s_min": s_min,
        "s_max": s_max,
    }))
}

/// Transverse symbol measurements as tidy CSV: identity residuals, the
/// boundary-layer location of the frequency derivative, resolvent decay.
pub fn verify_symbols(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new("verify-symbols", args)?;
    let cfg = ctx.cfg.clone();
    let ygrid = YGrid::new(cfg.m)?;
    let op = OperatorC::new(cfg.m)?;

    let csv_path = ctx.out_path("symbols.csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(w, "quantity,q,value")?;

    let mut max_identity = 0.0f64;
    for &q in &[0.0, 1.0, 2.0, 10.0, 50.0] {
        let id = symbol_identity_errors(q, &ygrid);
        max_identity = max_identity.max(id.err_flux).max(id.err_value);
        writeln!(w, "identity_flux_err,{q},{}", id.err_flux)?;
        writeln!(w, "identity_value_err,{q},{}", id.err_value)?;
        writeln!(w, "a_at_origin,{q},{}", symbol_a(q, 0.0))?;
        let sup = ygrid
            .nodes
            .iter()
            .fold(0.0f64, |a, &y| a.max(symbol_a(q, y).abs()));
        writeln!(w, "a_sup,{q},{sup}")?;
    }

    let peak_qs = [10.0, 20.0, 40.0, 80.0];
    let mut dq_sups = Vec::new();
    for &q in &peak_qs {
        let est = symbol_class_estimate(q, &op);
        dq_sups.push(est.sup_dq_a);
        writeln!(w, "dq_a_sup,{q},{}", est.sup_dq_a)?;
        writeln!(w, "dq_a_argmax_y,{q},{}", est.argmax_y)?;
    }

    // The discrete resolvent only shows the continuum decay inside a
    // window: below q ~ 3 the smallest eigenvalue of C dominates q^2, and
    // above q ~ m/4 the boundary layer 1/q is under-resolved. Record the
    // full sweep, fit the slope on the window.
    let mut res_qs = vec![1.0f64];
    while *res_qs.last().unwrap() * 2.0 <= (cfg.m as f64 / 4.0).max(16.0) {
        res_qs.push(res_qs.last().unwrap() * 2.0);
    }
    for &q in &res_qs {
        writeln!(w, "resolvent_norm,{q},{}", op.resolvent_inf_norm(q * q))?;
    }
    let fit_qs: Vec<f64> = res_qs.iter().copied().filter(|&q| q >= 8.0).collect();
    w.flush()?;
    drop(w);
    ctx.record(&csv_path)?;

    // The frequency derivative of the value symbol decays like 1/q.
    let dq_slope = loglog_slope(&peak_qs, &dq_sups);
    let res_slope = resolvent_decay_slope(&op, &fit_qs);
    ctx.finish(json!({
        "m": cfg.m,
        "max_identity_err": max_identity,
        "resolvent_decay_slope": res_slope,
        "dq_a_weighted_slope": dq_slope,
    }))
}

/// Dense measurements of the operator-family hypotheses behind the stepping
/// theory; size-guarded, so configs should stay small.
pub fn verify_operators(args: &RunArgs) -> Result<()> {
    let mut ctx = Ctx::new("verify-operators", args)?;
    let cfg = ctx.cfg.clone();
    let xgrid = XGrid::new(cfg.n_dim, cfg.nx, cfg.len)?;
    let ygrid = YGrid::new(cfg.m)?;
    let tg = TimeGrid::new(cfg.t0, cfg.t_final, cfg.n_levels, cfg.grading)?;
    // Dense inverses are cubic in the unknown count; a handful of sample
    // times spans the decay fit.
    let max_samples = 8usize;
    let stride = tg.levels.len().div_ceil(max_samples).max(1);
    let mut times: Vec<f64> = tg.levels.iter().copied().step_by(stride).collect();
    if *times.last().unwrap() != *tg.levels.last().unwrap() {
        times.push(*tg.levels.last().unwrap());
    }
    let c = sample_preset(&cfg.g, &xgrid, cfg.len, 0.0);
    let report = stripfront::parabolic::verify_maxreg_hypotheses(
        &xgrid,
        &ygrid,
        family_of(cfg.epsilon),
        &c,
        &times,
        100,
        cfg.seed,
    )?;
    let json_path = ctx.out_path("operators.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)? + "\n")?;
    ctx.record(&json_path)?;
    ctx.finish(json!({
        "inv_norm_slope": report.inv_norm_slope,
        "spectral_floor": report.spectral_floor,
        "lipschitz_worst": report.lipschitz_worst,
        "lipschitz_mean": report.lipschitz_mean,
        "triples": report.triples,
    }))
}

/// Weighted Hölder norm report for a stored field container; prints JSON to
/// stdout so scripts can consume it directly.
pub fn norms(args: &NormArgs) -> Result<()> {
    let mut r = BufReader::new(std::fs::File::open(&args.field)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())
        .map_err(|_| Error::Invalid("not a field container (bad header line)".into()))?;
    drop(r);
    let report = match header.kind.as_str() {
        "strip" => {
            let (_, field) = read_strip::<f64>(&args.field)?;
            singular_holder_norm(args.beta, args.gamma, &field.levels, &field.slices)
        }
        "surface" => {
            let (_, field) = read_surface::<f64>(&args.field)?;
            singular_holder_norm(args.beta, args.gamma, &field.levels, &field.values)
        }
        other => {
            return Err(Error::Invalid(format!("unknown field kind `{other}`")));
        }
    };
    let out = json!({
        "field": args.field.to_string_lossy(),
        "kind": header.kind,
        "beta": args.beta,
        "gamma": args.gamma,
        "levels": header.levels.len(),
        "sup": report.sup,
        "seminorm": report.seminorm,
        "total": report.total,
        "early_slope": report.early_slope,
        "unbounded_sup": report.unbounded_sup,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
