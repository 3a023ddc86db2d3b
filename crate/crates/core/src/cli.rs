//! Batch runner behind the `relaxbv` binary.
//!
//! Jobs run on a pool of `jobs` workers; rows are written in job order, so
//! the result files depend only on the configuration and the seed. Job `i`
//! solves with the seed `seed::derive(root, i)`.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bv::{build_field, LpField, LpFieldSpec};
use crate::cell::SolverSettings;
use crate::config::{Command, DensityConfig, FieldJob, RunConfig, SurfaceKind};
use crate::density::{check_hypotheses_p, recession_infty, recession_p, Exponent, Integrand, Point, SamplePlan};
use crate::energy::{relaxed_energy, sandwich_report, EnergyBreakdown, EnergyMode, EnergySettings, SandwichStatus};
use crate::envelope::{cq_envelope, EnvelopeProblem};
use crate::error::{Error, Result};
use crate::seed;
use crate::surface::{closed_form_k, solve_kinfty, solve_kp, solve_kr, JumpData};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFY_FAIL: i32 = 4;

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub grid: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(g) = self.grid {
            cfg.solver.grid_n = g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Outcome {
    Ok,
    VerifyFail,
    Solver,
    Validation,
}

struct JobOutput {
    csv: Vec<String>,
    json: Value,
    outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub exit_code: i32,
    pub jobs: usize,
    pub failed: usize,
    pub output: PathBuf,
}

fn csv_header(command: Command) -> &'static [&'static str] {
    match command {
        Command::Envelope => &["job", "status", "density", "point", "grid_n", "value", "gap", "starts_used", "converged"],
        Command::Surface => &[
            "job", "status", "kind", "density", "x", "b", "c", "d", "nu", "r", "grid_n", "value", "err_est", "closed_form",
        ],
        Command::Relax => &["job", "status", "name", "density", "mode", "bulk", "jump", "cantor", "total", "flags"],
        Command::Verify => &[
            "job", "status", "name", "density", "mode", "total", "recovery_tail", "mollified_tail", "verdict",
        ],
        Command::Hypotheses => &["job", "status", "density", "p", "c_fit", "h1_holds", "h3_max_ratio", "h3_label"],
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn list(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

fn hash_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn error_json(run_id: &str, e: &Error) -> Value {
    json!({ "run_id": run_id, "status": e.code(), "error": e.to_string() })
}

fn failure(job: usize, command: Command, run_id: &str, e: Error) -> JobOutput {
    let width = csv_header(command).len();
    let mut csv = vec![String::new(); width];
    csv[0] = job.to_string();
    csv[1] = e.code().to_string();
    JobOutput {
        csv,
        json: error_json(run_id, &e),
        outcome: if e.is_validation() { Outcome::Validation } else { Outcome::Solver },
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    job: usize,
    seed: u64,
    run_id: String,
}

impl Ctx<'_> {
    fn density(&self, own: &Option<DensityConfig>) -> Result<Integrand> {
        own.as_ref().unwrap_or(&self.cfg.density).build()
    }

    fn solver(&self) -> SolverSettings {
        SolverSettings { grid_n: self.cfg.solver.grid_n, multistart: self.cfg.solver.multistart, seed: self.seed, ..Default::default() }
    }

    fn energy_settings(&self, space_dim: usize) -> EnergySettings {
        let mut s = EnergySettings::default_for(space_dim);
        s.solver = self.solver();
        if let Some(q) = &self.cfg.quadrature {
            s.quadrature = q.to_quadrature();
        }
        s
    }
}

fn run_envelope(ctx: &Ctx, i: usize) -> Result<JobOutput> {
    let job = &ctx.cfg.envelope[i];
    let f = ctx.density(&job.density)?;
    let dims = f.dims();
    let point = Point::new(
        job.x.clone().unwrap_or_else(|| vec![0.0; dims.space_dim]),
        job.u.clone().unwrap_or_else(|| vec![0.0; dims.target_dim]),
        job.b.clone(),
        job.xi.clone(),
    );
    let mut prob = EnvelopeProblem::new(&f, point.clone()).with_settings(&ctx.solver());
    prob.tol = ctx.cfg.solver.tol;
    prob.oscillation_levels = ctx.cfg.solver.oscillation_levels;
    let sol = cq_envelope(&prob)?;
    let used = sol.starts.iter().filter(|s| s.value.is_finite()).count();
    let pt = format!("x={};u={};b={};xi={}", list(&point.x), list(&point.u), list(&point.b), list(&point.xi));
    let csv = vec![
        ctx.job.to_string(),
        "OK".into(),
        f.name().into(),
        pt,
        sol.grid_n.to_string(),
        num(sol.value),
        num(sol.gap_to_f),
        used.to_string(),
        sol.converged.to_string(),
    ];
    let json = json!({
        "run_id": ctx.run_id,
        "status": "OK",
        "density": f.name(),
        "point": point,
        "value": sol.value,
        "f_value": sol.f_value,
        "gap": sol.gap_to_f,
        "grid_n": sol.grid_n,
        "starts_used": used,
        "best_start": sol.best_start,
        "converged": sol.converged,
        "cap_active": sol.cap_active,
    });
    Ok(JobOutput { csv, json, outcome: Outcome::Ok })
}

fn run_surface(ctx: &Ctx, i: usize) -> Result<JobOutput> {
    let job = &ctx.cfg.surface[i];
    let f = ctx.density(&job.density)?;
    let dims = f.dims();
    let jd = JumpData {
        x: job.x.clone().unwrap_or_else(|| vec![0.0; dims.space_dim]),
        b: job.b.clone().unwrap_or_else(|| vec![0.0; dims.field_dim]),
        c: job.c.clone(),
        d: job.d.clone(),
        nu: job.nu.clone(),
    };
    let schedule = crate::density::Schedule::default();
    let rec = match job.kind {
        SurfaceKind::Kp => recession_p(&f, &schedule)?,
        SurfaceKind::Kinf | SurfaceKind::Kr => recession_infty(&f, &schedule)?,
        SurfaceKind::Closed => match dims.exponent {
            Exponent::Finite(_) => recession_p(&f, &schedule)?,
            Exponent::Infinity => recession_infty(&f, &schedule)?,
        },
    };
    let closed = closed_form_k(&rec, &jd);
    let settings = ctx.solver();
    let (kind, value, err_est, grid_n, extra) = match job.kind {
        SurfaceKind::Closed => ("closed", closed.clone()?, 0.0, 0, Value::Null),
        other => {
            let sol = match other {
                SurfaceKind::Kp => solve_kp(&rec, &jd, &settings)?,
                SurfaceKind::Kinf => solve_kinfty(&rec, &jd, &settings)?,
                _ => {
                    let r = job.r.ok_or_else(|| Error::InvalidArgument("kind = \"kr\" needs `r`".into()))?;
                    solve_kr(&rec, &jd, r, &settings)?
                }
            };
            let extra = json!({
                "residual": sol.residual,
                "b_spread": sol.b_spread,
                "best_start": sol.best_start,
                "converged": sol.converged,
                "ball_active": sol.ball_active,
            });
            (sol.kind.as_str(), sol.value, sol.err_est, sol.grid_n, extra)
        }
    };
    let closed_value = closed.as_ref().ok().copied();
    let csv = vec![
        ctx.job.to_string(),
        "OK".into(),
        kind.into(),
        f.name().into(),
        list(&jd.x),
        list(&jd.b),
        list(&jd.c),
        list(&jd.d),
        list(&jd.nu),
        job.r.map(num).unwrap_or_default(),
        grid_n.to_string(),
        num(value),
        num(err_est),
        closed_value.map(num).unwrap_or_default(),
    ];
    let json = json!({
        "run_id": ctx.run_id,
        "status": "OK",
        "kind": kind,
        "density": f.name(),
        "jump": jd,
        "r": job.r,
        "grid_n": grid_n,
        "value": value,
        "err_est": err_est,
        "closed_form": closed_value,
        "solver": extra,
    });
    Ok(JobOutput { csv, json, outcome: Outcome::Ok })
}

fn field_inputs(ctx: &Ctx, job: &FieldJob) -> Result<(Integrand, crate::bv::PiecewiseBVField, LpField, EnergyMode, String)> {
    let f = ctx.density(&job.density)?;
    let dims = f.dims();
    let u = build_field(&job.field)?;
    let v_spec = job.v.clone().unwrap_or_else(LpFieldSpec::zero);
    let v = LpField::new(&v_spec, dims.space_dim, dims.exponent)?;
    let mode = job.mode.unwrap_or(EnergyMode::for_exponent(dims.exponent));
    let canonical = serde_json::to_vec(&(&job.field, &v_spec)).map_err(|e| Error::Io(e.to_string()))?;
    Ok((f, u, v, mode, hash_hex(&canonical)))
}

fn mode_str(mode: EnergyMode) -> &'static str {
    match mode {
        EnergyMode::P => "p",
        EnergyMode::Infty => "infty",
    }
}

#[derive(Serialize)]
struct EnergyRecord<'a> {
    run_id: &'a str,
    status: &'a str,
    name: Option<&'a str>,
    field_hash: &'a str,
    density: &'a str,
    mode: EnergyMode,
    bulk: f64,
    jump: f64,
    cantor: f64,
    total: f64,
    errors: crate::energy::TermErrors,
    ladders: Value,
    flags: &'a [String],
    jumps: &'a [crate::energy::JumpEvaluation],
}

fn energy_record<'a>(
    ctx: &'a Ctx,
    name: Option<&'a str>,
    hash: &'a str,
    status: &'a str,
    e: &'a EnergyBreakdown,
    ladders: Value,
) -> Value {
    serde_json::to_value(EnergyRecord {
        run_id: &ctx.run_id,
        status,
        name,
        field_hash: hash,
        density: &e.provenance.density,
        mode: e.provenance.mode,
        bulk: e.bulk,
        jump: e.jump,
        cantor: e.cantor,
        total: e.total,
        errors: e.errors,
        ladders,
        flags: &e.provenance.flags,
        jumps: &e.provenance.jumps,
    })
    .unwrap_or(Value::Null)
}

fn run_relax(ctx: &Ctx, i: usize) -> Result<JobOutput> {
    let job = &ctx.cfg.relax[i];
    let (f, u, v, mode, hash) = field_inputs(ctx, job)?;
    let e = relaxed_energy(&u, &v, &f, mode, &ctx.energy_settings(u.space_dim))?;
    let name = job.name.as_deref();
    let csv = vec![
        ctx.job.to_string(),
        "OK".into(),
        name.unwrap_or_default().into(),
        f.name().into(),
        mode_str(mode).into(),
        num(e.bulk),
        num(e.jump),
        num(e.cantor),
        num(e.total),
        e.provenance.flags.join(";"),
    ];
    let json = energy_record(ctx, name, &hash, "OK", &e, json!({}));
    Ok(JobOutput { csv, json, outcome: Outcome::Ok })
}

fn run_verify(ctx: &Ctx, i: usize) -> Result<JobOutput> {
    let job = &ctx.cfg.verify[i];
    let (f, u, v, mode, hash) = field_inputs(ctx, job)?;
    let options = ctx.cfg.sandwich_options();
    let r = sandwich_report(&u, &v, &f, mode, &options, &ctx.energy_settings(u.space_dim))?;
    let verdict = match r.status {
        SandwichStatus::Pass => "PASS",
        SandwichStatus::Fail => "FAIL",
        SandwichStatus::GapExpected => "GAP_EXPECTED",
    };
    let tail = |l: &[crate::energy::LadderEntry]| l.last().map(|e| num(e.value)).unwrap_or_default();
    let name = job.name.as_deref();
    let csv = vec![
        ctx.job.to_string(),
        "OK".into(),
        name.unwrap_or_default().into(),
        f.name().into(),
        mode_str(mode).into(),
        num(r.breakdown.total),
        tail(&r.recovery),
        tail(&r.mollified),
        verdict.into(),
    ];
    let ladders = json!({
        "recovery": r.recovery,
        "mollified": r.mollified,
        "envelope_bulk": r.envelope_bulk,
        "recovery_nonincreasing": r.recovery_nonincreasing,
        "lower_ok": r.lower_ok,
        "upper_ok": r.upper_ok,
        "verdict": verdict,
        "notes": r.notes,
    });
    let json = energy_record(ctx, name, &hash, "OK", &r.breakdown, ladders);
    let outcome = if r.status == SandwichStatus::Fail { Outcome::VerifyFail } else { Outcome::Ok };
    Ok(JobOutput { csv, json, outcome })
}

fn run_hypotheses(ctx: &Ctx, i: usize) -> Result<JobOutput> {
    let (probes, own) = match ctx.cfg.hypotheses.get(i) {
        Some(job) => (job.probes, job.density.clone()),
        None => (64, None),
    };
    let f = ctx.density(&own)?;
    let p = match f.dims().exponent {
        Exponent::Finite(p) => p,
        Exponent::Infinity => {
            return Err(Error::InvalidArgument("hypothesis probes need a finite exponent".into()));
        }
    };
    let plan = SamplePlan::seeded(f.dims(), probes, ctx.seed);
    let rep = check_hypotheses_p(&f, &plan, p)?;
    let csv = vec![
        ctx.job.to_string(),
        "OK".into(),
        f.name().into(),
        num(p),
        num(rep.h1.c_fit),
        rep.h1.holds.to_string(),
        num(rep.h3.max_ratio),
        format!("{:?}", rep.h3.label),
    ];
    let json = json!({
        "run_id": ctx.run_id,
        "status": "OK",
        "density": f.name(),
        "p": p,
        "h1": rep.h1,
        "h2": rep.h2,
        "h3": rep.h3,
    });
    Ok(JobOutput { csv, json, outcome: Outcome::Ok })
}

fn run_job(cfg: &RunConfig, i: usize) -> JobOutput {
    let ctx = Ctx {
        cfg,
        job: i,
        seed: seed::derive(cfg.seed, i as u64),
        run_id: format!("{}-{:016x}-{i:04}", cfg.command.as_str(), cfg.seed),
    };
    let result = match cfg.command {
        Command::Envelope => run_envelope(&ctx, i),
        Command::Surface => run_surface(&ctx, i),
        Command::Relax => run_relax(&ctx, i),
        Command::Verify => run_verify(&ctx, i),
        Command::Hypotheses => run_hypotheses(&ctx, i),
    };
    result.unwrap_or_else(|e| failure(i, cfg.command, &ctx.run_id, e))
}

fn write_csv(path: &std::path::Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.to_string()))?;
    w.write_record(header).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Worker count: the configuration, then `RELAXBV_JOBS`, then 1.
pub fn worker_count(cfg: &RunConfig) -> usize {
    cfg.jobs
        .or_else(|| std::env::var("RELAXBV_JOBS").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
        .max(1)
}

/// Runs every job of `cfg` and writes `results.csv`, `results.jsonl` and
/// `config.toml` into `cfg.output`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let n_jobs = match cfg.command {
        Command::Hypotheses => cfg.job_count().max(1),
        _ => cfg.job_count(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(cfg))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let outputs: Vec<JobOutput> = pool.install(|| (0..n_jobs).into_par_iter().map(|i| run_job(cfg, i)).collect());

    fs::create_dir_all(&cfg.output)?;
    let rows: Vec<Vec<String>> = outputs.iter().map(|o| o.csv.clone()).collect();
    write_csv(&cfg.output.join("results.csv"), csv_header(cfg.command), &rows)?;
    let mut jsonl = String::new();
    for o in &outputs {
        jsonl.push_str(&serde_json::to_string(&o.json).map_err(|e| Error::Io(e.to_string()))?);
        jsonl.push('\n');
    }
    fs::write(cfg.output.join("results.jsonl"), jsonl)?;
    fs::write(cfg.output.join("config.toml"), cfg.normalized()?)?;

    let worst = outputs.iter().map(|o| o.outcome).max().unwrap_or(Outcome::Ok);
    let exit_code = match worst {
        Outcome::Ok => EXIT_OK,
        Outcome::VerifyFail => EXIT_VERIFY_FAIL,
        Outcome::Solver => EXIT_SOLVER,
        Outcome::Validation => EXIT_VALIDATION,
    };
    Ok(RunSummary {
        exit_code,
        jobs: n_jobs,
        failed: outputs.iter().filter(|o| o.outcome > Outcome::VerifyFail).count(),
        output: cfg.output.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_config(command: &str, density: &str, dir: &std::path::Path) -> RunConfig {
        let text = format!(
            r#"
command = "{command}"
output = "{}"

[density]
name = "{density}"

[solver]
multistart = 1

[[{command}]]
[{command}.field]
domain = [[0.0, 1.0]]
[[{command}.field.pieces]]
region = {{ interval = [0.0, 0.5] }}
value = "0"
[[{command}.field.pieces]]
region = {{ interval = [0.5, 1.0] }}
value = "1"
"#,
            dir.display()
        );
        RunConfig::parse(&text).unwrap()
    }

    #[test]
    fn relax_step_writes_total_one() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = step_config("relax", "p-norm-sum", dir.path());
        let s = run(&cfg).unwrap();
        assert_eq!(s.exit_code, EXIT_OK);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[8], "1.0");
        assert!(dir.path().join("results.jsonl").exists());
        assert!(dir.path().join("config.toml").exists());
    }

    #[test]
    fn verify_area_step_passes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = step_config("verify", "area-like", dir.path());
        assert_eq!(run(&cfg).unwrap().exit_code, EXIT_OK);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().ends_with("PASS"), "{csv}");
    }

    #[test]
    fn failing_job_becomes_a_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = step_config("relax", "p-norm-sum", dir.path());
        let mut bad = cfg.relax[0].clone();
        bad.field.pieces[1].region = crate::bv::RegionSpec::Interval([0.4, 1.0]);
        cfg.relax.insert(0, bad);
        let s = run(&cfg).unwrap();
        assert_eq!(s.exit_code, EXIT_VALIDATION);
        assert_eq!(s.failed, 1);
        let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("0,REGION_OVERLAP"));
        assert!(lines[2].starts_with("1,OK"));
    }
}
