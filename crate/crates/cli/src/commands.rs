//! One function per subcommand; each maps onto `lef-core` operations and
//! returns the artifacts to write.

use std::fmt::Write as _;

use lef_core::classify::{self, Classifier, StabilityPolicy};
use lef_core::functionals;
use lef_core::model::{self, build_model, PsiModel};
use lef_core::radialode::{integrate, integrate_linearized, CauchyProblem, Trajectory};
use lef_core::spectrum;
use lef_core::LefError;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FieldError, Format, RunConfig, SweepAxis};

#[derive(Debug)]
pub enum CliError {
    Config(FieldError),
    Core(LefError),
    Io(std::io::Error),
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        CliError::Config(e)
    }
}

impl From<LefError> for CliError {
    fn from(e: LefError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    /// 2 for refusals and invalid configuration, 1 for numerical or I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_refusal() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "invalid configuration: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

pub type CmdResult = Result<Artifact, CliError>;

/// Primary document plus side files `(extension, content)` written next to it.
#[derive(Debug)]
pub struct Artifact {
    pub primary: String,
    pub extras: Vec<(&'static str, String)>,
}

fn config_line(cfg: &RunConfig) -> String {
    format!("# config: {}\n", serde_json::to_string(cfg).expect("config serializes"))
}

fn json_doc<T: Serialize>(cfg: &RunConfig, result: &T) -> Artifact {
    let doc = json!({ "config": cfg, "result": result });
    Artifact {
        primary: serde_json::to_string_pretty(&doc).expect("report serializes") + "\n",
        extras: Vec::new(),
    }
}

fn csv_doc(cfg: &RunConfig, header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = config_line(cfg);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn model_of(cfg: &RunConfig) -> Result<PsiModel, CliError> {
    Ok(build_model(&cfg.model)?)
}

fn trajectory(cfg: &RunConfig, model: &PsiModel, alpha: f64) -> Result<Trajectory, CliError> {
    Ok(integrate(
        &CauchyProblem::new(model, cfg.p()?, alpha)?,
        cfg.r_max,
        cfg.tol,
    )?)
}

pub fn policy(cfg: &RunConfig) -> StabilityPolicy {
    let base = StabilityPolicy::default();
    StabilityPolicy {
        radii: cfg.radii.clone().unwrap_or(base.radii),
        grid_count: cfg.grid_count,
        r_max: cfg.r_max,
        tol: cfg.tol,
        eig_rel_tol: base.eig_rel_tol,
    }
}

pub fn model_info(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json, Format::Csv])?;
    let m = model_of(cfg)?;
    let radii = cfg.radii.clone().unwrap_or_else(|| vec![0.1, 0.5, 1.0, 2.0, 5.0, 10.0]);
    let mut rows = Vec::new();
    for &r in &radii {
        let pt = m.eval(r)?;
        let c = model::curvatures(&m, r)?;
        let g = model::geodesic_quantities(&m, r)?;
        rows.push(json!({
            "r": r,
            "log_psi": pt.log_psi,
            "dlog_psi": pt.rho[1],
            "radial_curvature": c.radial,
            "orthogonal_curvature": c.orthogonal,
            "log_area": g.log_area,
            "log_volume": g.log_volume,
        }));
    }
    if cfg.format == Format::Csv {
        let keys = [
            "r",
            "log_psi",
            "dlog_psi",
            "radial_curvature",
            "orthogonal_curvature",
            "log_area",
            "log_volume",
        ];
        let lines = rows.iter().map(|row| {
            keys.iter()
                .map(|k| row[k].as_f64().map_or(String::new(), |v| v.to_string()))
                .collect::<Vec<_>>()
                .join(",")
        });
        return Ok(Artifact {
            primary: csv_doc(cfg, &keys.join(","), lines),
            extras: Vec::new(),
        });
    }
    Ok(json_doc(
        cfg,
        &json!({ "spec": m.spec(), "r_floor": m.r_floor(), "omega_n": model::omega(m.n()), "samples": rows }),
    ))
}

pub fn hypotheses(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    let rep = model::check_hypotheses(&m, cfg.window, cfg.grid_count)?;
    Ok(json_doc(
        cfg,
        &json!({ "report": rep, "alternatives_ok": rep.alternatives_ok() }),
    ))
}

fn events_json(t: &Trajectory) -> String {
    serde_json::to_string_pretty(&t.events_json()).expect("events serialize") + "\n"
}

pub fn solve(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Csv, Format::Json])?;
    let m = model_of(cfg)?;
    let t = trajectory(cfg, &m, cfg.alpha()?)?;
    if cfg.format == Format::Json {
        return Ok(json_doc(
            cfg,
            &json!({ "r": t.r(), "u": t.u(), "uprime": t.uprime(), "events": t.events_json() }),
        ));
    }
    let mut primary = config_line(cfg);
    let _ = writeln!(
        primary,
        "# events: {}",
        serde_json::to_string(&t.events_json()).expect("events serialize")
    );
    primary.push_str(&t.to_csv());
    Ok(Artifact {
        primary,
        extras: vec![("events.json", events_json(&t))],
    })
}

pub fn linearize(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Csv, Format::Json])?;
    let m = model_of(cfg)?;
    let alpha = cfg.alpha()?;
    let t = trajectory(cfg, &m, alpha)?;
    let v = integrate_linearized(&CauchyProblem::new(&m, cfg.p()?, alpha)?, &t)?;
    let s = &v.samples;
    if cfg.format == Format::Json {
        return Ok(json_doc(
            cfg,
            &json!({ "r": s.r, "v": s.x, "vprime": s.dx, "first_zero": v.first_zero }),
        ));
    }
    let rows = (0..s.r.len()).map(|i| format!("{},{},{}", s.r[i], s.x[i], s.dx[i]));
    let mut primary = csv_doc(cfg, "r,v,vprime", rows);
    primary.insert_str(
        config_line(cfg).len(),
        &format!("# first_zero: {}\n", opt(v.first_zero)),
    );
    Ok(Artifact {
        primary,
        extras: Vec::new(),
    })
}

/// Refusals are recorded in place; numerical failures abort the command.
fn item<T: Serialize>(r: lef_core::Result<T>) -> Result<Value, CliError> {
    match r {
        Ok(v) => Ok(json!({ "ok": v })),
        Err(e) if e.is_refusal() => Ok(json!({ "refused": e.to_string() })),
        Err(e) => Err(e.into()),
    }
}

pub fn functionals(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    let p = cfg.p()?;
    let r_hi = cfg.window[1];
    let count = cfg.grid_count;
    let mut out = json!({
        "a_convexity": item(functionals::a_convexity(&m, p, r_hi, count))?,
        "g_lambda_property": item(functionals::g_lambda_property(&m, p, r_hi, count))?,
        "lambda_sufficient_condition": item(functionals::lambda_sufficient_condition(&m, r_hi, count))?,
        "sobolev": item(functionals::sobolev_fnp(&m, p))?,
    });
    if let Some(alpha) = cfg.alpha {
        let t = trajectory(cfg, &m, alpha)?;
        let prof = functionals::pohozaev_profile(&t, &m)?;
        let last = prof.r.len() - 1;
        out["pohozaev"] = json!({
            "monotone": prof.monotone,
            "k_nonpositive": prof.k_nonpositive,
            "p_at_r_max": prof.p(last),
        });
        out["h1"] = json!(functionals::h1_energy_growth(&t, &m)?.in_h1);
        out["l2"] = json!(functionals::l2_growth(&t, &m)?.in_h1);
    }
    Ok(json_doc(cfg, &out))
}

pub fn spectrum(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json, Format::Csv])?;
    let m = model_of(cfg)?;
    let manifold = spectrum::lambda1_manifold(&m)?;
    if cfg.format == Format::Csv {
        let rows = manifold.evidence.iter().map(|(r, v)| format!("{r},{v}"));
        return Ok(Artifact {
            primary: csv_doc(cfg, "R,lambda1", rows),
            extras: Vec::new(),
        });
    }
    let radius = cfg.radius.unwrap_or(1.0);
    let mut out = json!({
        "lambda1_ball": spectrum::lambda1_ball(&m, radius, cfg.grid_count)?,
        "grigoryan": spectrum::grigoryan_bound(&m, radius)?,
        "lambda1_manifold": manifold,
    });
    if let Some(alpha) = cfg.alpha {
        let t = integrate(
            &CauchyProblem::new(&m, cfg.p()?, alpha)?,
            cfg.r_max.max(radius),
            cfg.tol,
        )?;
        out["mu1"] = json!(spectrum::mu1_stability(&m, &t, radius, cfg.grid_count)?);
    }
    Ok(json_doc(cfg, &out))
}

fn classifier<'a>(cfg: &RunConfig, m: &'a PsiModel) -> Result<Classifier<'a>, CliError> {
    Ok(Classifier::new(m, cfg.p()?, policy(cfg))?)
}

pub fn stability(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    let c = classifier(cfg, &m)?;
    let v = c.classify(cfg.alpha()?)?;
    Ok(json_doc(cfg, &json!({ "lambda1": c.lambda1().value, "verdict": v })))
}

pub fn alpha0(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    let c = classifier(cfg, &m)?;
    Ok(json_doc(cfg, &c.find_alpha0(cfg.tol_alpha)?))
}

pub fn groundstate(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    Ok(json_doc(
        cfg,
        &classify::ground_state_alpha(&m, cfg.p()?, cfg.tol_alpha, cfg.r_horizon)?,
    ))
}

pub fn asymptotics(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    let t = trajectory(cfg, &m, cfg.alpha()?)?;
    Ok(json_doc(cfg, &classify::check_asymptotics(&t, &m, None)?))
}

pub fn ordering(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Json])?;
    let m = model_of(cfg)?;
    let c = classifier(cfg, &m)?;
    Ok(json_doc(cfg, &classify::ordering_check(&c, cfg.alphas()?)?))
}

pub fn table(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Text, Format::Json])?;
    let m = model_of(cfg)?;
    let p = cfg.p()?;
    let alphas = cfg.alphas()?;
    if classify::is_euclidean(&m) {
        let rows = classify::euclidean_expectations(m.n(), p)?;
        if cfg.format == Format::Json {
            return Ok(json_doc(cfg, &json!({ "euclidean": true, "rows": rows })));
        }
        let mut out = config_line(cfg);
        let _ = writeln!(
            out,
            "flat model: expected entries only (lambda_1 = 0, no numerical classification)"
        );
        for r in rows {
            let _ = writeln!(out, "{:<45} {:?}", r.property, r.expected);
        }
        return Ok(Artifact {
            primary: out,
            extras: Vec::new(),
        });
    }
    let c = classifier(cfg, &m)?;
    let t = classify::regime_table(&c, alphas)?;
    if cfg.format == Format::Json {
        return Ok(json_doc(cfg, &t));
    }
    Ok(Artifact {
        primary: config_line(cfg) + &t.render(),
        extras: Vec::new(),
    })
}

pub fn sweep(cfg: &RunConfig) -> CmdResult {
    cfg.formats(&[Format::Csv, Format::Json])?;
    let m = model_of(cfg)?;
    match cfg.sweep_over.unwrap_or(SweepAxis::Alpha) {
        SweepAxis::Alpha => {
            let c = classifier(cfg, &m)?;
            let alphas = cfg.alphas()?;
            let rows: Vec<lef_core::Result<Value>> = {
                use rayon::prelude::*;
                alphas
                    .par_iter()
                    .map(|&a| {
                        let t = c.trajectory(a)?;
                        let v = c.classify_trajectory(&t)?;
                        let last = v.evidence.last().copied();
                        Ok(json!({
                            "alpha": a,
                            "verdict": v.verdict,
                            "R": last.map(|e| e.0),
                            "mu1": last.map(|e| e.1),
                            "u_zeros": t.u_zeros().len(),
                            "outside_radius": classify::stable_outside_compact(&t, c.lambda1().value)?,
                        }))
                    })
                    .collect()
            };
            let rows = rows.into_iter().collect::<lef_core::Result<Vec<_>>>()?;
            if cfg.format == Format::Json {
                return Ok(json_doc(cfg, &rows));
            }
            let lines = rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r["alpha"],
                    r["verdict"].as_str().unwrap_or(""),
                    opt(r["R"].as_f64()),
                    opt(r["mu1"].as_f64()),
                    r["u_zeros"],
                    opt(r["outside_radius"].as_f64())
                )
            });
            Ok(Artifact {
                primary: csv_doc(cfg, "alpha,verdict,R,mu1,u_zeros,outside_radius", lines),
                extras: Vec::new(),
            })
        }
        SweepAxis::Radius => {
            let radii = cfg.radii.clone().ok_or_else(|| FieldError {
                field: "radii",
                message: "required by `sweep` over radius".into(),
            })?;
            let traj = match cfg.alpha {
                Some(a) => Some(integrate(
                    &CauchyProblem::new(&m, cfg.p()?, a)?,
                    cfg.r_max.max(radii[radii.len() - 1]),
                    cfg.tol,
                )?),
                None => None,
            };
            let rows: Vec<lef_core::Result<(f64, f64, Option<f64>)>> = {
                use rayon::prelude::*;
                radii
                    .par_iter()
                    .map(|&r| {
                        let l = spectrum::lambda1_ball(&m, r, cfg.grid_count)?.value;
                        let mu = match &traj {
                            Some(t) => Some(spectrum::mu1_stability(&m, t, r, cfg.grid_count)?.value),
                            None => None,
                        };
                        Ok((r, l, mu))
                    })
                    .collect()
            };
            let rows = rows.into_iter().collect::<lef_core::Result<Vec<_>>>()?;
            if cfg.format == Format::Json {
                let v: Vec<Value> = rows
                    .iter()
                    .map(|(r, l, mu)| json!({ "R": r, "lambda1": l, "mu1": mu }))
                    .collect();
                return Ok(json_doc(cfg, &v));
            }
            let lines = rows.iter().map(|(r, l, mu)| format!("{r},{l},{}", opt(*mu)));
            Ok(Artifact {
                primary: csv_doc(cfg, "R,lambda1,mu1", lines),
                extras: Vec::new(),
            })
        }
    }
}
