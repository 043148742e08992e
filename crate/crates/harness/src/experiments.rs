//! Named experiments. Each declares its parameters and writes CSV and JSON
//! files through a [`RunOutput`].

use std::sync::Arc;

use lplab::bellman::{check_suboptimality, occupation_dominates, solve_bellman_1d, BellmanProblem};
use lplab::coeffs::{CoefficientField, OperatorClass, OperatorSpec};
use lplab::domain::{Domain, GridSpec, Mesh, Point};
use lplab::estimates::{distribution_function, fit_tail_exponent, resolve_gamma, verify_identity_22};
use lplab::exact::{
    decay_rate, degenerate_sigma, exit_value_38, gamma_of_eps, radial_profile, resolvent_l1_norm_56, RADIAL_EVAL,
    RADIAL_OUTER,
};
use lplab::fd::{apply_operator, solve_elliptic, solve_parabolic, DriftScheme, GridFunction};
use lplab::linalg::Sym2;
use lplab::output::{fmt_num, CsvTable};
use lplab::quadrature::CellQuadrature;
use lplab::resolvent::{check_dichotomy, corollary_lower_bound, lambda_of_mu, mu_theta, Branch, DriftProfile, TestBank};
use lplab::sde::{check_occupation_bound, simulate_occupation, simulate_paths, Functional, SimConfig};
use lplab::suite::{locked_suite, SuitePair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Kind, ParamSpec};
use crate::report::{Manifest, RunOutput};
use crate::sweep::{convergence_sweep, Sample};
use crate::{HarnessError, Result};

type Runner = fn(&ExperimentConfig, &mut RunOutput) -> Result<()>;

pub struct Experiment {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub about: &'static str,
    params: fn() -> Vec<ParamSpec>,
    run: Runner,
}

impl Experiment {
    pub fn params(&self) -> Vec<ParamSpec> {
        (self.params)()
    }
}

pub fn registry() -> &'static [Experiment] {
    &REGISTRY
}

/// Looks an experiment up by name or alias.
pub fn find(name: &str) -> Result<&'static Experiment> {
    REGISTRY.iter().find(|e| e.name == name || e.aliases.contains(&name)).ok_or_else(|| {
        let names: Vec<_> = REGISTRY.iter().map(|e| e.name).collect();
        HarnessError::Validation(format!("unknown experiment `{name}` (available: {})", names.join(", ")))
    })
}

/// Runs the configured experiment into `config.out` and writes the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    let exp = find(&config.experiment)?;
    let mut out = RunOutput::create(&config.out)?;
    (exp.run)(config, &mut out).map_err(|e| e.context(exp.name))?;
    out.finish(config)
}

static REGISTRY: [Experiment; 12] = [
    Experiment {
        name: "remark33-exit",
        aliases: &["remark33"],
        about: "degenerate radial example: closed form, radial profile, FD solve and optional Monte Carlo",
        params: remark33_params,
        run: remark33_exit,
    },
    Experiment {
        name: "occupation-bound",
        aliases: &["occupation"],
        about: "Monte Carlo occupation bound (∫ f^γ)^{1/γ} <= N E ∫ f(x_t) dt",
        params: occupation_params,
        run: occupation_bound,
    },
    Experiment {
        name: "hessian-gamma",
        aliases: &["hessian"],
        about: "Hessian bound over the locked suite under grid refinement",
        params: suite_params,
        run: hessian_gamma,
    },
    Experiment {
        name: "gradient-gamma",
        aliases: &["gradient"],
        about: "gradient bound over the locked suite under grid refinement",
        params: suite_params,
        run: gradient_gamma,
    },
    Experiment {
        name: "identity-22",
        aliases: &["identity"],
        about: "residual of the discrete nondivergence identity across grid levels",
        params: identity_params,
        run: identity_22,
    },
    Experiment {
        name: "bellman-compare",
        aliases: &["bellman"],
        about: "Bellman solution against randomized admissible linear operators",
        params: bellman_params,
        run: bellman_compare,
    },
    Experiment {
        name: "dichotomy-56",
        aliases: &["dichotomy"],
        about: "resolvent norm of the sign-drift operator across mu",
        params: dichotomy_params,
        run: dichotomy_56,
    },
    Experiment {
        name: "mu-theta-table",
        aliases: &["mu-theta"],
        about: "mu_theta(lambda) of a drift profile and the resulting lambda(mu)",
        params: mu_theta_params,
        run: mu_theta_table,
    },
    Experiment {
        name: "tail-exponent",
        aliases: &["tail"],
        about: "distribution function of -Lu for a suite pair and its fitted tail exponent",
        params: tail_params,
        run: tail_exponent,
    },
    Experiment {
        name: "exact-tables",
        aliases: &["exact"],
        about: "closed-form tables of the radial and sign-drift examples",
        params: exact_params,
        run: exact_tables,
    },
    Experiment {
        name: "convergence",
        aliases: &["sweep"],
        about: "convergence sweep with observed orders (elliptic, heat, mc-exit)",
        params: convergence_params,
        run: convergence,
    },
    Experiment {
        name: "list",
        aliases: &[],
        about: "writes the experiment registry and parameters",
        params: Vec::new,
        run: list,
    },
];

fn p(key: &'static str, kind: Kind, default: Value, help: &'static str) -> ParamSpec {
    ParamSpec { key, kind, default, help }
}

fn num(x: f64) -> Result<String> {
    Ok(fmt_num(x)?)
}

fn linear_spec(coeffs: CoefficientField, delta: f64, k: f64) -> Result<OperatorSpec> {
    Ok(OperatorSpec::new(coeffs, delta, k, OperatorClass::DriftBound)?)
}

fn indicator(center: Point, r: f64) -> impl Fn(f64, &Point) -> f64 + Send + Sync + Clone {
    move |_, x| if (x[0] - center[0]).hypot(x[1] - center[1]) < r { 1.0 } else { 0.0 }
}

fn value_at(u: &GridFunction, t: f64, x: &Point) -> Result<f64> {
    u.at(t, x).ok_or_else(|| HarnessError::Validation(format!("no grid node at {x:?}")))
}

const SHIFT: Point = [0.5, 0.0];

fn radial_sim(eps: f64, dt: f64, paths: usize, seed: u64) -> Result<SimConfig> {
    let coeffs = CoefficientField::radial_degenerate(eps, SHIFT);
    Ok(SimConfig::from_coefficients(&coeffs, Domain::ball(RADIAL_OUTER, &SHIFT)?, 1.0 - eps, 0.0, dt, paths, seed)
        .with_start(0.0, [0.0, 0.0])
        .with_sigma(move |_, x| degenerate_sigma(&[x[0] - SHIFT[0], x[1] - SHIFT[1]], eps)))
}

fn remark33_params() -> Vec<ParamSpec> {
    vec![
        p("eps", Kind::Float, json!(0.5), "degeneracy of a = I - eps ŷŷ^T"),
        p("r", Kind::Float, json!(0.25), "radius of the source disk G"),
        p("h", Kind::Float, json!(1.0 / 128.0), "FD grid step"),
        p("paths", Kind::Int, json!(0), "Monte Carlo paths (0 skips the simulation)"),
        p("dt", Kind::Float, json!(1e-4), "Monte Carlo time step"),
    ]
}

fn remark33_exit(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let (eps, r, h) = (cfg.f64("eps")?, cfg.f64("r")?, cfg.f64("h")?);
    let closed = exit_value_38(eps, r)?;
    let profile = radial_profile(eps, r, RADIAL_EVAL)?;
    let gamma = gamma_of_eps(eps)?.gamma;
    let spec = linear_spec(CoefficientField::radial_degenerate(eps, SHIFT), 1.0 - eps, 0.0)?;
    let g = indicator(SHIFT, r);
    let (u, _) = solve_elliptic(
        &spec,
        &Domain::ball(RADIAL_OUTER, &SHIFT)?,
        &|t: f64, x: &Point| -g(t, x),
        &|_: f64, _: &Point| 0.0,
        &GridSpec::new(2, h)?,
    )?;
    let fd = value_at(&u, 0.0, &[0.0, 0.0])?;
    let mut header = vec!["eps", "r", "gamma", "h", "closed_form", "profile", "fd_value", "fd_rel_error"];
    let mut row = vec![eps, r, gamma, h, closed, profile, fd, (fd - closed).abs() / closed];
    let paths = cfg.usize("paths")?;
    let mut summary = json!({ "closed_form": closed, "profile": profile, "fd_value": fd, "gamma": gamma });
    if paths > 0 {
        let sim = radial_sim(eps, cfg.f64("dt")?, paths, cfg.seed)?;
        let (_, est) = simulate_occupation(&sim, &[Functional::plain(&g)])?;
        header.extend(["mc_mean", "mc_stderr", "mc_z"]);
        row.extend([est[0].mean, est[0].stderr, (est[0].mean - closed) / est[0].stderr]);
        summary["monte_carlo"] = serde_json::to_value(est[0])?;
    }
    let mut t = CsvTable::new(header);
    t.push_numbers(&row)?;
    out.write_csv("remark33_exit.csv", &t)?;
    out.write_json("summary.json", &summary)
}

fn occupation_params() -> Vec<ParamSpec> {
    vec![
        p("example", Kind::Choice(&["remark33", "ball", "cylinder"]), json!("remark33"), "diffusion and f"),
        p("paths", Kind::Int, json!(10000), "number of paths"),
        p("dt", Kind::Float, json!(1e-3), "time step"),
        p("gamma", Kind::OptFloat, json!(null), "exponent; defaults to gamma(eps) for remark33 and 1/2 otherwise"),
        p("eps", Kind::Float, json!(0.5), "remark33: degeneracy"),
        p("r", Kind::FloatList, json!([0.125, 0.25, 0.375]), "remark33: source radii"),
        p("domain", Kind::Float, json!(1.0), "ball/cylinder: radius of the domain"),
        p("cells", Kind::Int, json!(400), "quadrature cells per diameter for the left side"),
        p("per_path", Kind::Bool, json!(false), "also write the per-path exit table"),
    ]
}

fn occupation_bound(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let (paths, dt, cells) = (cfg.usize("paths")?, cfg.f64("dt")?, cfg.usize("cells")?);
    let example = cfg.str("example")?;
    let mut table = CsvTable::new(["example", "r", "gamma", "mean", "stderr", "lhs", "fitted_N", "fitted_N_stderr", "inconclusive"]);
    let mut reports = Vec::new();
    let (ensemble, rows) = if example == "remark33" {
        let eps = cfg.f64("eps")?;
        let gamma = cfg.opt_f64("gamma")?.unwrap_or(gamma_of_eps(eps)?.gamma);
        let radii = cfg.list("r")?;
        let fs: Vec<_> = radii.iter().map(|&r| indicator(SHIFT, r)).collect();
        let fns: Vec<Functional<'_>> = fs.iter().map(|f| Functional::plain(f)).collect();
        let (ens, ests) = simulate_occupation(&radial_sim(eps, dt, paths, cfg.seed)?, &fns)?;
        let domain = Domain::ball(RADIAL_OUTER, &SHIFT)?;
        let mut rows = Vec::new();
        for ((&r, f), est) in radii.iter().zip(&fs).zip(&ests) {
            rows.push((r, gamma, *est, check_occupation_bound(f, est, gamma, &domain, cells)?));
        }
        (ens, rows)
    } else {
        let radius = cfg.f64("domain")?;
        let gamma = cfg.opt_f64("gamma")?.unwrap_or(0.5);
        let domain = if example == "ball" {
            Domain::ball(radius, &[0.0, 0.0])?
        } else {
            Domain::standard_cylinder(radius, 0.0, &[0.0])?
        };
        let one = |_: f64, _: &Point| 1.0;
        let (ens, ests) = simulate_occupation(&SimConfig::laplacian(domain.clone(), dt, paths, cfg.seed), &[Functional::plain(&one)])?;
        let rep = check_occupation_bound(&one, &ests[0], gamma, &domain, cells)?;
        (ens, vec![(radius, gamma, ests[0], rep)])
    };
    for (r, gamma, est, rep) in rows {
        table.push_cells(vec![
            example.to_string(),
            num(r)?,
            num(gamma)?,
            num(est.mean)?,
            num(est.stderr)?,
            num(rep.lhs)?,
            if rep.inconclusive { "inf".into() } else { num(rep.fitted_n)? },
            match rep.stderr {
                Some(s) => num(s)?,
                None => String::new(),
            },
            u8::from(rep.inconclusive).to_string(),
        ])?;
        reports.push(json!({ "r": r, "estimate": est, "bound": rep }));
    }
    out.write_csv("occupation.csv", &table)?;
    if cfg.bool("per_path")? {
        out.write_with("paths.csv", |b| ensemble.summary_csv(b))?;
    }
    out.write_json("summary.json", &json!({ "example": example, "capped_paths": ensemble.n_capped(), "reports": reports }))
}

fn suite_params() -> Vec<ParamSpec> {
    vec![
        p("gamma", Kind::Float, json!(0.5), "exponent on the left side"),
        p("levels", Kind::Int, json!(2), "number of grid levels (successive halvings)"),
        p("pair", Kind::Text, json!("all"), "suite pair name, or all"),
    ]
}

fn selected_pairs(cfg: &ExperimentConfig) -> Result<Vec<SuitePair>> {
    let want = cfg.str("pair")?;
    let suite = locked_suite();
    if want == "all" {
        return Ok(suite);
    }
    let names: Vec<_> = suite.iter().map(|p| p.name).collect();
    let picked: Vec<_> = suite.into_iter().filter(|p| p.name == want).collect();
    if picked.is_empty() {
        return Err(HarnessError::Validation(format!("unknown suite pair `{want}` (available: {})", names.join(", "))));
    }
    Ok(picked)
}

fn suite_bound(cfg: &ExperimentConfig, out: &mut RunOutput, hessian: bool) -> Result<()> {
    let gamma = cfg.f64("gamma")?;
    let levels = cfg.usize("levels")?;
    if levels == 0 {
        return Err(HarnessError::Validation("levels must be at least 1".into()));
    }
    let mut table = CsvTable::new(["pair", "h", "gamma", "lhs", "rhs", "fitted_N"]);
    let mut summary = Vec::new();
    for pair in selected_pairs(cfg)? {
        let mut fitted = Vec::new();
        for refine in 0..levels as u32 {
            let b = pair.bounds(refine, gamma).map_err(|e| HarnessError::from(e).context(pair.name))?;
            let rep = if hessian { b.hessian } else { b.gradient };
            table.push_cells(vec![pair.name.into(), num(b.h)?, num(gamma)?, num(rep.lhs)?, num(rep.rhs())?, num(rep.fitted_n)?])?;
            fitted.push(rep.fitted_n);
        }
        let change = (fitted.len() >= 2).then(|| (fitted[fitted.len() - 1] / fitted[fitted.len() - 2] - 1.0).abs());
        summary.push(json!({
            "pair": pair.name,
            "fitted_N": fitted,
            "last_halving_change": change,
            "stable": change.map(|c| c < 0.10),
        }));
    }
    let name = if hessian { "hessian" } else { "gradient" };
    out.write_csv(&format!("{name}.csv"), &table)?;
    out.write_json("summary.json", &json!({ "bound": name, "gamma": gamma, "pairs": summary }))
}

fn hessian_gamma(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    suite_bound(cfg, out, true)
}

fn gradient_gamma(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    suite_bound(cfg, out, false)
}

fn identity_params() -> Vec<ParamSpec> {
    vec![
        p("function", Kind::Choice(&["x1", "affine", "smooth"]), json!("smooth"), "test function u"),
        p("operator", Kind::Choice(&["laplace", "variable"]), json!("variable"), "operator in the identity"),
        p("levels", Kind::FloatList, json!([0.0625, 0.03125, 0.015625]), "grid steps, coarse to fine"),
    ]
}

fn identity_22(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let spec = match cfg.str("operator")? {
        "laplace" => linear_spec(CoefficientField::laplacian(2), 1.0, 0.0)?,
        _ => linear_spec(
            CoefficientField::new(
                2,
                |_, x| Sym2::new(1.0 + 0.3 * x[0].sin(), 0.2 * x[1].cos(), 1.0 + 0.2 * x[0] * x[1]),
                |_, x| [0.5 * x[1], -0.4],
                |_, x| 1.0 + x[0] * x[0],
            ),
            0.5,
            3.0,
        )?,
    };
    let u: fn(f64, &Point) -> f64 = match cfg.str("function")? {
        "x1" => |_, x| x[0],
        "affine" => |_, x| 0.5 + x[0] - 2.0 * x[1],
        _ => |_, x| (1.3 * x[0]).sin() * (0.7 * x[1]).cos() + 0.5 * x[0] * x[1],
    };
    let ball = Domain::ball(1.0, &[0.0, 0.0])?;
    let table = convergence_sweep(&cfg.list("levels")?, |h| {
        let mesh = Arc::new(Mesh::new(&ball, &GridSpec::new(2, h)?)?);
        Ok(vec![Sample::exact("residual", verify_identity_22(&GridFunction::from_field(mesh, &u), &spec)?, 0.0)])
    })?;
    out.write_csv("identity.csv", &table.to_csv()?)?;
    out.write_json("summary.json", &table)
}

fn bellman_params() -> Vec<ParamSpec> {
    vec![
        p("delta", Kind::Float, json!(0.5), "ellipticity: a ranges over [delta, 1/delta]"),
        p("cap_k", Kind::Float, json!(1.0), "drift bound K"),
        p("grid", Kind::Float, json!(1.0 / 32.0), "spatial step h"),
        p("k", Kind::OptFloat, json!(null), "time step; defaults to h/2"),
        p("operators", Kind::Int, json!(20), "number of random linear operators"),
        p("paths", Kind::Int, json!(0), "Monte Carlo paths per operator (0 skips the occupation check)"),
        p("dt", Kind::Float, json!(1e-3), "Monte Carlo time step"),
    ]
}

/// Piecewise-constant coefficients on an 8×8 space-time checkerboard of `C_{2,1}`.
fn random_linear(rng: &mut ChaCha8Rng, delta: f64, k: f64) -> Result<OperatorSpec> {
    let cells = 8;
    let a: Vec<f64> = (0..cells * cells).map(|_| rng.random_range(delta..=1.0 / delta)).collect();
    let b: Vec<f64> = (0..cells * cells).map(|_| if k > 0.0 { rng.random_range(-k..=k) } else { 0.0 }).collect();
    let cell = move |t: f64, x: &Point| {
        let i = (((x[0] + 1.0) / 2.0 * cells as f64).floor() as i64).clamp(0, cells as i64 - 1) as usize;
        let j = ((t / 2.0 * cells as f64).floor() as i64).clamp(0, cells as i64 - 1) as usize;
        j * cells + i
    };
    let coeffs = CoefficientField::new(1, move |t, x| Sym2::scalar(a[cell(t, x)]), move |t, x| [b[cell(t, x)], 0.0], |_, _| 0.0)
        .time_dependent(true);
    linear_spec(coeffs, delta, k)
}

fn bellman_compare(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let (delta, k, h) = (cfg.f64("delta")?, cfg.f64("cap_k")?, cfg.f64("grid")?);
    let dt = cfg.opt_f64("k")?.unwrap_or(h / 2.0);
    let dom = Domain::cylinder(2.0, 1.0, 0.0, &[0.0])?;
    let f = |t: f64, x: &Point| (1.0 + t) * (1.0 - x[0] * x[0]).max(0.0) + if x[0] > 0.3 { 0.5 } else { 0.0 };
    let problem = BellmanProblem::from_field(delta, k, &f, &dom, &GridSpec::parabolic(1, h, dt)?)?;
    let (u, report) = solve_bellman_1d(&problem)?;
    let (t0, x0) = dom.start_point();
    let u00 = value_at(&u, t0, &x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let paths = cfg.usize("paths")?;
    let mut header = vec!["operator", "holds", "margin", "tolerance", "worst_t", "worst_x"];
    if paths > 0 {
        header.extend(["mc_mean", "mc_stderr", "mc_dominates"]);
    }
    let mut table = CsvTable::new(header);
    let mut holds = 0;
    let mut dominated = 0;
    let n = cfg.usize("operators")?;
    for i in 0..n {
        let spec = random_linear(&mut rng, delta, k)?;
        let (s, _) = check_suboptimality(&u, &spec, &problem.f)?;
        holds += usize::from(s.holds);
        let mut row = vec![
            i.to_string(),
            u8::from(s.holds).to_string(),
            num(s.margin)?,
            num(s.tolerance)?,
            num(s.worst.0)?,
            num(s.worst.1[0])?,
        ];
        if paths > 0 {
            let sim = SimConfig::from_coefficients(&spec.coeffs, dom.clone(), delta, k, cfg.f64("dt")?, paths, cfg.seed + i as u64);
            let (_, est) = simulate_occupation(&sim, &[Functional::plain(&f)])?;
            let ok = occupation_dominates(u00, &est[0]);
            dominated += usize::from(ok);
            row.extend([num(est[0].mean)?, num(est[0].stderr)?, u8::from(ok).to_string()]);
        }
        table.push_cells(row)?;
    }
    out.write_csv("margins.csv", &table)?;
    let nonneg = u.values().iter().all(|&v| v >= 0.0);
    out.write_json(
        "summary.json",
        &json!({
            "u00": u00,
            "nonnegative": nonneg,
            "holds": holds,
            "operators": n,
            "occupation_dominates": (paths > 0).then_some(dominated),
            "solver": report,
        }),
    )
}

fn dichotomy_params() -> Vec<ParamSpec> {
    vec![
        p("m", Kind::Float, json!(3.0), "drift magnitude M in b = -M sign(x)"),
        p("mu_grid", Kind::FloatList, json!([0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0]), "values of mu"),
        p("p", Kind::OptFloat, json!(null), "norm exponent; defaults to d (elliptic) or d + 1 (parabolic)"),
        p("branch", Kind::Choice(&["elliptic", "parabolic"]), json!("elliptic"), "selects the default exponent"),
        p("width", Kind::Float, json!(0.05), "hat width as a fraction of min(1/nu, 1/M)"),
        p("span", Kind::Float, json!(12.0), "half-length of the interval in decay lengths 1/nu"),
    ]
}

fn dichotomy_56(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let m = cfg.f64("m")?;
    if !(m > 0.0) {
        return Err(HarnessError::Validation(format!("M must be positive, got {m}")));
    }
    let branch = if cfg.str("branch")? == "parabolic" { Branch::Parabolic } else { Branch::Elliptic };
    let p = cfg.opt_f64("p")?.unwrap_or(branch.q_exp(1));
    let (c, span) = (cfg.f64("width")?, cfg.f64("span")?);
    let mus = cfg.list("mu_grid")?;
    let spec = linear_spec(CoefficientField::sign_drift(m), 1.0, m)?;
    let width = move |mu: f64| -> lplab::Result<(f64, f64)> {
        let nu = decay_rate(m, mu)?;
        Ok((nu, c * (1.0 / nu).min(1.0 / m)))
    };
    let plan = move |mu: f64| -> lplab::Result<(Domain, GridSpec)> {
        let (nu, w) = width(mu)?;
        let h = w / 5.0;
        let r = ((span / nu) / h).ceil() * h + 0.5 * h;
        Ok((Domain::ball(r, &[0.0])?, GridSpec::new(1, h)?))
    };
    let bank = move |mu: f64| TestBank::point_masses([0.0, 0.0], &[width(mu).map(|x| x.1).unwrap_or(f64::NAN)]);
    let report = check_dichotomy(&spec, p, m, &mus, &plan, &bank)?;
    out.write_with("dichotomy.csv", |b| report.to_csv(b))?;
    let closed: Vec<f64> = mus.iter().map(|&mu| resolvent_l1_norm_56(m, mu).map(|n| mu * n)).collect::<lplab::Result<_>>()?;
    out.write_json(
        "dichotomy.json",
        &json!({ "p": p, "branch": cfg.str("branch")?, "report": report, "closed_form_mu_ratio": closed }),
    )
}

fn mu_theta_params() -> Vec<ParamSpec> {
    vec![
        p("profile", Kind::Choice(&["unit-bump", "constant"]), json!("unit-bump"), "|b| = 2 on [0, 1], or |b| = M everywhere"),
        p("m", Kind::Float, json!(3.0), "constant profile: M"),
        p("theta", Kind::FloatList, json!([0.25, 0.5, 0.75]), "values of theta"),
        p("lambda", Kind::FloatList, json!([0.01, 0.1, 1.0, 10.0, 100.0]), "values of lambda"),
        p("branch", Kind::Choice(&["elliptic", "parabolic"]), json!("parabolic"), "q = d or d + 1"),
        p("cap_k", Kind::Float, json!(1.0), "K in lambda(mu)"),
        p("mu_grid", Kind::FloatList, json!([0.001, 0.1, 10.0, 1000.0]), "values of mu for lambda(mu)"),
    ]
}

fn mu_theta_table(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let profile = match cfg.str("profile")? {
        "constant" => DriftProfile::Constant(cfg.f64("m")?),
        _ => {
            let quad = CellQuadrature::new(1, [-1.0, 0.0], [3.0, 0.0], 1.0 / 128.0)?;
            DriftProfile::from_box(&quad, |x| if (0.0..=1.0).contains(&x[0]) { 2.0 } else { 0.0 })
        }
    };
    let branch = if cfg.str("branch")? == "parabolic" { Branch::Parabolic } else { Branch::Elliptic };
    let k = cfg.f64("cap_k")?;
    let thetas = cfg.list("theta")?;
    let mut mt = CsvTable::new(["theta", "lambda", "mu_theta"]);
    for &theta in &thetas {
        for &lambda in &cfg.list("lambda")? {
            mt.push_numbers(&[theta, lambda, mu_theta(&profile, theta, lambda, branch, 1)?])?;
        }
    }
    let mut lt = CsvTable::new(["theta", "mu", "lambda", "lower_bound"]);
    for &theta in &thetas {
        let f = |l: f64| mu_theta(&profile, theta, l, branch, 1).unwrap_or(f64::NAN);
        for &mu in &cfg.list("mu_grid")? {
            let lambda = lambda_of_mu(k, &f, mu)?;
            lt.push_numbers(&[theta, mu, lambda, corollary_lower_bound(k, 0.0, profile.sup(), mu)])?;
        }
    }
    out.write_csv("mu_theta.csv", &mt)?;
    out.write_csv("lambda_of_mu.csv", &lt)
}

fn tail_params() -> Vec<ParamSpec> {
    vec![
        p("pair", Kind::Text, json!("laplace-2d-bump"), "suite pair name"),
        p("refine", Kind::Int, json!(0), "grid halvings"),
        p("samples", Kind::Int, json!(16), "number of levels lambda"),
    ]
}

fn tail_exponent(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let pair = selected_pairs(cfg)?.remove(0);
    let u = pair.solve(cfg.usize("refine")? as u32)?;
    let field = apply_operator(&pair.spec, &u, DriftScheme::Auto).map(|v| -v);
    let top = field.values().iter().copied().fold(0.0, f64::max);
    let n = cfg.usize("samples")?;
    if n < 3 || !(top > 0.0) {
        return Err(HarnessError::Validation("need at least 3 levels and a positive -Lu".into()));
    }
    let lambdas: Vec<f64> = (0..n).map(|i| top * 0.05 * (19.0f64).powf(i as f64 / (n - 1) as f64)).collect();
    let mut tail = distribution_function(&field, &lambdas, &pair.outer)?;
    let (t0, x0) = pair.outer.start_point();
    tail.u00 = u.at(t0, &x0);
    let fit = fit_tail_exponent(&tail)?;
    let mut t = CsvTable::new(["lambda", "F"]);
    for (l, f) in tail.lambdas.iter().zip(&tail.f_values) {
        t.push_numbers(&[*l, *f])?;
    }
    out.write_csv("tail.csv", &t)?;
    out.write_json(
        "fit.json",
        &json!({ "pair": pair.name, "fit": fit, "u00": tail.u00, "checker_gamma": resolve_gamma(None, Some(&tail))? }),
    )
}

fn exact_params() -> Vec<ParamSpec> {
    vec![
        p("eps", Kind::FloatList, json!([0.1, 0.25, 0.5, 0.75, 0.9]), "degeneracies"),
        p("r", Kind::FloatList, json!([0.125, 0.25, 0.375]), "source radii"),
        p("m", Kind::FloatList, json!([0.0, 1.0, 3.0]), "drift magnitudes"),
        p("mu_grid", Kind::FloatList, json!([0.01, 0.1, 1.0, 10.0, 100.0]), "values of mu"),
    ]
}

fn exact_tables(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut radial = CsvTable::new(["eps", "r", "gamma", "u0"]);
    for &eps in &cfg.list("eps")? {
        for &r in &cfg.list("r")? {
            radial.push_numbers(&[eps, r, gamma_of_eps(eps)?.gamma, exit_value_38(eps, r)?])?;
        }
    }
    let mut sign = CsvTable::new(["M", "mu", "nu", "inv_nu2"]);
    for &m in &cfg.list("m")? {
        for &mu in &cfg.list("mu_grid")? {
            sign.push_numbers(&[m, mu, decay_rate(m, mu)?, resolvent_l1_norm_56(m, mu)?])?;
        }
    }
    out.write_csv("radial.csv", &radial)?;
    out.write_csv("sign_drift.csv", &sign)
}

fn convergence_params() -> Vec<ParamSpec> {
    vec![
        p("quantity", Kind::Choice(&["elliptic", "heat", "mc-exit"]), json!("elliptic"), "what to sweep"),
        p("levels", Kind::OptFloatList, json!(null), "grid steps h (or dt for mc-exit), coarse to fine"),
        p("paths", Kind::Int, json!(20000), "mc-exit: number of paths"),
    ]
}

fn sup_error(u: &GridFunction, exact: impl Fn(f64, &Point) -> f64) -> f64 {
    let mesh = u.mesh();
    let mut e = 0.0f64;
    for level in 0..mesh.n_levels() {
        let t = mesh.times().get(level).copied().unwrap_or(0.0);
        for node in 0..mesh.len() {
            if mesh.is_unknown_space(node) {
                e = e.max((u.get(level, node) - exact(t, &mesh.coords(node))).abs());
            }
        }
    }
    e
}

fn convergence(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let quantity = cfg.str("quantity")?;
    let levels = match cfg.opt_list("levels")? {
        Some(l) => l,
        None if quantity == "mc-exit" => vec![4e-3, 2e-3, 1e-3],
        None => vec![0.125, 0.0625, 0.03125],
    };
    let table = match quantity {
        "elliptic" => {
            let c = CoefficientField::new(2, |_, x| Sym2::new(1.0 + 0.25 * x[0], 0.1, 1.0), |_, _| [0.3, -0.2], |_, _| 0.5);
            let spec = linear_spec(c.clone(), 0.5, 1.0)?;
            let exact = |_: f64, x: &Point| (x[0] * 1.1).sin() * (x[1] * 0.9).cos() + x[0] * x[1];
            let rhs = move |t: f64, x: &Point| {
                let (sx, cx) = ((1.1 * x[0]).sin(), (1.1 * x[0]).cos());
                let (sy, cy) = ((0.9 * x[1]).sin(), (0.9 * x[1]).cos());
                let (ux, uy) = (1.1 * cx * cy + x[1], -0.9 * sx * sy + x[0]);
                let (uxx, uyy, uxy) = (-1.21 * sx * cy, -0.81 * sx * cy, -0.99 * cx * sy + 1.0);
                let (a, b) = (c.a(t, x), c.b(t, x));
                a.xx * uxx + 2.0 * a.xy * uxy + a.yy * uyy + b[0] * ux + b[1] * uy - c.c(t, x) * exact(t, x)
            };
            let dom = Domain::ball(1.0, &[0.0, 0.0])?;
            convergence_sweep(&levels, |h| {
                let (u, _) = solve_elliptic(&spec, &dom, &rhs, &exact, &GridSpec::new(2, h)?)?;
                Ok(vec![Sample::exact("sup_error", sup_error(&u, exact), 0.0), Sample::exact("u_origin", value_at(&u, 0.0, &[0.0, 0.0])?, 0.0)])
            })?
        }
        "heat" => {
            let spec = linear_spec(CoefficientField::laplacian(1), 1.0, 0.0)?;
            let dom = Domain::cylinder(1.0, 1.0, 0.0, &[0.0])?;
            let exact = |t: f64, x: &Point| (t - 1.0).exp() * x[0].sin();
            convergence_sweep(&levels, |h| {
                let gs = GridSpec::parabolic(1, h, h * h)?;
                let (u, _) = solve_parabolic(&spec, &dom, &|_: f64, _: &Point| 0.0, &exact, &gs)?;
                Ok(vec![Sample::exact("sup_error", sup_error(&u, exact), 0.0)])
            })?
        }
        _ => {
            let paths = cfg.usize("paths")?;
            let dom = Domain::ball(1.0, &[0.0])?;
            convergence_sweep(&levels, |dt| {
                let est = simulate_paths(&SimConfig::laplacian(dom.clone(), dt, paths, cfg.seed))?.mean_exit_time();
                Ok(vec![Sample::monte_carlo("mean_exit_time", est.mean, est.stderr, Some(0.5))])
            })?
        }
    };
    out.write_csv("sweep.csv", &table.to_csv()?)?;
    out.write_json("sweep.json", &json!({ "quantity": quantity, "table": table, "non_convergent": table.non_convergent() }))
}

fn list(_: &ExperimentConfig, out: &mut RunOutput) -> Result<()> {
    let mut t = CsvTable::new(["experiment", "aliases", "parameter", "default", "help"]);
    for e in registry().iter().filter(|e| e.name != "list") {
        for s in e.params() {
            t.push_cells(vec![
                e.name.into(),
                e.aliases.join(" "),
                s.key.into(),
                s.default.to_string().replace(',', " "),
                s.help.replace(',', ";"),
            ])?;
        }
    }
    out.write_csv("experiments.csv", &t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_aliases_are_unique() {
        let mut all: Vec<&str> = registry().iter().flat_map(|e| std::iter::once(e.name).chain(e.aliases.iter().copied())).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        assert_eq!(find("dichotomy").unwrap().name, "dichotomy-56");
        assert!(matches!(find("nope"), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn defaults_type_check() {
        for e in registry() {
            let cfg = ExperimentConfig::resolve(e.name, &e.params(), &crate::Overrides::default());
            assert!(cfg.is_ok(), "{}: {:?}", e.name, cfg.err());
        }
    }
}
