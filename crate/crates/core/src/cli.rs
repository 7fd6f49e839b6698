//! Command implementations behind the `zerodyn` binary.
//!
//! Every command loads a registered model (optionally reparameterized from a
//! JSON file), runs its analysis, writes machine-readable artifacts under the
//! output directory, and returns a process exit code:
//!
//! * 0 - all checks passed
//! * 1 - usage or configuration error
//! * 2 - an assumption or invariant failed
//! * 3 - integration aborted at runtime
//!
//! Identical configurations (including the seed) produce byte-identical
//! artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geomdiff::{involutivity_check, relative_degree};
use crate::model::{symmetry_residual, SystemModel};
use crate::normalform::normal_coordinates;
use crate::registry::{self, VerifyProfile};
use crate::report::{write_json, Check};
use crate::sampling::rng_from_seed;
use crate::sim::{simulate, zero_dynamics_compare, ControlPolicy, IntegratorConfig};
use crate::spacecraft::{modal_energy, SpacecraftParams, STABILITY_MARGIN};
use crate::verify::{gates, run_suite, SuiteConfig};

/// One fully-resolved run configuration (one flag per field).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    pub params_path: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub step: f64,
    pub horizon: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "spacecraft".into(),
            params_path: None,
            seed: 42,
            samples: 1000,
            step: 1e-3,
            horizon: 10.0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    fn load_params(&self) -> Result<Option<serde_json::Value>> {
        match &self.params_path {
            None => Ok(None),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read params file {}: {e}", path.display()))
                })?;
                let value = serde_json::from_str(&text).map_err(|e| {
                    Error::Config(format!("cannot parse params file {}: {e}", path.display()))
                })?;
                Ok(Some(value))
            }
        }
    }

    pub fn build_model(&self) -> Result<(SystemModel, VerifyProfile)> {
        let params = self.load_params()?;
        let model = registry::build_model(&self.model, params.as_ref())?;
        let profile = registry::verify_profile(&self.model)?;
        Ok((model, profile))
    }

    fn artifact(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalyzeReport {
    model: String,
    seed: u64,
    symmetry_ok: bool,
    involutive: bool,
    relative_degrees: Vec<usize>,
    total_relative_degree: usize,
    decoupling_rank: usize,
    assumption_ii_ok: bool,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

/// Check the structural assumptions of the model class at seeded sample
/// states and report them. Exit 2 when any assumption fails.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<i32> {
    let (model, _) = cfg.build_model()?;
    let dims = model.dims();
    let mut rng = rng_from_seed(cfg.seed);
    let mut checks = Vec::new();

    // system-matrix symmetry over the sample set
    let mut worst_sym = 0.0_f64;
    for _ in 0..cfg.samples {
        let xv = model.sample_box().sample(&mut rng);
        let st = model.state(xv)?;
        worst_sym = worst_sym.max(symmetry_residual(&model, &st.beta())?);
    }
    let mut sym = Check::from_residual("mass_symmetry", worst_sym, gates::SYMMETRY);
    sym.samples = cfg.samples;
    let symmetry_ok = sym.pass;
    checks.push(sym);

    // the system matrix may depend on x_beta only
    let pair_count = (cfg.samples / 4).max(8);
    let mut worst_dep = 0.0_f64;
    for _ in 0..pair_count {
        let mut a = model.sample_box().sample(&mut rng);
        let b = model.sample_box().sample(&mut rng);
        let ma = model.mass_at(&a.rows(dims.p(), dims.n_beta()).into())?;
        for i in 0..dims.p() {
            a[i] = b[i];
        }
        let mb = model.mass_at(&a.rows(dims.p(), dims.n_beta()).into())?;
        worst_dep = worst_dep.max(crate::blocklin::max_abs(&(ma - mb)));
    }
    let mut dep = Check::from_residual("mass_depends_on_beta_only", worst_dep, 0.0);
    dep.samples = pair_count;
    checks.push(dep);

    // involutivity of the input distribution
    let mut pts = vec![model.sample_box().center()];
    pts.extend((0..99.min(cfg.samples)).map(|_| model.sample_box().sample(&mut rng)));
    let inv = involutivity_check(&model, &pts)?;
    let mut inv_check = Check::from_flag("input_distribution_involutive", inv.involutive);
    inv_check.samples = inv.points_checked;
    checks.push(inv_check);

    // relative degrees at the box center, decoupling rank probed at 20 draws
    let rd = relative_degree(&model, &model.sample_box().center(), dims.n())?;
    let mut well_defined = rd.well_defined;
    for _ in 0..20 {
        let probe = model.sample_box().sample(&mut rng);
        let rd_probe = relative_degree(&model, &probe, dims.n())?;
        well_defined &= rd_probe.well_defined && rd_probe.r_i == rd.r_i;
    }
    let mut rd_check = Check::from_flag("decoupling_matrix_invertible", well_defined);
    rd_check.samples = 21;
    checks.push(rd_check);

    let assumption_ii_ok =
        dims.p() <= dims.s() && dims.s() <= rd.total && rd.total < dims.n();
    checks.push(Check::from_flag("dimension_chain_p_s_r_n", assumption_ii_ok));

    let decoupling_rank = crate::blocklin::numerical_rank(&rd.e);
    let report = AnalyzeReport {
        model: cfg.model.clone(),
        seed: cfg.seed,
        symmetry_ok,
        involutive: inv.involutive,
        relative_degrees: rd.r_i.clone(),
        total_relative_degree: rd.total,
        decoupling_rank,
        assumption_ii_ok,
        checks,
        artifacts: vec![path_string(&cfg.artifact("analyze.json"))],
    };
    write_json(&cfg.artifact("analyze.json"), &report)?;
    print_checks("analyze", &report.checks);
    Ok(if report.checks.iter().all(|c| c.pass) { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TransformReport {
    model: String,
    seed: u64,
    state: Vec<f64>,
    zeta: Vec<f64>,
    eta: Vec<f64>,
    n_block: Vec<Vec<f64>>,
    x_basis: Vec<Vec<f64>>,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Parse a comma-separated state; a full trajectory CSV row is accepted and
/// its state columns extracted.
pub fn parse_state(text: &str, dims: crate::model::Dimensions) -> Result<DVector<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("cannot parse state: {e}")))?;
    let n = dims.n();
    let row_len = 1 + n + 2 * dims.p() + dims.n_beta();
    if vals.len() == n {
        Ok(DVector::from_column_slice(&vals))
    } else if vals.len() == row_len {
        Ok(DVector::from_column_slice(&vals[1..=n]))
    } else {
        Err(Error::DimensionMismatch {
            expected: n,
            got: vals.len(),
        })
    }
}

/// Print the null basis and normal coordinates at one state.
pub fn cmd_transform(cfg: &RunConfig, state_text: &str) -> Result<i32> {
    let (model, _) = cfg.build_model()?;
    let xv = parse_state(state_text, model.dims())?;
    let st = model.state(xv.clone())?;
    let ns = normal_coordinates(&model, &st)?;
    let m = model.mass_at(&st.beta())?;
    let d = crate::blocklin::decompose(&m, model.dims().p())?;
    let nb = crate::blocklin::null_basis(&d)?;

    let report = TransformReport {
        model: cfg.model.clone(),
        seed: cfg.seed,
        state: xv.iter().copied().collect(),
        zeta: ns.zeta.iter().copied().collect(),
        eta: ns.eta.iter().copied().collect(),
        n_block: matrix_rows(&nb.n),
        x_basis: matrix_rows(&nb.x),
        checks: Vec::new(),
        artifacts: vec![path_string(&cfg.artifact("transform.json"))],
    };
    write_json(&cfg.artifact("transform.json"), &report)?;
    let bytes = crate::report::to_json_bytes(&report)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    Ok(0)
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EnergySummary {
    initial: f64,
    final_value: f64,
    min: f64,
    max: f64,
    local_maxima: Vec<f64>,
}

#[derive(Serialize)]
struct SimulateReport {
    model: String,
    seed: u64,
    policy: String,
    steps: usize,
    max_abs_output: f64,
    modal_energy: Option<EnergySummary>,
    aborted_at: Option<f64>,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

pub struct SimulatePolicy {
    pub kind: String,
    pub v: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
}

/// Integrate the closed loop and export the trajectory CSV plus a summary.
pub fn cmd_simulate(cfg: &RunConfig, opts: &SimulatePolicy) -> Result<i32> {
    let (model, _) = cfg.build_model()?;
    let dims = model.dims();
    let icfg = IntegratorConfig::new(cfg.step, cfg.horizon)?;

    let policy = match opts.kind.as_str() {
        "linearizing" => {
            let v = match &opts.v {
                Some(v) if v.len() == dims.p() => DVector::from_column_slice(v),
                Some(v) => {
                    return Err(Error::DimensionMismatch {
                        expected: dims.p(),
                        got: v.len(),
                    })
                }
                None => DVector::zeros(dims.p()),
            };
            ControlPolicy::linearizing_constant(v)
        }
        "open-loop" => {
            let tau = match &opts.tau {
                Some(t) if t.len() == dims.p() => DVector::from_column_slice(t),
                Some(t) => {
                    return Err(Error::DimensionMismatch {
                        expected: dims.p(),
                        got: t.len(),
                    })
                }
                None => DVector::zeros(dims.p()),
            };
            ControlPolicy::open_loop_constant(tau)
        }
        other => return Err(Error::Config(format!("unknown policy '{other}'"))),
    };

    let x0 = match &opts.x0 {
        Some(x) if x.len() == dims.n() => DVector::from_column_slice(x),
        Some(x) => {
            return Err(Error::DimensionMismatch {
                expected: dims.n(),
                got: x.len(),
            })
        }
        None => {
            let mut rng = rng_from_seed(cfg.seed);
            model.sample_box().sample(&mut rng) * 0.1
        }
    };

    let traj_path = cfg.artifact("trajectory.csv");
    let summary_path = cfg.artifact("summary.json");
    match simulate(&model, &x0, &policy, &icfg) {
        Ok(traj) => {
            std::fs::create_dir_all(&cfg.out_dir)?;
            let mut file = std::fs::File::create(&traj_path)?;
            traj.write_csv(&mut file)?;

            let mut max_abs_output = 0.0_f64;
            for st in &traj.states {
                max_abs_output = max_abs_output.max(model.output_at(st.as_vector())?.amax());
            }
            let energy = if cfg.model == "spacecraft" {
                let n_f = (dims.n() - 3) / 2;
                let params = match cfg.load_params()? {
                    Some(v) => registry::spacecraft_params_from_json(&v)?,
                    None => SpacecraftParams::default_with_modes(n_f),
                };
                let series: Vec<f64> = traj
                    .states
                    .iter()
                    .map(|st| {
                        let xv = st.as_vector();
                        modal_energy(
                            &params,
                            &xv.rows(3, n_f).into(),
                            &xv.rows(3 + n_f, n_f).into(),
                        )
                    })
                    .collect();
                let mut local_maxima = Vec::new();
                for k in 1..series.len().saturating_sub(1) {
                    if series[k] >= series[k - 1] && series[k] >= series[k + 1] {
                        local_maxima.push(series[k]);
                    }
                }
                Some(EnergySummary {
                    initial: series[0],
                    final_value: *series.last().unwrap(),
                    min: series.iter().cloned().fold(f64::INFINITY, f64::min),
                    max: series.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    local_maxima,
                })
            } else {
                None
            };

            let report = SimulateReport {
                model: cfg.model.clone(),
                seed: cfg.seed,
                policy: opts.kind.clone(),
                steps: traj.len() - 1,
                max_abs_output,
                modal_energy: energy,
                aborted_at: None,
                checks: Vec::new(),
                artifacts: vec![path_string(&traj_path), path_string(&summary_path)],
            };
            write_json(&summary_path, &report)?;
            println!("simulate: wrote {} steps to {}", traj.len() - 1, traj_path.display());
            Ok(0)
        }
        Err(Error::IntegrationAbort { t, source }) => {
            let report = SimulateReport {
                model: cfg.model.clone(),
                seed: cfg.seed,
                policy: opts.kind.clone(),
                steps: 0,
                max_abs_output: f64::NAN,
                modal_energy: None,
                aborted_at: Some(t),
                checks: Vec::new(),
                artifacts: vec![path_string(&summary_path)],
            };
            // NaN is not representable in JSON; report the abort time only.
            let mut sanitized = report;
            sanitized.max_abs_output = -1.0;
            write_json(&summary_path, &sanitized)?;
            eprintln!("simulate: aborted at t = {t}: {source}");
            Ok(3)
        }
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------------------
// zero-dynamics
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ZeroDynamicsReport {
    model: String,
    seed: u64,
    max_deviation: f64,
    eigenvalues: Vec<[f64; 2]>,
    stable: bool,
    /// Gap between the Schur-complement candidate right-hand side and the
    /// reduced closed form (spacecraft only).
    schur_form_deviation: Option<f64>,
    checks: Vec<Check>,
    artifacts: Vec<String>,
}

fn write_eta_csv(path: &Path, times: &[f64], etas: &[DVector<f64>]) -> Result<()> {
    use std::io::Write;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    let q = etas.first().map(|e| e.len()).unwrap_or(0);
    let mut header = String::from("t");
    for i in 0..q {
        header.push_str(&format!(",eta_{i}"));
    }
    writeln!(file, "{header}")?;
    for (t, eta) in times.iter().zip(etas) {
        let mut row = format!("{t:.16e}");
        for v in eta.iter() {
            row.push_str(&format!(",{v:.16e}"));
        }
        writeln!(file, "{row}")?;
    }
    Ok(())
}

/// Run the zero-dynamics comparison and stability analysis.
pub fn cmd_zero_dynamics(cfg: &RunConfig, eta0_text: Option<&str>) -> Result<i32> {
    let (model, profile) = cfg.build_model()?;
    let dims = model.dims();
    let icfg = IntegratorConfig::new(cfg.step, cfg.horizon)?;

    let eta0 = match eta0_text {
        Some(text) => {
            let vals: Vec<f64> = text
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("cannot parse eta0: {e}")))?;
            if vals.len() != dims.n_beta() {
                return Err(Error::DimensionMismatch {
                    expected: dims.n_beta(),
                    got: vals.len(),
                });
            }
            DVector::from_column_slice(&vals)
        }
        None => {
            let mut rng = rng_from_seed(cfg.seed);
            (model.sample_box().sample(&mut rng) * 0.1)
                .rows(dims.p(), dims.n_beta())
                .into()
        }
    };

    let cmp = match zero_dynamics_compare(&model, &eta0, &icfg) {
        Ok(cmp) => cmp,
        Err(e @ Error::IntegrationAbort { .. }) => {
            eprintln!("zero-dynamics: {e}");
            return Ok(3);
        }
        Err(e) => return Err(e),
    };

    // linearization spectrum of the reduced right-hand side at the origin
    let field = |eta: &DVector<f64>| {
        crate::normalform::zero_dynamics_rhs(&model, eta)
            .unwrap_or_else(|_| DVector::from_element(eta.len(), f64::NAN))
    };
    let jac =
        crate::geomdiff::numeric_jacobian(&field, &DVector::zeros(dims.n_beta()))?;
    let eigenvalues: Vec<[f64; 2]> = jac
        .complex_eigenvalues()
        .iter()
        .map(|l| [l.re, l.im])
        .collect();
    let stable = eigenvalues.iter().all(|l| l[0] < -STABILITY_MARGIN);

    let schur_dev = if profile.is_spacecraft {
        let n_f = (dims.n() - 3) / 2;
        let params = match cfg.load_params()? {
            Some(v) => registry::spacecraft_params_from_json(&v)?,
            None => SpacecraftParams::default_with_modes(n_f),
        };
        let zd = crate::spacecraft::zero_dynamics_spacecraft(
            &params,
            &eta0.rows(0, n_f).into(),
            &eta0.rows(n_f, n_f).into(),
            &icfg,
        )?;
        Some(zd.schur_form_deviation)
    } else {
        None
    };

    let closed_path = cfg.artifact("zero_dynamics_closed_form.csv");
    let sim_path = cfg.artifact("zero_dynamics_simulated.csv");
    write_eta_csv(&closed_path, &cmp.times, &cmp.closed_form)?;
    write_eta_csv(&sim_path, &cmp.times, &cmp.simulated)?;

    let gate = profile.zero_dynamics_gate.unwrap_or(1e-6);
    let mut checks = vec![Check::from_residual(
        "zero_dynamics_vs_constrained_simulation",
        cmp.max_deviation,
        gate,
    )];
    checks[0].samples = cmp.times.len();

    let report = ZeroDynamicsReport {
        model: cfg.model.clone(),
        seed: cfg.seed,
        max_deviation: cmp.max_deviation,
        eigenvalues,
        stable,
        schur_form_deviation: schur_dev,
        checks,
        artifacts: vec![
            path_string(&cfg.artifact("zero_dynamics.json")),
            path_string(&closed_path),
            path_string(&sim_path),
        ],
    };
    write_json(&cfg.artifact("zero_dynamics.json"), &report)?;
    print_checks("zero-dynamics", &report.checks);
    println!(
        "zero-dynamics: max deviation {:.3e}, stable = {}",
        report.max_deviation, report.stable
    );
    Ok(if report.checks.iter().all(|c| c.pass) { 0 } else { 2 })
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct VerifyReport {
    model: String,
    seed: u64,
    checks: Vec<Check>,
    metrics: BTreeMap<String, f64>,
    artifacts: Vec<String>,
}

/// Run every module invariant for the model at seeded sample states.
pub fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    let (model, profile) = cfg.build_model()?;
    let suite_cfg = SuiteConfig {
        seed: cfg.seed,
        samples: cfg.samples,
        step: cfg.step,
        horizon: cfg.horizon,
    };
    let outcome = run_suite(&model, &profile, &suite_cfg)?;
    let report = VerifyReport {
        model: cfg.model.clone(),
        seed: cfg.seed,
        checks: outcome.checks,
        metrics: outcome.metrics,
        artifacts: vec![path_string(&cfg.artifact("verify.json"))],
    };
    write_json(&cfg.artifact("verify.json"), &report)?;
    print_checks("verify", &report.checks);
    Ok(if report.checks.iter().all(|c| c.pass) { 0 } else { 2 })
}

fn print_checks(command: &str, checks: &[Check]) {
    for c in checks {
        println!(
            "{command}: [{}] {} (residual {:.3e}, threshold {:.3e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.threshold
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_cfg(model: &str) -> (RunConfig, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            model: model.into(),
            out_dir: dir.path().to_path_buf(),
            samples: 64,
            horizon: 1.0,
            ..RunConfig::default()
        };
        (cfg, dir)
    }

    #[test]
    fn parse_state_accepts_vector_and_csv_row() {
        let dims = crate::model::Dimensions::new(3, 1, 1).unwrap();
        let v = parse_state("0.1, 0.2, 0.3", dims).unwrap();
        assert_eq!(v.len(), 3);
        // full row: t, x0..x2, tau0, zeta0, eta0, eta1
        let row = "0.5,1.0,2.0,3.0,0.1,1.0,2.0,3.0";
        let v = parse_state(row, dims).unwrap();
        assert_eq!(v.as_slice(), &[1.0, 2.0, 3.0]);
        assert!(parse_state("1.0,2.0", dims).is_err());
    }

    #[test]
    fn analyze_spacecraft_passes() {
        let (cfg, _dir) = temp_cfg("spacecraft");
        assert_eq!(cmd_analyze(&cfg).unwrap(), 0);
        let text = std::fs::read_to_string(cfg.artifact("analyze.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["relative_degrees"], serde_json::json!([1, 1, 1]));
        assert_eq!(v["total_relative_degree"], 3);
        assert_eq!(v["assumption_ii_ok"], true);
    }

    #[test]
    fn analyze_nonholonomic_fails_involutivity() {
        let (cfg, _dir) = temp_cfg("nonholonomic");
        assert_eq!(cmd_analyze(&cfg).unwrap(), 2);
        let text = std::fs::read_to_string(cfg.artifact("analyze.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["involutive"], false);
    }

    #[test]
    fn transform_origin_gives_zero_eta() {
        let (cfg, _dir) = temp_cfg("spacecraft");
        let code = cmd_transform(&cfg, "0,0,0,0,0,0,0").unwrap();
        assert_eq!(code, 0);
        let text = std::fs::read_to_string(cfg.artifact("transform.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for e in v["eta"].as_array().unwrap() {
            assert_eq!(e.as_f64().unwrap(), 0.0);
        }
    }

    #[test]
    fn verify_constant_passes_and_asymmetric_fails() {
        let (cfg, _dir) = temp_cfg("constant");
        assert_eq!(cmd_verify(&cfg).unwrap(), 0);
        let (cfg, _dir) = temp_cfg("asymmetric");
        assert_eq!(cmd_verify(&cfg).unwrap(), 2);
        let text = std::fs::read_to_string(cfg.artifact("verify.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let checks = v["checks"].as_array().unwrap();
        assert_eq!(checks.len(), 1);
        assert_eq!(checks[0]["name"], "mass_symmetry");
        assert_eq!(checks[0]["pass"], false);
    }
}
