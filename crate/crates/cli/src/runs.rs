//! Implementations of the four subcommands.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

use qevolve::jaynes_cummings as jc;
use qevolve::kerr;
use qevolve::manifold::{
    evolve_constrained, hermitian_model, ClassicalParameter, IntegratorOptions,
};
use qevolve::phasespace::GridGeometry;
use qevolve::separable;

use crate::{CliError, EngineArgs, EnsembleArgs, JcArgs, KerrArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Parses "a", "bi", "a+bi", "a-bi" style complex literals.
pub fn parse_complex(text: &str) -> Result<C64, CliError> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err(CliError::usage("empty complex literal"));
    }
    let bad = || CliError::usage(format!("cannot parse complex literal '{text}'"));
    if let Some(im_text) = s.strip_suffix('i') {
        // Split at the last +/- that is not part of an exponent and not the
        // leading sign.
        let bytes = im_text.as_bytes();
        let mut split = None;
        for idx in (1..bytes.len()).rev() {
            let c = bytes[idx] as char;
            if (c == '+' || c == '-') && !matches!(bytes[idx - 1] as char, 'e' | 'E') {
                split = Some(idx);
                break;
            }
        }
        match split {
            Some(idx) => {
                let re: f64 = im_text[..idx].parse().map_err(|_| bad())?;
                let im_part = &im_text[idx..];
                let im: f64 = if im_part == "+" {
                    1.0
                } else if im_part == "-" {
                    -1.0
                } else {
                    im_part.parse().map_err(|_| bad())?
                };
                Ok(C64::new(re, im))
            }
            None => {
                let im: f64 = if im_text.is_empty() {
                    1.0
                } else if im_text == "-" {
                    -1.0
                } else {
                    im_text.parse().map_err(|_| bad())?
                };
                Ok(C64::new(0.0, im))
            }
        }
    } else {
        Ok(C64::new(s.parse().map_err(|_| bad())?, 0.0))
    }
}

/// Expands "2,3,...,10", "2..10", and plain comma lists of integers.
pub fn parse_k_list(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = |what: &str| CliError::usage(format!("cannot parse K list '{text}': {what}"));
    let mut out: Vec<usize> = Vec::new();
    for token in text.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        if token == "..." || token == ".." {
            out.push(0); // ellipsis marker, resolved below
            continue;
        }
        if let Some((a, b)) = token.split_once("..") {
            let lo: usize = a.parse().map_err(|_| bad("bad range start"))?;
            let hi: usize = b.trim_start_matches('=').parse().map_err(|_| bad("bad range end"))?;
            if lo > hi {
                return Err(bad("range start exceeds end"));
            }
            out.extend(lo..=hi);
            continue;
        }
        out.push(token.parse().map_err(|_| bad("bad integer"))?);
    }
    // Resolve ellipsis markers: fill the arithmetic progression between the
    // neighbors, continuing the step implied by the preceding pair.
    let mut resolved = Vec::with_capacity(out.len());
    for (idx, &v) in out.iter().enumerate() {
        if v != 0 {
            resolved.push(v);
            continue;
        }
        let prev = *resolved.last().ok_or_else(|| bad("ellipsis without predecessor"))?;
        let next = *out.get(idx + 1).ok_or_else(|| bad("ellipsis without successor"))?;
        if next == 0 {
            return Err(bad("consecutive ellipses"));
        }
        let step = if resolved.len() >= 2 {
            let a = resolved[resolved.len() - 2];
            prev.saturating_sub(a).max(1)
        } else {
            1
        };
        let mut cur = prev + step;
        while cur < next {
            resolved.push(cur);
            cur += step;
        }
    }
    if resolved.is_empty() {
        return Err(bad("no values"));
    }
    Ok(resolved)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_metadata(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| CliError::numeric(format!("metadata serialization failed: {e}")))?;
    out.write_all(b"\n")?;
    Ok(())
}

fn ensure_out_dir(dir: &PathBuf) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("output directory {dir:?} unusable: {e}")))
}

pub fn run_kerr(args: &KerrArgs) -> Result<(), CliError> {
    if !args.omega.is_finite() || args.omega <= 0.0 {
        return Err(CliError::usage("--omega must be positive"));
    }
    if args.kappa < 0.0 {
        return Err(CliError::usage("--kappa must be nonnegative"));
    }
    if args.grid_points < 2 || args.grid_min >= args.grid_max {
        return Err(CliError::usage("grid needs min < max and at least 2 points"));
    }
    if args.cat_sign != 1.0 && args.cat_sign != -1.0 {
        return Err(CliError::usage("--cat-sign must be +1 or -1"));
    }
    let dynamics = match args.mode.as_str() {
        "cc" | "qc" => kerr::PanelDynamics::Classical,
        "cq" | "qq" => kerr::PanelDynamics::Quantum,
        other => {
            return Err(CliError::usage(format!(
                "invalid --mode '{other}'; expected one of cc, qc, cq, qq"
            )))
        }
    };
    let initial = match args.mode.as_bytes()[0] {
        b'c' => kerr::PanelInitial::Coherent(parse_complex(&args.alpha0)?),
        _ => {
            let default1 = C64::from_polar(3.0, -PI / 4.0);
            let default2 = C64::from_polar(3.0, PI / 4.0);
            kerr::PanelInitial::Cat {
                alpha1: args
                    .cat_alpha1
                    .as_deref()
                    .map(parse_complex)
                    .transpose()?
                    .unwrap_or(default1),
                alpha2: args
                    .cat_alpha2
                    .as_deref()
                    .map(parse_complex)
                    .transpose()?
                    .unwrap_or(default2),
                rel_sign: args.cat_sign,
            }
        }
    };
    let time = match args.time {
        Some(t) => t,
        None if args.kappa > 0.0 => args.t_over_kappa / args.kappa,
        None => {
            return Err(CliError::usage(
                "--time is required when kappa = 0 (t-over-kappa is undefined)",
            ))
        }
    };
    ensure_out_dir(&args.out_dir)?;

    let params = kerr::KerrParams::new(args.omega, args.kappa);
    let geometry = GridGeometry::new(
        (args.grid_min, args.grid_max),
        (args.grid_min, args.grid_max),
        args.grid_points,
        args.grid_points,
    )
    .map_err(CliError::numeric)?;
    let spec = kerr::PanelSpec {
        initial,
        dynamics,
        time,
        co_rotating: !args.lab_frame,
    };
    let panel =
        kerr::render_panel(&spec, &params, &geometry, args.cutoff, args.traj_samples)
            .map_err(CliError::numeric)?;

    let wigner_path = args.out_dir.join(format!("wigner_{}.csv", args.mode));
    panel.wigner.write_csv_path(&wigner_path)?;

    let traj_path = args.out_dir.join(format!("traj_{}.csv", args.mode));
    let mut traj = create(&traj_path)?;
    writeln!(traj, "t,re_mean,im_mean")?;
    for (t, mean) in &panel.trajectory {
        writeln!(traj, "{},{},{}", t, mean.re, mean.im)?;
    }
    traj.flush()?;

    let meta_path = args.out_dir.join(format!("run_{}.json", args.mode));
    let initial_json = match initial {
        kerr::PanelInitial::Coherent(a) => json!({"coherent": {"re": a.re, "im": a.im}}),
        kerr::PanelInitial::Cat {
            alpha1,
            alpha2,
            rel_sign,
        } => json!({"cat": {
            "alpha1": {"re": alpha1.re, "im": alpha1.im},
            "alpha2": {"re": alpha2.re, "im": alpha2.im},
            "rel_sign": rel_sign,
        }}),
    };
    write_metadata(
        &meta_path,
        &json!({
            "artifact_version": VERSION,
            "command": "kerr",
            "parameters": {
                "mode": args.mode,
                "initial": initial_json,
                "omega": args.omega,
                "kappa": args.kappa,
                "time": time,
                "co_rotating": !args.lab_frame,
                "grid": {
                    "min": args.grid_min,
                    "max": args.grid_max,
                    "points": args.grid_points,
                },
                "cutoff": args.cutoff,
                "traj_samples": args.traj_samples,
            },
            "outputs": [
                wigner_path.file_name().unwrap().to_string_lossy(),
                traj_path.file_name().unwrap().to_string_lossy(),
            ],
            "warnings": panel.wigner.warnings,
        }),
    )?;
    println!(
        "kerr {}: wigner min {:.6}, max {:.6}, mass {:.6} -> {}",
        args.mode,
        panel.wigner.min(),
        panel.wigner.max(),
        panel.wigner.quadrature_mass(),
        wigner_path.display()
    );
    Ok(())
}

struct JcRow {
    t: f64,
    alpha: C64,
    atom_g: C64,
    atom_e: C64,
    excitation: f64,
    entropy_exact: f64,
}

/// Top eigenvector of a 2x2 reduced atom state, phase-fixed so the ground
/// component is real nonnegative; equals the atom ket whenever the joint
/// state is a product.
fn dominant_atom_vector(rho: [[C64; 2]; 2]) -> (C64, C64) {
    let a = rho[0][0].re;
    let d = rho[1][1].re;
    let b = rho[0][1];
    let mid = 0.5 * (a + d);
    let gap = ((0.5 * (a - d)).powi(2) + b.norm_sqr()).sqrt();
    let lambda = mid + gap;
    let (mut vg, mut ve) = if b.norm() > 1e-14 {
        (b, C64::new(lambda - a, 0.0))
    } else if a >= d {
        (C64::new(1.0, 0.0), C64::new(0.0, 0.0))
    } else {
        (C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    };
    let norm = (vg.norm_sqr() + ve.norm_sqr()).sqrt();
    vg /= norm;
    ve /= norm;
    let phase = if vg.norm() > 1e-12 {
        vg / vg.norm()
    } else {
        ve / ve.norm()
    };
    (vg / phase, ve / phase)
}

pub fn run_jc(args: &JcArgs) -> Result<(), CliError> {
    if !args.omega.is_finite() || args.omega <= 0.0 || args.kappa < 0.0 {
        return Err(CliError::usage("need --omega > 0 and --kappa >= 0"));
    }
    let t_max = match args.t {
        Some(t) if t >= 0.0 => t,
        Some(_) => return Err(CliError::usage("--t must be nonnegative")),
        None if args.kappa > 0.0 => 10.0 / args.kappa,
        None => return Err(CliError::usage("--t is required when kappa = 0")),
    };
    let grid: Vec<f64> = if t_max == 0.0 {
        vec![0.0]
    } else {
        let dt = match args.dt {
            Some(dt) if dt > 0.0 => dt,
            Some(_) => return Err(CliError::usage("--dt must be positive")),
            None => t_max / 1000.0,
        };
        let n = (t_max / dt).round().max(1.0) as usize;
        (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
    };
    ensure_out_dir(&args.out_dir)?;
    let params = jc::JcParams::new(args.omega, args.kappa);

    let numeric_rows = |opts: &IntegratorOptions| -> Result<Vec<JcRow>, CliError> {
        let traj = jc::integrate_semiclassical(
            &jc::SemiClassicalState::initial_superposition(),
            &params,
            &grid,
            opts,
        )
        .map_err(CliError::numeric)?;
        Ok(traj
            .times
            .iter()
            .zip(&traj.states)
            .map(|(t, s)| JcRow {
                t: *t,
                alpha: s.alpha,
                atom_g: s.atom_g,
                atom_e: s.atom_e,
                excitation: s.excitation(),
                entropy_exact: jc::entanglement_entropy(&jc::exact_quantum_solution(*t, &params)),
            })
            .collect())
    };
    let analytic_rows = || -> Vec<JcRow> {
        grid.iter()
            .map(|&t| {
                let s = jc::analytic_semiclassical(t, &params);
                JcRow {
                    t,
                    alpha: s.alpha,
                    atom_g: s.atom_g,
                    atom_e: s.atom_e,
                    excitation: s.excitation(),
                    entropy_exact: jc::entanglement_entropy(&jc::exact_quantum_solution(
                        t, &params,
                    )),
                }
            })
            .collect()
    };

    let rows: Vec<JcRow> = match args.solver.as_str() {
        "numeric" => numeric_rows(&IntegratorOptions::default())?,
        "analytic" => analytic_rows(),
        "quantum" => grid
            .iter()
            .map(|&t| {
                let s = jc::exact_quantum_solution(t, &params);
                let (vg, ve) = dominant_atom_vector(s.reduced_atom());
                JcRow {
                    t,
                    alpha: s.mean_annihilation(),
                    atom_g: vg,
                    atom_e: ve,
                    excitation: s.excitation(),
                    entropy_exact: jc::entanglement_entropy(&s),
                }
            })
            .collect(),
        other => {
            return Err(CliError::usage(format!(
                "invalid --solver '{other}'; expected numeric, analytic, or quantum"
            )))
        }
    };

    let csv_path = args.out_dir.join(format!("jc_{}.csv", args.solver));
    let mut out = create(&csv_path)?;
    writeln!(
        out,
        "t,re_alpha,im_alpha,re_g,im_g,re_e,im_e,excitation,entropy_exact"
    )?;
    for r in &rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.alpha.re,
            r.alpha.im,
            r.atom_g.re,
            r.atom_g.im,
            r.atom_e.re,
            r.atom_e.im,
            r.excitation,
            r.entropy_exact
        )?;
    }
    out.flush()?;

    let comparison = if args.compare {
        let numeric = numeric_rows(&IntegratorOptions::default())?;
        let max_dev = numeric
            .iter()
            .zip(analytic_rows())
            .map(|(n, a)| {
                (n.alpha - a.alpha)
                    .norm()
                    .max((n.atom_g - a.atom_g).norm())
                    .max((n.atom_e - a.atom_e).norm())
            })
            .fold(0.0, f64::max);
        println!("max numeric-vs-analytic deviation: {max_dev:e}");
        Some(max_dev)
    } else {
        None
    };

    let meta_path = args.out_dir.join("run_jc.json");
    write_metadata(
        &meta_path,
        &json!({
            "artifact_version": VERSION,
            "command": "jc",
            "parameters": {
                "solver": args.solver,
                "omega": args.omega,
                "kappa": args.kappa,
                "t_max": t_max,
                "samples": rows.len(),
            },
            "outputs": [csv_path.file_name().unwrap().to_string_lossy()],
            "max_numeric_vs_analytic_deviation": comparison,
        }),
    )?;
    println!(
        "jc {}: {} rows over t in [0, {}] -> {}",
        args.solver,
        rows.len(),
        t_max,
        csv_path.display()
    );
    Ok(())
}

pub fn run_ensemble(args: &EnsembleArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::usage("--N must be positive"));
    }
    separable::NaturalUnits::new(args.r, args.beta, args.tau_max)
        .map_err(|e| CliError::usage(e.to_string()))?;
    if args.tau_steps < 2 || args.tau_max <= 0.0 {
        return Err(CliError::usage("need --tau-max > 0 and --tau-steps >= 2"));
    }
    let k_list = parse_k_list(&args.k)?;
    for &k in &k_list {
        if k == 0 || !args.n.is_multiple_of(k) {
            let valid: Vec<usize> = (1..=args.n.min(64))
                .filter(|d| args.n.is_multiple_of(*d))
                .collect();
            return Err(CliError::usage(format!(
                "K = {k} does not divide N = {}; valid K include: {}",
                args.n,
                valid
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
    }
    if args.oracle && args.n > separable::DENSE_ORACLE_MAX_N {
        return Err(CliError::usage(format!(
            "--oracle is limited to N <= {}, got N = {}",
            separable::DENSE_ORACLE_MAX_N,
            args.n
        )));
    }
    ensure_out_dir(&args.out_dir)?;

    let tau_grid: Vec<f64> = (0..args.tau_steps)
        .map(|i| args.tau_max * i as f64 / (args.tau_steps - 1) as f64)
        .collect();
    let table =
        separable::variance_ratio_sweep(args.n, &k_list, args.r, &tau_grid).map_err(CliError::numeric)?;

    let sweep_path = args.out_dir.join("ensemble_sweep.csv");
    let mut sweep = create(&sweep_path)?;
    writeln!(sweep, "tau,K,ratio")?;
    for row in &table.rows {
        writeln!(sweep, "{},{},{}", row.tau, row.k, row.ratio)?;
    }
    sweep.flush()?;

    let env_path = args.out_dir.join("ensemble_envelope.csv");
    let mut env = create(&env_path)?;
    writeln!(env, "tau,ratio")?;
    for (tau, ratio) in &table.envelope {
        writeln!(env, "{},{}", tau, ratio)?;
    }
    env.flush()?;

    // Optional dense-oracle equivalence report.
    let oracle_report = if args.oracle {
        let mut max_dev: f64 = 0.0;
        for &k in &k_list {
            let partition =
                separable::Partition::balanced(args.n, k).map_err(CliError::numeric)?;
            let cov = separable::BlockCovariance::thermal(args.beta, &partition)
                .map_err(CliError::numeric)?;
            let g = separable::dense_g(&partition, args.r);
            let oracle = separable::dense_oracle(&cov.to_dense(), &g, &tau_grid)
                .map_err(CliError::numeric)?;
            for (tau, dense) in tau_grid.iter().zip(&oracle) {
                let dev = cov.propagate(args.r, *tau).to_dense().max_abs_diff(dense);
                max_dev = max_dev.max(dev);
            }
        }
        println!("oracle equivalence: max elementwise deviation {max_dev:e}");
        Some(max_dev)
    } else {
        None
    };

    let partitions: serde_json::Value = k_list
        .iter()
        .map(|&k| json!({"K": k, "block_size": args.n / k}))
        .collect();
    write_metadata(
        &args.out_dir.join("run_ensemble.json"),
        &json!({
            "artifact_version": VERSION,
            "command": "ensemble",
            "parameters": {
                "N": args.n,
                "K": k_list,
                "R": args.r,
                "beta": args.beta,
                "tau_max": args.tau_max,
                "tau_steps": args.tau_steps,
                "partitions": partitions,
            },
            "outputs": [
                sweep_path.file_name().unwrap().to_string_lossy(),
                env_path.file_name().unwrap().to_string_lossy(),
            ],
            "oracle_max_deviation": oracle_report,
        }),
    )?;
    println!(
        "ensemble: {} curves over tau in [0, {}] -> {}",
        k_list.len(),
        args.tau_max,
        sweep_path.display()
    );
    Ok(())
}

pub fn run_engine(args: &EngineArgs) -> Result<(), CliError> {
    if args.dim == 0 || args.samples < 2 || !args.t_max.is_finite() || args.t_max <= 0.0 {
        return Err(CliError::usage(
            "need --dim >= 1, --samples >= 2, --t-max > 0",
        ));
    }
    ensure_out_dir(&args.out_dir)?;
    let mut rng = StdRng::seed_from_u64(args.seed);
    let dim = args.dim;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            h[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let h = (h.clone() + h.adjoint()) * C64::new(0.5, 0.0);
    let mut psi0: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let norm = psi0.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    psi0.iter_mut().for_each(|v| *v /= norm);

    let grid: Vec<f64> = (0..args.samples)
        .map(|i| args.t_max * i as f64 / (args.samples - 1) as f64)
        .collect();
    let model = hermitian_model(h.clone(), 1.0);
    let zeta0 = ClassicalParameter::new(psi0.clone()).with_unit_norm_group(0..dim);
    let record = evolve_constrained(&model, &zeta0, &grid, &IntegratorOptions::strict())
        .map_err(CliError::numeric)?;

    // Reference solution through the eigendecomposition of H.
    let eig = h.symmetric_eigen();
    let mut max_dev: f64 = 0.0;
    for (t, s) in grid.iter().zip(&record.states) {
        let phases =
            DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-C64::new(0.0, 1.0) * l * *t).exp()));
        let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
        let exact = u * nalgebra::DVector::from_column_slice(&psi0);
        for (a, b) in s.values.iter().zip(exact.iter()) {
            max_dev = max_dev.max((a - b).norm());
        }
    }

    let csv_path = args.out_dir.join("engine_trajectory.csv");
    let mut out = create(&csv_path)?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..dim).flat_map(|k| [format!("re_{k}"), format!("im_{k}")]))
        .chain(std::iter::once("norm".to_string()))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (t, s) in grid.iter().zip(&record.states) {
        let norm: f64 = s.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let mut fields = vec![t.to_string()];
        for v in &s.values {
            fields.push(v.re.to_string());
            fields.push(v.im.to_string());
        }
        fields.push(norm.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;

    write_metadata(
        &args.out_dir.join("run_engine.json"),
        &json!({
            "artifact_version": VERSION,
            "command": "engine",
            "parameters": {
                "dim": args.dim,
                "seed": args.seed,
                "t_max": args.t_max,
                "samples": args.samples,
            },
            "outputs": [csv_path.file_name().unwrap().to_string_lossy()],
            "max_deviation_vs_eigendecomposition": max_dev,
            "norm_drift": record.norm_drift,
            "energy_drift": record.energy_drift,
        }),
    )?;
    println!(
        "engine: dim {} seed {}: max deviation vs eigendecomposition {max_dev:e}, norm drift {:e}",
        args.dim, args.seed, record.norm_drift
    );
    Ok(())
}
