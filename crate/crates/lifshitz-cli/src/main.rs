//! Scenario-file-driven front end: reads a JSON scenario, runs the requested
//! computation, and emits a CSV table (header row, fixed column order, 12
//! significant digits, LF line endings).
//!
//! Exit codes: 0 success, 2 configuration/schema error, 3 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lifshitz::error::Error;
use lifshitz::exact_planar::{
    exact_lifshitz_energy, figure2_table, pws_planar_energy, taylor_in_contrast,
};
use lifshitz::layered::{convergence_report, engine_quadrature, interaction_logdet};
use lifshitz::rough::{e2_proximity, e2_pws, e2_rough};
use lifshitz::scenario::ScenarioFile;

#[derive(Parser)]
#[command(
    name = "lifshitz",
    about = "Casimir-Lifshitz fluctuation-energy tables from JSON scenarios",
    version
)]
struct Cli {
    /// Scenario file (JSON, strict schema).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; overrides LIFSHITZ_THREADS. Changes wall time only,
    /// never output bytes.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Relative-tolerance override for the scenario quadrature controls.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact Lifshitz parallel-plate energy per unit area.
    Exact,
    /// Dielectric-contrast series, log-det energy, and the exact reference.
    Series,
    /// Ratio curves of truncated series and the CM pairwise sum to exact.
    Figure2,
    /// Second-order rough-surface energies (direct kernel, proximity, PWS).
    Rough,
    /// Pairwise-summation planar energy against the exact result.
    Pws,
    /// Grid-refinement ladder of the layered log-det engine.
    Convergence,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(csv) => {
            let ok = match &cli.out {
                Some(path) => fs::write(path, csv.as_bytes()).map_err(|e| e.to_string()),
                None => {
                    print!("{csv}");
                    Ok(())
                }
            };
            match ok {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration/schema problems, 3 for numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Scenario(_)
        | Error::Io(_)
        | Error::Domain(_)
        | Error::TableRange(_)
        | Error::NoPlasmaFrequency
        | Error::StaticDivergence => 2,
        Error::ConvergenceFailure(_)
        | Error::GridTooCoarse(_)
        | Error::EigenFailure
        | Error::BranchViolation(_)
        | Error::IllConditioned(_)
        | Error::Contact(_) => 3,
    }
}

fn run(cli: &Cli) -> Result<String, Error> {
    let threads = cli
        .threads
        .or_else(|| {
            std::env::var("LIFSHITZ_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0);
    if threads > 0 {
        // Ignore the error if a pool already exists (tests call run twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let path = cli
        .scenario
        .as_ref()
        .ok_or_else(|| Error::Scenario("--scenario <path> is required".into()))?;
    let file = ScenarioFile::load(path)?;
    let mut quad = file.quadrature_spec();
    if let Some(tol) = cli.tol {
        if !(tol > 0.0) {
            return Err(Error::Scenario("--tol must be > 0".into()));
        }
        quad.rel_tol = tol;
    }
    match cli.command {
        Command::Exact => cmd_exact(&file, &quad),
        Command::Series => cmd_series(&file, &quad),
        Command::Figure2 => cmd_figure2(&file, &quad),
        Command::Rough => cmd_rough(&file, &quad),
        Command::Pws => cmd_pws(&file, &quad),
        Command::Convergence => cmd_convergence(&file, &quad),
    }
}

/// 12 significant digits, locale-independent, deterministic.
fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

fn cmd_exact(file: &ScenarioFile, quad: &lifshitz::QuadratureSpec) -> Result<String, Error> {
    let mut csv = String::from("H,E_exact,est_error\n");
    for h in file.separations()? {
        let scen = file.planar_scenario(h)?;
        let e = exact_lifshitz_energy(&scen, quad)?;
        csv.push_str(&format!(
            "{},{},{}\n",
            sig12(h),
            sig12(e.total),
            sig12(e.est_error)
        ));
    }
    Ok(csv)
}

fn cmd_series(file: &ScenarioFile, quad: &lifshitz::QuadratureSpec) -> Result<String, Error> {
    let orders = file.run.orders.clone().unwrap_or_else(|| vec![2, 4, 6]);
    let max_order = *orders.iter().max().unwrap_or(&2);
    let mut csv = String::from("H");
    for n in 2..=max_order {
        csv.push_str(&format!(",E_order_{n}"));
    }
    csv.push_str(",E_sum,E_logdet,E_exact,est_error\n");
    let engine_quad = engine_quadrature();
    for h in file.separations()? {
        let scen = file.planar_scenario(h)?;
        let taylor = taylor_in_contrast(&scen, max_order, quad)?;
        let exact = exact_lifshitz_energy(&scen, quad)?;
        let logdet = interaction_logdet(&file.layered_scenario(h)?, &engine_quad)?;
        csv.push_str(&sig12(h));
        for n in 2..=max_order {
            let c = taylor.per_order.get(&n).copied().unwrap_or(0.0);
            csv.push_str(&format!(",{}", sig12(c)));
        }
        let est_error = taylor.est_error + exact.est_error;
        csv.push_str(&format!(
            ",{},{},{},{}\n",
            sig12(taylor.total),
            sig12(logdet.total),
            sig12(exact.total),
            sig12(est_error)
        ));
    }
    Ok(csv)
}

fn cmd_figure2(file: &ScenarioFile, quad: &lifshitz::QuadratureSpec) -> Result<String, Error> {
    let orders = file.run.orders.clone().unwrap_or_else(|| vec![2, 4, 6]);
    let model = file.material(&file.geometry.material_1)?;
    let lambda_p = model.plasma_wavelength()?;
    let x_min = file.run.h_over_lambda_p_min.unwrap_or(0.05);
    let x_max = file.run.h_over_lambda_p_max.unwrap_or(5.0);
    let n_points = file.run.n_points.unwrap_or(13);
    if !(x_min > 0.0 && x_max > x_min && n_points >= 2) {
        return Err(Error::Scenario(
            "figure2 grid requires 0 < h_over_lambda_p_min < h_over_lambda_p_max and n_points >= 2"
                .into(),
        ));
    }
    let ratio = (x_max / x_min).ln();
    let xs: Vec<f64> = (0..n_points)
        .map(|i| x_min * (ratio * i as f64 / (n_points - 1) as f64).exp())
        .collect();
    let hs: Vec<f64> = xs.iter().map(|x| x * lambda_p).collect();
    let rows = figure2_table(&hs, &model, &orders, quad)?;
    let mut csv = String::from("H_over_lambda_p");
    for n in &orders {
        csv.push_str(&format!(",ratio_{n}"));
    }
    csv.push_str(",ratio_CM\n");
    for (x, row) in xs.iter().zip(&rows) {
        csv.push_str(&sig12(*x));
        for &(_, r) in &row.ratios {
            csv.push_str(&format!(",{}", sig12(r)));
        }
        csv.push_str(&format!(",{}\n", sig12(row.ratio_cm)));
    }
    Ok(csv)
}

fn cmd_rough(file: &ScenarioFile, quad: &lifshitz::QuadratureSpec) -> Result<String, Error> {
    let scen = file.rough_scenario()?;
    let slope_1 = scen.h1.max_slope();
    let slope_2 = scen.h2.max_slope();
    let mut csv = String::from("method,energy,est_error,max_slope_1,max_slope_2\n");
    let mut push = |name: &str, energy: f64, quad: &lifshitz::QuadratureSpec| {
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            sig12(energy),
            sig12(quad.rel_tol * energy.abs()),
            sig12(slope_1),
            sig12(slope_2)
        ));
    };
    // The bare-contrast paths diverge for the perfect-conductor marker;
    // only the Clausius-Mossotti (pws) row is defined there.
    let conductor = scen.material_1.is_conductor() || scen.material_2.is_conductor();
    if !conductor {
        let eq6 = e2_rough(&scen, quad)?;
        push("eq6", eq6, quad);
    }
    let flat_h1 = scen.h1.samples().iter().all(|&v| v == 0.0);
    if !conductor && flat_h1 {
        let eq8 = e2_proximity(
            &scen.material_1,
            &scen.material_2,
            &scen.h2,
            scen.separation_h,
            quad,
        )?;
        push("eq8", eq8, quad);
    }
    let pws = e2_pws(&scen, quad)?;
    push("pws", pws, quad);
    Ok(csv)
}

fn cmd_pws(file: &ScenarioFile, quad: &lifshitz::QuadratureSpec) -> Result<String, Error> {
    let mut csv = String::from("H,E_pws,E_exact,ratio\n");
    for h in file.separations()? {
        let scen = file.planar_scenario(h)?;
        let pws = pws_planar_energy(&scen, quad)?;
        let exact = exact_lifshitz_energy(&scen, quad)?.total;
        let pws_s = sig12(pws);
        let exact_s = sig12(exact);
        // The ratio column must equal E_pws / E_exact as recomputable from
        // the printed columns, so divide the rounded values.
        let ratio = if exact == 0.0 {
            f64::NAN
        } else {
            pws_s.parse::<f64>().unwrap() / exact_s.parse::<f64>().unwrap()
        };
        csv.push_str(&format!("{},{pws_s},{exact_s},{}\n", sig12(h), sig12(ratio)));
    }
    Ok(csv)
}

fn cmd_convergence(file: &ScenarioFile, quad: &lifshitz::QuadratureSpec) -> Result<String, Error> {
    let _ = quad;
    let hs = file.separations()?;
    let scen = file.layered_scenario(hs[0])?;
    let report = convergence_report(&scen, &engine_quadrature())?;
    let mut csv = String::from("kind,scale,value\n");
    for p in &report.dz_ladder {
        csv.push_str(&format!("dz,{},{}\n", sig12(p.scale), sig12(p.energy)));
    }
    for p in &report.l_ladder {
        csv.push_str(&format!("L,{},{}\n", sig12(p.scale), sig12(p.energy)));
    }
    csv.push_str(&format!(
        "extrapolated,,{}\n",
        sig12(report.extrapolated)
    ));
    csv.push_str(&format!("est_error,,{}\n", sig12(report.est_error)));
    csv.push_str(&format!(
        "convergence_ratio,,{}\n",
        sig12(report.convergence_ratio)
    ));
    csv.push_str(&format!(
        "monotone,,{}\n",
        if report.monotone { 1 } else { 0 }
    ));
    Ok(csv)
}
