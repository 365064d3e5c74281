//! The four commands behind the thin argument layer in main. Every command
//! writes its artifacts into the chosen output directory and closes with a
//! manifest; the returned status distinguishes a clean run from one whose
//! solver stopped at its iteration cap.

use nalgebra::DMatrix;
use serde_json::{json, Value};

use scalesep::blp::{oracle_separation, separate_with_spectra};
use scalesep::covmodel::{empirical_covariance, SampleMatrix, SymCov};
use scalesep::decompose::{decompose, DecomposeConfig};
use scalesep::error::{Error, Result};
use scalesep::experiment::{quartiles, rank_share, ratios, run_eval, Baseline, EvalConfig};
use scalesep::io::{format_f64, read_matrix_csv};
use scalesep::simgen::{
    combination, generate, rel_mise, scenario_cell, Regime, RoughStructure, ScenarioConfig,
};
use scalesep::spectra::{spectrum, DEFAULT_CUTOFF};

use crate::manifest::{hash_input, now_rfc3339, Artifacts, FileRecord, RunManifest};
use crate::{DecomposeArgs, EvalArgs, PredictArgs, SimulateArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    NotConverged,
}

/// How a decompose input was read: curve samples are reduced to their
/// empirical covariance, a symmetric square matrix is taken as a
/// covariance directly.
enum InputKind {
    Samples { n: usize, centered: bool },
    Covariance,
}

impl InputKind {
    fn label(&self) -> &'static str {
        match self {
            InputKind::Samples { .. } => "samples",
            InputKind::Covariance => "covariance",
        }
    }

    fn curves(&self) -> Value {
        match self {
            InputKind::Samples { n, .. } => json!(n),
            InputKind::Covariance => Value::Null,
        }
    }
}

fn covariance_from_input(
    raw: DMatrix<f64>,
    center: bool,
) -> Result<(SymCov, DMatrix<f64>, InputKind)> {
    if raw.nrows() == raw.ncols() && raw.nrows() > 0 {
        if let Ok(cov) = SymCov::new(raw.clone()) {
            let k = cov.k();
            return Ok((cov, DMatrix::zeros(1, k), InputKind::Covariance));
        }
    }
    let n = raw.nrows();
    let k = raw.ncols();
    let mean = if center {
        raw.row_mean()
    } else {
        nalgebra::RowDVector::zeros(k)
    };
    let samples = SampleMatrix::new(raw)?;
    let cov = empirical_covariance(&samples, center)?;
    let mean = DMatrix::from_fn(1, k, |_, j| mean[j]);
    Ok((cov, mean, InputKind::Samples { n, centered: center }))
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<RunStatus> {
    let started = now_rfc3339();
    let raw = read_matrix_csv(&args.input)?;
    let centering = !args.no_center;
    let (rn, mean, kind) = covariance_from_input(raw, centering)?;

    let mut cfg = DecomposeConfig {
        half_band: args.half_band,
        max_rank: args.max_rank,
        rule: args.rank_rule,
        ..DecomposeConfig::default()
    };
    // Dykstra converges linearly and noisy samples sit far from the
    // banded PSD set; give it a generous sweep budget rather than a
    // looser tolerance.
    cfg.dykstra.max_iter = 30_000;
    if let Some(max_iter) = args.max_iter {
        cfg.solver.max_iter = max_iter;
        cfg.dykstra.max_iter = max_iter;
    }
    let d = decompose(&rn, &cfg)?;

    let mut art = Artifacts::create(&args.out)?;
    art.write_matrix("Lhat.csv", d.lhat.values())?;
    art.write_matrix("Bhat.csv", d.bhat.values())?;
    art.write_matrix("Rhat.csv", d.rhat.values())?;
    art.write_matrix("mean.csv", &mean)?;
    art.write_text("scree.csv", &scree_to_csv(&d))?;
    art.write_text("Lhat_spectrum.csv", &d.l_spectrum.to_csv())?;
    art.write_text("Rhat_spectrum.csv", &d.r_spectrum.to_csv())?;

    let selected = d.selected_rank();
    let entry = &d.scree.entries()[selected - 1];
    let results = json!({
        "selectedRank": selected,
        "notLeveled": d.selection.not_leveled,
        "fit": entry.fit,
        "normalizedFit": entry.normalized_fit,
        "completionConverged": d.completion_converged,
        "dykstraConverged": d.dykstra_converged,
        "dykstraIterations": d.dykstra_iterations,
        "halfBand": d.half_band,
        "inputKind": kind.label(),
        "inputCurves": kind.curves(),
        "centered": matches!(kind, InputKind::Samples { centered: true, .. }),
        "smoothEffectiveRank": d.l_spectrum.effective_rank(),
        "totalEffectiveRank": d.r_spectrum.effective_rank(),
    });
    let manifest = RunManifest {
        command: "decompose".into(),
        config: json!({
            "input": args.input.display().to_string(),
            "out": args.out.display().to_string(),
            "center": centering,
            "pipeline": serde_json::to_value(&cfg).map_err(json_err)?,
        }),
        inputs: vec![hash_input(&args.input)?],
        seed: None,
        started_at: started,
        finished_at: now_rfc3339(),
        outputs: art.outputs(),
        results,
    };
    art.finish(&manifest)?;
    Ok(if d.converged() {
        RunStatus::Converged
    } else {
        RunStatus::NotConverged
    })
}

fn scree_to_csv(d: &scalesep::decompose::Decomposition) -> String {
    let mut text = String::new();
    for e in d.scree.entries() {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            e.rank,
            format_f64(e.fit),
            format_f64(e.normalized_fit),
            u8::from(e.converged),
            e.iterations
        ));
    }
    text
}

fn scenario_from_flags(
    scenario: &str,
    combo: usize,
    regime: u8,
    n: usize,
    k: usize,
    seed: u64,
) -> Result<ScenarioConfig> {
    let (smooth, rough) = scenario_cell(scenario)?;
    let (r, delta) = combination(combo)?;
    let cfg = ScenarioConfig {
        smooth,
        rough,
        r,
        delta,
        regime: Regime::from_number(regime)?,
        n,
        k,
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<RunStatus> {
    let started = now_rfc3339();
    let cfg = scenario_from_flags(
        &args.scenario,
        args.combo,
        args.regime,
        args.n,
        args.k,
        args.seed,
    )?;
    let truth = generate(&cfg)?;

    let mut art = Artifacts::create(&args.out)?;
    art.write_matrix("samples.csv", truth.xsample.values())?;
    art.write_matrix("Ysample.csv", truth.ysample.values())?;
    art.write_matrix("Wsample.csv", truth.wsample.values())?;
    art.write_matrix("Lsample.csv", truth.lsample.values())?;
    art.write_matrix("Bsample.csv", truth.bsample.values())?;
    art.write_matrix("Rsample.csv", truth.rsample.values())?;
    art.write_matrix("Ltrue.csv", truth.ltrue.values())?;
    art.write_matrix("Btrue.csv", truth.btrue.values())?;
    art.write_matrix("Rtrue.csv", truth.rtrue.values())?;
    art.write_matrix("eta.csv", &truth.eta)?;
    let rough = match &truth.rough {
        RoughStructure::MovingAverage { q, theta } => json!({
            "kind": cfg.rough,
            "order": q,
            "theta": theta,
        }),
        RoughStructure::Components { psi, beta } => {
            art.write_matrix("psi.csv", psi)?;
            json!({
                "kind": cfg.rough,
                "eigenvalues": beta,
                "componentsFile": "psi.csv",
            })
        }
        RoughStructure::WhiteNoise { sigma2 } => json!({
            "kind": cfg.rough,
            "sigma2": sigma2,
        }),
    };
    art.write_json(
        "metadata.json",
        &json!({
            "config": cfg,
            "smoothEigenvalues": truth.smooth_eigenvalues,
            "rough": rough,
        }),
    )?;

    let manifest = RunManifest {
        command: "simulate".into(),
        config: serde_json::to_value(cfg).map_err(json_err)?,
        inputs: Vec::new(),
        seed: Some(cfg.seed),
        started_at: started,
        finished_at: now_rfc3339(),
        outputs: art.outputs(),
        results: json!({
            "n": cfg.n,
            "k": cfg.k,
            "rank": cfg.r,
            "delta": cfg.delta,
        }),
    };
    art.finish(&manifest)?;
    Ok(RunStatus::Converged)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<RunStatus> {
    let started = now_rfc3339();
    let x = read_matrix_csv(&args.input)?;
    let dec = &args.decomposition;
    let lhat_path = dec.join("Lhat.csv");
    let rhat_path = dec.join("Rhat.csv");
    let mean_path = dec.join("mean.csv");
    let lhat = SymCov::new(read_matrix_csv(&lhat_path)?)?;
    let rhat = SymCov::new(read_matrix_csv(&rhat_path)?)?;
    let mean = read_matrix_csv(&mean_path)?;
    let k = lhat.k();
    if rhat.k() != k || mean.shape() != (1, k) {
        return Err(Error::DimensionMismatch {
            expected: format!("decomposition files on a shared grid of {k} points"),
            got: format!("Rhat {0}x{0}, mean {1}x{2}", rhat.k(), mean.nrows(), mean.ncols()),
        });
    }
    let mut inputs = vec![
        hash_input(&args.input)?,
        hash_input(&lhat_path)?,
        hash_input(&rhat_path)?,
        hash_input(&mean_path)?,
    ];

    let mut art = Artifacts::create(&args.out)?;
    if x.nrows() == 0 {
        let empty = DMatrix::zeros(0, 0);
        art.write_matrix("Yhat.csv", &empty)?;
        art.write_matrix("What.csv", &empty)?;
        art.write_matrix("scores.csv", &empty)?;
        let manifest = RunManifest {
            command: "predict".into(),
            config: predict_config(args),
            inputs,
            seed: None,
            started_at: started,
            finished_at: now_rfc3339(),
            outputs: art.outputs(),
            results: json!({ "curves": 0 }),
        };
        art.finish(&manifest)?;
        return Ok(RunStatus::Converged);
    }
    if x.ncols() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("{k} columns to match the decomposition"),
            got: format!("{}", x.ncols()),
        });
    }

    let n = x.nrows();
    let xc = DMatrix::from_fn(n, k, |i, j| x[(i, j)] - mean[(0, j)]);
    let l_spec = spectrum(&lhat, DEFAULT_CUTOFF)?;
    let r_spec = spectrum(&rhat, DEFAULT_CUTOFF)?;
    let sep = separate_with_spectra(&xc, &l_spec, &r_spec)?;

    // Add the mean back, then re-anchor: the stored rough part is exactly
    // the float difference between the raw input and the stored smooth
    // part, entry by entry.
    let mut yhat = DMatrix::zeros(n, k);
    let mut what = DMatrix::zeros(n, k);
    for j in 0..k {
        for i in 0..n {
            let xij = x[(i, j)];
            let raw = sep.yhat[(i, j)] + mean[(0, j)];
            let anchored = xij - (xij - raw);
            yhat[(i, j)] = anchored;
            what[(i, j)] = xij - anchored;
        }
    }
    art.write_matrix("Yhat.csv", &yhat)?;
    art.write_matrix("What.csv", &what)?;
    art.write_matrix("scores.csv", &sep.scores)?;

    let oracle = oracle_report(args, &xc, k, &mut inputs, &mut art, &sep.yhat)?;
    let manifest = RunManifest {
        command: "predict".into(),
        config: predict_config(args),
        inputs,
        seed: None,
        started_at: started,
        finished_at: now_rfc3339(),
        outputs: art.outputs(),
        results: json!({
            "curves": n,
            "componentsUsed": sep.rhat,
            "oracle": oracle,
        }),
    };
    art.finish(&manifest)?;
    Ok(RunStatus::Converged)
}

fn predict_config(args: &PredictArgs) -> Value {
    json!({
        "input": args.input.display().to_string(),
        "decomposition": args.decomposition.display().to_string(),
        "out": args.out.display().to_string(),
    })
}

/// When the input sits next to a population truth bundle on the same grid,
/// scores the prediction against the population-level reference predictor
/// and writes relmise.json.
fn oracle_report(
    args: &PredictArgs,
    xc: &DMatrix<f64>,
    k: usize,
    inputs: &mut Vec<FileRecord>,
    art: &mut Artifacts,
    yhat_centered: &DMatrix<f64>,
) -> Result<Value> {
    let Some(data_dir) = args.input.parent() else {
        return Ok(Value::from("no truth bundle"));
    };
    let ltrue_path = data_dir.join("Ltrue.csv");
    let rtrue_path = data_dir.join("Rtrue.csv");
    if !ltrue_path.is_file() || !rtrue_path.is_file() {
        return Ok(Value::from("no truth bundle"));
    }
    let ltrue = SymCov::new(read_matrix_csv(&ltrue_path)?)?;
    let rtrue = SymCov::new(read_matrix_csv(&rtrue_path)?)?;
    if ltrue.k() != k || rtrue.k() != k {
        return Ok(Value::from("skipped: truth bundle is on a different grid"));
    }
    inputs.push(hash_input(&ltrue_path)?);
    inputs.push(hash_input(&rtrue_path)?);
    let oracle = oracle_separation(xc, &ltrue, &rtrue)?;
    let report = match rel_mise(yhat_centered, &oracle.yhat) {
        Ok(rm) => json!({ "relMise": rm.value, "excludedCurves": rm.excluded }),
        Err(_) => json!({ "relMise": null, "excludedCurves": xc.nrows() }),
    };
    art.write_json("relmise.json", &report)?;
    Ok(report)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<RunStatus> {
    let started = now_rfc3339();
    let scenario = scenario_from_flags(
        &args.scenario,
        args.combo,
        args.regime,
        args.n,
        args.k,
        args.seed,
    )?;
    let mut cfg = EvalConfig::new(scenario, args.reps);
    if let Some(hb) = args.half_band {
        cfg.half_band = hb;
    }
    if let Some(rule) = args.rank_rule {
        cfg.rule = rule;
    }
    if let Some(max_iter) = args.max_iter {
        cfg.solver.max_iter = max_iter;
    }
    let out = run_eval(&cfg)?;

    let kl_ratios = ratios(&out.replicates, Baseline::Kl);
    let mut text = String::new();
    for (o, ratio) in out.replicates.iter().zip(&kl_ratios) {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            o.seed,
            o.selected_rank,
            u8::from(o.not_leveled),
            u8::from(o.converged),
            format_f64(o.err_ours),
            format_f64(o.err_kl),
            format_f64(o.err_ours_true),
            format_f64(o.err_kl_true),
            format_f64(*ratio),
        ));
    }
    let mut art = Artifacts::create(&args.out)?;
    art.write_text("replicates.csv", &text)?;

    let converged = out.replicates.iter().filter(|o| o.converged).count();
    let summary = json!({
        "replicates": out.replicates.len(),
        "ratioKlOurs": quartiles(&kl_ratios)?,
        "rankShare": rank_share(&out.replicates, scenario.r),
        "convergedShare": converged as f64 / out.replicates.len() as f64,
        "selectedRanks": out.replicates.iter().map(|o| o.selected_rank).collect::<Vec<_>>(),
    });
    art.write_json("summary.json", &summary)?;

    let manifest = RunManifest {
        command: "eval".into(),
        config: serde_json::to_value(&cfg).map_err(json_err)?,
        inputs: Vec::new(),
        seed: Some(scenario.seed),
        started_at: started,
        finished_at: now_rfc3339(),
        outputs: art.outputs(),
        results: summary,
    };
    art.finish(&manifest)?;
    Ok(if converged == out.replicates.len() {
        RunStatus::Converged
    } else {
        RunStatus::NotConverged
    })
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
