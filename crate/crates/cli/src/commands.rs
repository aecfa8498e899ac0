//! Subcommand implementations. Each returns the final stdout summary line.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use socnn_core::datagen::{generate as gen_frame, FrameKind, GeneratorSpec};
use socnn_core::eval::{
    export_activations, lemma_verify, run_alpha_grid, robustness_curve, test_mse,
    write_alpha_csv, write_lemma_csv, write_robustness_csv, RobustnessSpec,
};
use socnn_core::train::run_training;
use socnn_core::windows::Split;
use socnn_core::{AnyModel, Cnn, Error, Result, SeriesFrame, Socnn, VarModel, WindowSet};

use crate::config::{parse_list, RunSpec};
use crate::manifest::ManifestHandle;
use crate::{Kind, ModelKind};

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Loads a dataset directory (frame.csv) into windows.
fn load_windows(data: &Path, window: usize, seed: u64) -> Result<WindowSet> {
    let frame_path = data.join("frame.csv");
    if !frame_path.exists() {
        return Err(Error::Config(format!(
            "dataset {} has no frame.csv",
            data.display()
        )));
    }
    let frame = SeriesFrame::read_csv(&frame_path)?;
    WindowSet::from_frame(frame, window, seed)
}

pub fn generate(
    kind: Kind,
    k: usize,
    n: usize,
    seed: u64,
    out: &Path,
    allow_any_k: bool,
) -> Result<String> {
    if !allow_any_k && k != 16 && k != 64 {
        return Err(Error::Config(format!(
            "k = {k} is outside the standard grid {{16, 64}}; pass --allow-any-k to override"
        )));
    }
    let frame_kind = match kind {
        Kind::Sync => FrameKind::Synchronous,
        Kind::Async => FrameKind::Asynchronous,
    };
    let spec = GeneratorSpec::new(frame_kind, k, n, seed);
    let manifest = ManifestHandle::begin(
        out,
        "generate",
        serde_json::to_value(&spec)?,
        vec![],
        vec![
            path_str(&out.join("frame.csv")),
            path_str(&out.join("generator.json")),
        ],
        Some(seed),
    )?;

    let (frame, report) = gen_frame::<f64>(&spec)?;
    frame.write_csv(&out.join("frame.csv"))?;
    std::fs::write(
        out.join("generator.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    let ok = manifest.finish(true)?;
    Ok(format!(
        "status={} kind={:?} k={} rows={} cols={} out={}",
        if ok { "ok" } else { "failed" },
        kind,
        k,
        frame.n_rows(),
        frame.n_cols(),
        out.display()
    ))
}

pub fn ingest(uci: &Path, seed: u64, out: &Path, error_budget: usize) -> Result<String> {
    if !uci.exists() {
        return Err(Error::Config(format!(
            "electricity file {} does not exist",
            uci.display()
        )));
    }
    let manifest = ManifestHandle::begin(
        out,
        "ingest",
        json!({"uci": path_str(uci), "seed": seed, "error_budget": error_budget}),
        vec![path_str(uci)],
        vec![
            path_str(&out.join("frame.csv")),
            path_str(&out.join("ingest.json")),
        ],
        Some(seed),
    )?;

    let (frame, report) = socnn_core::ingest::ingest::<f64>(uci, seed, error_budget)?;
    frame.write_csv(&out.join("frame.csv"))?;
    std::fs::write(
        out.join("ingest.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    let ok = manifest.finish(true)?;
    Ok(format!(
        "status={} kept={} total={} fraction={:.4} out={}",
        if ok { "ok" } else { "failed" },
        report.kept_rows,
        report.total_rows,
        report.kept_rows as f64 / report.total_rows.max(1) as f64,
        out.display()
    ))
}

/// Builds and trains the requested model on a window set; shared by `train`
/// and the alpha grid.
fn train_model_on(
    model: ModelKind,
    data: &WindowSet,
    spec: &RunSpec,
    seed: u64,
    alpha_override: Option<f64>,
) -> Result<(AnyModel, socnn_core::train::RunReport)> {
    let tc = spec.train_config(seed);
    match model {
        ModelKind::Socnn => {
            let mut cfg =
                spec.socnn_config(data.input_dim(), data.output_dim(), data.anchor_cols.clone())?;
            if let Some(alpha) = alpha_override {
                cfg.alpha = alpha;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Socnn::new(cfg.clone(), &mut rng)?;
            let mut report = run_training(&mut m, data, &tc)?;
            report.model = "socnn".into();
            report.config = json!({"train": tc, "model": cfg, "run_spec": spec});
            Ok((AnyModel::Socnn(m), report))
        }
        ModelKind::Cnn => {
            let cfg = spec.cnn_config(data.input_dim(), data.output_dim());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = Cnn::new(cfg.clone(), &mut rng)?;
            let mut report = run_training(&mut m, data, &tc)?;
            report.model = "cnn".into();
            report.config = json!({"train": tc, "model": cfg, "run_spec": spec});
            Ok((AnyModel::Cnn(m), report))
        }
        ModelKind::Var => {
            let train_idx = data.indices(Split::Train);
            let (w, t) = data.batch(&train_idx);
            let m = VarModel::fit(&w, &t, spec.ridge)?;
            let mut any = AnyModel::Var(m);
            let test = test_mse(&mut any, data, Split::Test)?;
            let val = test_mse(&mut any, data, Split::Val)?;
            let report = socnn_core::train::RunReport {
                model: "var".into(),
                config: json!({"ridge": spec.ridge, "run_spec": spec}),
                seed,
                epochs: vec![],
                best_epoch: 0,
                best_val_l2: val,
                final_test_mse: Some(test),
                stop_reason: "closed_form".into(),
                checkpoint: None,
            };
            Ok((any, report))
        }
    }
}

pub fn train(
    model: ModelKind,
    data_dir: &Path,
    seed: u64,
    out: &Path,
    config: Option<&str>,
) -> Result<String> {
    let spec = RunSpec::from_arg(config)?;
    let manifest = ManifestHandle::begin(
        out,
        "train",
        json!({"model": format!("{model:?}"), "data": path_str(data_dir), "spec": spec}),
        vec![path_str(&data_dir.join("frame.csv"))],
        vec![
            path_str(&out.join("model.ckpt")),
            path_str(&out.join("run_report.json")),
        ],
        Some(seed),
    )?;

    let result = (|| -> Result<String> {
        let data = load_windows(data_dir, spec.window, seed)?;
        eprintln!(
            "train: {} samples ({} train / {} val / {} test), d={} d_out={}",
            data.samples.len(),
            data.indices(Split::Train).len(),
            data.indices(Split::Val).len(),
            data.indices(Split::Test).len(),
            data.input_dim(),
            data.output_dim()
        );
        let (mut any, mut report) = train_model_on(model, &data, &spec, seed, None)?;
        let ckpt_path = out.join("model.ckpt");
        any.save(&ckpt_path)?;
        // stored relative to the report so reruns into different
        // directories stay byte-identical
        report.checkpoint = Some("model.ckpt".into());
        std::fs::write(
            out.join("run_report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        Ok(format!(
            "model={} test_mse={} best_val={} epochs={} checkpoint={}",
            report.model,
            report
                .final_test_mse
                .map_or("nan".into(), |v| v.to_string()),
            report.best_val_l2,
            report.epochs.len(),
            ckpt_path.display()
        ))
    })();

    match result {
        Ok(summary) => {
            let ok = manifest.finish(true)?;
            Ok(format!("status={} {}", if ok { "ok" } else { "failed" }, summary))
        }
        Err(e) => {
            let _ = manifest.finish(false);
            Err(e)
        }
    }
}

pub fn eval(
    ckpt: &Path,
    data_dir: &Path,
    seed: u64,
    out: &Path,
    config: Option<&str>,
    activation_samples: usize,
) -> Result<String> {
    let spec = RunSpec::from_arg(config)?;
    let mut model = AnyModel::load(ckpt)?;
    let is_socnn = matches!(model, AnyModel::Socnn(_));
    let mut outputs = vec![path_str(&out.join("eval.json"))];
    if is_socnn {
        outputs.push(path_str(&out.join("activations.csv")));
    }
    let manifest = ManifestHandle::begin(
        out,
        "eval",
        json!({"ckpt": path_str(ckpt), "data": path_str(data_dir), "spec": spec}),
        vec![path_str(ckpt), path_str(&data_dir.join("frame.csv"))],
        outputs,
        Some(seed),
    )?;

    let result = (|| -> Result<String> {
        let data = load_windows(data_dir, spec.window, seed)?;
        let test = test_mse(&mut model, &data, Split::Test)?;
        let val = test_mse(&mut model, &data, Split::Val)?;
        let train = test_mse(&mut model, &data, Split::Train)?;
        let report = json!({
            "model": model.kind(),
            "mse": {"train": train, "val": val, "test": test},
            "seed": seed,
        });
        std::fs::write(out.join("eval.json"), serde_json::to_string_pretty(&report)?)?;
        if let AnyModel::Socnn(socnn) = &mut model {
            let test_idx = data.indices(Split::Test);
            let chosen: Vec<usize> =
                test_idx.iter().copied().take(activation_samples).collect();
            export_activations(socnn, &data, &chosen, &out.join("activations.csv"))?;
        }
        Ok(format!("model={} test_mse={}", model.kind(), test))
    })();

    match result {
        Ok(summary) => {
            let ok = manifest.finish(true)?;
            Ok(format!("status={} {}", if ok { "ok" } else { "failed" }, summary))
        }
        Err(e) => {
            let _ = manifest.finish(false);
            Err(e)
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn robustness(
    ckpt: &Path,
    data_dir: &Path,
    seed: u64,
    out: &Path,
    config: Option<&str>,
    n_obs: usize,
    gammas: usize,
    range_sigmas: f64,
    lag_stride: usize,
) -> Result<String> {
    let spec = RunSpec::from_arg(config)?;
    let rspec = RobustnessSpec {
        n_obs,
        n_gammas: gammas,
        range_sigmas,
        lag_stride,
        seed,
    };
    let manifest = ManifestHandle::begin(
        out,
        "robustness",
        json!({"ckpt": path_str(ckpt), "data": path_str(data_dir), "spec": rspec, "window": spec.window}),
        vec![path_str(ckpt), path_str(&data_dir.join("frame.csv"))],
        vec![
            path_str(&out.join("robustness.csv")),
            path_str(&out.join("robustness.json")),
        ],
        Some(seed),
    )?;

    let result = (|| -> Result<String> {
        let mut model = AnyModel::load(ckpt)?;
        let data = load_windows(data_dir, spec.window, seed)?;
        let report = robustness_curve(&mut model, &data, &rspec)?;
        write_robustness_csv(&report, &out.join("robustness.csv"))?;
        std::fs::write(
            out.join("robustness.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        Ok(format!(
            "model={} gammas={} sigma={} clean_test_mse={}",
            model.kind(),
            report.rows.len(),
            report.sigma,
            report.clean_mse_test_origin
        ))
    })();

    match result {
        Ok(summary) => {
            let ok = manifest.finish(true)?;
            Ok(format!("status={} {}", if ok { "ok" } else { "failed" }, summary))
        }
        Err(e) => {
            let _ = manifest.finish(false);
            Err(e)
        }
    }
}

pub fn lemma(a: f64, b: f64, kmax: usize, n: usize, seed: u64, out: &Path) -> Result<String> {
    let manifest = ManifestHandle::begin(
        out,
        "lemma",
        json!({"a": a, "b": b, "kmax": kmax, "n": n}),
        vec![],
        vec![
            path_str(&out.join("lemma.csv")),
            path_str(&out.join("lemma.json")),
        ],
        Some(seed),
    )?;

    let result = (|| -> Result<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = lemma_verify(a, b, kmax, n, &mut rng)?;
        write_lemma_csv(&table, &out.join("lemma.csv"))?;
        std::fs::write(out.join("lemma.json"), serde_json::to_string_pretty(&table)?)?;
        let max_err = table
            .rows
            .iter()
            .map(|r| r.abs_err_a.max(r.abs_err_b))
            .fold(0.0f64, f64::max);
        Ok(format!(
            "a={} b={} kmax={} n={} max_abs_err={}",
            a, b, kmax, n, max_err
        ))
    })();

    match result {
        Ok(summary) => {
            let ok = manifest.finish(true)?;
            Ok(format!("status={} {}", if ok { "ok" } else { "failed" }, summary))
        }
        Err(e) => {
            let _ = manifest.finish(false);
            Err(e)
        }
    }
}

pub fn alpha_grid(
    data_dir: &Path,
    alphas_arg: &str,
    seeds_arg: &str,
    jobs: usize,
    out: &Path,
    config: Option<&str>,
) -> Result<String> {
    let spec = RunSpec::from_arg(config)?;
    let alphas: Vec<f64> = parse_list(alphas_arg, "alpha")?;
    let seeds: Vec<u64> = parse_list(seeds_arg, "seed")?;
    if alphas.is_empty() || seeds.is_empty() {
        return Err(Error::Config("alpha grid needs alphas and seeds".into()));
    }
    let manifest = ManifestHandle::begin(
        out,
        "alpha_grid",
        json!({"data": path_str(data_dir), "alphas": alphas, "seeds": seeds, "jobs": jobs, "spec": spec}),
        vec![path_str(&data_dir.join("frame.csv"))],
        vec![
            path_str(&out.join("alpha_grid.csv")),
            path_str(&out.join("alpha_grid.json")),
        ],
        None,
    )?;

    let result = (|| -> Result<String> {
        let result = run_alpha_grid(&alphas, &seeds, jobs, |alpha, seed| {
            let data = load_windows(data_dir, spec.window, seed)?;
            let (_, report) = train_model_on(ModelKind::Socnn, &data, &spec, seed, Some(alpha))?;
            report
                .final_test_mse
                .ok_or_else(|| Error::Empty("no test split for alpha grid"))
        })?;
        write_alpha_csv(&result, &out.join("alpha_grid.csv"))?;
        std::fs::write(
            out.join("alpha_grid.json"),
            serde_json::to_string_pretty(&json!({
                "result": result,
                "alphas": alphas,
                "seeds": seeds,
                "monotone_decreasing": result.monotone_decreasing,
            }))?,
        )?;
        Ok(format!(
            "alphas={} seeds={} monotone_decreasing={:?}",
            alphas.len(),
            seeds.len(),
            result.monotone_decreasing
        ))
    })();

    match result {
        Ok(summary) => {
            let ok = manifest.finish(true)?;
            Ok(format!("status={} {}", if ok { "ok" } else { "failed" }, summary))
        }
        Err(e) => {
            let _ = manifest.finish(false);
            Err(e)
        }
    }
}
