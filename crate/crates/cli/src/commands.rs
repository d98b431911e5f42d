use std::path::Path;

use loadcast::dataset::{build_training_windows, build_windows, HOURS_PER_DAY, HOURS_PER_WEEK};
use loadcast::experiments::{
    run_grid, sweep_complexity_elman, sweep_delays, sweep_inputs, sweep_structures, write_curve_csv,
    GridConfig, SweepKind,
};
use loadcast::forecast::forecast_recursive;
use loadcast::io::write_atomic;
use loadcast::model_file::Provenance;
use loadcast::training::{self, train_multi_restart};
use loadcast::{
    catalog_structure, evaluate, load_csv, persistence_baseline, synthesize, Error, LoadSeries,
    ModelFile, Result, SynthParams, TrainConfig, WindowSpec,
};

use crate::{ContinueArgs, ForecastArgs, GenArgs, GridArgs, SweepArgs, TrainArgs, TrainingFlags};

fn train_config(flags: &TrainingFlags, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        error_goal: flags.goal,
        learning_rate: flags.lr,
        restarts: flags.restarts,
        seed: flags.seed,
        bptt_truncation: flags.bptt,
        freeze_recurrent: false,
    }
}

fn training_span(series: &LoadSeries, train_days: usize) -> Result<LoadSeries> {
    let n = train_days * HOURS_PER_DAY;
    if train_days == 0 || series.len() < n {
        return Err(Error::InvalidArgument(format!(
            "insufficient data: --train-days {train_days} needs {n} samples, file has {}",
            series.len()
        )));
    }
    series.slice(0..n)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn gen(a: GenArgs) -> Result<()> {
    let defaults = SynthParams::default();
    let params = SynthParams {
        noise_fraction: a.noise.unwrap_or(defaults.noise_fraction),
        weekend_factor: a.weekend_factor.unwrap_or(defaults.weekend_factor),
        base_kw: a.base_kw.unwrap_or(defaults.base_kw),
        ..defaults
    };
    let series: LoadSeries = synthesize(a.days, a.seed, &params)?;
    series.write_csv(&a.out)?;
    println!("wrote {} hourly samples to {}", series.len(), a.out.display());
    Ok(())
}

pub fn train_cmd(a: &TrainArgs) -> Result<ModelFile> {
    let series: LoadSeries = load_csv(&a.data)?;
    let span = training_span(&series, a.training.train_days)?;
    let spec = WindowSpec::new(a.delay, a.inputs)?;
    let structure = catalog_structure(a.network)?;
    let ds = build_training_windows(&span, spec)?;
    let cfg = train_config(&a.training, a.epochs);
    let r = train_multi_restart(a.family, structure, &ds, &cfg)?;
    let provenance = Provenance {
        seed: r.seed.unwrap_or(cfg.seed),
        learning_rate: cfg.learning_rate,
        restarts: cfg.restarts,
        epochs: cfg.epochs,
        epochs_run: r.stopped_at_epoch,
        final_error: r.final_error(),
        goal_reached: r.goal_reached,
        train_samples: span.len(),
    };
    if let Some(path) = &a.curve_out {
        write_curve_csv(path, &r.error_curve)?;
    }
    println!(
        "{} {structure} {spec}: best seed {} final mse {:e} after {} epochs{}",
        a.family,
        provenance.seed,
        provenance.final_error,
        r.stopped_at_epoch,
        if r.goal_reached { " (goal reached)" } else { "" }
    );
    ModelFile::new(r.best, spec, ds.norm, provenance)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let model = train_cmd(&a)?;
    model.save(&a.out_model)
}

pub fn continue_training(a: ContinueArgs) -> Result<()> {
    let mut model = ModelFile::load(&a.model)?;
    let series: LoadSeries = load_csv(&a.data)?;
    let n = model.provenance.train_samples;
    if series.len() < n {
        return Err(Error::InvalidArgument(format!(
            "model was trained on {n} samples, {} has only {}",
            a.data.display(),
            series.len()
        )));
    }
    let span = series.slice(0..n)?;
    let ds = build_windows(&span, model.window, model.norm)?;
    let cfg = TrainConfig {
        epochs: a.extra_epochs,
        error_goal: a.goal,
        learning_rate: a.lr.unwrap_or(model.provenance.learning_rate),
        restarts: 1,
        seed: model.provenance.seed,
        bptt_truncation: a.bptt,
        freeze_recurrent: false,
    };
    let r = training::train(model.network.clone(), &ds, &cfg)?;
    if let Some(path) = &a.curve_out {
        write_curve_csv(path, &r.error_curve)?;
    }
    println!(
        "continued {} epochs: mse {:e} -> {:e}",
        r.stopped_at_epoch,
        r.error_curve[0],
        r.final_error()
    );
    model.provenance.epochs = cfg.epochs;
    model.provenance.epochs_run += r.stopped_at_epoch;
    model.provenance.final_error = r.final_error();
    model.provenance.goal_reached = r.goal_reached;
    model.network = r.best;
    model.provenance.learning_rate = cfg.learning_rate;
    let model = ModelFile::new(model.network, model.window, model.norm, model.provenance)?;
    model.save(a.out_model.as_deref().unwrap_or(&a.model))
}

pub fn forecast(a: ForecastArgs) -> Result<()> {
    let model = ModelFile::load(&a.model)?;
    let series: LoadSeries = load_csv(&a.data)?;
    let n = a
        .history_hours
        .unwrap_or(model.provenance.train_samples)
        .min(series.len());
    if n == 0 {
        return Err(Error::InvalidArgument("history is empty".into()));
    }
    let history = series.slice(0..n)?;
    let mut f = forecast_recursive(&model.network, &model.norm, &history, model.window, a.horizon_hours)?;
    if series.len() >= n + a.horizon_hours {
        f = f.with_actual(&series.values[n..n + a.horizon_hours])?;
    }
    f.write_csv(&a.out)?;
    match (&f.metrics, &f.actual) {
        (Some(m), Some(actual)) => {
            let baseline = if history.len() >= HOURS_PER_WEEK {
                let p = persistence_baseline(&history, a.horizon_hours)?;
                format!(", weekly persistence MAPE {:.3}%", evaluate(&p, actual)?.mape)
            } else {
                String::new()
            };
            println!(
                "{}-hour forecast: MAPE {:.3}%, max abs error {:.3} kW{baseline}",
                a.horizon_hours, m.mape, m.max_abs_error
            );
        }
        _ => println!("{}-hour forecast written (no actuals available)", a.horizon_hours),
    }
    Ok(())
}

pub fn grid(a: GridArgs) -> Result<()> {
    let series: LoadSeries = load_csv(&a.data)?;
    let cfg = GridConfig {
        train: train_config(&a.training, a.epochs),
        train_days: a.training.train_days,
        test_days: a.test_days,
        families: a.families.clone(),
        filter: a.filter.parse()?,
        record_timings: a.timings,
    };
    let report = run_grid(&series, &cfg)?;
    if let Some(dir) = &a.curves_dir {
        ensure_dir(dir)?;
        report.write_curves(dir)?;
    }
    report.write_json(&a.report_out)?;
    let failed = report.cells.iter().filter(|c| c.error.is_some()).count();
    println!("{} cells ({failed} failed)", report.cells.len());
    for best in [&report.best_feedforward, &report.best_elman].into_iter().flatten() {
        println!(
            "best {}: network {} {}: test MAPE {:.3}%",
            best.family,
            best.network_number,
            best.spec,
            best.test_mape.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let series: LoadSeries = load_csv(&a.data)?;
    let cfg = train_config(&a.training, a.epochs);
    let days = a.training.train_days;
    let report = match a.kind {
        SweepKind::Inputs => sweep_inputs(&series, a.family, a.network, a.delay, &cfg, days)?,
        SweepKind::Structures => sweep_structures(&series, a.family, a.inputs, a.delay, &cfg, days)?,
        SweepKind::Delays => sweep_delays(&series, a.family, a.network, a.inputs, &cfg, days)?,
        SweepKind::ElmanComplexity => sweep_complexity_elman(&series, &cfg, days)?,
    };
    if let Some(dir) = &a.curves_dir {
        ensure_dir(dir)?;
        report.write_curves(dir)?;
    }
    write_atomic(&a.out, report.to_json().as_bytes())?;
    for c in &report.curves {
        println!("{:32} final mse {:e}", c.label, c.final_error);
    }
    println!("winner: {}", report.winner);
    Ok(())
}
