use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csae_core::checkpoint::{load_checkpoint, save_checkpoint};
use csae_core::classic::{self, ClassicOptions, LatentDataset, Method, SvmStatus};
use csae_core::data::{load_idx, load_idx_images, normalize01, resize_images, LabeledDataset};
use csae_core::metrics::MetricsReport;
use csae_core::nn::gradcheck_suite;
use csae_core::train::{evaluate, train_with_progress, EVAL_BATCH};
use csae_core::viz::{
    decision_boundary_image, decoder_grid_image, encode_pgm, export_latent_scatter, GridSpec,
};
use csae_core::{
    ArchPreset, CsaeModel, Error, PresetName, Result, Tensor, TrainConfig, UpdateMode,
};
use serde_json::json;

use crate::args::*;

fn metric(name: &str, value: impl Into<serde_json::Value>) {
    println!("{}", json!({ "metric": name, "value": value.into() }));
}

fn report_metrics(prefix: &str, m: &MetricsReport) {
    println!("{prefix}accuracy    {:.4}", m.accuracy);
    println!("{prefix}weighted F1 {:.4}", m.weighted_f1);
    metric("accuracy", m.accuracy);
    metric("weighted_f1", m.weighted_f1);
}

fn load_labeled(data: &DataArgs, side: Option<usize>, seed: u64) -> Result<LabeledDataset> {
    let raw = load_idx(&data.images, &data.labels)?;
    let mut set = raw.normalized(data.classes)?;
    if let Some(n) = data.subset {
        set = set.shuffled_subset(n, seed)?;
    }
    if let Some(side) = side {
        set.images = resize_images(&set.images, side)?;
    }
    Ok(set)
}

fn load_pair(
    images: &Path,
    labels: &Path,
    classes: usize,
    side: Option<usize>,
) -> Result<LabeledDataset> {
    let raw = load_idx(images, labels)?;
    let mut set = raw.normalized(Some(classes))?;
    if let Some(side) = side {
        set.images = resize_images(&set.images, side)?;
    }
    Ok(set)
}

fn load_images(path: &Path, side: usize) -> Result<Tensor> {
    resize_images(&normalize01(&load_idx_images(path)?), side)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let name = match a.preset {
        Preset::Small28 => PresetName::Small28,
        Preset::Large128 => PresetName::Large128,
    };
    let probe = ArchPreset::new(name, a.lambda, 2);
    let data = load_labeled(&a.data, Some(probe.input_side), a.seed)?;
    let mut preset = ArchPreset::new(name, a.lambda, data.num_classes);
    preset.conv_bias = !a.no_conv_bias;
    let model = CsaeModel::build(preset, a.seed)?;
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        update_mode: match a.update_mode {
            Mode::Joint => UpdateMode::Joint,
            Mode::HeadOnly => UpdateMode::HeadOnly,
        },
        ..TrainConfig::new(a.lambda)
    };
    println!(
        "training {name} lambda={} classes={} on {} samples ({} parameters, {} mode)",
        a.lambda,
        data.num_classes,
        data.len(),
        model.param_count(),
        config.update_mode
    );
    let (best, report) = train_with_progress(&model, &data, &config, |e| {
        eprintln!(
            "epoch {:>3}  recon {:.5}  cls {:.4}  train_acc {:.4}  val_acc {:.4}  lr {:.3e}",
            e.epoch + 1,
            e.recon_loss,
            e.cls_loss,
            e.train_acc,
            e.val_acc,
            e.lr
        );
    })?;
    save_checkpoint(&best, &a.checkpoint)?;
    let report_path = a.out.clone().unwrap_or_else(|| {
        let mut p = a.checkpoint.clone().into_os_string();
        p.push(".csv");
        PathBuf::from(p)
    });
    let mut w = create(&report_path)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    println!(
        "best epoch {} (val_acc {:.4}); checkpoint {}; report {}; {:.1}s",
        report.best_epoch + 1,
        report.best_val_acc,
        a.checkpoint.display(),
        report_path.display(),
        report.wall_time.as_secs_f64()
    );
    metric("best_epoch", report.best_epoch + 1);
    metric("best_val_acc", report.best_val_acc);
    metric("wall_time_s", report.wall_time.as_secs_f64());
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let data = load_pair(
        &a.images,
        &a.labels,
        model.num_classes(),
        Some(model.input_side()),
    )?;
    let e = evaluate(&model, &data)?;
    println!("{} samples", data.len());
    report_metrics("", &e.metrics);
    println!("recon loss  {:.5}", e.recon_loss);
    println!("cls loss    {:.5}", e.cls_loss);
    metric("recon_loss", e.recon_loss);
    metric("cls_loss", e.cls_loss);
    Ok(())
}

pub fn extract_latent(a: &ExtractArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    let mut data = load_labeled(&a.data, Some(model.input_side()), a.seed)?;
    data.num_classes = data.num_classes.max(model.num_classes());
    match a.format {
        LatentFormat::Latent => {
            let z = classic::extract_latent(&model, &data)?;
            let mut w = create(&a.out)?;
            z.write_csv(&mut w)?;
            w.flush()?;
        }
        LatentFormat::Scatter => export_latent_scatter(&model, &data, &a.out)?,
    }
    println!("wrote {} rows to {}", data.len(), a.out.display());
    metric("rows", data.len());
    Ok(())
}

pub fn classify_latent(a: &ClassifyArgs) -> Result<()> {
    let method = match a.method {
        MethodArg::Knn => Method::Knn,
        MethodArg::Gnb => Method::Gnb,
        MethodArg::Svm => Method::Svm,
    };
    let mut opts = ClassicOptions {
        neighbors: a.k,
        standardize: a.standardize_latent,
        ..ClassicOptions::default()
    };
    opts.svm.seed = a.seed;
    let (train_set, test_set, source) = if a.raw {
        let train = load_labeled(&a.data, None, a.seed)?;
        let test = load_pair(&a.test_images, &a.test_labels, train.num_classes, None)?;
        opts.standardize = true;
        (
            LatentDataset::from_pixels(&train)?,
            LatentDataset::from_pixels(&test)?,
            "standardized pixels",
        )
    } else {
        let path = a.checkpoint.as_ref().ok_or_else(|| {
            Error::InvalidArgument("--checkpoint is required unless --raw is given".into())
        })?;
        let model = load_checkpoint(path)?;
        let side = Some(model.input_side());
        let mut train = load_labeled(&a.data, side, a.seed)?;
        train.num_classes = train.num_classes.max(model.num_classes());
        let test = load_pair(&a.test_images, &a.test_labels, train.num_classes, side)?;
        (
            classic::extract_latent(&model, &train)?,
            classic::extract_latent(&model, &test)?,
            "latent codes",
        )
    };
    let out = classic::fit_predict(&train_set, &test_set, method, &opts)?;
    println!(
        "{method} on {source}: {} train / {} test samples, {} features",
        train_set.len(),
        test_set.len(),
        train_set.dim()
    );
    if let Some(SvmStatus::NotConverged { max_violation }) = out.svm_status {
        eprintln!(
            "warning: SMO stopped before convergence (max KKT violation {max_violation:.2e})"
        );
        metric("svm_max_kkt_violation", max_violation);
    }
    report_metrics("", &out.metrics);
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        writeln!(w, "true_label,predicted_label")?;
        for (t, p) in test_set.y.iter().zip(&out.predictions) {
            writeln!(w, "{t},{p}")?;
        }
        w.flush()?;
    }
    Ok(())
}

pub fn viz_boundary(a: &BoundaryArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    if model.lambda() != 2 {
        return Err(Error::InvalidArgument(format!(
            "viz-boundary draws the classifier over a two-dimensional latent plane, so it needs \
             a checkpoint trained with --lambda 2 (this one has lambda = {})",
            model.lambda()
        )));
    }
    let images = load_images(&a.images, model.input_side())?;
    let z = model.encode_batched(&images, EVAL_BATCH)?;
    let predicted: BTreeSet<usize> = model
        .classify_latent(&z)?
        .argmax_rows()?
        .into_iter()
        .collect();
    let grid = GridSpec::around(&z, a.resolution)?;
    let mut overlay = Vec::new();
    if a.overlay {
        let classes: Vec<usize> = match &a.labels {
            Some(path) => load_idx(&a.images, path)?.labels,
            None => model.classify_latent(&z)?.argmax_rows()?,
        };
        for (i, c) in classes.into_iter().enumerate() {
            overlay.push((z.row(i)[0] as f64, z.row(i)[1] as f64, c));
        }
    }
    let img = decision_boundary_image(&model, &grid, &overlay)?;
    img.write(&a.out)?;
    let grid_classes: BTreeSet<usize> = img.classes.iter().copied().collect();
    println!(
        "wrote {}x{} decision-boundary image to {}",
        a.resolution,
        a.resolution,
        a.out.display()
    );
    println!(
        "latent extent x [{:.4}, {:.4}] y [{:.4}, {:.4}]",
        grid.x_range.0, grid.x_range.1, grid.y_range.0, grid.y_range.1
    );
    println!("classes on grid {grid_classes:?}; predicted on input {predicted:?}");
    metric(
        "grid_classes",
        grid_classes.iter().copied().collect::<Vec<_>>(),
    );
    metric(
        "predicted_classes",
        predicted.iter().copied().collect::<Vec<_>>(),
    );
    metric(
        "grid_covers_predictions",
        predicted.is_subset(&grid_classes),
    );
    Ok(())
}

pub fn viz_decoder_grid(a: &DecoderGridArgs) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint)?;
    if model.lambda() != 2 {
        return Err(Error::InvalidArgument(format!(
            "viz-decoder-grid decodes points of a two-dimensional latent plane, so it needs a \
             checkpoint trained with --lambda 2 (this one has lambda = {})",
            model.lambda()
        )));
    }
    let images = load_images(&a.images, model.input_side())?;
    let z = model.encode_batched(&images, EVAL_BATCH)?;
    let grid = GridSpec::around(&z, a.resolution)?;
    let tile = a.tile.unwrap_or(model.input_side());
    let (side, gray) = decoder_grid_image(&model, &grid, tile)?;
    std::fs::write(&a.out, encode_pgm(side, side, &gray))?;
    println!(
        "wrote {side}x{side} mosaic ({0}x{0} tiles of {tile}px) to {1}",
        a.resolution,
        a.out.display()
    );
    metric("mosaic_side", side);
    Ok(())
}

/// Returns whether every check met its tolerance.
pub fn gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let reports = gradcheck_suite(a.seeds)?;
    let mut ok = true;
    for r in &reports {
        let status = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<26} max rel err {:.3e}  tol {:.0e}  seeds {}  {status}",
            r.name, r.max_rel_error, r.tolerance, r.seeds
        );
        println!(
            "{}",
            json!({
                "metric": format!("gradcheck.{}", r.name),
                "value": r.max_rel_error,
                "tolerance": r.tolerance,
                "passed": r.passed(),
            })
        );
        ok &= r.passed();
    }
    Ok(ok)
}
