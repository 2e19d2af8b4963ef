use std::collections::HashMap;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use super::{meta_beside, BaselineArgs, EvalArgs, FeatureKind, FeaturesArgs, GenArgs, Method, ModeArg, TrainArgs};
use crate::adapt::{
    best_row, gfk_grid, sa_grid, sweep_gfk, sweep_sa, sweep_tca, sweep_to_csv, tca_grid, SweepData,
};
use crate::data::io::{read_text, write_text};
use crate::data::{
    generate_synthetic, load_feature_csv, load_manifest, parse_feature_csv, parse_manifest,
    parse_predictions, read_pgm, write_feature_csv, write_manifest, write_pgm, write_predictions,
    DomainData, Manifest, MetricsReport, SyntheticConfig, SyntheticMode,
};
use crate::error::{contract, io_err, Error, Result};
use crate::features::{landmarks_to_csv, lbp_u2_histogram, load_landmarks, sift_at_landmarks};
use crate::linalg::Matrix;
use crate::nn::{write_checkpoint, Architecture, OptimizerConfig};
use crate::tdtl::{loss_history_csv, predict_labels, predictions, train, TrainData, TrainSchedule};
use crate::seeded_rng;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Parent directory of a file output, created if missing.
fn create_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

pub(super) fn gen(a: &GenArgs, meta: &str) -> Result<()> {
    let cfg = SyntheticConfig {
        classes: a.classes,
        views_per_domain: a.views,
        samples_per_cell: a.per_cell,
        mode: match a.mode {
            ModeArg::Feature => SyntheticMode::Feature,
            ModeArg::Image => SyntheticMode::Image,
        },
        class_weights: a.class_weights.clone(),
        shift_magnitude: a.shift,
        shift_angle_deg: a.shift_angle,
        rotation_step_deg: a.rotation_step,
        target_rotation_deg: a.target_rotation,
        noise_std: a.noise,
        target_noise_scale: a.target_noise_scale,
        seed: a.seed,
    };
    let data = generate_synthetic(&cfg)?;
    create_dir(&a.out)?;
    let mut landmark_rows = Vec::new();
    for (name, domain) in [("source", &data.source), ("target", &data.target)] {
        write_manifest(&domain.manifest, a.out.join(format!("{name}_manifest.csv")))?;
        match &domain.features {
            Some(x) => write_feature_csv(&domain.manifest, x, a.out.join(format!("{name}_features.csv")))?,
            None => write_images(domain, &a.out, &mut landmark_rows)?,
        }
    }
    if cfg.mode == SyntheticMode::Image {
        let text = landmarks_to_csv(landmark_rows.iter().map(|(id, set)| (id.as_str(), *set)));
        write_text(&a.out.join("landmarks.csv"), &text)?;
    }
    write_text(&a.out.join("run_meta.txt"), meta)?;
    println!(
        "gen: {} source + {} target samples, {} classes, {:?} mode, seed {} -> {}",
        data.source.manifest.len(),
        data.target.manifest.len(),
        cfg.classes,
        a.mode,
        a.seed,
        a.out.display()
    );
    Ok(())
}

fn write_images<'a>(
    domain: &'a DomainData,
    out: &Path,
    landmarks: &mut Vec<(String, &'a crate::features::LandmarkSet)>,
) -> Result<()> {
    for (i, r) in domain.manifest.records().iter().enumerate() {
        let path = out.join(&r.path);
        create_parent(&path)?;
        write_pgm(&domain.images[i], &path)?;
        landmarks.push((r.id.clone(), &domain.landmarks[i]));
    }
    Ok(())
}

pub(super) fn features(a: &FeaturesArgs, meta: &str) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let base = a.manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let landmarks = match (a.kind, &a.landmarks) {
        (FeatureKind::Sift, Some(p)) => Some(load_landmarks(p)?),
        (FeatureKind::Sift, None) => return Err(contract("sift needs --landmarks")),
        (FeatureKind::Lbp, _) => None,
    };
    let mut rows = Vec::with_capacity(manifest.len());
    for r in manifest.records() {
        if r.path.is_empty() {
            return Err(Error::Validation(format!("sample {:?} has no image path", r.id)));
        }
        let img = read_pgm(base.join(&r.path))?;
        let fv = match &landmarks {
            None => lbp_u2_histogram(&img)?,
            Some(all) => {
                let set = all
                    .get(&r.id)
                    .ok_or_else(|| Error::Validation(format!("no landmarks for image {:?}", r.id)))?;
                sift_at_landmarks(&img, set)
            }
        };
        rows.push(fv.values);
    }
    let dim = rows.first().map_or(0, Vec::len);
    let x = Matrix::from_vec(rows.len(), dim, rows.concat())?;
    create_parent(&a.out)?;
    write_feature_csv(&manifest, &x, &a.out)?;
    write_text(&meta_beside(&a.out), meta)?;
    println!("features: {} rows x {dim} ({:?}) -> {}", x.rows(), a.kind, a.out.display());
    Ok(())
}

fn class_count(a: &Manifest, b: &Manifest) -> usize {
    a.class_count().max(b.class_count())
}

fn class_names(a: &Manifest, b: &Manifest) -> Vec<String> {
    if a.class_count() >= b.class_count() {
        a.class_names().to_vec()
    } else {
        b.class_names().to_vec()
    }
}

fn source_labels(m: &Manifest) -> Result<Vec<usize>> {
    m.known_labels()
        .ok_or_else(|| Error::Validation("every source sample needs a label".into()))
}

pub(super) fn train_tdtl(a: &TrainArgs, meta: &str) -> Result<()> {
    let (xs, ms) = load_feature_csv(&a.source)?;
    let (xt, mt) = load_feature_csv(&a.target)?;
    let ys = source_labels(&ms)?;
    let classes = class_count(&ms, &mt);
    let arch = Architecture::tdtl(xs.cols(), &a.hidden, classes, a.dropout)?;
    let schedule = TrainSchedule {
        epochs_max: a.epochs,
        batch_size: a.batch_size,
        source_fraction: a.source_fraction,
        alternation: a.schedule.0.clone(),
        convergence_rel_tol: a.tol,
        convergence_window: a.window,
    };
    let optimizer = OptimizerConfig {
        learning_rate_backbone: a.lr_backbone,
        learning_rate_transfer: a.lr_transfer,
        learning_rate_labels: a.lr_labels,
        seed: a.seed,
    };
    let ids = mt.ids();
    let data = TrainData {
        xs: &xs,
        ys: &ys,
        xt: &xt,
        target_ids: &ids,
        classes,
    };
    let model = train(&data, &arch, &schedule, a.alpha, &optimizer, &mut seeded_rng(a.seed))?;

    create_dir(&a.out)?;
    let ckpt = a.out.join("checkpoint.bin");
    let file = fs::File::create(&ckpt).map_err(io_err(&ckpt))?;
    write_checkpoint(&model.params, BufWriter::new(file))?;
    let pred = predict_labels(&model.labels);
    write_predictions(&predictions(&ids, &pred, &mt.labels())?, a.out.join("predictions.csv"))?;
    write_text(&a.out.join("loss_history.csv"), &loss_history_csv(&model.loss_history))?;
    let zero_fraction = model.labels.zero_fraction();
    let mut summary = format!(
        "metric,value\nepochs_run,{}\nsteps,{}\nlabel_zero_fraction,{zero_fraction:.6}\n",
        model.epochs_run,
        model.loss_history.len()
    );
    let mut line = format!(
        "train-tdtl: {} epochs, P^t zero fraction {zero_fraction:.4}",
        model.epochs_run
    );
    if let Some(yt) = mt.known_labels() {
        let report = MetricsReport::evaluate(&pred, &yt, classes)?;
        write_text(&a.out.join("metrics.csv"), &report.to_csv(&class_names(&ms, &mt)))?;
        summary.push_str(&format!("accuracy_percent,{:.4}\n", report.accuracy_percent));
        line.push_str(&format!(
            ", accuracy {:.2}%, macro F1 {:.4}",
            report.accuracy_percent, report.f1_macro
        ));
    }
    write_text(&a.out.join("summary.csv"), &summary)?;
    write_text(&a.out.join("run_meta.txt"), meta)?;
    println!("{line}");
    Ok(())
}

/// Grid override for a dimension sweep: every value must be a positive integer.
fn dims(grid: &[f64]) -> Result<Vec<usize>> {
    grid.iter()
        .map(|&v| {
            if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
                Ok(v as usize)
            } else {
                Err(contract(format!("dimension grid value {v} is not a positive integer")))
            }
        })
        .collect()
}

pub(super) fn baseline(a: &BaselineArgs, meta: &str) -> Result<()> {
    let (xs, ms) = load_feature_csv(&a.source)?;
    let (xt, mt) = load_feature_csv(&a.target)?;
    let ys = source_labels(&ms)?;
    let yt = mt
        .known_labels()
        .ok_or_else(|| Error::Validation("baseline sweeps are scored on target labels; some are -1".into()))?;
    let data = SweepData {
        xs: &xs,
        ys: &ys,
        xt: &xt,
        yt: &yt,
        classes: class_count(&ms, &mt),
    };
    let (name, rows) = match a.method {
        Method::Sa => {
            let grid = a.grid.as_deref().map(dims).transpose()?.unwrap_or_else(sa_grid);
            ("sa", sweep_sa(&data, &grid)?)
        }
        Method::Gfk => {
            let grid = a.grid.as_deref().map(dims).transpose()?.unwrap_or_else(gfk_grid);
            ("gfk", sweep_gfk(&data, &grid)?)
        }
        Method::Tca => {
            let grid = a.grid.clone().unwrap_or_else(tca_grid);
            ("tca", sweep_tca(&data, &grid, a.components)?)
        }
    };
    create_dir(&a.out)?;
    write_text(&a.out.join(format!("sweep_{name}.csv")), &sweep_to_csv(&rows))?;
    write_text(&a.out.join("run_meta.txt"), meta)?;
    if let Some(best) = best_row(&rows) {
        println!(
            "best: {} {}={} accuracy={:.4} f1_macro={:.4}",
            best.method, best.param, best.value, best.accuracy, best.f1_macro
        );
    }
    Ok(())
}

type TruthMap = HashMap<String, Option<usize>>;

/// Truth labels by sample id from a predictions, manifest or feature CSV.
/// A predictions file contributes its `predicted_class` column.
fn load_truth(path: &Path) -> Result<(TruthMap, Option<Manifest>)> {
    let text = read_text(path)?;
    let name = path.display().to_string();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap_or("");
    if header.starts_with("sample_id,") {
        let rows = parse_predictions(&text, &name)?;
        let map = rows.into_iter().map(|r| (r.sample_id, Some(r.predicted_class))).collect();
        return Ok((map, None));
    }
    let manifest = if header.starts_with("id,path,") {
        parse_manifest(&text, &name)?
    } else {
        parse_feature_csv(&text, &name)?.1
    };
    let map = manifest.records().iter().map(|r| (r.id.clone(), r.label)).collect();
    Ok((map, Some(manifest)))
}

pub(super) fn eval(a: &EvalArgs, meta: &str) -> Result<()> {
    let text = read_text(&a.predictions)?;
    let rows = parse_predictions(&text, &a.predictions.display().to_string())?;
    let (truth_of, manifest) = match &a.truth {
        Some(p) => {
            let (map, m) = load_truth(p)?;
            (Some(map), m)
        }
        None => (None, None),
    };
    let mut pred = Vec::with_capacity(rows.len());
    let mut truth = Vec::with_capacity(rows.len());
    for r in &rows {
        let t = match &truth_of {
            Some(map) => *map
                .get(&r.sample_id)
                .ok_or_else(|| Error::Validation(format!("no truth for sample {:?}", r.sample_id)))?,
            None => r.true_class,
        };
        let t = t.ok_or_else(|| Error::Validation(format!("truth for sample {:?} is unknown (-1)", r.sample_id)))?;
        pred.push(r.predicted_class);
        truth.push(t);
    }
    let largest = pred.iter().chain(&truth).max().map_or(0, |m| m + 1);
    let classes = match a.classes {
        Some(c) => c,
        None => manifest.as_ref().map_or(largest, Manifest::class_count).max(largest),
    };
    let names: Vec<String> = match &manifest {
        Some(m) if m.class_count() == classes => m.class_names().to_vec(),
        _ => (0..classes).map(|k| k.to_string()).collect(),
    };
    let report = MetricsReport::evaluate(&pred, &truth, classes)?;
    create_parent(&a.out)?;
    write_text(&a.out, &report.to_csv(&names))?;
    write_text(&meta_beside(&a.out), meta)?;
    println!(
        "eval: {} samples, accuracy {:.2}%, macro F1 {:.4}",
        rows.len(),
        report.accuracy_percent,
        report.f1_macro
    );
    Ok(())
}
