use super::*;
use crate::data::{load_feature_csv, load_manifest, load_predictions};

fn run_ok(args: &[&str]) {
    let mut full = vec!["tdtl"];
    full.extend_from_slice(args);
    assert_eq!(run(full), EXIT_OK, "{args:?}");
}

fn code(args: &[&str]) -> i32 {
    let mut full = vec!["tdtl"];
    full.extend_from_slice(args);
    run(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn alternation_parses_pairs() {
    assert_eq!(parse_alternation("1,0;0,1").unwrap(), Alternation(vec![(1.0, 0.0), (0.0, 1.0)]));
    assert_eq!(parse_alternation("0.5, 2").unwrap(), Alternation(vec![(0.5, 2.0)]));
    assert!(parse_alternation("1;0").is_err());
    assert!(parse_alternation("a,b").is_err());
}

#[test]
fn config_lines() {
    let m = parse_config("# comment\n\nalpha = 0\n--epochs=3\n", "c.txt").unwrap();
    assert_eq!(m["alpha"], "0");
    assert_eq!(m["epochs"], "3");
    let err = parse_config("alpha\n", "c.txt").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 1, .. }));
}

#[test]
fn flags_win_over_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.txt");
    fs_write(&cfg, "seed=5\nclasses=3\n");
    let args: Vec<OsString> = ["tdtl", "gen", "--seed", "9", "--out", "x", "--config", s(&cfg)]
        .iter()
        .map(OsString::from)
        .collect();
    let merged = merge_config(args).unwrap();
    let cli = Cli::try_parse_from(merged).unwrap();
    let Command::Gen(g) = cli.command else { panic!("gen expected") };
    assert_eq!(g.seed, 9);
    assert_eq!(g.classes, 3);
}

fn fs_write(p: &Path, text: &str) {
    std::fs::write(p, text).unwrap();
}

#[test]
fn exit_code_contract() {
    assert_eq!(exit_code(&Error::Validation("x".into())), EXIT_USAGE);
    assert_eq!(exit_code(&Error::Infeasible("x".into())), EXIT_RUNTIME);
    assert_eq!(exit_code(&Error::Divergence { step: 0, loss: f64::NAN }), EXIT_RUNTIME);
    let io = Error::Io {
        path: "x".into(),
        source: std::io::Error::other("boom"),
    };
    assert_eq!(exit_code(&io), EXIT_IO);
}

#[test]
fn meta_sits_beside_file_outputs() {
    assert_eq!(meta_beside(Path::new("a/m.csv")), PathBuf::from("a/m.csv.run_meta.txt"));
}

#[test]
fn usage_errors() {
    assert_eq!(code(&["gen"]), EXIT_USAGE);
    assert_eq!(code(&["baseline", "--method", "pca", "--source", "a", "--target", "b", "--out", "c"]), EXIT_USAGE);
    assert_eq!(code(&["features", "--kind", "sift", "--manifest", "m.csv", "--out", "f.csv"]), EXIT_USAGE);
    assert_eq!(code(&["train-tdtl", "--source", "a", "--target", "b", "--out", "c", "--schedule", "x"]), EXIT_USAGE);
}

#[test]
fn missing_input_is_io() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("o");
    assert_eq!(
        code(&["baseline", "--method", "sa", "--source", s(&missing), "--target", s(&missing), "--out", s(&out)]),
        EXIT_IO
    );
}

#[test]
fn feature_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    run_ok(&["gen", "--seed", "7", "--out", s(&data), "--per-cell", "10"]);
    for f in ["source_manifest.csv", "target_manifest.csv", "source_features.csv", "target_features.csv", "run_meta.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }
    let (xs, ms) = load_feature_csv(data.join("source_features.csv")).unwrap();
    assert_eq!((xs.rows(), ms.class_count()), (80, 4));

    let src = data.join("source_features.csv");
    let tgt = data.join("target_features.csv");
    let run_dir = d.join("run");
    run_ok(&[
        "train-tdtl", "--source", s(&src), "--target", s(&tgt), "--out", s(&run_dir), "--epochs", "2", "--hidden", "8",
    ]);
    for f in ["checkpoint.bin", "predictions.csv", "loss_history.csv", "metrics.csv", "summary.csv", "run_meta.txt"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    assert!(metrics.contains("accuracy_percent,"));

    // self-evaluation of a predictions file is perfect
    let preds = run_dir.join("predictions.csv");
    let m = d.join("self.csv");
    run_ok(&["eval", "--predictions", s(&preds), "--truth", s(&preds), "--out", s(&m)]);
    assert!(std::fs::read_to_string(&m).unwrap().contains("accuracy_percent,100.0000"));
    assert!(d.join("self.csv.run_meta.txt").exists());

    // truth from the target feature file reproduces the training report
    let m2 = d.join("vs_features.csv");
    run_ok(&["eval", "--predictions", s(&preds), "--truth", s(&tgt), "--out", s(&m2)]);
    assert_eq!(std::fs::read_to_string(&m2).unwrap(), metrics);

    let base = d.join("tca");
    run_ok(&["baseline", "--method", "tca", "--grid", "5", "--source", s(&src), "--target", s(&tgt), "--out", s(&base)]);
    let sweep = std::fs::read_to_string(base.join("sweep_tca.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2);
}

#[test]
fn zero_epochs_predict_the_initial_label_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(&["gen", "--out", s(d), "--per-cell", "5"]);
    let out = d.join("run");
    run_ok(&[
        "train-tdtl",
        "--source",
        s(&d.join("source_features.csv")),
        "--target",
        s(&d.join("target_features.csv")),
        "--out",
        s(&out),
        "--epochs",
        "0",
        "--seed",
        "3",
    ]);
    let (xs, ms) = load_feature_csv(d.join("source_features.csv")).unwrap();
    let (_, mt) = load_feature_csv(d.join("target_features.csv")).unwrap();
    let arch = crate::nn::Architecture::tdtl(xs.cols(), &[64, 32], ms.class_count(), 0.5).unwrap();
    let mut rng = crate::seeded_rng(3);
    crate::nn::init_network(&arch, &mut rng).unwrap();
    let initial = crate::tdtl::TargetLabelMatrix::random(mt.ids(), 4, &mut rng);
    let want = crate::tdtl::predict_labels(&initial);
    let got: Vec<usize> = load_predictions(out.join("predictions.csv"))
        .unwrap()
        .iter()
        .map(|r| r.predicted_class)
        .collect();
    assert_eq!(got, want);
}

#[test]
fn image_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(&["gen", "--mode", "image", "--out", s(d), "--per-cell", "2", "--classes", "2", "--views", "1"]);
    let manifest = d.join("source_manifest.csv");
    assert_eq!(load_manifest(&manifest).unwrap().len(), 4);
    let lbp = d.join("lbp.csv");
    run_ok(&["features", "--kind", "lbp", "--manifest", s(&manifest), "--out", s(&lbp)]);
    assert_eq!(load_feature_csv(&lbp).unwrap().0.cols(), crate::features::LBP_LENGTH);
    let sift = d.join("sift.csv");
    let lm = d.join("landmarks.csv");
    run_ok(&["features", "--kind", "sift", "--manifest", s(&manifest), "--landmarks", s(&lm), "--out", s(&sift)]);
    assert_eq!(load_feature_csv(&sift).unwrap().0.cols(), crate::features::SIFT_LENGTH);
}
