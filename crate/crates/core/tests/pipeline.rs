use std::fs;
use std::path::Path;

use colog_core::config::Config;
use colog_core::eval::{self, FileWeighting};
use colog_core::modality::{Dataset, Split};
use colog_core::pipeline::{self, Layout};
use colog_core::{Error, Exec};

fn tiny(work: &Path, parallel: bool) -> Config {
    let mut c = Config::default();
    c.pipeline.work_dir = work.to_path_buf();
    c.pipeline.parallel = parallel;
    c.synth.lines = 500;
    c.prepare.l_sem = 12;
    c.prepare.l_seq = 4;
    c.prepare.embed_dim = 16;
    c.prepare.embed_word_dim = 8;
    c.model.d_word = 8;
    c.model.hidden = 8;
    c.model.heads = 2;
    c.model.layers = 1;
    c.model.ffn_inner = 16;
    c.model.latent = 16;
    c.train.lr = 2e-3;
    c.train.warmup_epochs = 1;
    c.train.max_epochs = 25;
    c
}

#[test]
fn early_stopping_honours_patience() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), true);
    let run = pipeline::run_all(&cfg, |_| {}).unwrap();
    let fit = &run.fit;
    let epochs = fit.history.len();
    let best = fit
        .history
        .iter()
        .fold((0, f64::NEG_INFINITY), |(e, f), r| if r.val_f1 > f { (r.epoch, r.val_f1) } else { (e, f) });
    assert_eq!(fit.best_epoch, best.0);
    assert_eq!(fit.best_val_f1, best.1);
    if fit.stopped_early {
        assert_eq!(epochs, fit.best_epoch + cfg.train.early_stop_patience);
    } else {
        assert_eq!(epochs, cfg.train.max_epochs);
    }
    let csv = fs::read_to_string(Layout::new(&cfg).history()).unwrap();
    assert_eq!(csv.lines().count(), epochs + 1);
}

#[test]
fn reloaded_checkpoint_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(dir.path(), true);
    let run = pipeline::run_all(&cfg, |_| {}).unwrap();
    let ds = Dataset::load(&Layout::new(&cfg).prepared()).unwrap();
    let model = pipeline::load_model(&cfg, &ds).unwrap();
    let (again, _) =
        eval::evaluate(&model, &ds, Split::Test, 64, FileWeighting::Uniform, Exec::Sequential).unwrap();
    assert_eq!(again.confusion, run.report.confusion);
    assert_eq!(again.metrics.macro_f1, run.report.metrics.macro_f1);
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = pipeline::run_all(&tiny(a.path(), false), |_| {}).unwrap();
    let rb = pipeline::run_all(&tiny(b.path(), true), |_| {}).unwrap();
    let loss = |r: &pipeline::PipelineRun| r.fit.history.iter().map(|e| e.train_loss).collect::<Vec<_>>();
    assert_eq!(loss(&ra), loss(&rb));
    let ca = fs::read(Layout::new(&tiny(a.path(), false)).checkpoint()).unwrap();
    let cb = fs::read(Layout::new(&tiny(b.path(), true)).checkpoint()).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn balancing_only_touches_training_samples() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), true);
    cfg.synth.anomaly_ratio = 0.3;
    pipeline::synth(&cfg).unwrap();
    pipeline::parse(&cfg).unwrap();
    let before = pipeline::prepare(&cfg).unwrap();
    pipeline::balance(&cfg).unwrap();
    let after = pipeline::training_dataset(&cfg).unwrap();
    assert_eq!(before.samples.len(), after.samples.len());
    for (x, y) in before.samples.iter().zip(&after.samples) {
        if x.split != Split::Train {
            assert_eq!(x.split, y.split);
        } else {
            assert!(matches!(y.split, Split::Train | Split::Dropped));
        }
    }
}

#[test]
fn word_vectors_seed_training() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(dir.path(), true);
    cfg.train.max_epochs = 2;
    pipeline::synth(&cfg).unwrap();
    pipeline::parse(&cfg).unwrap();
    pipeline::prepare(&cfg).unwrap();
    pipeline::balance(&cfg).unwrap();

    let bad = dir.path().join("bad.vec");
    fs::write(&bad, "session 0.1 0.2\n").unwrap();
    cfg.prepare.word_vectors = Some(bad);
    assert!(matches!(pipeline::train(&cfg, |_| {}), Err(Error::Data(_))));

    let good = dir.path().join("good.vec");
    fs::write(&good, "2 8\nsession 1 1 1 1 1 1 1 1\nroot 0 0 0 0 0 0 0 1\n").unwrap();
    cfg.prepare.word_vectors = Some(good);
    pipeline::train(&cfg, |_| {}).unwrap();
}
