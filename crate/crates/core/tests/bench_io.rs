use std::fs;

use roipca::bench::{
    emit_results, load_csv_dataset, run_experiment, AlgorithmSpec, CsvOptions, ExperimentResult, ExperimentSpec,
    Generator, TrialRecord,
};
use roipca::Error;

fn spec(generator: Generator, algorithms: &[&str]) -> ExperimentSpec {
    ExperimentSpec {
        generator,
        n0: 30,
        n_stream: 40,
        m: 3,
        algorithms: algorithms.iter().map(|a| AlgorithmSpec::parse(a).unwrap()).collect(),
        trials: 2,
        seed: 11,
        assume_centered: true,
        error_stride: None,
    }
}

#[test]
fn experiments_are_reproducible() {
    let s = spec(Generator::GaussianGamma { d: 8 }, &["roipca1", "froipca2", "ipca", "ccipca"]);
    let a = run_experiment(&s).unwrap();
    let b = run_experiment(&s).unwrap();
    assert_eq!(a.records.len(), 8);
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.algorithm, y.algorithm);
        assert_eq!(x.errors, y.errors);
    }
    let mut other = s.clone();
    other.seed = 12;
    assert_ne!(run_experiment(&other).unwrap().records[0].errors, a.records[0].errors);
}

#[test]
fn exactly_low_rank_data_tracks_reference() {
    let s = spec(Generator::RuntimeDiag { d: 12, spikes: 3 }, &["roipca1:mu=zero", "roipca2:mu=zero"]);
    let res = run_experiment(&s).unwrap();
    for r in &res.records {
        assert!(r.errors.iter().all(|&e| e <= 1e-8), "{}: {:?}", r.algorithm, r.errors);
    }
}

#[test]
fn batch_method_is_the_reference() {
    let mut s = spec(Generator::GaussianGamma { d: 6 }, &["batch"]);
    s.trials = 1;
    let res = run_experiment(&s).unwrap();
    assert!(res.records[0].errors.iter().all(|&e| e <= 1e-10));
}

#[test]
fn records_count_samples_and_steps() {
    let s = spec(Generator::GaussianGamma { d: 5 }, &["roipca1", "ipca", "ccipca", "batch"]);
    let res = run_experiment(&s).unwrap();
    for r in &res.records {
        assert_eq!(r.samples, 70);
        assert_eq!(r.errors.len(), 40);
        assert_eq!(r.iter_times.len(), 40);
    }
}

#[test]
fn invalid_experiments_are_rejected() {
    let mut s = spec(Generator::GaussianGamma { d: 5 }, &["roipca1"]);
    s.m = 6;
    assert!(run_experiment(&s).is_err());
    s.m = 3;
    s.n0 = 3;
    assert!(matches!(run_experiment(&s), Err(Error::Config(_))));
}

fn toy_result(algorithms: &[&str], steps: usize) -> ExperimentResult {
    ExperimentResult {
        d: 4,
        n0: 5,
        n_stream: steps,
        stride: 1,
        records: algorithms
            .iter()
            .map(|a| TrialRecord {
                algorithm: a.to_string(),
                trial: 0,
                errors: (0..steps).map(|k| 0.1 / (k + 1) as f64).collect(),
                iter_times: vec![1e-6; steps],
                samples: 5 + steps,
            })
            .collect(),
    }
}

#[test]
fn emitted_files_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&toy_result(&["a", "b<&>"], 3), dir.path(), "run", "t & t").unwrap();
    assert_eq!(paths.len(), 3);
    let traj = fs::read_to_string(&paths[0]).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert_eq!(lines[0], "step,algorithm,trial,error,iter_time_s");
    assert_eq!(lines.len(), 1 + 6);
    let summary = fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(summary.lines().count(), 3);
    let svg = fs::read_to_string(&paths[2]).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, 2);
    assert!(doc.descendants().any(|n| n.text() == Some("b<&>")));
}

#[test]
fn empty_result_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_results(&toy_result(&[], 0), dir.path(), "empty", "").unwrap();
    assert_eq!(fs::read_to_string(&paths[0]).unwrap().lines().count(), 1);
    assert_eq!(fs::read_to_string(&paths[1]).unwrap().lines().count(), 1);
    roxmltree::Document::parse(&fs::read_to_string(&paths[2]).unwrap()).unwrap();
}

#[test]
fn csv_loading() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p
    };
    let plain = load_csv_dataset(&write("a.csv", "1,2\n3,4\n"), &CsvOptions::default()).unwrap();
    assert_eq!(plain.shape(), (2, 2));
    assert_eq!(plain[(1, 0)], 3.0);

    let with_header = CsvOptions { header: true, ..CsvOptions::default() };
    let h = load_csv_dataset(&write("b.csv", "x,y\n1,2\n"), &with_header).unwrap();
    assert_eq!(h.shape(), (1, 2));

    let labelled = CsvOptions { label_column: Some(0), ..CsvOptions::default() };
    let l = load_csv_dataset(&write("c.csv", "7,1,2\n8,3,4\n"), &labelled).unwrap();
    assert_eq!(l.shape(), (2, 2));
    assert_eq!(l[(0, 0)], 1.0);

    let bad = load_csv_dataset(&write("d.csv", "1,2\n3,abc\n"), &CsvOptions::default()).unwrap_err();
    assert!(bad.to_string().contains('2'), "{bad}");
    assert!(load_csv_dataset(&write("e.csv", "1,2\n3\n"), &CsvOptions::default()).is_err());
    assert!(load_csv_dataset(&write("f.csv", ""), &CsvOptions::default()).is_err());
    let missing = load_csv_dataset(&dir.path().join("nope.csv"), &CsvOptions::default()).unwrap_err();
    assert!(missing.to_string().contains("nope.csv"));
}
