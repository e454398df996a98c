use qevo::analysis::{
    export_candidates, pca_project, reference_fingerprints, write_candidates_csv, write_projection_csv, write_trace_csv,
    PcaModel,
};
use qevo::chem::PlogpScorer;
use qevo::driver::{preset, run_qevo, RunRecord};
use qevo::refspace::{enumerate, EnumerateOptions, ReferenceSpace};
use qevo::{Error, TokenTable, VocabularyPreset};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn k4_reference() -> ReferenceSpace {
    enumerate(VocabularyPreset::Table2x3, 4, &PlogpScorer, &EnumerateOptions::default()).unwrap()
}

fn short_run(seed: u64) -> RunRecord {
    let mut cfg = preset("plogp_k6").unwrap();
    cfg.seed = seed;
    cfg.shots = 256;
    cfg.optimizer.max_iterations = 12;
    run_qevo(&cfg, None).unwrap()
}

#[test]
fn components_are_orthonormal_and_ordered() {
    let reference = k4_reference();
    let model = PcaModel::fit_reference(&reference).unwrap();
    let [v1, v2] = &model.components;
    assert!((dot(v1, v1) - 1.0).abs() < 1e-8);
    assert!((dot(v2, v2) - 1.0).abs() < 1e-8);
    assert!(dot(v1, v2).abs() < 1e-8);
    let [l1, l2] = model.explained_variance;
    assert!(l1 >= l2 && l2 >= model.third_variance - 1e-9, "{l1} {l2} {}", model.third_variance);
    for v in [v1, v2] {
        let top = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        assert!(top > 0.0);
    }
    // Rayleigh quotients of the fitted data reproduce the eigenvalues
    let fps = reference_fingerprints(&reference).unwrap();
    assert!((model.variance_along(&fps, v1) - l1).abs() < 1e-8);
    assert!((model.variance_along(&fps, v2) - l2).abs() < 1e-8);
}

#[test]
fn projection_is_repeatable() {
    let reference = k4_reference();
    let fps = reference_fingerprints(&reference).unwrap();
    let model = PcaModel::fit(&fps).unwrap();
    assert_eq!(model.project(&fps[3]), model.project(&fps[3]));
    assert_eq!(PcaModel::fit(&fps).unwrap(), model);
}

#[test]
fn too_few_distinct_fingerprints() {
    let reference = k4_reference();
    let fps = reference_fingerprints(&reference).unwrap();
    let two = vec![fps[0].clone(), fps[1].clone(), fps[0].clone(), fps[1].clone()];
    assert!(matches!(PcaModel::fit(&two), Err(Error::DegenerateCovariance)));
}

#[test]
fn projections_carry_run_metadata() {
    let reference = enumerate(VocabularyPreset::Table2x3, 6, &PlogpScorer, &EnumerateOptions::default()).unwrap();
    let model = PcaModel::fit_reference(&reference).unwrap();
    let record = short_run(3);
    let table = TokenTable::from_vocabulary(&VocabularyPreset::Table2x3.vocabulary()).unwrap();
    let rows = pca_project(&model, std::slice::from_ref(&record), &table).unwrap();
    assert_eq!(rows.len(), record.molecules.len());
    assert!(rows.iter().all(|r| r.window <= 6 && r.seed == 3));
    assert!(rows.iter().any(|r| r.window == 0) && rows.iter().any(|r| r.window > 0));
    let mut csv = Vec::new();
    write_projection_csv(&mut csv, &rows).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), rows.len() + 1);
    assert!(text.starts_with("run,seed,canonical,score,first_iteration,window,pc1,pc2\n"));
}

#[test]
fn export_is_sorted_unpadded_and_idempotent() {
    let records = vec![short_run(1), short_run(2)];
    let all = export_candidates(&records, usize::MAX);
    let distinct: std::collections::HashSet<_> =
        records.iter().flat_map(|r| r.molecules.iter().map(|m| m.canonical.clone())).collect();
    assert_eq!(all.len(), distinct.len());
    for pair in all.windows(2) {
        let order = pair[0].score.total_cmp(&pair[1].score).then_with(|| pair[0].canonical.cmp(&pair[1].canonical));
        assert!(order.is_lt());
    }
    let top = export_candidates(&records, 25);
    assert_eq!(&top[..], &all[..25]);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_candidates_csv(&mut a, &top).unwrap();
    write_candidates_csv(&mut b, &export_candidates(&records, 25)).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().next(), Some("rank,canonical,score,first_iteration,bits"));
}

#[test]
fn trace_has_one_row_per_iteration() {
    let record = short_run(5);
    let mut out = Vec::new();
    write_trace_csv(&mut out, &record, 4).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), record.rows.len() + 1);
    // running mean over the first rows is the plain mean
    let loss: Vec<f64> = record.rows.iter().map(|r| r.loss).collect();
    let second: Vec<&str> = lines[2].split(',').collect();
    assert!((second[3].parse::<f64>().unwrap() - (loss[0] + loss[1]) / 2.0).abs() < 1e-9);
}
