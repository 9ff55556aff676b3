use doalab::acoustics::SPEED_OF_SOUND;
use doalab::datagen::{self, DoaClasses, SourceProvider, TestConfig};
use doalab::eval::{self, Estimator, Method};
use doalab::nn::{Model, ModelSpec};
use doalab::{RunConfig, SteeringTable};

fn test_set(dir: &std::path::Path, stride: usize) -> datagen::TestSet {
    let cfg = RunConfig::desk_scale();
    let test = TestConfig {
        pair_stride: stride,
        duration_s: 0.5,
        ..cfg.test
    };
    datagen::gen_test_mixtures(&test, &cfg.array, &cfg.features, &SourceProvider::Synthetic, 2, dir, 1).unwrap();
    datagen::load_test_set(dir).unwrap()
}

fn srp_table() -> SteeringTable {
    let doas = DoaClasses::new(5.0).unwrap().doas();
    SteeringTable::new(&doas, 1..=255, 4, 0.08, SPEED_OF_SOUND, 16_000.0, 512).unwrap()
}

#[test]
fn cnn_and_srp_rows_are_aligned() {
    let dir = tempfile::tempdir().unwrap();
    let set = test_set(dir.path(), 111);
    let table = srp_table();
    let model = Model::new(ModelSpec::default(), 1).unwrap();
    let srp = eval::run_experiment(&set, &Estimator::Srp(&table), 1).unwrap();
    let cnn = eval::run_experiment(&set, &Estimator::Cnn(&model), 2).unwrap();
    assert_eq!(srp.rows.len(), 6);
    let ids = |rows: &[eval::ResultRow]| rows.iter().map(|r| r.mixture_id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&srp.rows), ids(&cnn.rows));
    assert_eq!(ids(&srp.rows), set.index.mixtures);
    for exp in [&srp, &cnn] {
        assert!((0.0..=180.0).contains(&exp.summary.mean_mae_deg));
        assert_eq!(exp.summary.mixtures, 6);
        assert!(exp.posteriors.iter().all(|p| p.len() == 37 && (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
    assert_eq!(srp.summary.method, Method::Srp);
    assert_eq!(srp.summary.snr_db, 30.0);

    let cmp = eval::compare(&[(30.0, &cnn.rows, &srp.rows)]).unwrap();
    assert_eq!(cmp.columns.len(), 1);
    let same = eval::compare(&[(30.0, &srp.rows, &srp.rows)]).unwrap();
    assert_eq!(same.columns[0].win_rate, 0.0);
    assert_eq!(same.columns[0].delta_deg, 0.0);

    let csv = dir.path().join("rows.csv");
    eval::write_results_csv(&csv, &srp.rows).unwrap();
    assert_eq!(eval::read_results_csv(&csv).unwrap(), srp.rows);
}

#[test]
fn single_mixture_summary_is_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut set = test_set(dir.path(), 111);
    set.index.mixtures.truncate(1);
    let table = srp_table();
    let exp = eval::run_experiment(&set, &Estimator::Srp(&table), 1).unwrap();
    assert_eq!(exp.rows.len(), 1);
    assert_eq!(exp.summary.mean_mae_deg, exp.rows[0].mae_deg);
}
