use hcb_core::observables::read_csv;
use hcb_core::scenario::run::{header_lines, FIT_FILE, MELT_FILE, SERIES_FILE};
use hcb_core::scenario::{run_scenario, EngineChoice};
use hcb_core::{Error, ScenarioConfig, ScenarioKind};

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn gs_quench_mps_agrees_with_exact() {
    let mut exact = ScenarioConfig::new(ScenarioKind::GsQuench, 1.0, 12, 8);
    exact.engine = EngineChoice::Exact;
    exact.t_max = Some(4.0);
    exact.dt = 0.05;
    let mut mps = exact.clone();
    mps.engine = EngineChoice::Mps;
    mps.trotter_order = 4;
    mps.chi_max = 128;
    mps.dmrg_tol = 1e-12;
    let a = run_scenario(&exact, None).unwrap();
    let b = run_scenario(&mps, None).unwrap();
    let wa = a.preparation.pair_weight.unwrap();
    let wb = b.preparation.pair_weight.unwrap();
    assert!((wa - wb).abs() < 1e-8, "{wa} vs {wb}");
    for (da, db) in a.series.density.iter().zip(&b.series.density) {
        assert!(max_diff(da, db) < 1e-4);
    }
    assert!(max_diff(&a.series.half_current, &b.series.half_current) < 1e-4);
}

#[test]
fn auto_engine_is_recorded_in_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ScenarioConfig::new(ScenarioKind::MiExpansion, 1.0, 12, 4);
    c.t_max = Some(2.0);
    let o = run_scenario(&c, Some(dir.path())).unwrap();
    assert_eq!(o.engine, EngineChoice::Exact);
    for f in [SERIES_FILE, FIT_FILE, MELT_FILE] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.contains("engine = \"exact\""), "{f}");
        assert!(text.contains("chi_max = "), "{f}");
    }
    let cols = read_csv(std::io::BufReader::new(std::fs::File::open(dir.path().join(SERIES_FILE)).unwrap())).unwrap();
    assert_eq!(cols.times.len(), 5);
    assert_eq!(cols.radius, o.series.radius);
}

#[test]
fn free_engine_at_zero_coupling() {
    let c = ScenarioConfig::new(ScenarioKind::MiExpansion, 0.0, 40, 6);
    let o = run_scenario(&c, None).unwrap();
    assert_eq!(o.engine, EngineChoice::FreeFermion);
    assert!(header_lines(&o.config).iter().any(|l| l == "engine = \"free-fermion\""));
    assert!(o.series.max_number_drift() < 1e-10);
}

#[test]
fn invariant_violations_are_named() {
    let mut c = ScenarioConfig::new(ScenarioKind::MiExpansion, 1.0, 12, 4);
    c.box_sites = Some([3, 7]);
    match run_scenario(&c, None) {
        Err(Error::Config(msg)) => assert!(msg.contains("box width"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let c = ScenarioConfig::new(ScenarioKind::GsQuench, 1.0, 12, 6);
    match run_scenario(&c, None) {
        Err(Error::Config(msg)) => assert!(msg.contains("2/3"), "{msg}"),
        other => panic!("{other:?}"),
    }
    let mut c = ScenarioConfig::new(ScenarioKind::MiExpansion, 1.0, 12, 4);
    c.engine = EngineChoice::FreeFermion;
    assert!(run_scenario(&c, None).is_err());
}

#[test]
fn sample_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ScenarioConfig::load(&path).unwrap();
        match cfg.scenario {
            ScenarioKind::Sweep => {
                hcb_core::scenario::sweep::sweep_points(&cfg).unwrap();
            }
            _ => cfg.validate_run().unwrap(),
        }
        seen += 1;
    }
    assert!(seen >= 5);
}
