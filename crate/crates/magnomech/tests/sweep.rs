use magnomech::config::Hz;
use magnomech::presets::{base_params, preset};
use magnomech::sweep::{run_point, run_sweep, Quantity, Stage, SweepConfig};

#[test]
fn zero_coupling_gives_no_entanglement() {
    let mut p = base_params();
    p.system.magnomechanical_coupling_hz = [Hz(0.0); 2];
    let r = p.resolve().unwrap();
    let q = [
        Quantity::EB1m2,
        Quantity::EB1a,
        Quantity::EB1m1,
        Quantity::EB1b2,
    ];
    let rec = run_point(&r, Stage::Step1, &q);
    assert_eq!(rec.stable, Some(true));
    assert!(
        rec.values.iter().all(|v| *v == Some(0.0)),
        "{:?}",
        rec.values
    );
}

#[test]
fn step2_record_has_no_optimum_without_b1b2_entanglement() {
    let r = base_params().resolve().unwrap();
    let q = [
        Quantity::EB1b2,
        Quantity::TMax,
        Quantity::EB1m2,
        Quantity::Margin,
    ];
    let rec = run_point(&r, Stage::Step2, &q);
    assert_eq!(rec.stable, Some(true));
    assert_eq!(rec.error, None);
    assert_eq!(rec.values[0], Some(0.0));
    assert_eq!(rec.values[1], None);
    assert!(rec.values[3].unwrap() < 0.0);
}

#[test]
fn series_stage_keeps_the_requested_samples() {
    let cfg = preset("fig5b", Some(51)).unwrap();
    let res = run_sweep(&cfg, Some(1)).unwrap();
    assert_eq!(res.records.len(), 51);
    assert_eq!(res.records[0].coords[0], Some(0.0));
    let end = res.records[50].coords[0].unwrap();
    assert!((end - cfg.params.step2.window_s).abs() < 1e-15);
    // handover: the first E_b1m2 sample is the step-1 value
    let step1 = run_point(
        &cfg.params.resolve().unwrap(),
        Stage::Step1,
        &[Quantity::EB1m2],
    );
    assert_eq!(res.records[0].values[1], step1.values[0]);
}

#[test]
fn margin_is_always_recorded() {
    let cfg = SweepConfig::new(
        base_params(),
        Stage::Step1,
        vec![Quantity::EB1m2],
        Vec::new(),
    )
    .unwrap();
    assert_eq!(cfg.quantities, vec![Quantity::EB1m2, Quantity::Margin]);
}

#[test]
fn stage_quantity_mismatch_is_a_config_error() {
    assert!(SweepConfig::new(
        base_params(),
        Stage::Step1,
        vec![Quantity::TMax],
        Vec::new()
    )
    .is_err());
    assert!(SweepConfig::new(
        base_params(),
        Stage::FreeSeries,
        vec![Quantity::EB1m2],
        Vec::new()
    )
    .is_err());
}

#[test]
fn fig3_grid_has_an_unstable_region_with_margins() {
    let cfg = preset("fig3a", Some(21)).unwrap();
    let res = run_sweep(&cfg, None).unwrap();
    assert_eq!(res.records.len(), 21 * 21);
    let m = cfg
        .quantities
        .iter()
        .position(|&q| q == Quantity::Margin)
        .unwrap();
    let unstable: Vec<_> = res
        .records
        .iter()
        .filter(|r| r.stable == Some(false))
        .collect();
    assert!(!unstable.is_empty());
    for r in unstable {
        assert!(r.values[m].unwrap() >= 0.0);
        assert_eq!(r.error.as_deref(), Some("unstable"));
    }
}
