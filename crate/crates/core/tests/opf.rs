mod common;

use proptest::prelude::*;
use varflex::opf::{assemble_lp, Binding, DerSet, HourModel};
use varflex::sweep::{self, DerOverride, ProfileRow, Profiles, RegionStatus, SweepOptions};
use varflex::{
    compute_fr, reformulate_bounds, solve_lp, DerConfig, DerSpec, DispatchFile, ErrorBin, ErrorModel, OpfError, Phase,
    ScenarioHour, Sense, VoltageLimits,
};

const LEVELS: [f64; 3] = [0.5, 0.84, 0.976];

fn scenario(hour: u32, p_hat: Vec<f64>, load_mult: f64) -> ScenarioHour {
    ScenarioHour { hour, p_hat_kw: p_hat, load_mult, probability: 0.9 }
}

fn profiles(name: &str) -> Profiles {
    Profiles::load(common::fixture(name)).unwrap()
}

#[test]
fn no_ders_leaves_a_constant_objective() {
    let net = common::network("two_bus");
    let model = HourModel::build(&net, 1.0).unwrap();
    let ders = DerSet::resolve(&net, Vec::new()).unwrap();
    let lp =
        assemble_lp(&model, &ders, &scenario(0, vec![], 1.0), &[], VoltageLimits::default(), Sense::Minimize).unwrap();
    assert_eq!(lp.n_vars(), 0);
    assert_eq!(lp.n_rows(), 6);
    // Constant-power loads: the objective is minus the nameplate reactive load.
    assert!((lp.objective_offset + 0.36).abs() < 1e-12);
    let sol = solve_lp(&lp).unwrap();
    assert!((sol.objective + 0.36).abs() < 1e-12);
}

#[test]
fn single_der_with_loose_limits_sits_on_its_box() {
    let net = common::network("two_bus");
    let der = DerSpec { bus: "n1".into(), phase: Phase::A, s_rating_kva: 100.0, p_peak_kw: 90.0 };
    let ders = DerSet::resolve(&net, vec![der.clone()]).unwrap();
    let model = HourModel::build(&net, 1.0).unwrap();
    let bounds = vec![reformulate_bounds(&der, 60.0).unwrap()];
    let loose = VoltageLimits { v_lo: 0.0, v_hi: 10.0 };
    let fr = compute_fr(&model, &ders, &scenario(12, vec![60.0], 1.0), &bounds, loose).unwrap();
    assert!((fr.q_sub_max_kvar - (360.0 + 80.0)).abs() < 1e-9, "{}", fr.q_sub_max_kvar);
    assert!((fr.q_sub_min_kvar - (360.0 - 80.0)).abs() < 1e-9, "{}", fr.q_sub_min_kvar);
    assert!((fr.dispatch_max_kvar[0] + 80.0).abs() < 1e-9);
    assert!((fr.dispatch_min_kvar[0] - 80.0).abs() < 1e-9);
    assert_eq!(fr.binding_max, vec![Binding::DerLower { der: 0 }]);
    assert_eq!(fr.binding_min, vec![Binding::DerUpper { der: 0 }]);
    assert!((fr.base_load_kvar - 360.0).abs() < 1e-9);
}

fn ieee13_ders(net: &varflex::NetworkModel) -> Vec<DerSpec> {
    let mut rows = Vec::new();
    for h in 0..24 {
        rows.push(ProfileRow { hour: h, load_mult: 1.0, solar_forecast_norm: 0.0 });
    }
    DerConfig::default().build(net, &Profiles::new(rows).unwrap()).unwrap()
}

#[test]
fn thirteen_bus_dimensions_and_binding_voltage() {
    let net = common::network("ieee13_like");
    let specs = ieee13_ders(&net);
    let ders = DerSet::resolve(&net, specs.clone()).unwrap();
    let model = HourModel::build(&net, 0.6).unwrap();
    let sc = scenario(3, vec![0.0; specs.len()], 0.6);
    let bounds: Vec<_> = specs.iter().map(|d| reformulate_bounds(d, 0.0).unwrap()).collect();
    let lp = assemble_lp(&model, &ders, &sc, &bounds, VoltageLimits::default(), Sense::Minimize).unwrap();
    assert_eq!(lp.n_rows(), 2 * net.n_node_phases());
    assert_eq!(lp.n_vars(), specs.len());

    let fr = compute_fr(&model, &ders, &sc, &bounds, VoltageLimits::default()).unwrap();
    let voltage_binding = fr
        .binding_max
        .iter()
        .chain(&fr.binding_min)
        .any(|b| matches!(b, Binding::VoltageLower { .. } | Binding::VoltageUpper { .. }));
    assert!(voltage_binding, "{:?} / {:?}", fr.binding_max, fr.binding_min);
    assert!(fr.q_sub_min_kvar <= fr.q_sub_max_kvar);
    for (k, b) in bounds.iter().enumerate() {
        for q in [fr.dispatch_max_kvar[k], fr.dispatch_min_kvar[k]] {
            assert!(q >= b.q_lo - 1e-9 && q <= b.q_hi + 1e-9);
        }
    }
}

#[test]
fn unreachable_limits_report_the_worst_node_phase() {
    let net = common::network("ieee13_like");
    let specs = ieee13_ders(&net);
    let ders = DerSet::resolve(&net, specs.clone()).unwrap();
    let model = HourModel::build(&net, 1.0).unwrap();
    let bounds: Vec<_> = specs.iter().map(|d| reformulate_bounds(d, d.p_cap_kw()).unwrap()).collect();
    let sc = scenario(1, specs.iter().map(|d| d.p_cap_kw()).collect(), 1.0);
    let tight = VoltageLimits { v_lo: 1.049, v_hi: 1.05 };
    match compute_fr(&model, &ders, &sc, &bounds, tight) {
        Err(OpfError::Infeasible { bus, violation, .. }) => {
            assert!(net.bus_index(&bus).is_some());
            assert!(violation > 0.0);
        }
        other => panic!("expected infeasible, got {other:?}"),
    }
}

#[test]
fn infeasible_hours_are_marked_not_fatal() {
    let net = common::network("ieee13_like");
    let specs = ieee13_ders(&net);
    let model = common::fitted_model();
    let opts = SweepOptions { limits: VoltageLimits { v_lo: 1.049, v_hi: 1.05 }, parallel: true };
    let out = sweep::sweep(&net, &model, &profiles("profiles.csv"), &specs, &[0.9], opts).unwrap();
    assert_eq!(out.len(), 24);
    assert!(out.iter().any(|e| e.status == RegionStatus::Infeasible && e.message.is_some()));
}

#[test]
fn night_regions_do_not_depend_on_probability() {
    let net = common::network("feeder123");
    let prof = profiles("profiles_night.csv");
    let ders = DerConfig::default().build(&net, &prof).unwrap();
    let out = sweep::sweep(&net, &common::fitted_model(), &prof, &ders, &LEVELS, SweepOptions::default()).unwrap();
    assert_eq!(out.len(), 72);
    for hour in out.chunks(3) {
        let first = hour[0].region.as_ref().unwrap();
        for e in &hour[1..] {
            let r = e.region.as_ref().unwrap();
            assert_eq!(r.q_sub_max_kvar.to_bits(), first.q_sub_max_kvar.to_bits());
            assert_eq!(r.q_sub_min_kvar.to_bits(), first.q_sub_min_kvar.to_bits());
            assert_eq!(r.dispatch_max_kvar, first.dispatch_max_kvar);
        }
    }
}

#[test]
fn daylight_regions_nest_and_parallel_matches_serial() {
    let net = common::network("feeder123");
    let prof = profiles("profiles.csv");
    let ders = DerConfig::default().build(&net, &prof).unwrap();
    let model = common::fitted_model();
    let par = sweep::sweep(&net, &model, &prof, &ders, &LEVELS, SweepOptions::default()).unwrap();
    let ser = sweep::sweep(&net, &model, &prof, &ders, &LEVELS, SweepOptions { parallel: false, ..Default::default() })
        .unwrap();
    assert_eq!(par, ser);
    let peak = prof.peak_solar_hour();
    for hour in par.chunks(3) {
        assert!(hour.iter().map(|e| e.probability).eq(LEVELS));
        if hour[0].solar_forecast_norm == 0.0 {
            continue;
        }
        let r: Vec<_> = hour.iter().map(|e| e.region.as_ref().expect("daylight hours feasible")).collect();
        for w in r.windows(2) {
            assert!(w[1].q_sub_min_kvar >= w[0].q_sub_min_kvar - 1e-9, "hour {}", hour[0].hour);
            assert!(w[1].q_sub_max_kvar <= w[0].q_sub_max_kvar + 1e-9, "hour {}", hour[0].hour);
            if hour[0].hour == peak {
                assert!(w[1].q_sub_min_kvar > w[0].q_sub_min_kvar);
                assert!(w[1].q_sub_max_kvar < w[0].q_sub_max_kvar);
            }
        }
    }
}

#[test]
fn zero_spread_sweep_equals_deterministic_case() {
    let net = common::network("four_bus");
    let prof = profiles("profiles.csv");
    let specs = DerConfig::default().build(&net, &prof).unwrap();
    let mu = 0.04;
    let flat = ErrorModel { bins: vec![ErrorBin { lo: 0.0, hi: 1.0, count: 100, mu, sigma: 0.0 }] };
    let out = sweep::sweep(&net, &flat, &prof, &specs, &[0.5], SweepOptions::default()).unwrap();
    let ders = DerSet::resolve(&net, specs.clone()).unwrap();
    for (row, e) in prof.rows.iter().zip(&out) {
        let p_hat: Vec<f64> = specs.iter().map(|d| row.solar_forecast_norm * d.p_peak_kw * (1.0 + mu)).collect();
        let bounds: Vec<_> = specs.iter().zip(&p_hat).map(|(d, &p)| reformulate_bounds(d, p).unwrap()).collect();
        let model = HourModel::build(&net, row.load_mult).unwrap();
        let sc = ScenarioHour { hour: row.hour, p_hat_kw: p_hat, load_mult: row.load_mult, probability: 0.5 };
        let fr = compute_fr(&model, &ders, &sc, &bounds, VoltageLimits::default()).unwrap();
        let got = e.region.as_ref().unwrap();
        assert!((got.q_sub_max_kvar - fr.q_sub_max_kvar).abs() < 1e-9);
        assert!((got.q_sub_min_kvar - fr.q_sub_min_kvar).abs() < 1e-9);
    }
}

#[test]
fn default_placement_and_overrides() {
    let net = common::network("feeder123");
    let prof = profiles("profiles.csv");
    let ders = DerConfig::default().build(&net, &prof).unwrap();
    let loaded = net.node_phases().iter().filter(|np| net.buses[np.bus].load_p[np.phase.index()] > 0.0).count();
    assert_eq!(ders.len(), loaded);
    let total: f64 = ders.iter().map(|d| d.p_peak_kw).sum();
    assert!((total - 0.9 * net.total_load_kw() * prof.peak_load_mult()).abs() < 1e-6);
    for d in &ders {
        d.validate().unwrap();
    }

    let cfg = DerConfig {
        overrides: vec![DerOverride {
            bus: "l2_1".into(),
            phase: None,
            s_rating_kva: Some(50.0),
            p_peak_kw: Some(40.0),
        }],
        ..Default::default()
    };
    let ders = cfg.build(&net, &prof).unwrap();
    let hit = ders.iter().find(|d| d.bus == "l2_1").unwrap();
    assert_eq!((hit.s_rating_kva, hit.p_peak_kw), (50.0, 40.0));
    let back = DerConfig::from_json_str(&cfg.to_json_string()).unwrap();
    assert_eq!(back, cfg);

    let bad = DerConfig {
        overrides: vec![DerOverride {
            bus: "l2_1".into(),
            phase: None,
            s_rating_kva: Some(10.0),
            p_peak_kw: Some(40.0),
        }],
        ..Default::default()
    };
    assert!(bad.build(&net, &prof).is_err());
    let unknown = DerConfig {
        overrides: vec![DerOverride { bus: "nowhere".into(), phase: None, s_rating_kva: None, p_peak_kw: Some(1.0) }],
        ..Default::default()
    };
    assert!(unknown.build(&net, &prof).is_err());
    assert!(DerConfig { rating_factor: 1.05, ..Default::default() }.build(&net, &prof).is_err());
    assert!(DerConfig::from_json_str(r#"{"penetration": 0.5, "surprise": 1}"#).is_err());
}

#[test]
fn dispatch_detail_round_trips() {
    let net = common::network("four_bus");
    let prof = profiles("profiles.csv");
    let specs = DerConfig::default().build(&net, &prof).unwrap();
    let out = sweep::sweep(&net, &common::fitted_model(), &prof, &specs, &LEVELS, SweepOptions::default()).unwrap();
    let detail = DispatchFile::from_sweep(&net, &specs, &out);
    assert_eq!(detail.records.len(), 72);
    assert_eq!(DispatchFile::from_json_str(&detail.to_json_string()).unwrap(), detail);
}

proptest! {
    #[test]
    fn headroom_shrinks_as_output_grows(s in 1.0..500.0f64, a in 0.0..0.9f64, b in 0.0..0.9f64) {
        prop_assume!((a - b).abs() > 1e-9);
        let der = DerSpec { bus: "x".into(), phase: Phase::A, s_rating_kva: s, p_peak_kw: 0.9 * s };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let q_lo = reformulate_bounds(&der, lo * s).unwrap();
        let q_hi = reformulate_bounds(&der, hi * s).unwrap();
        prop_assert!(q_hi.q_hi < q_lo.q_hi);
        prop_assert!(q_lo.q_hi <= s && q_hi.q_lo == -q_hi.q_hi);
    }
}
