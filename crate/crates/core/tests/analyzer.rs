use aedcnn_core::analyzer::{
    analyze, analyze_with_frontend, count_macs, count_params, format_bytes, format_layer_count,
    format_total_count, realtime_check, reduction_factors, CostReport, FrontendMode, Totals,
    PAPER_FRONTEND_MACS, PAPER_FRONTEND_PARAMS,
};
use aedcnn_core::graph::LayerShape;
use aedcnn_core::{build_preset, Arch, Error, FrontendConfig, LayerSpec, NetworkSpec, Shape3};
use aedcnn_testkit::{cost_oracle, OracleLayer as O};
use proptest::prelude::*;

const CNN_C: [O; 11] = [
    O::Conv(3, 1, 64),
    O::Conv(3, 1, 64),
    O::Pool(2, 2),
    O::Conv(3, 1, 128),
    O::Conv(3, 1, 128),
    O::Pool(2, 2),
    O::Conv(3, 1, 128),
    O::Conv(1, 1, 128),
    O::Conv(1, 1, 28),
    O::GlobalAvg,
    O::Softmax,
];

const CNN_CNP: [O; 9] = [
    O::Conv(3, 1, 64),
    O::Conv(3, 2, 64),
    O::Conv(3, 1, 128),
    O::Conv(3, 2, 128),
    O::Conv(3, 1, 128),
    O::Conv(1, 1, 128),
    O::Conv(1, 1, 28),
    O::GlobalAvg,
    O::Softmax,
];

fn layer_rows(report: &CostReport) -> Vec<(u64, u64)> {
    report.rows[2..]
        .iter()
        .map(|r| (r.params, r.macs))
        .collect()
}

fn oracle_totals(layers: &[O]) -> (u64, u64) {
    let rows = cost_oracle((400, 64, 1), layers);
    (
        rows.iter().map(|r| r.0).sum::<u64>() + PAPER_FRONTEND_PARAMS,
        rows.iter().map(|r| r.1).sum::<u64>() + PAPER_FRONTEND_MACS,
    )
}

fn paper(name: &str) -> CostReport {
    analyze(&build_preset(name).unwrap(), FrontendMode::PaperConstants).unwrap()
}

#[test]
fn presets_match_shape_walking_oracle() {
    for (name, oracle) in [("cnn-c", &CNN_C[..]), ("cnn-cnp", &CNN_CNP[..])] {
        let report = paper(name);
        assert_eq!(
            layer_rows(&report),
            cost_oracle((400, 64, 1), oracle),
            "{name}"
        );
        let (p, m) = oracle_totals(oracle);
        assert_eq!(
            (report.total_params(), report.total_macs()),
            (p, m),
            "{name}"
        );
        assert_eq!(report.weight_bytes_16bit, 2 * p);
    }
}

#[test]
fn fc_preset_matches_oracle() {
    let layers = [
        O::Conv(3, 1, 64),
        O::Conv(3, 1, 64),
        O::Pool(1, 2),
        O::Conv(3, 1, 128),
        O::Conv(3, 1, 128),
        O::Pool(2, 2),
        O::Flatten,
        O::Dense(1024),
        O::Dense(1024),
        O::Dense(28),
        O::Softmax,
    ];
    assert_eq!(
        layer_rows(&paper("cnn-fc")),
        cost_oracle((400, 64, 1), &layers)
    );
}

#[test]
fn known_totals() {
    let cnp = paper("cnn-cnp");
    assert_eq!(cnp.total_params(), 452_316);
    assert_eq!(cnp.total_macs(), 1_239_042_400);
    let c = paper("cnn-c");
    assert_eq!(c.total_params(), 452_316);
    assert_eq!(c.total_macs(), 2_654_620_000);
    assert_eq!(format_total_count(cnp.total_params()), "452 k");
    assert_eq!(format_total_count(cnp.total_macs()), "1239 M");
    assert_eq!(format_total_count(c.total_macs()), "2655 M");
    assert_eq!(format_bytes(cnp.weight_bytes_16bit), "904 kB");
}

#[test]
fn reduction_against_fc_reference() {
    let cnp = paper("cnn-cnp");
    let c = paper("cnn-c");
    let f = reduction_factors(&Totals::REFERENCE_CNN_FC, &cnp.totals).unwrap();
    assert!((f.param_factor - 515.0).abs() <= 1.0, "{}", f.param_factor);
    assert!((f.mac_factor - 2.06).abs() <= 0.05, "{}", f.mac_factor);
    let g = reduction_factors(&c.totals, &cnp.totals).unwrap();
    assert_eq!(g.param_factor, 1.0);
    assert!((g.mac_factor - 2_654_620_000.0 / 1_239_042_400.0).abs() < 1e-12);
}

#[test]
fn realtime_verdicts() {
    let cnp = realtime_check(1_239_042_400, 430.0, 4.0).unwrap();
    assert!(cnp.feasible);
    assert!((cnp.compute_time_s - 2.88).abs() <= 0.01);
    let c = realtime_check(2_654_620_000, 430.0, 4.0).unwrap();
    assert!(!c.feasible);
    assert!((c.compute_time_s - 6.17).abs() <= 0.01);
    for bad in [0.0, -3.0, f64::NAN] {
        assert!(matches!(
            realtime_check(1, bad, 4.0),
            Err(Error::InvalidArgument(_))
        ));
    }
}

#[test]
fn computed_mode_differs_only_in_frontend_row() {
    let spec = build_preset("cnn-cnp").unwrap();
    let fixed = analyze(&spec, FrontendMode::PaperConstants).unwrap();
    let computed =
        analyze_with_frontend(&spec, FrontendMode::Computed, &FrontendConfig::default()).unwrap();
    assert_eq!(fixed.rows[2..], computed.rows[2..]);
    assert_ne!(fixed.rows[1], computed.rows[1]);
    let fe = &computed.rows[1];
    assert_eq!(
        computed.total_params(),
        fixed.total_params() - PAPER_FRONTEND_PARAMS + fe.params
    );
    assert!(computed.render_table().contains("computed front end"));
}

#[test]
fn table_and_csv_render_all_rows() {
    let report = paper("cnn-cnp");
    let table = report.render_table();
    for needle in [
        "conv 3, 2, 64",
        "conv 1, 1, 28",
        "avg pool",
        "452 k",
        "1239 M",
        "904 kB",
    ] {
        assert!(table.contains(needle), "missing {needle:?} in\n{table}");
    }
    let csv = report.render_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "layer,params,macs");
    assert_eq!(lines.len(), report.rows.len() + 2);
    assert_eq!(*lines.last().unwrap(), "total,452316,1239042400");
}

#[test]
fn underflow_reports_the_failing_layer() {
    let mut layers = vec![LayerSpec::conv(3, 2, 4); 5];
    layers.extend([LayerSpec::GlobalAvgPool, LayerSpec::Softmax]);
    let spec = NetworkSpec {
        arch: Arch::Custom,
        input_shape: Shape3::new(8, 8, 1),
        layers,
        num_classes: 4,
    };
    match analyze(&spec, FrontendMode::PaperConstants) {
        Err(Error::Shape { index, .. }) => assert_eq!(index, 3),
        other => panic!("expected shape error, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// On even maps a stride-2 conv costs a quarter of the stride-1 conv.
    #[test]
    fn stride_two_quarters_macs(
        hh in 1usize..=64, hw in 1usize..=64, c in 1usize..=64, n in 1usize..=64,
        k in prop_oneof![Just(1usize), Just(3usize)],
    ) {
        let input = LayerShape::Map(Shape3::new(2 * hh, 2 * hw, c));
        let s1 = count_macs(&LayerSpec::conv(k, 1, n), input).unwrap();
        let s2 = count_macs(&LayerSpec::conv(k, 2, n), input).unwrap();
        prop_assert_eq!(4 * s2, s1);
        prop_assert_eq!(
            count_params(&LayerSpec::conv(k, 1, n), input).unwrap(),
            count_params(&LayerSpec::conv(k, 2, n), input).unwrap()
        );
    }

    #[test]
    fn conv_closed_forms(
        h in 1usize..=100, w in 1usize..=100, c in 1usize..=64, n in 1usize..=64,
        k in prop_oneof![Just(1usize), Just(3usize)],
    ) {
        let input = LayerShape::Map(Shape3::new(h, w, c));
        let p = count_params(&LayerSpec::conv(k, 1, n), input).unwrap();
        prop_assert_eq!(p - n as u64, (k * k * c * n) as u64);
        let m = count_macs(&LayerSpec::conv(k, 1, n), input).unwrap();
        prop_assert_eq!(m, (h * w) as u64 * (p - n as u64));
    }

    /// Totals are sums of rows, whatever their order.
    #[test]
    fn totals_ignore_row_order(perm in Just((0..13usize).collect::<Vec<_>>()).prop_shuffle()) {
        let report = paper("cnn-c");
        prop_assert_eq!(report.rows.len(), 13);
        let rows = perm.iter().map(|&i| report.rows[i].clone()).collect();
        let shuffled = CostReport::from_rows(report.arch, report.frontend_mode, rows);
        prop_assert_eq!(shuffled.totals, report.totals);
        prop_assert_eq!(shuffled.weight_bytes_16bit, report.weight_bytes_16bit);
    }

    #[test]
    fn layer_display_is_within_half_a_digit(n in 1_000u64..10_000_000_000) {
        let s = format_layer_count(n);
        let (value, unit) = s.split_once(' ').unwrap();
        let scale = if unit == "k" { 1e3 } else { 1e6 };
        let shown: f64 = value.parse().unwrap();
        prop_assert!((shown * scale - n as f64).abs() <= 0.05 * scale + 1e-9 * n as f64);
    }
}
