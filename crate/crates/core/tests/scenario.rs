use std::fs;

use nscert::error::Error;
use nscert::field::{random_solenoidal_field, GalerkinSet};
use nscert::scenario::*;

const SCENARIO_THREE: &str = r#"{
  "name": "three",
  "d": 3, "n": 2, "p": 4,
  "datum": { "kind": "norms", "norm_n": 0.2, "norm_p": 2.0, "seed": 1 },
  "galerkin": { "radius": 2 },
  "horizon": "infinity",
  "mode": "exponential"
}"#;

fn parse(text: &str) -> nscert::error::Result<Scenario> {
    Scenario::from_json(text, "test.json")
}

#[test]
fn parse_errors_carry_line_and_column() {
    let broken = "{\n  \"d\": 3,\n  \"n\": oops\n}";
    match parse(broken) {
        Err(Error::Parse(m)) => assert!(m.starts_with("test.json: line 3, column"), "{m}"),
        other => panic!("{other:?}"),
    }
    let unknown = SCENARIO_THREE.replace("\"mode\"", "\"colour\": 1, \"mode\"");
    assert!(matches!(parse(&unknown), Err(Error::Parse(_))));
}

#[test]
fn validation_rejects_inconsistent_scenarios() {
    for (from, to) in [
        ("\"n\": 2", "\"n\": 1.5"),
        ("\"p\": 4", "\"p\": 1.8"),
        ("\"norm_n\": 0.2", "\"norm_n\": -0.2"),
        ("\"horizon\": \"infinity\"", "\"horizon\": \"forever\""),
        ("\"horizon\": \"infinity\"", "\"horizon\": -1"),
        ("\"d\": 3", "\"d\": 1"),
    ] {
        let text = SCENARIO_THREE.replace(from, to);
        assert!(matches!(parse(&text), Err(Error::Parse(_))), "{to}");
    }
    let constants = SCENARIO_THREE.replace(
        "\"mode\"",
        "\"constants\": {\"k_n\": 0.1, \"k_p\": 0.1}, \"mode\"",
    );
    assert!(parse(&constants).is_err());
    let allowed = constants.replace("\"k_p\": 0.1", "\"k_p\": 0.1, \"allow\": true");
    let s = parse(&allowed).unwrap();
    assert_eq!(s.constants().unwrap().0, 0.1);
}

#[test]
fn scenario_files_round_trip() {
    for s in published_scenarios() {
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(parse(&text).unwrap(), s);
    }
}

#[test]
fn published_scenarios_are_certified() {
    for s in published_scenarios() {
        let report = certify(&s).unwrap();
        assert!(report.certified(), "{:?}", s.name);
        assert!(report.zero.is_ok());
        assert!(report.grid.is_none());
        assert_eq!((report.k_n, report.k_p), (0.2, 0.067));
        let text = report.render();
        assert!(text.contains("status: certified"));
    }
    let three = parse(SCENARIO_THREE).unwrap();
    let report = certify(&three).unwrap();
    assert!(matches!(report.galerkin, Some(Ok(_))));
    let text = report.render();
    assert!(text.contains("admissible for |G| >= 2.00"), "{text}");
    assert!(text.contains("tube <= 6.10*e^(-t)/|G|^2"), "{text}");
}

#[test]
fn too_coarse_sets_are_refused() {
    // Only the six unit modes, so |G| = sqrt(3) is below the threshold 2.
    let coarse = SCENARIO_THREE.replace(
        "{ \"radius\": 2 }",
        "{ \"modes\": [[1,0,0],[-1,0,0],[0,1,0],[0,-1,0],[0,0,1],[0,0,-1]] }",
    );
    let report = certify(&parse(&coarse).unwrap()).unwrap();
    assert!(matches!(report.galerkin, Some(Err(_))));
    assert!(!report.certified());
    assert!(report.render().contains("status: refused"));
}

#[test]
fn large_data_fall_back_to_the_grid() {
    let large = SCENARIO_THREE
        .replace("\"norm_n\": 0.2", "\"norm_n\": 1.5")
        .replace("\"mode\": \"exponential\"", "\"mode\": \"finite-horizon\"")
        .replace("\"horizon\": \"infinity\"", "\"horizon\": 1.0");
    let report = certify(&parse(&large).unwrap()).unwrap();
    assert!(report.zero.is_err());
    let grid = report.grid.as_ref().unwrap();
    assert!(grid.horizon() > 0.0);
}

#[test]
fn published_values_are_reproduced() {
    let rows = reproduce_published().unwrap();
    for r in &rows {
        if r.label == "scenario 1 rough tube coefficient" {
            assert!(!r.pass);
            assert!((r.computed - 8.43).abs() < 1e-9);
        } else {
            assert!(r.pass, "{}: {} vs {}", r.label, r.computed, r.expected);
        }
    }
}

#[test]
fn synthesised_datum_respects_its_bounds() {
    let s = parse(SCENARIO_THREE).unwrap();
    let f = s.datum_field().unwrap();
    assert!(f.sobolev_norm(2.0) <= 0.2 * (1.0 + 1e-12));
    assert!(f.sobolev_norm(4.0) <= 2.0 * (1.0 + 1e-12));
    assert!(f.is_zero_mean() && f.is_solenoidal());
}

#[test]
fn datum_and_forcing_files_are_read_relative_to_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let datum = random_solenoidal_field(3, 2, 2.0, 1, 0.1).unwrap();
    let forcing = random_solenoidal_field(4, 2, 1.0, 1, 0.01).unwrap();
    fs::write(dir.path().join("datum.txt"), datum.to_text()).unwrap();
    fs::write(dir.path().join("forcing.txt"), forcing.to_text()).unwrap();
    let text = r#"{
      "d": 2, "n": 2, "p": 4,
      "datum": { "kind": "file", "path": "datum.txt" },
      "forcing": { "kind": "explicit", "path": "forcing.txt", "rate": 3.0 },
      "horizon": "infinity",
      "mode": "exponential"
    }"#;
    let path = dir.path().join("s.json");
    fs::write(&path, text).unwrap();
    let s = Scenario::load(&path).unwrap();
    let (nn, _) = s.datum_norms().unwrap();
    assert!((nn - 0.1).abs() < 1e-12);
    let (fn_, _) = s.envelopes().unwrap();
    assert!(matches!(
        fn_,
        nscert::control::ForcingEnvelope::Exponential(_)
    ));
    assert!(
        s.forcing_model()
            .unwrap()
            .eval(0.0)
            .unwrap()
            .max_abs_diff(&forcing)
            < 1e-15
    );
}

#[test]
fn zero_datum_runs_stay_at_zero() {
    let zero = SCENARIO_THREE.replace("\"norm_n\": 0.2", "\"norm_n\": 0.0");
    let report = run(
        &parse(&zero).unwrap(),
        &RunOptions {
            ref_radius: Some(3),
            t_end: 1.0,
            samples: 5,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(report.admissible);
    assert!(report.containment.iter().all(|r| r.difference == 0.0));
    assert!(report.margin.unwrap() >= 0.0);
}

#[test]
fn identical_reference_gives_zero_difference() {
    let s = parse(SCENARIO_THREE).unwrap();
    let report = run(
        &s,
        &RunOptions {
            ref_radius: Some(2),
            t_end: 1.0,
            samples: 6,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(report.containment.len(), 6);
    assert!(report.containment.iter().all(|r| r.difference == 0.0));
    let mut csv = Vec::new();
    report.write_containment_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
}

#[test]
fn inadmissible_runs_need_force() {
    // The auto horizon raises the threshold to 2.88, above |G| = sqrt(5) for the unit cube.
    let text = SCENARIO_THREE
        .replace("\"mode\": \"exponential\"", "\"mode\": \"finite-horizon\"")
        .replace("\"horizon\": \"infinity\"", "\"horizon\": \"auto\"")
        .replace("\"datum\"", "\"forcing\": { \"kind\": \"constant-envelope\", \"xi_n\": 0.025, \"xi_p\": 0.25 },\n  \"datum\"");
    let s = parse(&text).unwrap();
    let opts = RunOptions {
        g_radius: 1,
        ref_radius: None,
        t_end: 0.5,
        ..Default::default()
    };
    assert!(matches!(run(&s, &opts), Err(Error::NoCertificate(_))));
    let forced = run(
        &s,
        &RunOptions {
            force: true,
            ..opts
        },
    )
    .unwrap();
    assert!(!forced.admissible);
    assert!(forced.certificate.is_none());
    assert_eq!(forced.trajectory.end(), 0.5);
    assert!(GalerkinSet::cube(3, 1).resolution() < 2.88);
}
