use super::*;

const THREEP: &str = r#"
command = "threep"

[kernel]
name = "beta"
beta = 0.5

[grid]
times = [0.0, 1.0, 2.0]
"#;

#[test]
fn overrides_follow_dotted_paths() {
    let cfg = ExperimentConfig::parse(THREEP, &["kernel.beta=0.75".into(), "grid.times=[0.0, 0.5, 1.0]".into()]).unwrap();
    assert_eq!(cfg.kernel, Some(KernelSpec::Beta { beta: 0.75 }));
    assert_eq!(cfg.grid.unwrap().times, vec![0.0, 0.5, 1.0]);
    let cfg = ExperimentConfig::parse(THREEP, &["quadrature.time.nodes=32".into()]);
    // partial quadrature tables must be complete after the override
    assert!(matches!(cfg, Err(Error::Config(_))));
    assert!(ExperimentConfig::parse(THREEP, &["kernel".into()]).is_err());
    assert!(ExperimentConfig::parse(THREEP, &["kernel.name.x=1".into()]).is_err());
}

#[test]
fn canonical_form_round_trips() {
    let cfg = ExperimentConfig::parse(THREEP, &[]).unwrap();
    let text = cfg.to_toml().unwrap();
    let again = ExperimentConfig::parse(&text, &[]).unwrap();
    assert_eq!(cfg, again);
    assert_eq!(text, again.to_toml().unwrap());
}

#[test]
fn missing_sections_and_unknown_keys_are_config_errors() {
    for text in [
        "command = \"threep\"",
        "command = \"nope\"",
        "command = \"weyl\"\nbogus = 1",
        "command = \"series\"\n[kernel]\nname = \"beta\"\nbeta = 0.5",
        "not toml ===",
    ] {
        let err = ExperimentConfig::parse(text, &[]).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONFIG, "{text}: {err}");
    }
}

#[test]
fn threep_reports_the_midpoint() {
    let rep = run(&ExperimentConfig::parse(THREEP, &[]).unwrap()).unwrap();
    assert_eq!(rep.exit_code(), 0);
    let sup = rep.payload["sup"].as_f64().unwrap();
    assert!((sup - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(rep.payload["triple"]["u"].as_f64(), Some(0.5 * rep.payload["triple"]["t"].as_f64().unwrap()));
    assert!(rep.payload["sampled"]["sup"].as_f64().unwrap() <= sup);
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let text = r#"
command = "series"
order = 3
[kernel]
name = "beta"
beta = 0.5
[potential]
name = "constant"
value = 1.0
[grid]
times = [0.0, 0.5, 1.0]
"#;
    let rep = run(&ExperimentConfig::parse(text, &[]).unwrap()).unwrap();
    let json = rep.to_json();
    let rows = json["table"]["rows"].as_array().unwrap();
    let csv = rep.table.to_csv_string().unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "s,t,n,value,err");
    let mut count = 0;
    for (line, row) in lines.zip(rows) {
        let parsed: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        let from_json: Vec<f64> = row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(parsed, from_json);
        count += 1;
    }
    assert_eq!(count, 3 * 4);
}

#[test]
fn series_with_zero_potential() {
    let text = r#"
command = "series"
order = 3
[kernel]
name = "beta"
beta = 0.5
[potential]
name = "zero"
[grid]
times = [0.0, 1.0]
"#;
    let rep = run(&ExperimentConfig::parse(text, &[]).unwrap()).unwrap();
    assert_eq!(rep.exit_code(), 0);
    for row in &rep.table.rows {
        if row[2] >= 1.0 {
            assert_eq!(row[3], 0.0);
        }
    }
}

const CERTIFY: &str = r#"
command = "certify"
order = 1
[kernel]
name = "beta"
beta = 0.5
[potential]
name = "constant"
value = 1.0
[grid]
times = [0.0, 0.5, 1.0]
"#;

#[test]
fn certify_exit_codes() {
    let big = run(&ExperimentConfig::parse(CERTIFY, &["control.etas=[0.99]".into()]).unwrap()).unwrap();
    assert_eq!(big.exit_code(), 0);
    let huge = big.payload["certificate"]["envelope_at_horizon"].as_f64().unwrap();
    let fit = run(&ExperimentConfig::parse(CERTIFY, &[]).unwrap()).unwrap();
    let best = fit.payload["certificate"]["envelope_at_horizon"].as_f64().unwrap();
    assert!(huge > 1e3 && huge > 100.0 * best, "{huge} vs {best}");

    let small = run(&ExperimentConfig::parse(CERTIFY, &["control.eta=0.0".into(), "control.c=0.1".into()]).unwrap()).unwrap();
    assert_eq!(small.exit_code(), EXIT_CERTIFICATE);

    let half = ExperimentConfig::parse(CERTIFY, &["control.eta=0.1".into()]).unwrap_err();
    assert_eq!(exit_code(&half), EXIT_CONFIG);
    let bad_eta = run(&ExperimentConfig::parse(CERTIFY, &["control.etas=[1.5]".into()]).unwrap()).unwrap_err();
    assert_eq!(exit_code(&bad_eta), EXIT_CONFIG);
    let short = run(&ExperimentConfig::parse(CERTIFY, &["grid.times=[0.0]".into()]).unwrap()).unwrap_err();
    assert_eq!(exit_code(&short), EXIT_PRECONDITION, "{short}");
}

#[test]
fn chain_lists_violations() {
    let text = CERTIFY.replace("certify", "chain").replace("order = 1", "order = 3");
    let ok = run(&ExperimentConfig::parse(&text, &[]).unwrap()).unwrap();
    assert_eq!(ok.exit_code(), 0, "{}", ok.payload);
    assert!(ok.payload["violations"].as_array().unwrap().is_empty());
}

#[test]
fn error_codes() {
    assert_eq!(exit_code(&Error::Precondition(String::new())), EXIT_PRECONDITION);
    assert_eq!(exit_code(&Error::PlanViolation { requested: 2, max: 1 }), EXIT_PRECONDITION);
    assert_eq!(exit_code(&Error::numeric("x")), EXIT_NUMERIC);
    assert_eq!(exit_code(&Error::NoCertificate(String::new())), EXIT_CERTIFICATE);
    // ck-check on a kernel without the semigroup claim
    let text = "command = \"ck-check\"\n[kernel]\nname = \"beta\"\nbeta = 0.5\n[grid]\ntimes = [0.0, 1.0, 2.0]";
    let err = run(&ExperimentConfig::parse(text, &[]).unwrap()).unwrap_err();
    assert_eq!(exit_code(&err), EXIT_PRECONDITION);
}

#[test]
#[ignore]
fn suite_timing() {
    let rep = reproduce_paper_suite(SuiteOptions::from_env(0));
    for i in &rep.items {
        eprintln!("\n{} {} {} code={} {:.2}s {}", i.criterion, i.name, i.passed, i.exit_code, i.wall_clock_s, i.detail);
    }
}
