use fedosov_core::fixtures::NAMES;
use fedosov_core::pipeline::{run, Overrides, EXIT_PASS};
use fedosov_core::spec::parse_spec;

fn run_text(text: &str, ov: &Overrides) -> (String, i32) {
    let out = run(&parse_spec(text).unwrap(), ov);
    (out.text, out.code)
}

#[test]
fn assoc_check_passes_on_every_fixture() {
    for name in NAMES {
        let ov = Overrides { trials: Some(50), ..Default::default() };
        let (text, code) = run_text(&format!("chart = {name}\ncommand = assoc-check\n"), &ov);
        assert_eq!(code, EXIT_PASS, "{text}");
        assert!(text.contains("PASS associativity: 50 triples"), "{text}");
    }
}

#[test]
fn trace_check_on_heisenberg() {
    let ov = Overrides { max_degree: Some(3), max_order: Some(4), ..Default::default() };
    let (text, code) = run_text("chart = heis3\ncommand = trace-check\n", &ov);
    assert_eq!(code, EXIT_PASS, "{text}");
    assert!(text.starts_with("# command: trace-check\n# chart: heis3 (n = 0, N = 3)\n"));
    assert!(text.contains("\nf=p1 r=1 adjoint_unit=0\n"), "{text}");
}

#[test]
fn overrides_replace_spec_values() {
    let ov = Overrides { command: Some("c-r".into()), kappa: Some(fedosov_core::ring::rat(1, 1)), ..Default::default() };
    let (text, code) = run_text("chart = heis3\ncommand = star\nf = p1\ng = p2\n", &ov);
    assert_eq!(code, EXIT_PASS, "{text}");
    assert!(text.contains("# command: c-r\n"));
    assert!(text.contains("# kappa = 1, "));
    assert!(text.contains("C1 = -(1/2) p3\n"), "{text}");
}

#[test]
fn solve_r_reports_r_structure() {
    let (text, code) = run_text("chart = so3\ncommand = solve-r\nB[0] = (1,2): 1\nnu_order = 2\ntotal_degree = 4\n", &Overrides::default());
    assert_eq!(code, EXIT_PASS, "{text}");
    for name in ["r equations", "r kappa-independent", "deg_s* r <= 1", "r0 linear in B", "r1 independent of B"] {
        assert!(text.contains(&format!("PASS {name}")), "{name}:\n{text}");
    }
}
