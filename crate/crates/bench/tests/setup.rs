use fedosov_bench::weyl_solution;
use fedosov_core::algebroid::parse_section;

#[test]
fn benchmark_inputs_multiply() {
    let sol = weyl_solution("heis3", 6, 6);
    let f = parse_section("p1^2*p2", 0, 3).unwrap();
    let g = parse_section("p2*p3^2", 0, 3).unwrap();
    let res = sol.star(&f, &g).unwrap();
    assert!(res.degree_bound_holds(3, 3));
    assert_eq!(res.coefficients[0], &f * &g);
}
