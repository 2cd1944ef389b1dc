//! Named runs over a parsed spec: each command calls one library operation
//! and renders a canonical text report with a PASS/FAIL trailer.

use std::fmt::Write as _;

use crate::algebroid::{Connection, EFormSeries, Geometry, PolySection};
use crate::equivalence as eq;
use crate::error::{Error, Result};
use crate::fedosov::{self, solve_r, FedosovSetup, FedosovSolution};
use crate::modular::{self, DensityWeights};
use crate::random::Gen;
use crate::report::{CheckLine, Report};
use crate::ring::{NuTruncation, Scalar};
use crate::spec::RunSpec;
use crate::structure;
use crate::uea;

pub const COMMANDS: &[&str] = &[
    "validate",
    "d-e",
    "curvature",
    "solve-r",
    "tau",
    "star",
    "c-r",
    "assoc-check",
    "homog-check",
    "parity-check",
    "equiv-gauge",
    "equiv-connection",
    "equiv-kappa",
    "uea-check",
    "gutt-compare",
    "modular",
    "trace-check",
];

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Command-line values that take precedence over the spec.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<String>,
    pub kappa: Option<Scalar>,
    pub nu_order: Option<u32>,
    pub total_degree: Option<u32>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub max_degree: Option<u32>,
    pub max_order: Option<u32>,
}

impl Overrides {
    pub fn apply(&self, spec: &RunSpec) -> RunSpec {
        let mut s = spec.clone();
        if let Some(c) = &self.command {
            s.command = Some(c.clone());
        }
        if let Some(k) = &self.kappa {
            s.kappa = k.clone();
        }
        if let Some(l) = self.nu_order {
            s.nu_order = l;
        }
        if self.total_degree.is_some() {
            s.total_degree = self.total_degree;
        }
        if self.trials.is_some() {
            s.trials = self.trials;
        }
        if self.seed.is_some() {
            s.seed = self.seed;
        }
        if self.max_degree.is_some() {
            s.max_degree = self.max_degree;
        }
        if self.max_order.is_some() {
            s.max_order = self.max_order;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunOutput {
    pub text: String,
    pub code: i32,
}

/// Body text plus check lines produced by one command.
#[derive(Default)]
struct Out {
    body: String,
    checks: Report,
}

impl Out {
    fn line(&mut self, s: impl AsRef<str>) {
        self.body += s.as_ref();
        self.body.push('\n');
    }

    fn block(&mut self, s: impl AsRef<str>) {
        for l in s.as_ref().lines() {
            self.line(l);
        }
    }

    fn check(&mut self, l: CheckLine) {
        self.checks.push(l);
    }
}

/// Runs the spec's command (or the override) and renders the report.
pub fn run(spec: &RunSpec, ov: &Overrides) -> RunOutput {
    let spec = ov.apply(spec);
    let command = spec.command.clone().unwrap_or_default();
    let mut text = header(&spec, &command);
    let result = if command.is_empty() {
        Err(Error::Input(format!("no command given; expected one of {}", COMMANDS.join(", "))))
    } else {
        dispatch(&spec, &command)
    };
    let code = match result {
        Ok(out) => {
            text += &out.body;
            text += &out.checks.to_string();
            let total = out.checks.lines.len();
            let failed = out.checks.lines.iter().filter(|l| !l.pass).count();
            if failed == 0 {
                let _ = writeln!(text, "RESULT: PASS ({total} checks)");
                EXIT_PASS
            } else {
                let _ = writeln!(text, "RESULT: FAIL ({failed} of {total} checks failed)");
                EXIT_FAIL
            }
        }
        Err(e) if e.is_input_error() => {
            let _ = writeln!(text, "ERROR: {e}\nRESULT: ERROR (input)");
            EXIT_INPUT
        }
        Err(e) => {
            let _ = writeln!(text, "ERROR: {e}\nRESULT: FAIL (error)");
            EXIT_FAIL
        }
    };
    RunOutput { text, code }
}

fn header(spec: &RunSpec, command: &str) -> String {
    let mut s = format!(
        "# command: {command}\n# chart: {} (n = {}, N = {})\n# kappa = {}, nu_order = {}, total_degree = {}\n",
        spec.chart.name,
        spec.chart.n,
        spec.chart.rank,
        spec.kappa,
        spec.nu_order,
        total_degree(spec)
    );
    for n in &spec.notes {
        s += &format!("# note: {n}\n");
    }
    s
}

/// T defaults to L + 2.
pub fn total_degree(spec: &RunSpec) -> u32 {
    spec.total_degree.unwrap_or(spec.nu_order + 2)
}

fn trials(spec: &RunSpec) -> usize {
    spec.trials.unwrap_or(20)
}

fn seed(spec: &RunSpec) -> u64 {
    spec.seed.unwrap_or(1)
}

fn truncation(spec: &RunSpec) -> Result<NuTruncation> {
    NuTruncation::new(spec.nu_order, total_degree(spec))
}

pub fn geometry(spec: &RunSpec) -> Result<Geometry> {
    geometry_with(spec, spec.connection())
}

fn geometry_with(spec: &RunSpec, conn: Connection) -> Result<Geometry> {
    Geometry::new(spec.chart.clone().validate()?, conn)
}

pub fn setup(spec: &RunSpec) -> Result<FedosovSetup> {
    FedosovSetup::new(geometry(spec)?, spec.b.clone(), spec.kappa.clone(), truncation(spec)?)
}

pub fn solve(spec: &RunSpec) -> Result<FedosovSolution> {
    solve_r(&setup(spec)?)
}

fn need<'a, T>(v: &'a Option<T>, key: &str, command: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::Input(format!("{command} needs `{key}`")))
}

fn random_sections(spec: &RunSpec, gen: &mut Gen, count: usize, max_fibre: u32) -> Vec<PolySection> {
    let (n, rank) = (spec.chart.n, spec.chart.rank);
    let base = if n == 0 { 0 } else { 1 };
    (0..count).map(|_| gen.section(n, rank, max_fibre, base, 0, 2)).collect()
}

fn consecutive_pairs(v: &[PolySection]) -> Vec<(PolySection, PolySection)> {
    v.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect()
}

fn dispatch(spec: &RunSpec, command: &str) -> Result<Out> {
    match command {
        "validate" => validate(spec),
        "d-e" => d_e(spec),
        "curvature" => curvature(spec),
        "solve-r" => solve_r_cmd(spec),
        "tau" => tau(spec),
        "star" => star(spec),
        "c-r" => c_r(spec),
        "assoc-check" => assoc_check(spec),
        "homog-check" => ordering_line(spec, "homogeneity"),
        "parity-check" => ordering_line(spec, "parity"),
        "equiv-gauge" => equiv_gauge(spec),
        "equiv-connection" => equiv_connection(spec),
        "equiv-kappa" => equiv_kappa(spec),
        "uea-check" => uea_check(spec),
        "gutt-compare" => gutt(spec),
        "modular" => modular_cmd(spec),
        "trace-check" => trace_check(spec),
        other => Err(Error::Input(format!("unknown command {other:?}; expected one of {}", COMMANDS.join(", ")))),
    }
}

fn validate(spec: &RunSpec) -> Result<Out> {
    let mut out = Out::default();
    out.block(spec.echo());
    let problems = crate::algebroid::validate_chart(&spec.chart);
    out.check(CheckLine::new(
        "chart",
        problems.is_empty(),
        if problems.is_empty() { "Lie algebroid identities hold".to_string() } else { problems.join("; ") },
    ));
    if problems.is_empty() {
        let conn = spec.connection();
        let ok = conn.is_torsion_free(&spec.chart);
        out.check(CheckLine::new("connection torsion-free", ok, ""));
        let closed = spec.b.d_e(&spec.chart);
        out.check(CheckLine::new("B closed", closed.is_zero(), if closed.is_zero() { String::new() } else { format!("d_E B = {}", closed.to_string().trim()) }));
    }
    Ok(out)
}

fn d_e(spec: &RunSpec) -> Result<Out> {
    let ch = spec.chart.clone().validate()?;
    let mut out = Out::default();
    let mut forms: Vec<(&str, EFormSeries)> = vec![("B", spec.b.clone())];
    if let Some(u) = &spec.u {
        forms.push(("u", EFormSeries::function(u, ch.rank)));
    }
    if let Some(a) = &spec.a_form {
        forms.push(("A", a.clone()));
    }
    let mut square_zero = true;
    for (name, f) in &forms {
        let d = f.d_e(&ch);
        out.line(format!("d_E {name} = {}", show_forms(&d)));
        square_zero &= d.d_e(&ch).is_zero();
    }
    out.check(CheckLine::new("d_E squares to zero", square_zero, format!("{} forms", forms.len())));
    Ok(out)
}

fn show_forms(f: &EFormSeries) -> String {
    let s = f.to_string();
    let s = s.trim();
    if s.is_empty() {
        "0".into()
    } else {
        s.replace('\n', "; ")
    }
}

fn curvature(spec: &RunSpec) -> Result<Out> {
    let geo = geometry(spec)?;
    let rank = geo.rank();
    let mut out = Out::default();
    let mut count = 0;
    for g in 0..rank {
        for d in 0..rank {
            for a in 0..rank {
                for b in a + 1..rank {
                    let v = geo.curvature_component(g, d, a, b);
                    if !v.is_zero() {
                        count += 1;
                        out.line(format!("R[{}][{}][{}][{}] = {v}", g + 1, d + 1, a + 1, b + 1));
                    }
                }
            }
        }
    }
    let mut antisym = true;
    for g in 0..rank {
        for d in 0..rank {
            for a in 0..rank {
                for b in 0..rank {
                    antisym &= (&geo.curvature_component(g, d, a, b) + &geo.curvature_component(g, d, b, a)).is_zero();
                }
            }
        }
    }
    out.line(format!("{count} nonzero components R^g_(d a b), a < b"));
    out.check(CheckLine::new("curvature antisymmetric", antisym, ""));
    Ok(out)
}

fn solve_r_cmd(spec: &RunSpec) -> Result<Out> {
    let s = setup(spec)?;
    let sol = solve_r(&s)?;
    let mut out = Out::default();
    out.line("r =");
    out.block(sol.r().dump());
    out.checks.extend(structure::check_r_structure(&s)?);
    Ok(out)
}

fn tau(spec: &RunSpec) -> Result<Out> {
    let f = need(&spec.f, "f", "tau")?;
    let sol = solve(spec)?;
    let t = sol.taylor(f);
    let mut out = Out::default();
    out.line(format!("tau({f}) ="));
    out.block(t.dump());
    let back = t.sigma();
    out.check(CheckLine::new("sigma tau f = f", &back == f, if &back == f { String::new() } else { format!("sigma tau f = {back}") }));
    let cut = sol.setup().trunc.max_deg.saturating_sub(1);
    let flat = sol.derivation(&t).up_to_deg(cut);
    out.check(CheckLine::new("tau f is flat", flat.is_zero(), format!("Deg <= {cut}")));
    Ok(out)
}

fn star(spec: &RunSpec) -> Result<Out> {
    let f = need(&spec.f, "f", "star")?;
    let g = need(&spec.g, "g", "star")?;
    let sol = solve(spec)?;
    let res = sol.star(f, g)?;
    let mut out = Out::default();
    out.line(format!("{}", res.product));
    let (k, l) = (f.fibre_degree(), g.fibre_degree());
    out.check(CheckLine::new("degree bound", res.degree_bound_holds(k, l), format!("C_r = 0 for r > {}", k + l)));
    Ok(out)
}

fn c_r(spec: &RunSpec) -> Result<Out> {
    let f = need(&spec.f, "f", "c-r")?;
    let g = need(&spec.g, "g", "c-r")?;
    let sol = solve(spec)?;
    let res = sol.star(f, g)?;
    let mut out = Out::default();
    match spec.max_order {
        Some(r) => out.line(format!("C{r} = {}", res.coefficients.get(r as usize).cloned().unwrap_or_else(|| PolySection::zero(f.n(), f.rank())))),
        None => out.block(res.ledger()),
    }
    let (k, l) = (f.fibre_degree(), g.fibre_degree());
    out.check(CheckLine::new("degree bound", res.degree_bound_holds(k, l), format!("C_r = 0 for r > {}", k + l)));
    Ok(out)
}

fn assoc_check(spec: &RunSpec) -> Result<Out> {
    let sol = solve(spec)?;
    let n = trials(spec);
    let max_fibre = spec.max_degree.unwrap_or(2);
    let mut gen = Gen::new(seed(spec));
    let fs = random_sections(spec, &mut gen, 3 * n, max_fibre);
    let triples: Vec<_> = fs.chunks(3).map(|c| (c[0].clone(), c[1].clone(), c[2].clone())).collect();
    let mut out = Out::default();
    out.check(fedosov::check_associativity(&sol, &triples));
    let pairs: Vec<_> = triples.iter().map(|(f, g, _)| (f.clone(), g.clone())).collect();
    out.check(fedosov::check_classical_limit(&sol, &pairs)?);
    let mut bad = None;
    let wide = sol.widened(spec.nu_order.max(2 * max_fibre))?;
    for (f, g) in &pairs {
        let res = wide.star(f, g)?;
        if !res.degree_bound_holds(f.fibre_degree(), g.fibre_degree()) {
            bad = Some(format!("f = {f}; g = {g}:\n{}", res.ledger()));
            break;
        }
    }
    out.check(CheckLine::new("degree bound", bad.is_none(), bad.unwrap_or_else(|| format!("{} pairs", pairs.len()))));
    let rep = fedosov::ordering_and_parity_checks(&sol, seed(spec), n);
    for l in rep.lines.into_iter().filter(|l| l.name.contains("base-multiplication")) {
        out.check(l);
    }
    Ok(out)
}

fn ordering_line(spec: &RunSpec, name: &str) -> Result<Out> {
    let sol = solve(spec)?;
    let rep = fedosov::ordering_and_parity_checks(&sol, seed(spec), trials(spec));
    let mut out = Out::default();
    out.check(rep.get(name).cloned().ok_or_else(|| Error::Internal(format!("missing {name} line")))?);
    Ok(out)
}

fn equiv_gauge(spec: &RunSpec) -> Result<Out> {
    let a = need(&spec.a_form, "A", "equiv-gauge")?;
    let s = setup(spec)?;
    let ch = &s.geo.chart;
    let b2 = match &spec.b_prime {
        Some(b) => b.clone(),
        None => &spec.b - &a.d_e(ch),
    };
    let sol = solve_r(&s)?;
    let sol2 = solve_r(&FedosovSetup::new(s.geo.clone(), b2.clone(), s.kappa.clone(), s.trunc)?)?;
    let g = eq::gauge_data(&sol, &sol2, a)?;
    let l = spec.nu_order;
    let mut out = Out::default();
    out.line(format!("B' = {}", show_forms(&b2)));
    let closed = eq::gauge_h_closed_form(&s.geo, a, s.trunc);
    out.check(CheckLine::new("h closed form", closed == g.h, "homotopy form equals sum D_s^m A/(m+1)!"));
    let mut gen = Gen::new(seed(spec));
    let fs = random_sections(spec, &mut gen, trials(spec).max(2), 2);
    let mut bad = None;
    for f in &fs {
        let x = eq::gauge_iso(&sol, &g, f)?;
        let y = eq::gauge_iso_closed(&s.geo, a, &s.kappa, f, l)?;
        let z = eq::gauge_iso_factored(&s.geo, a, &s.kappa, f, l)?;
        if x != y || x != z {
            bad = Some(format!("f = {f}: {x} | {y} | {z}"));
            break;
        }
    }
    out.check(CheckLine::new("gauge routes agree", bad.is_none(), bad.unwrap_or_else(|| format!("{} sections", fs.len()))));
    out.check(eq::check_intertwining("gauge intertwining", &sol, &sol2, |f| eq::gauge_iso(&sol, &g, f), &consecutive_pairs(&fs))?);
    if let Some(u) = &spec.u {
        let au = EFormSeries::function(u, ch.rank).d_e(ch);
        let up = PolySection::base(u, ch.rank);
        let mut bad = None;
        for f in &fs {
            let d = eq::derivation_from_closed_a(&s.geo, &au, &s.kappa, f, l)?;
            let ad = eq::nu_ad_star(&sol, &up, f)?;
            let i1 = eq::gauge_iso_closed(&s.geo, &au, &s.kappa, f, l)?;
            let e1 = eq::inner_automorphism(&sol, &up, f, false)?;
            let i2 = eq::gauge_iso_closed(&s.geo, &au.shift_nu(1), &s.kappa, f, l)?;
            let e2 = eq::inner_automorphism(&sol, &up, f, true)?;
            if d != ad || i1 != e1 || i2 != e2 {
                bad = Some(format!("f = {f}"));
                break;
            }
        }
        out.check(CheckLine::new(
            "exact A is inner",
            bad.is_none(),
            bad.unwrap_or_else(|| "F(phi d_E u) = (1/nu) ad u, I_(d_E u) = exp((1/nu) ad u), I_(nu d_E u) = exp(ad u)".into()),
        ));
    }
    Ok(out)
}

fn equiv_connection(spec: &RunSpec) -> Result<Out> {
    let g2 = need(&spec.gamma2, "gamma2", "equiv-connection")?;
    let s = setup(spec)?;
    let sol = solve_r(&s)?;
    let geo2 = geometry_with(spec, g2.clone())?;
    let sol2 = solve_r(&FedosovSetup::new(geo2, s.b.clone(), s.kappa.clone(), s.trunc)?)?;
    let cc = eq::connection_change(&sol, &sol2)?;
    let mut out = Out::default();
    out.check(CheckLine::new("h p-degree <= 1", eq::sstar_at_most_one(&cc.h), ""));
    let mut gen = Gen::new(seed(spec));
    let fs = random_sections(spec, &mut gen, trials(spec).max(2), 2);
    out.check(eq::check_intertwining("connection intertwining", &sol, &sol2, |f| eq::connection_equivalence(&sol, &cc, f), &consecutive_pairs(&fs))?);
    Ok(out)
}

fn equiv_kappa(spec: &RunSpec) -> Result<Out> {
    let k2 = need(&spec.kappa2, "kappa2", "equiv-kappa")?;
    let sol = solve(spec)?;
    let sol2 = eq::solve_at_kappa(&sol, k2)?;
    let oc = eq::ordering_change(&sol, &sol2, None)?;
    let mut out = Out::default();
    out.line(format!("gamma = {}", show_forms(&oc.gamma)));
    out.check(CheckLine::new("h p-degree <= 1", eq::sstar_at_most_one(&oc.h), ""));
    let mut gen = Gen::new(seed(spec));
    let fs = random_sections(spec, &mut gen, trials(spec).max(2), 2);
    out.check(eq::check_intertwining("kappa intertwining", &sol, &sol2, |f| eq::kappa_equivalence(&sol, &oc, f), &consecutive_pairs(&fs))?);
    Ok(out)
}

fn uea_check(spec: &RunSpec) -> Result<Out> {
    let sol = solve(spec)?;
    let lie = uea::LieData::from_chart(&sol.setup().geo.chart)?;
    let mut out = Out::default();
    out.check(uea::diamond_test(&lie, seed(spec), trials(spec), 5));
    out.check(uea::pbw_associativity(&lie, seed(spec), trials(spec), 3));
    out.checks.extend(uea::phi_check(&sol, spec.max_degree.unwrap_or(4))?);
    Ok(out)
}

fn gutt(spec: &RunSpec) -> Result<Out> {
    let sol = solve(spec)?;
    let mut out = Out::default();
    out.checks = uea::gutt_compare(&sol, spec.max_degree.unwrap_or(3))?;
    Ok(out)
}

fn weights(spec: &RunSpec) -> DensityWeights {
    DensityWeights { w_m: spec.w_m.clone(), w_e: spec.w_e.clone() }
}

fn modular_cmd(spec: &RunSpec) -> Result<Out> {
    let ch = spec.chart.clone().validate()?;
    let dw = weights(spec);
    let tr = modular::tr_ad(&ch, &dw);
    let mut out = Out::default();
    out.line(format!("tr ad = {}", show_forms(&tr)));
    out.line(format!("tr ad vanishes: {}", if tr.is_zero() { "yes" } else { "no" }));
    out.checks.extend(modular::divergence_checks(&ch, &dw, seed(spec), trials(spec)));
    match modular::modular_vector_field(&ch, &dw) {
        Ok(x) => {
            out.line(format!("modular vector field = {x}"));
            out.check(CheckLine::new("modular field routes agree", true, ""));
        }
        Err(Error::Internal(m)) => out.check(CheckLine::new("modular field routes agree", false, m)),
        Err(e) => return Err(e),
    }
    Ok(out)
}

fn trace_check(spec: &RunSpec) -> Result<Out> {
    let sol = solve(spec)?;
    let cert = modular::trace_certificate(&sol, &weights(spec), spec.max_degree.unwrap_or(3), spec.max_order.unwrap_or(4), seed(spec))?;
    let mut out = Out::default();
    out.block(cert.to_string());
    out.checks = cert.report();
    Ok(out)
}

/// Appends `key=value` assignments to spec text, dropping earlier lines
/// with the same key so the assignment wins.
pub fn merge_assignments(text: &str, assignments: &[String]) -> Result<String> {
    let mut pairs = Vec::new();
    for a in assignments {
        let (k, v) = a.split_once('=').ok_or_else(|| Error::Input(format!("expected key=value, found {a:?}")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut out = String::new();
    for line in text.lines() {
        let key = line.split('#').next().unwrap_or("").split('=').next().unwrap_or("").trim();
        if pairs.iter().any(|(k, _)| k == key) {
            out += "# overridden\n";
        } else {
            out += line;
            out.push('\n');
        }
    }
    for (k, v) in pairs {
        out += &format!("{k} = {v}\n");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    fn go(text: &str) -> RunOutput {
        run(&parse_spec(text).unwrap(), &Overrides::default())
    }

    #[test]
    fn assignments_override_spec_lines() {
        let t = merge_assignments("chart = heis3\nf = p3\n", &["f=p1".into(), "g = p2".into()]).unwrap();
        assert_eq!(t, "chart = heis3\n# overridden\nf = p1\ng = p2\n");
        assert!(merge_assignments("", &["nokey".into()]).is_err());
    }

    #[test]
    fn heisenberg_star() {
        let o = go("chart = heis3\ncommand = star\nf = p1\ng = p2\n");
        assert_eq!(o.code, 0, "{}", o.text);
        assert!(o.text.contains("\np1*p2 - (1/2) nu p3\n"), "{}", o.text);
        assert!(o.text.ends_with("RESULT: PASS (1 checks)\n"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(go("chart = heis3\ncommand = nope\n").code, 2);
        assert_eq!(go("chart = heis3\ncommand = star\nf = p1\n").code, 2);
        let o = go("chart = heis3\ncommand = gutt-compare\nmax_degree = 2\n");
        assert_eq!(o.code, 0, "{}", o.text);
        let o = go("chart = so3\ncommand = gutt-compare\nmax_degree = 1\nnu_order = 2\n");
        assert_eq!(o.code, 1, "{}", o.text);
        let o = go("chart = axb\ncommand = trace-check\nmax_degree = 1\nmax_order = 1\n");
        assert_eq!(o.code, 2, "{}", o.text);
    }

    #[test]
    fn every_command_runs_on_tangent_line() {
        let base = "chart = tangent1\nconnection = explicit\nnu_order = 2\nf = p1^2\ng = q1*p1\nu = q1^2\nA[0] = (1): q1\ngamma2[1][1][1] = q1\nkappa2 = 0\ntrials = 3\nmax_degree = 2\nmax_order = 2\n";
        for c in COMMANDS {
            if ["uea-check", "gutt-compare"].contains(c) {
                continue;
            }
            let o = go(&format!("{base}command = {c}\n"));
            assert_eq!(o.code, 0, "{c}:\n{}", o.text);
        }
        let o = go(&format!("{base}command = uea-check\n"));
        assert_eq!(o.code, 2, "{}", o.text);
    }
}
