//! Key-value spec files describing a chart and a run.
//!
//! Grammar, one entry per line, `#` starts a comment:
//!
//! ```text
//! name = heis3
//! chart = heis3              # built-in fixture or path, instead of inline data
//! n = 0
//! N = 3
//! anchor[a][i] = <poly in q>
//! c[a][b][g] = <poly in q>   # c^g_{ab}; the partner c[b][a][g] is filled in
//! gamma[a][b][g] = <poly>    # Christoffel symbols
//! connection = explicit | symmetrized | half-c
//! B[k] = (a,b): <poly>; (a,c): <poly>    # nu^k part of B
//! kappa = 1/2
//! nu_order = 4               # L
//! total_degree = 8           # T, optional
//! command = star
//! f = p1                     # command arguments
//! ```
//!
//! Further argument keys: `g`, `u`, `w_M`, `w_E`, `trials`, `seed`,
//! `max_degree`, `max_order`, `kappa2`, `A[k] = (a): <poly>; ...`,
//! `Bprime[k] = ...`, `gamma2[a][b][g] = <poly>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::algebroid::{AlgebroidChart, Connection, EFormSeries, PolySection};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::ring::{parse_scalar, rat, BasePoly, PolyParser, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub enum ConnectionSelector {
    /// Use the given Christoffel symbols as they are.
    Explicit(Connection),
    /// Subtract half the torsion of the given symbols.
    Symmetrized(Connection),
    /// Γ = c/2.
    HalfStructureConstants,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub chart: AlgebroidChart,
    pub connection: ConnectionSelector,
    pub b: EFormSeries,
    pub kappa: Scalar,
    pub nu_order: u32,
    pub total_degree: Option<u32>,
    pub command: Option<String>,
    pub f: Option<PolySection>,
    pub g: Option<PolySection>,
    pub u: Option<BasePoly>,
    pub w_m: BasePoly,
    pub w_e: BasePoly,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub max_degree: Option<u32>,
    pub max_order: Option<u32>,
    pub kappa2: Option<Scalar>,
    pub a_form: Option<EFormSeries>,
    pub b_prime: Option<EFormSeries>,
    pub gamma2: Option<Connection>,
    /// Remarks produced while parsing (e.g. completed antisymmetric entries).
    pub notes: Vec<String>,
}

impl RunSpec {
    /// Connection selected by the spec, before any torsion check.
    pub fn connection(&self) -> Connection {
        match &self.connection {
            ConnectionSelector::Explicit(c) => c.clone(),
            ConnectionSelector::Symmetrized(c) => c.symmetrize(&self.chart),
            ConnectionSelector::HalfStructureConstants => Connection::half_structure_constants(&self.chart),
        }
    }

    /// Echo of all fields in spec syntax.
    pub fn echo(&self) -> String {
        let ch = &self.chart;
        let mut s = format!("name = {}\nn = {}\nN = {}\n", ch.name, ch.n, ch.rank);
        for a in 0..ch.rank {
            for i in 0..ch.n {
                let v = ch.anchor(a, i);
                if !v.is_zero() {
                    s += &format!("anchor[{}][{}] = {v}\n", a + 1, i + 1);
                }
            }
        }
        for a in 0..ch.rank {
            for b in 0..ch.rank {
                for g in 0..ch.rank {
                    let v = ch.c(a, b, g);
                    if !v.is_zero() {
                        s += &format!("c[{}][{}][{}] = {v}\n", a + 1, b + 1, g + 1);
                    }
                }
            }
        }
        let (sel, conn) = match &self.connection {
            ConnectionSelector::Explicit(c) => ("explicit", Some(c)),
            ConnectionSelector::Symmetrized(c) => ("symmetrized", Some(c)),
            ConnectionSelector::HalfStructureConstants => ("half-c", None),
        };
        if let Some(c) = conn {
            s += &gamma_lines("gamma", c);
        }
        s += &format!("connection = {sel}\n");
        s += &forms_lines("B", &self.b);
        s += &format!("kappa = {}\n", scalar_plain(&self.kappa));
        s += &format!("nu_order = {}\n", self.nu_order);
        if let Some(t) = self.total_degree {
            s += &format!("total_degree = {t}\n");
        }
        if let Some(c) = &self.command {
            s += &format!("command = {c}\n");
        }
        for (k, v) in [("f", &self.f), ("g", &self.g)] {
            if let Some(v) = v {
                s += &format!("{k} = {v}\n");
            }
        }
        if let Some(u) = &self.u {
            s += &format!("u = {u}\n");
        }
        if !self.w_m.is_zero() {
            s += &format!("w_M = {}\n", self.w_m);
        }
        if !self.w_e.is_zero() {
            s += &format!("w_E = {}\n", self.w_e);
        }
        for (k, v) in [("trials", self.trials.map(|x| x as u64)), ("seed", self.seed)] {
            if let Some(v) = v {
                s += &format!("{k} = {v}\n");
            }
        }
        for (k, v) in [("max_degree", self.max_degree), ("max_order", self.max_order)] {
            if let Some(v) = v {
                s += &format!("{k} = {v}\n");
            }
        }
        if let Some(k2) = &self.kappa2 {
            s += &format!("kappa2 = {}\n", scalar_plain(k2));
        }
        if let Some(a) = &self.a_form {
            s += &forms_lines("A", a);
        }
        if let Some(b) = &self.b_prime {
            s += &forms_lines("Bprime", b);
        }
        if let Some(g) = &self.gamma2 {
            s += &gamma_lines("gamma2", g);
        }
        s
    }
}

fn scalar_plain(c: &Scalar) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn gamma_lines(key: &str, c: &Connection) -> String {
    let r = c.rank;
    let mut s = String::new();
    for a in 0..r {
        for b in 0..r {
            for g in 0..r {
                let v = c.g(a, b, g);
                if !v.is_zero() {
                    s += &format!("{key}[{}][{}][{}] = {v}\n", a + 1, b + 1, g + 1);
                }
            }
        }
    }
    s
}

fn forms_lines(key: &str, f: &EFormSeries) -> String {
    let mut by_k: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    for ((k, m), u) in f.iter() {
        let idx: Vec<String> = crate::algebroid::mask_indices(*m).iter().map(|i| (i + 1).to_string()).collect();
        by_k.entry(*k).or_default().push(format!("({}): {u}", idx.join(",")));
    }
    by_k.iter().map(|(k, v)| format!("{key}[{k}] = {}\n", v.join("; "))).collect()
}

struct Entry {
    key: String,
    idx: Vec<usize>,
    value: String,
    line: usize,
    vcol: usize,
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

fn lex_lines(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let Some(eq) = body.find('=') else {
            return Err(perr(line, 1, "expected `key = value`"));
        };
        let lhs = body[..eq].trim();
        let value = body[eq + 1..].trim().to_string();
        let vcol = eq + 2 + (body[eq + 1..].len() - body[eq + 1..].trim_start().len());
        let (key, idx) = match lhs.find('[') {
            None => (lhs.to_string(), vec![]),
            Some(p) => {
                let key = lhs[..p].trim().to_string();
                let mut idx = Vec::new();
                let mut rest = &lhs[p..];
                while !rest.is_empty() {
                    let close = rest
                        .find(']')
                        .filter(|_| rest.starts_with('['))
                        .ok_or_else(|| perr(line, 1, format!("malformed index in {lhs:?}")))?;
                    let v: usize = rest[1..close]
                        .trim()
                        .parse()
                        .map_err(|_| perr(line, 1, format!("index must be a positive integer in {lhs:?}")))?;
                    idx.push(v);
                    rest = rest[close + 1..].trim_start();
                }
                (key, idx)
            }
        };
        if key.is_empty() {
            return Err(perr(line, 1, "missing key"));
        }
        out.push(Entry { key, idx, value, line, vcol });
    }
    Ok(out)
}

/// Resolves `chart = ...` references: built-in fixture names first, then
/// paths relative to `base_dir`.
fn load_chart_text(name: &str, base_dir: Option<&Path>) -> Option<String> {
    if let Some(t) = fixtures::chart_text(name) {
        return Some(t.to_string());
    }
    let p = match base_dir {
        Some(d) => d.join(name),
        None => PathBuf::from(name),
    };
    std::fs::read_to_string(p).ok()
}

pub fn parse_spec(text: &str) -> Result<RunSpec> {
    parse_spec_in(text, None)
}

/// Parse a spec whose relative `chart = path` entries resolve against `base_dir`.
pub fn parse_spec_in(text: &str, base_dir: Option<&Path>) -> Result<RunSpec> {
    let mut entries = lex_lines(text)?;
    if let Some(pos) = entries.iter().position(|e| e.key == "chart") {
        let e = entries.remove(pos);
        let ctext = load_chart_text(&e.value, base_dir)
            .ok_or_else(|| perr(e.line, e.vcol, format!("cannot load chart {:?}", e.value)))?;
        let mut included = lex_lines(&ctext).map_err(|err| match err {
            Error::Parse { line, col, msg } => perr(e.line, e.vcol, format!("in chart {} line {line}:{col}: {msg}", e.value)),
            other => other,
        })?;
        for i in &mut included {
            // diagnostics for included lines point at the include line
            i.line = e.line;
            i.vcol = e.vcol;
        }
        included.extend(entries);
        entries = included;
    }

    let single = |key: &str| -> Result<Option<&Entry>> {
        let mut it = entries.iter().filter(|e| e.key == key);
        let first = it.next();
        if let Some(dup) = it.next() {
            return Err(perr(dup.line, 1, format!("duplicate key {key:?}")));
        }
        Ok(first)
    };
    let usize_of = |e: &Entry| -> Result<usize> {
        e.value.parse().map_err(|_| perr(e.line, e.vcol, "expected a non-negative integer"))
    };

    let name = single("name")?.map(|e| e.value.clone()).unwrap_or_else(|| "unnamed".into());
    let n = match single("n")? {
        Some(e) => usize_of(e)?,
        None => 0,
    };
    let rank = match single("N")? {
        Some(e) => usize_of(e)?,
        None => return Err(perr(1, 1, "missing fibre dimension `N`")),
    };
    if rank == 0 || rank > 16 {
        return Err(perr(1, 1, "fibre dimension N must be between 1 and 16"));
    }
    let base = PolyParser::base(n);
    let sec = PolyParser::new(n, rank);
    let base_poly = |e: &Entry| -> Result<BasePoly> {
        let raw = base.parse_at(&e.value, e.line, e.vcol)?;
        crate::ring::raw_to_base(&raw, n, 0)
    };
    let check_idx = |e: &Entry, bounds: &[usize]| -> Result<Vec<usize>> {
        if e.idx.len() != bounds.len() {
            return Err(perr(e.line, 1, format!("{} expects {} indices", e.key, bounds.len())));
        }
        for (&i, &b) in e.idx.iter().zip(bounds) {
            if i == 0 || i > b {
                return Err(perr(e.line, 1, format!("index {i} out of range 1..={b} in {}", e.key)));
            }
        }
        Ok(e.idx.iter().map(|i| i - 1).collect())
    };

    let mut chart = AlgebroidChart::new(&name, n, rank);
    let mut notes = Vec::new();
    let mut gamma: Option<Connection> = None;
    let mut gamma2: Option<Connection> = None;
    let mut b = EFormSeries::zero(n, rank);
    let mut a_form: Option<EFormSeries> = None;
    let mut b_prime: Option<EFormSeries> = None;
    let mut c_seen: BTreeMap<(usize, usize, usize), ()> = BTreeMap::new();

    let mut spec = RunSpec {
        chart: AlgebroidChart::new(&name, n, rank),
        connection: ConnectionSelector::HalfStructureConstants,
        b: EFormSeries::zero(n, rank),
        kappa: rat(1, 2),
        nu_order: 4,
        total_degree: None,
        command: None,
        f: None,
        g: None,
        u: None,
        w_m: BasePoly::zero(n),
        w_e: BasePoly::zero(n),
        trials: None,
        seed: None,
        max_degree: None,
        max_order: None,
        kappa2: None,
        a_form: None,
        b_prime: None,
        gamma2: None,
        notes: Vec::new(),
    };
    let mut selector: Option<(String, usize, usize)> = None;

    for e in &entries {
        match e.key.as_str() {
            "name" | "n" | "N" => {}
            "anchor" => {
                let i = check_idx(e, &[rank, n])?;
                chart.set_anchor(i[0], i[1], base_poly(e)?);
            }
            "c" => {
                let i = check_idx(e, &[rank, rank, rank])?;
                chart.set_c(i[0], i[1], i[2], base_poly(e)?);
                c_seen.insert((i[0], i[1], i[2]), ());
            }
            "gamma" | "gamma2" => {
                let i = check_idx(e, &[rank, rank, rank])?;
                let target = if e.key == "gamma" { &mut gamma } else { &mut gamma2 };
                target.get_or_insert_with(|| Connection::zero(n, rank)).set(i[0], i[1], i[2], base_poly(e)?);
            }
            "B" | "A" | "Bprime" => {
                if e.idx.len() != 1 {
                    return Err(perr(e.line, 1, format!("{} expects one nu-power index", e.key)));
                }
                let k = e.idx[0] as u32;
                let target = match e.key.as_str() {
                    "B" => &mut b,
                    "A" => a_form.get_or_insert_with(|| EFormSeries::zero(n, rank)),
                    _ => b_prime.get_or_insert_with(|| EFormSeries::zero(n, rank)),
                };
                parse_form_list(e, k, rank, &base, target)?;
            }
            "connection" => selector = Some((e.value.clone(), e.line, e.vcol)),
            "kappa" | "kappa2" => {
                let v = parse_scalar(&e.value).map_err(|_| perr(e.line, e.vcol, "kappa must be a rational number"))?;
                if e.key == "kappa" {
                    spec.kappa = v;
                } else {
                    spec.kappa2 = Some(v);
                }
            }
            "nu_order" => spec.nu_order = usize_of(e)? as u32,
            "total_degree" => spec.total_degree = Some(usize_of(e)? as u32),
            "command" => spec.command = Some(e.value.clone()),
            "f" | "g" => {
                let raw = sec.parse_at(&e.value, e.line, e.vcol)?;
                let s = crate::algebroid::section_from_raw(&raw, n, rank);
                if e.key == "f" {
                    spec.f = Some(s);
                } else {
                    spec.g = Some(s);
                }
            }
            "u" => spec.u = Some(base_poly(e)?),
            "w_M" => spec.w_m = base_poly(e)?,
            "w_E" => spec.w_e = base_poly(e)?,
            "trials" => spec.trials = Some(usize_of(e)?),
            "seed" => spec.seed = Some(usize_of(e)? as u64),
            "max_degree" => spec.max_degree = Some(usize_of(e)? as u32),
            "max_order" => spec.max_order = Some(usize_of(e)? as u32),
            other => return Err(perr(e.line, 1, format!("unknown key {other:?}"))),
        }
    }

    // complete antisymmetric partners of c
    for (&(a, bb, g), _) in &c_seen {
        if a == bb {
            continue;
        }
        if !c_seen.contains_key(&(bb, a, g)) {
            let v = -chart.c(a, bb, g);
            if !v.is_zero() {
                notes.push(format!(
                    "completed c[{}][{}][{}] = {} from antisymmetry",
                    bb + 1, a + 1, g + 1, v
                ));
            }
            chart.set_c(bb, a, g, v);
        }
    }

    spec.connection = match selector {
        None => match gamma {
            Some(g) => ConnectionSelector::Explicit(g),
            None => ConnectionSelector::HalfStructureConstants,
        },
        Some((s, line, col)) => match s.as_str() {
            "explicit" => ConnectionSelector::Explicit(gamma.unwrap_or_else(|| Connection::zero(n, rank))),
            "symmetrized" => ConnectionSelector::Symmetrized(gamma.unwrap_or_else(|| Connection::zero(n, rank))),
            "half-c" => ConnectionSelector::HalfStructureConstants,
            _ => return Err(perr(line, col, "connection must be explicit, symmetrized or half-c")),
        },
    };
    if let Some(t) = spec.total_degree {
        if t < spec.nu_order {
            return Err(perr(1, 1, format!("total_degree {t} is below nu_order {}", spec.nu_order)));
        }
    }
    spec.chart = chart;
    spec.b = b;
    spec.a_form = a_form;
    spec.b_prime = b_prime;
    spec.gamma2 = gamma2;
    spec.notes = notes;
    Ok(spec)
}

/// `(a,b): poly; (c): poly` lists of form components.
fn parse_form_list(e: &Entry, k: u32, rank: usize, base: &PolyParser, out: &mut EFormSeries) -> Result<()> {
    let mut offset = 0;
    for item in e.value.split(';') {
        let col = e.vcol + offset;
        offset += item.len() + 1;
        if item.trim().is_empty() {
            continue;
        }
        let lead = item.len() - item.trim_start().len();
        let item_t = item.trim();
        let close = item_t
            .find(')')
            .filter(|_| item_t.starts_with('('))
            .ok_or_else(|| perr(e.line, col + lead, "expected `(indices): polynomial`"))?;
        let idx: Vec<usize> = item_t[1..close]
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(e.line, col + lead, "indices must be positive integers"))?;
        if idx.iter().any(|&i| i == 0 || i > rank) {
            return Err(perr(e.line, col + lead, format!("form index out of range 1..={rank}")));
        }
        let rest = item_t[close + 1..].trim_start();
        let Some(rest) = rest.strip_prefix(':') else {
            return Err(perr(e.line, col + lead + close + 1, "expected ':' after indices"));
        };
        let pcol = col + lead + (item_t.len() - rest.len()) + 1;
        let raw = base.parse_at(rest.trim(), e.line, pcol)?;
        let u = crate::ring::raw_to_base(&raw, out.n(), 0)?;
        let zero_based: Vec<usize> = idx.iter().map(|i| i - 1).collect();
        out.add_wedge(k, &zero_based, u);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec_has_defaults() {
        let s = parse_spec("name = ab\nN = 2\n").unwrap();
        assert_eq!(s.kappa, rat(1, 2));
        assert!(s.b.is_zero());
        assert_eq!(s.nu_order, 4);
        assert_eq!(s.chart.n, 0);
    }

    #[test]
    fn heis3_spec_echoes_fields() {
        let s = parse_spec("chart = heis3\nkappa = 0\nnu_order = 6\n").unwrap();
        assert_eq!(s.kappa, rat(0, 1));
        assert_eq!(s.nu_order, 6);
        let again = parse_spec(&s.echo()).unwrap();
        assert_eq!(again.chart, s.chart);
        assert_eq!(again.kappa, s.kappa);
        assert_eq!(again.nu_order, 6);
    }

    #[test]
    fn antisymmetric_partner_is_completed() {
        let s = parse_spec("N = 3\nc[1][2][3] = 1\n").unwrap();
        assert_eq!(s.chart.c(1, 0, 2), &BasePoly::constant(0, rat(-1, 1)));
        assert_eq!(s.notes.len(), 1);
        assert!(s.notes[0].contains("c[2][1][3] = -1"));
    }

    #[test]
    fn forms_and_errors() {
        let s = parse_spec("N = 2\nB[0] = (1,2): 1\nB[1] = (2,1): 3\n").unwrap();
        assert_eq!(s.b.get(0, 0b11), BasePoly::one(0));
        assert_eq!(s.b.get(1, 0b11), BasePoly::constant(0, rat(-3, 1)));
        let e = parse_spec("N = 2\nkappa = x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_spec("n = 1\nN = 1\nanchor[1][1] = q2\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, col: 16, .. }), "{e:?}");
        let e = parse_spec("N = 1\nanchor[1][1] = 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }
}
