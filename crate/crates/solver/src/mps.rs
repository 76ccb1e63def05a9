//! Free-format MPS interchange.
//!
//! The writer emits sections `NAME`, `ROWS`, `COLUMNS`, `RHS`, `BOUNDS`,
//! `ENDATA`. The objective row is named `obj` and is always minimized. Every
//! column appears in `COLUMNS` (with an explicit zero objective entry if it has
//! no other coefficients), so column order is preserved on read. Bounds are
//! written explicitly whenever they differ from the MPS default `[0, +inf)`:
//! `FX` for fixed, `FR` for free, `MI` for `-inf` lower, `LO`/`UP` otherwise.
//! Numbers use the shortest decimal form that round-trips.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::{LpProblem, ProblemError, Scalar, Sense, VarId};

pub const OBJECTIVE_ROW: &str = "obj";

#[derive(Debug, Error)]
pub enum MpsError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("name `{0}` cannot be written to MPS (empty, contains whitespace, or reserved)")]
    BadName(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn check_name(name: &str) -> Result<(), MpsError> {
    if name.is_empty() || name.chars().any(char::is_whitespace) || name == OBJECTIVE_ROW {
        return Err(MpsError::BadName(name.to_string()));
    }
    Ok(())
}

/// Renders `problem` as free-format MPS text.
pub fn write_mps<T: Scalar>(problem: &LpProblem<T>) -> Result<String, MpsError> {
    problem.validate_names()?;
    for v in &problem.vars {
        check_name(&v.name)?;
    }
    for r in &problem.rows {
        check_name(&r.name)?;
    }
    let num = |v: T| format!("{}", v.to_f64_lossy());

    let mut out = String::new();
    let title = if problem.name.trim().is_empty() {
        "lp".to_string()
    } else {
        problem.name.split_whitespace().collect::<Vec<_>>().join("_")
    };
    let _ = writeln!(out, "NAME {title}");
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {OBJECTIVE_ROW}");
    for r in &problem.rows {
        let tag = match r.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {tag} {}", r.name);
    }

    let mut by_col: Vec<Vec<(usize, T)>> = vec![Vec::new(); problem.num_vars()];
    for (i, r) in problem.rows.iter().enumerate() {
        for &(v, a) in &r.terms {
            by_col[v.0].push((i, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, v) in problem.vars.iter().enumerate() {
        // Merge duplicate terms so readers see one entry per (column, row).
        let mut entries = std::mem::take(&mut by_col[j]);
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(entries.len());
        for (i, a) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 = last.1 + a,
                _ => merged.push((i, a)),
            }
        }
        if v.cost != T::zero() || merged.is_empty() {
            let _ = writeln!(out, " {} {OBJECTIVE_ROW} {}", v.name, num(v.cost));
        }
        for (i, a) in merged {
            let _ = writeln!(out, " {} {} {}", v.name, problem.rows[i].name, num(a));
        }
    }
    out.push_str("RHS\n");
    for r in &problem.rows {
        if r.rhs != T::zero() {
            let _ = writeln!(out, " rhs {} {}", r.name, num(r.rhs));
        }
    }
    out.push_str("BOUNDS\n");
    for v in &problem.vars {
        let (lo, hi) = (v.lower, v.upper);
        let lo_inf = lo == T::neg_infinity();
        let hi_inf = hi == T::infinity();
        if lo == hi {
            let _ = writeln!(out, " FX bnd {} {}", v.name, num(lo));
        } else if lo_inf && hi_inf {
            let _ = writeln!(out, " FR bnd {}", v.name);
        } else {
            if lo_inf {
                let _ = writeln!(out, " MI bnd {}", v.name);
            } else if lo != T::zero() {
                let _ = writeln!(out, " LO bnd {} {}", v.name, num(lo));
            }
            if !hi_inf {
                let _ = writeln!(out, " UP bnd {} {}", v.name, num(hi));
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

/// Parses free-format MPS produced by [`write_mps`] (or any free MPS using
/// the same section subset).
pub fn read_mps<T: Scalar>(text: &str) -> Result<LpProblem<T>, MpsError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Done,
    }
    let mut lp = LpProblem::<T>::new("lp");
    let mut section = Section::None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut col_index: HashMap<String, VarId> = HashMap::new();
    let mut objective: Option<String> = None;
    // Tracks whether an UP bound needs the legacy "negative UP implies -inf lower" rule.
    let mut lower_set = Vec::<bool>::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let err = |message: String| MpsError::Parse {
            line: line_no,
            message,
        };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !raw.starts_with(char::is_whitespace) {
            section = match fields[0] {
                "NAME" => {
                    lp.name = fields.get(1).copied().unwrap_or("lp").to_string();
                    Section::None
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                other => return Err(err(format!("unknown section `{other}`"))),
            };
            continue;
        }
        let parse_num = |s: &str| -> Result<T, MpsError> {
            s.parse::<f64>()
                .map(T::of)
                .map_err(|_| err(format!("bad number `{s}`")))
        };
        match section {
            Section::Rows => {
                let [kind, name] = fields[..] else {
                    return Err(err("expected `<type> <name>`".into()));
                };
                let sense = match kind {
                    "N" => {
                        if objective.is_none() {
                            objective = Some(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    other => return Err(err(format!("unknown row type `{other}`"))),
                };
                let id = lp.add_row(name, Vec::new(), sense, T::zero());
                row_index.insert(name.to_string(), id.0);
            }
            Section::Columns => {
                if fields.len() < 3 || fields.len().is_multiple_of(2) {
                    return Err(err("expected `<column> <row> <value> [<row> <value>]`".into()));
                }
                if fields.contains(&"'MARKER'") {
                    return Err(err("integer markers are not supported".into()));
                }
                let col = match col_index.get(fields[0]) {
                    Some(&c) => c,
                    None => {
                        let c = lp.add_var(fields[0], T::zero(), T::infinity(), T::zero());
                        col_index.insert(fields[0].to_string(), c);
                        lower_set.push(false);
                        c
                    }
                };
                for pair in fields[1..].chunks(2) {
                    let value = parse_num(pair[1])?;
                    if Some(pair[0]) == objective.as_deref() {
                        lp.vars[col.0].cost = value;
                    } else {
                        let &i = row_index
                            .get(pair[0])
                            .ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                        lp.rows[i].terms.push((col, value));
                    }
                }
            }
            Section::Rhs => {
                if fields.len() < 3 || fields.len().is_multiple_of(2) {
                    return Err(err("expected `<set> <row> <value> [<row> <value>]`".into()));
                }
                for pair in fields[1..].chunks(2) {
                    let value = parse_num(pair[1])?;
                    if Some(pair[0]) == objective.as_deref() {
                        continue;
                    }
                    let &i = row_index
                        .get(pair[0])
                        .ok_or_else(|| err(format!("unknown row `{}`", pair[0])))?;
                    lp.rows[i].rhs = value;
                }
            }
            Section::Bounds => {
                if fields.len() < 3 {
                    return Err(err("expected `<type> <set> <column> [<value>]`".into()));
                }
                let &col = col_index
                    .get(fields[2])
                    .ok_or_else(|| err(format!("unknown column `{}`", fields[2])))?;
                let value = || -> Result<T, MpsError> {
                    fields
                        .get(3)
                        .ok_or_else(|| err("missing bound value".into()))
                        .and_then(|s| parse_num(s))
                };
                let v = &mut lp.vars[col.0];
                match fields[0] {
                    "LO" => {
                        v.lower = value()?;
                        lower_set[col.0] = true;
                    }
                    "UP" => {
                        v.upper = value()?;
                        if v.upper < T::zero() && !lower_set[col.0] && v.lower == T::zero() {
                            v.lower = T::neg_infinity();
                        }
                    }
                    "FX" => {
                        let x = value()?;
                        v.lower = x;
                        v.upper = x;
                        lower_set[col.0] = true;
                    }
                    "FR" => {
                        v.lower = T::neg_infinity();
                        v.upper = T::infinity();
                        lower_set[col.0] = true;
                    }
                    "MI" => {
                        v.lower = T::neg_infinity();
                        lower_set[col.0] = true;
                    }
                    "PL" => v.upper = T::infinity(),
                    other => return Err(err(format!("unsupported bound type `{other}`"))),
                }
            }
            Section::None | Section::Done => {
                return Err(err("data line outside of a section".into()));
            }
        }
    }
    if section != Section::Done {
        return Err(MpsError::Parse {
            line: text.lines().count(),
            message: "missing ENDATA".into(),
        });
    }
    lp.validate()?;
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LpProblem<f64> {
        let mut lp = LpProblem::new("sample lp");
        let x = lp.add_var("x", 0.0, f64::INFINITY, 1.5);
        let y = lp.add_var("y", -2.0, 4.0, -1.0);
        let z = lp.add_var("z", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        let w = lp.add_var("w", f64::NEG_INFINITY, -1.0, 0.0);
        let f = lp.add_var("f", 0.1, 0.1, 0.0);
        lp.add_row("r1", vec![(x, 1.0), (y, 2.0)], Sense::Le, 10.0);
        lp.add_row("r2", vec![(x, -1.0), (z, 1.0)], Sense::Ge, -3.25);
        lp.add_row("r3", vec![(y, 1.0), (w, 1.0), (f, 1.0)], Sense::Eq, 0.0);
        lp
    }

    #[test]
    fn round_trip_is_lossless() {
        let lp = sample();
        let text = write_mps(&lp).unwrap();
        let back: LpProblem<f64> = read_mps(&text).unwrap();
        assert_eq!(back.name, "sample_lp");
        assert_eq!(back.vars, lp.vars);
        assert_eq!(back.rows, lp.rows);
    }

    #[test]
    fn negative_upper_without_lower_follows_legacy_rule() {
        let text = "NAME t\nROWS\n N obj\nCOLUMNS\n x obj 1\nRHS\nBOUNDS\n UP bnd x -1\nENDATA\n";
        let lp: LpProblem<f64> = read_mps(text).unwrap();
        assert_eq!(lp.vars[0].lower, f64::NEG_INFINITY);
        assert_eq!(lp.vars[0].upper, -1.0);
    }

    #[test]
    fn rejects_unwritable_names() {
        let mut lp = LpProblem::<f64>::new("t");
        lp.add_var("has space", 0.0, 1.0, 0.0);
        assert!(matches!(write_mps(&lp), Err(MpsError::BadName(_))));
    }

    #[test]
    fn reports_line_of_parse_error() {
        let text = "NAME t\nROWS\n N obj\nCOLUMNS\n x obj abc\nENDATA\n";
        match read_mps::<f64>(text) {
            Err(MpsError::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }
}
