use super::model::{MilpModel, Sense, VarKind};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("shortened name `{short}` collides with existing name `{existing}`")]
    NameCollision { short: String, existing: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("model error while rebuilding: {0}")]
    Rebuild(#[from] super::model::ModelError),
}

/// Deterministic 8-character name table. Names longer than 8 characters get
/// `first-4-chars ~ base36-counter` in order of first appearance; a clash with
/// any other emitted name is an error.
struct NameTable {
    map: HashMap<String, String>,
    used: HashMap<String, String>,
    counter: u64,
}

impl NameTable {
    fn new() -> Self {
        NameTable { map: HashMap::new(), used: HashMap::new(), counter: 0 }
    }

    fn shorten(&mut self, name: &str) -> Result<String, MpsError> {
        if let Some(s) = self.map.get(name) {
            return Ok(s.clone());
        }
        let short = if name.len() <= 8 {
            name.to_string()
        } else {
            let mut s = format!("{}~{}", &name[..4], to_base36(self.counter));
            self.counter += 1;
            while s.len() > 8 {
                s.truncate(8);
            }
            s
        };
        if let Some(existing) = self.used.get(&short) {
            return Err(MpsError::NameCollision { short, existing: existing.clone() });
        }
        self.used.insert(short.clone(), name.to_string());
        self.map.insert(name.to_string(), short.clone());
        Ok(short)
    }
}

fn to_base36(mut v: u64) -> String {
    const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";
    if v == 0 {
        return "0".into();
    }
    let mut out = Vec::new();
    while v > 0 {
        out.push(DIGITS[(v % 36) as usize]);
        v /= 36;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

fn num(v: f64) -> String {
    format!("{}", v)
}

/// Writes the model in MPS interchange form: ROWS/COLUMNS/RHS/BOUNDS sections
/// with binary variables inside INTORG/INTEND markers. Values are written at
/// full precision, so wide numbers may overflow the classic 12-character
/// field; the section layout follows the fixed template and whitespace-based
/// readers (including [`parse_mps`]) accept it unchanged.
pub fn write_mps(model: &MilpModel) -> Result<String, MpsError> {
    let mut names = NameTable::new();
    let obj_row = "OBJ";
    names.used.insert(obj_row.into(), "<objective>".into());

    let mut row_names = Vec::with_capacity(model.num_constraints());
    for c in model.constraints() {
        row_names.push(names.shorten(&c.name)?);
    }
    let mut col_names = Vec::with_capacity(model.num_vars());
    for v in model.vars() {
        col_names.push(names.shorten(&v.name)?);
    }

    let mut s = String::new();
    let _ = writeln!(s, "NAME          BOWSER");
    let _ = writeln!(s, "ROWS");
    let _ = writeln!(s, " N  {}", obj_row);
    for (c, rn) in model.constraints().iter().zip(&row_names) {
        let code = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(s, " {}  {}", code, rn);
    }

    // transpose: entries per column, objective first
    let mut col_entries: Vec<Vec<(String, f64)>> = vec![Vec::new(); model.num_vars()];
    for &(v, c) in model.objective() {
        col_entries[v.index()].push((obj_row.to_string(), c));
    }
    for (ci, con) in model.constraints().iter().enumerate() {
        for &(v, a) in &con.terms {
            col_entries[v.index()].push((row_names[ci].clone(), a));
        }
    }

    let _ = writeln!(s, "COLUMNS");
    let mut in_int = false;
    for (j, var) in model.vars().iter().enumerate() {
        let want_int = var.kind == VarKind::Binary;
        if want_int != in_int {
            let marker = if want_int { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(s, "    MARKER                 'MARKER'                 {}", marker);
            in_int = want_int;
        }
        if col_entries[j].is_empty() {
            // keep every variable present in the file
            let _ = writeln!(s, "    {:<8}  {:<8}  {}", col_names[j], obj_row, 0);
            continue;
        }
        for (row, coef) in &col_entries[j] {
            let _ = writeln!(s, "    {:<8}  {:<8}  {}", col_names[j], row, num(*coef));
        }
    }
    if in_int {
        let _ = writeln!(s, "    MARKER                 'MARKER'                 'INTEND'");
    }

    let _ = writeln!(s, "RHS");
    for (c, rn) in model.constraints().iter().zip(&row_names) {
        if c.rhs != 0.0 {
            let _ = writeln!(s, "    {:<8}  {:<8}  {}", "RHS", rn, num(c.rhs));
        }
    }

    let _ = writeln!(s, "BOUNDS");
    for (j, var) in model.vars().iter().enumerate() {
        let name = &col_names[j];
        if var.kind == VarKind::Binary && var.lb == 0.0 && var.ub == 1.0 {
            let _ = writeln!(s, " BV {:<8}  {:<8}", "BND", name);
            continue;
        }
        if var.lb == var.ub {
            let _ = writeln!(s, " FX {:<8}  {:<8}  {}", "BND", name, num(var.lb));
            continue;
        }
        if var.lb.is_infinite() {
            let _ = writeln!(s, " MI {:<8}  {:<8}", "BND", name);
        } else if var.lb != 0.0 {
            let _ = writeln!(s, " LO {:<8}  {:<8}  {}", "BND", name, num(var.lb));
        }
        if var.ub.is_finite() {
            let _ = writeln!(s, " UP {:<8}  {:<8}  {}", "BND", name, num(var.ub));
        }
    }
    let _ = writeln!(s, "ENDATA");
    Ok(s)
}

/// Parses the subset of MPS this crate writes (plus common variants):
/// N/L/G/E rows, COLUMNS with INTORG/INTEND markers, RHS, and
/// UP/LO/FX/BV/MI/PL bounds. Returns an equivalent [`MilpModel`].
pub fn parse_mps(text: &str) -> Result<MilpModel, MpsError> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Done,
    }
    let perr = |line: usize, msg: &str| MpsError::Parse { line, msg: msg.into() };

    let mut section = Section::None;
    let mut obj_row: Option<String> = None;
    let mut row_sense: HashMap<String, Sense> = HashMap::new();
    let mut row_order: Vec<String> = Vec::new();
    let mut col_order: Vec<String> = Vec::new();
    let mut col_kind: HashMap<String, VarKind> = HashMap::new();
    let mut entries: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut rhs: HashMap<String, f64> = HashMap::new();
    let mut bounds: HashMap<String, (Option<f64>, Option<f64>, bool)> = HashMap::new();
    let mut in_int = false;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if raw.starts_with('*') || raw.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') {
            match toks[0] {
                "NAME" => continue,
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "RANGES" => return Err(perr(lineno, "RANGES section not supported")),
                "BOUNDS" => section = Section::Bounds,
                "ENDATA" => section = Section::Done,
                other => return Err(perr(lineno, &format!("unknown section `{other}`"))),
            }
            continue;
        }
        match section {
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(perr(lineno, "expected `SENSE NAME`"));
                }
                match toks[0] {
                    "N" => {
                        if obj_row.is_none() {
                            obj_row = Some(toks[1].to_string());
                        }
                    }
                    "L" | "G" | "E" => {
                        let sense = match toks[0] {
                            "L" => Sense::Le,
                            "G" => Sense::Ge,
                            _ => Sense::Eq,
                        };
                        row_sense.insert(toks[1].to_string(), sense);
                        row_order.push(toks[1].to_string());
                    }
                    other => return Err(perr(lineno, &format!("bad row sense `{other}`"))),
                }
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1] == "'MARKER'" {
                    match *toks.last().unwrap() {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        other => return Err(perr(lineno, &format!("bad marker `{other}`"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(perr(lineno, "expected `COL ROW VAL [ROW VAL]`"));
                }
                let col = toks[0].to_string();
                if !entries.contains_key(&col) {
                    col_order.push(col.clone());
                    col_kind.insert(
                        col.clone(),
                        if in_int { VarKind::Binary } else { VarKind::Continuous },
                    );
                    entries.insert(col.clone(), Vec::new());
                }
                let mut i = 1;
                while i + 1 < toks.len() + 1 && i + 1 <= toks.len() {
                    let row = toks[i].to_string();
                    let val: f64 = toks[i + 1]
                        .parse()
                        .map_err(|_| perr(lineno, &format!("bad value `{}`", toks[i + 1])))?;
                    entries.get_mut(&col).unwrap().push((row, val));
                    i += 2;
                }
            }
            Section::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(perr(lineno, "expected `RHSNAME ROW VAL [ROW VAL]`"));
                }
                let mut i = 1;
                while i + 1 <= toks.len() - 1 {
                    let row = toks[i].to_string();
                    let val: f64 = toks[i + 1]
                        .parse()
                        .map_err(|_| perr(lineno, &format!("bad value `{}`", toks[i + 1])))?;
                    rhs.insert(row, val);
                    i += 2;
                }
            }
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(perr(lineno, "expected `TYPE BNDNAME COL [VAL]`"));
                }
                let col = toks[2].to_string();
                let entry = bounds.entry(col).or_insert((None, None, false));
                let val = || -> Result<f64, MpsError> {
                    toks.get(3)
                        .ok_or_else(|| perr(lineno, "missing bound value"))?
                        .parse()
                        .map_err(|_| perr(lineno, "bad bound value"))
                };
                match toks[0] {
                    "UP" => entry.1 = Some(val()?),
                    "LO" => entry.0 = Some(val()?),
                    "FX" => {
                        let v = val()?;
                        entry.0 = Some(v);
                        entry.1 = Some(v);
                    }
                    "BV" => entry.2 = true,
                    "MI" => entry.0 = Some(f64::NEG_INFINITY),
                    "PL" => entry.1 = Some(f64::INFINITY),
                    other => return Err(perr(lineno, &format!("bound type `{other}` not supported"))),
                }
            }
            Section::None | Section::Done => {
                return Err(perr(lineno, "data outside any section"));
            }
        }
    }

    let obj_row = obj_row.ok_or(MpsError::Parse { line: 0, msg: "no objective row".into() })?;
    let mut model = MilpModel::new();
    let mut ids = HashMap::new();
    for col in &col_order {
        let (blo, bhi, bv) = bounds.get(col).copied().unwrap_or((None, None, false));
        let mut kind = *col_kind.get(col).unwrap();
        if bv {
            kind = VarKind::Binary;
        }
        let (lb, ub) = match kind {
            VarKind::Binary => (blo.unwrap_or(0.0).max(0.0), bhi.unwrap_or(1.0).min(1.0)),
            VarKind::Continuous => (blo.unwrap_or(0.0), bhi.unwrap_or(f64::INFINITY)),
        };
        let id = model.add_var(col.clone(), lb, ub, kind)?;
        ids.insert(col.clone(), id);
    }
    let mut by_row: HashMap<String, Vec<(super::model::VarId, f64)>> = HashMap::new();
    for col in &col_order {
        for (row, val) in &entries[col] {
            if row == &obj_row {
                model.add_objective_term(ids[col], *val);
            } else {
                by_row.entry(row.clone()).or_default().push((ids[col], *val));
            }
        }
    }
    for row in &row_order {
        let sense = row_sense[row];
        let terms = by_row.remove(row).unwrap_or_default();
        let b = rhs.get(row).copied().unwrap_or(0.0);
        model.add_constraint(row.clone(), terms, sense, b)?;
    }
    Ok(model)
}

/// Plain-text solution dump: one `name value` line per variable.
pub fn write_solution_dump(model: &MilpModel, assignment: &[f64], objective: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# objective {}", objective);
    for (j, var) in model.vars().iter().enumerate() {
        let _ = writeln!(s, "{} {}", var.name, assignment[j]);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::{MilpModel, Sense, VarKind};
    use crate::milp::solve::{solve, SolveLimits};

    fn toy() -> MilpModel {
        let mut m = MilpModel::new();
        let vars: Vec<_> = (0..3)
            .map(|i| {
                m.add_var(format!("a_very_long_binary_name_{i}"), 0.0, 1.0, VarKind::Binary)
                    .unwrap()
            })
            .collect();
        let y = m.add_var("y", 0.5, 4.5, VarKind::Continuous).unwrap();
        for (i, &v) in vars.iter().enumerate() {
            m.add_objective_term(v, -(8.0 - i as f64));
        }
        m.add_objective_term(y, 1.0);
        m.add_constraint(
            "knapsack_capacity_row",
            vec![(vars[0], 5.0), (vars[1], 7.0), (vars[2], 4.0), (y, 1.0)],
            Sense::Le,
            14.0,
        )
        .unwrap();
        m.add_constraint("anchor", vec![(y, 1.0), (vars[0], -1.0)], Sense::Ge, 0.5).unwrap();
        m
    }

    #[test]
    fn export_reparse_solve_reproduces_the_optimum() {
        let m = toy();
        let direct = solve(&m, &SolveLimits::default()).unwrap();
        let text = write_mps(&m).unwrap();
        let back = parse_mps(&text).unwrap();
        let reparsed = solve(&back, &SolveLimits::default()).unwrap();
        assert_eq!(direct.status, reparsed.status);
        assert!((direct.objective - reparsed.objective).abs() < 1e-9);
    }

    #[test]
    fn empty_model_is_a_valid_document() {
        let m = MilpModel::new();
        let text = write_mps(&m).unwrap();
        let back = parse_mps(&text).unwrap();
        assert_eq!(back.num_vars(), 0);
        let sol = solve(&back, &SolveLimits::default()).unwrap();
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn long_names_are_shortened_deterministically() {
        let m = toy();
        let a = write_mps(&m).unwrap();
        let b = write_mps(&m).unwrap();
        assert_eq!(a, b);
        // rows are shortened first, so the row takes ~0 and columns follow
        assert!(a.contains("knap~0"));
        assert!(a.contains("a_ve~1"));
        assert!(!a.contains("a_very_long_binary_name_0"));
    }

    #[test]
    fn short_name_colliding_with_a_generated_one_is_an_error() {
        let mut m = MilpModel::new();
        m.add_var("a_very_long_binary_name_0", 0.0, 1.0, VarKind::Binary).unwrap();
        m.add_var("a_ve~0", 0.0, 1.0, VarKind::Continuous).unwrap();
        assert!(matches!(write_mps(&m), Err(MpsError::NameCollision { .. })));
    }

    #[test]
    fn binaries_survive_the_round_trip() {
        let m = toy();
        let back = parse_mps(&write_mps(&m).unwrap()).unwrap();
        let n_bin = back.vars().iter().filter(|v| v.kind == VarKind::Binary).count();
        assert_eq!(n_bin, 3);
    }
}
