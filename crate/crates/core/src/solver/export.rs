//! CPLEX-LP and free-MPS writers.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ObjectiveSense, OptModel, RowSense, VarId, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExportFormat {
    Lp,
    Mps,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Lp => "lp",
            ExportFormat::Mps => "mps",
        }
    }
}

/// Renders `model` as text in the requested format.
pub fn export(model: &OptModel, format: ExportFormat) -> String {
    match format {
        ExportFormat::Lp => to_lp(model),
        ExportFormat::Mps => to_mps(model),
    }
}

pub fn write_model(model: &OptModel, format: ExportFormat, path: &Path) -> Result<()> {
    model.validate()?;
    std::fs::write(path, export(model, format)).map_err(Error::from)
}

fn num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn push_terms(out: &mut String, model: &OptModel, terms: &[(VarId, f64)], indent: &str) {
    for (i, (v, c)) in terms.iter().enumerate() {
        if i > 0 && i % 8 == 0 {
            out.push('\n');
            out.push_str(indent);
        }
        let name = &model.variables[v.0].name;
        if *c < 0.0 {
            let _ = write!(out, " - {} {}", num(-c), name);
        } else {
            let _ = write!(out, " + {} {}", num(*c), name);
        }
    }
}

fn to_lp(model: &OptModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str(match model.objective.sense {
        ObjectiveSense::Minimize => "Minimize\n",
        ObjectiveSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    if model.objective.terms.is_empty() {
        if let Some(v) = model.variables.first() {
            let _ = write!(out, " 0 {}", v.name);
        }
    } else {
        push_terms(&mut out, model, &model.objective.terms, "     ");
    }
    out.push('\n');

    out.push_str("Subject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", c.name);
        push_terms(&mut out, model, &c.terms, "   ");
        if c.is_bilinear() {
            out.push_str(" + [");
            for (i, (a, b, coef)) in c.bilinear.iter().enumerate() {
                let sign = if *coef < 0.0 { "-" } else if i == 0 { "" } else { "+" };
                let _ = write!(
                    out,
                    " {sign} {} {} * {}",
                    num(coef.abs()),
                    model.variables[a.0].name,
                    model.variables[b.0].name
                );
            }
            out.push_str(" ]");
        }
        let op = match c.sense {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", num(c.rhs));
    }

    out.push_str("Bounds\n");
    for v in model.variables.iter().filter(|v| v.kind == VarKind::Continuous) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {} free", v.name);
            }
            (true, false) => {
                let _ = writeln!(out, " {} >= {}", v.name, num(v.lower));
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {} <= {}", v.name, num(v.upper));
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {} <= {}", num(v.lower), v.name, num(v.upper));
            }
        }
    }
    let binaries: Vec<_> = model
        .variables
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let names: Vec<_> = chunk.iter().map(|v| v.name.as_str()).collect();
            let _ = writeln!(out, " {}", names.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

fn to_mps(model: &OptModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", if model.name.is_empty() { "model" } else { &model.name });
    if model.objective.sense == ObjectiveSense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n N obj\n");
    for c in &model.constraints {
        let t = match c.sense {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {t} {}", c.name);
    }

    // Column-major entries.
    let mut columns: Vec<Vec<(&str, f64)>> = vec![Vec::new(); model.variables.len()];
    for (v, c) in &model.objective.terms {
        columns[v.0].push(("obj", *c));
    }
    for c in &model.constraints {
        for (v, coef) in &c.terms {
            columns[v.0].push((c.name.as_str(), *coef));
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    for (i, v) in model.variables.iter().enumerate() {
        let binary = v.kind == VarKind::Binary;
        if binary != in_marker {
            let tag = if binary { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER 'MARKER' {tag}");
            in_marker = binary;
        }
        if columns[i].is_empty() {
            let _ = writeln!(out, "    {} obj 0", v.name);
        }
        for (row, coef) in &columns[i] {
            let _ = writeln!(out, "    {} {} {}", v.name, row, num(*coef));
        }
    }
    if in_marker {
        out.push_str("    MARKER 'MARKER' 'INTEND'\n");
    }

    out.push_str("RHS\n");
    for c in model.constraints.iter().filter(|c| c.rhs != 0.0) {
        let _ = writeln!(out, "    RHS {} {}", c.name, num(c.rhs));
    }

    out.push_str("BOUNDS\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary {
            let _ = writeln!(out, " BV BND {}", v.name);
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " FR BND {}", v.name);
            }
            (false, true) => {
                let _ = writeln!(out, " MI BND {}", v.name);
                let _ = writeln!(out, " UP BND {} {}", v.name, num(v.upper));
            }
            (true, up) => {
                if v.lower == v.upper {
                    let _ = writeln!(out, " FX BND {} {}", v.name, num(v.lower));
                    continue;
                }
                if v.lower != 0.0 {
                    let _ = writeln!(out, " LO BND {} {}", v.name, num(v.lower));
                }
                if up {
                    let _ = writeln!(out, " UP BND {} {}", v.name, num(v.upper));
                }
            }
        }
    }

    for c in model.constraints.iter().filter(|c| c.is_bilinear()) {
        let _ = writeln!(out, "QCMATRIX {}", c.name);
        for (a, b, coef) in &c.bilinear {
            let (na, nb) = (&model.variables[a.0].name, &model.variables[b.0].name);
            if a == b {
                let _ = writeln!(out, "    {na} {nb} {}", num(*coef));
            } else {
                let _ = writeln!(out, "    {na} {nb} {}", num(coef / 2.0));
                let _ = writeln!(out, "    {nb} {na} {}", num(coef / 2.0));
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}
