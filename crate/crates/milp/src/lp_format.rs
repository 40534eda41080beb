use std::io::{self, Write};

use crate::model::{MilpModel, Sense, VarKind};

fn fmt_term(out: &mut String, coef: f64, name: &str, first: bool) {
    if coef < 0.0 {
        out.push_str(if first { "- " } else { " - " });
    } else if !first {
        out.push_str(" + ");
    }
    out.push_str(&format!("{} {}", coef.abs(), name));
}

/// Writes `model` in CPLEX LP text format for cross-checking with external
/// solvers. Variable names are emitted as declared; the objective constant
/// is carried by a fixed variable `obj_constant`.
pub fn write_lp<W: Write>(model: &MilpModel, mut w: W) -> io::Result<()> {
    let vars = model.variables();
    writeln!(w, "\\ objective constant {}", model.objective_constant())?;
    writeln!(w, "Minimize")?;
    let mut line = String::from(" obj: ");
    let mut first = true;
    for (j, &c) in model.objective().iter().enumerate() {
        if c != 0.0 {
            fmt_term(&mut line, c, &vars[j].name, first);
            first = false;
        }
    }
    let constant = model.objective_constant();
    if constant != 0.0 {
        fmt_term(&mut line, constant, "obj_constant", first);
        first = false;
    }
    if first {
        line.push_str("0 obj_constant");
    }
    writeln!(w, "{line}")?;
    writeln!(w, "Subject To")?;
    for (i, c) in model.constraints().iter().enumerate() {
        let mut row = format!(" c{}_{}: ", i, c.name);
        if c.terms.is_empty() {
            row.push_str("0 obj_constant");
        }
        for (k, &(v, a)) in c.terms.iter().enumerate() {
            fmt_term(&mut row, a, &vars[v.0].name, k == 0);
        }
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        writeln!(w, "{row} {op} {}", c.rhs)?;
    }
    writeln!(w, "Bounds")?;
    for v in vars {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) if v.lower == v.upper => writeln!(w, " {} = {}", v.name, v.lower)?,
            (true, true) => writeln!(w, " {} <= {} <= {}", v.lower, v.name, v.upper)?,
            (true, false) => writeln!(w, " {} >= {}", v.name, v.lower)?,
            (false, true) => writeln!(w, " -inf <= {} <= {}", v.name, v.upper)?,
            (false, false) => writeln!(w, " {} free", v.name)?,
        }
    }
    writeln!(w, " obj_constant = 1")?;
    let bins: Vec<&str> = vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !bins.is_empty() {
        writeln!(w, "Binary")?;
        for chunk in bins.chunks(8) {
            writeln!(w, " {}", chunk.join(" "))?;
        }
    }
    writeln!(w, "End")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_all_sections() {
        let mut m = MilpModel::new();
        let x = m.add_continuous("x", 0.0, f64::INFINITY).unwrap();
        let b = m.add_binary("b").unwrap();
        m.add_constraint("link", &[(x, 1.0), (b, -10.0)], Sense::Le, 0.0)
            .unwrap();
        m.set_objective_coef(x, 2.0);
        m.set_objective_coef(b, 5.0);
        m.set_objective_constant(1.5);
        let mut buf = Vec::new();
        write_lp(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Minimize"));
        assert!(text.contains(" obj: 2 x + 5 b + 1.5 obj_constant"));
        assert!(text.contains("c0_link: 1 x - 10 b <= 0"));
        assert!(text.contains(" x >= 0"));
        assert!(text.contains("Binary\n b\n"));
        assert!(text.trim_end().ends_with("End"));
    }
}
