//! Aligned monospace grids for terminal output.

/// Renders a bordered grid; every row must have `headers.len()` cells.
pub fn render_grid(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let border = {
        let mut s = String::from("+");
        for w in &widths {
            s.push_str(&"-".repeat(w + 2));
            s.push('+');
        }
        s
    };
    let line = |cells: &[String]| {
        let mut s = String::from("|");
        for (cell, w) in cells.iter().zip(&widths) {
            let pad = w - cell.chars().count();
            s.push(' ');
            s.push_str(cell);
            s.push_str(&" ".repeat(pad + 1));
            s.push('|');
        }
        s
    };
    let mut out = vec![border.clone(), line(headers), border.clone()];
    for row in rows {
        out.push(line(row));
    }
    if !rows.is_empty() {
        out.push(border);
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aligns_columns() {
        let grid = render_grid(
            &["a".into(), "long".into()],
            &[vec!["xyz".into(), "1".into()]],
        );
        assert_eq!(
            grid,
            "+-----+------+\n| a   | long |\n+-----+------+\n| xyz | 1    |\n+-----+------+"
        );
    }
}
