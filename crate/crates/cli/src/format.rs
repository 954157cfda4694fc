use coremarket::dispatch::Coalition;
use coremarket::MarketInstance;

/// Money with one decimal; `-0.0` prints as `0.0`.
pub fn money(v: f64) -> String {
    fixed(v, 1)
}

pub fn quantity(v: f64) -> String {
    fixed(v, 2)
}

fn fixed(v: f64, places: usize) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.places$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// `{G1, G3}` using bidder ids.
pub fn coalition(inst: &MarketInstance, s: Coalition) -> String {
    let ids: Vec<&str> = s.members().map(|l| inst.bidders[l].id.as_str()).collect();
    format!("{{{}}}", ids.join(", "))
}

/// Aligned text table: leading text columns left-aligned, the rest
/// right-aligned.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    text_columns: usize,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
            text_columns: 1,
        }
    }

    pub fn text_columns(mut self, n: usize) -> Self {
        self.text_columns = n;
        self
    }

    pub fn row<S: Into<String>>(&mut self, cells: impl IntoIterator<Item = S>) {
        self.rows.push(cells.into_iter().map(Into::into).collect());
    }

    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let mut line = String::new();
            for (i, w) in width.iter().enumerate() {
                let cell = r.get(i).map(String::as_str).unwrap_or("");
                let pad = w - cell.chars().count();
                if i > 0 {
                    line.push_str("  ");
                }
                if i < self.text_columns {
                    line.push_str(cell);
                    line.push_str(&" ".repeat(pad));
                } else {
                    line.push_str(&" ".repeat(pad));
                    line.push_str(cell);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn money_rounding() {
        assert_eq!(money(48.3269), "48.3");
        assert_eq!(money(-34.845), "-34.8");
        assert_eq!(money(-1e-12), "0.0");
        assert_eq!(money(2.77), "2.8");
    }

    #[test]
    fn table_alignment() {
        let mut t = Table::new(["bidder", "mpcs"]);
        t.row(["G1", "12.5"]);
        t.row(["budget", "0.0"]);
        assert_eq!(t.render(), "bidder  mpcs\nG1      12.5\nbudget   0.0\n");
    }
}
