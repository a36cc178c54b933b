//! Plot-ready CSV tables.

use std::io::Write;

/// Significant digits written for every number.
pub const SIG_DIGITS: i32 = 9;

/// Plain decimal notation with [`SIG_DIGITS`] significant digits.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Num(v) => Some(*v),
                Cell::Text(_) => None,
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for row in &self.rows {
            out.write_record(row.iter().map(Cell::render))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn formats() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(104.4), "104.4");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_num(-12345.678901), "-12345.6789");
        assert_eq!(fmt_num(2.5e-7), "0.00000025");
        assert_eq!(fmt_num(123456789012.0), "123456789012");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["name", "value"]);
        t.push(vec!["a".into(), 0.5.into()]);
        t.push(vec!["b".into(), 3usize.into()]);
        assert_eq!(t.to_csv_string(), "name,value\na,0.5\nb,3\n");
        assert_eq!(t.column("value"), Some(vec![0.5, 3.0]));
        assert_eq!(t.column("name"), None);
    }

    proptest! {
        #[test]
        fn nine_digit_round_trip(x in -1e6f64..1e6) {
            let back: f64 = fmt_num(x).parse().unwrap();
            let tol = x.abs().max(1e-300) * 1e-8;
            prop_assert!((back - x).abs() <= tol, "{} -> {}", x, back);
        }
    }
}
