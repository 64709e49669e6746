//! Text formats shared by every writer: floats with 17 significant digits,
//! comma-separated rows with LF endings.

use std::fmt::Write as _;

/// Round-trippable float text (`{:.16e}`); non-finite values print as `nan`,
/// `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

/// In-memory CSV table with a mandatory header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    columns: usize,
    text: String,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { columns: header.len(), text }
    }

    pub fn row(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "csv row width");
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn table_layout() {
        let mut t = CsvTable::new(&["a", "b"]);
        t.row(&["1".into(), fmt_f64(0.5)]);
        assert_eq!(t.as_str(), "a,b\n1,5.0000000000000000e-1\n");
    }
}
