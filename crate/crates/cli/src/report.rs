//! CSV output. Floats use Rust's `Display`, the shortest decimal that
//! round-trips to the same `f64`.

pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Csv { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}

/// Empty field for a missing value.
pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5e-7, 0.30000000000000004] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(2.0), "2");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn rows_are_comma_joined() {
        let mut csv = Csv::new(&["a", "b"]);
        csv.row(&["1".into(), "x".into()]);
        assert_eq!(csv.as_str(), "a,b\n1,x\n");
    }
}
