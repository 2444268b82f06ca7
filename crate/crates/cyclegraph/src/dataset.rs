//! Spectral dataset: truncated spectra, quasiperiodic signs, and sampled
//! Paley-Wiener remainders of the characteristic functions, with a
//! line-oriented text format (`cyclegraph-spectral v1`).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::GraphGeometry;

pub const DATASET_HEADER: &str = "cyclegraph-spectral v1";

/// Upper bound used when validating stored eigenvalues against the crude
/// spectral lower bound; documented in the format description.
pub const VALIDATION_Q_BOUND: f64 = 16.0;

/// Spectral data of one problem instance.
///
/// `kappa_main[i]` samples `rho^{m+1} (Delta - Delta^0)(rho^2)` and
/// `kappa_k[k-1][i]` samples `rho^m (Delta_k - Delta_k^0)(rho^2)` on the
/// uniform grid `rho_i = -rho_max + 2 rho_max i/(n-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDataset {
    pub geometry: GraphGeometry,
    /// Eigenvalues of the main problem, ascending.
    pub lambda_main: Vec<f64>,
    /// Eigenvalues of the modified problems (Neumann condition at vertex k).
    pub lambda_k: Vec<Vec<f64>>,
    /// Signs of H at the loop Dirichlet eigenvalues; entries in {-1, 0, +1}.
    pub sigma: Vec<i8>,
    /// Truncation radius of the remainder grid.
    pub rho_max: f64,
    pub kappa_main: Vec<f64>,
    pub kappa_k: Vec<Vec<f64>>,
}

impl SpectralDataset {
    /// The uniform remainder grid in `rho`.
    pub fn rho_grid(&self) -> Vec<f64> {
        let n = self.kappa_main.len();
        let h = 2.0 * self.rho_max / (n - 1) as f64;
        (0..n).map(|i| -self.rho_max + i as f64 * h).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_k.len() != self.geometry.m {
            return Err(Error::Validation(format!(
                "expected {} pendant spectra, got {}",
                self.geometry.m,
                self.lambda_k.len()
            )));
        }
        if self.kappa_k.len() != self.geometry.m {
            return Err(Error::Validation(format!(
                "expected {} pendant remainder sections, got {}",
                self.geometry.m,
                self.kappa_k.len()
            )));
        }
        let bound = self.geometry.spectral_lower_bound(VALIDATION_Q_BOUND);
        let check_sorted = |name: &str, v: &[f64]| -> Result<()> {
            if v.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Validation(format!("{name} is not sorted ascending")));
            }
            if v.first().is_some_and(|&x| x < bound) {
                return Err(Error::Validation(format!(
                    "{name} starts below the documented lower bound {bound:.3e}"
                )));
            }
            Ok(())
        };
        check_sorted("lambda_main", &self.lambda_main)?;
        for (k, v) in self.lambda_k.iter().enumerate() {
            check_sorted(&format!("lambda_{}", k + 1), v)?;
        }
        if self.sigma.iter().any(|s| ![-1, 0, 1].contains(s)) {
            return Err(Error::Validation("sigma out of range".into()));
        }
        if !(self.rho_max > 0.0) {
            return Err(Error::Validation("rho_max must be positive".into()));
        }
        if self.kappa_main.len() < 2 {
            return Err(Error::Validation("remainder grid needs at least 2 samples".into()));
        }
        for (k, v) in self.kappa_k.iter().enumerate() {
            if v.len() != self.kappa_main.len() {
                return Err(Error::Validation(format!(
                    "kappa_{} has {} samples, kappa_main has {}",
                    k + 1,
                    v.len(),
                    self.kappa_main.len()
                )));
            }
        }
        Ok(())
    }

    /// Serialize to the line-oriented text format; numbers keep full f64
    /// precision (17 significant digits), so save/load round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{DATASET_HEADER}");
        let _ = writeln!(s, "GEOMETRY");
        let _ = writeln!(s, "m {}", self.geometry.m);
        let _ = writeln!(s, "a {}", fmt_f64(self.geometry.a));
        let _ = writeln!(s, "T {}", self.geometry.t.len());
        for t in &self.geometry.t {
            let _ = writeln!(s, "{}", fmt_f64(*t));
        }
        let _ = writeln!(s, "EIGENVALUES");
        write_array(&mut s, "lambda_main", &self.lambda_main);
        for (k, v) in self.lambda_k.iter().enumerate() {
            write_array(&mut s, &format!("lambda_{}", k + 1), v);
        }
        let _ = writeln!(s, "SIGMA");
        let _ = writeln!(s, "sigma {}", self.sigma.len());
        for v in &self.sigma {
            let _ = writeln!(s, "{v}");
        }
        let _ = writeln!(s, "REMAINDERS");
        let _ = writeln!(s, "rho_max {}", fmt_f64(self.rho_max));
        write_array(&mut s, "kappa_main", &self.kappa_main);
        for (k, v) in self.kappa_k.iter().enumerate() {
            write_array(&mut s, &format!("kappa_{}", k + 1), v);
        }
        let _ = writeln!(s, "END");
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut p = Parser::new(text);
        p.expect_line(DATASET_HEADER)?;
        p.expect_line("GEOMETRY")?;
        let m = p.key_usize("m")?;
        let a = p.key_f64("a")?;
        let nt = p.key_usize("T")?;
        let mut t = Vec::with_capacity(nt);
        for _ in 0..nt {
            t.push(p.bare_f64("T entry")?);
        }
        let geometry = GraphGeometry::new(m, t, a)
            .map_err(|e| p.err_here("GEOMETRY", &e.to_string()))?;
        p.expect_line("EIGENVALUES")?;
        let lambda_main = p.array_f64("lambda_main")?;
        let mut lambda_k = Vec::with_capacity(m);
        for k in 1..=m {
            lambda_k.push(p.array_f64(&format!("lambda_{k}"))?);
        }
        p.expect_line("SIGMA")?;
        let n_sigma = p.key_usize("sigma")?;
        let mut sigma = Vec::with_capacity(n_sigma);
        for _ in 0..n_sigma {
            let line_no = p.line_no + 1;
            let v: i64 = p
                .bare_token("sigma entry")?
                .parse()
                .map_err(|_| Error::Parse {
                    line: line_no,
                    field: "sigma entry".into(),
                    msg: "not an integer".into(),
                })?;
            if ![-1, 0, 1].contains(&v) {
                return Err(Error::Parse {
                    line: line_no,
                    field: "sigma entry".into(),
                    msg: "sigma out of range".into(),
                });
            }
            sigma.push(v as i8);
        }
        p.expect_line("REMAINDERS")?;
        let rho_max = p.key_f64("rho_max")?;
        let kappa_main = p.array_f64("kappa_main")?;
        let mut kappa_k = Vec::with_capacity(m);
        for k in 1..=m {
            kappa_k.push(p.array_f64(&format!("kappa_{k}"))?);
        }
        p.expect_line("END")?;
        let ds = SpectralDataset { geometry, lambda_main, lambda_k, sigma, rho_max, kappa_main, kappa_k };
        ds.validate()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

/// Format an f64 with 17 significant digits (lossless round-trip).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_array(s: &mut String, name: &str, v: &[f64]) {
    let _ = writeln!(s, "{name} {}", v.len());
    for x in v {
        let _ = writeln!(s, "{}", fmt_f64(*x));
    }
}

struct Parser<'a> {
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Parser { lines: text.lines(), line_no: 0 }
    }

    fn next_line(&mut self, field: &str) -> Result<&'a str> {
        loop {
            let line = self.lines.next().ok_or_else(|| Error::Parse {
                line: self.line_no + 1,
                field: field.into(),
                msg: "unexpected end of file".into(),
            })?;
            self.line_no += 1;
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Ok(trimmed);
            }
        }
    }

    fn err_here(&self, field: &str, msg: &str) -> Error {
        Error::Parse { line: self.line_no, field: field.into(), msg: msg.into() }
    }

    fn expect_line(&mut self, expected: &str) -> Result<()> {
        let got = self.next_line(expected)?;
        if got != expected {
            return Err(self.err_here(expected, &format!("expected `{expected}`, got `{got}`")));
        }
        Ok(())
    }

    fn key_token(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next_line(key)?;
        let mut it = line.split_whitespace();
        let k = it.next().unwrap_or("");
        if k != key {
            return Err(self.err_here(key, &format!("expected key `{key}`, got `{k}`")));
        }
        it.next().ok_or_else(|| self.err_here(key, "missing value"))
    }

    fn key_usize(&mut self, key: &str) -> Result<usize> {
        let tok = self.key_token(key)?;
        tok.parse().map_err(|_| self.err_here(key, "not a nonnegative integer"))
    }

    fn key_f64(&mut self, key: &str) -> Result<f64> {
        let tok = self.key_token(key)?;
        parse_f64(tok).ok_or_else(|| self.err_here(key, "not a number"))
    }

    fn bare_token(&mut self, field: &str) -> Result<&'a str> {
        self.next_line(field)
    }

    fn bare_f64(&mut self, field: &str) -> Result<f64> {
        let tok = self.next_line(field)?;
        parse_f64(tok).ok_or_else(|| self.err_here(field, "not a number"))
    }

    fn array_f64(&mut self, name: &str) -> Result<Vec<f64>> {
        let n = self.key_usize(name)?;
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let tok = self.next_line(&format!("{name}[{i}]"))?;
            let x = parse_f64(tok)
                .ok_or_else(|| self.err_here(&format!("{name}[{i}]"), "not a number"))?;
            v.push(x);
        }
        Ok(v)
    }
}

fn parse_f64(tok: &str) -> Option<f64> {
    let v: f64 = tok.parse().ok()?;
    v.is_finite().then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn demo_dataset() -> SpectralDataset {
        SpectralDataset {
            geometry: GraphGeometry::new(2, vec![1.0, 1.0, 1.0], 2.0).unwrap(),
            lambda_main: vec![-0.5, 1.0, 2.5],
            lambda_k: vec![vec![0.25, 3.75], vec![0.5, 4.0]],
            sigma: vec![-1, 1, -1, 0],
            rho_max: 10.0,
            kappa_main: vec![0.0, 0.1, -0.2, 0.05, 0.0],
            kappa_k: vec![vec![0.0; 5], vec![0.1; 5]],
        }
    }

    #[test]
    fn save_load_roundtrip_exact() {
        let ds = demo_dataset();
        let text = ds.to_text();
        let back = SpectralDataset::from_text(&text).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn sigma_out_of_range_is_rejected() {
        let ds = demo_dataset();
        let text = ds.to_text().replace("\n-1\n", "\n2\n");
        let err = SpectralDataset::from_text(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sigma out of range"), "{msg}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn unsorted_eigenvalues_are_rejected() {
        let mut ds = demo_dataset();
        ds.lambda_main = vec![2.0, 1.0, 3.0];
        let text = ds.to_text();
        let err = SpectralDataset::from_text(&text).unwrap_err();
        assert!(err.to_string().contains("not sorted"), "{err}");
    }

    #[test]
    fn truncated_file_names_field_and_line() {
        let ds = demo_dataset();
        let text = ds.to_text();
        let cut: String = text.lines().take(7).collect::<Vec<_>>().join("\n");
        let err = SpectralDataset::from_text(&cut).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line >= 7),
            other => panic!("expected parse error, got {other}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn roundtrip_arbitrary_values(
            a in prop::collection::vec(-1e6f64..1e6, 2..40),
            seed in 0u64..u64::MAX,
        ) {
            let mut lam = a.clone();
            lam.sort_by(f64::total_cmp);
            // keep above the documented validation bound
            let lam: Vec<f64> = lam.into_iter().map(|x| x.abs()).collect();
            let mut lam = lam; lam.sort_by(f64::total_cmp);
            let kappa: Vec<f64> = (0..9).map(|i| ((seed as f64) * 1e-3 + i as f64).sin()).collect();
            let ds = SpectralDataset {
                geometry: GraphGeometry::new(1, vec![1.0, 2.0], -2.0).unwrap(),
                lambda_main: lam.clone(),
                lambda_k: vec![lam],
                sigma: vec![1, -1, 0],
                rho_max: 30.0,
                kappa_main: kappa.clone(),
                kappa_k: vec![kappa],
            };
            let back = SpectralDataset::from_text(&ds.to_text()).unwrap();
            prop_assert_eq!(ds, back);
        }
    }
}
