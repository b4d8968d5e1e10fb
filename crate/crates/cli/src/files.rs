//! Text formats: JSON Choi files, optional setup files and counts tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cptp::ensembles::SampleSize;
use cptp::tensor::{c64, CMatrix};
use cptp::{ChoiMatrix, CountsTable, TomographySetup};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::Failure;

pub const COUNTS_VERSION: &str = "# cptp counts v1";

/// 17 significant digits, enough to round-trip any `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_rows(out: &mut String, indent: &str, m: &DMatrix<f64>) {
    out.push('[');
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| num(m[(i, j)])).collect();
        let sep = if i + 1 < m.nrows() { "," } else { "" };
        let _ = write!(out, "\n{indent}  [{}]{sep}", row.join(", "));
    }
    let _ = write!(out, "\n{indent}]");
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialise")
}

/// Canonical text of a Choi file. Metadata keys are sorted.
pub fn choi_to_string(m: &CMatrix, d: usize, metadata: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\n  \"d\": {d},\n  \"re\": ");
    write_rows(&mut out, "  ", &m.map(|z| z.re));
    out.push_str(",\n  \"im\": ");
    write_rows(&mut out, "  ", &m.map(|z| z.im));
    out.push_str(",\n  \"metadata\": {");
    let entries: Vec<String> = metadata
        .iter()
        .map(|(k, v)| format!("\n    {}: {}", json_string(k), json_string(v)))
        .collect();
    out.push_str(&entries.join(","));
    if !entries.is_empty() {
        out.push_str("\n  ");
    }
    out.push_str("}\n}\n");
    out
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChoi {
    d: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct ChoiFile {
    pub d: usize,
    pub matrix: CMatrix,
    pub metadata: BTreeMap<String, String>,
}

fn to_matrix(re: &[Vec<f64>], im: &[Vec<f64>], n: usize, what: &str) -> Result<CMatrix, Failure> {
    let shaped = |rows: &[Vec<f64>]| rows.len() == n && rows.iter().all(|r| r.len() == n);
    if !shaped(re) || !shaped(im) {
        return Err(Failure::data(format!(
            "{what}: re and im must both be {n}x{n}"
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c64(re[i][j], im[i][j])))
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl ChoiFile {
    pub fn parse(text: &str, hermitian_tol: f64) -> Result<Self, Failure> {
        let raw: RawChoi = serde_json::from_str(text)
            .map_err(|e| Failure::data(format!("malformed Choi file: {e}")))?;
        if raw.d < 1 {
            return Err(Failure::data("Choi file: d must be positive"));
        }
        let matrix = to_matrix(&raw.re, &raw.im, raw.d * raw.d, "Choi file")?;
        let defect = hermiticity_defect(&matrix);
        if !(defect <= hermitian_tol) {
            return Err(Failure::data(format!(
                "Choi matrix is not Hermitian (defect {defect:.3e} > {hermitian_tol:.0e})"
            )));
        }
        Ok(Self {
            d: raw.d,
            matrix,
            metadata: raw.metadata,
        })
    }

    pub fn load(path: &Path, hermitian_tol: f64) -> Result<Self, Failure> {
        Self::parse(&read(path)?, hermitian_tol)
    }

    pub fn to_choi(&self) -> Result<ChoiMatrix, Failure> {
        let hermitian = (&self.matrix + self.matrix.adjoint()) * c64(0.5, 0.0);
        ChoiMatrix::new(self.d, hermitian).map_err(Failure::from)
    }
}

pub fn write_choi(
    path: &Path,
    choi: &ChoiMatrix,
    metadata: &BTreeMap<String, String>,
) -> Result<(), Failure> {
    write(path, &choi_to_string(choi.matrix(), choi.d(), metadata))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOperator {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSetup {
    d: usize,
    preparations: Vec<RawOperator>,
    povm: Vec<RawOperator>,
}

/// Setup file: `{"d": .., "preparations": [{"re", "im"}, ..], "povm": [..]}`.
pub fn load_setup(path: &Path) -> Result<TomographySetup, Failure> {
    let raw: RawSetup = serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::data(format!("malformed setup file: {e}")))?;
    let ops = |list: &[RawOperator], what: &str| -> Result<Vec<CMatrix>, Failure> {
        list.iter()
            .map(|o| to_matrix(&o.re, &o.im, raw.d, what))
            .collect()
    };
    let prep = ops(&raw.preparations, "preparation")?;
    let povm = ops(&raw.povm, "POVM element")?;
    TomographySetup::new(raw.d, prep, povm).map_err(Failure::from)
}

pub fn setup_to_string(setup: &TomographySetup) -> String {
    let op = |m: &CMatrix| {
        let mut s = String::from("{\"re\": ");
        write_rows(&mut s, "    ", &m.map(|z| z.re));
        s.push_str(", \"im\": ");
        write_rows(&mut s, "    ", &m.map(|z| z.im));
        s.push('}');
        s
    };
    let list = |ms: &[CMatrix]| ms.iter().map(op).collect::<Vec<_>>().join(",\n    ");
    format!(
        "{{\n  \"d\": {},\n  \"preparations\": [\n    {}\n  ],\n  \"povm\": [\n    {}\n  ]\n}}\n",
        setup.d(),
        list(setup.preparations()),
        list(setup.povm())
    )
}

/// Counts table together with its header. `values` holds the entries as
/// written (integer counts or exact frequencies) so files re-serialise
/// unchanged.
#[derive(Debug, Clone)]
pub struct CountsFile {
    pub d: usize,
    pub samples: SampleSize,
    pub seed: u64,
    values: DMatrix<f64>,
    pub table: CountsTable,
}

impl CountsFile {
    pub fn from_table(d: usize, samples: SampleSize, seed: u64, table: CountsTable) -> Self {
        let values = match samples {
            SampleSize::Finite(n) => table.frequencies().map(|f| (f * n as f64).round()),
            SampleSize::Infinite => table.frequencies().clone(),
        };
        Self {
            d,
            samples,
            seed,
            values,
            table,
        }
    }

    pub fn to_text(&self) -> String {
        let v = &self.values;
        let mut out = format!(
            "{COUNTS_VERSION}\nd {}\nn_prep {}\nn_povm {}\nN {}\nseed {}\ni,j,n_ij\n",
            self.d,
            v.nrows(),
            v.ncols(),
            self.samples,
            self.seed
        );
        for i in 0..v.nrows() {
            for j in 0..v.ncols() {
                let value = match self.samples {
                    SampleSize::Finite(_) => format!("{}", v[(i, j)] as u64),
                    SampleSize::Infinite => num(v[(i, j)]),
                };
                let _ = writeln!(out, "{i},{j},{value}");
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let bad =
            |line: usize, msg: &str| Failure::data(format!("counts file line {}: {msg}", line + 1));
        let mut header: BTreeMap<&str, &str> = BTreeMap::new();
        let mut rows = Vec::new();
        let mut in_body = false;
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !in_body {
                if line == "i,j,n_ij" {
                    in_body = true;
                    continue;
                }
                let (key, value) = line
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| bad(k, "expected `key value`"))?;
                header.insert(key, value.trim());
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(bad(k, "expected `i,j,n_ij`"));
            }
            let i: usize = fields[0].parse().map_err(|_| bad(k, "bad row index"))?;
            let j: usize = fields[1].parse().map_err(|_| bad(k, "bad column index"))?;
            let v: f64 = fields[2].parse().map_err(|_| bad(k, "bad count"))?;
            rows.push((k, i, j, v));
        }
        let field = |key: &str| {
            header
                .get(key)
                .copied()
                .ok_or_else(|| Failure::data(format!("counts file: missing `{key}`")))
        };
        let int = |key: &str| -> Result<usize, Failure> {
            field(key)?
                .parse()
                .map_err(|_| Failure::data(format!("counts file: bad `{key}`")))
        };
        let d = int("d")?;
        let (np, nm) = (int("n_prep")?, int("n_povm")?);
        let samples: SampleSize = field("N")?.parse().map_err(Failure::from)?;
        let seed: u64 = field("seed")?
            .parse()
            .map_err(|_| Failure::data("counts file: bad `seed`"))?;

        let mut values = DMatrix::from_element(np, nm, f64::NAN);
        for (k, i, j, v) in rows {
            if i >= np || j >= nm {
                return Err(bad(k, "index out of range"));
            }
            if !values[(i, j)].is_nan() {
                return Err(bad(k, "duplicate entry"));
            }
            if !(v >= 0.0) {
                return Err(bad(k, "counts must be non-negative"));
            }
            if let SampleSize::Finite(_) = samples {
                if v.fract() != 0.0 {
                    return Err(bad(k, "finite-sample counts must be integers"));
                }
            }
            values[(i, j)] = v;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Failure::data("counts file: missing entries"));
        }
        for i in 0..np {
            let total: f64 = values.row(i).sum();
            let (expected, tol) = match samples {
                SampleSize::Finite(n) => (n as f64, 1e-9 * n as f64),
                SampleSize::Infinite => (1.0, 1e-9),
            };
            if (total - expected).abs() > tol {
                return Err(Failure::data(format!(
                    "counts file: row {i} sums to {total}, expected {expected}"
                )));
            }
        }
        let table = CountsTable::from_frequencies(values.clone()).map_err(Failure::from)?;
        Ok(Self {
            d,
            samples,
            seed,
            values,
            table,
        })
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        Self::parse(&read(path)?)
    }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))
}

pub fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text)
        .map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}
